//! Trained model, rating prediction, and the checkpoint format.
//!
//! Checkpoints are [`codec`](crate::codec) containers with magic
//! `BCMFMODL`, version 1:
//!
//! | tag    | payload                                                        |
//! |--------|----------------------------------------------------------------|
//! | `HYPR` | JSON of [`Hyperparams`]                                        |
//! | `KEYS` | user keys, item keys (string lists)                            |
//! | `FACT` | k (u64), U (f64 list, user-major), V (f64 list, item-major)    |
//! | `STAT` | global mean (f64), per-user training counts (u32 list), per-item mean flags (u8 each) and values (f64 list) |
//! | `LOG ` | JSON of [`TrainingLog`]                                        |
//! | `CNNU` | user CNN, present for BiConvMF / BiConvMF+                     |
//! | `CNNI` | item CNN, present for every model but PMF                      |

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{FactorizeError, Hyperparams, LatentFactors, SparseRatings, TrainingLog};
use crate::codec::{Container, ContainerWriter, SectionWriter};
use crate::textcnn::CnnParams;

pub const MODEL_MAGIC: &[u8; 8] = b"BCMFMODL";
pub const MODEL_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub hyper: Hyperparams,
    pub user_keys: Vec<String>,
    pub item_keys: Vec<String>,
    pub factors: LatentFactors,
    pub cnn_user: Option<CnnParams>,
    pub cnn_item: Option<CnnParams>,
    pub log: TrainingLog,
    /// Mean of all training ratings.
    pub global_mean: f64,
    /// Training ratings per user; zero marks a cold-start user.
    pub user_counts: Vec<u32>,
    /// Mean training rating per item, `None` for cold-start items.
    pub item_means: Vec<Option<f64>>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
}

fn index_of(keys: &[String]) -> HashMap<String, usize> {
    keys.iter()
        .enumerate()
        .map(|(i, k)| (k.clone(), i))
        .collect()
}

impl TrainedModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        hyper: Hyperparams,
        user_keys: Vec<String>,
        item_keys: Vec<String>,
        factors: LatentFactors,
        cnn_user: Option<CnnParams>,
        cnn_item: Option<CnnParams>,
        log: TrainingLog,
        train: &SparseRatings,
    ) -> Self {
        let user_counts = (0..train.n_users())
            .map(|i| train.user_row(i).len() as u32)
            .collect();
        let item_means = (0..train.n_items())
            .map(|j| {
                let col = train.item_column(j);
                (!col.is_empty())
                    .then(|| col.iter().map(|e| e.value).sum::<f64>() / col.len() as f64)
            })
            .collect();
        Self {
            user_index: index_of(&user_keys),
            item_index: index_of(&item_keys),
            hyper,
            user_keys,
            item_keys,
            factors,
            cnn_user,
            cnn_item,
            log,
            global_mean: train.mean().unwrap_or(0.0),
            user_counts,
            item_means,
        }
    }

    fn check_trained(&self) -> Result<(), FactorizeError> {
        if self.log.iterations.is_empty() {
            Err(FactorizeError::Untrained)
        } else {
            Ok(())
        }
    }

    /// Prediction by dense indices; `None` means the id was never seen.
    ///
    /// A user with training ratings and an item with training ratings get
    /// `u_iᵀ v_j`. Otherwise the item's training mean is used if the item
    /// is known, else the global training mean.
    pub fn predict_index(
        &self,
        user: Option<usize>,
        item: Option<usize>,
        clip: bool,
    ) -> Result<f64, FactorizeError> {
        self.check_trained()?;
        let user = user.filter(|&i| self.user_counts.get(i).is_some_and(|&c| c > 0));
        let item_mean = item.and_then(|j| self.item_means.get(j).copied().flatten());
        let raw = match (user, item_mean) {
            (Some(i), Some(_)) => self.factors.predict(i, item.unwrap()),
            (None, Some(mean)) => mean,
            (_, None) => self.global_mean,
        };
        Ok(if clip { raw.clamp(1.0, 5.0) } else { raw })
    }

    pub fn predict(
        &self,
        user_key: &str,
        item_key: &str,
        clip: bool,
    ) -> Result<f64, FactorizeError> {
        self.predict_index(
            self.user_index.get(user_key).copied(),
            self.item_index.get(item_key).copied(),
            clip,
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), FactorizeError> {
        let file = File::create(path)
            .map_err(|e| FactorizeError::Io(format!("{}: {e}", path.display())))?;
        self.write_to(BufWriter::new(file))
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<(), FactorizeError> {
        let mut w = ContainerWriter::new(out, MODEL_MAGIC, MODEL_VERSION)?;

        let mut s = SectionWriter::new();
        s.str(&serde_json::to_string(&self.hyper).expect("hyperparams serialize"));
        w.section(b"HYPR", s)?;

        let mut s = SectionWriter::new();
        s.strs(&self.user_keys).strs(&self.item_keys);
        w.section(b"KEYS", s)?;

        let mut s = SectionWriter::new();
        s.u64(self.factors.k as u64)
            .f64s(&self.factors.users)
            .f64s(&self.factors.items);
        w.section(b"FACT", s)?;

        let mut s = SectionWriter::new();
        s.f64(self.global_mean).u32s(&self.user_counts);
        s.u64(self.item_means.len() as u64);
        for m in &self.item_means {
            s.u8(m.is_some() as u8);
        }
        let values: Vec<f64> = self.item_means.iter().map(|m| m.unwrap_or(0.0)).collect();
        s.f64s(&values);
        w.section(b"STAT", s)?;

        let mut s = SectionWriter::new();
        s.str(&serde_json::to_string(&self.log).expect("log serializes"));
        w.section(b"LOG ", s)?;

        if let Some(c) = &self.cnn_user {
            let mut s = SectionWriter::new();
            c.encode(&mut s);
            w.section(b"CNNU", s)?;
        }
        if let Some(c) = &self.cnn_item {
            let mut s = SectionWriter::new();
            c.encode(&mut s);
            w.section(b"CNNI", s)?;
        }
        w.finish()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FactorizeError> {
        let file =
            File::open(path).map_err(|e| FactorizeError::Io(format!("{}: {e}", path.display())))?;
        Self::read_from(file)
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self, FactorizeError> {
        let c = Container::read(input, MODEL_MAGIC, MODEL_VERSION)?;

        let mut s = c.section(b"HYPR")?;
        let hyper: Hyperparams =
            serde_json::from_str(&s.str()?).map_err(|e| s.corrupt(e.to_string()))?;
        s.finish()?;

        let mut s = c.section(b"KEYS")?;
        let user_keys = s.strs()?;
        let item_keys = s.strs()?;
        s.finish()?;

        let mut s = c.section(b"FACT")?;
        let k = s.u64()? as usize;
        let users = s.f64s()?;
        let items = s.f64s()?;
        if k == 0 || users.len() != k * user_keys.len() || items.len() != k * item_keys.len() {
            return Err(s.corrupt("factor shapes do not match key counts").into());
        }
        s.finish()?;
        let factors = LatentFactors { k, users, items };

        let mut s = c.section(b"STAT")?;
        let global_mean = s.f64()?;
        let user_counts = s.u32s()?;
        let n = s.len(1)?;
        let flags = (0..n).map(|_| s.u8()).collect::<Result<Vec<_>, _>>()?;
        let values = s.f64s()?;
        if user_counts.len() != user_keys.len()
            || flags.len() != item_keys.len()
            || values.len() != flags.len()
        {
            return Err(s.corrupt("statistics do not match key counts").into());
        }
        s.finish()?;
        let item_means = flags
            .iter()
            .zip(values)
            .map(|(&f, v)| (f != 0).then_some(v))
            .collect();

        let mut s = c.section(b"LOG ")?;
        let log: TrainingLog =
            serde_json::from_str(&s.str()?).map_err(|e| s.corrupt(e.to_string()))?;
        s.finish()?;

        let read_cnn =
            |tag: &[u8; 4], expected: bool| -> Result<Option<CnnParams>, FactorizeError> {
                match (c.has(tag), expected) {
                    (true, true) => {
                        let mut s = c.section(tag)?;
                        let p = CnnParams::decode(&mut s)?;
                        s.finish()?;
                        Ok(Some(p))
                    }
                    (false, false) => Ok(None),
                    (present, _) => Err(FactorizeError::Config(format!(
                        "checkpoint for {} {} section {}",
                        hyper.model,
                        if present {
                            "has unexpected"
                        } else {
                            "is missing"
                        },
                        String::from_utf8_lossy(tag)
                    ))),
                }
            };
        let cnn_user = read_cnn(b"CNNU", hyper.model.has_user_cnn())?;
        let cnn_item = read_cnn(b"CNNI", hyper.model.has_item_cnn())?;

        Ok(Self {
            user_index: index_of(&user_keys),
            item_index: index_of(&item_keys),
            hyper,
            user_keys,
            item_keys,
            factors,
            cnn_user,
            cnn_item,
            log,
            global_mean,
            user_counts,
            item_means,
        })
    }
}
