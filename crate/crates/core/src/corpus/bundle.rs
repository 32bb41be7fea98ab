//! The ingested corpus: id maps, rating triplets with their train/test
//! assignment, the vocabulary, and tensorized review-set documents.
//!
//! On disk this is a [`codec`](crate::codec) container with magic
//! `BCMFCORP`, version 1, and sections:
//!
//! | tag    | payload                                                    |
//! |--------|------------------------------------------------------------|
//! | `CONF` | JSON of [`CorpusConfig`] and [`SplitSpec`]                 |
//! | `STAT` | users, items, ratings (u64), density (f64)                 |
//! | `KEYS` | user keys, item keys (string lists)                        |
//! | `RATE` | user indices, item indices (u32 lists), values (f64 list), test flags (u8 per triplet) |
//! | `VOCB` | tokens in index order (string list)                        |
//! | `UDOC` | max_len (u64), true lengths (u32 list), flat indices (u32 list) |
//! | `IDOC` | same layout as `UDOC`                                      |

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    build_review_sets, build_vocabulary, tensorize, CorpusError, DatasetStats, ReviewRecord,
    TokenDocument, Vocabulary,
};
use crate::codec::{Container, ContainerWriter, SectionReader, SectionWriter};
use crate::eval::{split_assignments, SplitSpec};
use crate::factorize::{Rating, SparseRatings};

pub const BUNDLE_MAGIC: &[u8; 8] = b"BCMFCORP";
pub const BUNDLE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub max_vocab: usize,
    pub min_doc_freq: usize,
    pub max_len: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            max_vocab: 8000,
            min_doc_freq: 1,
            max_len: 300,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    corpus: CorpusConfig,
    split: SplitSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusBundle {
    pub config: CorpusConfig,
    pub split: SplitSpec,
    pub stats: DatasetStats,
    pub user_keys: Vec<String>,
    pub item_keys: Vec<String>,
    /// Every rating in input order.
    pub ratings: Vec<Rating>,
    /// `is_test[t]` marks `ratings[t]` as held out.
    pub is_test: Vec<bool>,
    pub vocab: Vocabulary,
    /// One document per user index, built from training reviews only.
    pub user_docs: Vec<TokenDocument>,
    pub item_docs: Vec<TokenDocument>,
}

impl CorpusBundle {
    /// Assigns dense ids in first-appearance order, splits the ratings, and
    /// tensorizes review sets built from the training split.
    pub fn build(
        records: &[ReviewRecord],
        config: &CorpusConfig,
        split: &SplitSpec,
    ) -> Result<Self, CorpusError> {
        if config.max_len == 0 {
            return Err(CorpusError::InvalidConfig(
                "max_len must be at least 1".into(),
            ));
        }
        let mut user_ids: HashMap<&str, u32> = HashMap::new();
        let mut item_ids: HashMap<&str, u32> = HashMap::new();
        let mut user_keys = Vec::new();
        let mut item_keys = Vec::new();
        let mut ratings = Vec::with_capacity(records.len());
        for r in records {
            let user = *user_ids.entry(&r.user_id).or_insert_with(|| {
                user_keys.push(r.user_id.clone());
                user_keys.len() as u32 - 1
            });
            let item = *item_ids.entry(&r.item_id).or_insert_with(|| {
                item_keys.push(r.item_id.clone());
                item_keys.len() as u32 - 1
            });
            ratings.push(Rating {
                user,
                item,
                value: r.rating,
            });
        }
        let is_test = split_assignments(records.len(), split)
            .map_err(|e| CorpusError::InvalidConfig(e.to_string()))?;

        let train: Vec<ReviewRecord> = records
            .iter()
            .zip(&is_test)
            .filter(|(_, &t)| !t)
            .map(|(r, _)| r.clone())
            .collect();
        let sets = build_review_sets(&train);
        let texts: Vec<&str> = sets
            .users
            .iter()
            .chain(&sets.items)
            .map(|s| s.text.as_str())
            .collect();
        let vocab = build_vocabulary(&texts, config.max_vocab, config.min_doc_freq)?;

        let mut user_docs = vec![TokenDocument::empty(config.max_len); user_keys.len()];
        for s in &sets.users {
            user_docs[user_ids[s.owner.as_str()] as usize] =
                tensorize(&s.text, &vocab, config.max_len)?;
        }
        let mut item_docs = vec![TokenDocument::empty(config.max_len); item_keys.len()];
        for s in &sets.items {
            item_docs[item_ids[s.owner.as_str()] as usize] =
                tensorize(&s.text, &vocab, config.max_len)?;
        }

        Ok(Self {
            config: config.clone(),
            split: split.clone(),
            stats: DatasetStats::from_counts(user_keys.len(), item_keys.len(), ratings.len()),
            user_keys,
            item_keys,
            ratings,
            is_test,
            vocab,
            user_docs,
            item_docs,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_keys.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_keys.len()
    }

    pub fn train_ratings(&self) -> SparseRatings {
        let train = self
            .ratings
            .iter()
            .zip(&self.is_test)
            .filter(|(_, &t)| !t)
            .map(|(r, _)| *r)
            .collect();
        SparseRatings::new(self.n_users(), self.n_items(), train)
            .expect("bundle indices are in range by construction")
    }

    pub fn test_ratings(&self) -> Vec<Rating> {
        self.ratings
            .iter()
            .zip(&self.is_test)
            .filter(|(_, &t)| t)
            .map(|(r, _)| *r)
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let file =
            File::create(path).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))?;
        self.write_to(BufWriter::new(file))
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<(), CorpusError> {
        let mut w = ContainerWriter::new(out, BUNDLE_MAGIC, BUNDLE_VERSION)?;

        let header = BundleHeader {
            corpus: self.config.clone(),
            split: self.split.clone(),
        };
        let mut s = SectionWriter::new();
        s.str(&serde_json::to_string(&header).expect("config serializes"));
        w.section(b"CONF", s)?;

        let mut s = SectionWriter::new();
        s.u64(self.stats.users as u64)
            .u64(self.stats.items as u64)
            .u64(self.stats.ratings as u64)
            .f64(self.stats.density);
        w.section(b"STAT", s)?;

        let mut s = SectionWriter::new();
        s.strs(&self.user_keys).strs(&self.item_keys);
        w.section(b"KEYS", s)?;

        let mut s = SectionWriter::new();
        let users: Vec<u32> = self.ratings.iter().map(|r| r.user).collect();
        let items: Vec<u32> = self.ratings.iter().map(|r| r.item).collect();
        let values: Vec<f64> = self.ratings.iter().map(|r| r.value).collect();
        s.u32s(&users).u32s(&items).f64s(&values);
        s.u64(self.is_test.len() as u64);
        for &t in &self.is_test {
            s.u8(t as u8);
        }
        w.section(b"RATE", s)?;

        let mut s = SectionWriter::new();
        s.strs(self.vocab.tokens());
        w.section(b"VOCB", s)?;

        w.section(b"UDOC", encode_docs(self.config.max_len, &self.user_docs))?;
        w.section(b"IDOC", encode_docs(self.config.max_len, &self.item_docs))?;
        w.finish()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file =
            File::open(path).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))?;
        Self::read_from(file)
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self, CorpusError> {
        let c = Container::read(input, BUNDLE_MAGIC, BUNDLE_VERSION)?;

        let mut s = c.section(b"CONF")?;
        let header: BundleHeader =
            serde_json::from_str(&s.str()?).map_err(|e| s.corrupt(e.to_string()))?;
        s.finish()?;

        let mut s = c.section(b"STAT")?;
        let users = s.u64()? as usize;
        let items = s.u64()? as usize;
        let n_ratings = s.u64()? as usize;
        let density = s.f64()?;
        s.finish()?;
        let stats = DatasetStats {
            users,
            items,
            ratings: n_ratings,
            density,
        };

        let mut s = c.section(b"KEYS")?;
        let user_keys = s.strs()?;
        let item_keys = s.strs()?;
        s.finish()?;

        let mut s = c.section(b"RATE")?;
        let ru = s.u32s()?;
        let ri = s.u32s()?;
        let rv = s.f64s()?;
        let nt = s.len(1)?;
        let is_test = (0..nt)
            .map(|_| s.u8().map(|b| b != 0))
            .collect::<Result<Vec<_>, _>>()?;
        if ru.len() != ri.len() || ru.len() != rv.len() || ru.len() != is_test.len() {
            return Err(s.corrupt("rating column lengths differ").into());
        }
        if ru.iter().any(|&u| u as usize >= user_keys.len())
            || ri.iter().any(|&i| i as usize >= item_keys.len())
        {
            return Err(s.corrupt("rating index out of range").into());
        }
        s.finish()?;
        let ratings = ru
            .into_iter()
            .zip(ri)
            .zip(rv)
            .map(|((user, item), value)| Rating { user, item, value })
            .collect();

        let mut s = c.section(b"VOCB")?;
        let vocab = Vocabulary::from_tokens(s.strs()?);
        s.finish()?;

        let user_docs = decode_docs(c.section(b"UDOC")?, header.corpus.max_len, vocab.len())?;
        let item_docs = decode_docs(c.section(b"IDOC")?, header.corpus.max_len, vocab.len())?;
        if user_docs.len() != user_keys.len() || item_docs.len() != item_keys.len() {
            return Err(CorpusError::InvalidConfig(
                "document count does not match key count".into(),
            ));
        }

        Ok(Self {
            config: header.corpus,
            split: header.split,
            stats,
            user_keys,
            item_keys,
            ratings,
            is_test,
            vocab,
            user_docs,
            item_docs,
        })
    }
}

fn encode_docs(max_len: usize, docs: &[TokenDocument]) -> SectionWriter {
    let mut s = SectionWriter::new();
    let lens: Vec<u32> = docs.iter().map(|d| d.true_len as u32).collect();
    let flat: Vec<u32> = docs
        .iter()
        .flat_map(|d| d.indices.iter().copied())
        .collect();
    s.u64(max_len as u64).u32s(&lens).u32s(&flat);
    s
}

fn decode_docs(
    mut s: SectionReader<'_>,
    expected_len: usize,
    vocab_size: usize,
) -> Result<Vec<TokenDocument>, CorpusError> {
    let max_len = s.u64()? as usize;
    if max_len != expected_len || max_len == 0 {
        return Err(s
            .corrupt(format!(
                "max_len {max_len} does not match config {expected_len}"
            ))
            .into());
    }
    let lens = s.u32s()?;
    let flat = s.u32s()?;
    if flat.len() != lens.len() * max_len {
        return Err(s.corrupt("document data length mismatch").into());
    }
    let mut docs = Vec::with_capacity(lens.len());
    for (chunk, &len) in flat.chunks(max_len).zip(&lens) {
        let len = len as usize;
        let valid = len <= max_len
            && chunk[..len]
                .iter()
                .all(|&i| i != 0 && i as usize <= vocab_size)
            && chunk[len..].iter().all(|&i| i == 0);
        if !valid {
            return Err(s
                .corrupt("document violates padding or vocabulary bounds")
                .into());
        }
        docs.push(TokenDocument {
            indices: chunk.to_vec(),
            true_len: len,
        });
    }
    s.finish()?;
    Ok(docs)
}
