use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, Vocabulary};

/// `(vocab_size + 1) × dim` word vectors; row 0 (padding) is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: Vec<f64>,
}

/// Half-width of the uniform init used for randomly initialized tables.
pub const RANDOM_INIT_RANGE: f64 = 0.1;
/// Half-width used for vocabulary words missing from a pretrained file.
pub const MISSING_WORD_RANGE: f64 = 0.25;

impl EmbeddingTable {
    pub fn zeros(n_rows: usize, dim: usize) -> Self {
        Self {
            dim,
            rows: vec![0.0; n_rows * dim],
        }
    }

    /// Seeded `Uniform(-range, range)` rows for `1..=vocab_size`.
    pub fn random(vocab_size: usize, dim: usize, range: f64, seed: u64) -> Self {
        let mut table = Self::zeros(vocab_size + 1, dim);
        let dist = Uniform::new(-range, range).expect("range must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut table.rows[dim..] {
            *v = dist.sample(&mut rng);
        }
        table
    }

    pub fn from_flat(dim: usize, rows: Vec<f64>) -> Result<Self, CorpusError> {
        if dim == 0 || !rows.len().is_multiple_of(dim) || rows.is_empty() {
            return Err(CorpusError::InvalidConfig(format!(
                "embedding data of length {} is not a whole number of rows of width {dim}",
                rows.len()
            )));
        }
        if rows[..dim].iter().any(|&v| v != 0.0) {
            return Err(CorpusError::InvalidConfig(
                "embedding row 0 must be zero".into(),
            ));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(CorpusError::InvalidConfig(
                "non-finite embedding entry".into(),
            ));
        }
        Ok(Self { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn row(&self, index: u32) -> &[f64] {
        let i = index as usize * self.dim;
        &self.rows[i..i + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.rows
    }
}

/// Reads plain-text word vectors for the words of `vocab`.
///
/// Format: an optional `count dim` header, then `token v1 .. v_dim` per line.
/// Words absent from the file get seeded `Uniform(-0.25, 0.25)` vectors,
/// drawn in vocabulary-index order so the result does not depend on file
/// order. An exact token match takes precedence over a case-folded one.
pub fn load_pretrained_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))?;
    read_pretrained_embeddings(BufReader::new(file), vocab, dim, seed)
}

pub fn read_pretrained_embeddings<R: BufRead>(
    input: R,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable, CorpusError> {
    if dim == 0 {
        return Err(CorpusError::InvalidConfig(
            "embedding dimension must be at least 1".into(),
        ));
    }
    let mut table = EmbeddingTable::zeros(vocab.len() + 1, dim);
    // 0 = missing, 1 = case-folded match, 2 = exact match
    let mut found = vec![0u8; vocab.len() + 1];
    for (line_no, line) in input.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if line_no == 0 && values.len() == 1 {
            if let (Ok(_), Ok(declared)) = (token.parse::<usize>(), values[0].parse::<usize>()) {
                if declared != dim {
                    return Err(CorpusError::EmbeddingDimension {
                        expected: dim,
                        found: declared,
                        line: 1,
                    });
                }
                continue;
            }
        }
        if values.len() != dim {
            return Err(CorpusError::EmbeddingDimension {
                expected: dim,
                found: values.len(),
                line: line_no + 1,
            });
        }
        let (index, quality) = match vocab.get(token) {
            Some(i) => (i, 2),
            None => match vocab.get(&token.to_lowercase()) {
                Some(i) => (i, 1),
                None => continue,
            },
        };
        if found[index as usize] >= quality {
            continue;
        }
        let start = index as usize * dim;
        for (slot, raw) in table.rows[start..start + dim].iter_mut().zip(&values) {
            let v: f64 = raw.parse().map_err(|_| CorpusError::Malformed {
                line: line_no + 1,
                reason: format!("invalid number `{raw}` in vector for `{token}`"),
            })?;
            if !v.is_finite() {
                return Err(CorpusError::Malformed {
                    line: line_no + 1,
                    reason: format!("non-finite value in vector for `{token}`"),
                });
            }
            *slot = v;
        }
        found[index as usize] = quality;
    }

    let dist = Uniform::new(-MISSING_WORD_RANGE, MISSING_WORD_RANGE).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let missing = (1..found.len()).filter(|&i| found[i] == 0);
    let mut n_missing = 0usize;
    for i in missing {
        n_missing += 1;
        for v in &mut table.rows[i * dim..(i + 1) * dim] {
            *v = dist.sample(&mut rng);
        }
    }
    log::info!(
        "pretrained embeddings: {} of {} vocabulary words found",
        vocab.len() - n_missing,
        vocab.len()
    );
    Ok(table)
}
