use std::collections::{HashMap, HashSet};

use super::CorpusError;

/// Lowercases and splits on every run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Token to index map. Index 0 is reserved for padding and unknown tokens;
/// real tokens occupy `1..=len()`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary where `tokens[i]` receives index `i + 1`.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 1))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Token stored at `index`, `None` for padding or out of range.
    pub fn token(&self, index: u32) -> Option<&str> {
        (index as usize)
            .checked_sub(1)
            .and_then(|i| self.tokens.get(i))
            .map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Keeps tokens present in at least `min_doc_freq` documents, ranks them by
/// total frequency (ties lexicographic) and truncates to `max_vocab`.
pub fn build_vocabulary<S: AsRef<str>>(
    docs: &[S],
    max_vocab: usize,
    min_doc_freq: usize,
) -> Result<Vocabulary, CorpusError> {
    if max_vocab == 0 {
        return Err(CorpusError::InvalidConfig(
            "max_vocab must be at least 1".into(),
        ));
    }
    let mut counts: HashMap<String, (u64, u64)> = HashMap::new();
    for doc in docs {
        let mut seen = HashSet::new();
        for tok in tokenize(doc.as_ref()) {
            let entry = counts.entry(tok.clone()).or_insert((0, 0));
            entry.0 += 1;
            if seen.insert(tok) {
                entry.1 += 1;
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(_, (_, df))| *df >= min_doc_freq as u64)
        .map(|(t, (tf, _))| (t, tf))
        .collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_vocab);
    Ok(Vocabulary::from_tokens(
        ranked.into_iter().map(|(t, _)| t).collect(),
    ))
}

/// Fixed-length token-index sequence, right-padded with 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenDocument {
    pub indices: Vec<u32>,
    pub true_len: usize,
}

impl TokenDocument {
    pub fn empty(max_len: usize) -> Self {
        Self {
            indices: vec![0; max_len],
            true_len: 0,
        }
    }

    pub fn max_len(&self) -> usize {
        self.indices.len()
    }

    /// The non-padding prefix.
    pub fn tokens(&self) -> &[u32] {
        &self.indices[..self.true_len]
    }
}

/// Maps text to vocabulary indices. Out-of-vocabulary tokens are dropped
/// rather than padded, and the result is cut at `max_len` tokens.
pub fn tensorize(
    text: &str,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<TokenDocument, CorpusError> {
    if max_len == 0 {
        return Err(CorpusError::InvalidConfig(
            "max_len must be at least 1".into(),
        ));
    }
    let mut indices: Vec<u32> = tokenize(text)
        .filter_map(|t| vocab.get(&t))
        .take(max_len)
        .collect();
    let true_len = indices.len();
    indices.resize(max_len, 0);
    Ok(TokenDocument { indices, true_len })
}
