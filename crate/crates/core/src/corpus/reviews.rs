//! Line-delimited JSON review records (`reviewerID`, `asin`, `overall`,
//! `reviewText`), as distributed with the Amazon product review dumps.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
    pub review_text: String,
}

#[derive(Deserialize)]
struct RawReview {
    #[serde(rename = "reviewerID")]
    reviewer_id: Option<String>,
    asin: Option<String>,
    overall: Option<f64>,
    #[serde(rename = "reviewText")]
    review_text: Option<String>,
}

/// What to do with a line that does not parse into a [`ReviewRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnMalformed {
    #[default]
    Abort,
    /// Log a warning and continue with the next line.
    Skip,
}

impl ReviewRecord {
    /// Parses one JSON line. `line_no` is 1-based and only used for errors.
    pub fn from_json_line(line: &str, line_no: usize) -> Result<Self, CorpusError> {
        let malformed = |reason: String| CorpusError::Malformed {
            line: line_no,
            reason,
        };
        let raw: RawReview =
            serde_json::from_str(line).map_err(|e| malformed(format!("invalid json: {e}")))?;
        let user_id = raw
            .reviewer_id
            .filter(|s| !s.is_empty())
            .ok_or_else(|| malformed("missing reviewerID".into()))?;
        let item_id = raw
            .asin
            .filter(|s| !s.is_empty())
            .ok_or_else(|| malformed("missing asin".into()))?;
        let rating = raw
            .overall
            .ok_or_else(|| malformed("missing overall rating".into()))?;
        if !rating.is_finite() || !(1.0..=5.0).contains(&rating) {
            return Err(malformed(format!("rating {rating} outside [1, 5]")));
        }
        Ok(Self {
            user_id,
            item_id,
            rating,
            review_text: raw.review_text.unwrap_or_default(),
        })
    }
}

/// Streams records from a line-delimited reader. Blank lines are ignored.
pub struct ReviewReader<R> {
    input: R,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> ReviewReader<R> {
    pub fn new(input: R) -> Self {
        Self {
            input,
            line_no: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for ReviewReader<R> {
    type Item = Result<ReviewRecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            return Some(ReviewRecord::from_json_line(line, self.line_no));
        }
    }
}

/// Parses every record in file order.
pub fn parse_reviews<R: BufRead>(
    input: R,
    policy: OnMalformed,
) -> Result<Vec<ReviewRecord>, CorpusError> {
    read_first_n(input, usize::MAX, policy)
}

/// Like [`parse_reviews`] but stops after `n` valid records without reading
/// the rest of the input.
pub fn read_first_n<R: BufRead>(
    input: R,
    n: usize,
    policy: OnMalformed,
) -> Result<Vec<ReviewRecord>, CorpusError> {
    let mut out = Vec::new();
    if n == 0 {
        return Ok(out);
    }
    for rec in ReviewReader::new(input) {
        match rec {
            Ok(r) => {
                out.push(r);
                if out.len() == n {
                    break;
                }
            }
            Err(e @ CorpusError::Malformed { .. }) if policy == OnMalformed::Skip => {
                log::warn!("skipping {e}");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Counts over a set of rating records.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    /// `ratings / (users * items)`, zero for an empty set.
    pub density: f64,
}

impl DatasetStats {
    pub fn of(records: &[ReviewRecord]) -> Self {
        let users: HashSet<&str> = records.iter().map(|r| r.user_id.as_str()).collect();
        let items: HashSet<&str> = records.iter().map(|r| r.item_id.as_str()).collect();
        Self::from_counts(users.len(), items.len(), records.len())
    }

    pub fn from_counts(users: usize, items: usize, ratings: usize) -> Self {
        let cells = users as f64 * items as f64;
        let density = if cells > 0.0 {
            ratings as f64 / cells
        } else {
            0.0
        };
        Self {
            users,
            items,
            ratings,
            density,
        }
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "#users\t#items\t#ratings\tdensity")?;
        write!(
            f,
            "{}\t{}\t{}\t{:.2}%",
            self.users,
            self.items,
            self.ratings,
            self.density * 100.0
        )
    }
}

/// The first `min(n, len)` records, in order, with their statistics.
pub fn take_first_n(records: &[ReviewRecord], n: usize) -> (Vec<ReviewRecord>, DatasetStats) {
    let head = records[..n.min(records.len())].to_vec();
    let stats = DatasetStats::of(&head);
    (head, stats)
}
