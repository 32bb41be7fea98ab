use serde::{Deserialize, Serialize};

use super::FactorizeError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub value: f64,
}

/// One observed cell seen from a user row or an item column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    /// The other side's index (item for a user row, user for an item column).
    pub index: u32,
    pub value: f64,
}

/// Observed ratings as a triplet list plus compressed per-user and per-item
/// adjacency. Duplicate `(user, item)` pairs are kept as separate entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRatings {
    n_users: usize,
    n_items: usize,
    triplets: Vec<Rating>,
    user_offsets: Vec<usize>,
    user_entries: Vec<Entry>,
    item_offsets: Vec<usize>,
    item_entries: Vec<Entry>,
}

fn compress(
    n: usize,
    keys: impl Iterator<Item = (usize, Entry)> + Clone,
) -> (Vec<usize>, Vec<Entry>) {
    let mut offsets = vec![0usize; n + 1];
    for (k, _) in keys.clone() {
        offsets[k + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut cursor = offsets.clone();
    let mut entries = vec![
        Entry {
            index: 0,
            value: 0.0
        };
        offsets[n]
    ];
    for (k, e) in keys {
        entries[cursor[k]] = e;
        cursor[k] += 1;
    }
    (offsets, entries)
}

impl SparseRatings {
    pub fn new(
        n_users: usize,
        n_items: usize,
        triplets: Vec<Rating>,
    ) -> Result<Self, FactorizeError> {
        for (t, r) in triplets.iter().enumerate() {
            if r.user as usize >= n_users || r.item as usize >= n_items {
                return Err(FactorizeError::Shape(format!(
                    "rating {t} at ({}, {}) outside {n_users}×{n_items}",
                    r.user, r.item
                )));
            }
            if !r.value.is_finite() {
                return Err(FactorizeError::Shape(format!("rating {t} is not finite")));
            }
        }
        let (user_offsets, user_entries) = compress(
            n_users,
            triplets.iter().map(|r| {
                (
                    r.user as usize,
                    Entry {
                        index: r.item,
                        value: r.value,
                    },
                )
            }),
        );
        let (item_offsets, item_entries) = compress(
            n_items,
            triplets.iter().map(|r| {
                (
                    r.item as usize,
                    Entry {
                        index: r.user,
                        value: r.value,
                    },
                )
            }),
        );
        Ok(Self {
            n_users,
            n_items,
            triplets,
            user_offsets,
            user_entries,
            item_offsets,
            item_entries,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn triplets(&self) -> &[Rating] {
        &self.triplets
    }

    /// Items rated by `user`, in triplet order.
    pub fn user_row(&self, user: usize) -> &[Entry] {
        &self.user_entries[self.user_offsets[user]..self.user_offsets[user + 1]]
    }

    /// Users who rated `item`, in triplet order.
    pub fn item_column(&self, item: usize) -> &[Entry] {
        &self.item_entries[self.item_offsets[item]..self.item_offsets[item + 1]]
    }

    pub fn density(&self) -> f64 {
        let cells = self.n_users as f64 * self.n_items as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.triplets.len() as f64 / cells
        }
    }

    pub fn mean(&self) -> Option<f64> {
        if self.triplets.is_empty() {
            None
        } else {
            Some(self.triplets.iter().map(|r| r.value).sum::<f64>() / self.triplets.len() as f64)
        }
    }
}
