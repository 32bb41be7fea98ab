//! Closed-form coordinate updates and the MAP objective.
//!
//! With the CNN outputs held fixed, the objective
//!
//! ```text
//! L = Σ_(i,j) ½ (r_ij − u_iᵀ v_j)²
//!   + λ_U/2 Σ_i ‖u_i − cnn(W_U, X_i)‖² + λ_WU/2 ‖W_U‖²
//!   + λ_V/2 Σ_j ‖v_j − cnn(W_V, X_j)‖² + λ_WV/2 ‖W_V‖²
//! ```
//!
//! is quadratic in each `u_i` (and each `v_j`), so every row has an exact
//! minimizer: `u_i = (Σ_j v_j v_jᵀ + λ_U I)⁻¹ (Σ_j r_ij v_j + λ_U t_i)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Entry, FactorizeError, SparseRatings};
use crate::linalg::{self, Cholesky, CompensatedSum, DenseMatrix};

/// The `k × N` user matrix and `k × M` item matrix, stored column by column
/// so each `u_i` / `v_j` is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFactors {
    pub k: usize,
    pub users: Vec<f64>,
    pub items: Vec<f64>,
}

impl LatentFactors {
    pub fn n_users(&self) -> usize {
        self.users.len() / self.k
    }

    pub fn n_items(&self) -> usize {
        self.items.len() / self.k
    }

    pub fn user(&self, i: usize) -> &[f64] {
        &self.users[i * self.k..(i + 1) * self.k]
    }

    pub fn item(&self, j: usize) -> &[f64] {
        &self.items[j * self.k..(j + 1) * self.k]
    }

    pub fn predict(&self, i: usize, j: usize) -> f64 {
        linalg::dot(self.user(i), self.item(j))
    }

    pub fn is_finite(&self) -> bool {
        self.users.iter().chain(&self.items).all(|v| v.is_finite())
    }
}

/// Every entry i.i.d. `Uniform[0, 1)` from a generator seeded with `seed`;
/// all of `U` is drawn before `V`.
pub fn init_factors(
    n_users: usize,
    n_items: usize,
    k: usize,
    seed: u64,
) -> Result<LatentFactors, FactorizeError> {
    if n_users == 0 || n_items == 0 || k == 0 {
        return Err(FactorizeError::Shape(format!(
            "cannot initialize factors with N={n_users}, M={n_items}, k={k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = (0..n_users * k).map(|_| rng.random::<f64>()).collect();
    let items = (0..n_items * k).map(|_| rng.random::<f64>()).collect();
    Ok(LatentFactors { k, users, items })
}

fn check_targets(
    targets: Option<&[f64]>,
    n: usize,
    k: usize,
    side: &str,
) -> Result<(), FactorizeError> {
    match targets {
        Some(t) if t.len() != n * k => Err(FactorizeError::Shape(format!(
            "{side} targets have {} values, expected {n}×{k}",
            t.len()
        ))),
        _ => Ok(()),
    }
}

/// Solves every row of one side. `adjacency(i)` lists the observed cells of
/// row `i`; `other` holds the opposite side's factors.
fn solve_side<'a>(
    n: usize,
    k: usize,
    adjacency: impl Fn(usize) -> &'a [Entry],
    other: &[f64],
    targets: Option<&[f64]>,
    lambda: f64,
) -> Result<Vec<f64>, FactorizeError> {
    if !(lambda > 0.0) {
        return Err(FactorizeError::Config(format!(
            "regularization λ must be positive, got {lambda}"
        )));
    }
    let mut out = vec![0.0; n * k];
    let mut rhs = vec![0.0; k];
    for i in 0..n {
        let row = &mut out[i * k..(i + 1) * k];
        let entries = adjacency(i);
        let target = targets.map(|t| &t[i * k..(i + 1) * k]);
        if entries.is_empty() {
            // only the prior acts on this row
            match target {
                Some(t) => row.copy_from_slice(t),
                None => row.fill(0.0),
            }
            continue;
        }
        let mut gram = DenseMatrix::zeros(k, k);
        match target {
            Some(t) => rhs.iter_mut().zip(t).for_each(|(r, &t)| *r = lambda * t),
            None => rhs.fill(0.0),
        }
        for e in entries {
            let col = &other[e.index as usize * k..(e.index as usize + 1) * k];
            linalg::accumulate_outer(&mut gram, col);
            linalg::axpy(e.value, col, &mut rhs);
        }
        linalg::mirror_upper(&mut gram);
        gram.add_diagonal(lambda);
        let x = Cholesky::factor(&gram)?.solve(&rhs)?;
        row.copy_from_slice(&x);
    }
    Ok(out)
}

/// `u_i ← (V I_i Vᵀ + λ_U I)⁻¹ (V R_i + λ_U t_i)` for every user. Users with
/// no ratings get `u_i = t_i` (zero when `targets` is `None`).
pub fn update_user_factors(
    ratings: &SparseRatings,
    factors: &LatentFactors,
    targets: Option<&[f64]>,
    lambda_u: f64,
) -> Result<Vec<f64>, FactorizeError> {
    check_shapes(ratings, factors)?;
    check_targets(targets, ratings.n_users(), factors.k, "user")?;
    solve_side(
        ratings.n_users(),
        factors.k,
        |i| ratings.user_row(i),
        &factors.items,
        targets,
        lambda_u,
    )
}

/// `v_j ← (U I_j Uᵀ + λ_V I)⁻¹ (U R_j + λ_V t_j)` for every item.
pub fn update_item_factors(
    ratings: &SparseRatings,
    factors: &LatentFactors,
    targets: Option<&[f64]>,
    lambda_v: f64,
) -> Result<Vec<f64>, FactorizeError> {
    check_shapes(ratings, factors)?;
    check_targets(targets, ratings.n_items(), factors.k, "item")?;
    solve_side(
        ratings.n_items(),
        factors.k,
        |j| ratings.item_column(j),
        &factors.users,
        targets,
        lambda_v,
    )
}

fn check_shapes(ratings: &SparseRatings, factors: &LatentFactors) -> Result<(), FactorizeError> {
    if factors.n_users() != ratings.n_users() || factors.n_items() != ratings.n_items() {
        return Err(FactorizeError::Shape(format!(
            "factors are for {}×{} but ratings are {}×{}",
            factors.n_users(),
            factors.n_items(),
            ratings.n_users(),
            ratings.n_items()
        )));
    }
    Ok(())
}

/// Regularization weights of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lambdas {
    pub user: f64,
    pub item: f64,
    pub user_cnn: f64,
    pub item_cnn: f64,
}

/// Adds `scale · (v − t)²` per entry (`t = 0` when absent).
fn add_prior(acc: &mut CompensatedSum, scale: f64, values: &[f64], targets: Option<&[f64]>) {
    match targets {
        Some(t) => values
            .iter()
            .zip(t)
            .for_each(|(v, t)| acc.add(scale * (v - t) * (v - t))),
        None => values.iter().for_each(|v| acc.add(scale * v * v)),
    }
}

/// The MAP objective with every norm squared. `*_weight_norm_sq` are the
/// squared weight norms of the two CNNs (0 when a side has none).
///
/// Terms are accumulated with compensation so that the monotone decrease of
/// the row updates survives rounding even when the total is large.
pub fn total_loss(
    ratings: &SparseRatings,
    factors: &LatentFactors,
    user_targets: Option<&[f64]>,
    item_targets: Option<&[f64]>,
    lambdas: &Lambdas,
    user_weight_norm_sq: f64,
    item_weight_norm_sq: f64,
) -> f64 {
    let mut acc = CompensatedSum::default();
    for r in ratings.triplets() {
        let e = r.value - factors.predict(r.user as usize, r.item as usize);
        acc.add(0.5 * e * e);
    }
    add_prior(&mut acc, 0.5 * lambdas.item, &factors.items, item_targets);
    acc.add(0.5 * lambdas.item_cnn * item_weight_norm_sq);
    add_prior(&mut acc, 0.5 * lambdas.user, &factors.users, user_targets);
    acc.add(0.5 * lambdas.user_cnn * user_weight_norm_sq);
    acc.value()
}
