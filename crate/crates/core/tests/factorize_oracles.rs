//! Optimality, monotonicity and reduction checks of the alternating solver.

use biconvmf::factorize::{
    coordinate_descent, init_factors, total_loss, update_item_factors, update_user_factors,
    FixedTargets, Hyperparams, Lambdas, LatentEncoder, LatentFactors, ModelKind, Rating, Side,
    SparseRatings,
};
use biconvmf::TokenDocument;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_ratings(rng: &mut impl Rng, n: usize, m: usize, count: usize) -> SparseRatings {
    let triplets = (0..count)
        .map(|_| Rating {
            user: rng.random_range(0..n as u32),
            item: rng.random_range(0..m as u32),
            value: rng.random_range(1..=5) as f64,
        })
        .collect();
    SparseRatings::new(n, m, triplets).unwrap()
}

fn random_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// d/du_i of the objective: −Σ_j (r_ij − u_i·v_j) v_j + λ_U (u_i − t_i).
fn user_gradient(
    r: &SparseRatings,
    f: &LatentFactors,
    t: &[f64],
    lambda: f64,
    i: usize,
) -> Vec<f64> {
    let k = f.k;
    let mut g: Vec<f64> = (0..k)
        .map(|d| lambda * (f.user(i)[d] - t[i * k + d]))
        .collect();
    for rt in r.triplets().iter().filter(|rt| rt.user as usize == i) {
        let v = f.item(rt.item as usize);
        let e = rt.value - f.predict(i, rt.item as usize);
        for d in 0..k {
            g[d] -= e * v[d];
        }
    }
    g
}

fn item_gradient(
    r: &SparseRatings,
    f: &LatentFactors,
    t: &[f64],
    lambda: f64,
    j: usize,
) -> Vec<f64> {
    let k = f.k;
    let mut g: Vec<f64> = (0..k)
        .map(|d| lambda * (f.item(j)[d] - t[j * k + d]))
        .collect();
    for rt in r.triplets().iter().filter(|rt| rt.item as usize == j) {
        let u = f.user(rt.user as usize);
        let e = rt.value - f.predict(rt.user as usize, j);
        for d in 0..k {
            g[d] -= e * u[d];
        }
    }
    g
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

#[test]
fn row_updates_are_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.random_range(1..=10);
        let m = rng.random_range(1..=10);
        let k = rng.random_range(1..=5);
        let count = rng.random_range(0..=n * m * 2);
        let ratings = random_ratings(&mut rng, n, m, count);
        let mut f = init_factors(n, m, k, case).unwrap();
        let ut = random_vec(&mut rng, n * k, 2.0);
        let vt = random_vec(&mut rng, m * k, 2.0);
        let lu = 10f64.powf(rng.random_range(-1.0..2.0));
        let lv = 10f64.powf(rng.random_range(-1.0..2.0));

        f.users = update_user_factors(&ratings, &f, Some(&ut), lu).unwrap();
        for i in 0..n {
            let g = inf_norm(&user_gradient(&ratings, &f, &ut, lu, i));
            assert!(g <= 1e-8, "case {case} user {i}: {g:e}");
            worst = worst.max(g);
        }
        f.items = update_item_factors(&ratings, &f, Some(&vt), lv).unwrap();
        for j in 0..m {
            let g = inf_norm(&item_gradient(&ratings, &f, &vt, lv, j));
            assert!(g <= 1e-8, "case {case} item {j}: {g:e}");
            worst = worst.max(g);
        }
    }
    eprintln!("stationarity: worst gradient {worst:.2e}");
}

#[test]
fn huge_lambda_pins_rows_to_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // user 3 has no ratings; user 0 has one
    let ratings = SparseRatings::new(
        4,
        3,
        vec![
            Rating {
                user: 0,
                item: 1,
                value: 5.0,
            },
            Rating {
                user: 1,
                item: 0,
                value: 2.0,
            },
            Rating {
                user: 2,
                item: 2,
                value: 4.0,
            },
        ],
    )
    .unwrap();
    let f = init_factors(4, 3, 3, 1).unwrap();
    let t = random_vec(&mut rng, 12, 1.0);
    let u = update_user_factors(&ratings, &f, Some(&t), 1e8).unwrap();
    for i in 0..4 {
        let dist: f64 = (0..3)
            .map(|d| (u[i * 3 + d] - t[i * 3 + d]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(dist <= 1e-3, "user {i}: {dist}");
    }
    assert_eq!(&u[9..12], &t[9..12]);
}

#[test]
fn total_loss_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let ratings = random_ratings(&mut rng, 3, 2, 5);
        let f = LatentFactors {
            k: 2,
            users: random_vec(&mut rng, 6, 2.0),
            items: random_vec(&mut rng, 4, 2.0),
        };
        let ut = random_vec(&mut rng, 6, 1.0);
        let vt = random_vec(&mut rng, 4, 1.0);
        let l = Lambdas {
            user: 1.5,
            item: 30.0,
            user_cnn: 1e-3,
            item_cnn: 0.2,
        };
        let (nu, ni) = (4.0, 9.0);

        let mut brute = 0.0;
        for r in ratings.triplets() {
            let (i, j) = (r.user as usize, r.item as usize);
            let pred = f.users[2 * i] * f.items[2 * j] + f.users[2 * i + 1] * f.items[2 * j + 1];
            brute += 0.5 * (r.value - pred).powi(2);
        }
        for j in 0..2 {
            for d in 0..2 {
                brute += 0.5 * l.item * (f.items[2 * j + d] - vt[2 * j + d]).powi(2);
            }
        }
        brute += 0.5 * l.item_cnn * ni;
        for i in 0..3 {
            for d in 0..2 {
                brute += 0.5 * l.user * (f.users[2 * i + d] - ut[2 * i + d]).powi(2);
            }
        }
        brute += 0.5 * l.user_cnn * nu;

        let fast = total_loss(&ratings, &f, Some(&ut), Some(&vt), &l, nu, ni);
        assert!(
            (fast - brute).abs() <= 1e-12 * brute.abs().max(1.0),
            "{fast} vs {brute}"
        );
    }
}

#[test]
fn total_loss_trivial_cases() {
    let ratings = SparseRatings::new(
        2,
        2,
        vec![
            Rating {
                user: 0,
                item: 0,
                value: 3.0,
            },
            Rating {
                user: 1,
                item: 1,
                value: 2.0,
            },
        ],
    )
    .unwrap();
    let zero = LatentFactors {
        k: 2,
        users: vec![0.0; 4],
        items: vec![0.0; 4],
    };
    let l = Lambdas {
        user: 1.0,
        item: 100.0,
        user_cnn: 1e-4,
        item_cnn: 1e-4,
    };
    assert_eq!(
        total_loss(&ratings, &zero, None, None, &l, 0.0, 0.0),
        0.5 * (9.0 + 4.0)
    );

    let exact = LatentFactors {
        k: 2,
        users: vec![3.0, 0.0, 0.0, 2.0],
        items: vec![1.0, 0.0, 0.0, 1.0],
    };
    let (ut, vt) = (exact.users.clone(), exact.items.clone());
    assert_eq!(
        total_loss(&ratings, &exact, Some(&ut), Some(&vt), &l, 0.0, 0.0),
        0.0
    );
}

fn pmf_hyper(outer: usize) -> Hyperparams {
    let mut h = Hyperparams::for_model(ModelKind::Pmf);
    h.k = 4;
    h.outer_iters = outer;
    h.early_stop_patience = 0;
    h
}

#[test]
fn zero_encoders_reproduce_pmf_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (n, m) = (30, 20);
    let ratings = random_ratings(&mut rng, n, m, 150);
    let docs_u = vec![TokenDocument::empty(5); n];
    let docs_v = vec![TokenDocument::empty(5); m];
    for seed in [0u64, 1, 99] {
        let mut pmf = pmf_hyper(15);
        pmf.seed = seed;
        let mut bi = pmf.clone();
        bi.model = ModelKind::BiConvMf;
        let k = pmf.k;

        let (a, log_a) = coordinate_descent(
            &ratings,
            init_factors(n, m, k, seed).unwrap(),
            None,
            None,
            &pmf,
        )
        .unwrap();
        let mut zu = FixedTargets(vec![0.0; n * k]);
        let mut zv = FixedTargets(vec![0.0; m * k]);
        let (b, log_b) = coordinate_descent(
            &ratings,
            init_factors(n, m, k, seed).unwrap(),
            Some(Side {
                docs: docs_u.iter().collect(),
                encoder: &mut zu as &mut dyn LatentEncoder,
            }),
            Some(Side {
                docs: docs_v.iter().collect(),
                encoder: &mut zv as &mut dyn LatentEncoder,
            }),
            &bi,
        )
        .unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.users), bits(&b.users));
        assert_eq!(bits(&a.items), bits(&b.items));
        assert_eq!(log_a, log_b);
    }
}

#[test]
fn half_steps_never_increase_loss() {
    for seed in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (n, m) = (150, 60);
        let ratings = random_ratings(&mut rng, n, m, 1000);
        let mut h = pmf_hyper(60);
        h.model = ModelKind::BiConvMf;
        h.k = 8;
        h.lambda_u = if seed % 2 == 0 { 100.0 } else { 1.0 };
        h.lambda_v = 100.0;
        let mut eu = FixedTargets(random_vec(&mut rng, n * h.k, 1.0));
        let mut ev = FixedTargets(random_vec(&mut rng, m * h.k, 1.0));
        let du = vec![TokenDocument::empty(5); n];
        let dv = vec![TokenDocument::empty(5); m];
        let (_, log) = coordinate_descent(
            &ratings,
            init_factors(n, m, h.k, seed).unwrap(),
            Some(Side {
                docs: du.iter().collect(),
                encoder: &mut eu as &mut dyn LatentEncoder,
            }),
            Some(Side {
                docs: dv.iter().collect(),
                encoder: &mut ev as &mut dyn LatentEncoder,
            }),
            &h,
        )
        .unwrap();
        assert_eq!(log.iterations.len(), 60);
        for s in &log.iterations {
            assert!(
                s.loss_after_users <= s.loss_start + 1e-12,
                "seed {seed}: {s:?}"
            );
            assert!(
                s.loss_after_items <= s.loss_after_users + 1e-12,
                "seed {seed}: {s:?}"
            );
        }
    }
}

/// Objective for N=2, M=2, k=1 with all four cells rated.
fn tiny_objective(x: &[f64; 4], r: &[[f64; 2]; 2], t: &[f64; 4], lu: f64, lv: f64) -> f64 {
    let (u, v) = ([x[0], x[1]], [x[2], x[3]]);
    let mut l = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            l += 0.5 * (r[i][j] - u[i] * v[j]).powi(2);
        }
        l += 0.5 * lu * (u[i] - t[i]).powi(2) + 0.5 * lv * (v[i] - t[2 + i]).powi(2);
    }
    l
}

#[test]
fn alternating_fixed_point_matches_numeric_minimum() {
    let r = [[4.0, 2.0], [5.0, 3.0]];
    let t = [1.2, 1.5, 1.8, 1.1];
    let (lu, lv) = (1.0, 2.0);

    // coarse grid, then central-difference gradient descent with backtracking
    let obj = |x: &[f64; 4]| tiny_objective(x, &r, &t, lu, lv);
    let grid: Vec<f64> = (0..=40).map(|s| -4.0 + 0.2 * s as f64).collect();
    let mut best = ([0.0; 4], f64::INFINITY);
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                for &d in &grid {
                    let x = [a, b, c, d];
                    let l = obj(&x);
                    if l < best.1 {
                        best = (x, l);
                    }
                }
            }
        }
    }
    let mut x = best.0;
    let h = 1e-6;
    for _ in 0..20_000 {
        let mut g = [0.0; 4];
        for d in 0..4 {
            let (mut up, mut dn) = (x, x);
            up[d] += h;
            dn[d] -= h;
            g[d] = (obj(&up) - obj(&dn)) / (2.0 * h);
        }
        if g.iter().all(|v| v.abs() < 1e-9) {
            break;
        }
        let mut step = 0.1;
        loop {
            let cand = [
                x[0] - step * g[0],
                x[1] - step * g[1],
                x[2] - step * g[2],
                x[3] - step * g[3],
            ];
            if obj(&cand) < obj(&x) || step < 1e-12 {
                x = cand;
                break;
            }
            step *= 0.5;
        }
    }

    let ratings = SparseRatings::new(
        2,
        2,
        vec![
            Rating {
                user: 0,
                item: 0,
                value: r[0][0],
            },
            Rating {
                user: 0,
                item: 1,
                value: r[0][1],
            },
            Rating {
                user: 1,
                item: 0,
                value: r[1][0],
            },
            Rating {
                user: 1,
                item: 1,
                value: r[1][1],
            },
        ],
    )
    .unwrap();
    let mut h = Hyperparams::for_model(ModelKind::BiConvMf);
    h.k = 1;
    h.lambda_u = lu;
    h.lambda_v = lv;
    h.outer_iters = 5000;
    h.early_stop_patience = 0;
    let mut eu = FixedTargets(t[..2].to_vec());
    let mut ev = FixedTargets(t[2..].to_vec());
    let docs = [TokenDocument::empty(3), TokenDocument::empty(3)];
    let (f, _) = coordinate_descent(
        &ratings,
        init_factors(2, 2, 1, 0).unwrap(),
        Some(Side {
            docs: docs.iter().collect(),
            encoder: &mut eu as &mut dyn LatentEncoder,
        }),
        Some(Side {
            docs: docs.iter().collect(),
            encoder: &mut ev as &mut dyn LatentEncoder,
        }),
        &h,
    )
    .unwrap();
    let alt = [f.users[0], f.users[1], f.items[0], f.items[1]];
    for d in 0..4 {
        assert!(
            (alt[d] - x[d]).abs() < 1e-4,
            "alternating {alt:?} vs numeric {x:?}"
        );
    }
    assert!((obj(&alt) - obj(&x)).abs() < 1e-8);
}

#[test]
fn init_is_seeded_uniform_unit() {
    let a = init_factors(2, 2, 50, 8).unwrap();
    assert_eq!(a, init_factors(2, 2, 50, 8).unwrap());
    assert_ne!(a, init_factors(2, 2, 50, 9).unwrap());
    assert!(a
        .users
        .iter()
        .chain(&a.items)
        .all(|v| (0.0..1.0).contains(v)));
    let one = init_factors(1, 1, 1, 0).unwrap();
    assert_eq!((one.users.len(), one.items.len()), (1, 1));
}
