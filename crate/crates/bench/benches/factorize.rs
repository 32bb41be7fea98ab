use biconvmf::factorize::{update_item_factors, update_user_factors};
use biconvmf_bench::rating_case;
use criterion::{criterion_group, criterion_main, Criterion};

fn bench_updates(c: &mut Criterion) {
    let (ratings, factors) = rating_case(20_000, 50);
    let targets_u = vec![0.0; factors.users.len()];
    let targets_v = vec![0.0; factors.items.len()];
    let mut group = c.benchmark_group("row_updates_20k_ratings_k50");
    group.sample_size(10);
    group.bench_function("users", |b| {
        b.iter(|| update_user_factors(&ratings, &factors, Some(&targets_u), 100.0).unwrap())
    });
    group.bench_function("items", |b| {
        b.iter(|| update_item_factors(&ratings, &factors, Some(&targets_v), 100.0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_updates);
criterion_main!(benches);
