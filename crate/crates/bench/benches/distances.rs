use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use exaseries::distance::{build_envelope, default_dtw_radius, dtw, l2_squared, l2_squared_bounded, lb_dtw};
use exaseries::summary::{isax_word_uniform, mindist_paa_isax, paa};
use exaseries::synthetic::random_walks;

fn distances(c: &mut Criterion) {
    let mut group = c.benchmark_group("distance");
    for n in [64, 256] {
        let v = random_walks(2, n, 1);
        let (a, b) = v.split_at(n);
        let r = default_dtw_radius(n);
        let env = build_envelope(a, r);
        group.bench_with_input(BenchmarkId::new("l2_squared", n), &n, |bch, _| {
            bch.iter(|| l2_squared(black_box(a), black_box(b)))
        });
        let half = l2_squared(a, b).unwrap() / 2.0;
        group.bench_with_input(BenchmarkId::new("l2_squared_abandoned", n), &n, |bch, _| {
            bch.iter(|| l2_squared_bounded(black_box(a), black_box(b), half))
        });
        group.bench_with_input(BenchmarkId::new("dtw", n), &n, |bch, _| {
            bch.iter(|| dtw(black_box(a), black_box(b), r))
        });
        group.bench_with_input(BenchmarkId::new("lb_keogh", n), &n, |bch, _| {
            bch.iter(|| lb_dtw(black_box(&env), black_box(b)))
        });
        let pa = paa(a, 16).unwrap();
        let word = isax_word_uniform(&paa(b, 16).unwrap(), 8).unwrap();
        group.bench_with_input(BenchmarkId::new("mindist_paa_isax", n), &n, |bch, _| {
            bch.iter(|| mindist_paa_isax(black_box(&pa), black_box(&word), n))
        });
    }
    group.finish();
}

criterion_group!(benches, distances);
criterion_main!(benches);
