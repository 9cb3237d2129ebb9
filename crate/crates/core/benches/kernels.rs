//! Data-parallel kernels, rayon against the sequential twins. The same
//! inner loops run in both policies (each output element is reduced inside
//! its own task), so the comparison isolates the scheduling overhead /
//! speedup of the parallel path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use nullcoord_core::psdo::{ModeBasis, OpMatrix, Symbol};
use nullcoord_core::TorusFunction;

fn bench_nonuniform_eval(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = TorusFunction::random(1, 24, 24, 0.85, 1.0, &mut rng);
    let tau = std::f64::consts::TAU;
    let points: Vec<Vec<f64>> = (0..512)
        .map(|k| vec![(0.013 * k as f64) % tau, (0.029 * k as f64) % tau])
        .collect();
    let mut group = c.benchmark_group("nonuniform_eval_512pts");
    group.bench_with_input(BenchmarkId::new("parallel", 512), &points, |b, pts| {
        b.iter(|| f.eval_many(pts))
    });
    group.bench_with_input(BenchmarkId::new("sequential", 512), &points, |b, pts| {
        b.iter(|| f.eval_many_seq(pts))
    });
    group.finish();
}

fn bench_matmul(c: &mut Criterion) {
    let basis = ModeBasis::new(1, 3, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = TorusFunction::random(1, 3, 3, 0.7, 0.5, &mut rng);
    let a = OpMatrix::multiplication(&g, basis);
    let sym = Symbol::new(
        14,
        (-14i64..=14)
            .map(|xi| g.scale(1.0 / ((xi * xi) as f64 + 1.0).sqrt()))
            .collect(),
    )
    .unwrap();
    let b = OpMatrix::quantize(&sym, basis).unwrap();
    let dim = basis.dim();
    let mut group = c.benchmark_group("opmatrix_matmul");
    group.bench_with_input(BenchmarkId::new("parallel", dim), &(&a, &b), |bch, (a, b)| {
        bch.iter(|| a.matmul(b))
    });
    group.bench_with_input(BenchmarkId::new("sequential", dim), &(&a, &b), |bch, (a, b)| {
        bch.iter(|| a.matmul_seq(b))
    });
    group.finish();
}

fn bench_dioph_scan(c: &mut Criterion) {
    use nullcoord_core::dioph::{check_diophantine, FrequencyVector};
    let w = FrequencyVector::golden(1, 0.01);
    c.bench_function("dioph_scan_cutoff_64", |b| {
        b.iter(|| check_diophantine(&w, 1.0, 64))
    });
    let _ = Complex64::new(0.0, 0.0);
}

criterion_group!(benches, bench_nonuniform_eval, bench_matmul, bench_dioph_scan);
criterion_main!(benches);
