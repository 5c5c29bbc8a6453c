use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use gapdecomp::bootstrap::{bootstrap_decomposition, BootstrapOptions};
use gapdecomp::ipw::{ipw_mediation, TrimmingPolicy};
use gapdecomp::lasso::{fit_cv, CvOptions, Family};
use gapdecomp::oaxaca::{oaxaca_decompose, OaxacaOptions};
use gapdecomp::probit::{fit_probit, ProbitOptions};
use gapdecomp::synth::RandomizedDgp;
use gapdecomp::{MediatorSet, RngState};
use gapdecomp_bench::mediation_sample;

fn decompositions(c: &mut Criterion) {
    let mut group = c.benchmark_group("decomposition");
    for n in [1_000, 10_000] {
        let (data, roles) = mediation_sample(n);
        group.bench_with_input(BenchmarkId::new("oaxaca", n), &n, |b, _| {
            b.iter(|| oaxaca_decompose(black_box(&data), &roles, MediatorSet::M1, OaxacaOptions::default()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("ipw", n), &n, |b, _| {
            b.iter(|| ipw_mediation(black_box(&data), &roles, MediatorSet::M1, &TrimmingPolicy::default()).unwrap())
        });
    }
    group.finish();
}

fn probit(c: &mut Criterion) {
    let (data, roles) = mediation_sample(10_000);
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    let g = data.values(&roles.group, &rows).unwrap();
    let mut cols = roles.controls.clone();
    cols.extend(roles.mediators_m1.iter().cloned());
    let design = data.matrix(&cols, &rows).unwrap().with_intercept();
    c.bench_function("probit_fit_10000x4", |b| {
        b.iter(|| fit_probit(black_box(&design), &g, ProbitOptions::default()).unwrap())
    });
}

fn bootstrap(c: &mut Criterion) {
    let (data, roles) = mediation_sample(2_000);
    let opts = BootstrapOptions::new(99, 1);
    let mut group = c.benchmark_group("bootstrap");
    group.sample_size(10);
    group.bench_function("ipw_b99_n2000", |b| {
        b.iter(|| {
            bootstrap_decomposition(
                |d| ipw_mediation(d, &roles, MediatorSet::M1, &TrimmingPolicy::default()),
                black_box(&data),
                &opts,
            )
            .unwrap()
        })
    });
    group.finish();
}

fn lasso(c: &mut Criterion) {
    let dgp = RandomizedDgp {
        n: 2000,
        n_covariates: 50,
        n_relevant: 5,
        tau: 2.0,
        coefficient: 1.0,
        treat_prob: 0.5,
        noise_sd: 1.0,
        seed: 3,
    };
    let data = dgp.generate().unwrap();
    let roles = dgp.roles();
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    let x = data.matrix(&roles.controls, &rows).unwrap();
    let y = data.values("y", &rows).unwrap();
    let d = data.values("d", &rows).unwrap();
    let mut group = c.benchmark_group("lasso_cv");
    group.sample_size(10);
    group.bench_function("gaussian_2000x50", |b| {
        b.iter(|| fit_cv(black_box(&x), &y, Family::Gaussian, CvOptions::default(), RngState::new(1)).unwrap())
    });
    group.bench_function("logistic_2000x50", |b| {
        b.iter(|| fit_cv(black_box(&x), &d, Family::Binomial, CvOptions::default(), RngState::new(1)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, decompositions, probit, bootstrap, lasso);
criterion_main!(benches);
