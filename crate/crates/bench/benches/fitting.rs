use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rocreg::estimators::{fit_cml, fit_eml, fit_nonparametric_aroc, fit_psl, ConcavityPolicy};
use rocreg::glm::compute_offsets;
use rocreg::simgen::{generate_sample, Scenario};
use rocreg::standardize::{fit_reference, standardize_sample, StandardizedSample};
use rocreg::BasisSpec;

fn prepared(n: usize) -> StandardizedSample {
    let mut scn = Scenario::default_two_population();
    for p in &mut scn.populations {
        p.n = n;
    }
    let sample = generate_sample(&scn, 7).expect("generate");
    let reference = fit_reference(&sample).expect("reference");
    standardize_sample(&sample, &reference).expect("standardize")
}

fn bench_fitting(c: &mut Criterion) {
    let basis = BasisSpec::polynomial(2);
    let mut group = c.benchmark_group("fit");
    for n in [100usize, 300] {
        let std = prepared(n);
        let offsets = compute_offsets(&std.sample).expect("offsets");
        group.bench_with_input(BenchmarkId::new("eml", n), &std, |b, std| {
            b.iter(|| fit_eml(std, &basis).unwrap());
        });
        group.bench_with_input(BenchmarkId::new("cml", n), &std, |b, std| {
            b.iter(|| fit_cml(std, &basis, &offsets, ConcavityPolicy::Warn).unwrap());
        });
        group.bench_with_input(BenchmarkId::new("psl", n), &std, |b, std| {
            let case_us = std.case_u();
            b.iter(|| fit_psl(&case_us, &basis, ConcavityPolicy::Warn).unwrap());
        });
        group.bench_with_input(BenchmarkId::new("aroc", n), &std, |b, std| {
            b.iter(|| fit_nonparametric_aroc(std).unwrap());
        });
    }
    group.finish();
}

fn bench_generation(c: &mut Criterion) {
    let scn = Scenario::default_two_population();
    c.bench_function("generate_sample_600", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            generate_sample(&scn, seed).unwrap()
        });
    });
}

criterion_group!(benches, bench_fitting, bench_generation);
criterion_main!(benches);
