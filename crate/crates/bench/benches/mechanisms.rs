use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use staircase::estimation::{observe, Estimator};
use staircase::model::user_rng;
use staircase::od::{simulate_od, synthetic_od_truth, DEFAULT_LAMBDA};
use staircase::srr::precompute;
use staircase::synth::{city_domain, CitySpec};
use staircase::{HadamardPlan, PerturbationModel};
use staircase_bench::{fixture, reports};

fn perturb(c: &mut Criterion) {
    let f = fixture(374, 3.0);
    let mut g = c.benchmark_group("perturb_d374");
    let mut rng = user_rng(1, 0);
    g.bench_function("srr", |b| b.iter(|| f.srr.sample(black_box(17), &mut rng)));
    g.bench_function("grr", |b| b.iter(|| f.grr.sample(black_box(17), &mut rng)));
    g.bench_function("hr", |b| b.iter(|| f.hr.sample(black_box(17), &mut rng)));
    g.finish();
}

fn setup(c: &mut Criterion) {
    let mut g = c.benchmark_group("precompute");
    g.sample_size(10);
    for d in [64, 374] {
        let domain = city_domain(d, 1, &CitySpec::default()).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(d), &domain, |b, dom| b.iter(|| precompute(dom, 3.0).unwrap()));
    }
    g.finish();
}

fn estimate(c: &mut Criterion) {
    let f = fixture(374, 3.0);
    let reps = reports(&f.srr, 100_000, 1);
    let mut g = c.benchmark_group("estimate_d374");
    g.sample_size(20);
    g.bench_function("factorize", |b| b.iter(|| Estimator::new(&f.plan, &f.srr).unwrap()));
    let est = Estimator::new(&f.plan, &f.srr).unwrap();
    g.bench_function("observe_and_solve_1e5", |b| b.iter(|| est.estimate(&observe(&f.plan, black_box(&reps)))));
    g.finish();
}

fn od(c: &mut Criterion) {
    let domain = city_domain(32, 1, &CitySpec::default()).unwrap();
    let table = precompute(&domain, 3.0).unwrap();
    let plan = HadamardPlan::new(32).unwrap();
    let est = Estimator::new(&plan, &table).unwrap();
    let truth = synthetic_od_truth(32, 20, 1).unwrap();
    let mut g = c.benchmark_group("od_d32");
    g.sample_size(10);
    g.bench_function("simulate_2e4", |b| {
        b.iter(|| simulate_od(&truth, 20_000, &table, &est, 1, Some(DEFAULT_LAMBDA)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, perturb, setup, estimate, od);
criterion_main!(benches);
