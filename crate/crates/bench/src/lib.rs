//! Fixtures shared by the benchmarks.

use staircase::baseline::{GrrScheme, HrScheme};
use staircase::model::user_rng;
use staircase::srr::{precompute, SchemeTable};
use staircase::synth::{city_domain, sample_users, truth, CitySpec, TruthSpec};
use staircase::{HadamardPlan, LocationDomain, PerturbationModel};

pub struct Fixture {
    pub domain: LocationDomain,
    pub plan: HadamardPlan,
    pub srr: SchemeTable,
    pub grr: GrrScheme,
    pub hr: HrScheme,
}

pub fn fixture(d: usize, epsilon: f64) -> Fixture {
    let domain = city_domain(d, 1, &CitySpec::default()).expect("synthetic domain");
    let plan = HadamardPlan::new(d).expect("plan");
    let srr = precompute(&domain, epsilon).expect("table");
    let grr = GrrScheme::new(d, epsilon).expect("grr");
    let hr = HrScheme::new(&plan, epsilon).expect("hr");
    Fixture { domain, plan, srr, grr, hr }
}

/// Perturbed reports of `n` Zipf users under `model`.
pub fn reports<M: PerturbationModel + ?Sized>(model: &M, n: usize, seed: u64) -> Vec<usize> {
    let p = truth(model.domain_size(), TruthSpec::Zipf(1.1), seed);
    let users = sample_users(&p, n, &mut user_rng(seed, u64::MAX));
    users.iter().enumerate().map(|(u, &x)| model.sample(x, &mut user_rng(seed, u as u64))).collect()
}
