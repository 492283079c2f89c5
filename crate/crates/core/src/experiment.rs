//! End-to-end accuracy experiments: sample users, perturb, estimate, score.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::baseline::{mle_estimate, GrrScheme, HrScheme};
use crate::config::KeyValues;
use crate::domain::LocationDomain;
use crate::error::{invalid, Error, Result};
use crate::estimation::{observe, DistributionEstimate, Estimator};
use crate::hadamard::HadamardPlan;
use crate::metrics::{kl, knn_compare, knn_lists, l1, l2, MetricReport};
use crate::model::{user_rng, PerturbationModel};
use crate::srr::{precompute, SchemeTable};
use crate::synth::{histogram, sample_users, truth, TruthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mechanism {
    Srr,
    Grr,
    Hr,
    SrrMle,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [Mechanism::Srr, Mechanism::Grr, Mechanism::Hr, Mechanism::SrrMle];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Srr => "srr",
            Mechanism::Grr => "grr",
            Mechanism::Hr => "hr",
            Mechanism::SrrMle => "srr+mle",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if matches!(s.trim(), "olh-h" | "olh" | "pldp") {
            return Err(invalid(format!("mechanism `{s}` is not available (implemented: srr, grr, hr, srr+mle)")));
        }
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| invalid(format!("unknown mechanism `{s}` (expected srr, grr, hr or srr+mle)")))
    }
}

/// Settings of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mechanisms: Vec<Mechanism>,
    pub epsilons: Vec<f64>,
    pub n: usize,
    /// First trial seed; trials use `seed .. seed + trials`.
    pub seed: u64,
    pub trials: u64,
    pub dist: TruthSpec,
    /// Neighbour count for the k-NN scores; `None` skips them.
    pub knn: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mechanisms: vec![Mechanism::Srr, Mechanism::Grr],
            epsilons: vec![1.0, 3.0, 5.0],
            n: 100_000,
            seed: 1,
            trials: 1,
            dist: TruthSpec::Zipf(1.1),
            knn: None,
        }
    }
}

pub const EXPERIMENT_KEYS: [&str; 7] = ["mechanisms", "epsilons", "n", "seed", "trials", "dist", "knn"];

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() || self.epsilons.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(invalid("epsilons must be positive and finite"));
        }
        if self.n < 1 || self.trials < 1 {
            return Err(invalid("n and trials must be at least 1"));
        }
        if self.mechanisms.is_empty() {
            return Err(invalid("no mechanism selected"));
        }
        Ok(())
    }

    /// Applies the keys present in `kv` over `self`.
    pub fn merge_kv(mut self, kv: &KeyValues) -> Result<Self> {
        if let Some(m) = kv.get_list::<Mechanism>("mechanisms")? {
            self.mechanisms = m;
        }
        if let Some(e) = kv.get_list::<f64>("epsilons")? {
            self.epsilons = e;
        }
        if let Some(n) = kv.get("n")? {
            self.n = n;
        }
        if let Some(s) = kv.get("seed")? {
            self.seed = s;
        }
        if let Some(t) = kv.get("trials")? {
            self.trials = t;
        }
        if let Some(d) = kv.get("dist")? {
            self.dist = d;
        }
        if let Some(k) = kv.get("knn")? {
            self.knn = Some(k);
        }
        Ok(self)
    }
}

/// Mechanisms prepared once per privacy level and shared by all trials.
struct Prepared {
    srr: Option<(SchemeTable, Estimator)>,
    grr: Option<GrrScheme>,
    hr: Option<(HrScheme, Estimator)>,
}

fn prepare(
    domain: &LocationDomain,
    plan: &HadamardPlan,
    eps: f64,
    mechs: &[Mechanism],
    tables: &[SchemeTable],
) -> Result<Prepared> {
    let d = domain.size();
    let srr = if mechs.iter().any(|m| matches!(m, Mechanism::Srr | Mechanism::SrrMle)) {
        let t0 = Instant::now();
        let table = match tables.iter().find(|t| t.epsilon_target == eps) {
            Some(t) if t.domain_hash != domain.hash() => {
                return Err(Error::DomainMismatch { expected: domain.hash(), found: t.domain_hash.clone() })
            }
            Some(t) => t.clone(),
            None => precompute(domain, eps)?,
        };
        log::info!(
            "precomputed eps {eps}: m = {}, ln c = {:.4}, achieved {:.6} in {:.2?}",
            table.m,
            table.c.ln(),
            table.epsilon_achieved,
            t0.elapsed()
        );
        let est = Estimator::new(plan, &table)?;
        Some((table, est))
    } else {
        None
    };
    let grr = mechs.contains(&Mechanism::Grr).then(|| GrrScheme::new(d, eps)).transpose()?;
    let hr = if mechs.contains(&Mechanism::Hr) {
        let hr = HrScheme::new(plan, eps)?;
        let est = Estimator::new(plan, &hr)?;
        Some((hr, est))
    } else {
        None
    };
    Ok(Prepared { srr, grr, hr })
}

fn perturb_all<M: PerturbationModel + ?Sized>(model: &M, users: &[usize], seed: u64) -> Vec<usize> {
    let t0 = Instant::now();
    let out: Vec<usize> = users
        .iter()
        .enumerate()
        .map(|(u, &x)| {
            let mut rng = user_rng(seed, u as u64);
            model.sample(x, &mut rng)
        })
        .collect();
    log::debug!("client-side perturbation: {:.3e} s per user", t0.elapsed().as_secs_f64() / users.len().max(1) as f64);
    out
}

/// Estimate produced by `mech` for one trial.
fn run_one(prep: &Prepared, plan: &HadamardPlan, mech: Mechanism, users: &[usize], seed: u64) -> DistributionEstimate {
    match mech {
        Mechanism::Srr => {
            let (t, est) = prep.srr.as_ref().unwrap();
            est.estimate(&observe(plan, &perturb_all(t, users, seed)))
        }
        Mechanism::SrrMle => {
            let (t, _) = prep.srr.as_ref().unwrap();
            mle_estimate(&perturb_all(t, users, seed), t).estimate
        }
        Mechanism::Grr => {
            let g = prep.grr.as_ref().unwrap();
            g.estimate(&perturb_all(g, users, seed))
        }
        Mechanism::Hr => {
            let (h, est) = prep.hr.as_ref().unwrap();
            est.estimate(&observe(plan, &perturb_all(h, users, seed)))
        }
    }
}

/// Runs every (mechanism, ε, trial) combination. Rows come back in that
/// nesting order regardless of scheduling.
pub fn run_experiment(domain: &LocationDomain, cfg: &ExperimentConfig) -> Result<Vec<MetricReport>> {
    run_experiment_with(domain, cfg, &truth(domain.size(), cfg.dist, cfg.seed), &[])
}

/// As [`run_experiment`] with users drawn from `p` instead of `cfg.dist`.
/// SRR uses a table from `tables` when one was built for the same ε.
pub fn run_experiment_with(
    domain: &LocationDomain,
    cfg: &ExperimentConfig,
    p: &[f64],
    tables: &[SchemeTable],
) -> Result<Vec<MetricReport>> {
    cfg.validate()?;
    let d = domain.size();
    if p.len() != d {
        return Err(invalid("truth vector does not match the domain size"));
    }
    let plan = HadamardPlan::new(d)?;
    let prepared: HashMap<u64, Prepared> = cfg
        .epsilons
        .par_iter()
        .map(|&e| prepare(domain, &plan, e, &cfg.mechanisms, tables).map(|pr| (e.to_bits(), pr)))
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for &m in &cfg.mechanisms {
        for &e in &cfg.epsilons {
            for s in cfg.seed..cfg.seed + cfg.trials {
                jobs.push((m, e, s));
            }
        }
    }
    jobs.par_iter()
        .map(|&(mech, eps, seed)| {
            let mut rng = user_rng(seed, u64::MAX);
            let users = sample_users(p, cfg.n, &mut rng);
            let truth_hist = histogram(&users, d);
            let est = run_one(&prepared[&eps.to_bits()], &plan, mech, &users, seed);
            let knn = match cfg.knn {
                Some(k) => {
                    let t = knn_lists(domain, &truth_hist, cfg.n, k)?;
                    let e = knn_lists(domain, &est.p_hat, cfg.n, k)?;
                    Some((k, knn_compare(domain, &t, &e)?))
                }
                None => None,
            };
            Ok(MetricReport {
                mechanism: mech.name().to_string(),
                epsilon: eps,
                n: cfg.n as u64,
                seed,
                l1: l1(&truth_hist, &est.p_hat)?,
                l2: l2(&truth_hist, &est.p_hat)?,
                kl: kl(&truth_hist, &est.p_hat)?,
                knn,
            })
        })
        .collect()
}

/// Mean L1 per (mechanism, ε) over trials, in first-seen order.
pub fn mean_l1(rows: &[MetricReport]) -> Vec<(String, f64, f64)> {
    let mut out: Vec<(String, f64, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|o| o.0 == r.mechanism && o.1 == r.epsilon) {
            Some(o) => {
                o.2 += r.l1;
                o.3 += 1;
            }
            None => out.push((r.mechanism.clone(), r.epsilon, r.l1, 1)),
        }
    }
    out.into_iter().map(|(m, e, s, c)| (m, e, s / c as f64)).collect()
}
