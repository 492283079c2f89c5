//! Reference mechanisms: generalized randomized response, Hadamard response,
//! and an EM maximum-likelihood estimator for any discrete mechanism.

use rand::Rng;

use crate::domain::GroupPartition;
use crate::error::{invalid, Error, Result};
use crate::estimation::{project_to_simplex, DistributionEstimate, LOW_CONFIDENCE_N};
use crate::hadamard::HadamardPlan;
use crate::model::PerturbationModel;
use crate::srr::{alphas_from_sizes, StaircaseScheme};

/// Generalized randomized response over `d` values.
#[derive(Debug, Clone, PartialEq)]
pub struct GrrScheme {
    pub d: usize,
    pub epsilon: f64,
    pub p_keep: f64,
    pub p_flip: f64,
}

impl GrrScheme {
    pub fn new(d: usize, epsilon: f64) -> Result<Self> {
        if d < 2 {
            return Err(invalid("domain size must be at least 2"));
        }
        if !(epsilon >= 0.0) {
            return Err(invalid("epsilon must be non-negative"));
        }
        // written in terms of e^{-ε} so the ε → ∞ limit stays finite
        let t = (-epsilon).exp();
        let denom = 1.0 + (d as f64 - 1.0) * t;
        Ok(Self { d, epsilon, p_keep: 1.0 / denom, p_flip: t / denom })
    }

    /// Debiased frequencies from reports, clipped and renormalized.
    pub fn estimate(&self, reports: &[usize]) -> DistributionEstimate {
        let n = reports.iter().filter(|&&y| y < self.d).count() as u64;
        let mut f = vec![0.0; self.d];
        for &y in reports.iter().filter(|&&y| y < self.d) {
            f[y] += 1.0;
        }
        let nf = (n.max(1)) as f64;
        let raw: Vec<f64> = f.iter().map(|c| (c / nf - self.p_flip) / (self.p_keep - self.p_flip)).collect();
        finish(raw, n, 0.0)
    }
}

impl PerturbationModel for GrrScheme {
    fn domain_size(&self) -> usize {
        self.d
    }

    fn prob(&self, x: usize, y: usize) -> f64 {
        if x == y {
            self.p_keep
        } else {
            self.p_flip
        }
    }

    fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        if rng.random::<f64>() < self.p_keep {
            return x;
        }
        let y = rng.random_range(0..self.d - 1);
        if y >= x {
            y + 1
        } else {
            y
        }
    }
}

fn finish(raw: Vec<f64>, n: u64, residual_norm: f64) -> DistributionEstimate {
    let (p_hat, degenerate) = project_to_simplex(&raw);
    DistributionEstimate {
        p_hat,
        raw,
        n,
        residual_norm,
        condition: 1.0,
        used_fallback: false,
        low_confidence: degenerate || n < LOW_CONFIDENCE_N,
    }
}

/// Hadamard response: probability `c·a_x` inside `C_x`, `a_x` outside.
#[derive(Debug, Clone)]
pub struct HrScheme {
    plan: HadamardPlan,
    pub epsilon: f64,
    pub c: f64,
    high: Vec<f64>,
    low: Vec<f64>,
    set_size: Vec<usize>,
}

impl HrScheme {
    /// Calibrates one ratio `c` so that the worst probability ratio across all
    /// inputs is exactly `e^ε`.
    ///
    /// Candidate sets of different inputs differ in size once columns are
    /// unmapped, so `c` is generally a little below `e^ε`.
    pub fn new(plan: &HadamardPlan, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(invalid("epsilon must be positive"));
        }
        let d = plan.domain_size();
        let set_size: Vec<usize> = (0..d).map(|x| plan.candidate_set(x).len()).collect();
        if set_size.iter().any(|&k| k == 0 || k == d) {
            return Err(Error::Infeasible("a candidate set is empty or the whole domain".into()));
        }
        let (kmin, kmax) = (*set_size.iter().min().unwrap() as f64, *set_size.iter().max().unwrap() as f64);
        let df = d as f64;
        // outside probability 1/(c·k + d − k) is largest for the smallest set
        let ratio = |c: f64| c * (c * kmax + df - kmax) / (c * kmin + df - kmin);
        let target = epsilon.exp();
        let (mut lo, mut hi) = (1.0f64, target);
        if ratio(hi) <= target {
            lo = hi;
        } else {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if ratio(mid) <= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        Self::with_ratio(plan, lo, epsilon)
    }

    pub fn with_ratio(plan: &HadamardPlan, c: f64, epsilon: f64) -> Result<Self> {
        let d = plan.domain_size();
        let set_size: Vec<usize> = (0..d).map(|x| plan.candidate_set(x).len()).collect();
        let mut high = Vec::with_capacity(d);
        let mut low = Vec::with_capacity(d);
        for &k in &set_size {
            let p = alphas_from_sizes(&[k, d - k], c, d)?;
            high.push(p.alpha_max);
            low.push(p.alpha_min);
        }
        Ok(Self { plan: plan.clone(), epsilon, c, high, low, set_size })
    }

    pub fn plan(&self) -> &HadamardPlan {
        &self.plan
    }

    /// The same mechanism expressed as a two-level staircase over `{C_x, complement}`.
    pub fn as_staircase(&self, x: usize) -> Result<(StaircaseScheme, Vec<usize>)> {
        let d = self.plan.domain_size();
        let k = self.set_size[x];
        // staircase ranges are contiguous, so index the groups through a permutation
        let mut order = self.plan.candidate_set(x);
        order.extend((0..d).filter(|&y| !self.plan.contains(x, y)));
        let part = GroupPartition { input: x, beta: vec![1, 0], sizes: vec![k, d - k], ranges: vec![0..k, 0..d] };
        Ok((StaircaseScheme::new(part, self.c, d)?, order))
    }
}

impl PerturbationModel for HrScheme {
    fn domain_size(&self) -> usize {
        self.plan.domain_size()
    }

    fn prob(&self, x: usize, y: usize) -> f64 {
        if self.plan.contains(x, y) {
            self.high[x]
        } else {
            self.low[x]
        }
    }

    fn row(&self, x: usize) -> Vec<f64> {
        (0..self.domain_size()).map(|y| self.prob(x, y)).collect()
    }

    fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let d = self.domain_size();
        let k = self.set_size[x];
        let inside = rng.random::<f64>() < k as f64 * self.high[x];
        // rejection over the domain; each side holds at least a quarter of it for d ≥ 3
        loop {
            let y = rng.random_range(0..d);
            if self.plan.contains(x, y) == inside {
                return y;
            }
        }
    }
}

/// EM stopping rule.
pub const EM_MAX_ITERS: usize = 500;
pub const EM_REL_TOL: f64 = 1e-9;

/// Result of [`mle_estimate`], with the log-likelihood after every iteration.
#[derive(Debug, Clone)]
pub struct MleFit {
    pub estimate: DistributionEstimate,
    pub log_likelihood: Vec<f64>,
}

/// Maximum-likelihood distribution for `reports` under `model`, by EM from the uniform start.
pub fn mle_estimate<M: PerturbationModel + ?Sized>(reports: &[usize], model: &M) -> MleFit {
    let d = model.domain_size();
    let mut counts = vec![0.0; d];
    let mut n = 0u64;
    for &y in reports.iter().filter(|&&y| y < d) {
        counts[y] += 1.0;
        n += 1;
    }
    if n == 0 {
        return MleFit { estimate: finish(vec![1.0 / d as f64; d], 0, 0.0), log_likelihood: Vec::new() };
    }
    let observed: Vec<usize> = (0..d).filter(|&y| counts[y] > 0.0).collect();
    // q is only needed on observed columns
    let q: Vec<Vec<f64>> = (0..d)
        .map(|x| {
            let row = model.row(x);
            observed.iter().map(|&y| row[y]).collect()
        })
        .collect();
    let w: Vec<f64> = observed.iter().map(|&y| counts[y]).collect();
    let mut p = vec![1.0 / d as f64; d];
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITERS {
        let mix: Vec<f64> = (0..observed.len()).map(|k| (0..d).map(|x| p[x] * q[x][k]).sum()).collect();
        let ll: f64 = w.iter().zip(&mix).map(|(c, m)| c * m.ln()).sum();
        trace.push(ll);
        let next: Vec<f64> = (0..d)
            .map(|x| p[x] * (0..observed.len()).map(|k| w[k] * q[x][k] / mix[k]).sum::<f64>() / n as f64)
            .collect();
        p = next;
        if prev.is_finite() && ((ll - prev) / ll.abs().max(f64::MIN_POSITIVE)).abs() < EM_REL_TOL {
            break;
        }
        prev = ll;
    }
    MleFit { estimate: finish(p, n, 0.0), log_likelihood: trace }
}
