//! Server-side distribution estimation from perturbed reports.
//!
//! For every input `x` the observed share of reports falling in its candidate
//! set satisfies `p(C_x) = Σ_{x'} p(x') · Σ_{y∈C_x} q(y|x')`, a square linear
//! system in the unknown distribution. It is solved by LU and projected back to
//! the simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hadamard::HadamardPlan;
use crate::linalg::{mat_vec, normal_equations, LuFactors};
use crate::model::PerturbationModel;

/// Pivot magnitude below which the direct solve is abandoned.
pub const PIVOT_FLOOR: f64 = 1e-12;
/// Ridge added to the normal equations on fallback.
pub const TIKHONOV: f64 = 1e-8;
/// Epochs with fewer reports are flagged.
pub const LOW_CONFIDENCE_N: u64 = 100;

/// Candidate-set frequencies `p(C_x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedFrequencies {
    pub freq: Vec<f64>,
    pub n: u64,
    pub rejected: u64,
}

/// Streaming per-index report counter.
#[derive(Debug, Clone)]
pub struct ReportCounter {
    counts: Vec<u64>,
    rejected: u64,
}

impl ReportCounter {
    pub fn new(d: usize) -> Self {
        Self { counts: vec![0; d], rejected: 0 }
    }

    pub fn from_counts(counts: Vec<u64>, rejected: u64) -> Self {
        Self { counts, rejected }
    }

    /// Records one report; out-of-range indices are counted as rejected.
    pub fn add(&mut self, y: usize) -> bool {
        match self.counts.get_mut(y) {
            Some(c) => {
                *c += 1;
                true
            }
            None => {
                self.rejected += 1;
                false
            }
        }
    }

    pub fn merge(&mut self, other: &ReportCounter) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.rejected += other.rejected;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn observe(&self, plan: &HadamardPlan) -> ObservedFrequencies {
        let n = self.total();
        let v: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        let sums = plan.candidate_sums(&v);
        let freq = if n == 0 { vec![0.0; sums.len()] } else { sums.into_iter().map(|s| s / n as f64).collect() };
        ObservedFrequencies { freq, n, rejected: self.rejected }
    }
}

/// Empirical candidate-set frequencies of a batch of reports.
pub fn observe(plan: &HadamardPlan, submissions: &[usize]) -> ObservedFrequencies {
    let mut counter = ReportCounter::new(plan.domain_size());
    for &y in submissions {
        counter.add(y);
    }
    counter.observe(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionEstimate {
    /// Probability vector after clipping and renormalization.
    pub p_hat: Vec<f64>,
    /// Solution of the linear system before post-processing.
    pub raw: Vec<f64>,
    pub n: u64,
    pub residual_norm: f64,
    pub condition: f64,
    pub used_fallback: bool,
    pub low_confidence: bool,
}

/// Clips negatives and renormalizes; an all-zero vector becomes uniform.
pub fn project_to_simplex(raw: &[f64]) -> (Vec<f64>, bool) {
    let mut p: Vec<f64> = raw.iter().map(|&v| if v.is_finite() { v.max(0.0) } else { 0.0 }).collect();
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter_mut().for_each(|v| *v /= s);
        (p, false)
    } else {
        let u = 1.0 / p.len() as f64;
        (vec![u; p.len()], true)
    }
}

/// Coefficient matrix `A[x][x'] = Σ_{y∈C_x} q(y|x')`, row-major.
pub fn coefficient_matrix<M: PerturbationModel + ?Sized>(plan: &HadamardPlan, model: &M) -> Vec<f64> {
    let d = plan.domain_size();
    assert_eq!(model.domain_size(), d, "model and plan disagree on the domain size");
    let mut a = vec![0.0; d * d];
    for xp in 0..d {
        let col = plan.candidate_sums(&model.row(xp));
        for (x, v) in col.into_iter().enumerate() {
            a[x * d + xp] = v;
        }
    }
    a
}

/// Solver state reusable across epochs for one (plan, mechanism) pair.
#[derive(Debug, Clone)]
pub struct Estimator {
    plan: HadamardPlan,
    matrix: Vec<f64>,
    lu: Option<LuFactors>,
    fallback: Option<LuFactors>,
}

impl Estimator {
    pub fn new<M: PerturbationModel + ?Sized>(plan: &HadamardPlan, model: &M) -> Result<Self> {
        let d = plan.domain_size();
        let matrix = coefficient_matrix(plan, model);
        let lu = LuFactors::new(matrix.clone(), d);
        if !lu.is_singular(PIVOT_FLOOR) {
            return Ok(Self { plan: plan.clone(), matrix, lu: Some(lu), fallback: None });
        }
        let (ata, _) = normal_equations(&matrix, d, &vec![0.0; d], TIKHONOV);
        let reg = LuFactors::new(ata, d);
        if reg.is_singular(PIVOT_FLOOR * TIKHONOV) {
            return Err(Error::Singular { min_pivot: reg.min_pivot, condition: reg.pivot_ratio() });
        }
        log::warn!("coefficient matrix is near singular (min pivot {:e}); using ridge normal equations", lu.min_pivot);
        Ok(Self { plan: plan.clone(), matrix, lu: None, fallback: Some(reg) })
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn plan(&self) -> &HadamardPlan {
        &self.plan
    }

    /// Solves for the raw (unprojected) distribution.
    pub fn solve_raw(&self, observed: &[f64]) -> Vec<f64> {
        let d = self.plan.domain_size();
        match (&self.lu, &self.fallback) {
            (Some(lu), _) => lu.solve(observed),
            (None, Some(reg)) => {
                let (_, atb) = normal_equations(&self.matrix, d, observed, 0.0);
                reg.solve(&atb)
            }
            _ => unreachable!(),
        }
    }

    pub fn estimate(&self, observed: &ObservedFrequencies) -> DistributionEstimate {
        let d = self.plan.domain_size();
        let raw = self.solve_raw(&observed.freq);
        let fitted = mat_vec(&self.matrix, d, &raw);
        let residual_norm = fitted.iter().zip(&observed.freq).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let (p_hat, degenerate) = project_to_simplex(&raw);
        let condition = self.lu.as_ref().or(self.fallback.as_ref()).map(|l| l.pivot_ratio()).unwrap_or(f64::INFINITY);
        DistributionEstimate {
            p_hat,
            raw,
            n: observed.n,
            residual_norm,
            condition,
            used_fallback: self.lu.is_none(),
            low_confidence: degenerate || observed.n < LOW_CONFIDENCE_N,
        }
    }
}

/// One-shot estimate; builds the coefficient matrix on every call.
pub fn estimate<M: PerturbationModel + ?Sized>(
    plan: &HadamardPlan,
    model: &M,
    observed: &ObservedFrequencies,
) -> Result<DistributionEstimate> {
    Ok(Estimator::new(plan, model)?.estimate(observed))
}

/// Terms of the error bounds: `γ = min_x Σ_{y∈C_x} q(y|x)` and `μ = min q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    pub gamma: f64,
    pub mu: f64,
    pub d: usize,
}

impl BoundTerms {
    pub fn new<M: PerturbationModel + ?Sized>(model: &M, plan: &HadamardPlan) -> Self {
        let d = plan.domain_size();
        let mut gamma = f64::INFINITY;
        let mut mu = f64::INFINITY;
        for x in 0..d {
            let row = model.row(x);
            let in_set: f64 = (0..d).filter(|&y| plan.contains(x, y)).map(|y| row[y]).sum();
            gamma = gamma.min(in_set);
            mu = row.iter().cloned().fold(mu, f64::min);
        }
        Self { gamma, mu, d }
    }

    /// `2γ − d·μ`; the bounds only exist when this is positive.
    pub fn margin(&self) -> f64 {
        2.0 * self.gamma - self.d as f64 * self.mu
    }

    /// Bound on the expected L1 error; `None` in the degenerate regime.
    pub fn l1(&self, n: u64) -> Option<f64> {
        let m = self.margin();
        (m > 0.0 && n > 0).then(|| 2.0 * self.d as f64 / ((n as f64).sqrt() * m))
    }

    /// Bound on the expected L2 error; `None` in the degenerate regime.
    pub fn l2(&self, n: u64) -> Option<f64> {
        let m = self.margin();
        (m > 0.0 && n > 0).then(|| 2.0 * (self.d as f64).sqrt() / ((n as f64).sqrt() * m))
    }
}

pub fn l1_bound<M: PerturbationModel + ?Sized>(model: &M, plan: &HadamardPlan, n: u64) -> Option<f64> {
    BoundTerms::new(model, plan).l1(n)
}

pub fn l2_bound<M: PerturbationModel + ?Sized>(model: &M, plan: &HadamardPlan, n: u64) -> Option<f64> {
    BoundTerms::new(model, plan).l2(n)
}
