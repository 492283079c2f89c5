//! Origin–destination pair frequencies from split-budget reports.
//!
//! Each user perturbs both endpoints with a table built for half the budget.
//! The collector estimates the two marginals and then recovers the pair
//! frequencies with a non-negative Lasso. The design matrix stacks the two
//! marginal indicator blocks and, when pair reports are available, an identity
//! block whose response is the pair estimate `P̂ = A⁻¹ O A⁻ᵀ`, where `O` holds
//! the fraction of report pairs falling in `C_x × C_x'`. The marginals alone do
//! not identify the joint.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::LocationDomain;
use crate::error::{invalid, Error, Result};
use crate::estimation::{DistributionEstimate, Estimator, ReportCounter};
use crate::geo::EncodedLocation;
use crate::hadamard::HadamardPlan;
use crate::model::{user_rng, PerturbationModel};
use crate::srr::SchemeTable;
use crate::synth::sample_users;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OdPair {
    pub origin: EncodedLocation,
    pub destination: EncodedLocation,
}

/// Perturbs both endpoints independently with the half-budget table.
pub fn od_perturb<R: Rng + ?Sized>(
    table_half: &SchemeTable,
    domain: &LocationDomain,
    pair: &OdPair,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let a = domain.index_of(&pair.origin).ok_or(Error::NotInDomain)?;
    let b = domain.index_of(&pair.destination).ok_or(Error::NotInDomain)?;
    Ok((table_half.sample(a, rng), table_half.sample(b, rng)))
}

/// Index-level variant of [`od_perturb`].
pub fn od_perturb_at<M: PerturbationModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    a: usize,
    b: usize,
    rng: &mut R,
) -> (usize, usize) {
    (model.sample(a, rng), model.sample(b, rng))
}

/// Regression problem over candidate pairs in Gram form.
#[derive(Debug, Clone)]
pub struct OdModel {
    pub d: usize,
    /// Candidate pairs `(a, b)` after pruning.
    pub pairs: Vec<(usize, usize)>,
    /// Stacked response: origin marginal then destination marginal.
    pub y_vec: Vec<f64>,
    /// Whether the identity block over pairs is present.
    joint: bool,
    /// `Mᵀ y` per candidate pair.
    rhs: Vec<f64>,
    /// `‖y‖²`, for objective values.
    y_norm2: f64,
    pub lambda: f64,
}

pub const DEFAULT_LAMBDA: f64 = 1e-3;
pub const LAMBDA_GRID: [f64; 5] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1];
pub const LASSO_TOL: f64 = 1e-8;
pub const LASSO_MAX_SWEEPS: usize = 10_000;
pub const ZERO_CUTOFF: f64 = 1e-6;
/// Candidate counts up to this keep the Gram matrix in memory during the fit.
const DENSE_GRAM_LIMIT: usize = 2048;

fn check_marginals(o: &[f64], dd: &[f64]) -> Result<usize> {
    if o.len() != dd.len() {
        return Err(Error::DomainMismatch {
            expected: format!("{} locations", o.len()),
            found: format!("{} locations", dd.len()),
        });
    }
    Ok(o.len())
}

/// Pairs kept as candidates: dropped only when both endpoint marginals are below `1/(10n)`.
pub fn candidate_pairs(p_o: &[f64], p_d: &[f64], n: u64) -> Vec<(usize, usize)> {
    let thr = 1.0 / (10.0 * n.max(1) as f64);
    let d = p_o.len();
    let mut out = Vec::new();
    for a in 0..d {
        for b in 0..d {
            if !(p_o[a] < thr && p_d[b] < thr) {
                out.push((a, b));
            }
        }
    }
    out
}

impl OdModel {
    /// Stacked-marginal model over all `d²` pairs.
    pub fn from_marginals(p_o: &[f64], p_d: &[f64]) -> Result<Self> {
        let d = check_marginals(p_o, p_d)?;
        let pairs = (0..d).flat_map(|a| (0..d).map(move |b| (a, b))).collect();
        Ok(Self::assemble(p_o, p_d, pairs, None))
    }

    /// Model with the joint block. `pair_hat` is the `d×d` row-major pair estimate.
    pub fn with_pair_estimate(p_o: &[f64], p_d: &[f64], pair_hat: &[f64], pairs: Vec<(usize, usize)>) -> Result<Self> {
        let d = check_marginals(p_o, p_d)?;
        if pair_hat.len() != d * d {
            return Err(invalid("pair estimate does not match the domain"));
        }
        Ok(Self::assemble(p_o, p_d, pairs, Some(pair_hat)))
    }

    fn assemble(p_o: &[f64], p_d: &[f64], pairs: Vec<(usize, usize)>, pair_hat: Option<&[f64]>) -> Self {
        let d = p_o.len();
        let mut y_vec = p_o.to_vec();
        y_vec.extend_from_slice(p_d);
        let rhs = pairs.iter().map(|&(a, b)| p_o[a] + p_d[b] + pair_hat.map_or(0.0, |j| j[a * d + b])).collect();
        let y_norm2 =
            y_vec.iter().map(|v| v * v).sum::<f64>() + pair_hat.map_or(0.0, |j| j.iter().map(|v| v * v).sum());
        Self { d, pairs, y_vec, joint: pair_hat.is_some(), rhs, y_norm2, lambda: DEFAULT_LAMBDA }
    }

    pub fn has_joint_block(&self) -> bool {
        self.joint
    }

    /// Gram entry `(MᵀM)[i][j]`.
    pub fn gram(&self, i: usize, j: usize) -> f64 {
        let (a, b) = self.pairs[i];
        let (a2, b2) = self.pairs[j];
        let g = (a == a2) as u8 as f64 + (b == b2) as u8 as f64;
        if self.joint && i == j {
            g + 1.0
        } else {
            g
        }
    }

    /// Column of the stacked-marginal block for pair `i`, as the two row positions holding `+1`.
    pub fn marginal_rows(&self, i: usize) -> [usize; 2] {
        let (a, b) = self.pairs[i];
        [a, self.d + b]
    }

    /// `M w` restricted to the stacked-marginal block.
    pub fn predict_marginals(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.d];
        for (i, &wi) in w.iter().enumerate() {
            for r in self.marginal_rows(i) {
                out[r] += wi;
            }
        }
        out
    }

    /// `½‖y − Mw‖² + λ‖w‖₁`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let n = w.len();
        let mut quad = 0.0;
        let nz: Vec<usize> = (0..n).filter(|&i| w[i] != 0.0).collect();
        for &i in &nz {
            for &j in &nz {
                quad += w[i] * w[j] * self.gram(i, j);
            }
        }
        let lin: f64 = nz.iter().map(|&i| w[i] * self.rhs[i]).sum();
        0.5 * (self.y_norm2 - 2.0 * lin + quad) + self.lambda * w.iter().map(|v| v.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    /// Renormalized frequencies per candidate pair.
    pub w: Vec<f64>,
    /// Coefficients before zeroing and renormalization.
    pub raw: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after each sweep.
    pub objective: Vec<f64>,
}

/// Non-negative cyclic coordinate descent.
pub fn lasso_fit(model: &OdModel) -> LassoFit {
    lasso_fit_traced(model, false)
}

pub fn lasso_fit_traced(model: &OdModel, trace: bool) -> LassoFit {
    let p = model.pairs.len();
    let mut w = vec![0.0; p];
    // gradient term g = Mᵀy − MᵀM w
    let mut g = model.rhs.clone();
    let diag: Vec<f64> = (0..p).map(|i| model.gram(i, i)).collect();
    // symmetric, so column i is row i
    let dense: Option<Vec<f64>> =
        (p <= DENSE_GRAM_LIMIT).then(|| (0..p).flat_map(|i| (0..p).map(move |j| model.gram(i, j))).collect());
    let mut objective = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < LASSO_MAX_SWEEPS {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for i in 0..p {
            if diag[i] <= 0.0 {
                continue;
            }
            let new = ((w[i] * diag[i] + g[i] - model.lambda) / diag[i]).max(0.0);
            let delta = new - w[i];
            if delta != 0.0 {
                match &dense {
                    Some(m) => g.iter_mut().zip(&m[i * p..(i + 1) * p]).for_each(|(gj, mij)| *gj -= mij * delta),
                    None => g.iter_mut().enumerate().for_each(|(j, gj)| *gj -= model.gram(j, i) * delta),
                }
                w[i] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if trace {
            objective.push(model.objective(&w));
        }
        if max_change < LASSO_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("lasso stopped after {sweeps} sweeps without converging");
    }
    let raw = w.clone();
    let mut w: Vec<f64> = w.into_iter().map(|v| if v < ZERO_CUTOFF { 0.0 } else { v }).collect();
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|v| *v /= s);
    }
    LassoFit { w, raw, sweeps, converged, objective }
}

/// Estimated pair frequencies with their pairs, sorted by frequency descending.
#[derive(Debug, Clone)]
pub struct OdEstimate {
    pub pairs: Vec<((usize, usize), f64)>,
    pub lambda: f64,
    pub converged: bool,
    pub origin: DistributionEstimate,
    pub destination: DistributionEstimate,
}

impl OdEstimate {
    /// Dense `d×d` row-major frequency matrix.
    pub fn dense(&self, d: usize) -> Vec<f64> {
        let mut m = vec![0.0; d * d];
        for &((a, b), f) in &self.pairs {
            m[a * d + b] = f;
        }
        m
    }
}

/// Report-pair counts plus the two endpoint marginals.
pub struct OdReports {
    d: usize,
    pub origin: ReportCounter,
    pub destination: ReportCounter,
    pair_counts: Vec<u64>,
}

impl OdReports {
    pub fn new(d: usize) -> Self {
        Self { d, origin: ReportCounter::new(d), destination: ReportCounter::new(d), pair_counts: vec![0; d * d] }
    }

    pub fn add(&mut self, yo: usize, yd: usize) -> bool {
        if yo >= self.d || yd >= self.d {
            return false;
        }
        self.origin.add(yo);
        self.destination.add(yd);
        self.pair_counts[yo * self.d + yd] += 1;
        true
    }

    pub fn n(&self) -> u64 {
        self.origin.total()
    }

    pub fn pair_freq(&self) -> Vec<f64> {
        let n = self.n().max(1) as f64;
        self.pair_counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// `O[x][x']`: mass of `pair_freq` inside `C_x × C_x'`.
pub fn pair_observations(plan: &HadamardPlan, pair_freq: &[f64]) -> Vec<f64> {
    let d = plan.domain_size();
    let mut t = vec![0.0; d * d];
    for yd in 0..d {
        let col: Vec<f64> = (0..d).map(|yo| pair_freq[yo * d + yd]).collect();
        for (x, v) in plan.candidate_sums(&col).into_iter().enumerate() {
            t[x * d + yd] = v;
        }
    }
    (0..d).flat_map(|x| plan.candidate_sums(&t[x * d..(x + 1) * d])).collect()
}

/// Solves `A P Aᵀ = O` for `P`, one endpoint at a time.
pub fn pair_distribution(estimator: &Estimator, obs: &[f64]) -> Vec<f64> {
    let d = estimator.plan().domain_size();
    let mut x = vec![0.0; d * d];
    for j in 0..d {
        let col: Vec<f64> = (0..d).map(|i| obs[i * d + j]).collect();
        for (i, v) in estimator.solve_raw(&col).into_iter().enumerate() {
            x[i * d + j] = v;
        }
    }
    (0..d).flat_map(|i| estimator.solve_raw(&x[i * d..(i + 1) * d])).collect()
}

/// Builds the joint model from reports and fits it at `lambda`.
pub fn estimate_od(reports: &OdReports, estimator: &Estimator, lambda: f64) -> Result<OdEstimate> {
    let plan: &HadamardPlan = estimator.plan();
    let origin = estimator.estimate(&reports.origin.observe(plan));
    let destination = estimator.estimate(&reports.destination.observe(plan));
    let pairs = candidate_pairs(&origin.p_hat, &destination.p_hat, reports.n());
    let pair_hat = pair_distribution(estimator, &pair_observations(plan, &reports.pair_freq()));
    let mut od = OdModel::with_pair_estimate(&origin.p_hat, &destination.p_hat, &pair_hat, pairs)?;
    od.lambda = lambda;
    let fit = lasso_fit(&od);
    let mut pairs: Vec<((usize, usize), f64)> =
        od.pairs.iter().zip(&fit.w).filter(|(_, &w)| w > 0.0).map(|(&p, &w)| (p, w)).collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(OdEstimate { pairs, lambda, converged: fit.converged, origin, destination })
}

/// Picks λ from [`LAMBDA_GRID`]: fits on 90% of the reports and scores the
/// squared error of the implied report-pair frequencies on the other 10%.
pub fn select_lambda<M: PerturbationModel + ?Sized>(
    reports: &[(usize, usize)],
    model: &M,
    estimator: &Estimator,
) -> Result<f64> {
    let d = model.domain_size();
    let cut = reports.len() - reports.len() / 10;
    let (fit_part, hold) = reports.split_at(cut);
    if hold.is_empty() {
        return Ok(DEFAULT_LAMBDA);
    }
    let mut train = OdReports::new(d);
    fit_part.iter().for_each(|&(o, t)| {
        train.add(o, t);
    });
    let mut test = OdReports::new(d);
    hold.iter().for_each(|&(o, t)| {
        test.add(o, t);
    });
    let held = test.pair_freq();
    let q: Vec<Vec<f64>> = (0..d).map(|a| model.row(a)).collect();
    let mut best = (f64::INFINITY, DEFAULT_LAMBDA);
    for lambda in LAMBDA_GRID {
        let est = estimate_od(&train, estimator, lambda)?;
        let mut pred = vec![0.0; d * d];
        for &((a, b), f) in &est.pairs {
            for yo in 0..d {
                for yd in 0..d {
                    pred[yo * d + yd] += f * q[a][yo] * q[b][yd];
                }
            }
        }
        let err: f64 = pred.iter().zip(&held).map(|(p, h)| (p - h).powi(2)).sum();
        if err < best.0 {
            best = (err, lambda);
        }
    }
    Ok(best.1)
}

/// OD export: `hex_origin,hex_destination,frequency`, most frequent first.
pub fn format_od(domain: &LocationDomain, est: &OdEstimate) -> String {
    let mut s = String::new();
    for &((a, b), f) in &est.pairs {
        let _ = writeln!(s, "{},{},{}", domain.location(a).to_hex(), domain.location(b).to_hex(), f);
    }
    s
}

/// `pairs` distinct origin/destination pairs with Zipf(1.1) weights, `a ≠ b`.
pub fn synthetic_od_truth(d: usize, pairs: usize, seed: u64) -> Result<Vec<((usize, usize), f64)>> {
    if d < 2 || pairs == 0 || pairs > d * (d - 1) {
        return Err(invalid(format!("cannot draw {pairs} distinct pairs over {d} locations")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6f64);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(pairs);
    while out.len() < pairs {
        let (a, b) = (rng.random_range(0..d), rng.random_range(0..d));
        if a != b && seen.insert((a, b)) {
            out.push(((a, b), ((out.len() + 1) as f64).powf(-1.1)));
        }
    }
    let s: f64 = out.iter().map(|p| p.1).sum();
    out.iter_mut().for_each(|p| p.1 /= s);
    Ok(out)
}

/// One simulated collection round.
#[derive(Debug, Clone)]
pub struct OdTrial {
    pub estimate: OdEstimate,
    /// Empirical pair frequencies of the sampled users, dense `d×d`.
    pub truth: Vec<f64>,
    /// L1 distance between `truth` and the estimate.
    pub l1: f64,
}

/// Samples `n` users from `truth`, perturbs both endpoints with `model` and
/// fits the joint model. `lambda = None` picks it by holdout.
pub fn simulate_od<M: PerturbationModel + ?Sized>(
    truth: &[((usize, usize), f64)],
    n: usize,
    model: &M,
    estimator: &Estimator,
    seed: u64,
    lambda: Option<f64>,
) -> Result<OdTrial> {
    let d = model.domain_size();
    let weights: Vec<f64> = truth.iter().map(|p| p.1).collect();
    let users = sample_users(&weights, n, &mut user_rng(seed, u64::MAX));
    let mut emp = vec![0.0; d * d];
    let mut reports = Vec::with_capacity(n);
    for (u, &k) in users.iter().enumerate() {
        let (a, b) = truth[k].0;
        emp[a * d + b] += 1.0 / n as f64;
        reports.push(od_perturb_at(model, a, b, &mut user_rng(seed, u as u64)));
    }
    let lambda = match lambda {
        Some(l) => l,
        None => select_lambda(&reports, model, estimator)?,
    };
    let mut counts = OdReports::new(d);
    reports.iter().for_each(|&(o, t)| {
        counts.add(o, t);
    });
    let estimate = estimate_od(&counts, estimator, lambda)?;
    let l1 = estimate.dense(d).iter().zip(&emp).map(|(e, t)| (e - t).abs()).sum();
    Ok(OdTrial { estimate, truth: emp, l1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::partition_at;

    fn full_domain(len: u8) -> LocationDomain {
        LocationDomain::build((0..1u64 << len).map(|b| EncodedLocation::from_bits(b, len).unwrap()).collect()).unwrap()
    }

    fn marginals(d: usize, support: &[((usize, usize), f64)]) -> (Vec<f64>, Vec<f64>) {
        let mut o = vec![0.0; d];
        let mut t = vec![0.0; d];
        for &((a, b), w) in support {
            o[a] += w;
            t[b] += w;
        }
        (o, t)
    }

    #[test]
    fn single_pair_response() {
        let (o, t) = marginals(4, &[((1, 2), 1.0)]);
        let m = OdModel::from_marginals(&o, &t).unwrap();
        assert_eq!(m.y_vec.iter().filter(|&&v| v == 1.0).count(), 2);
        assert_eq!(m.y_vec.iter().filter(|&&v| v == 0.0).count(), 6);
    }

    #[test]
    fn column_sums_and_forward_product() {
        let d = 5;
        let m = OdModel::from_marginals(&vec![0.2; d], &vec![0.2; d]).unwrap();
        for i in 0..m.pairs.len() {
            let rows = m.marginal_rows(i);
            assert_ne!(rows[0], rows[1]);
            assert_eq!(m.gram(i, i), 2.0);
        }
        let support = [((0, 3), 0.5), ((4, 4), 0.3), ((2, 0), 0.2)];
        let mut w = vec![0.0; d * d];
        for &((a, b), v) in &support {
            w[a * d + b] = v;
        }
        let (o, t) = marginals(d, &support);
        let pred = m.predict_marginals(&w);
        for i in 0..d {
            assert!((pred[i] - o[i]).abs() < 1e-15);
            assert!((pred[d + i] - t[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_recovery_tiny() {
        let (o, t) = marginals(2, &[((1, 0), 1.0)]);
        let mut m = OdModel::from_marginals(&o, &t).unwrap();
        m.lambda = 0.0;
        let fit = lasso_fit(&m);
        for (i, &(a, b)) in m.pairs.iter().enumerate() {
            let want = if (a, b) == (1, 0) { 1.0 } else { 0.0 };
            assert!((fit.w[i] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_response_gives_zero() {
        let m = OdModel::from_marginals(&[0.0; 3], &[0.0; 3]).unwrap();
        let fit = lasso_fit(&m);
        assert!(fit.w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn objective_never_increases_and_shrinks_with_lambda() {
        let dom = full_domain(3);
        let parts = (0..8).map(|x| partition_at(&dom, x, &[3, 1, 0]).unwrap()).collect();
        let t = SchemeTable::from_partitions(&dom, parts, 6.0, 10.0).unwrap();
        let support = [((0, 5), 0.4), ((3, 3), 0.35), ((7, 1), 0.25)];
        let (o, dd) = marginals(8, &support);
        let mut p = vec![0.0; 64];
        for &((a, b), w) in &support {
            p[a * 8 + b] = w;
        }
        let q: Vec<Vec<f64>> = (0..8).map(|a| t.row(a)).collect();
        let mut f = vec![0.0; 64];
        for a in 0..8 {
            for b in 0..8 {
                for yo in 0..8 {
                    for yd in 0..8 {
                        f[yo * 8 + yd] += p[a * 8 + b] * q[a][yo] * q[b][yd];
                    }
                }
            }
        }
        let plan = HadamardPlan::new(8).unwrap();
        let est = Estimator::new(&plan, &t).unwrap();
        let p_hat = pair_distribution(&est, &pair_observations(&plan, &f));
        for (u, v) in p_hat.iter().zip(&p) {
            assert!((u - v).abs() < 1e-9, "{u} vs {v}");
        }
        let all: Vec<_> = (0..8).flat_map(|a| (0..8).map(move |b| (a, b))).collect();
        let mut prev_l1 = f64::INFINITY;
        for lambda in [1e-4, 1e-3, 1e-2, 1e-1] {
            let mut m = OdModel::with_pair_estimate(&o, &dd, &p_hat, all.clone()).unwrap();
            m.lambda = lambda;
            let fit = lasso_fit_traced(&m, true);
            assert!(fit.objective.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            let l1: f64 = fit.raw.iter().sum();
            assert!(l1 <= prev_l1 + 1e-12);
            prev_l1 = l1;
        }
    }

    #[test]
    fn noiseless_pair_estimate_gives_exact_support() {
        let support = [((0, 5), 0.4), ((3, 3), 0.35), ((7, 1), 0.25)];
        let (o, dd) = marginals(8, &support);
        let mut p = vec![0.0; 64];
        for &((a, b), w) in &support {
            p[a * 8 + b] = w;
        }
        let all: Vec<_> = (0..8).flat_map(|a| (0..8).map(move |b| (a, b))).collect();
        let mut m = OdModel::with_pair_estimate(&o, &dd, &p, all).unwrap();
        m.lambda = 1e-3;
        let fit = lasso_fit(&m);
        let found: Vec<_> = m.pairs.iter().zip(&fit.w).filter(|(_, &w)| w > 0.0).map(|(&p, _)| p).collect();
        assert_eq!(found, vec![(0, 5), (3, 3), (7, 1)]);
    }

    #[test]
    fn perturbation_uses_both_endpoints() {
        let dom = full_domain(3);
        let parts = (0..8).map(|x| partition_at(&dom, x, &[3, 0]).unwrap()).collect();
        let t = SchemeTable::from_partitions(&dom, parts, 1.0, 1.0).unwrap();
        let pair = OdPair { origin: dom.location(2), destination: dom.location(6) };
        let mut rng = user_rng(1, 0);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..2000 {
            seen.insert(od_perturb(&t, &dom, &pair, &mut rng).unwrap());
        }
        assert_eq!(seen.len(), 64);
    }

    #[test]
    fn synthetic_truth_is_distinct_and_normalized() {
        let t = synthetic_od_truth(8, 20, 3).unwrap();
        let set: std::collections::BTreeSet<_> = t.iter().map(|p| p.0).collect();
        assert_eq!(set.len(), 20);
        assert!(t.iter().all(|p| p.0 .0 != p.0 .1));
        assert!((t.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(synthetic_od_truth(3, 7, 0).is_err());
    }
}
