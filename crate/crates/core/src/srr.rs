//! Staircase randomized response: probabilities, privacy accounting and sampling.
//!
//! For an input `x` with output groups `G_1(x) .. G_m(x)` (nearest first) every
//! member of group `j` is reported with probability `α_j(x)`. The probabilities
//! drop by a constant step `Δ(x)` from group to group and the first is `c` times
//! the last, for one global ratio `c`. Normalization then pins
//!
//! ```text
//! α_min(x) = (m-1) / ((m-1)·d·c − (c-1)·Σ_{j=2..m} (j-1)·|G_j(x)|)
//! ```
//!
//! and the achieved privacy level is the largest `ln(α_max(x) / α_min(x'))`.

use std::f64::consts::E;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{max_feasible_m, optimize_beta_at, partition_at, AnnealConfig, GroupPartition, LocationDomain};
use crate::error::{invalid, Error, Result};
use crate::model::PerturbationModel;

/// Probabilities of one staircase.
#[derive(Debug, Clone, PartialEq)]
pub struct StaircaseProbs {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub delta: f64,
    /// `α_1 .. α_m`, decreasing.
    pub alphas: Vec<f64>,
}

/// Derives the staircase probabilities from group sizes, the ratio `c` and the domain size.
pub fn alphas_from_sizes(sizes: &[usize], c: f64, d: usize) -> Result<StaircaseProbs> {
    let m = sizes.len();
    if m < 2 {
        return Err(invalid("need at least two groups"));
    }
    if !(c >= 1.0) || !c.is_finite() {
        return Err(invalid(format!("ratio c = {c} must be a finite value >= 1")));
    }
    if sizes.contains(&0) {
        return Err(invalid("group sizes must be positive"));
    }
    if sizes.iter().sum::<usize>() != d {
        return Err(invalid("group sizes must sum to the domain size"));
    }
    let tail: f64 = sizes.iter().enumerate().map(|(j, &s)| (j * s) as f64).sum();
    let mf = (m - 1) as f64;
    let denom = mf * d as f64 * c - (c - 1.0) * tail;
    if !(denom > 0.0) {
        return Err(Error::Infeasible(format!("non-positive normalizer {denom} for c = {c}")));
    }
    let alpha_min = mf / denom;
    let alpha_max = alpha_min * c;
    let delta = alpha_min * (c - 1.0) / mf;
    let alphas = (0..m).map(|j| alpha_max - j as f64 * delta).collect();
    Ok(StaircaseProbs { alpha_min, alpha_max, delta, alphas })
}

/// Staircase for one input location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaircaseScheme {
    pub partition: GroupPartition,
    pub alphas: Vec<f64>,
    pub delta: f64,
    /// Cumulative probability of picking groups `0..=j`.
    group_cdf: Vec<f64>,
}

impl StaircaseScheme {
    pub fn new(partition: GroupPartition, c: f64, d: usize) -> Result<Self> {
        let probs = alphas_from_sizes(&partition.sizes, c, d)?;
        let mut acc = 0.0;
        let group_cdf = partition
            .sizes
            .iter()
            .zip(&probs.alphas)
            .map(|(&s, a)| {
                acc += s as f64 * a;
                acc
            })
            .collect();
        Ok(Self { partition, alphas: probs.alphas, delta: probs.delta, group_cdf })
    }

    pub fn m(&self) -> usize {
        self.alphas.len()
    }

    pub fn alpha_max(&self) -> f64 {
        self.alphas[0]
    }

    pub fn alpha_min(&self) -> f64 {
        *self.alphas.last().unwrap()
    }

    pub fn prob(&self, y: usize) -> f64 {
        self.alphas[self.partition.group_of(y)]
    }

    /// Two-stage draw: a group by inverse CDF, then a uniform member of it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.group_cdf.last().unwrap();
        let j = self.group_cdf.iter().position(|&c| u < c).unwrap_or(self.m() - 1);
        let [a, b] = self.partition.group_blocks(j);
        let k = rng.random_range(0..a.len() + b.len());
        if k < a.len() {
            a.start + k
        } else {
            b.start + (k - a.len())
        }
    }
}

/// Precomputed staircases for every input of a domain.
#[derive(Debug, Clone)]
pub struct SchemeTable {
    pub domain_hash: String,
    pub epsilon_target: f64,
    pub c: f64,
    pub m: usize,
    pub epsilon_achieved: f64,
    pub schemes: Vec<StaircaseScheme>,
}

impl SchemeTable {
    /// Builds a table from fixed partitions and a ratio.
    pub fn from_partitions(
        domain: &LocationDomain,
        partitions: Vec<GroupPartition>,
        c: f64,
        epsilon_target: f64,
    ) -> Result<Self> {
        if partitions.len() != domain.size() {
            return Err(invalid("need one partition per domain location"));
        }
        let m = partitions[0].m();
        let d = domain.size();
        let schemes = partitions.into_iter().map(|p| StaircaseScheme::new(p, c, d)).collect::<Result<Vec<_>>>()?;
        let mut t = Self { domain_hash: domain.hash(), epsilon_target, c, m, epsilon_achieved: 0.0, schemes };
        t.epsilon_achieved = epsilon_of(&t);
        Ok(t)
    }

    pub fn size(&self) -> usize {
        self.schemes.len()
    }

    pub fn scheme(&self, x: usize) -> &StaircaseScheme {
        &self.schemes[x]
    }

    /// `min_x α_min(x)`.
    pub fn mu(&self) -> f64 {
        self.schemes.iter().map(|s| s.alpha_min()).fold(f64::INFINITY, f64::min)
    }
}

impl PerturbationModel for SchemeTable {
    fn domain_size(&self) -> usize {
        self.schemes.len()
    }

    fn prob(&self, x: usize, y: usize) -> f64 {
        self.schemes[x].prob(y)
    }

    fn row(&self, x: usize) -> Vec<f64> {
        let s = &self.schemes[x];
        let mut row = vec![s.alpha_min(); self.size()];
        for j in (0..s.m() - 1).rev() {
            for y in s.partition.ranges[j].clone() {
                row[y] = s.alphas[j];
            }
        }
        row
    }

    fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        self.schemes[x].sample(rng)
    }
}

/// Achieved privacy level, `max_{x,x'} ln(α_max(x) / α_min(x'))`, from the stored probabilities.
pub fn epsilon_of(table: &SchemeTable) -> f64 {
    let hi = table.schemes.iter().map(|s| s.alpha_max()).fold(f64::NEG_INFINITY, f64::max);
    let lo = table.schemes.iter().map(|s| s.alpha_min()).fold(f64::INFINITY, f64::min);
    (hi / lo).ln()
}

/// Which groups enter the tail sum of the closed-form privacy bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailRange {
    /// `j = 2 .. m`, consistent with the normalization.
    ThroughLast,
    /// `j = 2 .. m-1`.
    ExcludingLast,
}

/// Closed-form privacy bound `max_{x,x'} ln(c · N(x') / N(x))` with `N` the normalizer.
/// Reported for diagnostics next to [`epsilon_of`].
pub fn epsilon_closed_form(table: &SchemeTable, range: TailRange) -> f64 {
    let d = table.size() as f64;
    let c = table.c;
    let normalizer = |p: &GroupPartition| {
        let m = p.m();
        let upto = match range {
            TailRange::ThroughLast => m,
            TailRange::ExcludingLast => m - 1,
        };
        let tail: f64 = (1..upto).map(|j| (j * p.sizes[j]) as f64).sum();
        (m - 1) as f64 * d * c - (c - 1.0) * tail
    };
    let ns: Vec<f64> = table.schemes.iter().map(|s| normalizer(&s.partition)).collect();
    let max = ns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ns.iter().cloned().fold(f64::INFINITY, f64::min);
    (c * max / min).ln()
}

/// Group count minimizing the mutual-information bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalM {
    /// Unrounded stationary point.
    pub real: f64,
    pub m: usize,
    /// Set when the stationary point fell below 2.
    pub clamped: bool,
}

/// Stationary point `m* = 2(c·d − e^{1+ln c}) / ((c−1)·d)`, rounded to the neighbour with the
/// smaller worst-case bound (ties to the smaller `m`).
pub fn optimal_m(c: f64, d: usize) -> Result<OptimalM> {
    if !(c > 1.0) {
        return Err(invalid("optimal m needs c > 1"));
    }
    let df = d as f64;
    if df <= E {
        return Err(invalid("optimal m needs d > e"));
    }
    let real = 2.0 * (c * df - (1.0 + c.ln()).exp()) / ((c - 1.0) * df);
    if real < 2.0 {
        return Ok(OptimalM { real, m: 2, clamped: true });
    }
    let lo = (real.floor() as usize).max(2);
    let hi = (real.ceil() as usize).max(2);
    let score = |m: usize| mi_bound_worst_case(m as f64, c, d).unwrap_or(f64::INFINITY);
    let m = if score(hi) < score(lo) { hi } else { lo };
    Ok(OptimalM { real, m, clamped: false })
}

/// Mutual-information upper bound `ln d + d·α_min·ln α_max` for one staircase.
pub fn mi_bound(scheme: &StaircaseScheme, d: usize) -> f64 {
    let df = d as f64;
    df.ln() + df * scheme.alpha_min() * scheme.alpha_max().ln()
}

/// The bound with every group taken at size `d`, which makes it a function of `m` alone:
/// `α_min = 1 / (d·(c − (c−1)·m/2))`. `None` where that normalizer is not positive.
pub fn mi_bound_worst_case(m: f64, c: f64, d: usize) -> Option<f64> {
    let df = d as f64;
    let g = c - (c - 1.0) * m / 2.0;
    if !(g > 0.0) {
        return None;
    }
    let a = 1.0 / (df * g);
    Some(df.ln() + df * a * (c * a).ln())
}

/// Tolerance on `ln c` for the ratio search.
pub const LOG_C_TOLERANCE: f64 = 1e-6;

/// Outcome of a ratio search over fixed partitions.
#[derive(Debug, Clone)]
pub struct RatioSearch {
    pub c: f64,
    pub epsilon: f64,
    /// `(c, ε(c))` at every probe, in probe order.
    pub trajectory: Vec<(f64, f64)>,
}

/// Privacy level of fixed partitions at ratio `c`, from the extreme tail sums.
pub fn epsilon_for_partitions(partitions: &[GroupPartition], c: f64, d: usize) -> f64 {
    let (lo, hi) = partitions
        .iter()
        .map(|p| p.weighted_tail())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
    let m = partitions[0].m();
    let mf = (m - 1) as f64;
    let n = |t: f64| mf * d as f64 * c - (c - 1.0) * t;
    // largest α_min sits at the largest tail sum
    (c * n(lo) / n(hi)).ln()
}

/// Largest `c ∈ (1, e^ε]` whose partitions satisfy the target, by bisection on `ln c`.
pub fn solve_c_fixed(epsilon_target: f64, partitions: &[GroupPartition], d: usize) -> Result<RatioSearch> {
    if !(epsilon_target > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    if partitions.is_empty() {
        return Err(invalid("no partitions"));
    }
    let eps = |log_c: f64| epsilon_for_partitions(partitions, log_c.exp(), d);
    let mut trajectory = Vec::new();
    let top = eps(epsilon_target);
    trajectory.push((epsilon_target.exp(), top));
    if top <= epsilon_target {
        return Ok(RatioSearch { c: epsilon_target.exp(), epsilon: top, trajectory });
    }
    let (mut lo, mut hi) = (0.0f64, epsilon_target);
    while hi - lo > LOG_C_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let e = eps(mid);
        trajectory.push((mid.exp(), e));
        if e <= epsilon_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo <= 0.0 {
        return Err(Error::Infeasible(format!("no ratio c > 1 reaches epsilon {epsilon_target}")));
    }
    let mut sorted = trajectory.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(sorted.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-12), "privacy level must be non-decreasing in c");
    Ok(RatioSearch { c: lo.exp(), epsilon: eps(lo), trajectory })
}

/// Options for [`precompute_with`].
#[derive(Debug, Clone)]
pub struct PrecomputeOptions {
    /// Fix the group count instead of deriving it from the ratio.
    pub m: Option<usize>,
    pub max_rounds: usize,
    pub anneal: AnnealConfig,
}

impl Default for PrecomputeOptions {
    fn default() -> Self {
        Self { m: None, max_rounds: 6, anneal: AnnealConfig::default() }
    }
}

fn optimize_all(domain: &LocationDomain, m: usize, c: f64, anneal: &AnnealConfig) -> Result<Vec<GroupPartition>> {
    (0..domain.size())
        .into_par_iter()
        .map(|x| {
            let cfg = AnnealConfig { seed: anneal.seed ^ x as u64, ..*anneal };
            optimize_beta_at(domain, x, m, c, &cfg).map(|s| s.partition)
        })
        .collect()
}

/// Largest ratio for a fixed group count; partitions are re-optimized at each ratio until stable.
pub fn solve_c(epsilon_target: f64, m: usize, domain: &LocationDomain) -> Result<f64> {
    let opts = PrecomputeOptions { m: Some(m), ..Default::default() };
    Ok(precompute_with(domain, epsilon_target, &opts)?.c)
}

/// Builds the full table for a privacy target: alternates group-count choice,
/// per-input threshold optimization and the ratio search until they agree.
pub fn precompute(domain: &LocationDomain, epsilon_target: f64) -> Result<SchemeTable> {
    precompute_with(domain, epsilon_target, &PrecomputeOptions::default())
}

pub fn precompute_with(domain: &LocationDomain, epsilon_target: f64, opts: &PrecomputeOptions) -> Result<SchemeTable> {
    if !(epsilon_target > 0.0) || !epsilon_target.is_finite() {
        return Err(invalid("epsilon must be positive and finite"));
    }
    let d = domain.size();
    let m_cap = max_feasible_m(domain);
    if m_cap < 2 {
        return Err(Error::Infeasible("domain has fewer than two LCP strata".into()));
    }
    let choose_m = |c: f64| -> Result<usize> {
        let m = match opts.m {
            Some(m) => m,
            None => optimal_m(c, d)?.m,
        };
        if opts.m.is_some() && m > m_cap {
            return Err(Error::Infeasible(format!("m = {m} exceeds the {m_cap} LCP strata available; lower m")));
        }
        Ok(m.min(m_cap))
    };
    let mut c = epsilon_target.exp();
    let mut best: Option<(Vec<GroupPartition>, RatioSearch)> = None;
    for round in 0..opts.max_rounds.max(1) {
        let m = choose_m(c)?;
        let parts = optimize_all(domain, m, c, &opts.anneal)?;
        let found = solve_c_fixed(epsilon_target, &parts, d)?;
        log::debug!("round {round}: m = {m}, c {c:.6} -> {:.6}", found.c);
        let settled = (found.c.ln() - c.ln()).abs() < LOG_C_TOLERANCE;
        c = found.c;
        if best.as_ref().is_none_or(|(_, b)| found.c > b.c) {
            best = Some((parts, found));
        }
        if settled {
            break;
        }
    }
    let (parts, found) = best.expect("at least one round runs");
    let table = SchemeTable::from_partitions(domain, parts, found.c, epsilon_target)?;
    debug_assert!(table.epsilon_achieved <= epsilon_target + 1e-9);
    Ok(table)
}

/// Draws a perturbed location index for input `x`.
pub fn perturb<R: Rng + ?Sized>(table: &SchemeTable, x: usize, rng: &mut R) -> Result<usize> {
    if x >= table.size() {
        return Err(Error::NotInDomain);
    }
    Ok(table.sample(x, rng))
}

/// Rebuilds a table from stored thresholds, checking stored probabilities against the recomputed ones.
pub fn table_from_betas(
    domain: &LocationDomain,
    betas: &[Vec<u8>],
    c: f64,
    epsilon_target: f64,
) -> Result<SchemeTable> {
    let parts = betas.iter().enumerate().map(|(x, b)| partition_at(domain, x, b)).collect::<Result<Vec<_>>>()?;
    SchemeTable::from_partitions(domain, parts, c, epsilon_target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::EncodedLocation;
    use crate::model::{ldp_certificate, user_rng};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn domain_of(bits: &[u64], len: u8) -> LocationDomain {
        LocationDomain::build(bits.iter().map(|&b| EncodedLocation::from_bits(b, len).unwrap()).collect()).unwrap()
    }

    fn random_domain(seed: u64, d: usize, len: u8) -> LocationDomain {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = std::collections::BTreeSet::new();
        while set.len() < d {
            set.insert(rng.random_range(0..(1u64 << len)));
        }
        domain_of(&set.into_iter().collect::<Vec<_>>(), len)
    }

    #[test]
    fn closed_form_two_groups() {
        let p = alphas_from_sizes(&[1, 7], 3.0, 8).unwrap();
        assert!((p.alpha_min - 0.1).abs() < 1e-15);
        assert!((p.alpha_max - 0.3).abs() < 1e-15);
        assert!((p.delta - 0.2).abs() < 1e-15);
        assert!((p.alphas[0] + 7.0 * p.alphas[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_ratio_is_uniform() {
        let p = alphas_from_sizes(&[3, 5, 8], 1.0, 16).unwrap();
        assert!(p.alphas.iter().all(|a| (a - 1.0 / 16.0).abs() < 1e-15));
        assert_eq!(p.delta, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(alphas_from_sizes(&[8], 2.0, 8).is_err());
        assert!(alphas_from_sizes(&[1, 6], 2.0, 8).is_err());
        assert!(alphas_from_sizes(&[0, 8], 2.0, 8).is_err());
        assert!(alphas_from_sizes(&[1, 7], 0.5, 8).is_err());
    }

    proptest! {
        #[test]
        fn normalization_and_staircase(sizes in proptest::collection::vec(1usize..40, 2..8), c in 1.0001f64..50.0) {
            let d = sizes.iter().sum();
            let p = alphas_from_sizes(&sizes, c, d).unwrap();
            let total: f64 = sizes.iter().zip(&p.alphas).map(|(&s, a)| s as f64 * a).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for w in p.alphas.windows(2) {
                prop_assert!(((w[0] - w[1]) - p.delta).abs() < 1e-12);
                prop_assert!(w[0] > w[1]);
            }
            prop_assert!((p.alphas[0] / p.alphas[sizes.len() - 1] - c).abs() < 1e-9 * c);
        }
    }

    fn two_input_table() -> (LocationDomain, SchemeTable) {
        // x = 000 gets {1,7}; x = 100 gets {4,4}
        let dom = domain_of(&(0..8).collect::<Vec<_>>(), 3);
        let mut parts = Vec::new();
        for x in 0..8 {
            let beta = if x == 4 { vec![1, 0] } else { vec![3, 0] };
            parts.push(partition_at(&dom, x, &beta).unwrap());
        }
        let t = SchemeTable::from_partitions(&dom, parts, 3.0, 10.0).unwrap();
        (dom, t)
    }

    #[test]
    fn epsilon_matches_exhaustive_triple_loop() {
        let (_, t) = two_input_table();
        let mut worst = f64::NEG_INFINITY;
        for x in 0..8 {
            for x2 in 0..8 {
                for y in 0..8 {
                    worst = worst.max((t.prob(x, y) / t.prob(x2, y)).ln());
                }
            }
        }
        // alpha_max over both inputs = 0.3, alpha_min over both = 1/12 (sizes {4,4}: 1/(3*4+4) = 1/16)
        let sizes_44 = alphas_from_sizes(&[4, 4], 3.0, 8).unwrap();
        let expect = (0.3 / sizes_44.alpha_min).ln();
        assert!((epsilon_of(&t) - expect).abs() < 1e-12);
        assert!(worst <= epsilon_of(&t) + 1e-12);
        assert!((worst - expect).abs() < 1e-12, "output 0 is in G_1 of 000 and G_2 of 100");
        assert!((ldp_certificate(&t) - worst).abs() < 1e-12);
    }

    #[test]
    fn uniform_sizes_give_log_c() {
        let dom = domain_of(&(0..16).collect::<Vec<_>>(), 4);
        let parts: Vec<_> = (0..16).map(|x| partition_at(&dom, x, &[4, 2, 0]).unwrap()).collect();
        let t = SchemeTable::from_partitions(&dom, parts.clone(), 5.0, 10.0).unwrap();
        assert!((epsilon_of(&t) - 5f64.ln()).abs() < 1e-12);
        let t1 = SchemeTable::from_partitions(&dom, parts.clone(), 1.0, 10.0).unwrap();
        assert_eq!(epsilon_of(&t1), 0.0);
        let s = solve_c_fixed(2.0, &parts, 16).unwrap();
        assert!((s.c.ln() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_agree_for_two_groups_when_last_is_unused() {
        let (_, t) = two_input_table();
        let through = epsilon_closed_form(&t, TailRange::ThroughLast);
        assert!((through - epsilon_of(&t)).abs() < 1e-12);
        // with m = 2 the shorter sum is empty, so it reduces to ln c
        assert!((epsilon_closed_form(&t, TailRange::ExcludingLast) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn optimal_m_example() {
        let o = optimal_m(5.0, 374).unwrap();
        let expect = 2.0 * (1870.0 - 5.0 * E) / (4.0 * 374.0);
        assert!((o.real - expect).abs() < 1e-12);
        assert!((o.real - 2.4818).abs() < 1e-3);
        assert_eq!(o.m, 2);
        assert!(!o.clamped);
        let big = optimal_m(E.powf(8.0), 374).unwrap();
        assert!(big.clamped && big.m == 2);
        let near_one = optimal_m(1.0001, 374).unwrap();
        assert!(near_one.real > 1000.0);
        assert!(optimal_m(1.0, 374).is_err());
    }

    #[test]
    fn mi_bound_unit_ratio_is_zero() {
        let dom = domain_of(&(0..16).collect::<Vec<_>>(), 4);
        let s = StaircaseScheme::new(partition_at(&dom, 0, &[4, 0]).unwrap(), 1.0, 16).unwrap();
        assert!(mi_bound(&s, 16).abs() < 1e-12);
    }

    #[test]
    fn worst_case_bound_minimum_at_rounding() {
        let o = optimal_m(5.0, 374).unwrap();
        let best = (2..=12)
            .filter_map(|m| mi_bound_worst_case(m as f64, 5.0, 374).map(|v| (m, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert_eq!(best.0, o.m);
    }

    #[test]
    fn worst_case_bound_curvature_sign() {
        // Second derivative in m has the sign of 3 + 2 ln(c / (d g)), g = c - (c-1) m / 2:
        // convex at and beyond the stationary point, concave well below it.
        let (c, d) = (1.1, 374usize);
        let f = |m: f64| mi_bound_worst_case(m, c, d).unwrap();
        let h = 1e-3;
        let second = |m: f64| (f(m - h) - 2.0 * f(m) + f(m + h)) / (h * h);
        let m_star = optimal_m(c, d).unwrap().real;
        assert!(second(m_star) > 0.0);
        assert!(second(2.5) < 0.0);
    }

    #[test]
    fn solve_c_is_maximal() {
        let dom = random_domain(21, 128, 16);
        let opts = PrecomputeOptions::default();
        let t = precompute_with(&dom, 4.0, &opts).unwrap();
        assert!(t.epsilon_achieved <= 4.0 + 1e-9);
        let parts: Vec<_> = t.schemes.iter().map(|s| s.partition.clone()).collect();
        let bumped = t.c * (1.0 + 1e-4);
        assert!(bumped > 4f64.exp() || epsilon_for_partitions(&parts, bumped, 128) > 4.0);
        assert!(t.c.ln() <= 4.0);
    }

    #[test]
    fn grr_degeneracy() {
        for d in [4usize, 16, 64] {
            let len = d.trailing_zeros() as u8;
            let dom = domain_of(&(0..d as u64).collect::<Vec<_>>(), len);
            let eps = 1.3f64;
            let parts: Vec<_> = (0..d).map(|x| partition_at(&dom, x, &[len, 0]).unwrap()).collect();
            let t = SchemeTable::from_partitions(&dom, parts, eps.exp(), eps).unwrap();
            let keep = eps.exp() / (d as f64 + eps.exp() - 1.0);
            let flip = 1.0 / (d as f64 + eps.exp() - 1.0);
            for x in 0..d {
                for y in 0..d {
                    let want = if x == y { keep } else { flip };
                    assert!((t.prob(x, y) - want).abs() < 1e-12);
                }
            }
            assert!((epsilon_of(&t) - eps).abs() < 1e-12);
        }
    }

    #[test]
    fn toy_precompute_equals_grr() {
        let dom = domain_of(&[0, 1, 2, 3], 2);
        let t = precompute(&dom, 3f64.ln()).unwrap();
        assert_eq!(t.m, 2);
        for x in 0..4 {
            assert_eq!(t.scheme(x).partition.sizes, vec![1, 3]);
            assert!((t.prob(x, x) - 0.5).abs() < 1e-9);
            assert!((t.prob(x, (x + 1) % 4) - 1.0 / 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn tiny_budget_is_near_uniform() {
        let dom = random_domain(4, 64, 12);
        let t = precompute(&dom, 0.01).unwrap();
        assert!(t.epsilon_achieved <= 0.01 + 1e-9);
        for s in &t.schemes {
            assert!(s.alphas.iter().all(|a| (a * 64.0 - 1.0).abs() < 0.011));
        }
    }

    #[test]
    fn rows_normalize() {
        let dom = random_domain(8, 100, 14);
        let t = precompute(&dom, 2.0).unwrap();
        for x in 0..100 {
            let row = t.row(x);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for y in 0..100 {
                assert_eq!(row[y], t.prob(x, y));
            }
        }
        assert!(ldp_certificate(&t) <= 2.0 + 1e-9);
    }

    #[test]
    fn sampling_hits_closed_form_keep_rate() {
        let dom = domain_of(&(0..8).collect::<Vec<_>>(), 3);
        let parts: Vec<_> = (0..8).map(|x| partition_at(&dom, x, &[3, 0]).unwrap()).collect();
        let t = SchemeTable::from_partitions(&dom, parts, 3.0, 10.0).unwrap();
        let mut rng = user_rng(42, 0);
        let n = 100_000;
        let keep = (0..n).filter(|_| perturb(&t, 2, &mut rng).unwrap() == 2).count();
        assert!((keep as f64 / n as f64 - 0.3).abs() < 0.01);
        assert!(perturb(&t, 9, &mut rng).is_err());
    }

    #[test]
    fn unit_ratio_sampling_is_uniform() {
        let dom = domain_of(&(0..16).collect::<Vec<_>>(), 4);
        let parts: Vec<_> = (0..16).map(|x| partition_at(&dom, x, &[4, 2, 0]).unwrap()).collect();
        let t = SchemeTable::from_partitions(&dom, parts, 1.0, 1.0).unwrap();
        let mut rng = user_rng(7, 3);
        let n = 100_000;
        let mut counts = [0usize; 16];
        for _ in 0..n {
            counts[t.sample(5, &mut rng)] += 1;
        }
        let e = n as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 15 dof, 99.9% quantile ~ 37.7
        assert!(chi2 < 37.7, "chi2 = {chi2}");
    }

    #[test]
    fn sampled_frequencies_within_binomial_bands() {
        let dom = domain_of(&(0..16).collect::<Vec<_>>(), 4);
        let parts: Vec<_> = (0..16).map(|x| partition_at(&dom, x, &[4, 3, 1, 0]).unwrap()).collect();
        let t = SchemeTable::from_partitions(&dom, parts, 6.0, 10.0).unwrap();
        let mut rng = user_rng(1, 1);
        let n = 1_000_000;
        let mut counts = [0usize; 16];
        for _ in 0..n {
            counts[t.sample(9, &mut rng)] += 1;
        }
        for y in 0..16 {
            let q = t.prob(9, y);
            let sd = (n as f64 * q * (1.0 - q)).sqrt();
            assert!((counts[y] as f64 - n as f64 * q).abs() < 3.0 * sd, "y={y}");
        }
    }
}
