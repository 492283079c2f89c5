//! The discrete location domain, its prefix trie and per-input group partitions.

use std::collections::HashMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::geo::EncodedLocation;
use crate::srr::alphas_from_sizes;

const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct TrieNode {
    child: [u32; 2],
    start: u32,
    count: u32,
}

/// Binary prefix trie over the sorted domain; every node covers a contiguous index range.
#[derive(Debug, Clone)]
struct PrefixTrie {
    nodes: Vec<TrieNode>,
}

impl PrefixTrie {
    fn build(sorted: &[EncodedLocation]) -> Self {
        let mut nodes = vec![TrieNode { child: [NO_CHILD; 2], start: 0, count: 0 }];
        for (i, loc) in sorted.iter().enumerate() {
            let mut cur = 0usize;
            nodes[cur].count += 1;
            for b in 0..loc.len() {
                let side = loc.bit(b) as usize;
                let next = nodes[cur].child[side];
                cur = if next == NO_CHILD {
                    nodes.push(TrieNode { child: [NO_CHILD; 2], start: i as u32, count: 0 });
                    let id = nodes.len() - 1;
                    nodes[cur].child[side] = id as u32;
                    id
                } else {
                    next as usize
                };
                nodes[cur].count += 1;
            }
        }
        Self { nodes }
    }

    fn range(&self, node: usize) -> Range<usize> {
        let n = &self.nodes[node];
        n.start as usize..(n.start + n.count) as usize
    }
}

/// Ordered, indexed set of encoded locations of uniform bit length.
#[derive(Debug, Clone)]
pub struct LocationDomain {
    locations: Vec<EncodedLocation>,
    index: HashMap<EncodedLocation, usize>,
    trie: PrefixTrie,
    bit_len: u8,
}

impl LocationDomain {
    /// Sorts and indexes `locations`. Duplicates and mixed lengths are rejected.
    pub fn build(mut locations: Vec<EncodedLocation>) -> Result<Self> {
        if locations.len() < 2 {
            return Err(invalid("a domain needs at least two locations"));
        }
        let bit_len = locations[0].len();
        if locations.iter().any(|l| l.len() != bit_len) {
            return Err(invalid("locations have mixed bit lengths"));
        }
        locations.sort();
        if let Some(w) = locations.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid(format!("duplicate location {}", w[0])));
        }
        let index = locations.iter().enumerate().map(|(i, l)| (*l, i)).collect();
        let trie = PrefixTrie::build(&locations);
        Ok(Self { locations, index, trie, bit_len })
    }

    pub fn size(&self) -> usize {
        self.locations.len()
    }

    pub fn bit_len(&self) -> u8 {
        self.bit_len
    }

    pub fn locations(&self) -> &[EncodedLocation] {
        &self.locations
    }

    pub fn location(&self, i: usize) -> EncodedLocation {
        self.locations[i]
    }

    pub fn index_of(&self, loc: &EncodedLocation) -> Option<usize> {
        self.index.get(loc).copied()
    }

    fn require(&self, loc: &EncodedLocation) -> Result<usize> {
        self.index_of(loc).ok_or(Error::NotInDomain)
    }

    pub fn trie_depth(&self) -> usize {
        fn depth(t: &PrefixTrie, n: usize) -> usize {
            t.nodes[n].child.iter().filter(|&&c| c != NO_CHILD).map(|&c| 1 + depth(t, c as usize)).max().unwrap_or(0)
        }
        depth(&self.trie, 0)
    }

    /// Nodes along the path of location `x`, from the root (depth 0) to its leaf.
    fn path(&self, x: usize) -> Vec<usize> {
        let loc = self.locations[x];
        let mut out = Vec::with_capacity(loc.len() as usize + 1);
        let mut cur = 0usize;
        out.push(cur);
        for b in 0..loc.len() {
            cur = self.trie.nodes[cur].child[loc.bit(b) as usize] as usize;
            out.push(cur);
        }
        out
    }

    /// `n[l]` = number of domain locations sharing exactly `l` leading bits with `x`.
    pub fn lcp_histogram(&self, x: &EncodedLocation) -> Result<Vec<usize>> {
        Ok(self.lcp_histogram_at(self.require(x)?))
    }

    pub(crate) fn lcp_histogram_at(&self, x: usize) -> Vec<usize> {
        let loc = self.locations[x];
        let path = self.path(x);
        let mut hist = vec![0usize; loc.len() as usize + 1];
        for b in 0..loc.len() {
            let sibling = self.trie.nodes[path[b as usize]].child[1 - loc.bit(b) as usize];
            if sibling != NO_CHILD {
                hist[b as usize] = self.trie.nodes[sibling as usize].count as usize;
            }
        }
        hist[loc.len() as usize] = 1;
        hist
    }

    /// Index range of locations sharing at least `bits` leading bits with location `x`.
    pub fn prefix_range(&self, x: usize, bits: u8) -> Range<usize> {
        let loc = self.locations[x];
        let mut cur = 0usize;
        for b in 0..bits.min(loc.len()) {
            cur = self.trie.nodes[cur].child[loc.bit(b) as usize] as usize;
        }
        self.trie.range(cur)
    }

    /// Maps a location of the same bit length to the closest domain location.
    ///
    /// Closest means longest common prefix; ties go to the nearest cell center,
    /// then the lower index. The flag is `true` when `loc` was already in the domain.
    pub fn snap(&self, loc: &EncodedLocation) -> Result<(usize, bool)> {
        if loc.len() != self.bit_len {
            return Err(invalid("location bit length does not match the domain"));
        }
        if let Some(i) = self.index_of(loc) {
            return Ok((i, true));
        }
        let mut cur = 0usize;
        for b in 0..loc.len() {
            let next = self.trie.nodes[cur].child[loc.bit(b) as usize];
            if next == NO_CHILD {
                break;
            }
            cur = next as usize;
        }
        let (cx, cy) = loc.cell_center();
        let best = self
            .trie
            .range(cur)
            .min_by(|&a, &b| {
                let da = dist2(self.locations[a].cell_center(), (cx, cy));
                let db = dist2(self.locations[b].cell_center(), (cx, cy));
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .expect("trie nodes are never empty");
        Ok((best, false))
    }

    /// SHA-256 over the canonical domain file content.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(crate::io::domain_header(self.bit_len).as_bytes());
        h.update(b"\n");
        for l in &self.locations {
            h.update(l.to_hex().as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Candidate group thresholds: even bit lengths up to the full length.
    pub fn beta_candidates(&self) -> Vec<u8> {
        let mut c: Vec<u8> = (0..=self.bit_len).step_by(2).collect();
        if self.bit_len % 2 == 1 {
            c.push(self.bit_len);
        }
        c
    }
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Output groups for one input location.
///
/// `ranges[j]` is the contiguous index block of locations sharing at least
/// `beta[j]` bits with the input; group `j` is `ranges[j]` minus `ranges[j - 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub input: usize,
    pub beta: Vec<u8>,
    pub sizes: Vec<usize>,
    pub ranges: Vec<Range<usize>>,
}

impl GroupPartition {
    pub fn m(&self) -> usize {
        self.beta.len()
    }

    /// Group number (0-based) of output index `y`.
    pub fn group_of(&self, y: usize) -> usize {
        self.ranges.iter().position(|r| r.contains(&y)).expect("partition covers the domain")
    }

    /// `Σ_j (j-1)|G_j|` with 1-based `j`; the only partition statistic the probabilities depend on.
    pub fn weighted_tail(&self) -> f64 {
        self.sizes.iter().enumerate().map(|(j, &s)| (j * s) as f64).sum()
    }

    /// The (at most two) index blocks making up group `j`.
    pub fn group_blocks(&self, j: usize) -> [Range<usize>; 2] {
        let outer = self.ranges[j].clone();
        if j == 0 {
            return [outer, 0..0];
        }
        let inner = &self.ranges[j - 1];
        [outer.start..inner.start, inner.end..outer.end]
    }
}

/// Splits the domain around `x` by the strictly decreasing thresholds `beta`.
pub fn partition(domain: &LocationDomain, x: &EncodedLocation, beta: &[u8]) -> Result<GroupPartition> {
    let xi = domain.require(x)?;
    partition_at(domain, xi, beta)
}

pub(crate) fn partition_at(domain: &LocationDomain, xi: usize, beta: &[u8]) -> Result<GroupPartition> {
    if beta.len() < 2 {
        return Err(invalid("need at least two groups"));
    }
    if beta.windows(2).any(|w| w[0] <= w[1]) {
        return Err(invalid("beta must be strictly decreasing"));
    }
    if beta[0] > domain.bit_len() {
        return Err(invalid("beta exceeds the location bit length"));
    }
    let ranges: Vec<_> = beta.iter().map(|&b| domain.prefix_range(xi, b)).collect();
    let last = ranges.last().unwrap();
    if last.len() != domain.size() {
        return Err(invalid(format!(
            "{} locations share fewer than {} bits with the input and are not covered",
            domain.size() - last.len(),
            beta.last().unwrap()
        )));
    }
    let mut sizes = Vec::with_capacity(beta.len());
    let mut prev = 0usize;
    for (j, r) in ranges.iter().enumerate() {
        let s = r.len() - prev;
        if s == 0 {
            return Err(invalid(format!("group {} is empty for beta {beta:?}", j + 1)));
        }
        sizes.push(s);
        prev = r.len();
    }
    Ok(GroupPartition { input: xi, beta: beta.to_vec(), sizes, ranges })
}

/// Per-input summary of the LCP histogram bucketed by candidate threshold.
#[derive(Debug, Clone)]
pub(crate) struct Strata {
    /// Candidate thresholds, ascending; `thresholds[0] == 0`.
    thresholds: Vec<u8>,
    /// Locations with LCP in `[thresholds[s], thresholds[s+1])` (last: `>= thresholds[last]`).
    counts: Vec<usize>,
    lcp_sums: Vec<f64>,
}

impl Strata {
    pub(crate) fn new(domain: &LocationDomain, xi: usize) -> Self {
        let hist = domain.lcp_histogram_at(xi);
        let thresholds = domain.beta_candidates();
        let mut counts = vec![0usize; thresholds.len()];
        let mut lcp_sums = vec![0f64; thresholds.len()];
        for (l, &n) in hist.iter().enumerate() {
            let s = thresholds.partition_point(|&t| t as usize <= l) - 1;
            counts[s] += n;
            lcp_sums[s] += (n * l) as f64;
        }
        Self { thresholds, counts, lcp_sums }
    }

    fn nonempty(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Objective for cuts given as ascending stratum indices (excluding 0), largest last.
    /// Returns `None` for infeasible cuts.
    fn objective(&self, cuts_desc: &[usize], c: f64, d: usize) -> Option<f64> {
        let mut sizes = Vec::with_capacity(cuts_desc.len() + 1);
        let mut sums = Vec::with_capacity(cuts_desc.len() + 1);
        let mut hi = self.counts.len();
        for &cut in cuts_desc.iter().chain(std::iter::once(&0)) {
            let n: usize = self.counts[cut..hi].iter().sum();
            if n == 0 {
                return None;
            }
            sizes.push(n);
            sums.push(self.lcp_sums[cut..hi].iter().sum::<f64>());
            hi = cut;
        }
        let probs = alphas_from_sizes(&sizes, c, d).ok()?;
        Some(probs.alphas.iter().zip(&sums).map(|(a, s)| a * s).sum())
    }

    fn beta_of(&self, cuts_desc: &[usize]) -> Vec<u8> {
        cuts_desc.iter().map(|&c| self.thresholds[c]).chain(std::iter::once(0)).collect()
    }
}

/// Annealing schedule for [`optimize_beta`] on large search spaces.
#[derive(Debug, Clone, Copy)]
pub struct AnnealConfig {
    pub t0: f64,
    pub cooling: f64,
    pub iters_per_temp: usize,
    pub t_min: f64,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self { t0: 1.0, cooling: 0.95, iters_per_temp: 200, t_min: 1e-4, seed: 0x5eed }
    }
}

/// Searches above this many candidate threshold vectors switch to annealing.
pub const EXHAUSTIVE_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct BetaSearch {
    pub partition: GroupPartition,
    pub objective: f64,
    /// Objective value after every accepted annealing move (empty for exhaustive search).
    pub accepted: Vec<f64>,
}

/// Expected retained prefix length `Σ_j α_j Σ_{y∈G_j} lcp(x, y)` for a partition.
pub fn retained_prefix(domain: &LocationDomain, part: &GroupPartition, c: f64) -> Result<f64> {
    let probs = alphas_from_sizes(&part.sizes, c, domain.size())?;
    let x = domain.location(part.input);
    let mut total = 0.0;
    for (y, loc) in domain.locations().iter().enumerate() {
        total += probs.alphas[part.group_of(y)] * x.lcp_len(loc)? as f64;
    }
    Ok(total)
}

/// Picks the thresholds maximizing the expected retained prefix for input `x`.
pub fn optimize_beta(domain: &LocationDomain, x: &EncodedLocation, m: usize, c: f64) -> Result<GroupPartition> {
    let xi = domain.require(x)?;
    Ok(optimize_beta_at(domain, xi, m, c, &AnnealConfig::default())?.partition)
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
        if r > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    r as u64
}

pub(crate) fn optimize_beta_at(
    domain: &LocationDomain,
    xi: usize,
    m: usize,
    c: f64,
    anneal: &AnnealConfig,
) -> Result<BetaSearch> {
    if m < 2 {
        return Err(invalid("m must be at least 2"));
    }
    if !(c > 1.0) {
        return Err(invalid("c must exceed 1"));
    }
    let strata = Strata::new(domain, xi);
    if strata.nonempty() < m {
        return Err(Error::Infeasible(format!(
            "only {} distinct LCP strata for location {}; lower m below {m}",
            strata.nonempty(),
            domain.location(xi)
        )));
    }
    let space = binomial(strata.thresholds.len() - 1, m - 1);
    let search = if space <= EXHAUSTIVE_LIMIT {
        exhaustive(&strata, m, c, domain.size())
    } else {
        annealing(&strata, m, c, domain.size(), anneal)
    };
    let (cuts, objective, accepted) = search.ok_or_else(|| Error::Infeasible("no feasible threshold vector".into()))?;
    let partition = partition_at(domain, xi, &strata.beta_of(&cuts))?;
    Ok(BetaSearch { partition, objective, accepted })
}

type Found = Option<(Vec<usize>, f64, Vec<f64>)>;

fn exhaustive(strata: &Strata, m: usize, c: f64, d: usize) -> Found {
    let k = strata.thresholds.len() - 1;
    // ascending combination of stratum indices in 1..=k
    let mut comb: Vec<usize> = (1..m).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let desc: Vec<usize> = comb.iter().rev().copied().collect();
        if let Some(v) = strata.objective(&desc, c, d) {
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((desc, v));
            }
        }
        // next combination
        let r = comb.len();
        let mut i = r;
        while i > 0 && comb[i - 1] == k - (r - i) {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        comb[i - 1] += 1;
        for j in i..r {
            comb[j] = comb[j - 1] + 1;
        }
    }
    best.map(|(cuts, v)| (cuts, v, Vec::new()))
}

/// Simulated annealing over threshold vectors; a move shifts one threshold by one candidate step.
fn annealing(strata: &Strata, m: usize, c: f64, d: usize, cfg: &AnnealConfig) -> Found {
    let k = strata.thresholds.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Start from the upper boundaries of the m-1 innermost non-empty strata.
    let mut cur: Vec<usize> = (1..=k)
        .rev()
        .filter(|&s| strata.counts[s..].iter().sum::<usize>() > 0 && strata.counts[s] > 0)
        .take(m - 1)
        .collect();
    if cur.len() < m - 1 {
        return None;
    }
    let mut cur_v = strata.objective(&cur, c, d)?;
    let mut best = (cur.clone(), cur_v);
    let mut accepted = vec![cur_v];
    let mut t = cfg.t0;
    while t > cfg.t_min {
        for _ in 0..cfg.iters_per_temp {
            let i = rng.random_range(0..cur.len());
            let up = rng.random_bool(0.5);
            let mut cand = cur.clone();
            cand[i] = if up { cand[i] + 1 } else { cand[i].wrapping_sub(1) };
            // repair: keep 1 <= cut <= k and strictly decreasing
            if cand[i] == 0 || cand[i] > k {
                continue;
            }
            if (i > 0 && cand[i] >= cand[i - 1]) || (i + 1 < cand.len() && cand[i] <= cand[i + 1]) {
                continue;
            }
            let Some(v) = strata.objective(&cand, c, d) else { continue };
            if v >= cur_v || rng.random::<f64>() < ((v - cur_v) / t).exp() {
                cur = cand;
                cur_v = v;
                accepted.push(v);
                if v > best.1 {
                    best = (cur.clone(), v);
                }
            }
        }
        t *= cfg.cooling;
    }
    Some((best.0, best.1, accepted))
}

/// Public entry point for the annealing search, bypassing the size switch.
pub fn optimize_beta_annealing(
    domain: &LocationDomain,
    x: &EncodedLocation,
    m: usize,
    c: f64,
    cfg: &AnnealConfig,
) -> Result<BetaSearch> {
    let xi = domain.require(x)?;
    let strata = Strata::new(domain, xi);
    if strata.nonempty() < m {
        return Err(Error::Infeasible(format!("fewer than {m} LCP strata; lower m")));
    }
    let (cuts, objective, accepted) = annealing(&strata, m, c, domain.size(), cfg)
        .ok_or_else(|| Error::Infeasible("annealing found no feasible start".into()))?;
    let partition = partition_at(domain, xi, &strata.beta_of(&cuts))?;
    Ok(BetaSearch { partition, objective, accepted })
}

/// Public entry point for exhaustive search regardless of the search-space size.
pub fn optimize_beta_exhaustive(domain: &LocationDomain, x: &EncodedLocation, m: usize, c: f64) -> Result<BetaSearch> {
    let xi = domain.require(x)?;
    let strata = Strata::new(domain, xi);
    if strata.nonempty() < m {
        return Err(Error::Infeasible(format!("fewer than {m} LCP strata; lower m")));
    }
    let (cuts, objective, _) = exhaustive(&strata, m, c, domain.size())
        .ok_or_else(|| Error::Infeasible("no feasible threshold vector".into()))?;
    let partition = partition_at(domain, xi, &strata.beta_of(&cuts))?;
    Ok(BetaSearch { partition, objective, accepted: Vec::new() })
}

/// Smallest number of non-empty LCP strata over all inputs; the largest usable `m`.
pub fn max_feasible_m(domain: &LocationDomain) -> usize {
    (0..domain.size()).map(|x| Strata::new(domain, x).nonempty()).min().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn loc(s: &str) -> EncodedLocation {
        EncodedLocation::from_bit_str(s).unwrap()
    }

    fn random_domain(seed: u64, d: usize, len: u8) -> LocationDomain {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = std::collections::BTreeSet::new();
        while set.len() < d {
            set.insert(rng.random_range(0..(1u64 << len)));
        }
        LocationDomain::build(set.into_iter().map(|b| EncodedLocation::from_bits(b, len).unwrap()).collect()).unwrap()
    }

    fn naive_hist(dom: &LocationDomain, x: usize) -> Vec<usize> {
        let mut h = vec![0; dom.bit_len() as usize + 1];
        for y in dom.locations() {
            h[dom.location(x).lcp_len(y).unwrap() as usize] += 1;
        }
        h
    }

    #[test]
    fn build_small_domain() {
        let dom = LocationDomain::build(vec![loc("1100"), loc("0001"), loc("0110"), loc("1010")]).unwrap();
        assert_eq!(dom.size(), 4);
        assert!(dom.trie_depth() <= 4);
        assert_eq!(dom.location(0), loc("0001"));
        assert_eq!(dom.index_of(&loc("1100")), Some(3));
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(LocationDomain::build(vec![loc("00"), loc("00")]).is_err());
        assert!(LocationDomain::build(vec![loc("00"), loc("001")]).is_err());
        assert!(LocationDomain::build(vec![loc("00")]).is_err());
    }

    #[test]
    fn histogram_of_two_bit_domain() {
        let dom = LocationDomain::build(vec![loc("00"), loc("01"), loc("10"), loc("11")]).unwrap();
        assert_eq!(dom.lcp_histogram(&loc("00")).unwrap(), vec![2, 1, 1]);
        assert!(dom.lcp_histogram(&loc("111")).is_err());
    }

    #[test]
    fn singleton_branch_histogram() {
        let dom = LocationDomain::build(vec![loc("0000"), loc("1111")]).unwrap();
        assert_eq!(dom.lcp_histogram(&loc("0000")).unwrap(), vec![1, 0, 0, 0, 1]);
    }

    #[test]
    fn histogram_matches_naive_scan() {
        let dom = random_domain(7, 64, 12);
        for x in 0..dom.size() {
            assert_eq!(dom.lcp_histogram_at(x), naive_hist(&dom, x));
        }
    }

    #[test]
    fn figure_style_partition() {
        // all 64 six-bit strings; thresholds 6/4/2 leave the far quarters uncovered
        let all: Vec<_> = (0..64u64).map(|b| EncodedLocation::from_bits(b, 6).unwrap()).collect();
        let dom = LocationDomain::build(all).unwrap();
        let x = loc("011010");
        assert!(partition(&dom, &x, &[6, 4, 2]).is_err());
        let p = partition(&dom, &x, &[6, 4, 2, 0]).unwrap();
        assert_eq!(p.sizes, vec![1, 3, 12, 48]);
        for (y, l) in dom.locations().iter().enumerate() {
            let lcp = x.lcp_len(l).unwrap();
            let j = p.group_of(y);
            assert!(lcp >= p.beta[j]);
            if j > 0 {
                assert!(lcp < p.beta[j - 1]);
            }
        }
    }

    #[test]
    fn minimal_two_group_partition() {
        let dom = random_domain(3, 16, 8);
        let x = dom.location(5);
        let p = partition(&dom, &x, &[8, 0]).unwrap();
        assert_eq!(p.sizes, vec![1, 15]);
        assert_eq!(p.group_of(5), 0);
    }

    #[test]
    fn partition_errors() {
        let dom = LocationDomain::build(vec![loc("0000"), loc("1111")]).unwrap();
        assert!(partition(&dom, &loc("0000"), &[4, 2, 0]).is_err()); // empty middle group
        assert!(partition(&dom, &loc("0000"), &[2, 4]).is_err());
        assert!(partition(&dom, &loc("0000"), &[4]).is_err());
    }

    #[test]
    fn optimize_two_bit_domain() {
        let dom = LocationDomain::build(vec![loc("00"), loc("01"), loc("10"), loc("11")]).unwrap();
        for c in [1.5, 3.0, 50.0] {
            let p = optimize_beta(&dom, &loc("10"), 2, c).unwrap();
            assert_eq!(p.beta, vec![2, 0]);
            assert_eq!(p.sizes, vec![1, 3]);
        }
    }

    #[test]
    fn optimize_rejects_too_many_groups() {
        let dom = LocationDomain::build(vec![loc("00"), loc("01"), loc("10"), loc("11")]).unwrap();
        // strata at 0 and 2 only
        assert!(matches!(optimize_beta(&dom, &loc("00"), 3, 2.0), Err(Error::Infeasible(_))));
    }

    /// Brute-force oracle: every strictly decreasing even threshold vector ending in 0.
    fn brute_best(dom: &LocationDomain, x: usize, m: usize, c: f64) -> f64 {
        let cands: Vec<u8> = dom.beta_candidates().into_iter().filter(|&b| b > 0).collect();
        let mut best = f64::NEG_INFINITY;
        let n = cands.len();
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != m - 1 {
                continue;
            }
            let mut beta: Vec<u8> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| cands[i]).collect();
            beta.reverse();
            beta.push(0);
            if let Ok(p) = partition_at(dom, x, &beta) {
                best = best.max(retained_prefix(dom, &p, c).unwrap());
            }
        }
        best
    }

    #[test]
    fn exhaustive_matches_brute_force() {
        let dom = random_domain(11, 48, 12);
        for x in [0, 17, 47] {
            for m in 2..=4 {
                let got = optimize_beta_at(&dom, x, m, 4.0, &AnnealConfig::default()).unwrap();
                let want = brute_best(&dom, x, m, 4.0);
                assert!((got.objective - want).abs() < 1e-9, "x={x} m={m}");
                let direct = retained_prefix(&dom, &got.partition, 4.0).unwrap();
                assert!((direct - got.objective).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn annealing_close_to_exhaustive() {
        let dom = random_domain(5, 256, 16);
        for x in [0, 100, 255] {
            let ex = optimize_beta_exhaustive(&dom, &dom.location(x), 3, 6.0).unwrap();
            let sa = optimize_beta_annealing(&dom, &dom.location(x), 3, 6.0, &AnnealConfig::default()).unwrap();
            assert!(sa.objective >= 0.98 * ex.objective, "{} vs {}", sa.objective, ex.objective);
        }
    }

    #[test]
    fn zero_temperature_annealing_never_regresses() {
        let dom = random_domain(9, 200, 20);
        let cfg = AnnealConfig { t0: 1e-12, cooling: 0.5, iters_per_temp: 300, t_min: 1e-14, seed: 1 };
        let sa = optimize_beta_annealing(&dom, &dom.location(3), 4, 3.0, &cfg).unwrap();
        assert!(sa.accepted.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn snap_prefers_longest_prefix() {
        let dom = LocationDomain::build(vec![loc("0000"), loc("0011"), loc("1100")]).unwrap();
        assert_eq!(dom.snap(&loc("0011")).unwrap(), (1, true));
        assert_eq!(dom.snap(&loc("0001")).unwrap().0, 0);
        assert_eq!(dom.snap(&loc("1111")).unwrap().0, 2);
    }

    proptest! {
        #[test]
        fn partition_sizes_match_membership(seed in 0u64..500, m in 2usize..5) {
            let dom = random_domain(seed, 64, 12);
            let x = (seed as usize * 7) % 64;
            let strata = Strata::new(&dom, x);
            prop_assume!(strata.nonempty() >= m);
            let found = optimize_beta_at(&dom, x, m, 2.5, &AnnealConfig::default()).unwrap();
            let p = found.partition;
            prop_assert_eq!(p.sizes.iter().sum::<usize>(), 64);
            let hist = dom.lcp_histogram_at(x);
            let mut naive = vec![0usize; m];
            for (y, l) in dom.locations().iter().enumerate() {
                let lcp = dom.location(x).lcp_len(l).unwrap();
                let j = p.beta.iter().position(|&b| lcp >= b).unwrap();
                naive[j] += 1;
                prop_assert_eq!(p.group_of(y), j);
            }
            prop_assert_eq!(&naive, &p.sizes);
            // sizes are histogram sums over each threshold interval
            let mut hi = hist.len();
            for (j, &b) in p.beta.iter().enumerate() {
                prop_assert_eq!(hist[b as usize..hi].iter().sum::<usize>(), p.sizes[j]);
                hi = b as usize;
            }
            // re-deriving thresholds from the group boundaries gives the same membership
            let rebuilt: Vec<u8> = (0..m).map(|j| {
                let [a, b] = p.group_blocks(j);
                a.chain(b).map(|y| dom.location(x).lcp_len(&dom.location(y)).unwrap()).min().unwrap()
            }).collect();
            let again = partition_at(&dom, x, &rebuilt).unwrap();
            prop_assert_eq!(again.sizes, p.sizes.clone());
        }
    }
}
