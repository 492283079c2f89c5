//! Distance measures between distributions and k-nearest-neighbour comparisons.

use std::fmt::Write as _;

use crate::domain::LocationDomain;
use crate::error::{invalid, Result};

/// Additive smoothing applied to both sides before the KL divergence.
pub const KL_SMOOTHING: f64 = 1e-10;

fn same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", p.len(), q.len())));
    }
    Ok(())
}

pub fn l1(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q)?;
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

pub fn l2(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q)?;
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

fn smooth(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().map(|v| v + KL_SMOOTHING).sum();
    p.iter().map(|v| (v + KL_SMOOTHING) / s).collect()
}

/// `Σ p ln(p/q)` after smoothing both vectors.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q)?;
    let (p, q) = (smooth(p), smooth(q));
    Ok(p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0))
}

/// Integer user counts at population `n` by largest remainder, so they sum to `n` exactly.
pub fn user_counts(p: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = p.iter().sum();
    let raw: Vec<f64> = p.iter().map(|v| v / total * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|v| v.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Neighbours of each location: the `k` nearest users other than one user standing at it.
///
/// Users sit on cell centres; each list holds domain indices with repetition
/// (one entry per neighbouring user), ordered by distance, ties by index.
pub fn knn_lists(domain: &LocationDomain, distribution: &[f64], n: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if distribution.len() != domain.size() {
        return Err(invalid("distribution does not match the domain"));
    }
    if k >= n {
        return Err(invalid("k must be smaller than the population"));
    }
    let counts = user_counts(distribution, n);
    let centres: Vec<(f64, f64)> = domain.locations().iter().map(|l| l.cell_center()).collect();
    let d = domain.size();
    let mut out = Vec::with_capacity(d);
    for x in 0..d {
        let mut by_dist: Vec<usize> = (0..d).collect();
        let dist = |y: usize| (centres[x].0 - centres[y].0).powi(2) + (centres[x].1 - centres[y].1).powi(2);
        by_dist.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
        let mut list = Vec::with_capacity(k);
        for y in by_dist {
            let available = if y == x { counts[y].saturating_sub(1) } else { counts[y] };
            let take = available.min(k - list.len());
            list.extend(std::iter::repeat_n(y, take));
            if list.len() == k {
                break;
            }
        }
        out.push(list);
    }
    Ok(out)
}

/// Mean precision, recall and normalized MSE of estimated neighbour lists.
///
/// Lists are compared as multisets. The MSE pairs the i-th true neighbour with
/// the i-th estimated one and is divided by the squared extent of the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnScore {
    pub precision: f64,
    pub recall: f64,
    pub mse: f64,
}

pub fn knn_compare(domain: &LocationDomain, truth: &[Vec<usize>], est: &[Vec<usize>]) -> Result<KnnScore> {
    if truth.len() != est.len() {
        return Err(invalid("neighbour list counts differ"));
    }
    let centres: Vec<(f64, f64)> = domain.locations().iter().map(|l| l.cell_center()).collect();
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(cx, cy) in &centres {
        xmin = xmin.min(cx);
        xmax = xmax.max(cx);
        ymin = ymin.min(cy);
        ymax = ymax.max(cy);
    }
    let diag2 = ((xmax - xmin).powi(2) + (ymax - ymin).powi(2)).max(f64::MIN_POSITIVE);
    let (mut prec, mut rec, mut mse) = (0.0, 0.0, 0.0);
    for (t, e) in truth.iter().zip(est) {
        let mut tc = std::collections::HashMap::new();
        for &y in t {
            *tc.entry(y).or_insert(0usize) += 1;
        }
        let mut hit = 0usize;
        for &y in e {
            if let Some(c) = tc.get_mut(&y).filter(|c| **c > 0) {
                *c -= 1;
                hit += 1;
            }
        }
        prec += if e.is_empty() { 1.0 } else { hit as f64 / e.len() as f64 };
        rec += if t.is_empty() { 1.0 } else { hit as f64 / t.len() as f64 };
        let pairs = t.len().min(e.len());
        if pairs > 0 {
            let s: f64 = t
                .iter()
                .zip(e)
                .map(|(&a, &b)| (centres[a].0 - centres[b].0).powi(2) + (centres[a].1 - centres[b].1).powi(2))
                .sum();
            mse += s / pairs as f64 / diag2;
        }
    }
    let n = truth.len().max(1) as f64;
    Ok(KnnScore { precision: prec / n, recall: rec / n, mse: mse / n })
}

/// One row of an experiment report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mechanism: String,
    pub epsilon: f64,
    pub n: u64,
    pub seed: u64,
    pub l1: f64,
    pub l2: f64,
    pub kl: f64,
    pub knn: Option<(usize, KnnScore)>,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "mechanism,epsilon,n,seed,l1,l2,kl,k,precision,recall,mse";

    pub fn csv_row(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{:.10},{:.10},{:.10}",
            self.mechanism, self.epsilon, self.n, self.seed, self.l1, self.l2, self.kl
        );
        match self.knn {
            Some((k, sc)) => {
                let _ = write!(s, ",{k},{:.10},{:.10},{:.10}", sc.precision, sc.recall, sc.mse);
            }
            None => s.push_str(",,,,"),
        }
        s
    }
}

pub fn reports_csv(rows: &[MetricReport]) -> String {
    let mut s = String::from(MetricReport::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}
