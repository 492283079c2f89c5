//! Synthetic city-scale location sets and ground-truth distributions.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::LocationDomain;
use crate::error::{invalid, Result};
use crate::geo::{encode, strip_common_levels, GeoPoint, MAX_LEVEL};

/// Domain sizes of the four reference city datasets.
pub const REFERENCE_SIZES: [usize; 4] = [374, 566, 1738, 3202];

const KM_PER_DEG_LAT: f64 = 110.574;

/// Window and clustering parameters of a synthetic city.
#[derive(Debug, Clone)]
pub struct CitySpec {
    pub center: (f64, f64),
    pub width_km: f64,
    pub height_km: f64,
    pub clusters: usize,
    /// Share of points drawn uniformly over the window.
    pub background: f64,
    pub level: u8,
}

impl Default for CitySpec {
    fn default() -> Self {
        Self {
            center: (40.730610, -73.935242),
            width_km: 40.0,
            height_km: 30.0,
            clusters: 12,
            background: 0.2,
            level: MAX_LEVEL,
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; one draw is enough here
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `d` distinct points clustered inside the window, encoded and stripped to whole shared levels.
pub fn city_domain(d: usize, seed: u64, spec: &CitySpec) -> Result<LocationDomain> {
    if d < 2 {
        return Err(invalid("need at least two locations"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lat0, lon0) = spec.center;
    let km_per_deg_lon = 111.320 * lat0.to_radians().cos();
    let (hw, hh) = (spec.width_km / 2.0, spec.height_km / 2.0);
    let centers: Vec<(f64, f64, f64)> = (0..spec.clusters.max(1))
        .map(|_| (rng.random_range(-hw..hw), rng.random_range(-hh..hh), rng.random_range(0.3..2.5)))
        .collect();
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(d);
    while out.len() < d {
        let (x, y) = if rng.random::<f64>() < spec.background {
            (rng.random_range(-hw..hw), rng.random_range(-hh..hh))
        } else {
            let (cx, cy, s) = centers[rng.random_range(0..centers.len())];
            (cx + s * normal(&mut rng), cy + s * normal(&mut rng))
        };
        if x.abs() > hw || y.abs() > hh {
            continue;
        }
        let p = GeoPoint::new(lat0 + y / KM_PER_DEG_LAT, lon0 + x / km_per_deg_lon)?;
        let loc = encode(p, spec.level)?;
        if seen.insert(loc) {
            out.push(loc);
        }
    }
    let (_, stripped) = strip_common_levels(&out)?;
    LocationDomain::build(stripped)
}

/// Shape of a synthetic ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruthSpec {
    Uniform,
    Zipf(f64),
}

impl std::str::FromStr for TruthSpec {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform" {
            return Ok(TruthSpec::Uniform);
        }
        let exp = s.strip_prefix("zipf:").or_else(|| s.strip_prefix("zipf")).unwrap_or(s);
        let a: f64 = exp.parse().map_err(|_| invalid(format!("unknown distribution `{s}`")))?;
        if !(a > 0.0) {
            return Err(invalid("zipf exponent must be positive"));
        }
        Ok(TruthSpec::Zipf(a))
    }
}

/// Probability vector over `d` indices. Zipf ranks are assigned by a seeded shuffle.
pub fn truth(d: usize, spec: TruthSpec, seed: u64) -> Vec<f64> {
    match spec {
        TruthSpec::Uniform => vec![1.0 / d as f64; d],
        TruthSpec::Zipf(a) => {
            let mut ranks: Vec<usize> = (1..=d).collect();
            ranks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
            let w: Vec<f64> = ranks.iter().map(|&r| (r as f64).powf(-a)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        }
    }
}

/// Draws `n` true user locations from `p`.
pub fn sample_users<R: Rng + ?Sized>(p: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let dist = WeightedIndex::new(p).expect("probability vector with positive mass");
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// Empirical frequency of each index in `xs`.
pub fn histogram(xs: &[usize], d: usize) -> Vec<f64> {
    let mut h = vec![0.0; d];
    for &x in xs {
        h[x] += 1.0;
    }
    let n = xs.len().max(1) as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_sizes_build() {
        for d in REFERENCE_SIZES {
            let dom = city_domain(d, 1, &CitySpec::default()).unwrap();
            assert_eq!(dom.size(), d);
            assert_eq!(dom.bit_len() % 2, 0);
            assert!(dom.bit_len() <= 30, "window should share a long prefix, got {}", dom.bit_len());
        }
    }

    #[test]
    fn deterministic() {
        let a = city_domain(100, 9, &CitySpec::default()).unwrap();
        let b = city_domain(100, 9, &CitySpec::default()).unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn truths_are_distributions() {
        for spec in [TruthSpec::Uniform, TruthSpec::Zipf(1.1)] {
            let p = truth(50, spec, 3);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let p = truth(50, TruthSpec::Zipf(1.1), 3);
        let max = p.iter().cloned().fold(0.0, f64::max);
        let h1: f64 = (1..=50).map(|r| (r as f64).powf(-1.1)).sum();
        assert!((max - 1.0 / h1).abs() < 1e-12);
    }

    #[test]
    fn parse_truth() {
        assert_eq!("uniform".parse::<TruthSpec>().unwrap(), TruthSpec::Uniform);
        assert_eq!("zipf:1.1".parse::<TruthSpec>().unwrap(), TruthSpec::Zipf(1.1));
        assert!("zipf:-1".parse::<TruthSpec>().is_err());
    }
}
