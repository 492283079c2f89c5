//! Sylvester–Hadamard candidate sets.
//!
//! Domain index `i` owns row `i + 1` of `H_K` and stands for column `i + 1`;
//! row 0 (all ones) is unused and columns past `d` are unmapped. The candidate
//! set `C_x` is the mapped columns carrying `+1` in the row of `x`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HadamardPlan {
    d: usize,
    k: usize,
}

/// Entry `H_K[r][c]` of the Sylvester construction: `(-1)^{popcount(r & c)}`.
pub fn hadamard_entry(r: usize, c: usize) -> i8 {
    if (r & c).count_ones() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// `H_K` built by the block recursion from `H_1 = [1]`.
pub fn sylvester(k: usize) -> Vec<Vec<i8>> {
    assert!(k.is_power_of_two());
    let mut h = vec![vec![1i8]];
    while h.len() < k {
        let n = h.len();
        let mut next = vec![vec![0i8; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = h[i][j];
                next[i][j + n] = h[i][j];
                next[i + n][j] = h[i][j];
                next[i + n][j + n] = -h[i][j];
            }
        }
        h = next;
    }
    h
}

/// In-place fast Walsh–Hadamard transform: `v ← H_K · v`.
pub fn fwht(v: &mut [f64]) {
    let n = v.len();
    assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in v.chunks_exact_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (s, t) = (*x + *y, *x - *y);
                *x = s;
                *y = t;
            }
        }
        h *= 2;
    }
}

impl HadamardPlan {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(invalid("domain size must be at least 2"));
        }
        Ok(Self { d, k: (d + 1).next_power_of_two() })
    }

    pub fn domain_size(&self) -> usize {
        self.d
    }

    /// Matrix order `K = 2^⌈log₂(d+1)⌉`.
    pub fn order(&self) -> usize {
        self.k
    }

    pub fn row_of(&self, x: usize) -> usize {
        x + 1
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        hadamard_entry(x + 1, y + 1) == 1
    }

    pub fn candidate_set(&self, x: usize) -> Vec<usize> {
        (0..self.d).filter(|&y| self.contains(x, y)).collect()
    }

    /// `Σ_{y ∈ C_x} v[y]` for every `x` at once, in `O(K log K)`.
    pub fn candidate_sums(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.d);
        let mut buf = vec![0.0; self.k];
        buf[1..=self.d].copy_from_slice(v);
        let total: f64 = v.iter().sum();
        fwht(&mut buf);
        (0..self.d).map(|x| 0.5 * (total + buf[x + 1])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_examples() {
        assert_eq!(HadamardPlan::new(374).unwrap().order(), 512);
        assert_eq!(HadamardPlan::new(15).unwrap().order(), 16);
        assert_eq!(HadamardPlan::new(16).unwrap().order(), 32);
        assert!(HadamardPlan::new(1).is_err());
    }

    #[test]
    fn first_recursion_step() {
        assert_eq!(sylvester(2), vec![vec![1, 1], vec![1, -1]]);
    }

    #[test]
    fn entries_match_recursion() {
        let h = sylvester(64);
        for r in 0..64 {
            for c in 0..64 {
                assert_eq!(h[r][c], hadamard_entry(r, c));
            }
        }
    }

    #[test]
    fn candidate_sets_for_sixteen() {
        let plan = HadamardPlan::new(15).unwrap();
        let h = sylvester(16);
        for x in 0..15 {
            let full = h[x + 1].iter().filter(|&&e| e == 1).count();
            assert_eq!(full, 8);
            // column 0 is +1 in every row and is not mapped to a location
            assert_eq!(plan.candidate_set(x).len(), 7);
        }
    }

    #[test]
    fn candidate_sums_match_naive() {
        let plan = HadamardPlan::new(37).unwrap();
        let v: Vec<f64> = (0..37).map(|i| (i * i % 11) as f64 + 0.25).collect();
        let fast = plan.candidate_sums(&v);
        for x in 0..37 {
            let naive: f64 = plan.candidate_set(x).iter().map(|&y| v[y]).sum();
            assert!((fast[x] - naive).abs() < 1e-9);
        }
    }
}
