//! Dense LU factorization with partial pivoting.

/// `P·A = L·U` packed in one row-major buffer (unit lower triangle implied).
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    pub min_pivot: f64,
    pub max_pivot: f64,
}

impl LuFactors {
    /// Factors the row-major `n × n` matrix `a`.
    pub fn new(mut a: Vec<f64>, n: usize) -> Self {
        assert_eq!(a.len(), n * n, "matrix must be square");
        let mut perm: Vec<usize> = (0..n).collect();
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot: f64 = 0.0;
        for k in 0..n {
            let (p, pv) =
                (k..n)
                    .map(|i| (i, a[i * n + k].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            min_pivot = min_pivot.min(pv);
            max_pivot = max_pivot.max(pv);
            let pivot = a[k * n + k];
            if pivot == 0.0 {
                continue;
            }
            let (top, bottom) = a.split_at_mut((k + 1) * n);
            let row_k = &top[k * n..];
            for row in bottom.chunks_exact_mut(n) {
                let f = row[k] / pivot;
                row[k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        row[j] -= f * row_k[j];
                    }
                }
            }
        }
        Self { n, lu: a, perm, min_pivot, max_pivot }
    }

    pub fn is_singular(&self, tol: f64) -> bool {
        !(self.min_pivot > tol)
    }

    /// Ratio of the largest to the smallest pivot; a cheap conditioning indicator.
    pub fn pivot_ratio(&self) -> f64 {
        self.max_pivot / self.min_pivot
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s: f64 = row.iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        x
    }
}

pub fn mat_vec(a: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    a.chunks_exact(n).map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// `Aᵀ·A + λ·I` and `Aᵀ·b` for the regularized normal equations.
pub fn normal_equations(a: &[f64], n: usize, b: &[f64], ridge: f64) -> (Vec<f64>, Vec<f64>) {
    let mut ata = vec![0.0; n * n];
    let mut atb = vec![0.0; n];
    for (r, row) in a.chunks_exact(n).enumerate() {
        for i in 0..n {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            atb[i] += ri * b[r];
            for j in 0..n {
                ata[i * n + j] += ri * row[j];
            }
        }
    }
    for i in 0..n {
        ata[i * n + i] += ridge;
    }
    (ata, atb)
}
