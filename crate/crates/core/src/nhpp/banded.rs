//! Symmetric positive-definite banded matrices and their Cholesky factorization.
//!
//! Storage is the lower band: entry `(i, j)` with `0 <= i - j <= bandwidth` lives at
//! `data[i * (bandwidth + 1) + (i - j)]`. Factorization costs O(n·p²) and each solve O(n·p).

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.min(n.saturating_sub(1));
        Self {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + (i - j)
    }

    /// Adds `v` to entries (i, j) and (j, i).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bandwidth {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            for j in lo..i {
                let a = self.data[self.idx(i, j)];
                out[i] += a * x[j];
                out[j] += a * x[i];
            }
            out[i] += self.data[self.idx(i, i)] * x[i];
        }
        out
    }

    /// In-place Cholesky factorization A = L Lᵀ.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let p = self.bandwidth;
        let w = p + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(p);
            for j in lo..=i {
                let mut s = self.data[i * w + (i - j)];
                let k_lo = lo.max(j.saturating_sub(p));
                for k in k_lo..j {
                    s -= self.data[i * w + (i - k)] * self.data[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::SingularSystem(i));
                    }
                    self.data[i * w] = s.sqrt();
                } else {
                    self.data[i * w + (i - j)] = s / self.data[j * w];
                }
            }
        }
        Ok(BandedCholesky { factor: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    factor: BandedSpd,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let (n, p, w) = (l.n, l.bandwidth, l.bandwidth + 1);
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(p);
            let mut s = y[i];
            for k in lo..i {
                s -= l.data[i * w + (i - k)] * y[k];
            }
            y[i] = s / l.data[i * w];
        }
        for i in (0..n).rev() {
            let hi = (i + p).min(n - 1);
            let mut s = y[i];
            for k in i + 1..=hi {
                s -= l.data[k * w + (k - i)] * y[k];
            }
            y[i] = s / l.data[i * w];
        }
        y
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    // dense Gaussian elimination with partial pivoting, used as the oracle
    pub(crate) fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for c in 0..n {
            let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
            m.swap(c, piv);
            x.swap(c, piv);
            for r in c + 1..n {
                let f = m[r][c] / m[c][c];
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
                x[r] -= f * x[c];
            }
        }
        for c in (0..n).rev() {
            let s: f64 = (c + 1..n).map(|k| m[c][k] * x[k]).sum();
            x[c] = (x[c] - s) / m[c][c];
        }
        x
    }

    #[test]
    fn solves_match_dense_oracle() {
        let n = 40;
        let p = 5;
        let mut a = BandedSpd::zeros(n, p);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i.saturating_sub(p)..=i {
                let v = if i == j { 10.0 + i as f64 * 0.1 } else { ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6 };
                a.add(i, j, v);
                dense[i][j] += v;
                if i != j {
                    dense[j][i] += v;
                }
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let ax = a.matvec(&b);
        let dense_ax: Vec<f64> = dense.iter().map(|row| row.iter().zip(&b).map(|(r, x)| r * x).sum()).collect();
        for (u, v) in ax.iter().zip(&dense_ax) {
            assert!((u - v).abs() < 1e-12);
        }
        let x = a.cholesky().unwrap().solve(&b);
        let oracle = dense_solve(&dense, &b);
        for (u, v) in x.iter().zip(&oracle) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut a = BandedSpd::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        a.add(2, 2, 1.0);
        assert!(matches!(a.cholesky(), Err(Error::SingularSystem(1))));
    }
}
