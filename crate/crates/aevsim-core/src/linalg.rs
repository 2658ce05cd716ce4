//! Minimal dense linear algebra for the property fits and the QP solver:
//! column-major matrices, Cholesky factorization, and weighted least squares
//! via normal equations. Problem sizes here stay below ~100 variables.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

/// Dense column-major matrix of `f64`.
#[derive(Debug, Clone)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[c * self.rows + r]
    }

    /// `self * v`
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for c in 0..self.cols {
            let x = v[c];
            if x == 0.0 {
                continue;
            }
            let col = &self.data[c * self.rows..(c + 1) * self.rows];
            for (o, a) in out.iter_mut().zip(col) {
                *o += a * x;
            }
        }
        out
    }

    /// `self^T * v`
    pub fn mul_vec_t(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for c in 0..self.cols {
            let col = &self.data[c * self.rows..(c + 1) * self.rows];
            let mut acc = 0.0;
            for (a, x) in col.iter().zip(v) {
                acc += a * x;
            }
            out[c] = acc;
        }
        out
    }
}

/// Cholesky factor (lower triangular) of a symmetric positive-definite matrix.
pub struct Cholesky {
    n: usize,
    l: Vec<f64>, // column-major lower triangle, full storage
}

impl Cholesky {
    /// Factor `a` (full symmetric storage). Returns `None` if a pivot drops
    /// below `1e-14` times the largest diagonal entry.
    pub fn new(a: &Mat) -> Option<Self> {
        debug_assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut l = a.data.clone();
        let max_diag = (0..n).map(|i| a.at(i, i)).fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = 1e-14 * max_diag.max(1.0);
        for j in 0..n {
            let mut d = l[j * n + j];
            for k in 0..j {
                let ljk = l[k * n + j];
                d -= ljk * ljk;
            }
            if d <= tol {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = l[j * n + i];
                for k in 0..j {
                    s -= l[k * n + i] * l[k * n + j];
                }
                l[j * n + i] = s / d;
            }
            for i in 0..j {
                l[j * n + i] = 0.0;
            }
        }
        Some(Cholesky { n, l })
    }

    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        // forward: L y = b
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[i * n + k] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }
}

/// Weighted least squares `min ||W^(1/2) (A x - b)||` via normal equations
/// with a tiny Tikhonov term for rank safety. Weights of 1 give ordinary LS.
pub fn lstsq(a: &Mat, b: &[f64], weights: Option<&[f64]>) -> Vec<f64> {
    let n = a.cols;
    let mut ata = Mat::zeros(n, n);
    let mut atb = vec![0.0; n];
    for r in 0..a.rows {
        let w = weights.map_or(1.0, |ws| ws[r]);
        for c1 in 0..n {
            let v1 = a.at(r, c1);
            if v1 == 0.0 {
                continue;
            }
            atb[c1] += w * v1 * b[r];
            for c2 in c1..n {
                *ata.at_mut(c1, c2) += w * v1 * a.at(r, c2);
            }
        }
    }
    // mirror upper to lower and regularize
    let scale = (0..n).map(|i| ata.at(i, i)).fold(0.0_f64, f64::max);
    for c1 in 0..n {
        *ata.at_mut(c1, c1) += 1e-12 * scale.max(1.0);
        for c2 in (c1 + 1)..n {
            *ata.at_mut(c2, c1) = ata.at(c1, c2);
        }
    }
    Cholesky::new(&ata)
        .expect("normal equations not positive definite")
        .solve(&atb)
}
