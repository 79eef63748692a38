//! Natural cubic smoothing-spline penalty matrix and the Gaussian solves
//! built on it.
//!
//! The penalty is the classic second-derivative roughness matrix
//! `K = D^T W^-1 D` with `D` the second-difference operator over the knot
//! spacings and `W` the tridiagonal overlap matrix. `K` has rank `n - 2`;
//! its null space is spanned by constants and the linear trend in the
//! design points.
//!
//! Shifted systems `(I + alpha K) g = ybar` are solved in O(n) without ever
//! forming `K`, via the normal-equations identity
//! `g = ybar - alpha D^T (W + alpha D D^T)^-1 D ybar`, where the inner
//! matrix is pentadiagonal SPD. Exact Gaussian draws and log-determinants
//! use a cached eigendecomposition of `K` instead, which also yields the
//! pseudo log-determinant over the `n - 2` positive eigenvalues.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Relative cutoff below which an eigenvalue is treated as part of the
/// rank-deficient null space.
pub const NULL_EIGS_REL_TOL: f64 = 1e-8;

/// Penalty matrix for natural cubic smoothing splines on a fixed set of
/// strictly increasing design points.
#[derive(Debug, Clone)]
pub struct PenaltyMatrix {
    n: usize,
    /// Knot spacings `h[i] = x[i+1] - x[i]`, length `n - 1`.
    h: Vec<f64>,
    /// Tridiagonal W: diagonal and super-diagonal, lengths `n-2`, `n-3`.
    w_diag: Vec<f64>,
    w_off: Vec<f64>,
    /// Eigenvalues of K in ascending order; the first two are numerically zero.
    eigvals: Vec<f64>,
    /// Orthonormal eigenvectors, column j pairs with `eigvals[j]`.
    eigvecs: DMatrix<f64>,
    /// Sum of the logs of the `n - 2` positive eigenvalues.
    pseudo_log_det: f64,
}

impl PenaltyMatrix {
    pub fn new(x: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 3 {
            return Err(Error::Domain(format!(
                "penalty matrix needs at least 3 design points, got {n}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "design points".into(),
            });
        }
        for i in 1..n {
            if x[i] <= x[i - 1] {
                return Err(Error::Domain(format!(
                    "design points must be strictly increasing (x[{}] = {}, x[{}] = {})",
                    i - 1,
                    x[i - 1],
                    i,
                    x[i]
                )));
            }
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let m = n - 2;
        let w_diag: Vec<f64> = (0..m).map(|i| (h[i] + h[i + 1]) / 3.0).collect();
        let w_off: Vec<f64> = (0..m.saturating_sub(1)).map(|i| h[i + 1] / 6.0).collect();

        let dense = dense_penalty(&h, &w_diag, &w_off);
        let eig = nalgebra::SymmetricEigen::new(dense);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigvals: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j].max(0.0)).collect();
        let mut eigvecs = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            eigvecs.set_column(dst, &eig.eigenvectors.column(src));
        }
        let pseudo_log_det = eigvals[2..].iter().map(|&v| v.ln()).sum();

        Ok(PenaltyMatrix {
            n,
            h,
            w_diag,
            w_off,
            eigvals,
            eigvecs,
            pseudo_log_det,
        })
    }

    /// Penalty matrix on the ordinal design `1..=n` used for analysis windows.
    pub fn ordinal(n: usize) -> Result<Self> {
        let x: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        Self::new(&x)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Eigenvalues of K, ascending; the leading two are the null space.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn pseudo_log_det(&self) -> f64 {
        self.pseudo_log_det
    }

    /// log det(I + alpha K) = sum of log(1 + alpha lambda_i).
    pub fn log_det_shifted(&self, alpha: f64) -> f64 {
        self.eigvals.iter().map(|&l| (alpha * l).ln_1p()).sum()
    }

    /// Apply the second-difference operator: `(D v)[r]` for r in `0..n-2`.
    fn second_differences(&self, v: &[f64]) -> Vec<f64> {
        let h = &self.h;
        (0..self.n - 2)
            .map(|r| v[r] / h[r] - v[r + 1] * (1.0 / h[r] + 1.0 / h[r + 1]) + v[r + 2] / h[r + 1])
            .collect()
    }

    /// `K v` computed from the factors (tridiagonal solve, no dense K).
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.second_differences(v);
        let u = solve_tridiag_spd(&self.w_diag, &self.w_off, &d);
        // K v = D^T u
        let mut out = vec![0.0; self.n];
        for (r, &ur) in u.iter().enumerate() {
            let (a, b, c) = self.delta_row(r);
            out[r] += a * ur;
            out[r + 1] += b * ur;
            out[r + 2] += c * ur;
        }
        out
    }

    fn delta_row(&self, r: usize) -> (f64, f64, f64) {
        let h = &self.h;
        (1.0 / h[r], -(1.0 / h[r] + 1.0 / h[r + 1]), 1.0 / h[r + 1])
    }

    /// Quadratic form `g^T K g`, the integrated squared second derivative.
    pub fn quad_form(&self, g: &[f64]) -> f64 {
        assert_eq!(g.len(), self.n, "quad_form dimension mismatch");
        let d = self.second_differences(g);
        let u = solve_tridiag_spd(&self.w_diag, &self.w_off, &d);
        d.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>().max(0.0)
    }

    /// Solve `(I + alpha K) g = ybar` with the banded normal-equations route.
    pub fn posterior_mean_fit(&self, ybar: &[f64], alpha: f64) -> Result<Vec<f64>> {
        if ybar.len() != self.n {
            return Err(Error::Domain(format!(
                "fit length {} does not match design size {}",
                ybar.len(),
                self.n
            )));
        }
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::Domain(format!("smoothing penalty must be >= 0, got {alpha}")));
        }
        if ybar.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "posterior_mean_fit input".into(),
            });
        }
        if alpha == 0.0 {
            return Ok(ybar.to_vec());
        }
        let (b0, b1, b2) = self.reinsch_bands(alpha);
        let chol = PentaCholesky::factor(&b0, &b1, &b2)?;
        let solve_shifted = |rhs: &[f64]| -> Vec<f64> {
            let d = self.second_differences(rhs);
            let u = chol.solve(&d);
            let mut g = rhs.to_vec();
            for (r, &ur) in u.iter().enumerate() {
                let (a, b, c) = self.delta_row(r);
                g[r] -= alpha * a * ur;
                g[r + 1] -= alpha * b * ur;
                g[r + 2] -= alpha * c * ur;
            }
            g
        };
        let mut g = solve_shifted(ybar);
        // one step of iterative refinement keeps large-alpha systems at
        // working precision
        let kg = self.apply(&g);
        let resid: Vec<f64> = (0..self.n)
            .map(|i| ybar[i] - g[i] - alpha * kg[i])
            .collect();
        let correction = solve_shifted(&resid);
        for i in 0..self.n {
            g[i] += correction[i];
        }
        Ok(g)
    }

    /// Bands of `W + alpha D D^T` (pentadiagonal, SPD for alpha > 0).
    fn reinsch_bands(&self, alpha: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let m = self.n - 2;
        let mut b0 = vec![0.0; m];
        let mut b1 = vec![0.0; m.saturating_sub(1)];
        let mut b2 = vec![0.0; m.saturating_sub(2)];
        for r in 0..m {
            let (a, b, c) = self.delta_row(r);
            b0[r] = self.w_diag[r] + alpha * (a * a + b * b + c * c);
        }
        for r in 0..m.saturating_sub(1) {
            let (_, b, c) = self.delta_row(r);
            let (a2, b2r, _) = self.delta_row(r + 1);
            b1[r] = self.w_off[r] + alpha * (b * a2 + c * b2r);
        }
        for r in 0..m.saturating_sub(2) {
            let (_, _, c) = self.delta_row(r);
            let (a2, _, _) = self.delta_row(r + 2);
            b2[r] = alpha * c * a2;
        }
        (b0, b1, b2)
    }

    /// Coordinates of `v` in the eigenbasis of K.
    pub fn to_coords(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        let c = self.eigvecs.transpose() * v;
        c.as_slice().to_vec()
    }

    /// Reconstruct a vector from its eigenbasis coordinates.
    pub fn from_coords(&self, c: &[f64]) -> Vec<f64> {
        let c = DVector::from_column_slice(c);
        let v = &self.eigvecs * c;
        v.as_slice().to_vec()
    }

    /// Draw eigenbasis coordinates of `g ~ N[(I+aK)^-1 ybar, (I+aK)^-1 s2]`
    /// given the coordinates of `ybar`. Used by the Gibbs sweeps, which run
    /// entirely in the eigenbasis.
    pub fn sample_coords<R: Rng + ?Sized>(
        &self,
        ybar_coords: &[f64],
        alpha: f64,
        sigma2: f64,
        rng: &mut R,
    ) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.n);
        for (i, &y) in ybar_coords.iter().enumerate() {
            let shrink = 1.0 + alpha * self.eigvals[i];
            let z: f64 = StandardNormal.sample(rng);
            c.push(y / shrink + (sigma2 / shrink).sqrt() * z);
        }
        c
    }

    /// Exact draw from `N[(I+aK)^-1 ybar, (I+aK)^-1 s2]`.
    pub fn sample_g<R: Rng + ?Sized>(
        &self,
        ybar: &[f64],
        alpha: f64,
        sigma2: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if ybar.len() != self.n {
            return Err(Error::Domain(format!(
                "sample length {} does not match design size {}",
                ybar.len(),
                self.n
            )));
        }
        if !alpha.is_finite() || alpha < 0.0 || !sigma2.is_finite() || sigma2 < 0.0 {
            return Err(Error::Domain(format!(
                "invalid spline draw parameters alpha={alpha}, sigma2={sigma2}"
            )));
        }
        let coords = self.to_coords(ybar);
        let c = self.sample_coords(&coords, alpha, sigma2, rng);
        let g = self.from_coords(&c);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "spline draw".into(),
            });
        }
        Ok(g)
    }

    /// Dense K, for test oracles and small-n inspection.
    pub fn dense(&self) -> DMatrix<f64> {
        dense_penalty(&self.h, &self.w_diag, &self.w_off)
    }
}

fn dense_penalty(h: &[f64], w_diag: &[f64], w_off: &[f64]) -> DMatrix<f64> {
    let n = h.len() + 1;
    let m = n - 2;
    // X = W^-1 D, column by column via tridiagonal solves
    let mut delta = DMatrix::zeros(m, n);
    for r in 0..m {
        delta[(r, r)] = 1.0 / h[r];
        delta[(r, r + 1)] = -(1.0 / h[r] + 1.0 / h[r + 1]);
        delta[(r, r + 2)] = 1.0 / h[r + 1];
    }
    let mut x = DMatrix::zeros(m, n);
    for j in 0..n {
        let col: Vec<f64> = (0..m).map(|r| delta[(r, j)]).collect();
        let sol = solve_tridiag_spd(w_diag, w_off, &col);
        for r in 0..m {
            x[(r, j)] = sol[r];
        }
    }
    delta.transpose() * x
}

/// Thomas-style solve of a symmetric positive-definite tridiagonal system.
pub fn solve_tridiag_spd(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    assert_eq!(rhs.len(), m);
    if m == 0 {
        return Vec::new();
    }
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    c[0] = diag[0];
    d[0] = rhs[0];
    for i in 1..m {
        let w = off[i - 1] / c[i - 1];
        c[i] = diag[i] - w * off[i - 1];
        d[i] = rhs[i] - w * d[i - 1];
    }
    let mut x = vec![0.0; m];
    x[m - 1] = d[m - 1] / c[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = (d[i] - off[i] * x[i + 1]) / c[i];
    }
    x
}

/// Cholesky factorization of a symmetric positive-definite pentadiagonal
/// matrix given as bands (diagonal, first and second sub-diagonals).
pub struct PentaCholesky {
    l0: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl PentaCholesky {
    pub fn factor(b0: &[f64], b1: &[f64], b2: &[f64]) -> Result<Self> {
        let m = b0.len();
        let mut l0 = vec![0.0; m];
        let mut l1 = vec![0.0; m.saturating_sub(1)];
        let mut l2 = vec![0.0; m.saturating_sub(2)];
        for i in 0..m {
            let mut v = b0[i];
            if i >= 1 {
                v -= l1[i - 1] * l1[i - 1];
            }
            if i >= 2 {
                v -= l2[i - 2] * l2[i - 2];
            }
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("banded Cholesky pivot {i}"),
                });
            }
            l0[i] = v.sqrt();
            if i + 1 < m {
                let mut s = b1[i];
                if i >= 1 {
                    s -= l1[i - 1] * l2[i - 1];
                }
                l1[i] = s / l0[i];
            }
            if i + 2 < m {
                l2[i] = b2[i] / l0[i];
            }
        }
        Ok(PentaCholesky { l0, l1, l2 })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = self.l0.len();
        assert_eq!(rhs.len(), m);
        let mut y = vec![0.0; m];
        for i in 0..m {
            let mut v = rhs[i];
            if i >= 1 {
                v -= self.l1[i - 1] * y[i - 1];
            }
            if i >= 2 {
                v -= self.l2[i - 2] * y[i - 2];
            }
            y[i] = v / self.l0[i];
        }
        let mut x = vec![0.0; m];
        for i in (0..m).rev() {
            let mut v = y[i];
            if i + 1 < m {
                v -= self.l1[i] * x[i + 1];
            }
            if i + 2 < m {
                v -= self.l2[i] * x[i + 2];
            }
            x[i] = v / self.l0[i];
        }
        x
    }
}
