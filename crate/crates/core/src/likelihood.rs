//! Per-window caches and the closed-form marginal likelihood pieces.
//!
//! All spline computations run in the eigenbasis of the penalty matrix,
//! where both `(I + alpha K)` solves and the Gaussian marginals are
//! diagonal. A [`WindowWorkspace`] holds the group-mean coordinates, the
//! per-sample residual sums of squares and the posterior-integrated
//! individual-level factors, so that per-particle evaluations cost O(n).
//!
//! Two distinct marginals appear:
//!
//! * [`log_predictive`]: the likelihood of the group means integrated
//!   against the (singular) spline prior at fixed hyperparameters. This is
//!   the filter's weighting density. The two null-space coordinates carry a
//!   flat prior and integrate to one.
//! * [`log_rb_mean_level`]: the likelihood integrated against the spline
//!   *posterior* at fixed hyperparameters. Together with the
//!   inverse-gamma-integrated individual factors this is the
//!   posterior-averaged likelihood entering the posterior Bayes factor.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::data::{group_means, Window};
use crate::error::{Error, Result};
use crate::gibbs::Hyperparameters;
use crate::spline::PenaltyMatrix;

/// Natural log of the Gamma function (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection formula
        PI.ln() - (PI * x).sin().abs().ln() - ln_gamma(1.0 - x)
    } else {
        let z = x - 1.0;
        let mut a = COEF[0];
        for (i, &c) in COEF.iter().enumerate().skip(1) {
            a += c / (z + i as f64);
        }
        let t = z + 7.5;
        0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
    }
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * ((2.0 * PI * var).ln() + r * r / var)
}

/// Gamma(shape, scale) log density.
pub fn gamma_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (shape - 1.0) * x.ln() - x / scale - shape * scale.ln() - ln_gamma(shape)
}

/// Inverse-Gamma(shape, rate) log density, `p(x) ∝ x^{-shape-1} e^{-rate/x}`.
pub fn inv_gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

/// Group-level slice of a window workspace.
#[derive(Debug, Clone)]
pub struct GroupData {
    /// Columns of the window matrix belonging to this group.
    pub members: Vec<usize>,
    /// Per-site mean M-value.
    pub ybar: Vec<f64>,
    /// `ybar` in the penalty eigenbasis.
    pub ybar_coords: Vec<f64>,
    /// Residual sum of squares `||y_j - ybar||^2` per member.
    pub ss_within: Vec<f64>,
    /// Sample variance of `ybar` across sites (used to initialize chains).
    pub var_ybar: f64,
    /// Sum over members of the posterior-integrated individual factor.
    pub log_rb_individual: f64,
}

/// Everything about one window that stays fixed while hyperparameters vary.
#[derive(Debug, Clone)]
pub struct WindowWorkspace {
    pub window_index: usize,
    pub chrom: String,
    pub start_pos: u64,
    pub end_pos: u64,
    pub n: usize,
    pub penalty: Arc<PenaltyMatrix>,
    pub groups: Vec<GroupData>,
}

impl WindowWorkspace {
    /// Precompute the group summaries of an imputed window under the given
    /// group assignment.
    pub fn build(
        window: &Window,
        group_of: &[usize],
        n_groups: usize,
        penalty: Arc<PenaltyMatrix>,
        hyper: &Hyperparameters,
    ) -> Result<Self> {
        let n = window.n_sites();
        if penalty.n() != n {
            return Err(Error::Domain(format!(
                "penalty matrix size {} does not match window size {n}",
                penalty.n()
            )));
        }
        let dense = window.dense_m()?;
        let mut groups = Vec::with_capacity(n_groups);
        for k in 0..n_groups {
            let members: Vec<usize> = (0..group_of.len())
                .filter(|&j| group_of[j] == k)
                .collect();
            let ybar = group_means(window, group_of, k)?;
            let ybar_coords = penalty.to_coords(&ybar);
            let ss_within: Vec<f64> = members
                .iter()
                .map(|&j| {
                    (0..n)
                        .map(|i| {
                            let r = dense[i][j] - ybar[i];
                            r * r
                        })
                        .sum()
                })
                .collect();
            let mean = ybar.iter().sum::<f64>() / n as f64;
            let var_ybar = if n > 1 {
                ybar.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            let log_rb_individual = ss_within
                .iter()
                .map(|&ss| {
                    log_rb_individual_term(n, ss, hyper.a_sigma_ind, hyper.b_sigma_ind)
                })
                .sum();
            groups.push(GroupData {
                members,
                ybar,
                ybar_coords,
                ss_within,
                var_ybar,
                log_rb_individual,
            });
        }
        Ok(WindowWorkspace {
            window_index: window.index,
            chrom: window.chrom.clone(),
            start_pos: window.start_pos,
            end_pos: window.end_pos,
            n,
            penalty,
            groups,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Sum over groups and members of the individual-level RB factors.
    pub fn log_rb_individual_total(&self) -> f64 {
        self.groups.iter().map(|g| g.log_rb_individual).sum()
    }
}

/// `log p(ybar | tau, sigma2)`: the group-mean likelihood with the spline
/// integrated out against its singular prior.
///
/// In the eigenbasis each penalized coordinate contributes
/// `N(c_i; 0, sigma2 + 1/(tau lambda_i))` and the two null coordinates
/// integrate to one.
pub fn log_predictive(
    penalty: &PenaltyMatrix,
    ybar_coords: &[f64],
    tau: f64,
    sigma2: f64,
) -> f64 {
    let eig = penalty.eigenvalues();
    let mut total = 0.0;
    for i in 2..eig.len() {
        let var = sigma2 + 1.0 / (tau * eig[i]);
        total += normal_logpdf(ybar_coords[i], 0.0, var);
    }
    total
}

/// `log E[N(ybar; g, sigma2 I) | lambda, ybar]` with `g` drawn from its full
/// conditional: the mean-level factor of the posterior-averaged likelihood.
pub fn log_rb_mean_level(
    penalty: &PenaltyMatrix,
    ybar_coords: &[f64],
    tau: f64,
    sigma2: f64,
) -> f64 {
    let alpha = tau * sigma2;
    let eig = penalty.eigenvalues();
    let mut total = 0.0;
    for (i, &c) in ybar_coords.iter().enumerate() {
        let shrink = 1.0 + alpha * eig[i];
        let resid = c * (alpha * eig[i] / shrink);
        let var = sigma2 * (1.0 + 1.0 / shrink);
        total += normal_logpdf(resid, 0.0, var);
    }
    total
}

/// `log E[N_n(y_j; ybar, s2 I) | y]` with `s2` drawn from its inverse-gamma
/// full conditional `IG(a + n/2, b + ss/2)`; `ss = ||y_j - ybar||^2`.
pub fn log_rb_individual_term(n: usize, ss: f64, a: f64, b: f64) -> f64 {
    let half_n = n as f64 / 2.0;
    let a_post = a + half_n;
    let b_post = b + ss / 2.0;
    -half_n * (2.0 * PI).ln() + a_post * b_post.ln() - ln_gamma(a_post)
        + ln_gamma(a_post + half_n)
        - (a_post + half_n) * (b_post + ss / 2.0).ln()
}

/// Sum of [`log_predictive`] over all groups plus the individual factors:
/// the per-particle weighting density of window data given hyperparameters.
pub fn log_predictive_total(ws: &WindowWorkspace, taus: &[f64], sigma2s: &[f64]) -> f64 {
    let mut total = ws.log_rb_individual_total();
    for (k, g) in ws.groups.iter().enumerate() {
        total += log_predictive(&ws.penalty, &g.ybar_coords, taus[k], sigma2s[k]);
    }
    total
}

/// Posterior-averaged log likelihood at fixed hyperparameters: mean-level
/// RB factors over all groups plus the individual factors.
pub fn log_rb_likelihood_total(ws: &WindowWorkspace, taus: &[f64], sigma2s: &[f64]) -> f64 {
    let mut total = ws.log_rb_individual_total();
    for (k, g) in ws.groups.iter().enumerate() {
        total += log_rb_mean_level(&ws.penalty, &g.ybar_coords, taus[k], sigma2s[k]);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_reference_values() {
        assert!(ln_gamma(1.0).abs() < 1e-12);
        assert!(ln_gamma(2.0).abs() < 1e-12);
        assert_relative_eq!(ln_gamma(0.5), PI.sqrt().ln(), max_relative = 1e-12);
        let fact9: f64 = (1..=9).map(|i| (i as f64).ln()).sum();
        assert_relative_eq!(ln_gamma(10.0), fact9, max_relative = 1e-12);
        let fact50: f64 = (1..=50).map(|i| (i as f64).ln()).sum();
        assert_relative_eq!(ln_gamma(51.0), fact50, max_relative = 1e-12);
    }

    #[test]
    fn gamma_and_inv_gamma_normalize() {
        // trapezoid check that the densities integrate to one
        let steps = 400_000;
        let hi = 60.0;
        let dx = hi / steps as f64;
        let mut total_g = 0.0;
        let mut total_ig = 0.0;
        for i in 1..steps {
            let x = i as f64 * dx;
            total_g += gamma_logpdf(x, 2.5, 1.7).exp() * dx;
            total_ig += inv_gamma_logpdf(x, 2.5, 1.7).exp() * dx;
        }
        assert!((total_g - 1.0).abs() < 1e-3, "{total_g}");
        assert!((total_ig - 1.0).abs() < 1e-3, "{total_ig}");
    }

    #[test]
    fn predictive_matches_quadrature_on_n3() {
        // one penalized coordinate; integrate it numerically on a grid
        let pen = PenaltyMatrix::ordinal(3).unwrap();
        let ybar = [0.4, 1.3, -0.2];
        let coords = pen.to_coords(&ybar);
        let eig = pen.eigenvalues();
        for &(tau, sigma2) in &[(0.5, 0.3), (2.0, 1.1), (10.0, 0.05)] {
            let closed = log_predictive(&pen, &coords, tau, sigma2);
            let lambda = eig[2];
            let prior_var = 1.0 / (tau * lambda);
            let hw = 12.0 * (prior_var.sqrt() + sigma2.sqrt());
            let steps = 200_000;
            let dz = 2.0 * hw / steps as f64;
            let mut integral = 0.0;
            for s in 0..steps {
                let z = -hw + (s as f64 + 0.5) * dz;
                integral += (normal_logpdf(coords[2], z, sigma2)
                    + normal_logpdf(z, 0.0, prior_var))
                .exp()
                    * dz;
            }
            assert!(
                (closed - integral.ln()).abs() < 1e-3,
                "tau={tau} sigma2={sigma2}: closed {closed} vs quad {}",
                integral.ln()
            );
        }
    }

    #[test]
    fn rb_individual_matches_quadrature() {
        let (n, ss, a, b) = (7usize, 3.4, 1.0, 1.0);
        let closed = log_rb_individual_term(n, ss, a, b);
        // integrate N_n(ss; sigma2) against IG(a + n/2, b + ss/2) on a grid
        let a_post = a + n as f64 / 2.0;
        let b_post = b + ss / 2.0;
        let steps = 2_000_000;
        let hi = 80.0;
        let dx = hi / steps as f64;
        let mut integral = 0.0;
        for i in 0..steps {
            let s2 = (i as f64 + 0.5) * dx;
            let log_lik = -(n as f64 / 2.0) * (2.0 * PI * s2).ln() - ss / (2.0 * s2);
            integral += (log_lik + inv_gamma_logpdf(s2, a_post, b_post)).exp() * dx;
        }
        assert!(
            (closed - integral.ln()).abs() < 1e-3,
            "closed {closed} vs quad {}",
            integral.ln()
        );
    }

    #[test]
    fn rb_mean_level_matches_monte_carlo() {
        use rand_chacha::rand_core::SeedableRng;
        let pen = PenaltyMatrix::ordinal(4).unwrap();
        let ybar = [0.0, 1.0, 0.5, -0.3];
        let coords = pen.to_coords(&ybar);
        let (tau, sigma2) = (1.4, 0.5);
        let closed = log_rb_mean_level(&pen, &coords, tau, sigma2);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let draws = 200_000;
        let alpha = tau * sigma2;
        let mut acc: Vec<f64> = Vec::with_capacity(draws);
        for _ in 0..draws {
            let c = pen.sample_coords(&coords, alpha, sigma2, &mut rng);
            let ll: f64 = coords
                .iter()
                .zip(&c)
                .map(|(&y, &ci)| normal_logpdf(y, ci, sigma2))
                .sum();
            acc.push(ll);
        }
        let max = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mc = max + (acc.iter().map(|l| (l - max).exp()).sum::<f64>() / draws as f64).ln();
        assert!((closed - mc).abs() < 0.02, "closed {closed} vs mc {mc}");
    }
}
