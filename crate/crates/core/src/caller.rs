//! Posterior Bayes factors comparing the pooled one-mean-function model
//! against the per-group model, and the resulting DMR calls.
//!
//! The marginal under either model is the posterior-weighted average of the
//! likelihood. Over a hyperparameter population the likelihood is averaged
//! in closed form over the spline and individual-variance conditionals
//! (the same integral, evaluated with the inner coordinates integrated out
//! instead of sampled); over fully materialized states it is the plain
//! hierarchical likelihood. Both paths feed the same log-sum-exp.

use crate::data::Window;
use crate::error::{Error, Result};
use crate::filter::Population;
use crate::gibbs::{loglik, FullState};
use crate::likelihood::{log_rb_likelihood_total, WindowWorkspace};

/// Per-window call: log Bayes factor of pooled vs grouped, and the
/// decision at the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct DmrCall {
    /// 1-based window index.
    pub window: usize,
    pub chrom: String,
    pub start: u64,
    pub end: u64,
    pub n_sites: usize,
    pub log_bf: f64,
    pub is_dmr: bool,
    pub threshold: f64,
}

/// log( sum w_i exp(l_i) / sum w_i ), stabilized.
fn weighted_log_sum_exp(log_liks: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    if log_liks.is_empty() {
        return Err(Error::Domain("marginal likelihood over an empty population".into()));
    }
    if let Some(w) = weights {
        if w.len() != log_liks.len() {
            return Err(Error::Domain("weights and likelihoods differ in length".into()));
        }
        if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain("weights must be positive and finite".into()));
        }
    }
    let max = log_liks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NonFinite {
            context: "all log likelihoods are -inf".into(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &l) in log_liks.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        num += w * (l - max).exp();
        den += w;
    }
    Ok(max + (num / den).ln())
}

/// Marginal likelihood from a hyperparameter population: the likelihood of
/// each particle is integrated in closed form over the spline and
/// individual-variance conditionals.
pub fn log_marginal_likelihood_hyper(
    ws: &WindowWorkspace,
    lambdas: &[(Vec<f64>, Vec<f64>)],
    weights: Option<&[f64]>,
) -> Result<f64> {
    let log_liks: Vec<f64> = lambdas
        .iter()
        .map(|(taus, sigma2s)| log_rb_likelihood_total(ws, taus, sigma2s))
        .collect();
    if log_liks.iter().any(|l| l.is_nan()) {
        return Err(Error::NonFinite {
            context: format!("marginal likelihood at window {}", ws.window_index),
        });
    }
    weighted_log_sum_exp(&log_liks, weights)
}

/// Marginal likelihood from a filter population.
pub fn log_marginal_likelihood_population(
    ws: &WindowWorkspace,
    population: &Population,
) -> Result<f64> {
    let lambdas: Vec<(Vec<f64>, Vec<f64>)> = population
        .particles
        .iter()
        .map(|p| (p.taus(), p.sigma2s()))
        .collect();
    let weights: Vec<f64> = population.particles.iter().map(|p| p.weight).collect();
    log_marginal_likelihood_hyper(ws, &lambdas, Some(&weights))
}

/// Marginal likelihood from fully materialized states (the plain
/// weighted average of hierarchical likelihoods).
pub fn log_marginal_likelihood_states(
    window: &Window,
    group_of: &[usize],
    n_groups: usize,
    states: &[FullState],
    weights: Option<&[f64]>,
) -> Result<f64> {
    let log_liks: Vec<f64> = states
        .iter()
        .map(|s| loglik(window, group_of, n_groups, s))
        .collect::<Result<_>>()?;
    weighted_log_sum_exp(&log_liks, weights)
}

/// log BF(M1, M2) = log m(y | pooled) - log m(y | grouped).
pub fn log_bayes_factor(log_marginal_pooled: f64, log_marginal_grouped: f64) -> f64 {
    log_marginal_pooled - log_marginal_grouped
}

/// Thresholding rule: a window is a DMR when its log Bayes factor falls
/// strictly below the threshold.
pub fn call_dmrs(
    windows: &[&WindowWorkspace],
    log_bfs: &[f64],
    threshold: f64,
) -> Vec<DmrCall> {
    windows
        .iter()
        .zip(log_bfs)
        .map(|(ws, &log_bf)| DmrCall {
            window: ws.window_index + 1,
            chrom: ws.chrom.clone(),
            start: ws.start_pos,
            end: ws.end_pos,
            n_sites: ws.n,
            log_bf,
            is_dmr: log_bf < threshold,
            threshold,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Window;
    use crate::gibbs::Hyperparameters;
    use crate::likelihood::{
        gamma_logpdf, inv_gamma_logpdf, log_rb_likelihood_total, normal_logpdf,
    };
    use crate::spline::PenaltyMatrix;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn tiny_workspace() -> (Window, WindowWorkspace) {
        let m = vec![vec![0.3], vec![1.0], vec![0.1]];
        let w = Window {
            index: 0,
            chrom: "chr1".into(),
            start_pos: 10,
            end_pos: 30,
            site_offset: 0,
            m: m.into_iter()
                .map(|r| r.into_iter().map(Some).collect())
                .collect(),
        };
        let pen = Arc::new(PenaltyMatrix::ordinal(3).unwrap());
        let ws =
            WindowWorkspace::build(&w, &[0], 1, pen, &Hyperparameters::default()).unwrap();
        (w, ws)
    }

    #[test]
    fn single_particle_returns_its_own_likelihood() {
        let (_, ws) = tiny_workspace();
        let lambda = (vec![1.4], vec![0.7]);
        let expected = log_rb_likelihood_total(&ws, &lambda.0, &lambda.1);
        let got = log_marginal_likelihood_hyper(&ws, &[lambda], None).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn duplicating_particles_leaves_marginal_unchanged() {
        let (_, ws) = tiny_workspace();
        let l1 = (vec![1.4], vec![0.7]);
        let l2 = (vec![0.2], vec![2.0]);
        let once = log_marginal_likelihood_hyper(
            &ws,
            &[l1.clone(), l2.clone()],
            Some(&[0.5, 1.5]),
        )
        .unwrap();
        let twice = log_marginal_likelihood_hyper(
            &ws,
            &[l1.clone(), l2.clone(), l1, l2],
            Some(&[0.5, 1.5, 0.5, 1.5]),
        )
        .unwrap();
        assert_relative_eq!(once, twice, max_relative = 1e-12);
    }

    #[test]
    fn weight_rescaling_leaves_marginal_unchanged() {
        let (_, ws) = tiny_workspace();
        let lambdas = vec![(vec![1.4], vec![0.7]), (vec![0.2], vec![2.0])];
        let a = log_marginal_likelihood_hyper(&ws, &lambdas, Some(&[1.0, 3.0])).unwrap();
        let b = log_marginal_likelihood_hyper(&ws, &lambdas, Some(&[10.0, 30.0])).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn states_path_single_state_is_its_loglik() {
        let (w, _) = tiny_workspace();
        let state = FullState {
            g: vec![vec![0.2, 0.8, 0.2]],
            sigma2: vec![0.5],
            sigma2_ind: vec![vec![0.9]],
        };
        let expected = loglik(&w, &[0], 1, &state).unwrap();
        let got =
            log_marginal_likelihood_states(&w, &[0], 1, &[state], None).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn bayes_factor_is_antisymmetric_and_zero_on_ties() {
        assert_relative_eq!(log_bayes_factor(-3.0, -3.0), 0.0);
        assert_relative_eq!(
            log_bayes_factor(-1.0, -4.0),
            -log_bayes_factor(-4.0, -1.0)
        );
    }

    #[test]
    fn dmr_threshold_is_strict() {
        let (_, ws) = tiny_workspace();
        let calls = call_dmrs(&[&ws, &ws, &ws], &[-6.0, -5.0, -4.9], -5.0);
        assert_eq!(calls.len(), 3);
        assert!(calls[0].is_dmr);
        assert!(!calls[1].is_dmr, "exact threshold must not call a DMR");
        assert!(!calls[2].is_dmr);
        assert_eq!(calls[0].window, 1);
        assert_eq!(calls[0].start, 10);
        assert_eq!(calls[0].end, 30);
    }

    #[test]
    fn empty_series_yields_empty_calls() {
        let calls = call_dmrs(&[], &[], -5.0);
        assert!(calls.is_empty());
    }

    #[test]
    fn empty_population_is_an_error() {
        let (_, ws) = tiny_workspace();
        assert!(log_marginal_likelihood_hyper(&ws, &[], None).is_err());
    }

    /// Brute-force oracle for the posterior-averaged likelihood on a tiny
    /// window: every integral is numeric, none of the closed forms are
    /// reused. The estimand is
    /// `∫ p(y|Θ) p(Θ|y) dΘ = ∫ p(y|Θ)^2 p(Θ) dΘ / ∫ p(y|Θ) p(Θ) dΘ`
    /// with `Θ = (g, tau, sigma2, sigma2_ind)`.
    #[test]
    fn grid_population_matches_brute_force_posterior_average() {
        let (_, ws) = tiny_workspace();
        let hyper = Hyperparameters::default();
        let pen = &ws.penalty;
        let eig = pen.eigenvalues();
        let coords = &ws.groups[0].ybar_coords;
        // m = 1 sample: the individual residual around the group mean is 0
        let n = 3usize;

        // ---- estimator side: dense (tau, sigma2) grid weighted by the
        // hyperparameter posterior ----
        let tau_grid: Vec<f64> = (0..60).map(|i| 0.02 * (1.0 + i as f64)).collect();
        let s2_grid: Vec<f64> = (0..60).map(|i| 0.02 * (1.0 + i as f64)).collect();
        let mut lambdas = Vec::new();
        let mut weights = Vec::new();
        for &tau in &tau_grid {
            for &s2 in &s2_grid {
                // posterior over (tau, sigma2) up to a constant: predictive
                // times priors, computed numerically below for independence
                let mut log_pred = 0.0;
                for i in 2..n {
                    // numeric integral over the penalized coordinate
                    let prior_var = 1.0 / (tau * eig[i]);
                    let hw = 10.0 * (prior_var.sqrt() + s2.sqrt());
                    let steps = 600;
                    let dz = 2.0 * hw / steps as f64;
                    let mut acc = 0.0;
                    for s in 0..steps {
                        let z = -hw + (s as f64 + 0.5) * dz;
                        acc += (normal_logpdf(coords[i], z, s2)
                            + normal_logpdf(z, 0.0, prior_var))
                        .exp()
                            * dz;
                    }
                    log_pred += acc.ln();
                }
                let log_post = log_pred
                    + gamma_logpdf(tau, hyper.a_tau, hyper.b_tau)
                    + inv_gamma_logpdf(s2, hyper.a_sigma, hyper.b_sigma);
                lambdas.push((vec![tau], vec![s2]));
                weights.push(log_post);
            }
        }
        let max_w = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = weights.iter().map(|w| (w - max_w).exp()).collect();
        let estimate = log_marginal_likelihood_hyper(&ws, &lambdas, Some(&weights)).unwrap();

        // ---- oracle side: N / D with numeric integrals over everything ----
        // conditional on sigma2, the two null coordinates give
        //   D-factor: ∫ N(c; z, s2) dz            (numeric)
        //   N-factor: ∫ N(c; z, s2)^2 dz          (numeric)
        // and conditional on (tau, sigma2) the penalized coordinate gives
        // the same with the spline prior attached.
        let ind_integral = |power: f64, s2i_shape: f64, s2i_rate: f64| -> f64 {
            // ∫ [(2 pi s)^(-n/2) e^{-0/(2s)}]^power IG(s; shape, rate) ds, numeric
            let steps = 40_000;
            let hi = 50.0;
            let ds = hi / steps as f64;
            let mut acc = 0.0;
            for i in 0..steps {
                let s = (i as f64 + 0.5) * ds;
                let log_lik = -(n as f64 / 2.0) * (2.0 * std::f64::consts::PI * s).ln();
                acc += (power * log_lik + inv_gamma_logpdf(s, s2i_shape, s2i_rate)).exp() * ds;
            }
            acc
        };
        let null_integral = |c: f64, s2: f64, power: f64| -> f64 {
            let hw = 12.0 * s2.sqrt();
            let steps = 4000;
            let dz = 2.0 * hw / steps as f64;
            let mut acc = 0.0;
            for s in 0..steps {
                let z = c - hw + (s as f64 + 0.5) * dz;
                acc += (power * normal_logpdf(c, z, s2)).exp() * dz;
            }
            acc
        };
        let pen_integral = |c: f64, tau: f64, s2: f64, power: f64| -> f64 {
            let prior_var = 1.0 / (tau * eig[2]);
            let hw = 10.0 * (prior_var.sqrt() + s2.sqrt());
            let steps = 4000;
            let dz = 2.0 * hw / steps as f64;
            let mut acc = 0.0;
            for s in 0..steps {
                let z = -hw + (s as f64 + 0.5) * dz;
                acc += (power * normal_logpdf(c, z, s2) + normal_logpdf(z, 0.0, prior_var))
                    .exp()
                    * dz;
            }
            acc
        };

        let mut numerator = 0.0;
        let mut denominator = 0.0;
        let dtau = 0.02;
        let ds2 = 0.02;
        for &tau in &tau_grid {
            for &s2 in &s2_grid {
                let prior = (gamma_logpdf(tau, hyper.a_tau, hyper.b_tau)
                    + inv_gamma_logpdf(s2, hyper.a_sigma, hyper.b_sigma))
                .exp();
                let d_g = null_integral(coords[0], s2, 1.0)
                    * null_integral(coords[1], s2, 1.0)
                    * pen_integral(coords[2], tau, s2, 1.0);
                let n_g = null_integral(coords[0], s2, 2.0)
                    * null_integral(coords[1], s2, 2.0)
                    * pen_integral(coords[2], tau, s2, 2.0);
                denominator += prior * d_g * dtau * ds2;
                numerator += prior * n_g * dtau * ds2;
            }
        }
        // individual level: zero residual, sigma2_ind integrated against
        // its prior (denominator) and its posterior-weighted square
        // (numerator); these factor out of the (tau, sigma2) sums
        let shape = hyper.a_sigma_ind;
        let rate = hyper.b_sigma_ind;
        let d_ind = ind_integral(1.0, shape, rate);
        let n_ind = ind_integral(2.0, shape, rate);
        let oracle = (numerator * n_ind / (denominator * d_ind)).ln();

        assert!(
            (estimate - oracle).abs() < 1e-2,
            "estimate {estimate} vs oracle {oracle}"
        );
    }
}
