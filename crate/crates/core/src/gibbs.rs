//! Within-window Bayesian inference: a Gibbs sampler over the spline
//! values, the smoothness ratio `tau = alpha / sigma2`, the group-level
//! variance and the per-individual variances.
//!
//! Full conditionals (all conjugate):
//!
//! ```text
//! g_k      | .  ~  N[(I + a_k K)^-1 ybar_k, (I + a_k K)^-1 sigma_k^2],  a_k = tau_k sigma_k^2
//! tau_k    | .  ~  Gamma[(n-2)/2 + A_t,  rate = g_k' K g_k / 2 + 1/B_t]
//! sigma_k^2| .  ~  InvGamma[n/2 + A_s,   ||ybar_k - g_k||^2 / 2 + B_s]
//! sigma_jk^2|. ~  InvGamma[n/2 + A_s*,  ||y_jk - ybar_k||^2 / 2 + B_s*]
//! ```
//!
//! The printed tau conditional is improper without the prior rate `1/B_t`
//! when `g' K g` vanishes (constant or linear spline values), so the prior
//! contributions are always included.
//!
//! Chains run in the penalty eigenbasis where every conditional is O(n).

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::data::{group_means, Window};
use crate::error::{Error, Result};
use crate::likelihood::{normal_logpdf, WindowWorkspace};

/// Prior and chain-length settings for the within-window sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    /// Gamma shape for tau.
    pub a_tau: f64,
    /// Gamma scale for tau.
    pub b_tau: f64,
    /// Inverse-gamma shape / rate for the group-level variance.
    pub a_sigma: f64,
    pub b_sigma: f64,
    /// Inverse-gamma shape / rate for the individual variances.
    pub a_sigma_ind: f64,
    pub b_sigma_ind: f64,
    /// Retained iterations after burn-in.
    pub iterations: usize,
    /// Burn-in iterations.
    pub burn_in: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            a_tau: 1.0,
            b_tau: 1000.0,
            a_sigma: 1.0,
            b_sigma: 1.0,
            a_sigma_ind: 1.0,
            b_sigma_ind: 1.0,
            iterations: 20_000,
            burn_in: 1000,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a_tau", self.a_tau),
            ("b_tau", self.b_tau),
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_sigma_ind", self.a_sigma_ind),
            ("b_sigma_ind", self.b_sigma_ind),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.iterations == 0 || self.iterations <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        Ok(())
    }
}

/// Parameters of the tau full conditional: (shape, rate).
pub fn tau_conditional(n: usize, quad_form: f64, hyper: &Hyperparameters) -> (f64, f64) {
    (
        (n as f64 - 2.0) / 2.0 + hyper.a_tau,
        quad_form / 2.0 + 1.0 / hyper.b_tau,
    )
}

/// Parameters of the group-variance full conditional: (shape, rate).
pub fn sigma2_conditional(n: usize, resid_ss: f64, hyper: &Hyperparameters) -> (f64, f64) {
    (n as f64 / 2.0 + hyper.a_sigma, resid_ss / 2.0 + hyper.b_sigma)
}

/// Parameters of an individual-variance full conditional: (shape, rate).
pub fn sigma2_ind_conditional(n: usize, resid_ss: f64, hyper: &Hyperparameters) -> (f64, f64) {
    (
        n as f64 / 2.0 + hyper.a_sigma_ind,
        resid_ss / 2.0 + hyper.b_sigma_ind,
    )
}

pub fn draw_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64, what: &str) -> Result<f64> {
    let dist = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::NonFinite {
        context: format!("{what} conditional Gamma({shape}, rate {rate}): {e}"),
    })?;
    let v = dist.sample(rng);
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::NonFinite {
            context: format!("{what} draw from Gamma({shape}, rate {rate})"),
        });
    }
    Ok(v)
}

pub fn draw_inv_gamma<R: Rng + ?Sized>(
    rng: &mut R,
    shape: f64,
    rate: f64,
    what: &str,
) -> Result<f64> {
    let y = draw_gamma(rng, shape, rate, what)?;
    let v = 1.0 / y;
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::NonFinite {
            context: format!("{what} draw from InvGamma({shape}, {rate})"),
        });
    }
    Ok(v)
}

/// Chain state for one group, with spline values kept in the eigenbasis.
#[derive(Debug, Clone)]
pub struct GroupChainState {
    pub coords: Vec<f64>,
    pub tau: f64,
    pub sigma2: f64,
    pub sigma2_ind: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub groups: Vec<GroupChainState>,
}

impl ChainState {
    /// Initial state: tau = 1, variances from sample moments, spline at its
    /// conditional mean.
    pub fn init(ws: &WindowWorkspace) -> Self {
        let n = ws.n;
        let groups = ws
            .groups
            .iter()
            .map(|g| {
                let tau = 1.0;
                let sigma2 = g.var_ybar.max(1e-8);
                let alpha = tau * sigma2;
                let eig = ws.penalty.eigenvalues();
                let coords: Vec<f64> = g
                    .ybar_coords
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| y / (1.0 + alpha * eig[i]))
                    .collect();
                let denom = (n.max(2) - 1) as f64;
                let sigma2_ind = g
                    .ss_within
                    .iter()
                    .map(|&ss| (ss / denom).max(1e-8))
                    .collect();
                GroupChainState {
                    coords,
                    tau,
                    sigma2,
                    sigma2_ind,
                }
            })
            .collect();
        ChainState { groups }
    }
}

/// Update order of a systematic scan; swapping it must not change the
/// stationary distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    #[default]
    SplineFirst,
    VarianceFirst,
}

/// One systematic-scan update of every conditional in every group.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    ws: &WindowWorkspace,
    hyper: &Hyperparameters,
    order: SweepOrder,
    rng: &mut R,
) -> Result<()> {
    let n = ws.n;
    let eig = ws.penalty.eigenvalues();
    for (k, group) in state.groups.iter_mut().enumerate() {
        let data = &ws.groups[k];
        let update_spline = |group: &mut GroupChainState, rng: &mut R| -> Result<()> {
            let alpha = group.tau * group.sigma2;
            group.coords = ws
                .penalty
                .sample_coords(&data.ybar_coords, alpha, group.sigma2, rng);
            if group.coords.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("spline draw in group {k}"),
                });
            }
            Ok(())
        };
        let update_tau = |group: &mut GroupChainState, rng: &mut R| -> Result<()> {
            let quad: f64 = group
                .coords
                .iter()
                .zip(eig)
                .map(|(&c, &l)| l * c * c)
                .sum::<f64>()
                .max(0.0);
            let (shape, rate) = tau_conditional(n, quad, hyper);
            group.tau = draw_gamma(rng, shape, rate, "tau")?;
            Ok(())
        };
        let update_sigma2 = |group: &mut GroupChainState, rng: &mut R| -> Result<()> {
            let ss: f64 = group
                .coords
                .iter()
                .zip(&data.ybar_coords)
                .map(|(&c, &y)| (y - c) * (y - c))
                .sum();
            let (shape, rate) = sigma2_conditional(n, ss, hyper);
            group.sigma2 = draw_inv_gamma(rng, shape, rate, "sigma2")?;
            Ok(())
        };
        match order {
            SweepOrder::SplineFirst => {
                update_spline(group, rng)?;
                update_tau(group, rng)?;
                update_sigma2(group, rng)?;
            }
            SweepOrder::VarianceFirst => {
                update_sigma2(group, rng)?;
                update_tau(group, rng)?;
                update_spline(group, rng)?;
            }
        }
        for (j, &ss) in data.ss_within.iter().enumerate() {
            let (shape, rate) = sigma2_ind_conditional(n, ss, hyper);
            group.sigma2_ind[j] = draw_inv_gamma(rng, shape, rate, "sigma2_ind")?;
        }
    }
    Ok(())
}

/// One retained posterior draw. Hyperparameters are always kept; spline
/// coordinates and individual variances only when requested.
#[derive(Debug, Clone)]
pub struct GibbsDraw {
    pub taus: Vec<f64>,
    pub sigma2s: Vec<f64>,
    pub full: Option<FullDraw>,
}

#[derive(Debug, Clone)]
pub struct FullDraw {
    pub coords: Vec<Vec<f64>>,
    pub sigma2_ind: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GibbsOptions {
    pub keep_full_states: bool,
    pub order: SweepOrder,
}

#[derive(Debug, Clone)]
pub struct GibbsRun {
    pub draws: Vec<GibbsDraw>,
}

/// Run the sampler and return the retained post-burn-in draws. The
/// `(tau_k, sigma2_k)` pairs of each draw double as the seed population for
/// the first window of the particle filter.
pub fn run_gibbs<R: Rng + ?Sized>(
    ws: &WindowWorkspace,
    hyper: &Hyperparameters,
    opts: GibbsOptions,
    rng: &mut R,
) -> Result<GibbsRun> {
    hyper.validate()?;
    if ws.groups.iter().any(|g| g.members.is_empty()) {
        return Err(Error::Domain("every group needs at least one sample".into()));
    }
    let mut state = ChainState::init(ws);
    let total = hyper.burn_in + hyper.iterations;
    let mut draws = Vec::with_capacity(hyper.iterations);
    for sweep in 0..total {
        gibbs_sweep(&mut state, ws, hyper, opts.order, rng)?;
        if sweep < hyper.burn_in {
            continue;
        }
        let taus: Vec<f64> = state.groups.iter().map(|g| g.tau).collect();
        let sigma2s: Vec<f64> = state.groups.iter().map(|g| g.sigma2).collect();
        let full = opts.keep_full_states.then(|| FullDraw {
            coords: state.groups.iter().map(|g| g.coords.clone()).collect(),
            sigma2_ind: state.groups.iter().map(|g| g.sigma2_ind.clone()).collect(),
        });
        draws.push(GibbsDraw {
            taus,
            sigma2s,
            full,
        });
    }
    Ok(GibbsRun { draws })
}

/// Fully materialized spline state, in data space.
#[derive(Debug, Clone)]
pub struct FullState {
    /// Spline values per group, length n.
    pub g: Vec<Vec<f64>>,
    /// Group-level variances.
    pub sigma2: Vec<f64>,
    /// Individual variances per group, ordered like the group's member
    /// columns (ascending column index).
    pub sigma2_ind: Vec<Vec<f64>>,
}

/// Log likelihood of a window's M-values under the hierarchical
/// factorization: group means around the spline at the group variance,
/// individual profiles around the group mean at the individual variances.
pub fn loglik(
    window: &Window,
    group_of: &[usize],
    n_groups: usize,
    state: &FullState,
) -> Result<f64> {
    let dense = window.dense_m()?;
    let n = window.n_sites();
    let mut total = 0.0;
    for k in 0..n_groups {
        let ybar = group_means(window, group_of, k)?;
        let g = &state.g[k];
        let sigma2 = state.sigma2[k];
        if g.len() != n {
            return Err(Error::Domain(format!(
                "state group {k} has {} spline values for {n} sites",
                g.len()
            )));
        }
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(Error::Domain(format!("sigma2[{k}] = {sigma2} invalid")));
        }
        for i in 0..n {
            total += normal_logpdf(ybar[i], g[i], sigma2);
        }
        let members: Vec<usize> = (0..group_of.len())
            .filter(|&j| group_of[j] == k)
            .collect();
        for (slot, &j) in members.iter().enumerate() {
            let s2 = state.sigma2_ind[k][slot];
            if !s2.is_finite() || s2 <= 0.0 {
                return Err(Error::Domain(format!(
                    "sigma2_ind[{k}][{slot}] = {s2} invalid"
                )));
            }
            for i in 0..n {
                total += normal_logpdf(dense[i][j], ybar[i], s2);
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: format!("loglik of window {}", window.index),
        });
    }
    Ok(total)
}
