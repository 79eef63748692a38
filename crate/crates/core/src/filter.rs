//! Dynamically weighted particle filter over the per-window
//! hyperparameters `(tau_1..G, sigma2_1..G)`.
//!
//! Window 1 is seeded with Gibbs draws at unit weight. Every later window
//! extrapolates each particle through the log-scale random-walk transition,
//! multiplies its weight by the predictive likelihood of the new window's
//! data (the transition kernel doubles as the proposal, so everything else
//! cancels), refines with dynamically weighted Metropolis moves and then
//! applies pruned-enriched population control.
//!
//! Weights are renormalized to unit mean at the stage barriers: the W-type
//! move inflates total weight by design (accepted mass `r_d + theta` plus
//! rejected mass `w/(1-a)` averages to `w(1 + r)`), and the fixed weight
//! control bounds only make sense on a stable scale. Rescaling every weight
//! by a common factor leaves all weighted estimates unchanged.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::{run_gibbs, GibbsOptions, Hyperparameters};
use crate::likelihood::{
    gamma_logpdf, inv_gamma_logpdf, log_predictive_total, normal_logpdf, WindowWorkspace,
};
use crate::rng::{derive_rng, tag};

/// Variances of the Gaussian increments driving the window-to-window
/// random walk on `log(1/tau)` and `log(sigma2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionNoise {
    pub var_log_inv_tau: f64,
    pub var_log_sigma2: f64,
}

impl Default for TransitionNoise {
    fn default() -> Self {
        TransitionNoise {
            var_log_inv_tau: 0.01,
            var_log_sigma2: 0.01,
        }
    }
}

impl TransitionNoise {
    pub fn validate(&self) -> Result<()> {
        if self.var_log_inv_tau < 0.0 || self.var_log_sigma2 < 0.0 {
            return Err(Error::Config("transition variances must be >= 0".into()));
        }
        Ok(())
    }
}

/// One hyperparameter particle, carried on the log scale so positivity is
/// automatic.
#[derive(Debug, Clone)]
pub struct Particle {
    pub log_tau: Vec<f64>,
    pub log_sigma2: Vec<f64>,
    pub weight: f64,
    pub lineage: u64,
}

impl Particle {
    pub fn taus(&self) -> Vec<f64> {
        self.log_tau.iter().map(|v| v.exp()).collect()
    }

    pub fn sigma2s(&self) -> Vec<f64> {
        self.log_sigma2.iter().map(|v| v.exp()).collect()
    }
}

/// Size and weight bounds of the population control scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationBounds {
    pub n_low: usize,
    pub n_up: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub w_low: f64,
    pub w_up: f64,
}

impl Default for PopulationBounds {
    fn default() -> Self {
        PopulationBounds {
            n_low: 15_000,
            n_up: 25_000,
            n_min: 10_000,
            n_max: 30_000,
            w_low: (-5.0f64).exp(),
            w_up: 5.0f64.exp(),
        }
    }
}

impl PopulationBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_min <= self.n_low && self.n_low < self.n_up && self.n_up <= self.n_max) {
            return Err(Error::Config(format!(
                "population bounds must satisfy n_min <= n_low < n_up <= n_max, got {self:?}"
            )));
        }
        if self.n_min == 0 {
            return Err(Error::Config("n_min must be positive".into()));
        }
        if !(self.w_low > 0.0 && self.w_low < self.w_up && self.w_up.is_finite()) {
            return Err(Error::Config(format!(
                "weight bounds must satisfy 0 < w_low < w_up, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Shrink the size bounds by a desk-scale factor; weight bounds stay.
    pub fn scaled(&self, factor: f64) -> PopulationBounds {
        let s = |v: usize| ((v as f64 * factor).round() as usize).max(1);
        PopulationBounds {
            n_low: s(self.n_low),
            n_up: s(self.n_up),
            n_min: s(self.n_min),
            n_max: s(self.n_max),
            ..*self
        }
    }
}

#[derive(Debug, Clone)]
pub struct Population {
    pub particles: Vec<Particle>,
    pub window: usize,
}

impl Population {
    pub fn size(&self) -> usize {
        self.particles.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn effective_sample_size(&self) -> f64 {
        let sum: f64 = self.particles.iter().map(|p| p.weight).sum();
        let sum_sq: f64 = self.particles.iter().map(|p| p.weight * p.weight).sum();
        if sum_sq == 0.0 {
            0.0
        } else {
            sum * sum / sum_sq
        }
    }

    /// Weighted mean of a per-particle statistic.
    pub fn weighted_mean<F: Fn(&Particle) -> f64>(&self, f: F) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for p in &self.particles {
            num += p.weight * f(p);
            den += p.weight;
        }
        num / den
    }

    /// Rescale weights to unit mean.
    pub fn normalize_mean(&mut self) {
        let mean = self.total_weight() / self.size() as f64;
        if mean > 0.0 && mean.is_finite() {
            for p in &mut self.particles {
                p.weight /= mean;
            }
        }
    }
}

/// Apply the transition with explicit increments: `log(1/tau) += u`,
/// `log(sigma2) += v`.
pub fn extrapolate_deterministic(p: &Particle, u: &[f64], v: &[f64]) -> Particle {
    let log_tau = p
        .log_tau
        .iter()
        .zip(u)
        .map(|(&lt, &du)| lt - du)
        .collect();
    let log_sigma2 = p
        .log_sigma2
        .iter()
        .zip(v)
        .map(|(&ls, &dv)| ls + dv)
        .collect();
    Particle {
        log_tau,
        log_sigma2,
        weight: p.weight,
        lineage: p.lineage,
    }
}

/// Draw the Gaussian increments and apply the transition.
pub fn extrapolate<R: Rng + ?Sized>(
    p: &Particle,
    noise: &TransitionNoise,
    rng: &mut R,
) -> Particle {
    let g = p.log_tau.len();
    let sd_u = noise.var_log_inv_tau.sqrt();
    let sd_v = noise.var_log_sigma2.sqrt();
    let u: Vec<f64> = (0..g)
        .map(|_| sd_u * std_normal(rng))
        .collect();
    let v: Vec<f64> = (0..g)
        .map(|_| sd_v * std_normal(rng))
        .collect();
    extrapolate_deterministic(p, &u, &v)
}

/// `ln(w_{t-1}) + log p(y_t | lambda_hat)`: the log of the extrapolated
/// weight. Kept in log space because the predictive is astronomically
/// small for real window sizes.
pub fn incremental_log_weight(ws: &WindowWorkspace, particle: &Particle) -> Result<f64> {
    let lp = log_predictive_total(ws, &particle.taus(), &particle.sigma2s());
    if !lp.is_finite() {
        return Err(Error::NonFinite {
            context: format!(
                "predictive likelihood at window {}, lineage {}",
                ws.window_index, particle.lineage
            ),
        });
    }
    Ok(particle.weight.ln() + lp)
}

/// `w_hat = w_{t-1} * p(y_t | lambda_hat)`, for small windows where the
/// product does not underflow.
pub fn incremental_weight(ws: &WindowWorkspace, particle: &Particle) -> Result<f64> {
    Ok(incremental_log_weight(ws, particle)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveParams {
    /// Standard deviation of the log-scale random-walk proposal.
    pub step: f64,
    /// Weight-tempering constant of the W-type move.
    pub theta: f64,
}

impl Default for MoveParams {
    fn default() -> Self {
        MoveParams {
            step: 0.05,
            theta: 1.0,
        }
    }
}

/// One dynamically weighted Metropolis move.
///
/// With Metropolis ratio `r` and dynamic ratio `r_d = w r`, accept with
/// probability `a = r_d / (r_d + theta)` carrying weight `r_d + theta`;
/// otherwise keep the state with weight `w / (1 - a)`. Weighted
/// expectations are invariant under this transition.
pub fn dwis_w_move<R: Rng + ?Sized, F: Fn(&[f64], &[f64]) -> f64>(
    particle: &Particle,
    log_target: F,
    params: &MoveParams,
    rng: &mut R,
) -> Particle {
    let prop_tau: Vec<f64> = particle
        .log_tau
        .iter()
        .map(|&v| v + params.step * std_normal(rng))
        .collect();
    let prop_sigma2: Vec<f64> = particle
        .log_sigma2
        .iter()
        .map(|&v| v + params.step * std_normal(rng))
        .collect();

    let cur = log_target(&particle.log_tau, &particle.log_sigma2);
    let prop = log_target(&prop_tau, &prop_sigma2);
    // the proposal is symmetric in log coordinates, so the kernel cancels;
    // clamp the ratio to keep weights finite
    let llr = (prop - cur).clamp(-600.0, 600.0);
    let log_rd = (particle.weight.ln() + llr).clamp(-600.0, 600.0);
    let accept_prob = 1.0 / (1.0 + (params.theta.ln() - log_rd).exp());
    if rng.random::<f64>() < accept_prob {
        Particle {
            log_tau: prop_tau,
            log_sigma2: prop_sigma2,
            weight: log_rd.exp() + params.theta,
            lineage: particle.lineage,
        }
    } else {
        Particle {
            weight: particle.weight * (log_rd.exp() + params.theta) / params.theta,
            ..particle.clone()
        }
    }
}

fn control_pass<R: Rng + ?Sized>(
    particles: &[Particle],
    w_low: f64,
    w_up: f64,
    max_size: usize,
    window: usize,
    rng: &mut R,
) -> Result<Vec<Particle>> {
    let mut out = Vec::with_capacity(particles.len());
    for p in particles {
        if p.weight > w_up {
            let d = (p.weight / w_up).ceil();
            if !d.is_finite() || d as usize > max_size.saturating_mul(16) {
                return Err(Error::PopulationControl {
                    window,
                    msg: format!("weight {} would split into {d} copies", p.weight),
                });
            }
            let d = d as usize;
            let w = p.weight / d as f64;
            for _ in 0..d {
                out.push(Particle {
                    weight: w,
                    ..p.clone()
                });
            }
        } else if p.weight < w_low {
            if rng.random::<f64>() < p.weight / w_low {
                out.push(Particle {
                    weight: w_low,
                    ..p.clone()
                });
            }
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Adaptive pruned-enriched population control.
///
/// Splits overweight particles into equal shares, prunes underweight ones
/// with survival probability `w / w_low` (survivors promoted to `w_low`),
/// and rescales the weight bounds by `e` whenever the resulting size leaves
/// `[n_low, n_up]`, re-running the pass from the input population. Returns
/// the controlled population and the effective bounds used.
pub fn apepcs<R: Rng + ?Sized>(
    particles: &[Particle],
    bounds: &PopulationBounds,
    max_adaptations: usize,
    window: usize,
    rng: &mut R,
) -> Result<(Vec<Particle>, f64, f64)> {
    let mut w_low = bounds.w_low;
    let mut w_up = bounds.w_up;
    let mut attempt = 0;
    loop {
        let pass = control_pass(particles, w_low, w_up, bounds.n_max, window, rng)?;
        let size = pass.len();
        if size >= bounds.n_low && size <= bounds.n_up {
            return Ok((pass, w_low, w_up));
        }
        if attempt >= max_adaptations {
            if size >= bounds.n_min && size <= bounds.n_max {
                return Ok((pass, w_low, w_up));
            }
            return Err(Error::PopulationControl {
                window,
                msg: format!(
                    "population size {size} outside [{}, {}] after {max_adaptations} adaptations",
                    bounds.n_min, bounds.n_max
                ),
            });
        }
        let f = std::f64::consts::E;
        if size > bounds.n_up {
            w_low *= f;
            w_up *= f;
        } else {
            w_low /= f;
            w_up /= f;
        }
        attempt += 1;
    }
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub hyper: Hyperparameters,
    pub noise: TransitionNoise,
    pub bounds: PopulationBounds,
    pub move_params: MoveParams,
    /// W-type move sweeps per window.
    pub dwis_sweeps: usize,
    pub max_adaptations: usize,
    pub seed: u64,
    /// Prepended to every RNG tag path (e.g. a model id).
    pub stream_prefix: Vec<u64>,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.noise.validate()?;
        self.bounds.validate()?;
        if self.dwis_sweeps == 0 {
            return Err(Error::Config("dwis_sweeps must be >= 1".into()));
        }
        if !(self.move_params.step > 0.0 && self.move_params.theta > 0.0) {
            return Err(Error::Config("move step and theta must be positive".into()));
        }
        Ok(())
    }

    fn tags(&self, rest: &[u64]) -> Vec<u64> {
        let mut t = self.stream_prefix.clone();
        t.extend_from_slice(rest);
        t
    }
}

/// Per-window progress counters written to the diagnostics file.
#[derive(Debug, Clone)]
pub struct FilterDiag {
    pub window: usize,
    pub size: usize,
    pub log_total_weight: f64,
    pub ess: f64,
    pub w_low_eff: f64,
    pub w_up_eff: f64,
}

#[derive(Debug, Clone)]
pub struct WindowFilterResult {
    pub population: Population,
    pub diag: FilterDiag,
}

impl WindowFilterResult {
    /// Draw spline values from their full conditional for every particle;
    /// diagnostics/export path, not needed by the Bayes factor.
    pub fn draw_g(&self, ws: &WindowWorkspace, seed: u64, prefix: &[u64]) -> Vec<Vec<Vec<f64>>> {
        self.population
            .particles
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut tags = prefix.to_vec();
                tags.extend_from_slice(&[tag::G_DRAW, self.diag.window as u64, i as u64]);
                let mut rng = derive_rng(seed, &tags);
                let taus = p.taus();
                let sigma2s = p.sigma2s();
                ws.groups
                    .iter()
                    .enumerate()
                    .map(|(k, g)| {
                        let alpha = taus[k] * sigma2s[k];
                        let coords =
                            ws.penalty
                                .sample_coords(&g.ybar_coords, alpha, sigma2s[k], &mut rng);
                        ws.penalty.from_coords(&coords)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Log prior of one particle in log coordinates (Jacobians included).
fn log_prior_logscale(log_tau: &[f64], log_sigma2: &[f64], hyper: &Hyperparameters) -> f64 {
    let mut total = 0.0;
    for &lt in log_tau {
        total += gamma_logpdf(lt.exp(), hyper.a_tau, hyper.b_tau) + lt;
    }
    for &ls in log_sigma2 {
        total += inv_gamma_logpdf(ls.exp(), hyper.a_sigma, hyper.b_sigma) + ls;
    }
    total
}

fn transition_logpdf(delta: f64, var: f64) -> f64 {
    if var == 0.0 {
        if delta == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        normal_logpdf(delta, 0.0, var)
    }
}

/// Log transition density between consecutive windows, in log coordinates.
fn log_transition_logscale(
    from_tau: &[f64],
    from_sigma2: &[f64],
    to_tau: &[f64],
    to_sigma2: &[f64],
    noise: &TransitionNoise,
) -> f64 {
    let mut total = 0.0;
    for (a, b) in from_tau.iter().zip(to_tau) {
        total += transition_logpdf(b - a, noise.var_log_inv_tau);
    }
    for (a, b) in from_sigma2.iter().zip(to_sigma2) {
        total += transition_logpdf(b - a, noise.var_log_sigma2);
    }
    total
}

/// Renormalize log weights to unit mean and store them back.
fn set_weights_from_log(particles: &mut [Particle], log_weights: &[f64]) {
    let max = log_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let log_mean = max
        + (log_weights.iter().map(|l| (l - max).exp()).sum::<f64>()
            / log_weights.len() as f64)
            .ln();
    for (p, &lw) in particles.iter_mut().zip(log_weights) {
        p.weight = (lw - log_mean).exp().max(f64::MIN_POSITIVE);
    }
}

/// Run the filter over the whole window series for one grouping.
///
/// Window 1: Gibbs seed at unit weights, then DWIS (move sweeps +
/// population control) against the window-1 posterior. Windows 2..T:
/// extrapolate, reweight by the predictive likelihood, move against the
/// conditional target given each particle's previous value, control.
pub fn run_filter(
    workspaces: &[WindowWorkspace],
    cfg: &FilterConfig,
) -> Result<Vec<WindowFilterResult>> {
    cfg.validate()?;
    if workspaces.is_empty() {
        return Err(Error::Domain("filter needs at least one window".into()));
    }

    let mut results = Vec::with_capacity(workspaces.len());

    // window 1: Gibbs seed, unit weights
    let ws0 = &workspaces[0];
    let mut gibbs_rng = derive_rng(cfg.seed, &cfg.tags(&[tag::GIBBS, 0]));
    let gibbs = run_gibbs(ws0, &cfg.hyper, GibbsOptions::default(), &mut gibbs_rng)?;
    let mut particles: Vec<Particle> = gibbs
        .draws
        .iter()
        .enumerate()
        .map(|(i, d)| Particle {
            log_tau: d.taus.iter().map(|v| v.ln()).collect(),
            log_sigma2: d.sigma2s.iter().map(|v| v.ln()).collect(),
            weight: 1.0,
            lineage: i as u64,
        })
        .collect();

    for (t, ws) in workspaces.iter().enumerate() {
        let prev: Option<Vec<(Vec<f64>, Vec<f64>)>> = (t > 0).then(|| {
            particles
                .iter()
                .map(|p| (p.log_tau.clone(), p.log_sigma2.clone()))
                .collect()
        });

        if t > 0 {
            // extrapolate and reweight
            let extrapolated: Vec<Particle> = particles
                .par_iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut rng =
                        derive_rng(cfg.seed, &cfg.tags(&[tag::EXTRAPOLATE, t as u64, i as u64]));
                    extrapolate(p, &cfg.noise, &mut rng)
                })
                .collect();
            let log_weights: Vec<f64> = extrapolated
                .par_iter()
                .map(|p| incremental_log_weight(ws, p))
                .collect::<Result<_>>()?;
            particles = extrapolated;
            set_weights_from_log(&mut particles, &log_weights);
        }

        // DWIS move sweeps
        for sweep in 0..cfg.dwis_sweeps {
            let moved: Vec<Particle> = particles
                .par_iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut rng = derive_rng(
                        cfg.seed,
                        &cfg.tags(&[tag::MOVE, t as u64, sweep as u64, i as u64]),
                    );
                    let target = |lt: &[f64], ls: &[f64]| -> f64 {
                        let taus: Vec<f64> = lt.iter().map(|v| v.exp()).collect();
                        let sigma2s: Vec<f64> = ls.iter().map(|v| v.exp()).collect();
                        let data_term = log_predictive_total(ws, &taus, &sigma2s);
                        let chain_term = match &prev {
                            None => log_prior_logscale(lt, ls, &cfg.hyper),
                            Some(prev) => log_transition_logscale(
                                &prev[i].0,
                                &prev[i].1,
                                lt,
                                ls,
                                &cfg.noise,
                            ),
                        };
                        data_term + chain_term
                    };
                    dwis_w_move(p, target, &cfg.move_params, &mut rng)
                })
                .collect();
            particles = moved;
            let mut pop = Population {
                particles,
                window: t,
            };
            pop.normalize_mean();
            particles = pop.particles;
        }

        // population control
        let mut control_rng = derive_rng(cfg.seed, &cfg.tags(&[tag::POP_CONTROL, t as u64]));
        let (controlled, w_low_eff, w_up_eff) = apepcs(
            &particles,
            &cfg.bounds,
            cfg.max_adaptations,
            t,
            &mut control_rng,
        )?;
        particles = controlled;

        let population = Population {
            particles: particles.clone(),
            window: t,
        };
        let diag = FilterDiag {
            window: t,
            size: population.size(),
            log_total_weight: population.total_weight().ln(),
            ess: population.effective_sample_size(),
            w_low_eff,
            w_up_eff,
        };
        results.push(WindowFilterResult { population, diag });
    }
    Ok(results)
}
