//! Synthetic benchmark generator: sinusoidal group mean functions on ten
//! dependent windows, per-subject curves roughened by logit-scale noise and
//! smoothed back with Daubechies-10 wavelet denoising, then AR(1) errors on
//! the rate scale. Ships the scorer that turns repeated calls into
//! per-window misclassification rates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{MethylationDataset, Site};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, tag};
use crate::wavelet::daubechies10_denoise;

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Benchmark design. Defaults reproduce the reference study: 25 control
/// and 50 case subjects, 10 windows of 100 equally spaced sites, window
/// wavelet levels 5,4,3,2,3,4,5,4,3,2 and AR(1) marginal variances
/// 0.4^2 .. 1 in the matching pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_control: usize,
    pub n_case: usize,
    pub sites_per_window: usize,
    pub windows: usize,
    /// Standard deviation of the site-wise noise added on the logit scale.
    pub logit_noise_sd: f64,
    /// Wavelet decomposition level per window.
    pub wavelet_levels: Vec<usize>,
    /// Marginal AR(1) variance per window (rate scale).
    pub ar1_variances: Vec<f64>,
    /// Multiplier on the universal soft threshold.
    pub denoise_alpha: f64,
    /// One AR(1) stream per subject across all windows (true) or a fresh
    /// stream per window (false).
    pub continuous_ar: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_control: 25,
            n_case: 50,
            sites_per_window: 100,
            windows: 10,
            logit_noise_sd: 0.2,
            wavelet_levels: vec![5, 4, 3, 2, 3, 4, 5, 4, 3, 2],
            ar1_variances: vec![0.16, 0.36, 0.64, 1.0, 0.64, 0.36, 0.16, 0.36, 0.64, 1.0],
            denoise_alpha: 3.0,
            continuous_ar: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_control == 0 || self.n_case == 0 {
            return Err(Error::Config("both groups need at least one subject".into()));
        }
        if self.windows == 0 || self.windows > 10 {
            return Err(Error::Config(format!(
                "windows must be in 1..=10 (the mean-function table has 10 rows), got {}",
                self.windows
            )));
        }
        if self.wavelet_levels.len() != self.windows {
            return Err(Error::Config(format!(
                "{} wavelet levels for {} windows",
                self.wavelet_levels.len(),
                self.windows
            )));
        }
        if self.ar1_variances.len() != self.windows {
            return Err(Error::Config(format!(
                "{} AR(1) variances for {} windows",
                self.ar1_variances.len(),
                self.windows
            )));
        }
        if self.ar1_variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Config("AR(1) variances must be positive".into()));
        }
        if !(self.logit_noise_sd >= 0.0) || !(self.denoise_alpha >= 0.0) {
            return Err(Error::Config("noise parameters must be >= 0".into()));
        }
        if self.sites_per_window < 3 {
            return Err(Error::Config("windows need at least 3 sites".into()));
        }
        Ok(())
    }

    pub fn n_subjects(&self) -> usize {
        self.n_control + self.n_case
    }

    pub fn n_sites(&self) -> usize {
        self.windows * self.sites_per_window
    }

    /// True DMR status per window, derived from the mean-function table:
    /// a window is a DMR when its two group mean functions differ.
    pub fn ground_truth(&self) -> Vec<bool> {
        (1..=self.windows)
            .map(|t| {
                (0..=50).any(|i| {
                    let x = i as f64 / 50.0;
                    (group_mean(t, 1, x) - group_mean(t, 2, x)).abs() > 1e-12
                })
            })
            .collect()
    }
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Tabulated group mean functions, windows `t = 1..=10`, groups
/// `k = 1` (control) and `k = 2` (case), `x` in [0, 1].
pub fn group_mean(t: usize, k: usize, x: f64) -> f64 {
    use std::f64::consts::PI;
    assert!((1..=10).contains(&t), "window index {t} outside 1..=10");
    assert!(k == 1 || k == 2, "group index {k} must be 1 or 2");
    match (t, k) {
        (1, _) => logistic((2.0 * PI * x).sin()),
        (2, 1) => logistic((PI * x).sin()),
        (2, 2) => logistic((2.0 * PI * x).sin()),
        (3, 1) => logistic((PI + PI * x).sin()),
        (3, 2) => logistic(-((PI + PI * x).sin() + 1.0)),
        (4, 1) => logistic((PI * x / 2.0).sin()),
        (4, 2) => logistic(-((PI * x / 2.0).sin() - 1.0)),
        (5, 1) => logistic(((PI + PI * x) / 2.0).sin()),
        (5, 2) => logistic(-(((PI / 2.0 + 2.0 * PI * x).sin() - 1.0) / 2.0)),
        (6, 1) => logistic((PI + PI * x / 2.0).sin()),
        (6, 2) => logistic((PI + PI * x).sin()),
        (7, 1) => logistic(((3.0 * PI + PI * x) / 2.0).sin()),
        (7, 2) => logistic(-(((3.0 * PI + PI * x) / 2.0).sin() + 1.0)),
        (8, _) => 0.5,
        (9, 1) => 0.75,
        (9, 2) => 0.25,
        (10, 1) => 0.25,
        (10, 2) => 0.4,
        _ => unreachable!(),
    }
}

/// Stationary AR(1) noise: `e_1 ~ N(0, v)`,
/// `e_i = rho e_{i-1} + eta_i` with `eta ~ N(0, v (1 - rho^2))`, so every
/// term has marginal variance `v`.
pub fn ar1_noise<R: Rng + ?Sized>(
    n: usize,
    rho: f64,
    marginal_variance: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(format!("AR(1) coefficient {rho} must satisfy |rho| < 1")));
    }
    if !(marginal_variance > 0.0) {
        return Err(Error::Domain(format!(
            "AR(1) marginal variance {marginal_variance} must be positive"
        )));
    }
    let sd = marginal_variance.sqrt();
    let innovation_sd = (marginal_variance * (1.0 - rho * rho)).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut prev = sd * std_normal(rng);
    out.push(prev);
    for _ in 1..n {
        prev = rho * prev + innovation_sd * std_normal(rng);
        out.push(prev);
    }
    Ok(out)
}

/// Standardized stationary AR(1) (unit marginal variance), used as the
/// shared noise process when windows have different variances.
fn ar1_standardized<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Vec<f64> {
    let innovation_sd = (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut prev = std_normal(rng);
    out.push(prev);
    for _ in 1..n {
        prev = rho * prev + innovation_sd * std_normal(rng);
        out.push(prev);
    }
    out
}

/// One subject's beta-value profile across all windows.
fn simulate_subject(cfg: &SimConfig, k: usize, rho: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = cfg.sites_per_window;
    let mut smooth = Vec::with_capacity(cfg.n_sites());
    for t in 1..=cfg.windows {
        // logit-scale group mean + site noise, wavelet-smoothed back
        let mut signal = Vec::with_capacity(n);
        for i in 0..n {
            let x = i as f64 / (n - 1) as f64;
            let mean = group_mean(t, k, x);
            let logit = (mean / (1.0 - mean)).ln();
            signal.push(logit + cfg.logit_noise_sd * std_normal(rng));
        }
        let denoised =
            daubechies10_denoise(&signal, cfg.wavelet_levels[t - 1], cfg.denoise_alpha)?;
        smooth.extend(denoised.into_iter().map(logistic));
    }
    // AR(1) errors on the rate scale, scaled to each window's variance
    let z: Vec<f64> = if cfg.continuous_ar {
        ar1_standardized(cfg.n_sites(), rho, rng)
    } else {
        (0..cfg.windows)
            .flat_map(|_| ar1_standardized(n, rho, rng))
            .collect()
    };
    let beta: Vec<f64> = smooth
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let v = cfg.ar1_variances[i / n];
            (r + v.sqrt() * z[i]).clamp(0.0, 1.0)
        })
        .collect();
    Ok(beta)
}

/// Generate one replicate: a full beta matrix with manifest and group
/// labels, plus the per-window ground truth.
pub fn simulate_dataset(
    cfg: &SimConfig,
    rho: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(MethylationDataset, Vec<bool>)> {
    cfg.validate()?;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!("rho {rho} must be in [0, 1)")));
    }
    let n_subjects = cfg.n_subjects();
    // independent per-subject streams, derived up front so subject
    // generation order (or parallelism) cannot matter
    let subject_seeds: Vec<u64> = (0..n_subjects).map(|_| rng.random()).collect();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n_subjects);
    for (j, &seed) in subject_seeds.iter().enumerate() {
        let k = if j < cfg.n_control { 1 } else { 2 };
        let mut subject_rng = derive_rng(seed, &[tag::SIM_SUBJECT, j as u64]);
        columns.push(simulate_subject(cfg, k, rho, &mut subject_rng)?);
    }

    let n_sites = cfg.n_sites();
    let sites: Vec<Site> = (0..n_sites)
        .map(|i| Site {
            chrom: "chr1".into(),
            pos: 100 * (i as u64 + 1),
            cpg_id: format!("cg{:07}", i + 1),
        })
        .collect();
    let beta: Vec<Vec<Option<f64>>> = (0..n_sites)
        .map(|i| columns.iter().map(|col| Some(col[i])).collect())
        .collect();
    let samples: Vec<String> = (0..n_subjects)
        .map(|j| {
            if j < cfg.n_control {
                format!("control{:03}", j + 1)
            } else {
                format!("case{:03}", j + 1 - cfg.n_control)
            }
        })
        .collect();
    let labels: Vec<String> = (0..n_subjects)
        .map(|j| {
            if j < cfg.n_control {
                "control".into()
            } else {
                "case".into()
            }
        })
        .collect();
    let dataset = MethylationDataset::new(sites, beta, samples, labels)?;
    Ok((dataset, cfg.ground_truth()))
}

/// Per-window misclassification rate: the fraction of replicates whose
/// call disagrees with the truth.
pub fn misclassification_table(calls_per_replicate: &[Vec<bool>], truth: &[bool]) -> Result<Vec<f64>> {
    if calls_per_replicate.is_empty() {
        return Err(Error::Domain("no replicates to score".into()));
    }
    for (r, calls) in calls_per_replicate.iter().enumerate() {
        if calls.len() != truth.len() {
            return Err(Error::Domain(format!(
                "replicate {r} has {} calls for {} windows",
                calls.len(),
                truth.len()
            )));
        }
    }
    Ok((0..truth.len())
        .map(|w| {
            let wrong = calls_per_replicate
                .iter()
                .filter(|calls| calls[w] != truth[w])
                .count();
            wrong as f64 / calls_per_replicate.len() as f64
        })
        .collect())
}
