//! Run configuration: every tunable of the pipeline as a flat
//! `key = value` file, overridable by CLI flags, plus the desk-scale rule
//! that shrinks draw budgets for quick runs.

use std::path::Path;
use std::str::FromStr;

use crate::data::{WindowPolicy, WindowRule};
use crate::error::{Error, Result};
use crate::filter::{MoveParams, PopulationBounds, TransitionNoise};
use crate::gibbs::Hyperparameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Per-window Gibbs sampling only.
    Independent,
    /// Particle filter across windows.
    #[default]
    Dependent,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Mode::Independent),
            "dependent" => Ok(Mode::Dependent),
            other => Err(Error::Config(format!(
                "mode must be 'independent' or 'dependent', got '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Independent => "independent",
            Mode::Dependent => "dependent",
        })
    }
}

/// Full pipeline configuration. `desk_scale` shrinks the Gibbs/seed draw
/// budget and all four population size bounds proportionally; weight
/// bounds and burn-in are untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hyper: Hyperparameters,
    pub noise: TransitionNoise,
    pub bounds: PopulationBounds,
    pub move_params: MoveParams,
    pub dwis_sweeps: usize,
    pub max_adaptations: usize,
    pub threshold: f64,
    pub policy: WindowPolicy,
    pub mode: Mode,
    pub seed: u64,
    pub threads: usize,
    pub desk_scale: f64,
    pub m_offset: f64,
    /// Reuse the same RNG streams for the pooled and grouped runs
    /// (common random numbers across the two models).
    pub shared_model_streams: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hyper: Hyperparameters::default(),
            noise: TransitionNoise::default(),
            bounds: PopulationBounds::default(),
            move_params: MoveParams::default(),
            dwis_sweeps: 1,
            max_adaptations: 50,
            threshold: -5.0,
            policy: WindowPolicy::default(),
            mode: Mode::Dependent,
            seed: 0,
            threads: 0,
            desk_scale: 1.0,
            m_offset: 0.01,
            shared_model_streams: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.noise.validate()?;
        self.bounds.validate()?;
        if !(self.desk_scale > 0.0 && self.desk_scale <= 1.0) {
            return Err(Error::Config(format!(
                "desk_scale must be in (0, 1], got {}",
                self.desk_scale
            )));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        if !(self.m_offset > 0.0) {
            return Err(Error::Config(format!(
                "m_offset must be positive, got {}",
                self.m_offset
            )));
        }
        if self.dwis_sweeps == 0 {
            return Err(Error::Config("dwis_sweeps must be >= 1".into()));
        }
        if !(self.move_params.step > 0.0 && self.move_params.theta > 0.0) {
            return Err(Error::Config("move_step and theta must be positive".into()));
        }
        if self.policy.min_size < 3 {
            return Err(Error::Config("min_window_size must be >= 3".into()));
        }
        // the scaled budgets must stay usable
        let hyper = self.scaled_hyper();
        hyper.validate()?;
        self.scaled_bounds().validate()?;
        Ok(())
    }

    /// Gibbs settings after desk scaling (iterations only; burn-in stays).
    pub fn scaled_hyper(&self) -> Hyperparameters {
        let iterations =
            ((self.hyper.iterations as f64 * self.desk_scale).round() as usize).max(1);
        Hyperparameters {
            iterations,
            ..self.hyper.clone()
        }
    }

    /// Population bounds after desk scaling.
    pub fn scaled_bounds(&self) -> PopulationBounds {
        self.bounds.scaled(self.desk_scale)
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
        }
        match key {
            "a_tau" => self.hyper.a_tau = num(key, value)?,
            "b_tau" => self.hyper.b_tau = num(key, value)?,
            "a_sigma" => self.hyper.a_sigma = num(key, value)?,
            "b_sigma" => self.hyper.b_sigma = num(key, value)?,
            "a_sigma_ind" => self.hyper.a_sigma_ind = num(key, value)?,
            "b_sigma_ind" => self.hyper.b_sigma_ind = num(key, value)?,
            "gibbs_iterations" => self.hyper.iterations = num(key, value)?,
            "burn_in" => self.hyper.burn_in = num(key, value)?,
            "var_log_inv_tau" => self.noise.var_log_inv_tau = num(key, value)?,
            "var_log_sigma2" => self.noise.var_log_sigma2 = num(key, value)?,
            "n_low" => self.bounds.n_low = num(key, value)?,
            "n_up" => self.bounds.n_up = num(key, value)?,
            "n_min" => self.bounds.n_min = num(key, value)?,
            "n_max" => self.bounds.n_max = num(key, value)?,
            "w_low" => self.bounds.w_low = num(key, value)?,
            "w_up" => self.bounds.w_up = num(key, value)?,
            "move_step" => self.move_params.step = num(key, value)?,
            "theta" => self.move_params.theta = num(key, value)?,
            "dwis_sweeps" => self.dwis_sweeps = num(key, value)?,
            "max_adaptations" => self.max_adaptations = num(key, value)?,
            "threshold" => self.threshold = num(key, value)?,
            "window_size" => {
                self.policy.rule = WindowRule::FixedCount(num(key, value)?);
            }
            "max_gap_bp" => {
                self.policy.rule = WindowRule::MaxGap(num(key, value)?);
            }
            "min_window_size" => self.policy.min_size = num(key, value)?,
            "mode" => self.mode = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "threads" => self.threads = num(key, value)?,
            "desk_scale" => self.desk_scale = num(key, value)?,
            "m_offset" => self.m_offset = num(key, value)?,
            "shared_model_streams" => {
                self.shared_model_streams = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => {
                        return Err(Error::Config(format!(
                            "bad value '{value}' for shared_model_streams"
                        )))
                    }
                }
            }
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Load `key = value` lines ('#' starts a comment) over the current
    /// settings.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let content =
            std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (idx, raw) in content.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("expected 'key = value', got '{raw}'"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn desk_scale_shrinks_budgets() {
        let cfg = RunConfig {
            desk_scale: 0.1,
            ..Default::default()
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.scaled_hyper().iterations, 2000);
        assert_eq!(cfg.scaled_hyper().burn_in, 1000);
        let b = cfg.scaled_bounds();
        assert_eq!((b.n_low, b.n_up, b.n_min, b.n_max), (1500, 2500, 1000, 3000));
        assert_eq!(b.w_low, cfg.bounds.w_low);
    }

    #[test]
    fn config_file_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# benchmark profile\nmode = independent\nthreshold = -4.5\nwindow_size = 50\nseed = 99\n",
        )
        .unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.mode, Mode::Independent);
        assert_eq!(cfg.threshold, -4.5);
        assert_eq!(cfg.policy.rule, WindowRule::FixedCount(50));
        assert_eq!(cfg.seed, 99);
    }

    #[test]
    fn bad_keys_and_values_are_rejected_with_context() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "threshold = -5\nnot_a_key = 1\n").unwrap();
        let mut cfg = RunConfig::default();
        match cfg.apply_file(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(cfg.set("seed", "abc").is_err());
        assert!(cfg.set("mode", "sideways").is_err());
    }

    #[test]
    fn invalid_scales_fail_validation() {
        let mut cfg = RunConfig {
            desk_scale: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.desk_scale = 1.5;
        assert!(cfg.validate().is_err());
        // scaling so hard that iterations fall below burn-in
        cfg.desk_scale = 0.0001;
        assert!(cfg.validate().is_err());
    }
}
