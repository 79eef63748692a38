//! End-to-end orchestration: window preparation, the pooled (one mean
//! function) and grouped models in either mode, Bayes factors and calls,
//! and the simulation benchmark harness.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::caller::{
    call_dmrs, log_bayes_factor, log_marginal_likelihood_hyper,
    log_marginal_likelihood_population, DmrCall,
};
use crate::config::{Mode, RunConfig};
use crate::data::{impute_missing, partition_windows, MethylationDataset};
use crate::error::{Error, Result};
use crate::filter::{run_filter, FilterConfig, FilterDiag};
use crate::gibbs::{run_gibbs, GibbsOptions};
use crate::io::BenchmarkRow;
use crate::likelihood::WindowWorkspace;
use crate::rng::{derive_rng, derive_seed, tag};
use crate::sim::{misclassification_table, simulate_dataset, SimConfig};
use crate::spline::PenaltyMatrix;

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub calls: Vec<DmrCall>,
    pub log_bf: Vec<f64>,
    pub log_marginal_pooled: Vec<f64>,
    pub log_marginal_grouped: Vec<f64>,
    /// Grouped-model filter diagnostics; empty in independent mode.
    pub diagnostics: Vec<FilterDiag>,
}

/// Partition, impute and summarize the dataset under one group assignment.
fn build_workspaces(
    dataset: &MethylationDataset,
    cfg: &RunConfig,
    group_of: &[usize],
    n_groups: usize,
    penalties: &mut BTreeMap<usize, Arc<PenaltyMatrix>>,
) -> Result<Vec<WindowWorkspace>> {
    let series = partition_windows(dataset, &cfg.policy, cfg.m_offset)?;
    if series.is_empty() {
        return Err(Error::Domain("dataset produced no analysis windows".into()));
    }
    let mut workspaces = Vec::with_capacity(series.len());
    for window in &series.windows {
        let n = window.n_sites();
        if n < 3 {
            return Err(Error::Domain(format!(
                "window {} has {n} sites; spline fitting needs at least 3",
                window.index + 1
            )));
        }
        let penalty = penalties
            .entry(n)
            .or_insert_with(|| Arc::new(PenaltyMatrix::ordinal(n).expect("n >= 3")))
            .clone();
        let imputed = impute_missing(window)?;
        workspaces.push(WindowWorkspace::build(
            &imputed,
            group_of,
            n_groups,
            penalty,
            &cfg.hyper,
        )?);
    }
    Ok(workspaces)
}

/// Per-window marginal likelihoods for one model under the chosen mode.
fn run_mode(
    workspaces: &[WindowWorkspace],
    cfg: &RunConfig,
    prefix: Vec<u64>,
) -> Result<(Vec<f64>, Vec<FilterDiag>)> {
    match cfg.mode {
        Mode::Dependent => {
            let filter_cfg = FilterConfig {
                hyper: cfg.scaled_hyper(),
                noise: cfg.noise,
                bounds: cfg.scaled_bounds(),
                move_params: cfg.move_params,
                dwis_sweeps: cfg.dwis_sweeps,
                max_adaptations: cfg.max_adaptations,
                seed: cfg.seed,
                stream_prefix: prefix,
            };
            let results = run_filter(workspaces, &filter_cfg)?;
            let marginals = workspaces
                .iter()
                .zip(&results)
                .map(|(ws, r)| log_marginal_likelihood_population(ws, &r.population))
                .collect::<Result<Vec<f64>>>()?;
            let diags = results.into_iter().map(|r| r.diag).collect();
            Ok((marginals, diags))
        }
        Mode::Independent => {
            let hyper = cfg.scaled_hyper();
            let marginals = workspaces
                .par_iter()
                .enumerate()
                .map(|(t, ws)| {
                    let mut tags = prefix.clone();
                    tags.extend_from_slice(&[tag::GIBBS, t as u64]);
                    let mut rng = derive_rng(cfg.seed, &tags);
                    let run = run_gibbs(ws, &hyper, GibbsOptions::default(), &mut rng)?;
                    let lambdas: Vec<(Vec<f64>, Vec<f64>)> = run
                        .draws
                        .into_iter()
                        .map(|d| (d.taus, d.sigma2s))
                        .collect();
                    log_marginal_likelihood_hyper(ws, &lambdas, None)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((marginals, Vec::new()))
        }
    }
}

/// Run the full two-model analysis and call DMRs.
pub fn run_analysis(dataset: &MethylationDataset, cfg: &RunConfig) -> Result<PipelineResult> {
    cfg.validate()?;
    if dataset.n_groups() < 2 {
        return Err(Error::Config(format!(
            "the grouped model needs at least 2 groups; the dataset defines {}",
            dataset.n_groups()
        )));
    }
    let mut penalties = BTreeMap::new();
    let grouped = build_workspaces(
        dataset,
        cfg,
        &dataset.group_of,
        dataset.n_groups(),
        &mut penalties,
    )?;
    let pooled = build_workspaces(
        dataset,
        cfg,
        &dataset.pooled_groups(),
        1,
        &mut penalties,
    )?;

    let (pooled_prefix, grouped_prefix) = if cfg.shared_model_streams {
        (Vec::new(), Vec::new())
    } else {
        (vec![tag::MODEL, 1], vec![tag::MODEL, 2])
    };
    let (log_marginal_grouped, diagnostics) = run_mode(&grouped, cfg, grouped_prefix)?;
    let (log_marginal_pooled, _) = run_mode(&pooled, cfg, pooled_prefix)?;

    let log_bf: Vec<f64> = log_marginal_pooled
        .iter()
        .zip(&log_marginal_grouped)
        .map(|(&m1, &m2)| log_bayes_factor(m1, m2))
        .collect();
    let refs: Vec<&WindowWorkspace> = grouped.iter().collect();
    let calls = call_dmrs(&refs, &log_bf, cfg.threshold);
    Ok(PipelineResult {
        calls,
        log_bf,
        log_marginal_pooled,
        log_marginal_grouped,
        diagnostics,
    })
}

/// Benchmark request: which correlations, how many replicates, which modes.
#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub sim: SimConfig,
    pub run: RunConfig,
    pub rhos: Vec<f64>,
    pub replicates: usize,
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub rows: Vec<BenchmarkRow>,
    pub truth: Vec<bool>,
}

/// Generate `replicates` datasets per correlation level, run every
/// requested mode on the same datasets, and score per-window
/// misclassification. The minutes column is the wall-clock of a mode's
/// whole batch divided by `replicates * windows`.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkOutcome> {
    spec.sim.validate()?;
    spec.run.validate()?;
    if spec.replicates == 0 {
        return Err(Error::Config("replicates must be >= 1".into()));
    }
    if spec.rhos.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(Error::Config("every rho must be in [0, 1)".into()));
    }
    let truth = spec.sim.ground_truth();
    let mut rows = Vec::new();
    for (rho_idx, &rho) in spec.rhos.iter().enumerate() {
        let datasets: Vec<MethylationDataset> = (0..spec.replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = derive_rng(
                    spec.run.seed,
                    &[tag::SIM_REPLICATE, rho_idx as u64, r as u64],
                );
                simulate_dataset(&spec.sim, rho, &mut rng).map(|(ds, _)| ds)
            })
            .collect::<Result<_>>()?;
        for &mode in &spec.modes {
            let start = Instant::now();
            let calls: Vec<Vec<bool>> = datasets
                .par_iter()
                .enumerate()
                .map(|(r, ds)| {
                    let cfg = RunConfig {
                        mode,
                        seed: derive_seed(
                            spec.run.seed,
                            &[tag::SIM_REPLICATE, rho_idx as u64, r as u64, 1],
                        ),
                        ..spec.run.clone()
                    };
                    let result = run_analysis(ds, &cfg)?;
                    Ok(result.calls.iter().map(|c| c.is_dmr).collect())
                })
                .collect::<Result<_>>()?;
            let elapsed = start.elapsed().as_secs_f64();
            let rates = misclassification_table(&calls, &truth)?;
            rows.push(BenchmarkRow {
                method: mode.to_string(),
                rho,
                rates,
                minutes_per_window: elapsed / 60.0 / (spec.replicates * truth.len()) as f64,
            });
        }
    }
    Ok(BenchmarkOutcome { rows, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::WindowRule;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quick_sim() -> SimConfig {
        SimConfig {
            n_control: 4,
            n_case: 6,
            sites_per_window: 24,
            windows: 2,
            wavelet_levels: vec![2, 2],
            ar1_variances: vec![0.16, 0.36],
            ..Default::default()
        }
    }

    fn quick_cfg() -> RunConfig {
        RunConfig {
            hyper: crate::gibbs::Hyperparameters {
                iterations: 150,
                burn_in: 30,
                ..Default::default()
            },
            bounds: crate::filter::PopulationBounds {
                n_low: 100,
                n_up: 250,
                n_min: 50,
                n_max: 400,
                ..Default::default()
            },
            policy: crate::data::WindowPolicy {
                rule: WindowRule::FixedCount(24),
                min_size: 3,
            },
            seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn analysis_runs_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (ds, _) = simulate_dataset(&quick_sim(), 0.0, &mut rng).unwrap();
        let cfg = quick_cfg();
        let a = run_analysis(&ds, &cfg).unwrap();
        assert_eq!(a.calls.len(), 2);
        assert_eq!(a.log_bf.len(), 2);
        assert_eq!(a.diagnostics.len(), 2);
        for d in &a.diagnostics {
            assert!(d.size >= 50 && d.size <= 400);
        }
        let b = run_analysis(&ds, &cfg).unwrap();
        assert_eq!(a.log_bf, b.log_bf, "same seed must reproduce bit-identically");
    }

    #[test]
    fn independent_mode_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (ds, _) = simulate_dataset(&quick_sim(), 0.0, &mut rng).unwrap();
        let cfg = RunConfig {
            mode: Mode::Independent,
            ..quick_cfg()
        };
        let out = run_analysis(&ds, &cfg).unwrap();
        assert_eq!(out.calls.len(), 2);
        assert!(out.diagnostics.is_empty());
        assert!(out.log_bf.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn benchmark_produces_rate_rows() {
        let spec = BenchmarkSpec {
            sim: quick_sim(),
            run: quick_cfg(),
            rhos: vec![0.0],
            replicates: 2,
            modes: vec![Mode::Dependent, Mode::Independent],
        };
        let out = run_benchmark(&spec).unwrap();
        assert_eq!(out.rows.len(), 2);
        for row in &out.rows {
            assert_eq!(row.rates.len(), 2);
            for r in &row.rates {
                // rates are multiples of 1/replicates
                let scaled = r * 2.0;
                assert!((scaled - scaled.round()).abs() < 1e-12);
            }
            assert!(row.minutes_per_window >= 0.0);
        }
    }

    #[test]
    fn single_group_dataset_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut ds, _) = simulate_dataset(&quick_sim(), 0.0, &mut rng).unwrap();
        ds.group_of = vec![0; ds.n_samples()];
        ds.group_labels = vec!["only".into()];
        assert!(run_analysis(&ds, &quick_cfg()).is_err());
    }
}
