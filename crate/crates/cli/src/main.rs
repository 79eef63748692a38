//! Command-line frontend: simulate benchmark data, run the DMR analysis,
//! re-threshold calls and reproduce the benchmark table.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dmrscan_core::config::{Mode, RunConfig};
use dmrscan_core::error::Error;
use dmrscan_core::io;
use dmrscan_core::pipeline::{run_analysis, run_benchmark, BenchmarkSpec};
use dmrscan_core::rng::{derive_rng, tag};
use dmrscan_core::sim::{simulate_dataset, SimConfig};

#[derive(Parser)]
#[command(
    name = "dmrscan",
    version,
    about = "Detect differentially methylated regions with Bayesian smoothing splines and a dynamically weighted particle filter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic benchmark datasets
    Simulate(SimulateArgs),
    /// Run the two-model DMR analysis on a dataset
    Run(RunArgs),
    /// Re-threshold an existing calls file
    Call(CallArgs),
    /// Simulate, run both modes and tabulate misclassification rates
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file (flags override it)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for all randomness
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Scale factor in (0, 1] on draw budgets and population bounds
    #[arg(long = "desk-scale")]
    desk_scale: Option<f64>,
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            require_file(path, "--config")?;
            cfg.apply_file(path)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
        if let Some(scale) = self.desk_scale {
            cfg.desk_scale = scale;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// AR(1) correlation between neighboring sites, in [0, 1)
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Number of replicate datasets
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Output directory (one rep### subdirectory per replicate)
    #[arg(long = "out-dir", default_value = "sim")]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct RunArgs {
    /// Site manifest (chrom, pos, cpg_id)
    #[arg(long)]
    manifest: PathBuf,
    /// Beta-value matrix (cpg_id + one column per sample, NA for missing)
    #[arg(long)]
    beta: PathBuf,
    /// Sample-to-group map (sample_id, group_label)
    #[arg(long)]
    groups: PathBuf,
    /// independent (per-window Gibbs) or dependent (particle filter)
    #[arg(long)]
    mode: Option<String>,
    /// Log Bayes factor cutoff; windows strictly below it are DMRs
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct CallArgs {
    /// Existing calls file to re-threshold
    #[arg(long)]
    calls: PathBuf,
    /// New log Bayes factor cutoff
    #[arg(long, allow_hyphen_values = true)]
    threshold: f64,
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Correlation levels (comma separated)
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.3, 0.5, 0.7])]
    rho: Vec<f64>,
    /// Replicates per correlation level
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Which methods to run: both, independent or dependent
    #[arg(long, default_value = "both")]
    modes: String,
    #[arg(long = "out-dir", default_value = "benchmark")]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

fn require_file(path: &Path, flag: &str) -> Result<(), Error> {
    if !path.is_file() {
        return Err(Error::Config(format!(
            "{flag}: '{}' does not exist or is not a file",
            path.display()
        )));
    }
    Ok(())
}

fn with_thread_pool<T>(
    threads: usize,
    f: impl FnOnce() -> Result<T, Error> + Send,
) -> Result<T, Error>
where
    T: Send,
{
    if threads == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
        pool.install(f)
    }
}

fn sim_config_echo(cfg: &SimConfig, rho: f64, seed: u64, replicate: usize) -> String {
    let levels: Vec<String> = cfg.wavelet_levels.iter().map(|l| l.to_string()).collect();
    let vars: Vec<String> = cfg.ar1_variances.iter().map(|v| v.to_string()).collect();
    format!(
        "rho = {rho}\nseed = {seed}\nreplicate = {replicate}\nn_control = {}\nn_case = {}\n\
         sites_per_window = {}\nwindows = {}\nlogit_noise_sd = {}\nwavelet_levels = {}\n\
         ar1_variances = {}\ndenoise_alpha = {}\ncontinuous_ar = {}\n",
        cfg.n_control,
        cfg.n_case,
        cfg.sites_per_window,
        cfg.windows,
        cfg.logit_noise_sd,
        levels.join(","),
        vars.join(","),
        cfg.denoise_alpha,
        cfg.continuous_ar
    )
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    if !(0.0..1.0).contains(&args.rho) {
        return Err(Error::Config(format!(
            "--rho must be in [0, 1), got {}",
            args.rho
        )));
    }
    if args.replicates == 0 {
        return Err(Error::Config("--replicates must be >= 1".into()));
    }
    let run_cfg = args.config.build()?;
    let sim = SimConfig::default();
    sim.validate()?;
    for r in 0..args.replicates {
        let mut rng = derive_rng(run_cfg.seed, &[tag::SIM_REPLICATE, 0, r as u64]);
        let (ds, truth) = simulate_dataset(&sim, args.rho, &mut rng)?;
        let dir = args.out_dir.join(format!("rep{:03}", r + 1));
        io::write_manifest(&dir.join("manifest.tsv"), &ds.sites)?;
        io::write_beta(&dir.join("beta.tsv"), &ds)?;
        io::write_groups(&dir.join("groups.tsv"), &ds)?;
        io::write_truth(&dir.join("truth.tsv"), &truth)?;
        io::write_atomic(
            &dir.join("config.txt"),
            &sim_config_echo(&sim, args.rho, run_cfg.seed, r + 1),
        )?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), Error> {
    require_file(&args.manifest, "--manifest")?;
    require_file(&args.beta, "--beta")?;
    require_file(&args.groups, "--groups")?;
    let mut cfg = args.config.build()?;
    if let Some(mode) = &args.mode {
        cfg.mode = mode.parse()?;
    }
    if let Some(threshold) = args.threshold {
        cfg.threshold = threshold;
    }
    cfg.validate()?;
    let dataset = io::load_dataset(&args.manifest, &args.beta, &args.groups)?;
    let result = with_thread_pool(cfg.threads, || run_analysis(&dataset, &cfg))?;
    io::write_calls(&args.out_dir.join("dmr_calls.tsv"), &result.calls)?;
    if !result.diagnostics.is_empty() {
        io::write_diagnostics(
            &args.out_dir.join("filter_diagnostics.tsv"),
            &result.diagnostics,
        )?;
    }
    for call in &result.calls {
        println!(
            "{}\twindow {}\tlog_bf {:.4}\t{}",
            call.chrom,
            call.window,
            call.log_bf,
            if call.is_dmr { "DMR" } else { "-" }
        );
    }
    Ok(())
}

fn cmd_call(args: &CallArgs) -> Result<(), Error> {
    require_file(&args.calls, "--calls")?;
    if !args.threshold.is_finite() {
        return Err(Error::Config("--threshold must be finite".into()));
    }
    let rows = io::read_calls(&args.calls)?;
    let calls: Vec<dmrscan_core::caller::DmrCall> = rows
        .into_iter()
        .map(
            |(chrom, window, start, end, n_sites, log_bf)| dmrscan_core::caller::DmrCall {
                window,
                chrom,
                start,
                end,
                n_sites,
                log_bf,
                is_dmr: log_bf < args.threshold,
                threshold: args.threshold,
            },
        )
        .collect();
    io::write_calls(&args.out_dir.join("dmr_calls.tsv"), &calls)?;
    println!(
        "re-thresholded {} windows at {}",
        calls.len(),
        args.threshold
    );
    Ok(())
}

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<(), Error> {
    let run = args.config.build()?;
    let modes = match args.modes.as_str() {
        "both" => vec![Mode::Independent, Mode::Dependent],
        other => vec![other.parse::<Mode>()?],
    };
    let spec = BenchmarkSpec {
        sim: SimConfig::default(),
        run,
        rhos: args.rho.clone(),
        replicates: args.replicates,
        modes,
    };
    let outcome = with_thread_pool(spec.run.threads, || run_benchmark(&spec))?;
    io::write_truth(&args.out_dir.join("truth.tsv"), &outcome.truth)?;
    io::write_benchmark_table(&args.out_dir.join("table1.tsv"), &outcome.rows)?;
    for row in &outcome.rows {
        let rates: Vec<String> = row
            .rates
            .iter()
            .map(|r| format!("{:.0}%", r * 100.0))
            .collect();
        println!(
            "{}\trho={}\t[{}]\t{:.3} min/window",
            row.method,
            row.rho,
            rates.join(" "),
            row.minutes_per_window
        );
    }
    println!("wrote {}", args.out_dir.join("table1.tsv").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Run(args) => cmd_run(args),
        Command::Call(args) => cmd_call(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
