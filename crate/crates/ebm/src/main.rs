use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ebm::config::{Overrides, TrainConfig};
use ebm::error::{HarnessError, Result};
use ebm::io;
use ebm::run::{self, RunPaths, SweepParam};
use ebm_core::data::SpiralSpec;
use ebm_core::quadrature::GridSpec;
use ebm_core::train::EstimatorKind;
use ebm_core::KernelVariant;

#[derive(Parser)]
#[command(
    name = "ebm",
    version,
    about = "Train energy-based models with contrastive estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the spiral dataset to CSV.
    GenData(GenData),
    /// Train one configuration.
    Train(Train),
    /// Train once per value of a swept parameter and summarize.
    Sweep(Sweep),
    /// Evaluate a checkpoint on a 2-D grid (CSV + PGM).
    EvalGrid(EvalGrid),
    /// Run the exact identity checks.
    Verify(Verify),
}

#[derive(Args)]
struct GenData {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2.0)]
    turns: f64,
    #[arg(long, default_value_t = 0.05)]
    noise_in_plane: f64,
    #[arg(long, default_value_t = 0.01)]
    noise_off_plane: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Nce,
    Cnce,
    Cd,
    Acd,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Nce => EstimatorKind::Nce,
            EstimatorArg::Cnce => EstimatorKind::Cnce,
            EstimatorArg::Cd => EstimatorKind::Cd,
            EstimatorArg::Acd => EstimatorKind::Acd,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    GaussianRw,
    Langevin,
    LangevinMh,
    Autoregressive,
}

impl From<KernelArg> for KernelVariant {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::GaussianRw => KernelVariant::GaussianRw,
            KernelArg::Langevin => KernelVariant::Langevin,
            KernelArg::LangevinMh => KernelVariant::LangevinMh,
            KernelArg::Autoregressive => KernelVariant::Autoregressive,
        }
    }
}

/// Flags that override values from the config file.
#[derive(Args)]
struct OverrideArgs {
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    #[arg(long)]
    kernel_step: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr_start: Option<f64>,
    #[arg(long)]
    lr_end: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    heldout: Option<PathBuf>,
}

impl OverrideArgs {
    fn load(&self, config: &std::path::Path) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::load(config)?;
        Overrides {
            estimator: self.estimator.map(Into::into),
            kernel: self.kernel.map(Into::into),
            kernel_step: self.kernel_step,
            k: self.k,
            batch_size: self.batch_size,
            steps: self.steps,
            lr_start: self.lr_start,
            lr_end: self.lr_end,
            momentum: self.momentum,
            seed: self.seed,
            dataset: self.dataset.clone(),
            heldout: self.heldout.clone(),
        }
        .apply(&mut cfg);
        Ok(cfg)
    }
}

#[derive(Args)]
struct Train {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Directory for metrics.csv and checkpoint.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Step,
    CnceStd,
}

#[derive(Args)]
struct Sweep {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    param: SweepArg,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Directory for summary.csv and per-run metrics.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct EvalGrid {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Plane axes, zero-based; other coordinates are held at 0.
    #[arg(long, num_args = 2, default_values_t = [0, 1])]
    axes: Vec<usize>,
    #[arg(long, default_value_t = 161)]
    resolution: usize,
    /// Bounds as x_min,x_max,y_min,y_max.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [-2.0, 2.0, -2.0, 2.0])]
    bounds: Vec<f64>,
    /// Output prefix; writes <out>.csv and <out>.pgm.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Verify {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn with_ext(prefix: &std::path::Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => {
            let spec = SpiralSpec {
                ambient_dim: a.dim,
                n_turns: a.turns,
                noise_in_plane: a.noise_in_plane,
                noise_off_plane: a.noise_off_plane,
                seed: a.seed,
            };
            run::gen_data(&spec, a.n, &a.out)?;
            eprintln!("wrote {} samples to {}", a.n, a.out.display());
        }
        Command::Train(a) => {
            let cfg = a.overrides.load(&a.config)?;
            let quiet = a.quiet;
            eprintln!("{}", ebm_core::train::describe(&cfg.train_options()));
            let outcome = run::train_to_files(&cfg, &RunPaths::in_dir(&a.out), |r| {
                if !quiet {
                    eprintln!(
                        "step {:>6}  lr {:.3e}  median_alpha {:.4}  accept {:.3}  heldout {:.4}  |g| {:.3e}",
                        r.step, r.lr, r.median_alpha, r.acceptance_rate, r.heldout_score, r.grad_norm
                    );
                }
            })?;
            if let Some(last) = outcome.final_row() {
                println!("final heldout_score {}", last.heldout_score);
            }
        }
        Command::Sweep(a) => {
            let cfg = a.overrides.load(&a.config)?;
            let param = match a.param {
                SweepArg::Step => SweepParam::Step,
                SweepArg::CnceStd => SweepParam::CnceStd,
            };
            let rows = run::sweep(&cfg, param, &a.values, Some(&a.out))?;
            run::write_sweep_summary(&a.out.join("summary.csv"), &rows)?;
            for r in &rows {
                println!(
                    "{}={} {} heldout {} median_alpha {} {}",
                    r.parameter,
                    r.value,
                    r.status,
                    r.final_heldout_score,
                    r.final_median_alpha,
                    r.message
                );
            }
        }
        Command::EvalGrid(a) => {
            let model = io::load_checkpoint(&a.checkpoint)?;
            let spec = GridSpec {
                x_min: a.bounds[0],
                x_max: a.bounds[1],
                y_min: a.bounds[2],
                y_max: a.bounds[3],
                resolution: a.resolution,
            };
            let grid = run::eval_grid_to_files(
                &model,
                (a.axes[0], a.axes[1]),
                &spec,
                &with_ext(&a.out, "csv"),
                &with_ext(&a.out, "pgm"),
            )?;
            let (i, j) = grid.argmax();
            println!("max log_p at ({}, {})", grid.xs[i], grid.ys[j]);
        }
        Command::Verify(a) => {
            run::verify(a.seed, &mut std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let HarnessError::Diverged { .. } = e {
                eprintln!("metrics and the last parameters were still written");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
