use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdgmm::datagen::RhoMode;
use pdgmm::pipeline::{Preset, Stage2Arch};
use pdgmm::Exec;
use pdgmm_cli::{evaluate, generate, grid, run_all, train, Axis, CliError, ExperimentConfig, OUT_ENV};

#[derive(Parser)]
#[command(name = "pdgmm", version, about = "Synthetic benchmark and two-stage latent recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the training set and write it with the true mixture.
    Generate(Common),
    /// Train one stage.
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        #[command(flatten)]
        common: Common,
    },
    /// Score the trained representation on a fresh sample.
    Evaluate {
        /// Use the exact inverse mixing instead of trained networks.
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Generate, train and evaluate in one go.
    Run(Common),
    /// Sweep one axis over several values and seeds.
    Grid {
        #[arg(long)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "paper")]
    preset: Preset,
    /// Number of latent variables.
    #[arg(long)]
    n: Option<usize>,
    /// Expected out-degree of the random DAG.
    #[arg(long)]
    er_k: Option<usize>,
    /// Number of mixing layers.
    #[arg(long)]
    layers_m: Option<usize>,
    /// Active fraction per component: 1var, 50% or 75%.
    #[arg(long)]
    rho: Option<RhoMode>,
    /// Translation offset in latent standard deviations.
    #[arg(long)]
    delta: Option<f64>,
    /// Rotation of the common basis, in degrees.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of mixture components.
    #[arg(long)]
    components: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    eval_samples: Option<usize>,
    #[arg(long)]
    stage2_arch: Option<Stage2Arch>,
    #[arg(long)]
    iters1: Option<usize>,
    #[arg(long)]
    iters2: Option<usize>,
    /// Train stage 2 without the L1 constraint.
    #[arg(long)]
    no_sparsity: bool,
    #[arg(long)]
    sequential: bool,
    #[arg(long, env = OUT_ENV, default_value = "runs")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = ExperimentConfig::preset(self.preset);
        if self.n.is_some() || self.rho.is_some() {
            c.set_shape(self.n.unwrap_or(c.n), self.rho.unwrap_or(c.rho));
        }
        if let Some(v) = self.components {
            c.components = v;
        }
        if let Some(v) = self.er_k {
            c.k = v;
        }
        if let Some(v) = self.layers_m {
            c.m = v;
        }
        if let Some(v) = self.delta {
            c.delta = v;
        }
        if let Some(v) = self.theta {
            c.theta = v;
        }
        if let Some(v) = self.epsilon {
            c.stage2.epsilon = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.samples {
            c.samples = v;
        }
        if let Some(v) = self.eval_samples {
            c.eval_samples = v;
        }
        if let Some(v) = self.stage2_arch {
            c.stage2.arch = v;
        }
        if let Some(v) = self.iters1 {
            c.stage1.iterations = v;
        }
        if let Some(v) = self.iters2 {
            c.stage2.iterations = v;
        }
        if self.no_sparsity {
            c.stage2.sparsity = false;
        }
        c.validate()?;
        Ok(c)
    }

    fn exec(&self) -> Exec {
        if self.sequential { Exec::Sequential } else { Exec::Parallel }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(c) => {
            let layout = generate(&c.config()?, &c.out, c.exec())?;
            println!("{}", layout.data.display());
        }
        Command::Train { stage, common: c } => {
            let path = train(&c.config()?, &c.out, stage)?;
            println!("{}", path.display());
        }
        Command::Evaluate { oracle, common: c } => {
            let report = evaluate(&c.config()?, &c.out, oracle, c.exec())?;
            println!("{}\n{}", pdgmm::metrics::CSV_HEADER, report.csv_row());
        }
        Command::Run(c) => {
            let report = run_all(&c.config()?, &c.out, c.exec())?;
            println!("{}\n{}", pdgmm::metrics::CSV_HEADER, report.csv_row());
        }
        Command::Grid { axis, values, seeds, workers, common: c } => {
            let outcome = grid(&c.config()?, axis, &values, &seeds, workers, &c.out)?;
            print!("{}", std::fs::read_to_string(outcome.dir.join("summary.csv")).unwrap_or_default());
            for r in &outcome.runs {
                if let Err(e) = &r.outcome {
                    eprintln!("{axis}={} seed {}: {e}", r.value, r.seed);
                }
            }
            println!("{}", outcome.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
