mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::ControlSource;
use config::{Format, ScenarioConfig};
use error::CliError;
use output::{sha256_hex, RunManifest, Sink};

#[derive(Parser)]
#[command(
    name = "mfsmp",
    version,
    about = "Mean-field SDE/BSDE solvers and maximum-principle checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seeds.master`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use the 1/sqrt(N) interaction average in the N-agent system.
    #[arg(long, global = true)]
    paper_averaging: bool,
    /// Emit only this format (the manifest is always written).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample noise increments and run the isometry check.
    SimulateNoise,
    /// Solve the controlled mean-field SDE by Picard iteration on the law.
    SolveMfsde {
        #[arg(long, default_value = "zero")]
        control: ControlSource,
    },
    /// Solve a linear mean-field BSDE along the forward particles.
    SolveMfbsde {
        #[arg(long, default_value = "zero")]
        control: ControlSource,
    },
    /// Solve the adjoint at a reference control and check the maximiser of the Hamiltonian.
    CheckMaxprinciple {
        #[arg(long, default_value = "zero")]
        control: ControlSource,
        /// Constant shift added to the maximiser before checking.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        perturb: f64,
    },
    /// Full mean-field Vasicek pipeline.
    RunVasicek,
    /// Propagation-of-chaos study for the Vasicek N-agent system.
    ChaosStudy {
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 32)]
        replications: usize,
        #[arg(long, default_value = "riccati")]
        control: ControlSource,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SimulateNoise => "simulate-noise",
            Command::SolveMfsde { .. } => "solve-mfsde",
            Command::SolveMfbsde { .. } => "solve-mfbsde",
            Command::CheckMaxprinciple { .. } => "check-maxprinciple",
            Command::RunVasicek => "run-vasicek",
            Command::ChaosStudy { .. } => "chaos-study",
        }
    }
}

/// Returns `Ok(false)` when an iterative solver stopped before converging.
fn run(cli: Cli) -> Result<bool, CliError> {
    let c = &cli.common;
    if let Some(k) = c.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let path = c
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ScenarioConfig::parse(&text)?;
    if let Some(seed) = c.seed {
        cfg.seeds.master = seed;
    }
    let dir = c
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let formats = c
        .format
        .map(|f| vec![f])
        .unwrap_or_else(|| cfg.output.formats.clone());
    let mut sink = Sink::new(dir, formats)?;

    let converged = match &cli.command {
        Command::SimulateNoise => commands::simulate_noise(&cfg, &mut sink)?,
        Command::SolveMfsde { control } => commands::solve_mfsde(&cfg, control, &mut sink)?,
        Command::SolveMfbsde { control } => commands::solve_mfbsde(&cfg, control, &mut sink)?,
        Command::CheckMaxprinciple { control, perturb } => {
            commands::check_maxprinciple(&cfg, control, *perturb, &mut sink)?
        }
        Command::RunVasicek => commands::run_vasicek(&cfg, c.paper_averaging, &mut sink)?,
        Command::ChaosStudy {
            n_list,
            replications,
            control,
        } => commands::chaos(
            &cfg,
            c.paper_averaging,
            n_list,
            *replications,
            control,
            &mut sink,
        )?,
    };
    sink.finish(RunManifest {
        command: cli.command.name().into(),
        version: format!("mfsmp {}", env!("CARGO_PKG_VERSION")),
        config_sha256: sha256_hex(text.as_bytes()),
        master_seed: cfg.seeds.master,
        threads: rayon::current_num_threads(),
        paper_averaging: c.paper_averaging,
        wall_clock_seconds: 0.0,
        stages: Vec::new(),
        outputs: Vec::new(),
        converged,
    })?;
    Ok(converged)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("mfsmp: an iterative solver did not converge within max_iter");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("mfsmp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
