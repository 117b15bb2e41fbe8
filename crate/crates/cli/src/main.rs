use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stokes_lab::report::{run, Command, Overrides, RunConfig};
use stokes_lab::Error;

/// Taylor-Hood Stokes laboratory: solves, Green's function studies,
/// assumption checks and max-norm stability experiments.
#[derive(Debug, Parser)]
#[command(name = "stokes-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Comma-separated elements per side, replacing every level list.
    #[arg(long, global = true, value_delimiter = ',')]
    levels: Option<Vec<usize>>,

    /// Velocity degree k of the P_k/P_{k-1} pair.
    #[arg(long, global = true)]
    degree: Option<usize>,

    /// Weight parameter κ of σ.
    #[arg(long, global = true)]
    kappa: Option<f64>,

    /// Inner ball factor of the dyadic decomposition.
    #[arg(long = "K", global = true)]
    big_k: Option<f64>,

    /// Hölder exponent.
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Refinements between a level and its reference mesh.
    #[arg(long, global = true)]
    oracle_gap: Option<u32>,

    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Seed of all random sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// One Stokes solve with a closed-form scenario.
    Solve {
        /// manufactured or null_velocity.
        #[arg(long)]
        scenario: Option<String>,
        /// Elements per side.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Green's function error series against the reference oracle.
    Greens,
    /// Assumption suite.
    Assumptions,
    /// Stability ratio experiments.
    Experiment {
        /// Restrict to these kinds (repeatable).
        #[arg(long = "kind")]
        kinds: Vec<String>,
    },
    /// Everything above.
    All,
}

fn usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::Parse(_)
            | Error::InvalidSubdomain(_)
            | Error::Clearance(_)
            | Error::CutoffSupport(_)
            | Error::NonConvexDomain(_)
            | Error::PointOutsideDomain { .. }
            | Error::DegenerateDecomposition(_)
    )
}

fn config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        levels: cli.levels.clone(),
        degree: cli.degree,
        kappa: cli.kappa,
        big_k: cli.big_k,
        alpha: cli.alpha,
        oracle_gap: cli.oracle_gap,
        jobs: cli.jobs,
        seed: cli.seed,
    });
    match &cli.command {
        Sub::Solve { scenario, n } => {
            if let Some(s) = scenario {
                cfg.solve.scenario = s.clone();
            }
            if let Some(n) = n {
                cfg.solve.n = *n;
            }
        }
        Sub::Experiment { kinds } if !kinds.is_empty() => cfg.experiment.kinds = kinds.clone(),
        _ => {}
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = match cli.command {
        Sub::Solve { .. } => Command::Solve,
        Sub::Greens => Command::Greens,
        Sub::Assumptions => Command::Assumptions,
        Sub::Experiment { .. } => Command::Experiment,
        Sub::All => Command::All,
    };
    let result = config(&cli).and_then(|cfg| run(cmd, &cfg, &cli.out));
    match result {
        Ok(summary) => {
            for o in &summary.manifest.outputs {
                println!("{:<6} {}", o.verdict, o.path);
            }
            println!("manifest: {}", cli.out.join("manifest.json").display());
            if summary.ok {
                ExitCode::SUCCESS
            } else {
                for f in &summary.manifest.failed {
                    eprintln!("failed: {f}");
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if usage_error(&e) { 2 } else { 1 })
        }
    }
}
