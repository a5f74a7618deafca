//! `curvereg` command-line driver.
//!
//! Exit codes: 0 ok, 1 other failure (I/O), 2 usage or invalid input,
//! 3 forward-model failure, 4 linear-solver failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use curvereg::config::RunConfig;
use curvereg::momentum::SyntheticKind;
use curvereg::pipeline::{self, ForwardParams};
use curvereg::Error;

#[derive(Parser, Debug)]
#[command(name = "curvereg", version, about = "Planar curve registration by LDDMM shooting and ensemble Kalman inversion")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// RNG seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for ensemble prediction; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Synthetic target (overrides `scenario`).
    #[arg(long, global = true)]
    scenario: Option<SyntheticKind>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Params {
    Target,
    Inversion,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the template mesh and write it out.
    MeshGen,
    /// Shoot the synthetic momentum and store the target curve and raster.
    MakeTarget,
    /// Shoot one momentum and write its trajectory.
    Forward {
        /// Momentum CSV (`facet,value`); defaults to the scenario momentum.
        #[arg(long)]
        momentum: Option<PathBuf>,
        /// Forward parameter set.
        #[arg(long, value_enum, default_value = "target")]
        params: Params,
    },
    /// Run ensemble Kalman inversion against the stored target.
    Invert,
    /// Summarise a run directory into report.json.
    Report {
        /// Run directory; defaults to --out or the configured `out_dir`.
        dir: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_forward_failure() {
        3
    } else if e.is_solver_failure() {
        4
    } else {
        match e.root() {
            Error::Config(_) | Error::Parse { .. } | Error::ShapeMismatch { .. } | Error::Json(_) => 2,
            _ => 1,
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(kind) = cli.scenario {
        cfg.scenario = Some(kind);
    }
    Ok(cfg)
}

fn show(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6e}"))
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = resolve(&cli)?;
    match cli.command {
        Command::MeshGen => {
            let s = pipeline::mesh_gen(&cfg)?;
            println!(
                "template mesh: {} vertices, {} cells, {} curve facets, curve area {:.6}",
                s.n_vertices, s.n_cells, s.n_facets, s.curve_area
            );
        }
        Command::MakeTarget => {
            let s = pipeline::make_target(&cfg)?;
            println!(
                "target: area {:.6} (template {:.6}), raster mass {:.6} (template {:.6})",
                s.target_area, s.template_area, s.target_mass, s.template_mass
            );
        }
        Command::Forward { momentum, params } => {
            if momentum.is_some() {
                cfg.momentum_file = momentum;
            }
            let params = match params {
                Params::Target => ForwardParams::Target,
                Params::Inversion => ForwardParams::Inversion,
            };
            let s = pipeline::forward(&cfg, params)?;
            println!(
                "forward: {} steps, area {:.6} -> {:.6}",
                s.steps,
                s.areas[0],
                s.areas[s.areas.len() - 1]
            );
        }
        Command::Invert => {
            let s = pipeline::invert(&cfg)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            let d = s.last();
            println!(
                "iteration {}: E = {:.6e}  R = {}  S = {:.6e}",
                d.iteration,
                d.misfit,
                show(d.relative_error),
                d.consensus
            );
        }
        Command::Report { dir } => {
            let dir = dir.or(cli.out).unwrap_or(cfg.out_dir);
            let r = pipeline::report(&dir)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
