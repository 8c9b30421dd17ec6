//! `amd`: run decomposition, gap, effective-generator, evolution, scaling
//! and holonomy experiments on preset or inline Lindbladians.

mod config;
mod experiments;
mod plot;
mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Experiment, ExperimentConfig, ValidationError};
use experiments::RunError;

#[derive(Parser, Debug)]
#[command(name = "amd", version, about = "Adiabatic Markovian dynamics experiments")]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: Experiment,
    /// Preset system (see `amd presets`).
    #[arg(long)]
    preset: Option<String>,
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed in hex; overrides AMD_SEED and the config.
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    gamma_plus: Option<f64>,
    #[arg(long)]
    gamma_minus: Option<f64>,
    /// Qubit frequency, or the gap g for closed-sweep.
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Total time(s), comma separated.
    #[arg(long = "T", value_delimiter = ',')]
    t: Vec<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    s_points: Option<usize>,
    /// Perturbation such as sigma-z@1.
    #[arg(long)]
    v: Option<String>,
    /// Block index for inline and depol-b systems.
    #[arg(long)]
    block: Option<usize>,
    /// Also write plot.svg for scans.
    #[arg(long)]
    plot: bool,
}

enum Failure {
    Run(RunError),
    Io(String),
}

impl From<ValidationError> for Failure {
    fn from(e: ValidationError) -> Self {
        Failure::Run(RunError::Validation(e))
    }
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    match cfg.experiment {
        Some(e) if e != cli.experiment => {
            return Err(ValidationError(format!(
                "config is for experiment {e}, but {} was requested",
                cli.experiment
            ))
            .into())
        }
        _ => cfg.experiment = Some(cli.experiment),
    }
    if let Some(p) = &cli.preset {
        cfg.system.preset = Some(p.clone());
    }
    let p = &mut cfg.parameters;
    macro_rules! set {
        ($($field:ident),*) => {$( if cli.$field.is_some() { p.$field = cli.$field.clone(); } )*};
    }
    set!(gamma_plus, gamma_minus, omega, gamma, a, b, steps, s_points, v, block);
    if !cli.t.is_empty() {
        p.t = cli.t.clone();
    }
    let env_seed = std::env::var("AMD_SEED").ok().filter(|s| !s.is_empty());
    if let Some(seed) = cli.seed.clone().or(env_seed) {
        p.seed = Some(seed);
    }
    if cli.plot {
        cfg.output.plot = true;
    }
    if cli.out.is_some() {
        cfg.output.dir = cli.out.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<String, Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Io(e.to_string()))?;
    }
    if cli.experiment == Experiment::Presets {
        return Ok(experiments::presets_text());
    }
    let cfg = build_config(cli)?;
    cfg.validate()?;
    let out = experiments::run(&cfg).map_err(Failure::Run)?;
    let dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    report::write_all(&dir, &out).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    Ok(format!("{}wrote {}\n", report::summary_lines(&out.report), dir.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
