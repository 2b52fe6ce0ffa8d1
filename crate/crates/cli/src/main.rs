use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lanemden::config::{ExperimentConfig, Kind, Overrides};
use lanemden::experiment::{check, instability_with, run_evolve, sweep, Pipeline, RunStatus};
use lanemden::output;
use lanemden::polytrope::{equilibrium_energy, solve_lane_emden_on, vacuum_exponent};
use lanemden::spectral::{assemble_pencil, largest_eigenpair};
use lanemden::Error;

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "LANEMDEN_OUT";

#[derive(Parser)]
#[command(
    name = "lanemden",
    version,
    about = "Lane-Emden polytropes, growing modes and nonlinear instability runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment configuration (schema_version 1); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory. Falls back to the config's output_dir, then $LANEMDEN_OUT, then ./out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Adiabatic exponent; also replaces the sweep list.
    #[arg(long, global = true)]
    gamma: Option<f64>,

    /// Perturbation size; replaces the list of deltas.
    #[arg(long, global = true)]
    delta: Option<f64>,

    /// Number of mesh nodes.
    #[arg(long, global = true)]
    nodes: Option<usize>,

    /// Seed for the random test families.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the Lane-Emden equation and write the profile.
    Profile,
    /// Compute the largest eigenpair of the linearized operator.
    Mode,
    /// Evolve growing-mode data with the nonlinear dynamics up to t_end.
    Evolve,
    /// Growing-mode data until escape, for every delta, with rate fits.
    Instability,
    /// One row per gamma: eigenvalue, fitted rate and escape ratios.
    Sweep,
    /// Run the property battery; exits with 4 if a mandatory check fails.
    Check,
}

impl Command {
    fn kind(self) -> Kind {
        match self {
            Command::Profile => Kind::Profile,
            Command::Mode => Kind::Mode,
            Command::Evolve => Kind::Evolve,
            Command::Instability => Kind::Instability,
            Command::Sweep => Kind::Sweep,
            Command::Check => Kind::Check,
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(&Overrides {
        gamma: cli.gamma,
        delta: cli.delta,
        nodes: cli.nodes,
        seed: cli.seed,
        out: cli.out.clone(),
        kind: Some(cli.command.kind()),
    })?;
    Ok(cfg)
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let cfg = load(cli)?;
    let dir = output_dir(&cfg);
    let hash = cfg.hash();
    let gamma = cfg.polytrope.gamma;

    match cli.command {
        Command::Profile => {
            let profile = solve_lane_emden_on(&cfg.polytrope_config()?, cfg.mesh)?;
            output::write_profile(&dir, &hash, &profile)?;
            let e = equilibrium_energy(&profile);
            println!(
                "gamma = {gamma}  R = {:.12}  mass = {:.12}",
                profile.radius, profile.mass
            );
            match vacuum_exponent(&profile) {
                Ok(p) => println!("vacuum exponent = {p:.6}"),
                Err(err) => println!("vacuum exponent unavailable: {err}"),
            }
            println!(
                "equilibrium energy = {:.12e} (identity mismatch {:.2e})",
                e.direct, e.relative_difference
            );
        }
        Command::Mode => {
            let profile = solve_lane_emden_on(&cfg.polytrope_config()?, cfg.mesh)?;
            let pencil = assemble_pencil(&profile);
            let mode = largest_eigenpair(&profile, &pencil)?;
            output::write_mode(&dir, &hash, &profile, &mode)?;
            println!(
                "gamma = {gamma}  mu0 = {:.12e}  rate = {:.12e}  residual = {:.2e}",
                mode.mu0, mode.rate, mode.residual
            );
            if mode.near_degenerate {
                println!(
                    "warning: near-degenerate eigenvalue pair (gap {:.2e})",
                    mode.gap
                );
            }
        }
        Command::Evolve => {
            let (pipe, result) = run_evolve(&cfg)?;
            output::write_evolve(&dir, &hash, &pipe.profile.grid, &result)?;
            let m = &result.record.metadata;
            println!(
                "status = {:?}  t = {:.6}  steps = {}  H drift = {:.2e}",
                result.record.status, m.t_final, m.n_steps, m.h_drift
            );
            if result.record.status == RunStatus::Collapsed {
                eprintln!("{}", m.collapse.as_deref().unwrap_or("collapsed"));
                return Ok(3);
            }
        }
        Command::Instability => {
            let pipe = Pipeline::new(&cfg, gamma)?;
            let mut results = Vec::new();
            for &delta in &cfg.experiment.deltas {
                let res = instability_with(&pipe, &cfg, delta)?;
                println!(
                    "delta = {delta:e}  status = {:?}  rate = {}  escape = {}  predicted = {:.6}",
                    res.record.status,
                    res.fit
                        .as_ref()
                        .map_or("n/a".to_string(), |f| format!("{:.6}", f.rate)),
                    res.escape_time
                        .map_or("n/a".to_string(), |t| format!("{t:.6}")),
                    res.predicted_escape
                );
                results.push(res);
            }
            output::write_instability(&dir, &hash, &results)?;
            println!("sqrt(mu0) = {:.6}", pipe.mode.rate);
            if results
                .iter()
                .any(|r| r.record.status == RunStatus::Collapsed)
            {
                return Ok(3);
            }
        }
        Command::Sweep => {
            let rows = sweep(&cfg);
            output::write_sweep(&dir, &hash, &rows)?;
            for r in &rows {
                println!(
                    "gamma = {:<8} {:<9} mu0 = {:.6e}  {}",
                    r.gamma, r.status, r.mu0, r.detail
                );
            }
        }
        Command::Check => {
            let report = check(&cfg)?;
            output::write_check(&dir, &hash, &report)?;
            for c in &report.checks {
                let tag = if c.mandatory { "" } else { " (report only)" };
                println!(
                    "{:<6} {}{tag}",
                    format!("{:?}", c.status).to_lowercase(),
                    c.name
                );
            }
            println!(
                "{} passed, {} failed, {} skipped",
                report.n_pass, report.n_fail, report.n_skip
            );
            if !report.passed {
                return Ok(4);
            }
        }
    }
    println!("wrote {}", dir.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
