//! `lpmech`: simulate mechanical systems on Lie algebroid duals and verify
//! their Jacobi structures.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::Failure;
use crate::config::{Numbers, RunConfig};

#[derive(Parser)]
#[command(name = "lpmech", version, about = "Mechanics on duals of Lie algebroids")]
struct Cli {
    #[command(flatten)]
    system: SystemArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate X_H from the initial point and write a CSV trajectory.
    Simulate(SimulateArgs),
    /// Run the invariant suite and print a JSON report.
    Verify(VerifyArgs),
    /// Compare c(s) with the Jacobi-metric geodesic c_e(h(s)).
    ReparamCheck(ReparamArgs),
    /// Print the coordinate brackets {z_a, z_b} at a point.
    BracketTable(BracketArgs),
}

#[derive(Args, Clone, Default)]
struct SystemArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Registered system name or "inline".
    #[arg(long, global = true)]
    system: Option<String>,
    /// System parameter, e.g. `--param hinge_stiffness=2`.
    #[arg(long = "param", value_name = "KEY=V1,V2", global = true)]
    params: Vec<String>,
    /// Principal moments of inertia.
    #[arg(long = "I", value_delimiter = ',', allow_hyphen_values = true, global = true)]
    inertia: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true, global = true)]
    mgl: Option<f64>,
    /// Unit vector to the center of mass in the body frame.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, global = true)]
    a: Option<Vec<f64>>,
    /// Energy level e.
    #[arg(long, allow_hyphen_values = true, global = true)]
    energy: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, global = true)]
    q0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, global = true)]
    y0: Option<Vec<f64>>,
    /// Output directory (default: $LPMECH_OUT_DIR, then ./lpmech-out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Rk4,
    Rk45,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Final time.
    #[arg(long = "t", alias = "t-final")]
    t_final: Option<f64>,
    /// RK4 step.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Spacing of recorded rows.
    #[arg(long)]
    sample_interval: Option<f64>,
    /// CSV path (default: <out-dir>/<system>-trajectory.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fd_step: Option<f64>,
    /// Replaces every per-check tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReparamArgs {
    #[arg(long, default_value_t = 1.0)]
    s_final: f64,
    /// RK4 step for both trajectories.
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Args)]
pub struct BracketArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

impl SystemArgs {
    /// Loads the config file, if any, and applies flag overrides.
    fn resolve(&self) -> Result<RunConfig, lpmech::Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = &self.system {
            cfg.system = Some(s.clone());
        }
        for raw in &self.params {
            let (key, values) = raw
                .split_once('=')
                .ok_or_else(|| lpmech::Error::Config(format!("--param {raw:?} is not KEY=VALUES")))?;
            let values = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| lpmech::Error::Config(format!("--param {key}: {e}")))?;
            cfg.params.insert(key.trim().to_string(), Numbers::Many(values));
        }
        let named = [("I", &self.inertia), ("a", &self.a)];
        for (key, v) in named {
            if let Some(v) = v {
                cfg.params.insert(key.into(), Numbers::Many(v.clone()));
            }
        }
        if let Some(m) = self.mgl {
            cfg.params.insert("mgl".into(), Numbers::One(m));
        }
        if self.energy.is_some() {
            cfg.energy = self.energy;
        }
        if self.q0.is_some() {
            cfg.initial.q = self.q0.clone();
        }
        if self.y0.is_some() {
            cfg.initial.y = self.y0.clone();
        }
        if self.out_dir.is_some() {
            cfg.output.dir = self.out_dir.clone();
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.system.resolve().map_err(Failure::from).and_then(|cfg| match &cli.command {
        Command::Simulate(a) => commands::simulate(&cfg, a),
        Command::Verify(a) => commands::verify(&cfg, a),
        Command::ReparamCheck(a) => commands::reparam_check(&cfg, a),
        Command::BracketTable(a) => commands::bracket_table(&cfg, a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("lpmech: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
