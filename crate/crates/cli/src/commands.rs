//! Subcommand implementations. Each returns `Ok(passed)` or a failure that
//! maps onto the exit-code contract.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use lpmech::algebroid::PhasePoint;
use lpmech::calculus::{FdStep, ScalarField};
use lpmech::dynamics::{compare_reparametrized, integrate, ExitReason, HamiltonianField, IntegrateOptions, Method};
use lpmech::jacobi_reeb::sphere_membership;
use lpmech::models::SystemBundle;
use lpmech::verify::{verify_system, VerifyOptions};
use lpmech::Error;
use serde::Serialize;

use crate::config::{RunConfig, DEFAULT_SEED};
use crate::output::{to_json, write_csv};
use crate::{BracketArgs, Format, MethodArg, ReparamArgs, SimulateArgs, VerifyArgs};

pub const REPARAM_GAP_TOL: f64 = 1e-5;

#[derive(Debug)]
pub enum Failure {
    Lib(Error),
    Io(String),
}

impl Failure {
    /// 2 for bad input, 1 for anything that went wrong while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Lib(Error::Config(_) | Error::Dimension { .. } | Error::EnergyDomain { .. }) => 2,
            Failure::Lib(_) | Failure::Io(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn config(msg: impl Into<String>) -> Failure {
    Failure::Lib(Error::Config(msg.into()))
}

fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn labels(b: &SystemBundle) -> Vec<String> {
    let q = (1..=b.base_dim()).map(|i| format!("q_{i}"));
    q.chain((1..=b.fiber_dim()).map(|a| format!("y_{a}"))).collect()
}

fn emit_json<T: Serialize>(value: &T, file: Option<&Path>) -> Result<(), Failure> {
    let text = to_json(value)?;
    if let Some(path) = file {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn method(cfg: &RunConfig, args: &SimulateArgs) -> Result<Method, Failure> {
    let it = &cfg.integrator;
    let choice = match (args.method, it.method.as_deref()) {
        (Some(m), _) => m,
        (None, None | Some("rk4")) => MethodArg::Rk4,
        (None, Some("rk45")) => MethodArg::Rk45,
        (None, Some(other)) => return Err(config(format!("unknown integrator.method {other:?}; use rk4 or rk45"))),
    };
    Ok(match choice {
        MethodArg::Rk4 => Method::rk4(positive("step", args.step.or(it.step).unwrap_or(1e-3))?),
        MethodArg::Rk45 => {
            let Method::Rk45 { abs_tol, rel_tol, initial_step, max_step } = Method::rk45() else { unreachable!() };
            Method::Rk45 {
                abs_tol: positive("abs_tol", args.abs_tol.or(it.abs_tol).unwrap_or(abs_tol))?,
                rel_tol: positive("rel_tol", args.rel_tol.or(it.rel_tol).unwrap_or(rel_tol))?,
                initial_step: args.step.or(it.step).map_or(Ok(initial_step), |h| positive("step", h))?,
                max_step,
            }
        }
    })
}

#[derive(Serialize)]
struct SimulateSummary {
    system: String,
    file: PathBuf,
    rows: usize,
    t_final: f64,
    method: Method,
    energy: f64,
    exit: ExitReason,
    drift: BTreeMap<String, f64>,
    max_sphere_residual: f64,
}

pub fn simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<bool, Failure> {
    let b = cfg.bundle()?;
    let method = method(cfg, args)?;
    let t_final = args.t_final.or(cfg.integrator.t_final).unwrap_or(10.0);
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(config(format!("t_final must be finite and nonnegative, got {t_final}")));
    }
    let mut opts = IntegrateOptions::new(method);
    if let Some(dt) = args.sample_interval.or(cfg.integrator.sample_interval) {
        opts = opts.sample_interval(positive("sample_interval", dt)?);
    }
    let h = b.hamiltonian();
    let field = HamiltonianField::new(&b.model, &h);
    let traj = integrate(&field, &b.initial.packed(), 0.0, t_final, &opts, &[]);

    let m = b.base_dim();
    let mut quantities: Vec<(String, &dyn ScalarField)> = vec![("H".into(), &h)];
    for c in b.conserved.iter().filter(|c| c.name != "H") {
        quantities.push((c.name.clone(), c.field.as_ref()));
    }
    let mut header = vec!["s".to_string()];
    header.extend(labels(&b));
    header.extend(quantities.iter().map(|(n, _)| n.clone()));
    header.push("sphere_residual".into());

    let rows: Vec<Vec<f64>> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(s, z)| {
            let mut row = vec![*s];
            row.extend_from_slice(z);
            row.extend(quantities.iter().map(|(_, f)| f.value(z).unwrap_or(f64::NAN)));
            let p = PhasePoint::from_packed(m, z);
            row.push(sphere_membership(&p, &b.metric, &b.potential, b.energy).unwrap_or(f64::NAN));
            row
        })
        .collect();

    let file = args.out.clone().unwrap_or_else(|| cfg.out_dir().join(format!("{}-trajectory.csv", b.name)));
    let n = write_csv(&file, &header, rows.iter().cloned())?;
    let width = 1 + m + b.fiber_dim();
    let drift = quantities
        .iter()
        .enumerate()
        .map(|(k, (name, _))| {
            let col: Vec<f64> = rows.iter().map(|r| r[width + k]).collect();
            let d = col.iter().fold(0.0_f64, |acc, v| if v.is_nan() { f64::NAN } else { acc.max((v - col[0]).abs()) });
            (name.clone(), d)
        })
        .collect();
    let residual = rows.iter().map(|r| *r.last().unwrap()).fold(0.0, f64::max);
    let completed = traj.completed();
    if let ExitReason::Domain { time, message } = &traj.exit {
        eprintln!("lpmech: trajectory left the domain at s = {time}: {message}");
    }
    if let ExitReason::StepUnderflow { time } = &traj.exit {
        eprintln!("lpmech: step size underflow at s = {time}");
    }
    emit_json(
        &SimulateSummary {
            system: b.name.clone(),
            file,
            rows: n,
            t_final,
            method,
            energy: b.energy.0,
            exit: traj.exit,
            drift,
            max_sphere_residual: residual,
        },
        None,
    )?;
    Ok(completed)
}

pub fn verify(cfg: &RunConfig, args: &VerifyArgs) -> Result<bool, Failure> {
    let b = cfg.bundle()?;
    let v = &cfg.verify;
    let defaults = VerifyOptions::default();
    let fd = args.fd_step.or(v.fd_step).map_or(Ok(defaults.fd_step), |h| positive("fd_step", h).map(FdStep))?;
    let tolerance = args.tolerance.or(v.tolerance).map(|t| positive("tolerance", t)).transpose()?;
    let opts = VerifyOptions {
        samples: args.samples.or(v.samples).unwrap_or(defaults.samples),
        fd_step: fd,
        seed: args.seed.or(v.seed).unwrap_or(DEFAULT_SEED),
        tolerance,
    };
    let summary = verify_system(&b, &opts)?;
    emit_json(&summary, args.out.as_deref())?;
    for r in summary.reports.iter().filter(|r| !r.passed) {
        eprintln!("lpmech: check {} failed: max {:e} vs tolerance {:e}", r.check, r.max, r.tolerance);
    }
    Ok(summary.all_passed())
}

#[derive(Serialize)]
struct ReparamReport {
    system: String,
    energy: f64,
    s_final: f64,
    step: f64,
    initial: PhasePoint,
    h_initial: f64,
    h_final: f64,
    h_strictly_increasing: bool,
    sup_gap: f64,
    tolerance: f64,
    passed: bool,
    mechanical_file: PathBuf,
    kinetic_file: PathBuf,
}

pub fn reparam_check(cfg: &RunConfig, args: &ReparamArgs) -> Result<bool, Failure> {
    let b = cfg.bundle()?;
    let s_final = positive("s_final", args.s_final)?;
    let step = positive("step", args.step.or(cfg.integrator.step).unwrap_or(1e-4))?;
    let cmp = compare_reparametrized(&b.model, &b.metric, &b.potential, b.energy, &b.initial, s_final, step)?;

    let dir = cfg.out_dir();
    let mut header = vec!["s".to_string()];
    header.extend(labels(&b));
    let mech_file = dir.join(format!("{}-mechanical.csv", b.name));
    let mut mech_header = header.clone();
    mech_header.push("h".into());
    write_csv(
        &mech_file,
        &mech_header,
        cmp.mechanical.times.iter().zip(&cmp.mechanical.states).zip(&cmp.reparam.h).map(|((s, z), h)| {
            let mut row = vec![*s];
            row.extend_from_slice(z);
            row.push(*h);
            row
        }),
    )?;
    let kin_file = dir.join(format!("{}-kinetic.csv", b.name));
    header[0] = "t".into();
    write_csv(
        &kin_file,
        &header,
        cmp.kinetic.times.iter().zip(&cmp.kinetic.states).map(|(t, z)| {
            let mut row = vec![*t];
            row.extend_from_slice(z);
            row
        }),
    )?;

    let increasing = cmp.strictly_increasing();
    let h_initial = cmp.reparam.h[0];
    let passed = increasing && h_initial == 0.0 && cmp.sup_gap < REPARAM_GAP_TOL;
    emit_json(
        &ReparamReport {
            system: b.name.clone(),
            energy: b.energy.0,
            s_final,
            step,
            initial: cmp.initial.clone(),
            h_initial,
            h_final: *cmp.reparam.h.last().expect("nonempty"),
            h_strictly_increasing: increasing,
            sup_gap: cmp.sup_gap,
            tolerance: REPARAM_GAP_TOL,
            passed,
            mechanical_file: mech_file,
            kinetic_file: kin_file,
        },
        None,
    )?;
    Ok(passed)
}

#[derive(Serialize)]
struct BracketEntry {
    a: String,
    b: String,
    value: f64,
}

#[derive(Serialize)]
struct BracketTable {
    system: String,
    point: PhasePoint,
    labels: Vec<String>,
    matrix: Vec<Vec<f64>>,
    pairs: Vec<BracketEntry>,
}

pub fn bracket_table(cfg: &RunConfig, args: &BracketArgs) -> Result<bool, Failure> {
    let b = cfg.bundle()?;
    let pi = b.model.poisson_matrix(&b.initial.packed())?;
    let names = labels(&b);
    let d = names.len();
    let mut pairs = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            pairs.push(BracketEntry { a: names[i].clone(), b: names[j].clone(), value: pi[(i, j)] + 0.0 });
        }
    }
    match args.format {
        Format::Json => {
            let matrix = (0..d).map(|i| (0..d).map(|j| pi[(i, j)] + 0.0).collect()).collect();
            let table = BracketTable { system: b.name.clone(), point: b.initial.clone(), labels: names, matrix, pairs };
            emit_json(&table, None)?;
        }
        Format::Text => {
            println!("# {} at q = {:?}, y = {:?}", b.name, b.initial.q, b.initial.y);
            for p in &pairs {
                println!("{{{}, {}}} = {}", p.a, p.b, p.value);
            }
        }
    }
    Ok(true)
}
