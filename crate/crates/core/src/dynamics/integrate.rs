use nalgebra::DVector;
use serde::Serialize;

use crate::calculus::{ScalarField, VectorField};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    /// Classical fourth-order Runge–Kutta with a fixed step.
    Rk4 { step: f64 },
    /// Dormand–Prince 5(4) with error control.
    Rk45 { abs_tol: f64, rel_tol: f64, initial_step: f64, max_step: f64 },
}

impl Method {
    pub fn rk4(step: f64) -> Self {
        Method::Rk4 { step }
    }

    pub fn rk45() -> Self {
        Method::Rk45 { abs_tol: 1e-10, rel_tol: 1e-9, initial_step: 1e-3, max_step: 0.1 }
    }
}

type Stabilizer<'a> = Box<dyn Fn(&mut Vec<f64>) -> Result<()> + 'a>;

pub struct IntegrateOptions<'a> {
    pub method: Method,
    /// Spacing of recorded samples; `None` records every step.
    pub sample_interval: Option<f64>,
    /// Applied to the state after every accepted step.
    pub stabilize: Option<Stabilizer<'a>>,
}

impl<'a> IntegrateOptions<'a> {
    pub fn new(method: Method) -> Self {
        IntegrateOptions { method, sample_interval: None, stabilize: None }
    }

    pub fn sample_interval(mut self, dt: f64) -> Self {
        self.sample_interval = Some(dt);
        self
    }

    pub fn stabilize(mut self, f: impl Fn(&mut Vec<f64>) -> Result<()> + 'a) -> Self {
        self.stabilize = Some(Box::new(f));
        self
    }
}

/// A named scalar recorded at every sample.
pub struct Monitor<'a> {
    pub name: String,
    pub field: &'a dyn ScalarField,
}

impl<'a> Monitor<'a> {
    pub fn new(name: impl Into<String>, field: &'a dyn ScalarField) -> Self {
        Monitor { name: name.into(), field }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExitReason {
    Completed,
    /// The field could not be evaluated (chart boundary, `V ≥ e`, ...).
    Domain {
        time: f64,
        message: String,
    },
    StepUnderflow {
        time: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `(name, value per sample)`; unevaluable samples hold NaN.
    pub monitors: Vec<(String, Vec<f64>)>,
    pub exit: ExitReason,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds the initial sample")
    }

    pub fn completed(&self) -> bool {
        self.exit == ExitReason::Completed
    }

    pub fn monitor(&self, name: &str) -> Option<&[f64]> {
        self.monitors.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// `max_k |m(z_k) − m(z_0)|` for a recorded monitor.
    pub fn drift(&self, name: &str) -> Option<f64> {
        let v = self.monitor(name)?;
        let first = *v.first()?;
        Some(v.iter().fold(0.0_f64, |acc, x| acc.max((x - first).abs())))
    }

    fn record(&mut self, t: f64, z: &[f64], monitors: &[Monitor<'_>]) {
        self.times.push(t);
        self.states.push(z.to_vec());
        for (slot, m) in self.monitors.iter_mut().zip(monitors) {
            slot.1.push(m.field.value(z).unwrap_or(f64::NAN));
        }
    }
}

fn axpy(z: &[f64], h: f64, k: &DVector<f64>) -> Vec<f64> {
    z.iter().zip(k.iter()).map(|(a, b)| a + h * b).collect()
}

fn rk4_step<X: VectorField + ?Sized>(field: &X, z: &[f64], h: f64) -> Result<Vec<f64>> {
    let k1 = field.eval(z)?;
    let k2 = field.eval(&axpy(z, 0.5 * h, &k1))?;
    let k3 = field.eval(&axpy(z, 0.5 * h, &k2))?;
    let k4 = field.eval(&axpy(z, h, &k3))?;
    let incr = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    Ok(z.iter().zip(incr.iter()).map(|(a, b)| a + b).collect())
}

// Dormand–Prince 5(4) tableau; nodes are implied since fields are autonomous.
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// One Dormand–Prince step: (fifth-order solution, error estimate).
fn dp_step<X: VectorField + ?Sized>(field: &X, z: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    for row in &DP_A {
        let mut w = z.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = row[j];
            if a != 0.0 {
                for (wi, ki) in w.iter_mut().zip(kj.iter()) {
                    *wi += h * a * ki;
                }
            }
        }
        k.push(field.eval(&w)?);
    }
    let n = z.len();
    let mut high = z.to_vec();
    let mut err = vec![0.0; n];
    for s in 0..7 {
        for i in 0..n {
            high[i] += h * DP_B5[s] * k[s][i];
            err[i] += h * (DP_B5[s] - DP_B4[s]) * k[s][i];
        }
    }
    Ok((high, err))
}

/// Integrates `ż = X(z)` from `t0` to `t1 ≥ t0`.
///
/// Field evaluation failures stop the run and are reported in
/// [`Trajectory::exit`]; the samples gathered so far are kept.
pub fn integrate<X: VectorField + ?Sized>(
    field: &X,
    z0: &[f64],
    t0: f64,
    t1: f64,
    options: &IntegrateOptions<'_>,
    monitors: &[Monitor<'_>],
) -> Trajectory {
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        monitors: monitors.iter().map(|m| (m.name.clone(), Vec::new())).collect(),
        exit: ExitReason::Completed,
    };
    traj.record(t0, z0, monitors);
    if t1 <= t0 {
        return traj;
    }
    match options.method {
        Method::Rk4 { step } => run_rk4(field, z0, t0, t1, step, options, monitors, &mut traj),
        Method::Rk45 { abs_tol, rel_tol, initial_step, max_step } => {
            run_rk45(field, z0, t0, t1, (abs_tol, rel_tol, initial_step, max_step), options, monitors, &mut traj)
        }
    }
    traj
}

#[allow(clippy::too_many_arguments)]
fn run_rk4<X: VectorField + ?Sized>(
    field: &X,
    z0: &[f64],
    t0: f64,
    t1: f64,
    step: f64,
    options: &IntegrateOptions<'_>,
    monitors: &[Monitor<'_>],
    traj: &mut Trajectory,
) {
    // uniform grid landing exactly on t1
    let steps = (((t1 - t0) / step) - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let stride = options.sample_interval.map_or(1, |dt| ((dt / h).round() as usize).max(1));
    let mut z = z0.to_vec();
    for k in 1..=steps {
        let t = t0 + (k - 1) as f64 * h;
        match rk4_step(field, &z, h).and_then(|mut next| {
            if let Some(stab) = &options.stabilize {
                stab(&mut next)?;
            }
            Ok(next)
        }) {
            Ok(next) => z = next,
            Err(e) => {
                traj.exit = ExitReason::Domain { time: t, message: e.to_string() };
                return;
            }
        }
        if k % stride == 0 || k == steps {
            traj.record(t0 + k as f64 * h, &z, monitors);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_rk45<X: VectorField + ?Sized>(
    field: &X,
    z0: &[f64],
    t0: f64,
    t1: f64,
    (abs_tol, rel_tol, initial_step, max_step): (f64, f64, f64, f64),
    options: &IntegrateOptions<'_>,
    monitors: &[Monitor<'_>],
    traj: &mut Trajectory,
) {
    const MIN_STEP: f64 = 1e-14;
    let mut z = z0.to_vec();
    let mut t = t0;
    let mut h = initial_step.min(max_step);
    let mut next_sample = options.sample_interval.map(|dt| t0 + dt);
    while t < t1 {
        let mut target = t1;
        if let Some(ts) = next_sample {
            target = target.min(ts);
        }
        let h_try = h.min(target - t);
        let (high, err) = match dp_step(field, &z, h_try) {
            Ok(r) => r,
            Err(e) => {
                traj.exit = ExitReason::Domain { time: t, message: e.to_string() };
                return;
            }
        };
        let norm = err
            .iter()
            .zip(z.iter().zip(&high))
            .map(|(e, (a, b))| e.abs() / (abs_tol + rel_tol * a.abs().max(b.abs())))
            .fold(0.0_f64, f64::max);
        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        let proposed = (h_try * factor).min(max_step);
        if norm <= 1.0 {
            t = if h_try == target - t { target } else { t + h_try };
            z = high;
            if let Some(stab) = &options.stabilize {
                if let Err(e) = stab(&mut z) {
                    traj.exit = ExitReason::Domain { time: t, message: e.to_string() };
                    return;
                }
            }
            let on_sample = next_sample.is_some_and(|ts| t >= ts);
            if options.sample_interval.is_none() || on_sample || t >= t1 {
                traj.record(t, &z, monitors);
            }
            if on_sample {
                next_sample = options.sample_interval.map(|dt| t + dt);
            }
            // a step clipped to land on a sample point does not shrink h
            h = if h_try < h { h.max(proposed) } else { proposed };
        } else {
            h = proposed;
            if h < MIN_STEP {
                traj.exit = ExitReason::StepUnderflow { time: t };
                return;
            }
        }
    }
}
