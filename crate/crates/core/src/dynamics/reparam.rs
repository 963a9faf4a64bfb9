use crate::algebroid::{AlgebroidModel, PhasePoint};
use crate::calculus::VectorField;
use crate::error::{Error, Result};

use super::{
    integrate, jacobi_metric, sphere_projection, EnergyLevel, ExitReason, HamiltonianField, IntegrateOptions,
    MechanicalHamiltonian, Method, MetricModel, Monitor, Potential, Trajectory,
};

/// Samples of `h(s)` solving `dh/ds = 2(e − V(q(s)))`, `h(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reparametrization {
    pub s: Vec<f64>,
    pub h: Vec<f64>,
}

impl Reparametrization {
    pub fn strictly_increasing(&self) -> bool {
        self.h.windows(2).all(|w| w[1] > w[0])
    }
}

/// Accumulates `h` along the samples of `c` with the trapezoid rule.
pub fn reparametrize(
    c: &Trajectory,
    base_dim: usize,
    potential: &Potential,
    e: EnergyLevel,
) -> Result<Reparametrization> {
    let rates = c.states.iter().map(|z| e.conformal_factor(potential, &z[..base_dim])).collect::<Result<Vec<f64>>>()?;
    let mut h = Vec::with_capacity(rates.len());
    let mut acc = 0.0;
    h.push(acc);
    for k in 1..rates.len() {
        acc += 0.5 * (c.times[k] - c.times[k - 1]) * (rates[k] + rates[k - 1]);
        h.push(acc);
    }
    let s0 = c.times.first().copied().unwrap_or(0.0);
    Ok(Reparametrization { s: c.times.iter().map(|t| t - s0).collect(), h })
}

/// Cubic Hermite interpolation of a trajectory of `field` at time `t`.
pub fn hermite_at<X: VectorField + ?Sized>(field: &X, traj: &Trajectory, t: f64) -> Result<Vec<f64>> {
    let times = &traj.times;
    let last = times.len() - 1;
    if t <= times[0] {
        return Ok(traj.states[0].clone());
    }
    if t >= times[last] {
        if t - times[last] > 1e-12 * times[last].abs().max(1.0) {
            return Err(Error::Domain(format!("t = {t} beyond trajectory end {}", times[last])));
        }
        return Ok(traj.states[last].clone());
    }
    let k = times.partition_point(|&s| s <= t) - 1;
    let (t0, t1) = (times[k], times[k + 1]);
    let dt = t1 - t0;
    let u = (t - t0) / dt;
    let (z0, z1) = (&traj.states[k], &traj.states[k + 1]);
    let (f0, f1) = (field.eval(z0)?, field.eval(z1)?);
    let h00 = 2.0 * u.powi(3) - 3.0 * u * u + 1.0;
    let h10 = u.powi(3) - 2.0 * u * u + u;
    let h01 = -2.0 * u.powi(3) + 3.0 * u * u;
    let h11 = u.powi(3) - u * u;
    Ok((0..z0.len()).map(|i| h00 * z0[i] + h10 * dt * f0[i] + h01 * z1[i] + h11 * dt * f1[i]).collect())
}

/// Mechanical trajectory `c(s)` against the Jacobi-metric kinetic trajectory
/// `c_e(h(s))` from the same sphere-bundle point.
#[derive(Debug, Clone)]
pub struct ReparamComparison {
    pub initial: PhasePoint,
    pub reparam: Reparametrization,
    /// `‖c(s_k) − c_e(h(s_k))‖∞` per sample.
    pub gaps: Vec<f64>,
    pub sup_gap: f64,
    pub mechanical: Trajectory,
    pub kinetic: Trajectory,
}

impl ReparamComparison {
    pub fn strictly_increasing(&self) -> bool {
        self.reparam.strictly_increasing()
    }
}

fn require_completed(t: &Trajectory) -> Result<()> {
    match &t.exit {
        ExitReason::Completed => Ok(()),
        ExitReason::Domain { time, message } => {
            Err(Error::Domain(format!("trajectory stopped at t = {time}: {message}")))
        }
        ExitReason::StepUnderflow { time } => Err(Error::Domain(format!("step underflow at t = {time}"))),
    }
}

/// Integrates both systems with RK4 at `step`: `X_H` over `s ∈ [0, s_final]`
/// and `X_{κ_{g_e}}` over `[0, h(s_final)]`. The initial point is first
/// projected onto `H⁻¹(e)`.
pub fn compare_reparametrized(
    model: &AlgebroidModel,
    metric: &MetricModel,
    potential: &Potential,
    e: EnergyLevel,
    z0: &PhasePoint,
    s_final: f64,
    step: f64,
) -> Result<ReparamComparison> {
    let m = model.base_dim();
    let start = sphere_projection(z0, metric, potential, e)?;
    let z = start.packed();
    let hamiltonian = MechanicalHamiltonian::new(m, metric.clone(), potential.clone());
    let kinetic_e = MechanicalHamiltonian::kinetic(m, jacobi_metric(metric, potential, e));
    let mech_field = HamiltonianField::new(model, &hamiltonian);
    let kin_field = HamiltonianField::new(model, &kinetic_e);
    let opts = IntegrateOptions::new(Method::rk4(step));

    let mechanical = integrate(&mech_field, &z, 0.0, s_final, &opts, &[Monitor::new("H", &hamiltonian)]);
    require_completed(&mechanical)?;
    let reparam = reparametrize(&mechanical, m, potential, e)?;
    let h_final = *reparam.h.last().expect("nonempty");
    let kinetic = integrate(&kin_field, &z, 0.0, h_final, &opts, &[Monitor::new("kappa_e", &kinetic_e)]);
    require_completed(&kinetic)?;

    let gaps = mechanical
        .states
        .iter()
        .zip(&reparam.h)
        .map(|(c, &h)| {
            let ce = hermite_at(&kin_field, &kinetic, h)?;
            Ok(c.iter().zip(&ce).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs())))
        })
        .collect::<Result<Vec<f64>>>()?;
    let sup_gap = gaps.iter().copied().fold(0.0, f64::max);
    Ok(ReparamComparison { initial: start, reparam, gaps, sup_gap, mechanical, kinetic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::StructureTensor;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn straight(times: &[f64], m: usize) -> Trajectory {
        Trajectory {
            times: times.to_vec(),
            states: times.iter().map(|t| vec![*t; m + 1]).collect(),
            monitors: vec![],
            exit: ExitReason::Completed,
        }
    }

    #[test]
    fn free_motion_at_half_energy_is_identity() {
        let c = straight(&[0.0, 0.1, 0.3, 0.6], 1);
        let r = reparametrize(&c, 1, &Potential::zero(), EnergyLevel(0.5)).unwrap();
        for (s, h) in r.s.iter().zip(&r.h) {
            assert_relative_eq!(s, h, epsilon = 1e-15);
        }
        assert!(r.strictly_increasing());
    }

    #[test]
    fn constant_potential_is_linear() {
        let c = straight(&[0.0, 0.25, 0.5, 1.0], 1);
        let r = reparametrize(&c, 1, &Potential::constant(0.3), EnergyLevel(1.0)).unwrap();
        for (s, h) in r.s.iter().zip(&r.h) {
            assert_relative_eq!(*h, 2.0 * 0.7 * s, epsilon = 1e-15);
        }
    }

    #[test]
    fn above_energy_is_an_error() {
        let c = straight(&[0.0, 1.0], 1);
        let r = reparametrize(&c, 1, &Potential::constant(2.0), EnergyLevel(1.0));
        assert!(matches!(r, Err(Error::EnergyDomain { .. })));
    }

    #[test]
    fn hermite_is_exact_for_cubics() {
        // ż = 3t² embedded autonomously as (t, x): ṫ = 1, ẋ = 3t²
        let field = |z: &[f64]| DVector::from_vec(vec![1.0, 3.0 * z[0] * z[0]]);
        let times = [0.0, 0.5, 1.0];
        let traj = Trajectory {
            times: times.to_vec(),
            states: times.iter().map(|t| vec![*t, t * t * t]).collect(),
            monitors: vec![],
            exit: ExitReason::Completed,
        };
        let z = hermite_at(&field, &traj, 0.8).unwrap();
        assert_relative_eq!(z[1], 0.512, epsilon = 1e-14);
        assert!(hermite_at(&field, &traj, 1.5).is_err());
    }

    #[test]
    fn free_particle_comparison_is_trivial() {
        let model = AlgebroidModel::constant(DMatrix::identity(2, 2), StructureTensor::zeros(2)).unwrap();
        let cmp = compare_reparametrized(
            &model,
            &MetricModel::identity(2),
            &Potential::zero(),
            EnergyLevel(0.5),
            &PhasePoint::new(vec![0.0, 0.0], vec![3.0, 4.0]),
            1.0,
            1e-2,
        )
        .unwrap();
        assert_relative_eq!(cmp.initial.y[0], 0.6, epsilon = 1e-15);
        assert!(cmp.sup_gap < 1e-12);
        assert_relative_eq!(*cmp.reparam.h.last().unwrap(), 1.0, epsilon = 1e-12);
    }
}
