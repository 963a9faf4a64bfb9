use std::f64::consts::PI;

use lpmech::algebroid::{AlgebroidModel, PhasePoint, StructureTensor};
use lpmech::calculus::FdStep;
use lpmech::dynamics::{
    compare_reparametrized, integrate, HamiltonianField, IntegrateOptions, Method, Monitor, Potential,
};
use lpmech::models::{coupled_pendula, default_hinge, heavy_top, hyperbolic_plane, oscillator, oscillator_solution};
use lpmech::verify::jacobi_residual_sweep;
use nalgebra::DMatrix;

#[test]
fn oscillator_returns_after_one_period() {
    let osc = oscillator();
    let h = osc.hamiltonian();
    let traj = integrate(
        &HamiltonianField::new(&osc.model, &h),
        &osc.initial.packed(),
        0.0,
        2.0 * PI,
        &IntegrateOptions::new(Method::rk4(1e-3)),
        &[],
    );
    let end = traj.last_state();
    let start = osc.initial.packed();
    assert!(end.iter().zip(&start).all(|(a, b)| (a - b).abs() < 1e-7));
}

#[test]
fn oscillator_follows_the_sinusoid_under_rk45() {
    let osc = oscillator();
    let h = osc.hamiltonian();
    let opts = IntegrateOptions::new(Method::rk45()).sample_interval(0.5);
    let traj = integrate(&HamiltonianField::new(&osc.model, &h), &osc.initial.packed(), 0.0, 20.0, &opts, &[]);
    assert!(traj.completed());
    for (t, z) in traj.times.iter().zip(&traj.states) {
        let exact = oscillator_solution(&[1.0, 0.0], &[0.0, 1.0], *t);
        let gap = z.iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(gap < 1e-6, "t = {t}: {gap}");
    }
}

#[test]
fn vertical_geodesic_stays_on_the_axis() {
    let hyp = hyperbolic_plane(Potential::zero());
    let k = hyp.kinetic();
    let traj = integrate(
        &HamiltonianField::new(&hyp.model, &k),
        &[0.0, 1.0, 0.0, 1.0],
        0.0,
        2.0,
        &IntegrateOptions::new(Method::rk4(1e-3)),
        &[],
    );
    assert!(traj.states.iter().all(|z| z[0].abs() < 1e-14));
    // q2 = e^t along the unit-speed vertical geodesic
    assert!((traj.last_state()[1] - 2f64.exp()).abs() < 1e-9);
}

#[test]
fn pendula_keep_the_central_momentum() {
    let pend = coupled_pendula(default_hinge());
    let h = pend.hamiltonian();
    let y = &pend.conserved[1];
    let traj = integrate(
        &HamiltonianField::new(&pend.model, &h),
        &pend.initial.packed(),
        0.0,
        5.0,
        &IntegrateOptions::new(Method::rk4(1e-3)),
        &[Monitor::new("y", y.field.as_ref())],
    );
    assert_eq!(traj.drift("y").unwrap(), 0.0);
}

#[test]
fn free_pendula_rotate_uniformly() {
    let pend = coupled_pendula(Potential::zero());
    let h = pend.hamiltonian();
    let traj = integrate(
        &HamiltonianField::new(&pend.model, &h),
        &[0.0, 0.7, 0.2],
        0.0,
        3.0,
        &IntegrateOptions::new(Method::rk4(1e-2)),
        &[],
    );
    assert!((traj.last_state()[0] - 2.1).abs() < 1e-12);
}

#[test]
fn heavy_top_reparametrization() {
    let top = heavy_top([1.0, 2.0, 3.0], 1.0, [0.0, 0.0, 1.0]).unwrap();
    let cmp =
        compare_reparametrized(&top.model, &top.metric, &top.potential, top.energy, &top.initial, 1.0, 1e-3).unwrap();
    assert!(cmp.strictly_increasing());
    assert_eq!(cmp.reparam.h[0], 0.0);
    assert!(cmp.sup_gap < 1e-5, "{}", cmp.sup_gap);
}

#[test]
fn broken_structure_constants_fail_the_jacobi_check() {
    let mut c = StructureTensor::so3();
    c.set_bracket(0, 1, 0, 0.1);
    let body = lpmech::models::so3_rigid_body([1.0, 2.0, 3.0]).unwrap();
    let broken = body.clone().with_model(AlgebroidModel::constant(DMatrix::zeros(0, 3), c).unwrap()).unwrap();
    let (good, _) = jacobi_residual_sweep(&body, 20, 1, FdStep::default());
    let (bad, _) = jacobi_residual_sweep(&broken, 20, 1, FdStep::default());
    assert!(good.iter().all(|r| *r < 1e-5));
    assert!(bad.iter().cloned().fold(0.0, f64::max) > 1e-2);
}

#[test]
fn constant_potential_gives_linear_time_change() {
    let model = AlgebroidModel::constant(DMatrix::identity(1, 1), StructureTensor::zeros(1)).unwrap();
    let metric = lpmech::dynamics::MetricModel::identity(1);
    let cmp = compare_reparametrized(
        &model,
        &metric,
        &Potential::constant(0.25),
        lpmech::dynamics::EnergyLevel(1.0),
        &PhasePoint::new(vec![0.0], vec![1.0]),
        1.0,
        1e-2,
    )
    .unwrap();
    for (s, h) in cmp.reparam.s.iter().zip(&cmp.reparam.h) {
        assert!((h - 1.5 * s).abs() < 1e-12);
    }
}
