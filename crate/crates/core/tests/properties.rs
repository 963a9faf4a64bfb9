use lpmech::algebroid::{hat, poisson_bracket, PhasePoint};
use lpmech::calculus::ScalarField;
use lpmech::dynamics::{
    integrate, sphere_projection, EnergyLevel, HamiltonianField, IntegrateOptions, Method, Monitor, Potential,
};
use lpmech::jacobi_reeb::{restricted_bracket, sphere_membership, JacobiPair};
use lpmech::models::{heavy_top, oscillator, so3_rigid_body};
use lpmech::verify::{random_section, Quadratic};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn coord() -> impl Strategy<Value = f64> {
    -2.0..2.0f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hat_is_fiberwise_linear(seed in any::<u64>(), q in prop::collection::vec(coord(), 3), y in prop::collection::vec(coord(), 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_section(3, 3, &mut rng);
        let z = PhasePoint::new(q.clone(), y.clone());
        let z2 = PhasePoint::new(q, y.iter().map(|v| 2.0 * v).collect());
        prop_assert!((hat(&x, &z2) - 2.0 * hat(&x, &z)).abs() < 1e-12);
    }

    #[test]
    fn bracket_is_antisymmetric(seed in any::<u64>(), y in prop::collection::vec(coord(), 3)) {
        let body = so3_rigid_body([1.0, 2.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, g) = (Quadratic::random(3, &mut rng), Quadratic::random(3, &mut rng));
        let fg = poisson_bracket(&f, &g, &body.model, &y).unwrap();
        let gf = poisson_bracket(&g, &f, &body.model, &y).unwrap();
        prop_assert!((fg + gf).abs() < 1e-12);
    }

    #[test]
    fn projection_lands_on_the_level_and_is_idempotent(theta in 0.0..3.0f64, phi in 0.0..6.2f64, y in prop::collection::vec(0.1..2.0f64, 3)) {
        let top = heavy_top([1.0, 2.0, 3.0], 1.0, [0.0, 0.0, 1.0]).unwrap();
        let q = vec![theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
        let p = sphere_projection(&PhasePoint::new(q, y), &top.metric, &top.potential, top.energy).unwrap();
        prop_assert!(sphere_membership(&p, &top.metric, &top.potential, top.energy).unwrap() < 1e-12);
        let again = sphere_projection(&p, &top.metric, &top.potential, top.energy).unwrap();
        for (a, b) in p.y.iter().zip(&again.y) {
            prop_assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn restricted_bracket_ways_agree(seed in any::<u64>(), z in prop::collection::vec(coord(), 4)) {
        let osc = oscillator();
        let pair = JacobiPair::kinetic(&osc.model, &osc.metric);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g1, g2) = (Quadratic::random(4, &mut rng), Quadratic::random(4, &mut rng));
        let (a, b) = restricted_bracket(&g1, &g2, &pair, &z).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn rigid_body_conserves_energy_and_casimir(y in prop::collection::vec(coord(), 3)) {
        let body = so3_rigid_body([1.0, 2.0, 3.0]).unwrap();
        let h = body.hamiltonian();
        let field = HamiltonianField::new(&body.model, &h);
        let c = &body.conserved[1];
        let traj = integrate(&field, &y, 0.0, 2.0, &IntegrateOptions::new(Method::rk4(1e-3)),
            &[Monitor::new("H", &h), Monitor::new("C", c.field.as_ref())]);
        let scale = 1.0 + h.value(&y).unwrap() + y.iter().map(|v| v * v).sum::<f64>();
        prop_assert!(traj.drift("H").unwrap() < 1e-9 * scale);
        prop_assert!(traj.drift("C").unwrap() < 1e-9 * scale);
    }

    #[test]
    fn zero_potential_membership_is_twice_energy_gap(y in prop::collection::vec(coord(), 3)) {
        let body = so3_rigid_body([1.0, 2.0, 3.0]).unwrap();
        let z = PhasePoint::new(vec![], y.clone());
        let r = sphere_membership(&z, &body.metric, &Potential::zero(), EnergyLevel(0.5)).unwrap();
        let h = body.hamiltonian().value(&y).unwrap();
        prop_assert!((r - 2.0 * (h - 0.5).abs()).abs() < 1e-12);
    }
}
