//! Jacobi structures built from a linear Poisson structure and a kinetic
//! energy, their restriction to sphere bundles, and the Poissonization map.
//!
//! For a bundle metric `g` the pair on `A*` is
//!
//! ```text
//! Λ = Π + Δ ∧ X_κ,    E = −X_κ
//! ```
//!
//! and on the energy level `H⁻¹(e)` the pair built from `X_H` rescaled by
//! `1 / (2(e − V))` coincides with the one for the Jacobi metric `g_e`.

use nalgebra::{DMatrix, DVector};

use crate::algebroid::{liouville_field, AlgebroidModel, PhasePoint};
use crate::calculus::{gradient, wedge_vectors, BivectorField, FdStep, ScalarField, VectorField};
use crate::dynamics::{jacobi_metric, EnergyLevel, MechanicalHamiltonian, MetricModel, Potential};
use crate::error::{Error, Result};

/// Membership band for points constructed on a sphere bundle.
pub const MEMBERSHIP_BAND: f64 = 1e-9;
/// Membership band tolerated along integrated trajectories.
pub const MONITOR_BAND: f64 = 1e-6;

#[derive(Clone, Debug)]
enum PairKind {
    Kinetic,
    Energy { potential: Potential, energy: EnergyLevel },
}

/// A bivector/vector pair `(Λ, E)` evaluable anywhere in the model's chart.
#[derive(Clone, Debug)]
pub struct JacobiPair {
    model: AlgebroidModel,
    metric: MetricModel,
    kind: PairKind,
}

impl JacobiPair {
    /// `Λ = Π + Δ∧X_κ`, `E = −X_κ` for the kinetic energy of `metric`.
    pub fn kinetic(model: &AlgebroidModel, metric: &MetricModel) -> Self {
        JacobiPair { model: model.clone(), metric: metric.clone(), kind: PairKind::Kinetic }
    }

    /// `Λ = Π + Δ∧X_H / (2(e−V))`, `E = −X_H / (2(e−V))`.
    pub fn energy(model: &AlgebroidModel, metric: &MetricModel, potential: &Potential, e: EnergyLevel) -> Self {
        JacobiPair {
            model: model.clone(),
            metric: metric.clone(),
            kind: PairKind::Energy { potential: potential.clone(), energy: e },
        }
    }

    pub fn model(&self) -> &AlgebroidModel {
        &self.model
    }

    /// The kinetic energy whose Hamiltonian field the pair is built from on its
    /// sphere bundle: `κ_g`, or `κ_{g_e}` for energy pairs.
    pub fn kinetic_function(&self) -> MechanicalHamiltonian {
        let m = self.model.base_dim();
        match &self.kind {
            PairKind::Kinetic => MechanicalHamiltonian::kinetic(m, self.metric.clone()),
            PairKind::Energy { potential, energy } => {
                MechanicalHamiltonian::kinetic(m, jacobi_metric(&self.metric, potential, *energy))
            }
        }
    }

    /// `(Λ(z), E(z))` at a packed point.
    pub fn eval(&self, z: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let m = self.model.base_dim();
        let pi = self.model.poisson_matrix(z)?;
        let delta = liouville_field(m, z);
        let h = FdStep::default();
        let x = match &self.kind {
            PairKind::Kinetic => {
                let kappa = MechanicalHamiltonian::kinetic(m, self.metric.clone());
                &pi * gradient(&kappa, z, h)?
            }
            PairKind::Energy { potential, energy } => {
                let factor = energy.conformal_factor(potential, &z[..m])?;
                let ham = MechanicalHamiltonian::new(m, self.metric.clone(), potential.clone());
                &pi * gradient(&ham, z, h)? / factor
            }
        };
        let lambda = pi + wedge_vectors(&delta, &x);
        Ok((lambda, -x))
    }

    pub fn bivector(&self) -> PairBivector<'_> {
        PairBivector(self)
    }

    pub fn reeb(&self) -> PairVector<'_> {
        PairVector(self)
    }
}

/// `Λ` of a [`JacobiPair`] as a bivector field.
pub struct PairBivector<'a>(&'a JacobiPair);

impl BivectorField for PairBivector<'_> {
    fn eval(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.0.eval(z)?.0)
    }
}

/// `E` of a [`JacobiPair`] as a vector field.
pub struct PairVector<'a>(&'a JacobiPair);

impl VectorField for PairVector<'_> {
    fn eval(&self, z: &[f64]) -> Result<DVector<f64>> {
        Ok(self.0.eval(z)?.1)
    }
}

/// `(Λ, E)` of the kinetic pair at `z`, with the full domain check.
pub fn jacobi_pair(
    model: &AlgebroidModel,
    metric: &MetricModel,
    z: &PhasePoint,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    model.domain().check(&z.q)?;
    JacobiPair::kinetic(model, metric).eval(&z.packed())
}

/// `(Λ, E)` of the energy pair at `z`, with the full domain check.
pub fn energy_jacobi_pair(
    model: &AlgebroidModel,
    metric: &MetricModel,
    potential: &Potential,
    e: EnergyLevel,
    z: &PhasePoint,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    model.domain().check(&z.q)?;
    JacobiPair::energy(model, metric, potential, e).eval(&z.packed())
}

/// `|‖y‖²_g − 2(e − V(q))|`, which equals `2|H(z) − e|`.
pub fn sphere_membership(z: &PhasePoint, metric: &MetricModel, potential: &Potential, e: EnergyLevel) -> Result<f64> {
    let norm2 = metric.norm_squared(&z.q, &z.y)?;
    Ok((norm2 - 2.0 * (e.0 - potential.at(&z.q))).abs())
}

/// A point of `H⁻¹(e)`, checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereBundlePoint {
    point: PhasePoint,
    residual: f64,
}

impl SphereBundlePoint {
    pub fn new(z: PhasePoint, metric: &MetricModel, potential: &Potential, e: EnergyLevel) -> Result<Self> {
        e.conformal_factor(potential, &z.q)?;
        let residual = sphere_membership(&z, metric, potential, e)?;
        if !(residual < MEMBERSHIP_BAND) {
            return Err(Error::Domain(format!("sphere membership residual {residual:e} exceeds {MEMBERSHIP_BAND:e}")));
        }
        Ok(SphereBundlePoint { point: z, residual })
    }

    /// Projects `z` radially onto `H⁻¹(e)` first.
    pub fn project(z: &PhasePoint, metric: &MetricModel, potential: &Potential, e: EnergyLevel) -> Result<Self> {
        let p = crate::dynamics::sphere_projection(z, metric, potential, e)?;
        Self::new(p, metric, potential, e)
    }

    pub fn point(&self) -> &PhasePoint {
        &self.point
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }
}

/// The restricted Jacobi bracket computed two ways.
///
/// Way A: `Λ(dG₁,dG₂) + G₁E(G₂) − G₂E(G₁)`.
/// Way B: `{G₁,G₂} + X_κ(G₁)(G₂ − ΔG₂) − X_κ(G₂)(G₁ − ΔG₁)` with
/// `X_κ(G) = {G, κ}`.
///
/// For kinetic pairs the two agree everywhere on `A*`; for energy pairs they
/// agree on the sphere bundle, where the pair matches the Jacobi-metric one.
pub fn restricted_bracket<G1, G2>(g1: &G1, g2: &G2, pair: &JacobiPair, z: &[f64]) -> Result<(f64, f64)>
where
    G1: ScalarField + ?Sized,
    G2: ScalarField + ?Sized,
{
    let h = FdStep::default();
    let (lambda, e) = pair.eval(z)?;
    let (v1, v2) = (g1.value(z)?, g2.value(z)?);
    let (d1, d2) = (gradient(g1, z, h)?, gradient(g2, z, h)?);
    let way_a = d1.dot(&(&lambda * &d2)) + v1 * e.dot(&d2) - v2 * e.dot(&d1);

    let pi = pair.model.poisson_matrix(z)?;
    let kappa = pair.kinetic_function();
    let dk = gradient(&kappa, z, h)?;
    let x_kappa = &pi * &dk;
    let delta = liouville_field(pair.model.base_dim(), z);
    let bracket = d1.dot(&(&pi * &d2));
    let way_b = bracket + x_kappa.dot(&d1) * (v2 - delta.dot(&d2)) - x_kappa.dot(&d2) * (v1 - delta.dot(&d1));
    Ok((way_a, way_b))
}

/// Both sides of the Poisson-map property of `Ψ(β, t) = e^t β`.
///
/// `lhs = {F, G}(e^t β)`; `rhs = e^{−t} (Λ − E∧∂_t)(d(F∘Ψ), d(G∘Ψ))` at
/// `(β, t)`, with the pulled-back functions differentiated in ambient
/// coordinates `(z, t)`.
pub fn poissonization_check<F, G>(
    f: &F,
    g: &G,
    beta: &SphereBundlePoint,
    t: f64,
    pair: &JacobiPair,
) -> Result<(f64, f64)>
where
    F: ScalarField + ?Sized,
    G: ScalarField + ?Sized,
{
    let m = pair.model.base_dim();
    let b = beta.point();
    if b.y.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateFiber);
    }
    let scale = t.exp();
    let scaled: Vec<f64> = b.q.iter().copied().chain(b.y.iter().map(|v| v * scale)).collect();
    let h = FdStep::default();
    let pi = pair.model.poisson_matrix(&scaled)?;
    let lhs = gradient(f, &scaled, h)?.dot(&(pi * gradient(g, &scaled, h)?));

    let (lambda, e) = pair.eval(&b.packed())?;
    let n = lambda.nrows();
    // (N+1)-dim bivector e^{−t}(Λ − E∧∂_t); (E∧∂_t)^{a,t} = E^a
    let mut ext = DMatrix::zeros(n + 1, n + 1);
    ext.view_mut((0, 0), (n, n)).copy_from(&lambda);
    for a in 0..n {
        ext[(a, n)] = -e[a];
        ext[(n, a)] = e[a];
    }
    ext *= (-t).exp();
    let lift = move |w: &[f64]| -> Vec<f64> {
        let s = w[n].exp();
        (0..n).map(|a| if a < m { w[a] } else { w[a] * s }).collect()
    };
    let fp = Pulled(|w: &[f64]| f.value(&lift(w)));
    let gp = Pulled(|w: &[f64]| g.value(&lift(w)));
    let mut at: Vec<f64> = b.packed();
    at.push(t);
    let rhs = crate::calculus::fd_gradient(&fp, &at, h)?.dot(&(ext * crate::calculus::fd_gradient(&gp, &at, h)?));
    Ok((lhs, rhs))
}

struct Pulled<P>(P);

impl<P: Fn(&[f64]) -> Result<f64> + Sync> ScalarField for Pulled<P> {
    fn value(&self, z: &[f64]) -> Result<f64> {
        (self.0)(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::StructureTensor;
    use crate::calculus::jacobi_residuals;
    use approx::assert_relative_eq;

    fn so3() -> AlgebroidModel {
        AlgebroidModel::constant(DMatrix::zeros(0, 3), StructureTensor::so3()).unwrap()
    }

    fn inertia() -> MetricModel {
        MetricModel::diagonal(&[1.0, 0.5, 1.0 / 3.0]).unwrap()
    }

    fn line() -> AlgebroidModel {
        AlgebroidModel::constant(DMatrix::from_element(1, 1, 1.0), StructureTensor::zeros(1)).unwrap()
    }

    #[test]
    fn zero_fiber_reduces_to_poisson() {
        let z = PhasePoint::new(vec![], vec![0.0; 3]);
        let (l, e) = jacobi_pair(&so3(), &inertia(), &z).unwrap();
        assert_eq!(l.amax(), 0.0);
        assert_eq!(e.amax(), 0.0);
    }

    #[test]
    fn rigid_body_reeb_field() {
        let (_, e) = jacobi_pair(&so3(), &inertia(), &PhasePoint::new(vec![], vec![0.0, 1.0, 1.0])).unwrap();
        assert_relative_eq!(e[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_eq!(e[1], 0.0);
        assert_eq!(e[2], 0.0);
    }

    #[test]
    fn rigid_body_bivector_matches_closed_form() {
        // Λ^{12} = −y3(1 + (1/I1 − 1/I3) y1²)·… from the expanded so(3)* expression
        let (i1, i2, i3) = (1.0, 2.0, 3.0);
        let y = [0.4, -0.9, 1.3];
        let (l, e) = jacobi_pair(&so3(), &inertia(), &PhasePoint::new(vec![], y.to_vec())).unwrap();
        let x = -e.clone();
        // Λ = Π + Δ∧X_κ with Π^{12} = −y3 etc.
        let pi12 = -y[2];
        assert_relative_eq!(l[(0, 1)], pi12 + y[0] * x[1] - y[1] * x[0], epsilon = 1e-14);
        // E components as printed for so(3)*
        assert_relative_eq!(e[0], y[1] * y[2] * (1.0 / i2 - 1.0 / i3), epsilon = 1e-14);
        assert_relative_eq!(e[1], y[0] * y[2] * (1.0 / i3 - 1.0 / i1), epsilon = 1e-14);
        assert_relative_eq!(e[2], y[0] * y[1] * (1.0 / i1 - 1.0 / i2), epsilon = 1e-14);
    }

    #[test]
    fn flat_line_pair() {
        let metric = MetricModel::identity(1);
        let (q, p) = (0.7, -1.3);
        let (l, e) = jacobi_pair(&line(), &metric, &PhasePoint::new(vec![q], vec![p])).unwrap();
        assert_relative_eq!(l[(0, 1)], 1.0 - p * p, epsilon = 1e-14);
        assert_relative_eq!(e[0], -p, epsilon = 1e-14);
        assert_eq!(e[1], 0.0);
    }

    #[test]
    fn energy_pair_reduces_to_kinetic_at_half() {
        let z = PhasePoint::new(vec![], vec![0.3, 0.2, -0.5]);
        let a = jacobi_pair(&so3(), &inertia(), &z).unwrap();
        let b = energy_jacobi_pair(&so3(), &inertia(), &Potential::zero(), EnergyLevel(0.5), &z).unwrap();
        assert!((a.0 - b.0).amax() < 1e-14);
        assert!((a.1 - b.1).amax() < 1e-14);
    }

    #[test]
    fn membership_examples() {
        let id = MetricModel::identity(2);
        let z = PhasePoint::new(vec![], vec![0.6, 0.8]);
        assert!(sphere_membership(&z, &id, &Potential::zero(), EnergyLevel(0.5)).unwrap() < 1e-15);
        let rb = PhasePoint::new(vec![], vec![1.0, 0.0, 0.0]);
        assert_eq!(sphere_membership(&rb, &inertia(), &Potential::zero(), EnergyLevel(0.5)).unwrap(), 0.0);
        let v = Potential::new(|q| 0.5 * (q[0] * q[0] + q[1] * q[1]));
        let osc = PhasePoint::new(vec![1.0, 0.0], vec![0.0, 1.0]);
        assert_eq!(sphere_membership(&osc, &id, &v, EnergyLevel(1.0)).unwrap(), 0.0);
        // equals 2|H − e|
        let off = PhasePoint::new(vec![0.2, 0.1], vec![0.3, 1.1]);
        let h = 0.5 * (0.09 + 1.21) + 0.5 * (0.04 + 0.01);
        assert_relative_eq!(
            sphere_membership(&off, &id, &v, EnergyLevel(1.0)).unwrap(),
            2.0 * (h - 1.0f64).abs(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn sphere_point_construction() {
        let id = MetricModel::identity(2);
        assert!(SphereBundlePoint::new(
            PhasePoint::new(vec![], vec![1.0, 0.0]),
            &id,
            &Potential::zero(),
            EnergyLevel(0.5)
        )
        .is_ok());
        assert!(SphereBundlePoint::new(
            PhasePoint::new(vec![], vec![1.1, 0.0]),
            &id,
            &Potential::zero(),
            EnergyLevel(0.5)
        )
        .is_err());
        let p = SphereBundlePoint::project(
            &PhasePoint::new(vec![], vec![3.0, 4.0]),
            &id,
            &Potential::zero(),
            EnergyLevel(0.5),
        )
        .unwrap();
        assert!(p.residual() < MEMBERSHIP_BAND);
    }

    #[test]
    fn rigid_body_pair_is_jacobi() {
        let pair = JacobiPair::kinetic(&so3(), &inertia());
        let (r1, r2) = jacobi_residuals(&pair.bivector(), &pair.reeb(), &[0.3, -1.2, 0.8], FdStep::default()).unwrap();
        assert!(r1 < 1e-5, "{r1}");
        assert!(r2 < 1e-5, "{r2}");
    }

    #[test]
    fn restricted_bracket_antisymmetric_and_consistent() {
        let pair = JacobiPair::kinetic(&so3(), &inertia());
        let g = |z: &[f64]| z[0] * z[1] + z[2].powi(3);
        let z = [0.5, -0.3, 0.9];
        let (a, b) = restricted_bracket(&g, &g, &pair, &z).unwrap();
        assert!(a.abs() < 1e-12 && b.abs() < 1e-12);

        let g2 = |z: &[f64]| z[1] - 0.5 * z[0] * z[2];
        let (a, b) = restricted_bracket(&g, &g2, &pair, &z).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} {b}");
    }

    #[test]
    fn restricted_bracket_with_kinetic_energy() {
        // G1 = κ: both ways reduce to (1 − κ){κ, G2}
        let pair = JacobiPair::kinetic(&so3(), &inertia());
        let kappa = pair.kinetic_function();
        let g2 = |z: &[f64]| z[0] + z[1] * z[2];
        let z = [0.5, -0.3, 0.9];
        let (a, b) = restricted_bracket(&kappa, &g2, &pair, &z).unwrap();
        let k = kappa.value(&z).unwrap();
        let kg = crate::algebroid::poisson_bracket(&kappa, &g2, &so3(), &z).unwrap();
        assert_relative_eq!(a, (1.0 - k) * kg, epsilon = 1e-9);
        assert_relative_eq!(b, (1.0 - k) * kg, epsilon = 1e-9);
    }

    #[test]
    fn poissonization_identity_at_zero_time() {
        let pair = JacobiPair::kinetic(&so3(), &inertia());
        let beta = SphereBundlePoint::project(
            &PhasePoint::new(vec![], vec![0.3, 0.5, -0.4]),
            &inertia(),
            &Potential::zero(),
            EnergyLevel(0.5),
        )
        .unwrap();
        let f = |z: &[f64]| z[0];
        let g = |z: &[f64]| z[1];
        let (lhs, rhs) = poissonization_check(&f, &g, &beta, 0.0, &pair).unwrap();
        assert_relative_eq!(lhs, -beta.point().y[2], epsilon = 1e-9);
        assert!((lhs - rhs).abs() < 1e-6);
        let (lhs, rhs) = poissonization_check(&f, &g, &beta, 0.7, &pair).unwrap();
        assert!((lhs - rhs).abs() < 1e-6, "{lhs} {rhs}");
    }
}
