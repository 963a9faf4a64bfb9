//! Kinetic and mechanical Hamiltonians on `A*`, their Hamiltonian vector
//! fields, the Jacobi metric and the energy sphere bundle.
//!
//! Hamiltonian vector fields use `X_F^a = Π^{ab} ∂_b F`, which reproduces
//! `q̇^i = ρ^i_α g^{αβ} y_β` for mechanical Hamiltonians.

mod integrate;
mod reparam;

pub use integrate::{integrate, ExitReason, IntegrateOptions, Method, Monitor, Trajectory};
pub use reparam::{compare_reparametrized, hermite_at, reparametrize, ReparamComparison, Reparametrization};

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::algebroid::{AlgebroidModel, PhasePoint};
use crate::calculus::{gradient, FdStep, ScalarField, VectorField};
use crate::error::{Error, Result};

type CometricFn = Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>;
type CometricPartialsFn = Arc<dyn Fn(&[f64]) -> Result<Vec<DMatrix<f64>>> + Send + Sync>;

/// Cometric coefficients `g^{αβ}(q)` on the fibers of `A*`.
#[derive(Clone)]
pub struct MetricModel {
    fiber_dim: usize,
    cometric: CometricFn,
    /// `∂g^{αβ}/∂q^i`, one matrix per base coordinate.
    partials: Option<CometricPartialsFn>,
}

impl fmt::Debug for MetricModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricModel")
            .field("fiber_dim", &self.fiber_dim)
            .field("exact_partials", &self.partials.is_some())
            .finish()
    }
}

impl MetricModel {
    pub fn new(fiber_dim: usize, cometric: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        MetricModel { fiber_dim, cometric: Arc::new(move |q| Ok(cometric(q))), partials: None }
    }

    pub fn with_partials(mut self, partials: impl Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static) -> Self {
        self.partials = Some(Arc::new(move |q| Ok(partials(q))));
        self
    }

    /// Constant cometric, checked for symmetry and positive-definiteness.
    pub fn constant(g: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() {
            return Err(Error::Config("cometric must be square".into()));
        }
        if (&g - g.transpose()).amax() > 1e-12 {
            return Err(Error::Config("cometric must be symmetric".into()));
        }
        if Cholesky::new(g.clone()).is_none() {
            return Err(Error::Config("cometric must be positive definite".into()));
        }
        let n = g.nrows();
        Ok(MetricModel::new(n, move |_| g.clone()).with_partials(move |q| vec![DMatrix::zeros(n, n); q.len()]))
    }

    pub fn identity(n: usize) -> Self {
        MetricModel::constant(DMatrix::identity(n, n)).expect("identity is positive definite")
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        MetricModel::constant(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn at(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        (self.cometric)(q)
    }

    /// `∂g^{αβ}/∂q^i`, exact when supplied, central differences otherwise.
    pub fn partials_at(&self, q: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        if let Some(p) = &self.partials {
            return p(q);
        }
        let h = FdStep::default().at(q);
        (0..q.len())
            .map(|i| {
                let mut plus = q.to_vec();
                let mut minus = q.to_vec();
                plus[i] += h;
                minus[i] -= h;
                Ok((self.at(&plus)? - self.at(&minus)?) / (2.0 * h))
            })
            .collect()
    }

    pub fn symmetry_defect(&self, q: &[f64]) -> Result<f64> {
        let g = self.at(q)?;
        Ok((&g - g.transpose()).amax())
    }

    /// Positive-definiteness at `q`, via Cholesky.
    pub fn is_positive_definite(&self, q: &[f64]) -> Result<bool> {
        Ok(Cholesky::new(self.at(q)?).is_some())
    }

    /// `‖y‖²_g = g^{αβ} y_α y_β`.
    pub fn norm_squared(&self, q: &[f64], y: &[f64]) -> Result<f64> {
        let y = DVector::from_column_slice(y);
        Ok(y.dot(&(self.at(q)? * &y)))
    }
}

type PotentialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type PotentialGradFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;

/// Potential energy `V(q)` on the base.
#[derive(Clone)]
pub struct Potential {
    value: PotentialFn,
    gradient: Option<PotentialGradFn>,
    constant: Option<f64>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential").field("constant", &self.constant).finish_non_exhaustive()
    }
}

impl Potential {
    pub fn new(value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Potential { value: Arc::new(value), gradient: None, constant: None }
    }

    pub fn with_gradient(mut self, gradient: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn constant(v: f64) -> Self {
        Potential {
            value: Arc::new(move |_| v),
            gradient: Some(Arc::new(|q| DVector::zeros(q.len()))),
            constant: Some(v),
        }
    }

    pub fn zero() -> Self {
        Potential::constant(0.0)
    }

    /// `Some(v)` when the potential is known to be the constant `v`.
    pub fn constant_value(&self) -> Option<f64> {
        self.constant
    }

    pub fn at(&self, q: &[f64]) -> f64 {
        (self.value)(q)
    }

    pub fn gradient_at(&self, q: &[f64]) -> DVector<f64> {
        if let Some(g) = &self.gradient {
            return g(q);
        }
        let h = FdStep::default().at(q);
        DVector::from_fn(q.len(), |i, _| {
            let mut plus = q.to_vec();
            let mut minus = q.to_vec();
            plus[i] += h;
            minus[i] -= h;
            (self.at(&plus) - self.at(&minus)) / (2.0 * h)
        })
    }
}

/// A fixed energy value `e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLevel(pub f64);

impl EnergyLevel {
    /// `2(e − V(q))`, or an error when `q ∉ U_e`.
    pub fn conformal_factor(&self, potential: &Potential, q: &[f64]) -> Result<f64> {
        let v = potential.at(q);
        if v < self.0 {
            Ok(2.0 * (self.0 - v))
        } else {
            Err(Error::EnergyDomain { potential: v, energy: self.0 })
        }
    }
}

/// `H = ½ g^{αβ}(q) y_α y_β + V(q)` with exact gradient.
#[derive(Clone, Debug)]
pub struct MechanicalHamiltonian {
    base_dim: usize,
    metric: MetricModel,
    potential: Potential,
}

impl MechanicalHamiltonian {
    pub fn new(base_dim: usize, metric: MetricModel, potential: Potential) -> Self {
        MechanicalHamiltonian { base_dim, metric, potential }
    }

    /// Kinetic energy alone (`V ≡ 0`).
    pub fn kinetic(base_dim: usize, metric: MetricModel) -> Self {
        Self::new(base_dim, metric, Potential::zero())
    }

    pub fn metric(&self) -> &MetricModel {
        &self.metric
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }
}

impl ScalarField for MechanicalHamiltonian {
    fn value(&self, z: &[f64]) -> Result<f64> {
        let (q, y) = z.split_at(self.base_dim);
        Ok(0.5 * self.metric.norm_squared(q, y)? + self.potential.at(q))
    }

    fn gradient(&self, z: &[f64]) -> Option<Result<DVector<f64>>> {
        let (q, y) = z.split_at(self.base_dim);
        let grad = || -> Result<DVector<f64>> {
            let yv = DVector::from_column_slice(y);
            let dy = self.metric.at(q)? * &yv;
            let partials = self.metric.partials_at(q)?;
            let dv = self.potential.gradient_at(q);
            let mut out = DVector::zeros(z.len());
            for i in 0..self.base_dim {
                out[i] = 0.5 * yv.dot(&(&partials[i] * &yv)) + dv[i];
            }
            out.rows_mut(self.base_dim, y.len()).copy_from(&dy);
            Ok(out)
        };
        Some(grad())
    }
}

/// `κ(z) = ½ g^{αβ}(q) y_α y_β`.
pub fn kinetic_energy(metric: &MetricModel, z: &PhasePoint) -> Result<f64> {
    Ok(0.5 * metric.norm_squared(&z.q, &z.y)?)
}

pub fn mechanical_hamiltonian(metric: &MetricModel, potential: &Potential, z: &PhasePoint) -> Result<f64> {
    Ok(kinetic_energy(metric, z)? + potential.at(&z.q))
}

/// `X_F^a = Π^{ab} ∂_b F` at a packed point.
pub fn hamiltonian_vector_field<F: ScalarField + ?Sized>(
    f: &F,
    model: &AlgebroidModel,
    z: &[f64],
) -> Result<DVector<f64>> {
    let pi = model.poisson_matrix(z)?;
    Ok(pi * gradient(f, z, FdStep::default())?)
}

/// `X_F` as a vector field.
pub struct HamiltonianField<'a, F: ?Sized> {
    pub model: &'a AlgebroidModel,
    pub function: &'a F,
}

impl<'a, F: ScalarField + ?Sized> HamiltonianField<'a, F> {
    pub fn new(model: &'a AlgebroidModel, function: &'a F) -> Self {
        HamiltonianField { model, function }
    }
}

impl<F: ScalarField + ?Sized> VectorField for HamiltonianField<'_, F> {
    fn eval(&self, z: &[f64]) -> Result<DVector<f64>> {
        hamiltonian_vector_field(self.function, self.model, z)
    }
}

/// Cometric of the Jacobi metric `g_e = 2(e − V) g`, i.e. `g^{αβ} / (2(e − V))`.
/// Evaluating it outside `U_e` is an [`Error::EnergyDomain`].
pub fn jacobi_metric(metric: &MetricModel, potential: &Potential, e: EnergyLevel) -> MetricModel {
    let (g, v) = (metric.clone(), potential.clone());
    let (g2, v2) = (metric.clone(), potential.clone());
    MetricModel {
        fiber_dim: metric.fiber_dim,
        cometric: Arc::new(move |q| {
            let factor = e.conformal_factor(&v, q)?;
            Ok(g.at(q)? / factor)
        }),
        partials: Some(Arc::new(move |q| {
            let factor = e.conformal_factor(&v2, q)?;
            let base = g2.at(q)?;
            let dv = v2.gradient_at(q);
            // ∂(g/f) with f = 2(e−V): ∂g/f + 2 g ∂V / f²
            Ok(g2
                .partials_at(q)?
                .into_iter()
                .enumerate()
                .map(|(i, dg)| dg / factor + &base * (2.0 * dv[i] / (factor * factor)))
                .collect())
        })),
    }
}

/// Rescales `y` so that `‖y‖²_g = 2(e − V(q))`.
pub fn sphere_projection(
    z: &PhasePoint,
    metric: &MetricModel,
    potential: &Potential,
    e: EnergyLevel,
) -> Result<PhasePoint> {
    let target = e.conformal_factor(potential, &z.q)?;
    let norm2 = metric.norm_squared(&z.q, &z.y)?;
    if z.y.iter().all(|v| *v == 0.0) || norm2 <= 0.0 {
        return Err(Error::DegenerateFiber);
    }
    let s = (target / norm2).sqrt();
    Ok(PhasePoint::new(z.q.clone(), z.y.iter().map(|v| v * s).collect()))
}
