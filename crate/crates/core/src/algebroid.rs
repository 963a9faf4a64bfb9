//! Linear Poisson structures on the dual `A*` of a vector bundle `A → Q`.
//!
//! In bundle coordinates `(q^i, y_α)` the structure is fixed by the anchor
//! `ρ^i_α(q)` and the structure functions `C^γ_{αβ}(q)`:
//!
//! ```text
//! {q^i, q^j} = 0,   {q^i, y_α} = ρ^i_α,   {y_α, y_β} = −C^γ_{αβ} y_γ
//! ```

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::calculus::{gradient, FdStep, ScalarField};
use crate::error::{Error, Result};

/// Constraint band applied to input points on constrained bases (S²).
pub const DOMAIN_BAND: f64 = 1e-9;

/// `C^γ_{αβ}`, antisymmetric in `(α, β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureTensor {
    n: usize,
    data: Vec<f64>,
}

impl StructureTensor {
    pub fn zeros(n: usize) -> Self {
        StructureTensor { n, data: vec![0.0; n * n * n] }
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    fn idx(&self, gamma: usize, alpha: usize, beta: usize) -> usize {
        (gamma * self.n + alpha) * self.n + beta
    }

    pub fn get(&self, gamma: usize, alpha: usize, beta: usize) -> f64 {
        self.data[self.idx(gamma, alpha, beta)]
    }

    /// Sets `[[e_α, e_β]]` component `γ` to `value`, and `(β, α)` to `−value`.
    pub fn set_bracket(&mut self, alpha: usize, beta: usize, gamma: usize, value: f64) {
        let i = self.idx(gamma, alpha, beta);
        let j = self.idx(gamma, beta, alpha);
        self.data[i] = value;
        self.data[j] = -value;
    }

    /// Raw write of a single component, antisymmetry not enforced.
    pub fn set_raw(&mut self, gamma: usize, alpha: usize, beta: usize, value: f64) {
        let i = self.idx(gamma, alpha, beta);
        self.data[i] = value;
    }

    /// Structure constants of so(3) in the basis with `[e1,e2]=e3` cyclic.
    pub fn so3() -> Self {
        let mut c = StructureTensor::zeros(3);
        c.set_bracket(0, 1, 2, 1.0);
        c.set_bracket(1, 2, 0, 1.0);
        c.set_bracket(2, 0, 1, 1.0);
        c
    }

    /// `M_{αβ} = C^γ_{αβ} y_γ`.
    pub fn contract(&self, y: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |a, b| (0..n).map(|g| self.get(g, a, b) * y[g]).sum())
    }

    /// Largest `|C^γ_{αβ} + C^γ_{βα}|`.
    pub fn antisymmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0_f64;
        for g in 0..n {
            for a in 0..n {
                for b in 0..n {
                    worst = worst.max((self.get(g, a, b) + self.get(g, b, a)).abs());
                }
            }
        }
        worst
    }
}

pub type AnchorFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type StructureFn = Arc<dyn Fn(&[f64]) -> StructureTensor + Send + Sync>;
type ConstraintFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type ChartFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Where base points are valid: an open chart condition plus an optional
/// equality constraint `c(q) = 0` enforced within [`DOMAIN_BAND`].
#[derive(Clone, Default)]
pub struct Domain {
    chart: Option<(ChartFn, &'static str)>,
    constraint: Option<(ConstraintFn, &'static str)>,
}

impl Domain {
    pub fn everywhere() -> Self {
        Domain::default()
    }

    pub fn with_chart(mut self, f: impl Fn(&[f64]) -> bool + Send + Sync + 'static, what: &'static str) -> Self {
        self.chart = Some((Arc::new(f), what));
        self
    }

    pub fn with_constraint(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, what: &'static str) -> Self {
        self.constraint = Some((Arc::new(f), what));
        self
    }

    /// `|c(q)|`, zero when unconstrained.
    pub fn constraint_residual(&self, q: &[f64]) -> f64 {
        self.constraint.as_ref().map_or(0.0, |(c, _)| c(q).abs())
    }

    pub fn has_constraint(&self) -> bool {
        self.constraint.is_some()
    }

    /// Open chart condition only; used along trajectories where drift is monitored.
    pub fn check_chart(&self, q: &[f64]) -> Result<()> {
        match &self.chart {
            Some((f, what)) if !f(q) => Err(Error::Domain(format!("{what} violated at q = {q:?}"))),
            _ => Ok(()),
        }
    }

    pub fn check(&self, q: &[f64]) -> Result<()> {
        self.check_chart(q)?;
        if let Some((_, what)) = &self.constraint {
            let r = self.constraint_residual(q);
            if !(r < DOMAIN_BAND) {
                return Err(Error::Domain(format!("{what}: residual {r:e} at q = {q:?}")));
            }
        }
        Ok(())
    }
}

/// Linear Poisson data `(ρ, C)` over a base of dimension `m` with fibers of rank `n`.
#[derive(Clone)]
pub struct AlgebroidModel {
    base_dim: usize,
    fiber_dim: usize,
    anchor: AnchorFn,
    structure: StructureFn,
    domain: Domain,
}

impl fmt::Debug for AlgebroidModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AlgebroidModel")
            .field("base_dim", &self.base_dim)
            .field("fiber_dim", &self.fiber_dim)
            .finish_non_exhaustive()
    }
}

impl AlgebroidModel {
    pub fn new(
        base_dim: usize,
        fiber_dim: usize,
        anchor: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        structure: impl Fn(&[f64]) -> StructureTensor + Send + Sync + 'static,
        domain: Domain,
    ) -> Result<Self> {
        if fiber_dim == 0 {
            return Err(Error::Config("fiber dimension must be at least 1".into()));
        }
        Ok(AlgebroidModel { base_dim, fiber_dim, anchor: Arc::new(anchor), structure: Arc::new(structure), domain })
    }

    /// Constant anchor and structure tables over an unconstrained base.
    pub fn constant(anchor: DMatrix<f64>, structure: StructureTensor) -> Result<Self> {
        let (m, n) = anchor.shape();
        if structure.rank() != n {
            return Err(Error::Dimension { expected: n, got: structure.rank() });
        }
        Self::new(m, n, move |_| anchor.clone(), move |_| structure.clone(), Domain::everywhere())
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    /// Packed phase-space dimension `m + n`.
    pub fn dim(&self) -> usize {
        self.base_dim + self.fiber_dim
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// `ρ^i_α(q)` as an `m × n` matrix.
    pub fn anchor_at(&self, q: &[f64]) -> DMatrix<f64> {
        (self.anchor)(q)
    }

    pub fn structure_at(&self, q: &[f64]) -> StructureTensor {
        (self.structure)(q)
    }

    pub fn split<'a>(&self, z: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        z.split_at(self.base_dim)
    }

    pub(crate) fn check_len(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: z.len() });
        }
        Ok(())
    }

    /// Π at a packed point, checking only the open chart. Off-constraint
    /// evaluation is allowed here so integrators and difference stencils
    /// can step slightly off S².
    pub fn poisson_matrix(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(z)?;
        let (q, y) = self.split(z);
        self.domain.check_chart(q)?;
        let (m, n) = (self.base_dim, self.fiber_dim);
        let rho = self.anchor_at(q);
        let lie = self.structure_at(q).contract(y);
        let mut pi = DMatrix::zeros(m + n, m + n);
        for i in 0..m {
            for a in 0..n {
                pi[(i, m + a)] = rho[(i, a)];
                pi[(m + a, i)] = -rho[(i, a)];
            }
        }
        // upper triangle authoritative
        for a in 0..n {
            for b in a + 1..n {
                pi[(m + a, m + b)] = -lie[(a, b)];
                pi[(m + b, m + a)] = lie[(a, b)];
            }
        }
        Ok(pi)
    }
}

/// A point `(q, y)` of `A*`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub y: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, y: Vec<f64>) -> Self {
        PhasePoint { q, y }
    }

    pub fn from_packed(base_dim: usize, z: &[f64]) -> Self {
        let (q, y) = z.split_at(base_dim);
        PhasePoint { q: q.to_vec(), y: y.to_vec() }
    }

    pub fn packed(&self) -> Vec<f64> {
        let mut z = self.q.clone();
        z.extend_from_slice(&self.y);
        z
    }
}

/// Π at `z` with the full domain check (constraint band included).
pub fn assemble_poisson_matrix(model: &AlgebroidModel, z: &PhasePoint) -> Result<DMatrix<f64>> {
    if z.q.len() != model.base_dim() {
        return Err(Error::Dimension { expected: model.base_dim(), got: z.q.len() });
    }
    model.domain().check(&z.q)?;
    model.poisson_matrix(&z.packed())
}

/// `{F, G}(z) = ∇Fᵀ Π ∇G`.
pub fn poisson_bracket<F, G>(f: &F, g: &G, model: &AlgebroidModel, z: &[f64]) -> Result<f64>
where
    F: ScalarField + ?Sized,
    G: ScalarField + ?Sized,
{
    let pi = model.poisson_matrix(z)?;
    let h = FdStep::default();
    let df = gradient(f, z, h)?;
    let dg = gradient(g, z, h)?;
    Ok(df.dot(&(pi * dg)))
}

pub type SectionFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
pub type SectionPartialsFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A section `X = X^α(q) e_α` of `A`.
#[derive(Clone)]
pub struct Section {
    components: SectionFn,
    /// `∂_i X^α` as an `n × m` matrix.
    partials: Option<SectionPartialsFn>,
}

impl Section {
    pub fn new(components: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Section { components: Arc::new(components), partials: None }
    }

    pub fn with_partials(mut self, partials: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.partials = Some(Arc::new(partials));
        self
    }

    /// The constant frame section `e_α`.
    pub fn frame(base_dim: usize, fiber_dim: usize, alpha: usize) -> Self {
        Section::new(move |_| {
            let mut v = DVector::zeros(fiber_dim);
            v[alpha] = 1.0;
            v
        })
        .with_partials(move |_| DMatrix::zeros(fiber_dim, base_dim))
    }

    pub fn zero(base_dim: usize, fiber_dim: usize) -> Self {
        Section::new(move |_| DVector::zeros(fiber_dim)).with_partials(move |_| DMatrix::zeros(fiber_dim, base_dim))
    }

    pub fn at(&self, q: &[f64]) -> DVector<f64> {
        (self.components)(q)
    }

    /// `∂_i X^α`, exact when partials were supplied.
    pub fn jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        if let Some(p) = &self.partials {
            return p(q);
        }
        let n = self.at(q).len();
        let h = FdStep::default().at(q);
        let mut jac = DMatrix::zeros(n, q.len());
        for i in 0..q.len() {
            let mut plus = q.to_vec();
            let mut minus = q.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let col = (self.at(&plus) - self.at(&minus)) / (2.0 * h);
            jac.set_column(i, &col);
        }
        jac
    }
}

/// `X̂(q, y) = X^α(q) y_α`.
pub fn hat(x: &Section, z: &PhasePoint) -> f64 {
    x.at(&z.q).dot(&DVector::from_column_slice(&z.y))
}

/// The fiberwise linear function `X̂` as a scalar field with exact gradient.
pub struct HatField<'a> {
    section: &'a Section,
    base_dim: usize,
}

impl<'a> HatField<'a> {
    pub fn new(section: &'a Section, base_dim: usize) -> Self {
        HatField { section, base_dim }
    }
}

impl ScalarField for HatField<'_> {
    fn value(&self, z: &[f64]) -> Result<f64> {
        let (q, y) = z.split_at(self.base_dim);
        Ok(self.section.at(q).dot(&DVector::from_column_slice(y)))
    }

    fn gradient(&self, z: &[f64]) -> Option<Result<DVector<f64>>> {
        let (q, y) = z.split_at(self.base_dim);
        let x = self.section.at(q);
        let dq = self.section.jacobian(q).transpose() * DVector::from_column_slice(y);
        Some(Ok(DVector::from_iterator(z.len(), dq.iter().chain(x.iter()).copied())))
    }
}

/// `[[X,Y]]^γ = X^α Y^β C^γ_{αβ} + ρ(X)(Y^γ) − ρ(Y)(X^γ)`.
///
/// Sign fixed so that `{X̂, Ŷ} = −[[X,Y]]^` and `[e1, e2] = e3` on so(3).
pub fn algebroid_bracket(x: &Section, y: &Section, model: &AlgebroidModel, q: &[f64]) -> Result<DVector<f64>> {
    model.domain().check(q)?;
    let xv = x.at(q);
    let yv = y.at(q);
    let rho = model.anchor_at(q);
    let c = model.structure_at(q);
    let n = model.fiber_dim();
    let algebraic = DVector::from_fn(n, |g, _| {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += xv[a] * yv[b] * c.get(g, a, b);
            }
        }
        s
    });
    // ρ(X) as a base vector: ρ^i_α X^α
    let rho_x = &rho * &xv;
    let rho_y = &rho * &yv;
    Ok(algebraic + y.jacobian(q) * rho_x - x.jacobian(q) * rho_y)
}

/// `Δ = y_α ∂/∂y_α`, components `(0_m, y)`.
pub fn liouville_field(base_dim: usize, z: &[f64]) -> DVector<f64> {
    DVector::from_fn(z.len(), |a, _| if a < base_dim { 0.0 } else { z[a] })
}

/// `f∘τ` for a base function `f`.
pub struct BaseFunction<F> {
    f: F,
    base_dim: usize,
}

impl<F: Fn(&[f64]) -> f64 + Sync> BaseFunction<F> {
    pub fn new(f: F, base_dim: usize) -> Self {
        BaseFunction { f, base_dim }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarField for BaseFunction<F> {
    fn value(&self, z: &[f64]) -> Result<f64> {
        Ok((self.f)(&z[..self.base_dim]))
    }
}
