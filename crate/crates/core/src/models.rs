//! Ready-to-run systems: the classical cotangent case (harmonic oscillator,
//! hyperbolic half-plane), the free rigid body, the heavy top and a pair of
//! coupled planar pendula, plus constant-table systems built from user data.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::algebroid::{AlgebroidModel, Domain, PhasePoint, StructureTensor};
use crate::calculus::ScalarField;
use crate::dynamics::{sphere_projection, EnergyLevel, MechanicalHamiltonian, MetricModel, Potential};
use crate::error::{Error, Result};
use crate::jacobi_reeb::SphereBundlePoint;

/// Names accepted by [`by_name`].
pub const REGISTERED: [&str; 6] =
    ["oscillator", "hyperbolic", "rigid-body", "heavy-top", "pendula", "cotangent-custom"];

type SharedField = Arc<dyn ScalarField + Send + Sync>;
type BaseSampler = Arc<dyn Fn(&mut dyn RngCore) -> Vec<f64> + Send + Sync>;

/// A named scalar expected to stay constant along trajectories of `X_H`.
#[derive(Clone)]
pub struct ConservedQuantity {
    pub name: String,
    pub field: SharedField,
}

impl fmt::Debug for ConservedQuantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConservedQuantity").field("name", &self.name).finish()
    }
}

/// Where a reference value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// Stated in the source literature for this system.
    Literature,
    /// Obtained by substitution or an independent computation.
    Derived,
    /// Immediate from the definitions.
    Elementary,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ReferenceValue {
    pub name: String,
    pub value: f64,
    pub source: Source,
}

impl ReferenceValue {
    fn new(name: &str, value: f64, source: Source) -> Self {
        ReferenceValue { name: name.to_string(), value, source }
    }
}

/// Everything needed to simulate and verify one mechanical system.
#[derive(Clone)]
pub struct SystemBundle {
    pub name: String,
    pub model: AlgebroidModel,
    pub metric: MetricModel,
    pub potential: Potential,
    pub energy: EnergyLevel,
    pub initial: PhasePoint,
    pub conserved: Vec<ConservedQuantity>,
    pub references: Vec<ReferenceValue>,
    /// The base has a conformally flat 2D metric, so the curvature oracle applies.
    pub conformal_base: bool,
    base_sampler: BaseSampler,
}

impl fmt::Debug for SystemBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemBundle")
            .field("name", &self.name)
            .field("model", &self.model)
            .field("energy", &self.energy)
            .field("initial", &self.initial)
            .field("conserved", &self.conserved)
            .finish_non_exhaustive()
    }
}

impl SystemBundle {
    pub fn base_dim(&self) -> usize {
        self.model.base_dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.model.fiber_dim()
    }

    pub fn hamiltonian(&self) -> MechanicalHamiltonian {
        MechanicalHamiltonian::new(self.base_dim(), self.metric.clone(), self.potential.clone())
    }

    pub fn kinetic(&self) -> MechanicalHamiltonian {
        MechanicalHamiltonian::kinetic(self.base_dim(), self.metric.clone())
    }

    /// Replaces the algebroid data, e.g. to run checks against a corrupted table.
    pub fn with_model(mut self, model: AlgebroidModel) -> Result<Self> {
        if model.base_dim() != self.base_dim() || model.fiber_dim() != self.fiber_dim() {
            return Err(Error::Config(format!(
                "replacement model has dimensions ({}, {}), expected ({}, {})",
                model.base_dim(),
                model.fiber_dim(),
                self.base_dim(),
                self.fiber_dim()
            )));
        }
        self.model = model;
        Ok(self)
    }

    pub fn with_energy(mut self, e: f64) -> Self {
        self.energy = EnergyLevel(e);
        self
    }

    pub fn with_initial(mut self, z: PhasePoint) -> Result<Self> {
        if z.q.len() != self.base_dim() {
            return Err(Error::Dimension { expected: self.base_dim(), got: z.q.len() });
        }
        if z.y.len() != self.fiber_dim() {
            return Err(Error::Dimension { expected: self.fiber_dim(), got: z.y.len() });
        }
        self.model.domain().check(&z.q)?;
        self.initial = z;
        Ok(self)
    }

    pub fn reference(&self, name: &str) -> Option<&ReferenceValue> {
        self.references.iter().find(|r| r.name == name)
    }

    /// A base point inside the domain.
    pub fn sample_base(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (self.base_sampler)(rng)
    }

    /// A point of `A*` with in-domain `q` and `‖y‖∞ ≤ 2`.
    pub fn sample_point(&self, rng: &mut dyn RngCore) -> PhasePoint {
        let q = self.sample_base(rng);
        let y = (0..self.fiber_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        PhasePoint::new(q, y)
    }

    /// A point of `H⁻¹(e)` with `2(e − V(q)) ≥ ½`, so that `1/(2(e − V))` and
    /// its derivatives stay moderate.
    pub fn sample_sphere_point(&self, rng: &mut dyn RngCore) -> Result<SphereBundlePoint> {
        for _ in 0..1000 {
            let z = self.sample_point(rng);
            let margin = self.energy.conformal_factor(&self.potential, &z.q);
            if !matches!(margin, Ok(f) if f >= 0.5) || z.y.iter().all(|v| v.abs() < 1e-3) {
                continue;
            }
            return SphereBundlePoint::project(&z, &self.metric, &self.potential, self.energy);
        }
        Err(Error::Config(format!("{}: could not sample a point with V(q) < e = {}", self.name, self.energy.0)))
    }

    /// A point on the kinetic level `κ_g = ½`.
    pub fn sample_unit_point(&self, rng: &mut dyn RngCore) -> Result<SphereBundlePoint> {
        let (v, e) = (Potential::zero(), EnergyLevel(0.5));
        loop {
            let z = self.sample_point(rng);
            if z.y.iter().any(|c| c.abs() > 1e-3) {
                return SphereBundlePoint::new(sphere_projection(&z, &self.metric, &v, e)?, &self.metric, &v, e);
            }
        }
    }
}

fn field(f: impl ScalarField + Send + 'static) -> SharedField {
    Arc::new(f)
}

/// Scalar field `z ↦ f(z)` with an exact gradient.
struct Smooth<F, G> {
    f: F,
    grad: G,
}

impl<F, G> ScalarField for Smooth<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> DVector<f64> + Sync,
{
    fn value(&self, z: &[f64]) -> Result<f64> {
        Ok((self.f)(z))
    }

    fn gradient(&self, z: &[f64]) -> Option<Result<DVector<f64>>> {
        Some(Ok((self.grad)(z)))
    }
}

fn hamiltonian_quantity(m: usize, metric: &MetricModel, potential: &Potential) -> ConservedQuantity {
    ConservedQuantity {
        name: "H".into(),
        field: field(MechanicalHamiltonian::new(m, metric.clone(), potential.clone())),
    }
}

fn uniform_box(lo: Vec<f64>, hi: Vec<f64>) -> BaseSampler {
    Arc::new(move |rng: &mut dyn RngCore| lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..*b)).collect())
}

fn project_initial(z: PhasePoint, metric: &MetricModel, potential: &Potential, e: EnergyLevel) -> Result<PhasePoint> {
    sphere_projection(&z, metric, potential, e)
}

/// `V(q) = ½ qᵀKq + b·q + c`.
pub fn quadratic_potential(stiffness: DMatrix<f64>, linear: DVector<f64>, offset: f64) -> Result<Potential> {
    let m = linear.len();
    if stiffness.shape() != (m, m) {
        return Err(Error::Config(format!("stiffness must be {m}×{m}, got {:?}", stiffness.shape())));
    }
    let k = (&stiffness + stiffness.transpose()) * 0.5;
    let k2 = k.clone();
    let b2 = linear.clone();
    Ok(Potential::new(move |q| {
        let qv = DVector::from_column_slice(q);
        0.5 * qv.dot(&(&k * &qv)) + linear.dot(&qv) + offset
    })
    .with_gradient(move |q| &k2 * DVector::from_column_slice(q) + &b2))
}

/// `T*ℝ^m` with `ρ = I`, `C = 0` and the given metric and potential.
///
/// The default initial point is `q = 0`, `y = e_1` projected onto `H⁻¹(e)`,
/// with `e = V(0) + ½`.
pub fn canonical_cotangent(m: usize, potential: Potential, metric: MetricModel) -> Result<SystemBundle> {
    if m == 0 {
        return Err(Error::Config("cotangent base dimension must be at least 1".into()));
    }
    if metric.fiber_dim() != m {
        return Err(Error::Dimension { expected: m, got: metric.fiber_dim() });
    }
    let model = AlgebroidModel::constant(DMatrix::identity(m, m), StructureTensor::zeros(m))?;
    let q0 = vec![0.0; m];
    let e = EnergyLevel(potential.at(&q0) + 0.5);
    let mut y0 = vec![0.0; m];
    y0[0] = 1.0;
    let initial = project_initial(PhasePoint::new(q0, y0), &metric, &potential, e)?;
    Ok(SystemBundle {
        name: "cotangent-custom".into(),
        conserved: vec![hamiltonian_quantity(m, &metric, &potential)],
        references: vec![],
        conformal_base: false,
        base_sampler: uniform_box(vec![-1.0; m], vec![1.0; m]),
        model,
        metric,
        potential,
        energy: e,
        initial,
    })
}

/// Isotropic harmonic oscillator on `T*ℝ²`: `H = ½(|p|² + |q|²)`, `e = 1`,
/// starting at `q = (1, 0)`, `p = (0, 1)`.
///
/// Solutions are `q_i = A_i sin t + B_i cos t`, and on `H⁻¹(e)` the amplitudes
/// satisfy `A₁² + A₂² + B₁² + B₂² = 2e`.
pub fn oscillator() -> SystemBundle {
    let potential = Potential::new(|q| 0.5 * (q[0] * q[0] + q[1] * q[1])).with_gradient(DVector::from_column_slice);
    let metric = MetricModel::identity(2);
    let mut bundle = canonical_cotangent(2, potential, metric).expect("valid oscillator data");
    bundle.name = "oscillator".into();
    bundle.energy = EnergyLevel(1.0);
    bundle.initial = PhasePoint::new(vec![1.0, 0.0], vec![0.0, 1.0]);
    bundle.conserved.push(ConservedQuantity {
        name: "L".into(),
        field: field(Smooth {
            f: |z: &[f64]| z[0] * z[3] - z[1] * z[2],
            grad: |z: &[f64]| DVector::from_vec(vec![z[3], -z[2], -z[1], z[0]]),
        }),
    });
    bundle.references = vec![
        ReferenceValue::new("H(initial)", 1.0, Source::Literature),
        ReferenceValue::new("period", 2.0 * PI, Source::Literature),
        ReferenceValue::new("amplitude_sum_squares", 2.0, Source::Derived),
    ];
    bundle
}

/// Exact oscillator solution `(q(t), p(t))` from `(q₀, p₀)`.
pub fn oscillator_solution(q0: &[f64], p0: &[f64], t: f64) -> Vec<f64> {
    let (s, c) = t.sin_cos();
    let q = q0.iter().zip(p0).map(|(q, p)| p * s + q * c);
    let p: Vec<f64> = q0.iter().zip(p0).map(|(q, p)| p * c - q * s).collect();
    q.chain(p).collect()
}

/// Upper half-plane `q₂ > 0` with `g = (dq₁² + dq₂²)/q₂²`, i.e. cometric
/// `q₂² I`. Defaults: `V ≡ 0`, `e = ½`, start at `q = (0, 1)`, `p = (0, 1)`.
pub fn hyperbolic_plane(potential: Potential) -> SystemBundle {
    let metric = MetricModel::new(2, |q| DMatrix::identity(2, 2) * (q[1] * q[1]))
        .with_partials(|q| vec![DMatrix::zeros(2, 2), DMatrix::identity(2, 2) * (2.0 * q[1])]);
    let model = AlgebroidModel::new(
        2,
        2,
        |_| DMatrix::identity(2, 2),
        |_| StructureTensor::zeros(2),
        Domain::everywhere().with_chart(|q| q[1] > 0.0, "upper half-plane q2 > 0"),
    )
    .expect("valid hyperbolic data");
    let e = EnergyLevel(potential.at(&[0.0, 1.0]) + 0.5);
    let initial = project_initial(PhasePoint::new(vec![0.0, 1.0], vec![0.0, 1.0]), &metric, &potential, e)
        .expect("initial point inside U_e");
    SystemBundle {
        name: "hyperbolic".into(),
        conserved: vec![hamiltonian_quantity(2, &metric, &potential)],
        references: vec![ReferenceValue::new("gaussian_curvature", -1.0, Source::Derived)],
        conformal_base: true,
        base_sampler: uniform_box(vec![-1.0, 0.5], vec![1.0, 2.0]),
        model,
        metric,
        potential,
        energy: e,
        initial,
    }
}

fn check_moments(inertia: [f64; 3]) -> Result<MetricModel> {
    if inertia.iter().any(|i| !(*i > 0.0) || !i.is_finite()) {
        return Err(Error::Config(format!("moments of inertia must be positive, got {inertia:?}")));
    }
    MetricModel::diagonal(&inertia.map(|i| 1.0 / i))
}

/// Free rigid body on `so(3)*`: `m = 0`, `[e₁, e₂] = e₃` cyclic, cometric
/// `diag(1/I)`, `V ≡ 0`, `e = ½`.
pub fn so3_rigid_body(inertia: [f64; 3]) -> Result<SystemBundle> {
    let metric = check_moments(inertia)?;
    let model = AlgebroidModel::constant(DMatrix::zeros(0, 3), StructureTensor::so3())?;
    let potential = Potential::zero();
    let e = EnergyLevel(0.5);
    let initial = project_initial(PhasePoint::new(vec![], vec![0.3, 0.4, 0.5]), &metric, &potential, e)?;
    let [i1, i2, i3] = inertia;
    Ok(SystemBundle {
        name: "rigid-body".into(),
        conserved: vec![
            hamiltonian_quantity(0, &metric, &potential),
            ConservedQuantity {
                name: "casimir_y2".into(),
                field: field(Smooth {
                    f: |z: &[f64]| z.iter().map(|v| v * v).sum(),
                    grad: |z: &[f64]| DVector::from_iterator(z.len(), z.iter().map(|v| 2.0 * v)),
                }),
            },
        ],
        references: vec![
            ReferenceValue::new("E_1(0,1,1)", 1.0 / i2 - 1.0 / i3, Source::Derived),
            ReferenceValue::new("kappa(1,1,1)", 0.5 * (1.0 / i1 + 1.0 / i2 + 1.0 / i3), Source::Derived),
        ],
        conformal_base: false,
        base_sampler: Arc::new(|_: &mut dyn RngCore| vec![]),
        model,
        metric,
        potential,
        energy: e,
        initial,
    })
}

/// Uniform point on the unit sphere by rejection from the cube.
fn sample_s2(rng: &mut dyn RngCore) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r2: f64 = v.iter().map(|c| c * c).sum();
        if r2 > 1e-2 && r2 <= 1.0 {
            let r = r2.sqrt();
            return v.into_iter().map(|c| c / r).collect();
        }
    }
}

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Heavy top on `S² × so(3)*` in ambient coordinates `q ∈ ℝ³`:
/// `ρ(e_α)(q) = q × e_α`, so(3) brackets, cometric `diag(1/I)` and
/// `V(q) = mgl (q·a)`. Defaults: `e = 2mgl`.
pub fn heavy_top(inertia: [f64; 3], mgl: f64, a: [f64; 3]) -> Result<SystemBundle> {
    let metric = check_moments(inertia)?;
    let norm_a = a.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (norm_a - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("gravity axis must be a unit vector, |a| = {norm_a}")));
    }
    if !mgl.is_finite() || mgl <= 0.0 {
        return Err(Error::Config(format!("mgl must be positive, got {mgl}")));
    }
    let anchor = |q: &[f64]| {
        let mut rho = DMatrix::zeros(3, 3);
        for alpha in 0..3 {
            let mut e = [0.0; 3];
            e[alpha] = 1.0;
            let col = cross(q, &e);
            for i in 0..3 {
                rho[(i, alpha)] = col[i];
            }
        }
        rho
    };
    let domain = Domain::everywhere()
        .with_chart(|q| q.iter().map(|c| c * c).sum::<f64>() > 0.25, "ambient chart |q| > 1/2")
        .with_constraint(|q| q.iter().map(|c| c * c).sum::<f64>() - 1.0, "unit sphere q·q = 1");
    let model = AlgebroidModel::new(3, 3, anchor, |_| StructureTensor::so3(), domain)?;
    let potential = Potential::new(move |q| mgl * (q[0] * a[0] + q[1] * a[1] + q[2] * a[2]))
        .with_gradient(move |_| DVector::from_iterator(3, a.iter().map(|c| mgl * c)));
    let e = EnergyLevel(2.0 * mgl);
    let th: f64 = 0.4;
    let initial =
        project_initial(PhasePoint::new(vec![0.0, th.sin(), th.cos()], vec![0.3, 0.4, 0.5]), &metric, &potential, e)?;
    Ok(SystemBundle {
        name: "heavy-top".into(),
        conserved: vec![
            hamiltonian_quantity(3, &metric, &potential),
            ConservedQuantity {
                name: "casimir_qq".into(),
                field: field(Smooth {
                    f: |z: &[f64]| z[..3].iter().map(|v| v * v).sum(),
                    grad: |z: &[f64]| DVector::from_fn(6, |i, _| if i < 3 { 2.0 * z[i] } else { 0.0 }),
                }),
            },
            ConservedQuantity {
                name: "casimir_qy".into(),
                field: field(Smooth {
                    f: |z: &[f64]| z[0] * z[3] + z[1] * z[4] + z[2] * z[5],
                    grad: |z: &[f64]| DVector::from_fn(6, |i, _| z[(i + 3) % 6]),
                }),
            },
        ],
        references: vec![
            ReferenceValue::new("V(a)", mgl, Source::Derived),
            ReferenceValue::new("Pi[q1,y2](0,0,1)", -1.0, Source::Derived),
            ReferenceValue::new("Pi[q2,y1](0,0,1)", 1.0, Source::Derived),
        ],
        conformal_base: false,
        base_sampler: Arc::new(sample_s2),
        model,
        metric,
        potential,
        energy: e,
        initial,
    })
}

/// Two planar pendula coupled through a hinge potential `φ(θ₁ − θ₂)`, reduced
/// to `(ψ, p_ψ, y)` with `{ψ, p_ψ} = 1` and `y` central.
/// `H = ½(p_ψ² + y²) + φ(√2 ψ)`. Defaults: `e = 1.5`.
pub fn coupled_pendula(hinge: Potential) -> SystemBundle {
    let s2 = 2f64.sqrt();
    let (h1, h2) = (hinge.clone(), hinge);
    let potential = Potential::new(move |q| h1.at(&[s2 * q[0]]))
        .with_gradient(move |q| DVector::from_element(1, s2 * h2.gradient_at(&[s2 * q[0]])[0]));
    let model = AlgebroidModel::constant(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), StructureTensor::zeros(2))
        .expect("valid pendula data");
    let metric = MetricModel::identity(2);
    let e = EnergyLevel(1.5);
    let initial = project_initial(PhasePoint::new(vec![0.3], vec![0.8, 0.5]), &metric, &potential, e)
        .expect("initial point inside U_e");
    SystemBundle {
        name: "pendula".into(),
        conserved: vec![
            hamiltonian_quantity(1, &metric, &potential),
            ConservedQuantity {
                name: "y".into(),
                field: field(Smooth { f: |z: &[f64]| z[2], grad: |_: &[f64]| DVector::from_vec(vec![0.0, 0.0, 1.0]) }),
            },
        ],
        references: vec![],
        conformal_base: false,
        base_sampler: uniform_box(vec![-PI], vec![PI]),
        model,
        metric,
        potential,
        energy: e,
        initial,
    }
}

/// `φ(θ) = 1 − cos θ`.
pub fn default_hinge() -> Potential {
    Potential::new(|t| 1.0 - t[0].cos()).with_gradient(|t| DVector::from_element(1, t[0].sin()))
}

/// Gaussian curvature of the 2D metric whose cometric is `c(q) I`, i.e.
/// `g = e^{2φ}(dq₁² + dq₂²)` with `φ = −½ ln c`, from `K = −e^{−2φ} Δφ`
/// using a five-point Laplacian with step `1e−4`.
pub fn gaussian_curvature_oracle(metric: &MetricModel, q: &[f64]) -> Result<f64> {
    if q.len() != 2 || metric.fiber_dim() != 2 {
        return Err(Error::Config("curvature oracle needs a 2-dimensional base".into()));
    }
    let conformal = |p: &[f64]| -> Result<f64> {
        let g = metric.at(p)?;
        let c = 0.5 * (g[(0, 0)] + g[(1, 1)]);
        let off = (g[(0, 0)] - g[(1, 1)]).abs().max(g[(0, 1)].abs()).max(g[(1, 0)].abs());
        if !(c > 0.0) || off > 1e-12 * c.abs().max(1.0) {
            return Err(Error::Config(format!("metric is not conformal to the flat metric at q = {p:?}")));
        }
        Ok(c)
    };
    let phi = |p: &[f64]| -> Result<f64> { Ok(-0.5 * conformal(p)?.ln()) };
    let h = 1e-4;
    let centre = phi(q)?;
    let mut lap = -4.0 * centre;
    for (dx, dy) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
        lap += phi(&[q[0] + dx, q[1] + dy])?;
    }
    lap /= h * h;
    Ok(-conformal(q)? * lap)
}

/// Closed-form curvature expression printed for the half-plane Jacobi metric,
/// `½(−q₂² + q₂⁴ ΔV)`; reported next to the oracle value.
pub fn printed_hyperbolic_curvature(q: &[f64], laplacian_v: f64) -> f64 {
    0.5 * (-q[1] * q[1] + q[1].powi(4) * laplacian_v)
}

/// Numeric parameters for [`by_name`], keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SystemParams(pub BTreeMap<String, Vec<f64>>);

impl SystemParams {
    pub fn insert(&mut self, key: &str, value: Vec<f64>) {
        self.0.insert(key.to_string(), value);
    }

    fn vector(&self, key: &str, len: usize) -> Result<Option<Vec<f64>>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) if v.len() == len => Ok(Some(v.clone())),
            Some(v) => Err(Error::Config(format!("parameter {key} needs {len} values, got {}", v.len()))),
        }
    }

    fn triple(&self, key: &str, default: [f64; 3]) -> Result<[f64; 3]> {
        Ok(self.vector(key, 3)?.map_or(default, |v| [v[0], v[1], v[2]]))
    }

    fn scalar(&self, key: &str) -> Result<Option<f64>> {
        Ok(self.vector(key, 1)?.map(|v| v[0]))
    }

    /// `k` values are a diagonal, `k²` a row-major matrix.
    fn square(&self, key: &str, k: usize) -> Result<Option<DMatrix<f64>>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) if v.len() == k => Ok(Some(DMatrix::from_diagonal(&DVector::from_column_slice(v)))),
            Some(v) if v.len() == k * k => Ok(Some(DMatrix::from_row_slice(k, k, v))),
            Some(v) => Err(Error::Config(format!("parameter {key} needs {k} or {} values, got {}", k * k, v.len()))),
        }
    }

    fn reject_unknown(&self, system: &str, allowed: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown parameter {k} for system {system}"))),
            None => Ok(()),
        }
    }
}

/// Builds a registered system. Recognized parameters:
///
/// - `rigid-body`: `I` (3 moments, default 1,2,3)
/// - `heavy-top`: `I`, `mgl` (default 1), `a` (unit axis, default 0,0,1)
/// - `pendula`: `hinge_stiffness` (`φ(θ) = k(1 − cos θ)`, default 1)
/// - `cotangent-custom`: `dim`, `cometric` and `stiffness` (diagonal or full),
///   `linear`, `offset`
pub fn by_name(name: &str, params: &SystemParams) -> Result<SystemBundle> {
    match name {
        "oscillator" => {
            params.reject_unknown(name, &[])?;
            Ok(oscillator())
        }
        "hyperbolic" => {
            params.reject_unknown(name, &[])?;
            Ok(hyperbolic_plane(Potential::zero()))
        }
        "rigid-body" => {
            params.reject_unknown(name, &["I"])?;
            so3_rigid_body(params.triple("I", [1.0, 2.0, 3.0])?)
        }
        "heavy-top" => {
            params.reject_unknown(name, &["I", "mgl", "a"])?;
            heavy_top(
                params.triple("I", [1.0, 2.0, 3.0])?,
                params.scalar("mgl")?.unwrap_or(1.0),
                params.triple("a", [0.0, 0.0, 1.0])?,
            )
        }
        "pendula" => {
            params.reject_unknown(name, &["hinge_stiffness"])?;
            let k = params.scalar("hinge_stiffness")?.unwrap_or(1.0);
            let hinge = Potential::new(move |t| k * (1.0 - t[0].cos()))
                .with_gradient(move |t| DVector::from_element(1, k * t[0].sin()));
            Ok(coupled_pendula(hinge))
        }
        "cotangent-custom" => {
            params.reject_unknown(name, &["dim", "cometric", "stiffness", "linear", "offset"])?;
            let m = match params.scalar("dim")? {
                Some(d) if d >= 1.0 && d.fract() == 0.0 => d as usize,
                Some(d) => return Err(Error::Config(format!("dim must be a positive integer, got {d}"))),
                None => return Err(Error::Config("cotangent-custom needs params.dim".into())),
            };
            let metric =
                MetricModel::constant(params.square("cometric", m)?.unwrap_or_else(|| DMatrix::identity(m, m)))?;
            let potential = quadratic_potential(
                params.square("stiffness", m)?.unwrap_or_else(|| DMatrix::zeros(m, m)),
                DVector::from_vec(params.vector("linear", m)?.unwrap_or_else(|| vec![0.0; m])),
                params.scalar("offset")?.unwrap_or(0.0),
            )?;
            canonical_cotangent(m, potential, metric)
        }
        other => Err(Error::Config(format!("unknown system {other:?}; expected one of {}", REGISTERED.join(", ")))),
    }
}

/// A system from constant tables: anchor `ρ` (`m × n`), structure constants
/// `C^γ_{αβ}`, a constant cometric and a quadratic potential.
pub fn constant_table_system(
    name: &str,
    anchor: DMatrix<f64>,
    structure: StructureTensor,
    cometric: DMatrix<f64>,
    potential: Potential,
    energy: f64,
    initial: PhasePoint,
) -> Result<SystemBundle> {
    let model = AlgebroidModel::constant(anchor, structure)?;
    let (m, n) = (model.base_dim(), model.fiber_dim());
    if cometric.shape() != (n, n) {
        return Err(Error::Config(format!("cometric must be {n}×{n}, got {:?}", cometric.shape())));
    }
    let metric = MetricModel::constant(cometric)?;
    if initial.q.len() != m || initial.y.len() != n {
        return Err(Error::Config(format!(
            "initial point has dimensions ({}, {}), expected ({m}, {n})",
            initial.q.len(),
            initial.y.len()
        )));
    }
    Ok(SystemBundle {
        name: name.to_string(),
        conserved: vec![hamiltonian_quantity(m, &metric, &potential)],
        references: vec![],
        conformal_base: false,
        base_sampler: uniform_box(vec![-1.0; m], vec![1.0; m]),
        model,
        metric,
        potential,
        energy: EnergyLevel(energy),
        initial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::assemble_poisson_matrix;
    use crate::jacobi_reeb::{jacobi_pair, sphere_membership};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn registry_builds_every_system() {
        let mut p = SystemParams::default();
        for name in REGISTERED {
            let params = if name == "cotangent-custom" {
                p.insert("dim", vec![2.0]);
                p.clone()
            } else {
                SystemParams::default()
            };
            let b = by_name(name, &params).unwrap();
            b.model.domain().check(&b.initial.q).unwrap();
        }
        assert!(by_name("nope", &SystemParams::default()).is_err());
    }

    #[test]
    fn default_points_lie_on_their_sphere_bundles() {
        for b in [
            oscillator(),
            hyperbolic_plane(Potential::zero()),
            so3_rigid_body([1.0, 2.0, 3.0]).unwrap(),
            heavy_top([1.0, 2.0, 3.0], 1.0, [0.0, 0.0, 1.0]).unwrap(),
            coupled_pendula(default_hinge()),
        ] {
            let r = sphere_membership(&b.initial, &b.metric, &b.potential, b.energy).unwrap();
            assert!(r < 1e-12, "{}: {r}", b.name);
        }
    }

    #[test]
    fn oscillator_values() {
        let b = oscillator();
        assert_eq!(b.hamiltonian().value(&b.initial.packed()).unwrap(), 1.0);
        assert!(b.energy.conformal_factor(&b.potential, &[0.99, 0.0]).is_ok());
        // U_e = {|q|² < 2e}
        assert!(b.energy.conformal_factor(&b.potential, &[1.0, 1.0001]).is_err());
        let z = oscillator_solution(&[1.0, 0.0], &[0.0, 1.0], PI / 2.0);
        assert_relative_eq!(z[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(z[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rigid_body_references() {
        let b = so3_rigid_body([1.0, 2.0, 3.0]).unwrap();
        let (_, e) = jacobi_pair(&b.model, &b.metric, &PhasePoint::new(vec![], vec![0.0, 1.0, 1.0])).unwrap();
        assert_relative_eq!(e[0], b.reference("E_1(0,1,1)").unwrap().value, epsilon = 1e-15);
        assert!(matches!(so3_rigid_body([1.0, 0.0, 3.0]), Err(Error::Config(_))));
        assert!(matches!(so3_rigid_body([1.0, -2.0, 3.0]), Err(Error::Config(_))));
    }

    #[test]
    fn isotropic_body_has_no_kinetic_flow() {
        let b = so3_rigid_body([2.0, 2.0, 2.0]).unwrap();
        let x = crate::dynamics::hamiltonian_vector_field(&b.kinetic(), &b.model, &[0.3, -1.0, 0.7]).unwrap();
        assert!(x.amax() < 1e-15);
    }

    #[test]
    fn heavy_top_values() {
        let b = heavy_top([1.0, 2.0, 3.0], 2.0, [0.0, 0.0, 1.0]).unwrap();
        let pi = assemble_poisson_matrix(&b.model, &PhasePoint::new(vec![0.0, 0.0, 1.0], vec![0.0; 3])).unwrap();
        assert_eq!(pi[(0, 4)], -1.0);
        assert_eq!(pi[(1, 3)], 1.0);
        let z = PhasePoint::new(vec![0.0, 0.0, 1.0], vec![0.0; 3]);
        assert_eq!(crate::dynamics::mechanical_hamiltonian(&b.metric, &b.potential, &z).unwrap(), 2.0);
        assert!(heavy_top([1.0, 2.0, 3.0], 1.0, [0.0, 0.0, 2.0]).is_err());
        assert!(assemble_poisson_matrix(&b.model, &PhasePoint::new(vec![0.0, 0.0, 1.1], vec![0.0; 3])).is_err());
    }

    #[test]
    fn pendula_kinetic_field_on_energy_level() {
        let b = coupled_pendula(default_hinge());
        let e = b.energy;
        let z = SphereBundlePoint::project(&PhasePoint::new(vec![0.4], vec![0.7, -0.2]), &b.metric, &b.potential, e)
            .unwrap();
        let p = z.point().packed();
        let ke = MechanicalHamiltonian::kinetic(1, crate::dynamics::jacobi_metric(&b.metric, &b.potential, e));
        let x = crate::dynamics::hamiltonian_vector_field(&ke, &b.model, &p).unwrap();
        let f = e.conformal_factor(&b.potential, &[p[0]]).unwrap();
        let dv = 2f64.sqrt() * (2f64.sqrt() * p[0]).sin();
        assert_relative_eq!(x[0], p[1] / f, epsilon = 1e-12);
        assert_relative_eq!(x[1], -dv / f, epsilon = 1e-12);
        assert_eq!(x[2], 0.0);
    }

    #[test]
    fn curvature_oracle() {
        let flat = MetricModel::identity(2);
        assert!(gaussian_curvature_oracle(&flat, &[0.2, 0.3]).unwrap().abs() < 1e-9);
        let b = hyperbolic_plane(Potential::zero());
        for q in [[0.0, 1.0], [0.5, 0.7], [-1.0, 2.0]] {
            assert_relative_eq!(gaussian_curvature_oracle(&b.metric, &q).unwrap(), -1.0, epsilon = 1e-6);
        }
        let skew = MetricModel::new(2, |_| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        assert!(matches!(gaussian_curvature_oracle(&skew, &[0.0, 1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn samplers_respect_domains() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = heavy_top([1.0, 2.0, 3.0], 1.0, [0.0, 0.0, 1.0]).unwrap();
        for _ in 0..50 {
            let z = b.sample_point(&mut rng);
            b.model.domain().check(&z.q).unwrap();
            assert!(z.y.iter().all(|v| v.abs() <= 2.0));
            let s = b.sample_sphere_point(&mut rng).unwrap();
            assert!(s.residual() < 1e-9);
        }
    }
}
