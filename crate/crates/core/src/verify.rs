//! Seeded residual sweeps over a [`SystemBundle`].
//!
//! Every check draws its sample points from a generator derived from
//! `(seed, check name, sample index)`, so results do not depend on thread
//! scheduling and repeated runs are bit-identical.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebroid::{algebroid_bracket, liouville_field, poisson_bracket, HatField, PhasePoint, Section};
use crate::calculus::{
    antisymmetry_defect, gradient, jacobi_residuals, lie_bracket_vectors, lie_derivative_bivector, FdStep, ScalarField,
    VectorField,
};
use crate::dynamics::{
    integrate, jacobi_metric, HamiltonianField, IntegrateOptions, MechanicalHamiltonian, Method, Monitor,
};
use crate::error::{Error, Result};
use crate::jacobi_reeb::{poissonization_check, restricted_bracket, JacobiPair};
use crate::models::{gaussian_curvature_oracle, printed_hyperbolic_curvature, SystemBundle};

/// Tolerance for identities evaluated from exact gradients.
pub const ALGEBRAIC_TOL: f64 = 1e-9;
/// Tolerance for identities that need finite-difference derivatives.
pub const FD_TOL: f64 = 1e-5;
pub const RESTRICTED_BRACKET_TOL: f64 = 1e-7;
pub const TANGENCY_TOL: f64 = 1e-7;
pub const POISSONIZATION_TOL: f64 = 1e-6;
pub const CURVATURE_TOL: f64 = 1e-4;
pub const DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub check: String,
    pub points: usize,
    pub max: f64,
    pub mean: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seed: u64,
}

impl ResidualReport {
    /// Summarizes per-point residuals; any non-finite residual fails the check.
    pub fn from_residuals(check: &str, residuals: &[f64], tolerance: f64, seed: u64) -> Self {
        let max = residuals.iter().copied().fold(0.0, |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
        let mean = if residuals.is_empty() { 0.0 } else { residuals.iter().sum::<f64>() / residuals.len() as f64 };
        ResidualReport {
            check: check.to_string(),
            points: residuals.len(),
            max,
            mean,
            tolerance,
            passed: max < tolerance,
            seed,
        }
    }
}

/// A computed value reported next to a closed-form expression without being
/// asserted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub name: String,
    pub point: Vec<f64>,
    pub computed: f64,
    pub closed_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub system: String,
    pub samples: usize,
    pub seed: u64,
    pub reports: Vec<ResidualReport>,
    pub comparisons: Vec<Comparison>,
}

impl VerifySummary {
    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }

    pub fn report(&self, check: &str) -> Option<&ResidualReport> {
        self.reports.iter().find(|r| r.check == check)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub samples: usize,
    pub fd_step: FdStep,
    pub seed: u64,
    /// Replaces every per-check tolerance when set.
    pub tolerance: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { samples: 100, fd_step: FdStep::default(), seed: 42, tolerance: None }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Generator for sample `k` of the check called `name`.
pub fn sample_rng(seed: u64, name: &str, k: usize) -> ChaCha8Rng {
    let tag = name.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(tag ^ splitmix(k as u64))))
}

/// Evaluates `f` on `samples` independent generators, in parallel when enabled.
/// Errors count as infinite residuals.
pub fn sweep<F>(name: &str, samples: usize, seed: u64, f: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let one = |k: usize| f(&mut sample_rng(seed, name, k)).unwrap_or(f64::INFINITY);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..samples).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..samples).map(one).collect()
    }
}

/// `c + b·z + ½ zᵀAz` with exact gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub constant: f64,
    pub linear: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Quadratic {
    /// Coefficients uniform in `[−1, 1]`, symmetric Hessian.
    pub fn random(dim: usize, rng: &mut dyn RngCore) -> Self {
        let mut a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        a = (&a + a.transpose()) * 0.5;
        Quadratic {
            constant: rng.gen_range(-1.0..1.0),
            linear: DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)),
            hessian: a,
        }
    }

    /// A random quadratic in the first `base_dim` of `dim` coordinates.
    pub fn random_base(base_dim: usize, dim: usize, rng: &mut dyn RngCore) -> Self {
        let b = Quadratic::random(base_dim, rng);
        let mut hessian = DMatrix::zeros(dim, dim);
        hessian.view_mut((0, 0), (base_dim, base_dim)).copy_from(&b.hessian);
        let mut linear = DVector::zeros(dim);
        linear.rows_mut(0, base_dim).copy_from(&b.linear);
        Quadratic { constant: b.constant, linear, hessian }
    }
}

impl ScalarField for Quadratic {
    fn value(&self, z: &[f64]) -> Result<f64> {
        let zv = DVector::from_column_slice(z);
        Ok(self.constant + self.linear.dot(&zv) + 0.5 * zv.dot(&(&self.hessian * &zv)))
    }

    fn gradient(&self, z: &[f64]) -> Option<Result<DVector<f64>>> {
        Some(Ok(&self.linear + &self.hessian * DVector::from_column_slice(z)))
    }
}

/// Affine section `X(q) = a + Bq` with random coefficients.
pub fn random_section(base_dim: usize, fiber_dim: usize, rng: &mut dyn RngCore) -> Section {
    let a = DVector::from_fn(fiber_dim, |_, _| rng.gen_range(-1.0..1.0));
    let b = DMatrix::from_fn(fiber_dim, base_dim, |_, _| rng.gen_range(-1.0..1.0));
    let b2 = b.clone();
    Section::new(move |q| &a + &b * DVector::from_column_slice(q)).with_partials(move |_| b2.clone())
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

struct Suite {
    opts: VerifyOptions,
    reports: Vec<ResidualReport>,
}

impl Suite {
    fn run<F>(&mut self, name: &str, tolerance: f64, samples: usize, f: F)
    where
        F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
    {
        let residuals = sweep(name, samples, self.opts.seed, f);
        let tol = self.opts.tolerance.unwrap_or(tolerance);
        self.reports.push(ResidualReport::from_residuals(name, &residuals, tol, self.opts.seed));
    }
}

/// Runs the full residual suite on `bundle`.
pub fn verify_system(bundle: &SystemBundle, opts: &VerifyOptions) -> Result<VerifySummary> {
    if opts.samples == 0 {
        return Err(Error::Config("verify needs at least one sample".into()));
    }
    if !(opts.fd_step.0 > 0.0) {
        return Err(Error::Config(format!("fd_step must be positive, got {}", opts.fd_step.0)));
    }
    let n_samples = opts.samples;
    let h = opts.fd_step;
    let b = bundle;
    let model = &b.model;
    let (m, n) = (b.base_dim(), b.fiber_dim());
    let dim = m + n;
    let kappa = b.kinetic();
    let ham = b.hamiltonian();
    let kinetic_pair = JacobiPair::kinetic(model, &b.metric);
    let energy_pair = JacobiPair::energy(model, &b.metric, &b.potential, b.energy);
    let ge = jacobi_metric(&b.metric, &b.potential, b.energy);
    let kappa_e = MechanicalHamiltonian::kinetic(m, ge.clone());
    let ge_pair = JacobiPair::kinetic(model, &ge);
    let mut s = Suite { opts: *opts, reports: Vec::new() };

    s.run("poisson_antisymmetry", ALGEBRAIC_TOL, n_samples, |rng| {
        Ok(antisymmetry_defect(&model.poisson_matrix(&b.sample_point(rng).packed())?))
    });
    s.run("linearity_law", FD_TOL, n_samples, |rng| {
        let z = b.sample_point(rng).packed();
        let delta = |w: &[f64]| liouville_field(m, w);
        let pi = |w: &[f64]| model.poisson_matrix(w);
        let l = lie_derivative_bivector(&delta, &PoissonField(&pi), &z, h)?;
        Ok((l + model.poisson_matrix(&z)?).amax())
    });
    s.run("hat_antihomomorphism", ALGEBRAIC_TOL, n_samples, |rng| {
        let (x, y) = (random_section(m, n, rng), random_section(m, n, rng));
        let z = b.sample_point(rng);
        let lhs = poisson_bracket(&HatField::new(&x, m), &HatField::new(&y, m), model, &z.packed())?;
        let br = algebroid_bracket(&x, &y, model, &z.q)?;
        Ok((lhs + br.dot(&DVector::from_column_slice(&z.y))).abs())
    });
    s.run("anchor_law", ALGEBRAIC_TOL, n_samples, |rng| {
        let x = random_section(m, n, rng);
        let f = Quadratic::random_base(m, dim, rng);
        let z = b.sample_point(rng);
        let packed = z.packed();
        let lhs = poisson_bracket(&f, &HatField::new(&x, m), model, &packed)?;
        let df = f.gradient(&packed).expect("exact")?;
        let rho_x = model.anchor_at(&z.q) * x.at(&z.q);
        Ok((lhs - df.rows(0, m).dot(&rho_x)).abs())
    });
    s.run("base_commutation", ALGEBRAIC_TOL, n_samples, |rng| {
        let (f, g) = (Quadratic::random_base(m, dim, rng), Quadratic::random_base(m, dim, rng));
        Ok(poisson_bracket(&f, &g, model, &b.sample_point(rng).packed())?.abs())
    });
    s.run("liouville_kappa", ALGEBRAIC_TOL, n_samples, |rng| {
        let z = b.sample_point(rng).packed();
        let dk = gradient(&kappa, &z, h)?;
        Ok((liouville_field(m, &z).dot(&dk) - 2.0 * kappa.value(&z)?).abs())
    });
    s.run("liouville_bracket", FD_TOL, n_samples, |rng| {
        let z = b.sample_point(rng).packed();
        let delta = |w: &[f64]| liouville_field(m, w);
        let xk = HamiltonianField::new(model, &kappa);
        Ok(inf_norm(&(lie_bracket_vectors(&xk, &delta, &z, h)? + xk.eval(&z)?)))
    });
    s.run("jacobi_schouten", FD_TOL, n_samples, |rng| {
        let z = b.sample_point(rng).packed();
        Ok(jacobi_residuals(&kinetic_pair.bivector(), &kinetic_pair.reeb(), &z, h)?.0)
    });
    s.run("jacobi_lie", FD_TOL, n_samples, |rng| {
        let z = b.sample_point(rng).packed();
        Ok(jacobi_residuals(&kinetic_pair.bivector(), &kinetic_pair.reeb(), &z, h)?.1)
    });
    s.run("energy_jacobi_schouten", FD_TOL, n_samples, |rng| {
        let z = b.sample_sphere_point(rng)?.point().packed();
        Ok(jacobi_residuals(&energy_pair.bivector(), &energy_pair.reeb(), &z, h)?.0)
    });
    s.run("energy_jacobi_lie", FD_TOL, n_samples, |rng| {
        let z = b.sample_sphere_point(rng)?.point().packed();
        Ok(jacobi_residuals(&energy_pair.bivector(), &energy_pair.reeb(), &z, h)?.1)
    });
    s.run("energy_pair_matches_jacobi_metric", ALGEBRAIC_TOL, n_samples, |rng| {
        let z = b.sample_sphere_point(rng)?.point().packed();
        let (l1, e1) = energy_pair.eval(&z)?;
        let (l2, e2) = ge_pair.eval(&z)?;
        Ok((l1 - l2).amax().max((e1 - e2).amax()))
    });
    s.run("tangency_bivector", TANGENCY_TOL, n_samples, |rng| {
        let z = b.sample_point(rng).packed();
        let (lambda, _) = kinetic_pair.eval(&z)?;
        let dk = gradient(&kappa, &z, h)?;
        let xk = model.poisson_matrix(&z)? * &dk;
        let k = kappa.value(&z)?;
        Ok(inf_norm(&(lambda.transpose() * &dk + xk * (1.0 - 2.0 * k))))
    });
    s.run("tangency_reeb", ALGEBRAIC_TOL, n_samples, |rng| {
        let z = b.sample_point(rng).packed();
        let (_, e) = kinetic_pair.eval(&z)?;
        Ok(gradient(&kappa, &z, h)?.dot(&e).abs())
    });
    s.run("scaling_law", ALGEBRAIC_TOL, n_samples, |rng| {
        let z = b.sample_sphere_point(rng)?.point().packed();
        let xh = HamiltonianField::new(model, &ham).eval(&z)?;
        let xk = HamiltonianField::new(model, &kappa_e).eval(&z)?;
        let f = b.energy.conformal_factor(&b.potential, &z[..m])?;
        Ok(inf_norm(&(xh - xk * f)))
    });
    s.run("energy_level_tangency", ALGEBRAIC_TOL, n_samples, |rng| {
        let z = b.sample_sphere_point(rng)?.point().packed();
        let xh = HamiltonianField::new(model, &ham).eval(&z)?;
        let xk = HamiltonianField::new(model, &kappa_e).eval(&z)?;
        let a = gradient(&ham, &z, h)?.dot(&xh).abs();
        Ok(a.max(gradient(&kappa_e, &z, h)?.dot(&xk).abs()))
    });
    s.run("liouville_pairing", ALGEBRAIC_TOL, n_samples, |rng| {
        let z = b.sample_sphere_point(rng)?.point().packed();
        let pairing = gradient(&ham, &z, h)?.dot(&liouville_field(m, &z));
        Ok((pairing - b.energy.conformal_factor(&b.potential, &z[..m])?).abs())
    });
    s.run("restricted_bracket", RESTRICTED_BRACKET_TOL, n_samples, |rng| {
        let (g1, g2) = (Quadratic::random(dim, rng), Quadratic::random(dim, rng));
        let z = b.sample_point(rng).packed();
        let (a, bb) = restricted_bracket(&g1, &g2, &kinetic_pair, &z)?;
        Ok((a - bb).abs())
    });
    s.run("restricted_bracket_energy", RESTRICTED_BRACKET_TOL, n_samples, |rng| {
        let (g1, g2) = (Quadratic::random(dim, rng), Quadratic::random(dim, rng));
        let z = b.sample_sphere_point(rng)?.point().packed();
        let (a, bb) = restricted_bracket(&g1, &g2, &energy_pair, &z)?;
        Ok((a - bb).abs())
    });
    s.run("poissonization", POISSONIZATION_TOL, n_samples, |rng| {
        let (f, g) = (Quadratic::random(dim, rng), Quadratic::random(dim, rng));
        let beta = b.sample_unit_point(rng)?;
        let t = rng.gen_range(-1.0..1.0);
        let (lhs, rhs) = poissonization_check(&f, &g, &beta, t, &kinetic_pair)?;
        Ok((lhs - rhs).abs())
    });

    let mut comparisons = Vec::new();
    if b.conformal_base {
        s.run("curvature_metric", CURVATURE_TOL, n_samples, |rng| {
            Ok((gaussian_curvature_oracle(&b.metric, &b.sample_base(rng))? + 1.0).abs())
        });
        if let Some(v) = b.potential.constant_value() {
            let expected = -1.0 / (2.0 * (b.energy.0 - v));
            s.run("curvature_jacobi_metric", CURVATURE_TOL, n_samples, |rng| {
                Ok((gaussian_curvature_oracle(&ge, &b.sample_base(rng))? - expected).abs())
            });
        }
        for q in [[0.0, 1.0], [0.5, 0.7], [-1.0, 2.0]] {
            let computed = gaussian_curvature_oracle(&ge, &q)?;
            comparisons.push(Comparison {
                name: "jacobi_metric_curvature".into(),
                point: q.to_vec(),
                computed,
                closed_form: printed_hyperbolic_curvature(&q, laplacian(&b.potential, &q)),
            });
        }
    }

    drift_checks(&mut s.reports, b, opts);
    Ok(VerifySummary { system: b.name.clone(), samples: n_samples, seed: opts.seed, reports: s.reports, comparisons })
}

/// `Π` wrapped as a bivector field.
struct PoissonField<'a, P>(&'a P);

impl<P: Fn(&[f64]) -> Result<DMatrix<f64>> + Sync> crate::calculus::BivectorField for PoissonField<'_, P> {
    fn eval(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        (self.0)(z)
    }
}

fn laplacian(v: &crate::dynamics::Potential, q: &[f64]) -> f64 {
    let h = 1e-4;
    let mut lap = -2.0 * q.len() as f64 * v.at(q);
    for i in 0..q.len() {
        for s in [h, -h] {
            let mut p = q.to_vec();
            p[i] += s;
            lap += v.at(&p);
        }
    }
    lap / (h * h)
}

/// RK4 with step `1e−3` over `t ∈ [0, 10]` from the bundle's initial point;
/// one report per conserved quantity.
fn drift_checks(reports: &mut Vec<ResidualReport>, b: &SystemBundle, opts: &VerifyOptions) {
    let ham = b.hamiltonian();
    let field = HamiltonianField::new(&b.model, &ham);
    let monitors: Vec<Monitor> = b.conserved.iter().map(|c| Monitor::new(c.name.clone(), c.field.as_ref())).collect();
    let traj = integrate(&field, &b.initial.packed(), 0.0, 10.0, &IntegrateOptions::new(Method::rk4(1e-3)), &monitors);
    for c in &b.conserved {
        let drift = if traj.completed() { traj.drift(&c.name).unwrap_or(f64::INFINITY) } else { f64::INFINITY };
        let name = format!("drift_{}", c.name);
        reports.push(ResidualReport::from_residuals(&name, &[drift], opts.tolerance.unwrap_or(DRIFT_TOL), opts.seed));
    }
}

/// Jacobi residuals of the kinetic pair at `samples` seeded points, as used by
/// the negative control.
pub fn jacobi_residual_sweep(b: &SystemBundle, samples: usize, seed: u64, h: FdStep) -> (Vec<f64>, Vec<f64>) {
    let pair = JacobiPair::kinetic(&b.model, &b.metric);
    let both = |rng: &mut ChaCha8Rng| -> Result<(f64, f64)> {
        let z: PhasePoint = b.sample_point(rng);
        jacobi_residuals(&pair.bivector(), &pair.reeb(), &z.packed(), h)
    };
    let r1 = sweep("jacobi_schouten", samples, seed, |rng| Ok(both(rng)?.0));
    let r2 = sweep("jacobi_lie", samples, seed, |rng| Ok(both(rng)?.1));
    (r1, r2)
}
