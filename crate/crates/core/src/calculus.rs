//! Finite-difference calculus on phase space.
//!
//! Fields are evaluated on packed coordinates `z = (q, y)`. Gradients use an
//! analytic form when a field provides one and fall back to central
//! differences otherwise. The multivector operations cover exactly what the
//! Jacobi conditions need: the Schouten bracket of a bivector with itself,
//! the wedge of a bivector with a vector, and the Lie derivative of a
//! bivector along a vector field.
//!
//! Sign conventions:
//!
//! ```text
//! [Λ,Λ]^{abc} = 2 Σ_l (Λ^{la} ∂_l Λ^{bc} + Λ^{lb} ∂_l Λ^{ca} + Λ^{lc} ∂_l Λ^{ab})
//! (Λ∧E)^{abc} = Λ^{ab} E^c + Λ^{bc} E^a + Λ^{ca} E^b
//! (L_E Λ)^{ab} = E^l ∂_l Λ^{ab} − Λ^{lb} ∂_l E^a − Λ^{al} ∂_l E^b
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// Scalar function on phase space, optionally with an exact gradient.
pub trait ScalarField: Sync {
    fn value(&self, z: &[f64]) -> Result<f64>;

    /// Exact gradient, when the field knows it.
    fn gradient(&self, _z: &[f64]) -> Option<Result<DVector<f64>>> {
        None
    }
}

impl<F> ScalarField for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn value(&self, z: &[f64]) -> Result<f64> {
        Ok(self(z))
    }
}

pub trait VectorField: Sync {
    fn eval(&self, z: &[f64]) -> Result<DVector<f64>>;
}

impl<F> VectorField for F
where
    F: Fn(&[f64]) -> DVector<f64> + Sync,
{
    fn eval(&self, z: &[f64]) -> Result<DVector<f64>> {
        Ok(self(z))
    }
}

/// Bivector field, returned as an antisymmetric matrix of components.
pub trait BivectorField: Sync {
    fn eval(&self, z: &[f64]) -> Result<DMatrix<f64>>;
}

impl<F> BivectorField for F
where
    F: Fn(&[f64]) -> DMatrix<f64> + Sync,
{
    fn eval(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self(z))
    }
}

/// Base central-difference step; the step actually used at `z` is
/// `h · max(1, |z|∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdStep(pub f64);

impl Default for FdStep {
    fn default() -> Self {
        FdStep(1e-5)
    }
}

impl FdStep {
    pub fn at(&self, z: &[f64]) -> f64 {
        let scale = z.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        self.0 * scale
    }
}

fn shifted(z: &[f64], slot: usize, delta: f64) -> Vec<f64> {
    let mut w = z.to_vec();
    w[slot] += delta;
    w
}

/// Central-difference gradient, ignoring any exact gradient the field offers.
pub fn fd_gradient<F: ScalarField + ?Sized>(f: &F, z: &[f64], h: FdStep) -> Result<DVector<f64>> {
    let step = h.at(z);
    let mut grad = DVector::zeros(z.len());
    for a in 0..z.len() {
        let plus = f.value(&shifted(z, a, step))?;
        let minus = f.value(&shifted(z, a, -step))?;
        grad[a] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// Exact gradient if available, central differences otherwise.
pub fn gradient<F: ScalarField + ?Sized>(f: &F, z: &[f64], h: FdStep) -> Result<DVector<f64>> {
    match f.gradient(z) {
        Some(g) => g,
        None => fd_gradient(f, z, h),
    }
}

/// Jacobian `J[(a, l)] = ∂_l X^a` of a vector field.
pub fn fd_jacobian<X: VectorField + ?Sized>(x: &X, z: &[f64], h: FdStep) -> Result<DMatrix<f64>> {
    let step = h.at(z);
    let n = z.len();
    let mut jac = DMatrix::zeros(n, n);
    for l in 0..n {
        let plus = x.eval(&shifted(z, l, step))?;
        let minus = x.eval(&shifted(z, l, -step))?;
        let col = (plus - minus) / (2.0 * step);
        jac.set_column(l, &col);
    }
    Ok(jac)
}

/// Partials `∂_l Λ` for every coordinate slot `l`.
pub fn fd_bivector_partials<B: BivectorField + ?Sized>(lambda: &B, z: &[f64], h: FdStep) -> Result<Vec<DMatrix<f64>>> {
    let step = h.at(z);
    (0..z.len())
        .map(|l| {
            let plus = lambda.eval(&shifted(z, l, step))?;
            let minus = lambda.eval(&shifted(z, l, -step))?;
            Ok((plus - minus) / (2.0 * step))
        })
        .collect()
}

/// Totally antisymmetric 3-vector, stored on strictly increasing triples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrivectorValue {
    dim: usize,
    values: Vec<f64>,
}

impl TrivectorValue {
    pub fn zeros(dim: usize) -> Self {
        let count = if dim < 3 { 0 } else { dim * (dim - 1) * (dim - 2) / 6 };
        TrivectorValue { dim, values: vec![0.0; count] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Strictly increasing triples in storage order.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let n = self.dim;
        (0..n).flat_map(move |a| (a + 1..n).flat_map(move |b| (b + 1..n).map(move |c| (a, b, c))))
    }

    fn slot(&self, a: usize, b: usize, c: usize) -> usize {
        // Rank of (a, b, c), a < b < c, in lexicographic order.
        let n = self.dim;
        let before_a: usize = (0..a).map(|i| (n - i - 1) * (n - i - 2) / 2).sum();
        let before_b: usize = (a + 1..b).map(|j| n - j - 1).sum();
        before_a + before_b + (c - b - 1)
    }

    /// Component for arbitrary indices; repeated indices give zero.
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        let (mut idx, mut sign) = ([a, b, c], 1.0);
        // bubble sort, tracking parity
        for i in 0..2 {
            for j in 0..2 - i {
                if idx[j] > idx[j + 1] {
                    idx.swap(j, j + 1);
                    sign = -sign;
                }
            }
        }
        if idx[0] == idx[1] || idx[1] == idx[2] {
            return 0.0;
        }
        sign * self.values[self.slot(idx[0], idx[1], idx[2])]
    }

    fn set_sorted(&mut self, a: usize, b: usize, c: usize, v: f64) {
        let s = self.slot(a, b, c);
        self.values[s] = v;
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &TrivectorValue) -> TrivectorValue {
        assert_eq!(self.dim, other.dim);
        TrivectorValue { dim: self.dim, values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, s: f64) -> TrivectorValue {
        TrivectorValue { dim: self.dim, values: self.values.iter().map(|v| v * s).collect() }
    }
}

/// `[Λ,Λ]` at `z`, partials by central differences.
pub fn schouten_bivector_self<B: BivectorField + ?Sized>(lambda: &B, z: &[f64], h: FdStep) -> Result<TrivectorValue> {
    let at = lambda.eval(z)?;
    let partials = fd_bivector_partials(lambda, z, h)?;
    Ok(schouten_from_parts(&at, &partials))
}

/// `[Λ,Λ]` from a value and its coordinate partials.
pub fn schouten_from_parts(at: &DMatrix<f64>, partials: &[DMatrix<f64>]) -> TrivectorValue {
    let n = at.nrows();
    let mut out = TrivectorValue::zeros(n);
    let triples: Vec<_> = out.triples().collect();
    for (a, b, c) in triples {
        let mut sum = 0.0;
        for (l, d) in partials.iter().enumerate() {
            sum += at[(l, a)] * d[(b, c)] + at[(l, b)] * d[(c, a)] + at[(l, c)] * d[(a, b)];
        }
        out.set_sorted(a, b, c, 2.0 * sum);
    }
    out
}

pub fn wedge_bivector_vector(lambda: &DMatrix<f64>, e: &DVector<f64>) -> TrivectorValue {
    let n = lambda.nrows();
    let mut out = TrivectorValue::zeros(n);
    let triples: Vec<_> = out.triples().collect();
    for (a, b, c) in triples {
        let v = lambda[(a, b)] * e[c] + lambda[(b, c)] * e[a] + lambda[(c, a)] * e[b];
        out.set_sorted(a, b, c, v);
    }
    out
}

/// `(X∧Y)^{ab} = X^a Y^b − X^b Y^a`.
pub fn wedge_vectors(x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    x * y.transpose() - y * x.transpose()
}

pub fn lie_derivative_bivector<X, B>(e: &X, lambda: &B, z: &[f64], h: FdStep) -> Result<DMatrix<f64>>
where
    X: VectorField + ?Sized,
    B: BivectorField + ?Sized,
{
    let e_at = e.eval(z)?;
    let lambda_at = lambda.eval(z)?;
    let partials = fd_bivector_partials(lambda, z, h)?;
    let e_jac = fd_jacobian(e, z, h)?;
    Ok(lie_derivative_from_parts(&e_at, &e_jac, &lambda_at, &partials))
}

fn lie_derivative_from_parts(
    e: &DVector<f64>,
    e_jac: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    partials: &[DMatrix<f64>],
) -> DMatrix<f64> {
    let n = lambda.nrows();
    let mut transport = DMatrix::zeros(n, n);
    for (l, d) in partials.iter().enumerate() {
        transport += d * e[l];
    }
    // Λ^{lb} ∂_l E^a = (J Λ)^{ab};  Λ^{al} ∂_l E^b = (Λ Jᵀ)^{ab}
    transport - e_jac * lambda - lambda * e_jac.transpose()
}

/// Lie bracket `[X, Y]^a = X^l ∂_l Y^a − Y^l ∂_l X^a`.
pub fn lie_bracket_vectors<X, Y>(x: &X, y: &Y, z: &[f64], h: FdStep) -> Result<DVector<f64>>
where
    X: VectorField + ?Sized,
    Y: VectorField + ?Sized,
{
    let x_at = x.eval(z)?;
    let y_at = y.eval(z)?;
    Ok(fd_jacobian(y, z, h)? * x_at - fd_jacobian(x, z, h)? * y_at)
}

/// Max-norm defects of `[Λ,Λ] = 2Λ∧E` and `L_E Λ = 0` at `z`.
pub fn jacobi_residuals<B, X>(lambda: &B, e: &X, z: &[f64], h: FdStep) -> Result<(f64, f64)>
where
    B: BivectorField + ?Sized,
    X: VectorField + ?Sized,
{
    let lambda_at = lambda.eval(z)?;
    let e_at = e.eval(z)?;
    let partials = fd_bivector_partials(lambda, z, h)?;
    let e_jac = fd_jacobian(e, z, h)?;
    let bracket = schouten_from_parts(&lambda_at, &partials);
    let wedge = wedge_bivector_vector(&lambda_at, &e_at);
    let r1 = bracket.sub(&wedge.scale(2.0)).max_norm();
    let r2 = lie_derivative_from_parts(&e_at, &e_jac, &lambda_at, &partials).amax();
    Ok((r1, r2))
}

/// Largest `|M + Mᵀ|` entry.
pub fn antisymmetry_defect(m: &DMatrix<f64>) -> f64 {
    (m + m.transpose()).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn canonical(_z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
    }

    /// Lie–Poisson bivector of so(3)*: Π^{ab} = −ε_{abc} y_c.
    fn so3(z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, -z[2], z[1], z[2], 0.0, -z[0], -z[1], z[0], 0.0])
    }

    #[test]
    fn gradient_of_coordinate_is_unit() {
        let z = [0.3, -1.2, 4.0];
        let g = fd_gradient(&|z: &[f64]| z[1], &z, FdStep::default()).unwrap();
        assert_relative_eq!(g[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(g[1], 1.0, epsilon = 1e-10);
        assert_relative_eq!(g[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_of_bilinear() {
        let g = fd_gradient(&|z: &[f64]| z[0] * z[1], &[3.0, 5.0], FdStep::default()).unwrap();
        assert_relative_eq!(g[0], 5.0, epsilon = 1e-9);
        assert_relative_eq!(g[1], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn gradient_of_quadratic_kinetic() {
        let kappa = |z: &[f64]| 0.5 * (z[0] * z[0] + z[1] * z[1]);
        let g = fd_gradient(&kappa, &[1.0, 2.0], FdStep::default()).unwrap();
        assert_relative_eq!(g[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(g[1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn trivector_storage_is_antisymmetric() {
        let mut t = TrivectorValue::zeros(5);
        let triples: Vec<_> = t.triples().collect();
        assert_eq!(triples.len(), 10);
        for (k, &(a, b, c)) in triples.iter().enumerate() {
            t.set_sorted(a, b, c, k as f64 + 1.0);
        }
        for &(a, b, c) in &triples {
            let v = t.get(a, b, c);
            assert_eq!(t.get(b, c, a), v);
            assert_eq!(t.get(c, a, b), v);
            assert_eq!(t.get(b, a, c), -v);
            assert_eq!(t.get(a, c, b), -v);
            assert_eq!(t.get(c, b, a), -v);
        }
        assert_eq!(t.get(1, 1, 2), 0.0);
    }

    #[test]
    fn constant_bivector_has_zero_schouten() {
        let t = schouten_bivector_self(&canonical, &[0.4, 1.1], FdStep::default()).unwrap();
        assert_eq!(t.max_norm(), 0.0);
        let four = |_z: &[f64]| {
            let mut m = DMatrix::zeros(4, 4);
            m[(0, 2)] = 1.0;
            m[(2, 0)] = -1.0;
            m[(1, 3)] = 1.0;
            m[(3, 1)] = -1.0;
            m
        };
        let t = schouten_bivector_self(&four, &[0.1, 0.2, 0.3, 0.4], FdStep::default()).unwrap();
        assert_eq!(t.max_norm(), 0.0);
    }

    #[test]
    fn lie_poisson_so3_has_zero_schouten() {
        let t = schouten_bivector_self(&so3, &[0.3, -0.7, 1.9], FdStep::default()).unwrap();
        assert!(t.max_norm() < 1e-9, "{}", t.max_norm());
    }

    #[test]
    fn non_jacobi_bivector_is_detected() {
        // {z1,z2} = z2, {z2,z3} = 1 violates Jacobi: {z3,{z1,z2}} = -1.
        // Only ∂_2Π^{12} = 1 is nonzero, so [Π,Π]^{123} = 2 Π^{23} ∂_2Π^{12} = 2.
        let b = |z: &[f64]| {
            let mut m = DMatrix::zeros(3, 3);
            m[(0, 1)] = z[1];
            m[(1, 0)] = -z[1];
            m[(1, 2)] = 1.0;
            m[(2, 1)] = -1.0;
            m
        };
        let t = schouten_bivector_self(&b, &[0.5, 0.2, -0.3], FdStep::default()).unwrap();
        assert_relative_eq!(t.get(0, 1, 2), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn wedge_examples() {
        let mut l = DMatrix::zeros(3, 3);
        l[(0, 1)] = 1.0;
        l[(1, 0)] = -1.0;
        let e = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let w = wedge_bivector_vector(&l, &e);
        assert_eq!(w.get(0, 1, 2), 1.0);
        assert_eq!(wedge_bivector_vector(&l, &DVector::zeros(3)).max_norm(), 0.0);
        let two = wedge_bivector_vector(&canonical(&[0.0, 0.0]), &DVector::from_vec(vec![1.0, 2.0]));
        assert_eq!(two.triples().count(), 0);
        assert_eq!(two.max_norm(), 0.0);
    }

    #[test]
    fn lie_derivative_examples() {
        let z = [0.7, -0.2];
        let const_e = |_z: &[f64]| DVector::from_vec(vec![0.3, 0.4]);
        let l = lie_derivative_bivector(&const_e, &canonical, &z, FdStep::default()).unwrap();
        assert!(l.amax() < 1e-12);

        let scaling = |z: &[f64]| DVector::from_vec(vec![z[0], 0.0]);
        let l = lie_derivative_bivector(&scaling, &canonical, &z, FdStep::default()).unwrap();
        assert_relative_eq!(l[(0, 1)], -1.0, epsilon = 1e-9);
        assert_relative_eq!(l[(1, 0)], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn residuals_of_poisson_with_zero_reeb() {
        let zero = |_z: &[f64]| DVector::zeros(3);
        let (r1, r2) = jacobi_residuals(&so3, &zero, &[0.2, 0.5, -1.0], FdStep::default()).unwrap();
        assert!(r1 < 1e-9);
        assert!(r2 < 1e-9);
    }

    #[test]
    fn residuals_of_symplectic_with_constant_reeb() {
        // N = 2 has no triples, so [Λ,Λ] − 2Λ∧E vanishes trivially; lift to N = 4
        // where Λ∧E with constant E is nonzero.
        let four = |_z: &[f64]| {
            let mut m = DMatrix::zeros(4, 4);
            m[(0, 2)] = 1.0;
            m[(2, 0)] = -1.0;
            m[(1, 3)] = 1.0;
            m[(3, 1)] = -1.0;
            m
        };
        let e = |_z: &[f64]| DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        let z = [0.1, 0.2, 0.3, 0.4];
        let (r1, r2) = jacobi_residuals(&four, &e, &z, FdStep::default()).unwrap();
        let expected = wedge_bivector_vector(&four(&z), &e(&z)).scale(-2.0).max_norm();
        assert!(expected > 0.0);
        assert_relative_eq!(r1, expected, epsilon = 1e-12);
        assert!(r2 < 1e-12);
    }

    #[test]
    fn schouten_converges_quadratically() {
        let b = |z: &[f64]| {
            let mut m = DMatrix::zeros(3, 3);
            let v = z[0].sin() + z[1] * z[2];
            let w = (2.0 * z[2]).exp() - z[0] * z[1] * z[1];
            m[(0, 1)] = v;
            m[(1, 0)] = -v;
            m[(1, 2)] = w;
            m[(2, 1)] = -w;
            m[(0, 2)] = z[1];
            m[(2, 0)] = -z[1];
            m
        };
        let z = [0.9, -0.6, 0.8];
        let at = |h: f64| schouten_bivector_self(&b, &z, FdStep(h)).unwrap();
        let (s1, s2, s3) = (at(4e-2), at(2e-2), at(1e-2));
        // successive differences shrink by ~4 for a second-order stencil
        let errs = [s1.sub(&s2).max_norm(), s2.sub(&s3).max_norm(), 0.0];
        assert!(errs[0] > 0.0);
        assert!(errs[1] < errs[0] / 3.0 && errs[1] > errs[0] / 5.0, "{errs:?}");
    }
}
