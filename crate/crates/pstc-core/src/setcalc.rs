//! Ellipsoidal set calculus.
//!
//! Sets are ellipsoids `E(m, M) = { m + s : sᵀ M⁻¹ s ≤ 1 }` with a possibly
//! degenerate (flat) shape matrix `M ⪰ 0`, and elliptical cylinders
//! `C(y, M, C) = { x : (Cx − y)ᵀ M⁻¹ (Cx − y) ≤ 1 }` which are unbounded
//! along the null space of `C`. All binary operations return outer
//! approximations: the true set is always contained in the result, which is
//! what makes the downstream state estimates guaranteed rather than
//! approximate.
//!
//! Shape matrices are validated on construction (symmetrized, small negative
//! eigenvalues clamped to zero) so the rest of the crate can assume PSD.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::{Error, Result};

/// Relative tolerance for symmetry and eigenvalue-sign checks on shapes.
const SHAPE_TOL: f64 = 1e-9;

/// Eigenvalues below `DEGENERATE_CUTOFF * lambda_max` are treated as exact
/// zeros when deciding membership in a flat ellipsoid.
const DEGENERATE_CUTOFF: f64 = 1e-10;

/// Symmetrizes, verifies near-symmetry and near-PSD-ness, and clamps small
/// negative eigenvalues to zero. Returns the cleaned matrix.
pub(crate) fn clamp_to_psd(context: &'static str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context,
            expected: "square matrix".into(),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let scale = f64::max(1.0, m.amax());
    let asym = (m - m.transpose()).amax();
    if asym > SHAPE_TOL * scale {
        return Err(Error::NotPsd { context, value: asym });
    }
    let sym = (m + m.transpose()) * 0.5;
    // Fast path: a successful Cholesky already proves PD.
    if nalgebra::Cholesky::new(sym.clone()).is_some() {
        return Ok(sym);
    }
    let eig = sym.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if lmin < -SHAPE_TOL * f64::max(1.0, lmax) {
        return Err(Error::NotPsd { context, value: lmin });
    }
    let clamped = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0)),
    );
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    Ok((&rebuilt + rebuilt.transpose()) * 0.5)
}

/// Square factor `S` with `M = S Sᵀ`, namely `U diag(√λᵢ)` from the
/// eigendecomposition with negative eigenvalues clamped to zero.
///
/// `S` is full-size even when `M` is rank deficient, so for any symmetric
/// `Q` the spectrum of `Sᵀ Q S` equals the spectrum of `M Q` including its
/// zeros — the property the worst-case trigger bounds rely on.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Cholesky-based inverse for symmetric positive definite matrices.
pub(crate) fn pd_inverse(context: &'static str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new((m + m.transpose()) * 0.5)
        .map(|c| c.inverse())
        .ok_or(Error::NotPositiveDefinite { context })
}

/// Largest eigenvalue of a symmetric matrix.
pub(crate) fn lambda_max_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Checks `dᵀ M⁻¹ d ≤ 1 + tol`, handling flat `M` by requiring `d` to be
/// (nearly) orthogonal to the null directions.
fn mahalanobis_within(d: &DVector<f64>, m: &DMatrix<f64>, tol: f64) -> bool {
    if let Some(chol) = nalgebra::Cholesky::new(m.clone()) {
        let v = chol.solve(d);
        return d.dot(&v) <= 1.0 + tol;
    }
    let eig = m.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = DEGENERATE_CUTOFF * lmax;
    let mut quad = 0.0;
    for i in 0..eig.eigenvalues.len() {
        let li = eig.eigenvalues[i];
        let proj = eig.eigenvectors.column(i).dot(d);
        if li <= cutoff {
            // Off-range component: must vanish up to scale-relative slack.
            if proj.abs() > tol.max(SHAPE_TOL) * (1.0 + d.norm()) {
                return false;
            }
        } else {
            quad += proj * proj / li;
        }
    }
    quad <= 1.0 + tol
}

/// Ellipsoid `E(m, M)` with center `m` and PSD shape matrix `M`.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "Ellipsoid::new",
                expected: "dimension >= 1".into(),
                got: "0".into(),
            });
        }
        if shape.nrows() != center.len() || shape.ncols() != center.len() {
            return Err(Error::DimensionMismatch {
                context: "Ellipsoid::new",
                expected: format!("{n}x{n} shape", n = center.len()),
                got: format!("{}x{}", shape.nrows(), shape.ncols()),
            });
        }
        let shape = clamp_to_psd("Ellipsoid::new", &shape)?;
        Ok(Self { center, shape })
    }

    /// Degenerate ellipsoid containing exactly one point.
    pub fn point(center: DVector<f64>) -> Result<Self> {
        let n = center.len();
        Self::new(center, DMatrix::zeros(n, n))
    }

    /// Origin-centered ellipsoid, the usual container for noise bounds.
    pub fn centered(shape: DMatrix<f64>) -> Result<Self> {
        Self::new(DVector::zeros(shape.nrows()), shape)
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Trace of the shape matrix — the size measure minimized by the
    /// calculus, proportional to the sum of squared semi-axes.
    pub fn size(&self) -> f64 {
        self.shape.trace()
    }

    /// Support function `h(l) = lᵀm + √(lᵀMl)`.
    pub fn support(&self, l: &DVector<f64>) -> f64 {
        let quad = (l.transpose() * &self.shape * l)[(0, 0)];
        l.dot(&self.center) + quad.max(0.0).sqrt()
    }

    /// Membership test with explicit slack `tol` on the quadratic form.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let d = x - &self.center;
        mahalanobis_within(&d, &self.shape, tol)
    }

    /// Uniform sample from the ellipsoid (its affine image of the unit
    /// ball); for flat shapes the sample lies on the corresponding slice.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.dim();
        let mut g = DVector::zeros(n);
        for i in 0..n {
            g[i] = standard_normal(rng);
        }
        let norm = g.norm();
        if norm > 0.0 {
            let radius: f64 = rng.random::<f64>().powf(1.0 / n as f64);
            g *= radius / norm;
        }
        &self.center + psd_sqrt(&self.shape) * g
    }
}

/// Standard normal via Box–Muller; avoids pulling a distributions crate for
/// one primitive.
fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Elliptical cylinder `C(y, M, C) = { x : (Cx − y)ᵀ M⁻¹ (Cx − y) ≤ 1 }`.
///
/// `C` is `m x n` with full row rank; the set is unbounded along `null(C)`,
/// which is exactly how a measurement constrains only part of the state.
#[derive(Debug, Clone)]
pub struct EllipticalCylinder {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    map: DMatrix<f64>,
}

impl EllipticalCylinder {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>, map: DMatrix<f64>) -> Result<Self> {
        let m = center.len();
        if m == 0 || map.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                context: "EllipticalCylinder::new",
                expected: "dimensions >= 1".into(),
                got: format!("{}x{}", m, map.ncols()),
            });
        }
        if shape.nrows() != m || shape.ncols() != m || map.nrows() != m {
            return Err(Error::DimensionMismatch {
                context: "EllipticalCylinder::new",
                expected: format!("{m}x{m} shape and {m}xn map"),
                got: format!(
                    "{}x{} shape, {}x{} map",
                    shape.nrows(),
                    shape.ncols(),
                    map.nrows(),
                    map.ncols()
                ),
            });
        }
        let shape = clamp_to_psd("EllipticalCylinder::new", &shape)?;
        let rank = map.clone().svd(false, false).rank(1e-12 * f64::max(1.0, map.amax()));
        if rank < m {
            return Err(Error::RankDeficient {
                context: "EllipticalCylinder::new",
                required: m,
                got: rank,
            });
        }
        Ok(Self { center, shape, map })
    }

    /// Cylinder viewing a full-dimensional ellipsoid (identity map).
    pub fn from_centered_shape(shape: DMatrix<f64>) -> Result<Self> {
        let n = shape.nrows();
        Self::new(DVector::zeros(n), shape, DMatrix::identity(n, n))
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn map(&self) -> &DMatrix<f64> {
        &self.map
    }

    /// Ambient dimension (number of columns of the map).
    pub fn dim(&self) -> usize {
        self.map.ncols()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let d = &self.map * x - &self.center;
        mahalanobis_within(&d, &self.shape, tol)
    }
}

/// Image of an ellipsoid under `x ↦ A x + b` — exact, not an approximation.
pub fn affine_map(a: &DMatrix<f64>, e: &Ellipsoid, b: &DVector<f64>) -> Result<Ellipsoid> {
    if a.ncols() != e.dim() || b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            context: "affine_map",
            expected: format!("map with {} columns and offset of length {}", e.dim(), a.nrows()),
            got: format!("{}x{} map, offset {}", a.nrows(), a.ncols(), b.len()),
        });
    }
    let center = a * e.center() + b;
    let shape = a * e.shape() * a.transpose();
    Ellipsoid::new(center, shape)
}

/// Trace-minimal ellipsoidal cover of the Minkowski sum `E₁ ⊕ E₂`.
///
/// Uses the classic one-parameter family `M = (1 + 1/p) M₁ + (1 + p) M₂`
/// with `p = √(tr M₁ / tr M₂)`, which minimizes the trace of the cover. A
/// summand with zero trace is a point and contributes only its center.
pub fn minksum_outer(e1: &Ellipsoid, e2: &Ellipsoid) -> Result<Ellipsoid> {
    if e1.dim() != e2.dim() {
        return Err(Error::DimensionMismatch {
            context: "minksum_outer",
            expected: format!("{}", e1.dim()),
            got: format!("{}", e2.dim()),
        });
    }
    let center = e1.center() + e2.center();
    let (t1, t2) = (e1.size(), e2.size());
    let shape = if t1 <= 0.0 {
        e2.shape().clone()
    } else if t2 <= 0.0 {
        e1.shape().clone()
    } else {
        let p = (t1 / t2).sqrt();
        e1.shape() * (1.0 + 1.0 / p) + e2.shape() * (1.0 + p)
    };
    Ellipsoid::new(center, shape)
}

/// Parametric outer cover of `E₁ ∩ C(y, M₂, C)` for a fixed `λ ∈ [0, 1]`.
///
/// `λ = 1` returns `E₁` unchanged; interior values blend prior and
/// measurement. Fails with [`Error::EmptyIntersection`] when the scalar
/// tightening term certifies the intersection is empty.
pub fn fusion(e1: &Ellipsoid, cyl: &EllipticalCylinder, lambda: f64) -> Result<Ellipsoid> {
    let n = e1.dim();
    if cyl.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "fusion",
            expected: format!("{n}"),
            got: format!("{}", cyl.dim()),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidScenario(format!(
            "fusion weight must lie in [0, 1], got {lambda}"
        )));
    }
    if lambda == 1.0 {
        return Ok(e1.clone());
    }
    let m1_inv = pd_inverse("fusion: prior shape", e1.shape())?;
    let m2_inv = pd_inverse("fusion: cylinder shape", cyl.shape())?;
    let c = cyl.map();
    let z_mat = &m1_inv * lambda + c.transpose() * &m2_inv * c * (1.0 - lambda);
    let z_inv = pd_inverse("fusion: blended information matrix", &z_mat)?;
    let e = cyl.center() - c * e1.center();
    let inner = cyl.shape() * lambda + c * e1.shape() * c.transpose() * (1.0 - lambda);
    let inner_inv = pd_inverse("fusion: innovation covariance", &inner)?;
    let z = 1.0 - lambda * (1.0 - lambda) * (e.transpose() * inner_inv * &e)[(0, 0)];
    if z <= 0.0 {
        return Err(Error::EmptyIntersection { z });
    }
    let center = &z_inv * (&m1_inv * e1.center() * lambda + c.transpose() * &m2_inv * cyl.center() * (1.0 - lambda));
    Ellipsoid::new(center, z_inv * z)
}

/// Smallest λ probed by [`fusion_optimal`]; `λ = 0` itself is excluded
/// because the blended information matrix can be singular there.
const FUSION_LAMBDA_FLOOR: f64 = 1e-4;

/// Golden-section search resolution on λ.
const FUSION_LAMBDA_TOL: f64 = 1e-4;

/// Trace-minimizing fusion: searches λ by golden section and returns the
/// best cover together with the λ that produced it.
///
/// The λ = 1 endpoint (the unchanged prior) always competes, so the result
/// never has larger trace than the prior. Emptiness detected at any probed
/// λ propagates immediately — the caller decides how to fall back.
pub fn fusion_optimal(e1: &Ellipsoid, cyl: &EllipticalCylinder) -> Result<(Ellipsoid, f64)> {
    let eval = |lambda: f64| -> Result<(Ellipsoid, f64)> {
        let fused = fusion(e1, cyl, lambda)?;
        let tr = fused.size();
        Ok((fused, tr))
    };

    // Golden-section minimization of trace over [floor, 1].
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (FUSION_LAMBDA_FLOOR, 1.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = eval(x1)?.1;
    let mut f2 = eval(x2)?.1;
    while b - a > FUSION_LAMBDA_TOL {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = eval(x1)?.1;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = eval(x2)?.1;
        }
    }
    let interior = (a + b) / 2.0;

    // The endpoints guard against a one-sided minimum the bracket missed.
    let mut best: Option<(Ellipsoid, f64, f64)> = None;
    for lambda in [interior, FUSION_LAMBDA_FLOOR, 1.0] {
        let (fused, tr) = eval(lambda)?;
        if best.as_ref().map_or(true, |(_, _, t)| tr < *t) {
            best = Some((fused, lambda, tr));
        }
    }
    let (fused, lambda, _) = best.expect("candidate list is non-empty");
    Ok((fused, lambda))
}

/// Exact fused set for a noise-free measurement `C x = y` (flat cylinder).
///
/// Restricting `E(m₁, M₁)` to the affine subspace gives another ellipsoid:
/// center is the constrained minimizer of the prior quadratic, the shape is
/// the prior metric restricted to `null(C)` and shrunk by the slack left
/// after matching the measurement. When `C` is square the subspace is a
/// single point.
pub fn hyperplane_fusion(
    e1: &Ellipsoid,
    c: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<Ellipsoid> {
    let n = e1.dim();
    let m = c.nrows();
    if c.ncols() != n || y.len() != m || m == 0 || m > n {
        return Err(Error::DimensionMismatch {
            context: "hyperplane_fusion",
            expected: format!("mxn map with 1 <= m <= {n} and matching offset"),
            got: format!("{}x{} map, offset {}", c.nrows(), c.ncols(), y.len()),
        });
    }
    let w = c * e1.shape() * c.transpose();
    let w_inv = pd_inverse("hyperplane_fusion: measured prior", &w)?;
    let resid = y - c * e1.center();
    let phi = (resid.transpose() * &w_inv * &resid)[(0, 0)];
    if phi > 1.0 + SHAPE_TOL {
        return Err(Error::EmptyIntersection { z: 1.0 - phi });
    }
    let center = e1.center() + e1.shape() * c.transpose() * &w_inv * &resid;
    if m == n {
        return Ellipsoid::point(center);
    }
    // Orthonormal basis of null(C) from the eigenvectors of CᵀC.
    let gram = c.transpose() * c;
    let eig = gram.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = f64::max(1e-12, DEGENERATE_CUTOFF * lmax);
    let null_cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= cutoff).collect();
    if null_cols.len() != n - m {
        return Err(Error::RankDeficient {
            context: "hyperplane_fusion",
            required: m,
            got: n - null_cols.len(),
        });
    }
    let mut basis = DMatrix::zeros(n, n - m);
    for (j, &i) in null_cols.iter().enumerate() {
        basis.set_column(j, &eig.eigenvectors.column(i));
    }
    let m1_inv = pd_inverse("hyperplane_fusion: prior shape", e1.shape())?;
    let restricted = pd_inverse(
        "hyperplane_fusion: restricted metric",
        &(basis.transpose() * &m1_inv * &basis),
    )?;
    let shape = &basis * restricted * basis.transpose() * (1.0 - phi).max(0.0);
    Ellipsoid::new(center, shape)
}

/// Outer cover of the intersection of origin-centered full-dimensional
/// ellipsoids, folded smallest-first through [`fusion_optimal`].
///
/// All inputs contain the origin, so the intersection is never empty.
pub fn intersect_outer_centered(shapes: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = shapes.first().ok_or_else(|| {
        Error::InvalidScenario("intersection of an empty collection".into())
    })?;
    let n = first.nrows();
    let mut order: Vec<usize> = (0..shapes.len()).collect();
    order.sort_by(|&i, &j| {
        shapes[i]
            .trace()
            .partial_cmp(&shapes[j].trace())
            .expect("traces are finite")
    });
    let mut acc = Ellipsoid::centered(shapes[order[0]].clone())?;
    for &i in &order[1..] {
        if shapes[i].nrows() != n || shapes[i].ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "intersect_outer_centered",
                expected: format!("{n}x{n}"),
                got: format!("{}x{}", shapes[i].nrows(), shapes[i].ncols()),
            });
        }
        let cyl = EllipticalCylinder::from_centered_shape(shapes[i].clone())?;
        let (fused, _) = fusion_optimal(&acc, &cyl)?;
        acc = fused;
    }
    Ok(acc.shape().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vec(data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    fn mat(n: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, data)
    }

    #[test]
    fn support_of_unit_ball_is_norm() {
        let e = Ellipsoid::centered(DMatrix::identity(3, 3)).unwrap();
        let l = vec(&[3.0, 0.0, 4.0]);
        assert_relative_eq!(e.support(&l), 5.0, max_relative = 1e-12);
    }

    #[test]
    fn contains_respects_degenerate_directions() {
        // Flat ellipsoid: segment [-1, 1] x {0}.
        let e = Ellipsoid::centered(mat(2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(e.contains(&vec(&[0.5, 0.0]), 1e-9));
        assert!(e.contains(&vec(&[1.0, 0.0]), 1e-9));
        assert!(!e.contains(&vec(&[0.0, 0.1]), 1e-9));
        assert!(!e.contains(&vec(&[1.1, 0.0]), 1e-9));
    }

    #[test]
    fn constructor_rejects_indefinite_shape() {
        let err = Ellipsoid::centered(mat(2, &[1.0, 0.0, 0.0, -1.0])).unwrap_err();
        assert!(matches!(err, Error::NotPsd { .. }));
    }

    #[test]
    fn constructor_clamps_tiny_negative_eigenvalues() {
        let e = Ellipsoid::centered(mat(2, &[1.0, 0.0, 0.0, -1e-14])).unwrap();
        assert!(e.shape()[(1, 1)] >= 0.0);
    }

    #[test]
    fn minksum_of_balls_adds_radii() {
        // B(0, r1) + B(0, r2) = B(0, r1 + r2); the trace-optimal cover is
        // exact for concentric balls.
        let e1 = Ellipsoid::centered(mat(2, &[4.0, 0.0, 0.0, 4.0])).unwrap();
        let e2 = Ellipsoid::centered(mat(2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        let sum = minksum_outer(&e1, &e2).unwrap();
        assert_relative_eq!(sum.shape()[(0, 0)], 9.0, max_relative = 1e-12);
        assert_relative_eq!(sum.shape()[(1, 1)], 9.0, max_relative = 1e-12);
    }

    #[test]
    fn minksum_with_point_translates() {
        let e = Ellipsoid::centered(mat(2, &[2.0, 0.0, 0.0, 3.0])).unwrap();
        let p = Ellipsoid::point(vec(&[1.0, -1.0])).unwrap();
        let sum = minksum_outer(&e, &p).unwrap();
        assert_relative_eq!(sum.center()[0], 1.0);
        assert_relative_eq!(sum.center()[1], -1.0);
        assert_relative_eq!(sum.shape()[(0, 0)], 2.0, max_relative = 1e-12);
        assert_relative_eq!(sum.shape()[(1, 1)], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn fusion_at_one_is_identity() {
        let e = Ellipsoid::new(vec(&[1.0, 2.0]), mat(2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let cyl = EllipticalCylinder::from_centered_shape(mat(2, &[5.0, 0.0, 0.0, 5.0])).unwrap();
        let fused = fusion(&e, &cyl, 1.0).unwrap();
        assert_relative_eq!(fused.center(), e.center());
        assert_relative_eq!(fused.shape(), e.shape());
    }

    #[test]
    fn fusion_optimal_nested_balls_recovers_inner() {
        // E(0, I) ∩ E(0, 4I) = E(0, I) and the parametric family attains it.
        let e = Ellipsoid::centered(mat(2, &[4.0, 0.0, 0.0, 4.0])).unwrap();
        let cyl = EllipticalCylinder::from_centered_shape(DMatrix::identity(2, 2)).unwrap();
        let (fused, _) = fusion_optimal(&e, &cyl).unwrap();
        assert_relative_eq!(fused.shape()[(0, 0)], 1.0, epsilon = 1e-3);
        assert_relative_eq!(fused.shape()[(1, 1)], 1.0, epsilon = 1e-3);
        assert!(fused.size() <= e.size() + 1e-12);
    }

    #[test]
    fn fusion_detects_empty_intersection() {
        let e = Ellipsoid::centered(DMatrix::identity(1, 1)).unwrap();
        let cyl = EllipticalCylinder::new(
            vec(&[10.0]),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let err = fusion(&e, &cyl, 0.5).unwrap_err();
        assert!(matches!(err, Error::EmptyIntersection { .. }));
    }

    #[test]
    fn hyperplane_fusion_slices_unit_ball() {
        // Unit ball in R^2 cut by x0 = 0: the segment {0} x [-1, 1].
        let e = Ellipsoid::centered(DMatrix::identity(2, 2)).unwrap();
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let fused = hyperplane_fusion(&e, &c, &vec(&[0.0])).unwrap();
        assert_relative_eq!(fused.center()[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(fused.shape()[(1, 1)], 1.0, max_relative = 1e-9);
        assert_relative_eq!(fused.shape()[(0, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hyperplane_fusion_offset_slice_shrinks() {
        // Cut at x0 = 0.6: remaining extent is sqrt(1 - 0.36) = 0.8.
        let e = Ellipsoid::centered(DMatrix::identity(2, 2)).unwrap();
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let fused = hyperplane_fusion(&e, &c, &vec(&[0.6])).unwrap();
        assert_relative_eq!(fused.center()[0], 0.6, epsilon = 1e-12);
        assert_relative_eq!(fused.shape()[(1, 1)], 0.64, max_relative = 1e-9);
    }

    #[test]
    fn hyperplane_fusion_square_map_is_point() {
        let e = Ellipsoid::centered(mat(2, &[2.0, 0.0, 0.0, 2.0])).unwrap();
        let c = DMatrix::identity(2, 2);
        let fused = hyperplane_fusion(&e, &c, &vec(&[0.3, -0.4])).unwrap();
        assert_relative_eq!(fused.center()[0], 0.3, epsilon = 1e-12);
        assert_relative_eq!(fused.center()[1], -0.4, epsilon = 1e-12);
        assert_relative_eq!(fused.size(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hyperplane_fusion_rejects_far_measurement() {
        let e = Ellipsoid::centered(DMatrix::identity(2, 2)).unwrap();
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let err = hyperplane_fusion(&e, &c, &vec(&[2.0])).unwrap_err();
        assert!(matches!(err, Error::EmptyIntersection { .. }));
    }

    #[test]
    fn intersect_outer_centered_nested_returns_smallest() {
        let shapes = vec![mat(2, &[4.0, 0.0, 0.0, 4.0]), DMatrix::identity(2, 2)];
        let out = intersect_outer_centered(&shapes).unwrap();
        assert!(out.trace() <= 2.0 + 1e-9);
    }

    #[test]
    fn affine_map_rotates_shape() {
        let e = Ellipsoid::centered(mat(2, &[4.0, 0.0, 0.0, 1.0])).unwrap();
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let mapped = affine_map(&rot, &e, &vec(&[0.0, 0.0])).unwrap();
        assert_relative_eq!(mapped.shape()[(0, 0)], 1.0, max_relative = 1e-12);
        assert_relative_eq!(mapped.shape()[(1, 1)], 4.0, max_relative = 1e-12);
    }
}
