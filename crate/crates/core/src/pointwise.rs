//! Exact tensor algebra at a single tangent space.
//!
//! Everything here is pure 4x4 real linear algebra in a fixed basis, with
//! the storage conventions of the crate docs. Worked example in the
//! standard basis (z1 = x0 + i x1, z2 = x2 + i x3):
//!
//! * `J` maps `e0 -> e1, e1 -> -e0, e2 -> e3, e3 -> -e2`.
//! * the symplectic form `dx0^dx1 + dx2^dx3` has map matrix with
//!   `M[(1,0)] = 1 = -M[(0,1)]`, `M[(3,2)] = 1 = -M[(2,3)]`; it is
//!   J-invariant, so with `Q = 0` the defining condition
//!   `wJ + J^T w + w Q w = 0` holds exactly and `J_- = -J`.
//! * `Re(dz1^dz2)` is J-anti-invariant: its invariant part is zero.

use crate::{Error, Result};
use nalgebra::{Matrix4, Vector4};

/// Tolerance for exact algebraic identities (squares, compatibility).
pub const ALG_TOL: f64 = 1e-12;
/// Tolerance for stored antisymmetry.
pub const ANTISYM_TOL: f64 = 1e-14;

#[inline]
fn scale_of(m: &Matrix4<f64>) -> f64 {
    m.norm().max(1.0)
}

/// J-invariant part `(1/2)(M + J^T M J)` of a 2-form map matrix.
#[inline]
pub fn proj_invariant(m: &Matrix4<f64>, j: &Matrix4<f64>) -> Matrix4<f64> {
    (m + j.transpose() * m * j) * 0.5
}

/// J-anti-invariant part `(1/2)(M - J^T M J)`.
#[inline]
pub fn proj_anti_invariant(m: &Matrix4<f64>, j: &Matrix4<f64>) -> Matrix4<f64> {
    (m - j.transpose() * m * j) * 0.5
}

/// An almost complex structure: `J: T -> T`, `J^2 = -Id`, inducing the
/// fixed orientation of the basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexStructurePt {
    m: Matrix4<f64>,
}

impl ComplexStructurePt {
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        Self::new_with_tol(m, ALG_TOL)
    }

    /// Constructor with a caller-derived tolerance on `J^2 + Id` (needed for
    /// structures built from residual-bearing data).
    pub fn new_with_tol(m: Matrix4<f64>, tol: f64) -> Result<Self> {
        let sq = (m * m + Matrix4::identity()).norm();
        if !sq.is_finite() || sq > tol * scale_of(&(m * m)) {
            return Err(Error::Numerics(format!(
                "matrix does not square to -Id: defect {sq:.3e} > tol {tol:.3e}"
            )));
        }
        if !orientation_positive(&m) {
            return Err(Error::Numerics(
                "almost complex structure induces the wrong orientation".into(),
            ));
        }
        Ok(ComplexStructurePt { m })
    }

    /// Multiplication by `i` of the standard identification R^4 = C^2.
    pub fn standard() -> Self {
        let mut m = Matrix4::zeros();
        m[(1, 0)] = 1.0;
        m[(0, 1)] = -1.0;
        m[(3, 2)] = 1.0;
        m[(2, 3)] = -1.0;
        ComplexStructurePt { m }
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    /// Matrix of the covector action `J* a = -a(J .)`.
    #[inline]
    pub fn j_star(&self) -> Matrix4<f64> {
        -self.m.transpose()
    }
}

/// Orientation induced by an almost complex structure: any adapted frame
/// `(v, Jv, w, Jw)` must be positively oriented. The set of adapted frames
/// is connected, so one well-conditioned sample decides the sign.
pub fn orientation_positive(j: &Matrix4<f64>) -> bool {
    let v = Vector4::new(1.0, 0.0, 0.0, 0.0);
    let jv = j * v;
    // Pick the candidate third vector least captured by span{v, Jv}.
    let mut best = (1, f64::NEG_INFINITY);
    for c in 1..4 {
        let w = Vector4::from_fn(|r, _| if r == c { 1.0 } else { 0.0 });
        let b1 = v.normalize();
        let b2 = (jv - b1 * jv.dot(&b1)).normalize();
        let rej = (w - b1 * w.dot(&b1) - b2 * w.dot(&b2)).norm();
        if rej > best.1 {
            best = (c, rej);
        }
    }
    let w = Vector4::from_fn(|r, _| if r == best.0 { 1.0 } else { 0.0 });
    let jw = j * w;
    Matrix4::from_columns(&[v, jv, w, jw]).determinant() > 0.0
}

/// A 2-form as a map matrix `T -> T*`: `w(X, Y) = Y^T M X`, `M^T = -M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoFormPt {
    m: Matrix4<f64>,
}

impl TwoFormPt {
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        let defect = (m + m.transpose()).norm();
        if !defect.is_finite() || defect > ANTISYM_TOL * scale_of(&m) {
            return Err(Error::Numerics(format!(
                "2-form matrix not antisymmetric: defect {defect:.3e}"
            )));
        }
        Ok(TwoFormPt { m })
    }

    /// Antisymmetrize a computed matrix, discarding the roundoff-sized
    /// symmetric contamination.
    pub fn antisymmetrized(m: Matrix4<f64>) -> Self {
        TwoFormPt { m: (m - m.transpose()) * 0.5 }
    }

    pub fn zero() -> Self {
        TwoFormPt { m: Matrix4::zeros() }
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    #[inline]
    pub fn eval(&self, x: &Vector4<f64>, y: &Vector4<f64>) -> f64 {
        (y.transpose() * self.m * x)[(0, 0)]
    }
}

/// A bivector as a map matrix `T* -> T`, antisymmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivectorPt {
    m: Matrix4<f64>,
}

impl BivectorPt {
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        let defect = (m + m.transpose()).norm();
        if !defect.is_finite() || defect > ANTISYM_TOL * scale_of(&m) {
            return Err(Error::Numerics(format!(
                "bivector matrix not antisymmetric: defect {defect:.3e}"
            )));
        }
        Ok(BivectorPt { m })
    }

    pub fn antisymmetrized(m: Matrix4<f64>) -> Self {
        BivectorPt { m: (m - m.transpose()) * 0.5 }
    }

    pub fn zero() -> Self {
        BivectorPt { m: Matrix4::zeros() }
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    /// Defect of the anti-commutation `J Q = Q J^T` that characterizes
    /// bivectors of type (2,0)+(0,2) with respect to `j`.
    pub fn anticommutation_defect(&self, j: &ComplexStructurePt) -> f64 {
        (j.matrix() * self.m - self.m * j.matrix().transpose()).norm()
    }

    /// Validate the companion-structure compatibility invariant.
    pub fn check_compatible(&self, j: &ComplexStructurePt) -> Result<()> {
        let d = self.anticommutation_defect(j);
        if d > ALG_TOL * scale_of(&self.m) {
            return Err(Error::Numerics(format!(
                "bivector does not anti-commute with J: defect {d:.3e}"
            )));
        }
        Ok(())
    }
}

/// Symmetric bilinear form with a positivity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPt {
    m: Matrix4<f64>,
    pub positive_definite: bool,
}

impl MetricPt {
    /// Build from a symmetric matrix; sets the positivity flag from the
    /// spectrum.
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        let defect = (m - m.transpose()).norm();
        if !defect.is_finite() || defect > ANTISYM_TOL * scale_of(&m) {
            return Err(Error::Numerics(format!(
                "metric matrix not symmetric: defect {defect:.3e}"
            )));
        }
        let min_eig = m
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        Ok(MetricPt { m, positive_definite: min_eig > 0.0 })
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.m
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// Orthogonality defect `|J^T G J - G|` of an almost complex structure.
    pub fn orthogonality_defect(&self, j: &ComplexStructurePt) -> f64 {
        (j.matrix().transpose() * self.m * j.matrix() - self.m).norm()
    }
}

/// Real and imaginary part of a holomorphic-type bivector; the imaginary
/// part is determined by `im = -J re`.
#[derive(Debug, Clone, Copy)]
pub struct HoloBivectorPt {
    pub re: BivectorPt,
    pub im: BivectorPt,
}

impl HoloBivectorPt {
    pub fn new(re: BivectorPt, im: BivectorPt, j: &ComplexStructurePt) -> Result<Self> {
        re.check_compatible(j)?;
        let d = (im.matrix() + j.matrix() * re.matrix()).norm();
        if d > ALG_TOL * scale_of(re.matrix()) {
            return Err(Error::Numerics(format!(
                "imaginary part is not -J(real part): defect {d:.3e}"
            )));
        }
        // (2,0)+(0,2) characterization: J re J^T = -re.
        let anti = (j.matrix() * re.matrix() * j.matrix().transpose() + re.matrix()).norm();
        if anti > ALG_TOL * scale_of(re.matrix()) {
            return Err(Error::Numerics(format!(
                "real part is not of anti-invariant type: defect {anti:.3e}"
            )));
        }
        Ok(HoloBivectorPt { re, im })
    }

    /// Derive the imaginary part from the real part.
    pub fn from_re(re: BivectorPt, j: &ComplexStructurePt) -> Result<Self> {
        let im = BivectorPt::antisymmetrized(-(j.matrix() * re.matrix()));
        Self::new(re, im, j)
    }
}

/// Split a 2-form into its J-invariant (1,1) part and anti-invariant
/// (2,0)+(0,2) part.
pub fn type_split(w: &TwoFormPt, j: &ComplexStructurePt) -> (TwoFormPt, TwoFormPt) {
    let inv = proj_invariant(w.matrix(), j.matrix());
    let anti = w.matrix() - inv;
    (TwoFormPt { m: inv }, TwoFormPt { m: anti })
}

/// The defining algebraic condition as a matrix `T -> T*`:
/// `wJ - J*w + wQw = M J + J^T M + M Mq M`. Zero iff the pair (w, Q) is
/// admissible at this point.
pub fn gualtieri_residual(
    w: &TwoFormPt,
    q: &BivectorPt,
    j: &ComplexStructurePt,
) -> Matrix4<f64> {
    let m = w.matrix();
    m * j.matrix() + j.matrix().transpose() * m + m * q.matrix() * m
}

/// Frobenius norm of [`gualtieri_residual`].
pub fn gualtieri_residual_norm(w: &TwoFormPt, q: &BivectorPt, j: &ComplexStructurePt) -> f64 {
    gualtieri_residual(w, q, j).norm()
}

/// Second complex structure `J_- = -J - Qw`.
///
/// Exact identity used for the tolerance: with compatible `Q`,
/// `J_-^2 + Id = Q R` where `R` is the residual matrix, so the square
/// defect is bounded by `|Q| |R|`.
pub fn build_jminus(
    w: &TwoFormPt,
    q: &BivectorPt,
    j: &ComplexStructurePt,
    residual_tol: f64,
) -> Result<ComplexStructurePt> {
    let res = gualtieri_residual_norm(w, q, j);
    if res > residual_tol {
        return Err(Error::Numerics(format!(
            "algebraic condition residual {res:.3e} exceeds tolerance {residual_tol:.3e}; \
             J_- would not be almost complex"
        )));
    }
    let m = -j.matrix() - q.matrix() * w.matrix();
    let tol = (q.matrix().norm() * res / scale_of(&(m * m)) + 1e-12).max(ALG_TOL);
    ComplexStructurePt::new_with_tol(m, tol)
}

/// Metric `g = -1/2 w(J - J_-)`, symmetrized; positivity flagged.
pub fn build_metric(
    w: &TwoFormPt,
    j: &ComplexStructurePt,
    jm: &ComplexStructurePt,
) -> Result<MetricPt> {
    let raw = -0.5 * w.matrix() * (j.matrix() - jm.matrix());
    let sym = (raw + raw.transpose()) * 0.5;
    MetricPt::new(sym)
}

/// Symmetry defect of the unsymmetrized metric formula (bounded by the
/// condition residual; exposed for the verification suites).
pub fn metric_symmetry_defect(
    w: &TwoFormPt,
    j: &ComplexStructurePt,
    jm: &ComplexStructurePt,
) -> f64 {
    let raw = -0.5 * w.matrix() * (j.matrix() - jm.matrix());
    (raw - raw.transpose()).norm()
}

/// Commutator bivector: `Phi = 1/2 (J+ J- - J- J+)` with an index raised by
/// `g^{-1}`. Recovers (a multiple of) the deformation bivector.
pub fn commutator_bivector(
    jp: &ComplexStructurePt,
    jm: &ComplexStructurePt,
    g: &MetricPt,
) -> Result<BivectorPt> {
    let g_inv = g
        .matrix()
        .try_inverse()
        .filter(|_| g.positive_definite)
        .ok_or_else(|| Error::Numerics("metric is singular or indefinite".into()))?;
    let phi = (jp.matrix() * jm.matrix() - jm.matrix() * jp.matrix()) * 0.5;
    Ok(BivectorPt::antisymmetrized(phi * g_inv))
}

/// Angle function `p = -1/4 trace(J+ J-)`; equals +1 iff the structures
/// coincide and -1 iff they are opposite.
pub fn angle_p(jp: &ComplexStructurePt, jm: &ComplexStructurePt) -> f64 {
    -0.25 * (jp.matrix() * jm.matrix()).trace()
}

/// Invert the construction: recover the 2-form from `(g, J+, J-)` via
/// `w = F+ - 1/(1-p) g(Phi J+ ., .)` with `F+ = g(J+ ., .)`.
pub fn extract_omega(
    g: &MetricPt,
    jp: &ComplexStructurePt,
    jm: &ComplexStructurePt,
    eps: f64,
) -> Result<TwoFormPt> {
    let p = angle_p(jp, jm);
    if p >= 1.0 - eps {
        return Err(Error::Numerics(format!(
            "angle p = {p} too close to 1 (J+ = J- degenerate direction); extraction undefined"
        )));
    }
    let phi = (jp.matrix() * jm.matrix() - jm.matrix() * jp.matrix()) * 0.5;
    let m = g.matrix() * jp.matrix() - (g.matrix() * phi * jp.matrix()) / (1.0 - p);
    Ok(TwoFormPt::antisymmetrized(m))
}

/// Solve the anti-invariant part equation for the quadratic source: given
/// `S`, return the anti-invariant 2-form with `-J^T M = S`, i.e.
/// `M = P_anti(J^T S)`.
#[inline]
pub fn anti_part_from_source(s: &Matrix4<f64>, j: &ComplexStructurePt) -> Matrix4<f64> {
    proj_anti_invariant(&(j.matrix().transpose() * s), j.matrix())
}

/// Brute-force fixed-point oracle for the defining condition: holds the
/// (1,1) part at `F` and iterates the anti-invariant part of
/// `1/2 w Q w` through [`anti_part_from_source`].
pub fn fixed_point_solve(
    f: &TwoFormPt,
    q: &BivectorPt,
    j: &ComplexStructurePt,
    tol: f64,
    max_iter: usize,
) -> Result<TwoFormPt> {
    let scale = scale_of(f.matrix());
    let mut w = *f;
    let mut last_res = f64::INFINITY;
    for it in 0..max_iter.max(1) {
        let res = gualtieri_residual_norm(&w, q, j);
        if res <= tol * scale {
            return Ok(w);
        }
        if res > 10.0 * last_res.max(scale) {
            return Err(Error::Numerics(format!(
                "fixed point diverges at iteration {it}: residual {res:.3e} (Q too large)"
            )));
        }
        last_res = res;
        let quad = w.matrix() * q.matrix() * w.matrix();
        let anti = anti_part_from_source(&(0.5 * quad), j);
        w = TwoFormPt::antisymmetrized(f.matrix() + anti);
    }
    let res = gualtieri_residual_norm(&w, q, j);
    if res <= tol * scale {
        Ok(w)
    } else {
        Err(Error::Numerics(format!(
            "fixed point not converged after {max_iter} iterations: residual {res:.3e}"
        )))
    }
}

/// Pointwise trichotomy label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointClass {
    JPlusEqJMinus,
    JPlusEqNegJMinus,
    Generic,
}

pub fn classify_point(p: f64, tol: f64) -> Result<PointClass> {
    if !(p.is_finite() && p.abs() <= 1.0 + tol) {
        return Err(Error::Numerics(format!(
            "angle value p = {p} outside [-1, 1] padding; upstream numerical failure"
        )));
    }
    Ok(if (p - 1.0).abs() < tol {
        PointClass::JPlusEqJMinus
    } else if (p + 1.0).abs() < tol {
        PointClass::JPlusEqNegJMinus
    } else {
        PointClass::Generic
    })
}

/// Seeded random generators for the verification suites.
pub mod random {
    use super::*;
    use rand::Rng;

    fn random_matrix<R: Rng>(rng: &mut R, scale: f64) -> Matrix4<f64> {
        Matrix4::from_fn(|_, _| rng.gen_range(-scale..scale))
    }

    /// Random antisymmetric 2-form of the given scale.
    pub fn two_form<R: Rng>(rng: &mut R, scale: f64) -> TwoFormPt {
        TwoFormPt::antisymmetrized(random_matrix(rng, scale))
    }

    /// Random almost complex structure with the standard orientation,
    /// conjugated from the standard one by a well-conditioned matrix.
    pub fn complex_structure<R: Rng>(rng: &mut R) -> ComplexStructurePt {
        let j0 = ComplexStructurePt::standard();
        loop {
            let m = Matrix4::identity() + random_matrix(rng, 0.3);
            if m.determinant() <= 0.2 {
                continue;
            }
            let Some(m_inv) = m.try_inverse() else { continue };
            let j = m * j0.matrix() * m_inv;
            if let Ok(js) = ComplexStructurePt::new(j) {
                return js;
            }
        }
    }

    /// Random holomorphic-type bivector compatible with `j`: project an
    /// arbitrary antisymmetric matrix onto the anti-invariant type by
    /// `(1/2)(R - J R J^T)`.
    pub fn holo_bivector<R: Rng>(
        rng: &mut R,
        j: &ComplexStructurePt,
        scale: f64,
    ) -> HoloBivectorPt {
        let r = BivectorPt::antisymmetrized(random_matrix(rng, scale)).m;
        let q = (r - j.matrix() * r * j.matrix().transpose()) * 0.5;
        HoloBivectorPt::from_re(BivectorPt::antisymmetrized(q), j)
            .expect("projection produces a compatible bivector")
    }

    /// Random positive (1,1)-form for `j`: fundamental form of a random
    /// J-invariant metric.
    pub fn invariant_positive_form<R: Rng>(rng: &mut R, j: &ComplexStructurePt) -> TwoFormPt {
        let a: Matrix4<f64> = random_matrix(rng, 1.0) + Matrix4::identity() * 2.5;
        let g = a.transpose() * a;
        let g_inv_j = (g + j.matrix().transpose() * g * j.matrix()) * 0.5;
        TwoFormPt::antisymmetrized(g_inv_j * j.matrix())
    }

    /// Family of matrices satisfying the per-order term conditions up to
    /// order `n - 1` (free (1,1) parts, determined anti parts); the input
    /// for the order-`n` cancellation identity.
    pub fn term_condition_family<R: Rng>(
        rng: &mut R,
        j: &ComplexStructurePt,
        q: &BivectorPt,
        n: usize,
    ) -> Vec<Matrix4<f64>> {
        let mut terms: Vec<Matrix4<f64>> = Vec::with_capacity(n - 1);
        let f = invariant_positive_form(rng, j);
        terms.push(*f.matrix());
        for i in 2..n {
            let mut s = Matrix4::zeros();
            for k in 1..i {
                s += terms[k - 1] * q.matrix() * terms[i - k - 1];
            }
            let anti = anti_part_from_source(&(0.5 * s), j);
            let free = proj_invariant(&random_matrix(rng, 0.5), j.matrix());
            let free = (free - free.transpose()) * 0.5;
            terms.push(anti + free);
        }
        terms
    }
}
