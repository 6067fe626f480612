//! Type decomposition of twisted exterior derivatives.
//!
//! The complex structure splits complex-valued forms by type; this module
//! caches the pointwise type projectors per eta ring and uses them to
//! split the Novikov differential `d_theta = d - theta ^` into `del_theta`
//! and `dbar_theta`. The split applies one shared stencil evaluation and
//! then projects, so the two halves always sum back to `d_theta` at
//! machine roundoff independent of grid resolution, while each half is
//! individually correct to discretization order.
//!
//! Storage conventions follow the calculus module: covectors as column
//! vectors, 2-forms as map-matrices M with omega(X, Y) = y^T M x, 3-forms
//! by their complementary-index coefficients.

use crate::field::{d_one_form, d_scalar, d_two_form, wedge_1_1, wedge_1_2, Field, FormField};
use crate::grid::FundamentalGrid;
use crate::hopf::HopfGeometry;
use crate::{Error, Result};
use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use std::sync::Arc;

const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn complexify_vector(v: &Vector4<f64>) -> Vector4<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}

pub fn complexify_matrix(m: &Matrix4<f64>) -> Matrix4<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Complex-valued form fields, one arm per degree the split produces.
pub enum CFormField {
    Zero(Field<Complex64>),
    One(Field<Vector4<Complex64>>),
    Two(Field<Matrix4<Complex64>>),
    Three(Field<Vector4<Complex64>>),
}

impl CFormField {
    pub fn degree(&self) -> usize {
        match self {
            CFormField::Zero(_) => 0,
            CFormField::One(_) => 1,
            CFormField::Two(_) => 2,
            CFormField::Three(_) => 3,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            CFormField::Zero(f) => f.sup_norm(),
            CFormField::One(f) => f.sup_norm(),
            CFormField::Two(f) => f.sup_norm(),
            CFormField::Three(f) => f.sup_norm(),
        }
    }
}

/// Per-ring caches of the complexified structure maps: J for covectors and
/// 2-forms, and the degree-3 transfer matrix T with (T psi) = psi(J., J., J.)
/// in complementary-index storage. T^2 = -I because 3-forms on a complex
/// surface only carry types (2,1) and (1,2).
pub struct TypeProjectors {
    grid: Arc<FundamentalGrid>,
    j_c: Vec<Matrix4<Complex64>>,
    t3: Vec<Matrix4<Complex64>>,
}

impl TypeProjectors {
    pub fn new(geom: &HopfGeometry) -> Result<Self> {
        let grid = Arc::clone(&geom.grid);
        let mut j_c = Vec::with_capacity(grid.dims[1]);
        let mut t3 = Vec::with_capacity(grid.dims[1]);
        for ring in 0..grid.dims[1] {
            let j = geom.j_ring(ring);
            let t = three_form_transfer(j);
            let defect = (t * t + Matrix4::identity()).norm();
            if defect > 1e-10 * t.norm_squared().max(1.0) {
                return Err(Error::Numerics(format!(
                    "degree-3 transfer matrix fails T^2 = -I at ring {ring} (defect {defect})"
                )));
            }
            j_c.push(complexify_matrix(j));
            t3.push(complexify_matrix(&t));
        }
        Ok(TypeProjectors { grid, j_c, t3 })
    }

    #[inline]
    pub fn ring_of(&self, flat: usize) -> usize {
        (flat / self.grid.strides()[1]) % self.grid.dims[1]
    }

    /// (1,0) projector on covectors: the +i eigenspace of J^T.
    #[inline]
    pub fn pi10(&self, ring: usize, v: &Vector4<Complex64>) -> Vector4<Complex64> {
        let jt_v = self.j_c[ring].transpose() * v;
        (v - jt_v * I) * Complex64::new(0.5, 0.0)
    }

    /// (1,1) projector on map-matrix 2-forms.
    #[inline]
    pub fn pi11(&self, ring: usize, m: &Matrix4<Complex64>) -> Matrix4<Complex64> {
        let j = &self.j_c[ring];
        (m + j.transpose() * m * j) * Complex64::new(0.5, 0.0)
    }

    /// (2,0) projector, valid on the J-anti-invariant part (where MJ = +/- iM).
    #[inline]
    pub fn pi20(&self, ring: usize, n: &Matrix4<Complex64>) -> Matrix4<Complex64> {
        (n - n * self.j_c[ring] * I) * Complex64::new(0.5, 0.0)
    }

    /// (2,1) projector on 3-forms in complementary-index storage.
    #[inline]
    pub fn pi21(&self, ring: usize, c: &Vector4<Complex64>) -> Vector4<Complex64> {
        let tc = self.t3[ring] * c;
        (c - tc * I) * Complex64::new(0.5, 0.0)
    }
}

/// Matrix of psi -> psi(J., J., J.) acting on complementary-index storage:
/// entry (m, m') is the 3x3 minor over rows comp(m') of the columns
/// (J e_a, J e_b, J e_c), (a, b, c) = comp(m).
fn three_form_transfer(j: &Matrix4<f64>) -> Matrix4<f64> {
    use crate::field::COMPLEMENT;
    Matrix4::from_fn(|m, mp| {
        let cols = COMPLEMENT[m];
        let rows = COMPLEMENT[mp];
        let e = |r: usize, c: usize| j[(rows[r], cols[c])];
        e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1))
            - e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0))
            + e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0))
    })
}

fn theta_complex(theta: &Field<Vector4<f64>>) -> Field<Vector4<Complex64>> {
    assert!(
        (theta.factor - 1.0).abs() < 1e-14,
        "the Lee form must be an untwisted section"
    );
    theta.map(|v| complexify_vector(v))
}

fn d_theta_scalar(
    f: &Field<Complex64>,
    theta_c: &Field<Vector4<Complex64>>,
) -> Field<Vector4<Complex64>> {
    let tf = f.zip(theta_c, f.factor, |fv, tv| tv.map(|x| x * *fv));
    d_scalar(f).sub(&tf)
}

fn d_theta_one(
    a: &Field<Vector4<Complex64>>,
    theta_c: &Field<Vector4<Complex64>>,
) -> Field<Matrix4<Complex64>> {
    let ta = a.zip(theta_c, a.factor, |av, tv| wedge_1_1(tv, av));
    d_one_form(a).sub(&ta)
}

fn d_theta_two(
    w: &Field<Matrix4<Complex64>>,
    theta_c: &Field<Vector4<Complex64>>,
) -> Field<Vector4<Complex64>> {
    let tw = w.zip(theta_c, w.factor, |wv, tv| wedge_1_2(tv, wv));
    d_two_form(w).sub(&tw)
}

/// Splits `d_theta` of a complex scalar by output type.
pub fn split_scalar(
    f: &Field<Complex64>,
    theta_c: &Field<Vector4<Complex64>>,
    projs: &TypeProjectors,
) -> (Field<Vector4<Complex64>>, Field<Vector4<Complex64>>) {
    let d = d_theta_scalar(f, theta_c);
    let del = Field::from_fn(&d.grid, d.factor, |i| projs.pi10(projs.ring_of(i), d.at(i)));
    let dbar = d.sub(&del);
    (del, dbar)
}

/// Splits `d_theta` of a complex 1-form. The (1,0) and (0,1) input parts
/// are differentiated separately so each output half carries exactly the
/// continuum pieces of its bidegree; the complement form of `dbar`
/// preserves the node-wise sum.
pub fn split_one(
    a: &Field<Vector4<Complex64>>,
    theta_c: &Field<Vector4<Complex64>>,
    projs: &TypeProjectors,
) -> (Field<Matrix4<Complex64>>, Field<Matrix4<Complex64>>) {
    let a10 = Field::from_fn(&a.grid, a.factor, |i| projs.pi10(projs.ring_of(i), a.at(i)));
    let a01 = a.sub(&a10);
    let d10 = d_theta_one(&a10, theta_c);
    let d01 = d_theta_one(&a01, theta_c);
    let del = Field::from_fn(&a.grid, a.factor, |i| {
        let ring = projs.ring_of(i);
        let m10 = d10.at(i);
        let anti10 = m10 - projs.pi11(ring, m10);
        projs.pi20(ring, &anti10) + projs.pi11(ring, d01.at(i))
    });
    let dbar = d10.add(&d01).sub(&del);
    (del, dbar)
}

/// Splits `d_theta` of a complex 2-form. On a surface the (1,1) input part
/// feeds (2,1) output through del and the anti-invariant part feeds (1,2),
/// with the junk routes vanishing in the continuum.
pub fn split_two(
    w: &Field<Matrix4<Complex64>>,
    theta_c: &Field<Vector4<Complex64>>,
    projs: &TypeProjectors,
) -> (Field<Vector4<Complex64>>, Field<Vector4<Complex64>>) {
    let w11 = Field::from_fn(&w.grid, w.factor, |i| projs.pi11(projs.ring_of(i), w.at(i)));
    let anti = w.sub(&w11);
    let d11 = d_theta_two(&w11, theta_c);
    let danti = d_theta_two(&anti, theta_c);
    let del = Field::from_fn(&w.grid, w.factor, |i| {
        let ring = projs.ring_of(i);
        let c_anti = danti.at(i);
        projs.pi21(ring, d11.at(i)) + (c_anti - projs.pi21(ring, c_anti))
    });
    let dbar = d11.add(&danti).sub(&del);
    (del, dbar)
}

/// Splits the Novikov differential of a real form field by output type:
/// returns `(del_theta part, dbar_theta part)` whose node-wise sum equals
/// `d_theta` at roundoff. Accepts degrees 0, 1, 2.
pub fn dolbeault_split_theta(
    alpha: &FormField,
    theta: &Field<Vector4<f64>>,
    geom: &HopfGeometry,
) -> Result<(CFormField, CFormField)> {
    let projs = TypeProjectors::new(geom)?;
    let theta_c = theta_complex(theta);
    match alpha {
        FormField::Zero(f) => {
            let fc = f.map(|x| Complex64::new(*x, 0.0));
            let (del, dbar) = split_scalar(&fc, &theta_c, &projs);
            Ok((CFormField::One(del), CFormField::One(dbar)))
        }
        FormField::One(a) => {
            let ac = a.map(|v| complexify_vector(v));
            let (del, dbar) = split_one(&ac, &theta_c, &projs);
            Ok((CFormField::Two(del), CFormField::Two(dbar)))
        }
        FormField::Two(w) => {
            let wc = w.map(|m| complexify_matrix(m));
            let (del, dbar) = split_two(&wc, &theta_c, &projs);
            Ok((CFormField::Three(del), CFormField::Three(dbar)))
        }
        _ => Err(Error::Config(format!(
            "type split is defined for degrees 0..=2, got degree {}",
            alpha.degree()
        ))),
    }
}

/// The Cauchy-Riemann residual of a flat-bundle scalar section: the (0,1)
/// part of its flat derivative (zero Lee form; the bundle twist lives in
/// the field's seam factor). Holomorphic sections drive this to zero at
/// stencil order.
pub fn cr_residual_scalar(
    w: &Field<Complex64>,
    geom: &HopfGeometry,
) -> Result<Field<Vector4<Complex64>>> {
    let projs = TypeProjectors::new(geom)?;
    let zero_theta = Field::from_fn(&geom.grid, 1.0, |_| Vector4::<Complex64>::zeros());
    let (_, dbar) = split_scalar(w, &zero_theta, &projs);
    Ok(dbar)
}
