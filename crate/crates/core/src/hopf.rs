//! Diagonal Hopf surface geometry.
//!
//! Builds the standard complex structure in chart coordinates, the 0-type
//! family of Vaisman metrics `g_t = g_0 + ((t-1)/|theta_0|^2)(theta_0 (x)
//! theta_0 + J theta_0 (x) J theta_0)`, the matching Lee forms, monomial
//! bivector sections of twisted anticanonical bundles, the exact-curve
//! overlays where those sections vanish, and the holonomy and degree
//! diagnostics that pin the flat-bundle normalization.
//!
//! Everything here is eta-dependent only (the chart is a Riemannian
//! submersion over the eta interval for these metrics), so per-ring caches
//! are built once and replicated into fields on demand.

use crate::field::{d_one_form, d_two_form, wedge_1_2, Field};
use crate::grid::{BundleSpec, FundamentalGrid};
use crate::pointwise::{BivectorPt, ComplexStructurePt, HoloBivectorPt};
use crate::{Error, Result};
use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use std::sync::Arc;

/// Ambient complex structure: multiplication by `i` on `(z1, z2)` in the
/// real coordinate order `(Re z1, Im z1, Re z2, Im z2)`.
pub fn ambient_complex_structure() -> Matrix4<f64> {
    Matrix4::new(
        0.0, -1.0, 0.0, 0.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, -1.0, //
        0.0, 0.0, 1.0, 0.0,
    )
}

/// Real and imaginary parts of the constant ambient bivector
/// `d/dz1 ^ d/dz2 = (1/4)(dx1 - i dy1) ^ (dx2 - i dy2)`-dual.
pub fn ambient_holo_bivector() -> (Matrix4<f64>, Matrix4<f64>) {
    let e = |i: usize| Vector4::from_fn(|r, _| if r == i { 1.0 } else { 0.0 });
    let wedge = |u: Vector4<f64>, v: Vector4<f64>| v * u.transpose() - u * v.transpose();
    let re = (wedge(e(0), e(2)) - wedge(e(1), e(3))) * 0.25;
    let im = (wedge(e(1), e(2)) + wedge(e(0), e(3))) * -0.25;
    (re, im)
}

/// Chart geometry shared by every field construction on one grid.
pub struct HopfGeometry {
    pub grid: Arc<FundamentalGrid>,
    j_eta: Vec<Matrix4<f64>>,
}

impl HopfGeometry {
    /// Builds and validates the standard complex structure ring cache.
    pub fn new(grid: &Arc<FundamentalGrid>) -> Result<Self> {
        let l = grid.ell;
        let mut j_eta = Vec::with_capacity(grid.dims[1]);
        for &eta in &grid.eta {
            let (se, ce) = eta.sin_cos();
            let j = Matrix4::new(
                0.0, 0.0, -ce * ce / l, -se * se / l, //
                0.0, 0.0, se * ce, -se * ce, //
                l, -se / ce, 0.0, 0.0, //
                l, ce / se, 0.0, 0.0,
            );
            ComplexStructurePt::new(j).map_err(|e| {
                Error::Numerics(format!("standard complex structure failed validation: {e}"))
            })?;
            j_eta.push(j);
        }
        Ok(HopfGeometry { grid: Arc::clone(grid), j_eta })
    }

    #[inline]
    pub fn eta_index(&self, flat: usize) -> usize {
        (flat / self.grid.strides()[1]) % self.grid.dims[1]
    }

    /// Standard complex structure at a node (chart-frame matrix).
    #[inline]
    pub fn j_at(&self, flat: usize) -> &Matrix4<f64> {
        &self.j_eta[self.eta_index(flat)]
    }

    #[inline]
    pub fn j_ring(&self, eta_index: usize) -> &Matrix4<f64> {
        &self.j_eta[eta_index]
    }

    /// The complex structure as an untwisted field (gamma-invariant, so
    /// its seam residual is structurally zero).
    pub fn j_field(&self) -> Field<Matrix4<f64>> {
        Field::from_fn(&self.grid, 1.0, |i| *self.j_at(i))
    }
}

/// A Lee form together with its family parameter.
pub struct LeeData {
    pub t: f64,
    pub theta: Field<Vector4<f64>>,
}

impl LeeData {
    /// Sup norm of `d theta`; zero to roundoff for the constant-coefficient
    /// Lee forms of the Vaisman family.
    pub fn closedness_residual(&self) -> f64 {
        d_one_form(&self.theta).sup_norm()
    }
}

/// One member of the 0-type Vaisman family, cached per eta ring.
pub struct VaismanData {
    pub t: f64,
    grid: Arc<FundamentalGrid>,
    g_eta: Vec<Matrix4<f64>>,
    f_eta: Vec<Matrix4<f64>>,
    /// sqrt(det g) per ring; equals `t |ell| sin(eta) cos(eta)`.
    sqrt_det_eta: Vec<f64>,
    pub min_metric_eigenvalue: f64,
}

/// The 0-type deformation of the standard Hopf Vaisman metric; rejects
/// t <= 0 (outside the family).
pub fn vaisman_family(geom: &HopfGeometry, t: f64) -> Result<VaismanData> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Config(format!(
            "Vaisman family parameter t = {t} must be positive"
        )));
    }
    let grid = &geom.grid;
    let l = grid.ell;
    let mut g_eta = Vec::with_capacity(grid.dims[1]);
    let mut f_eta = Vec::with_capacity(grid.dims[1]);
    let mut sqrt_det_eta = Vec::with_capacity(grid.dims[1]);
    let mut min_eig = f64::INFINITY;
    for (k, &eta) in grid.eta.iter().enumerate() {
        let (se, ce) = eta.sin_cos();
        let (c2, s2) = (ce * ce, se * se);
        let mut g = Matrix4::zeros();
        g[(0, 0)] = t * l * l;
        g[(1, 1)] = 1.0;
        g[(2, 2)] = c2 + (t - 1.0) * c2 * c2;
        g[(3, 3)] = s2 + (t - 1.0) * s2 * s2;
        g[(2, 3)] = (t - 1.0) * c2 * s2;
        g[(3, 2)] = g[(2, 3)];
        min_eig = min_eig.min(g.symmetric_eigenvalues().min());
        let f = g * geom.j_ring(k);
        g_eta.push(g);
        f_eta.push(f);
        sqrt_det_eta.push(t * l.abs() * se * ce);
    }
    if min_eig <= 0.0 {
        return Err(Error::Numerics(format!(
            "Vaisman metric lost positivity at t = {t} (min eigenvalue {min_eig})"
        )));
    }
    Ok(VaismanData {
        t,
        grid: Arc::clone(grid),
        g_eta,
        f_eta,
        sqrt_det_eta,
        min_metric_eigenvalue: min_eig,
    })
}

impl VaismanData {
    #[inline]
    pub fn g_ring(&self, eta_index: usize) -> &Matrix4<f64> {
        &self.g_eta[eta_index]
    }

    #[inline]
    pub fn f_ring(&self, eta_index: usize) -> &Matrix4<f64> {
        &self.f_eta[eta_index]
    }

    #[inline]
    pub fn sqrt_det_ring(&self, eta_index: usize) -> f64 {
        self.sqrt_det_eta[eta_index]
    }

    fn ring_of(&self, flat: usize) -> usize {
        (flat / self.grid.strides()[1]) % self.grid.dims[1]
    }

    pub fn metric_field(&self) -> Field<Matrix4<f64>> {
        Field::from_fn(&self.grid, 1.0, |i| self.g_eta[self.ring_of(i)])
    }

    /// Fundamental 2-form `F_t(X, Y) = g_t(JX, Y)` as a map-matrix field.
    pub fn fundamental_form_field(&self) -> Field<Matrix4<f64>> {
        Field::from_fn(&self.grid, 1.0, |i| self.f_eta[self.ring_of(i)])
    }

    /// Lee form `theta_t = -2 t ell ds` (constant coefficients, closed).
    pub fn lee(&self) -> LeeData {
        let c = -2.0 * self.t * self.grid.ell;
        LeeData {
            t: self.t,
            theta: Field::from_fn(&self.grid, 1.0, |_| Vector4::new(c, 0.0, 0.0, 0.0)),
        }
    }

    /// Sup norm of the lcK defect `dF_t - theta_t ^ F_t`; the identity is
    /// exact in the continuum, so this measures pure stencil error.
    pub fn lck_residual(&self) -> f64 {
        let f = self.fundamental_form_field();
        let lee = self.lee();
        let df = d_two_form(&f);
        let tf = f.zip(&lee.theta, 1.0, |fv, tv| wedge_1_2(tv, fv));
        df.sub(&tf).sup_norm()
    }
}

/// The Lee-family parameter whose class matches the dual of `bundle`:
/// `t* = ln(mu*) / ln(c0)` with `c0 = lambda^2`. Requires mu > 1.
pub fn select_t_for_bundle(lambda: f64, bundle: &BundleSpec) -> Result<f64> {
    let mu = bundle.mu(lambda);
    if !(mu > 1.0) {
        return Err(Error::Config(format!(
            "bundle ({}, {})^{} has monodromy mu = {mu} <= 1; the Vaisman family only \
             reaches Lee classes of bundles with mu > 1",
            bundle.p1, bundle.p2, bundle.power
        )));
    }
    let c0 = lambda * lambda;
    Ok(bundle.mu_star(lambda).ln() / c0.ln())
}

/// The closed twisted representative `lambda^{2 t s} F_t` of the lcK class.
/// `factor` must equal `lambda^{2t}` (callers pass the bundle's exact
/// `mu*` so downstream factor bookkeeping cancels identically).
pub fn twisted_lck_form(
    geom: &HopfGeometry,
    v: &VaismanData,
    factor: f64,
) -> Result<Field<Matrix4<f64>>> {
    let expected = geom.grid.lambda.powf(2.0 * v.t);
    if ((factor - expected) / expected).abs() > 1e-10 {
        return Err(Error::Config(format!(
            "seam factor {factor} does not match lambda^(2t) = {expected} for t = {}",
            v.t
        )));
    }
    let grid = &geom.grid;
    Ok(Field::from_fn(grid, factor, |i| {
        let q = grid.coords(i);
        let ring = (i / grid.strides()[1]) % grid.dims[1];
        v.f_eta[ring] * factor.powf(q[0])
    }))
}

/// Monomial holomorphic bivector spanning `H^0` of the twisted
/// anticanonical bundle: `z1^{m1} z2^{m2} d/dz1 ^ d/dz2` in chart-frame
/// components, plus its scalar coefficient for Cauchy-Riemann checks.
pub struct SigmaSection {
    pub bundle: BundleSpec,
    /// Monomial exponents (m1, m2) = (q1 + 1, q2 + 1).
    pub exponents: (i64, i64),
    /// Seam factor of the chart-frame bivector components (equals mu).
    pub factor: f64,
    /// Seam factor of the scalar coefficient, lambda^(m1 + m2).
    pub scalar_factor: f64,
    pub w: Field<Complex64>,
    pub re: Field<Matrix4<f64>>,
    pub im: Field<Matrix4<f64>>,
    /// Sup of the exact seam identity defect (roundoff scale).
    pub seam_exactness: f64,
    /// Smallest |w| over the grid; positive because zeros sit on the
    /// off-grid curve overlays.
    pub min_abs_w: f64,
    /// Sup over sampled nodes of the compatibility defects against J
    /// (anti-commutation and type), relative to the local scale.
    pub compat_defect: f64,
}

fn monomial(z: Vector4<f64>, m1: i64, m2: i64) -> Complex64 {
    let z1 = Complex64::new(z[0], z[1]);
    let z2 = Complex64::new(z[2], z[3]);
    z1.powi(m1 as i32) * z2.powi(m2 as i32)
}

fn sigma_coord_parts(
    grid: &FundamentalGrid,
    q: [f64; 4],
    m1: i64,
    m2: i64,
    b_re: &Matrix4<f64>,
    b_im: &Matrix4<f64>,
) -> (Complex64, Matrix4<f64>, Matrix4<f64>) {
    let w = monomial(grid.ambient_at(q), m1, m2);
    let a_inv = grid.chart_jacobian_inv(q);
    let amb_re = b_re * w.re - b_im * w.im;
    let amb_im = b_im * w.re + b_re * w.im;
    let pull = |m: Matrix4<f64>| {
        let q = a_inv * m * a_inv.transpose();
        (q - q.transpose()) * 0.5
    };
    (w, pull(amb_re), pull(amb_im))
}

pub fn sigma_section(geom: &HopfGeometry, bundle: &BundleSpec) -> Result<SigmaSection> {
    let (q1, q2) = bundle.exponents();
    let (m1, m2) = (q1 + 1, q2 + 1);
    if m1 < 0 || m2 < 0 {
        return Err(Error::Config(format!(
            "bundle ({}, {})^{} has no effective twisted anticanonical section: \
             monomial exponents ({m1}, {m2}) must be nonnegative",
            bundle.p1, bundle.p2, bundle.power
        )));
    }
    let grid = &geom.grid;
    let lambda = grid.lambda;
    let factor = bundle.mu(lambda);
    let scalar_factor = lambda.powi((m1 + m2) as i32);
    let (b_re, b_im) = ambient_holo_bivector();

    let w = Field::from_fn(grid, scalar_factor, |i| {
        monomial(grid.ambient(i), m1, m2)
    });
    let re = Field::from_fn(grid, factor, |i| {
        sigma_coord_parts(grid, grid.coords(i), m1, m2, &b_re, &b_im).1
    });
    let im = Field::from_fn(grid, factor, |i| {
        sigma_coord_parts(grid, grid.coords(i), m1, m2, &b_re, &b_im).2
    });

    // Exact seam identity: the components separate as lambda^(s(q1+q2))
    // times an angular profile, so re-evaluating the formula at the deck
    // image must reproduce factor * (stored value) to roundoff.
    let scale = re.sup_norm().max(im.sup_norm()).max(1e-300);
    let mut seam_exactness = 0.0f64;
    for &(flat, q_img) in grid.seam_nodes() {
        let (_, re_img, im_img) = sigma_coord_parts(grid, q_img, m1, m2, &b_re, &b_im);
        let d_re = (re_img - re.at(flat) * factor).norm();
        let d_im = (im_img - im.at(flat) * factor).norm();
        seam_exactness = seam_exactness.max(d_re.max(d_im));
    }
    seam_exactness /= scale * factor.max(1.0);

    // Pointwise compatibility with the complex structure: the chart-frame
    // components must form a (2,0) bivector for J at every ring. Sampled
    // on the full s = 0 face (all rings and angles appear there).
    let mut compat = 0.0f64;
    for &(flat, _) in grid.seam_nodes() {
        let j = ComplexStructurePt::new(*geom.j_at(flat))
            .map_err(|e| Error::Numerics(e.to_string()))?;
        let re_pt = BivectorPt::new(*re.at(flat)).map_err(|e| Error::Numerics(e.to_string()))?;
        let im_pt = BivectorPt::new(*im.at(flat)).map_err(|e| Error::Numerics(e.to_string()))?;
        let local = re_pt.matrix().norm().max(im_pt.matrix().norm()).max(1e-300);
        let d_anti = re_pt.anticommutation_defect(&j);
        let d_conj = (im.at(flat) + j.matrix() * re.at(flat)).norm();
        HoloBivectorPt::new(re_pt, im_pt, &j).map_err(|e| {
            Error::Numerics(format!(
                "sigma section is not (2,0)-compatible with J at node {flat}: {e}"
            ))
        })?;
        compat = compat.max(d_anti.max(d_conj) / local);
    }
    let min_abs_w = w
        .data()
        .iter()
        .map(|c| c.norm())
        .fold(f64::INFINITY, f64::min);

    Ok(SigmaSection {
        bundle: *bundle,
        exponents: (m1, m2),
        factor,
        scalar_factor,
        w,
        re,
        im,
        seam_exactness,
        min_abs_w,
        compat_defect: compat,
    })
}

/// Exact-curve overlays: the elliptic curves sit at the eta poles, off the
/// staggered grid; classification samples them directly in ambient
/// coordinates where the chart degenerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveId {
    /// `z2 = 0` (eta -> 0); the monomial vanishes here iff m2 > 0.
    Z2Axis,
    /// `z1 = 0` (eta -> pi/2); vanishes iff m1 > 0.
    Z1Axis,
}

pub struct CurveOverlay {
    pub curve: CurveId,
    pub s: Vec<f64>,
    pub xi: Vec<f64>,
}

impl CurveOverlay {
    pub fn new(grid: &FundamentalGrid, curve: CurveId) -> Self {
        let xi = match curve {
            CurveId::Z2Axis => grid.xi1.clone(),
            CurveId::Z1Axis => grid.xi2.clone(),
        };
        CurveOverlay { curve, s: grid.s.clone(), xi }
    }

    pub fn eta_value(&self) -> f64 {
        match self.curve {
            CurveId::Z2Axis => 0.0,
            CurveId::Z1Axis => std::f64::consts::FRAC_PI_2,
        }
    }

    /// Ambient point of overlay node (i, j).
    pub fn ambient(&self, lambda: f64, i: usize, j: usize) -> Vector4<f64> {
        let r = lambda.powf(self.s[i]);
        let (sn, cs) = self.xi[j].sin_cos();
        match self.curve {
            CurveId::Z2Axis => Vector4::new(r * cs, r * sn, 0.0, 0.0),
            CurveId::Z1Axis => Vector4::new(0.0, 0.0, r * cs, r * sn),
        }
    }

    /// The sigma scalar on the overlay; exactly zero when the section
    /// vanishes on this curve.
    pub fn sigma_scalar(&self, lambda: f64, m: (i64, i64), i: usize, j: usize) -> Complex64 {
        monomial(self.ambient(lambda, i, j), m.0, m.1)
    }
}

/// Gauduchon-degree style quadrature: `-(1/2pi) Int |theta|^2_g dv_g`.
pub fn degree_check(
    g: &Field<Matrix4<f64>>,
    theta: &Field<Vector4<f64>>,
    grid: &FundamentalGrid,
) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..grid.len() {
        let gm = g.at(i);
        let det = gm.determinant();
        if !(det > 0.0) {
            return Err(Error::Numerics(format!(
                "degenerate volume element at node {i} (det g = {det})"
            )));
        }
        let th = theta.at(i);
        let ginv_th = gm
            .lu()
            .solve(th)
            .ok_or_else(|| Error::Numerics("metric not invertible".into()))?;
        acc += th.dot(&ginv_th) * det.sqrt() * grid.coord_weight(i);
    }
    Ok(-acc / std::f64::consts::TAU)
}

/// Flat-bundle holonomy calibration: `exp(-loop integral of theta)` over
/// the S^1 generator, divided by the expected dual monodromy `mu*`.
pub fn holonomy_check(lee: &LeeData, mu_star: f64, grid: &FundamentalGrid) -> Result<f64> {
    if lee.closedness_residual() > 1e-8 * lee.theta.sup_norm().max(1e-300) / grid.h[0] {
        return Err(Error::Numerics(
            "holonomy is only defined for a closed Lee form".into(),
        ));
    }
    // Integrate theta_s along the s pencil through the middle ring; the
    // periodic rectangle rule is exact for the constant-coefficient family
    // and spectrally accurate otherwise.
    let strides = grid.strides();
    let rest = (grid.dims[1] / 2) * strides[1];
    let mut loop_integral = 0.0;
    for i in 0..grid.dims[0] {
        loop_integral += lee.theta.at(i * strides[0] + rest)[0] * grid.h[0];
    }
    Ok((-loop_integral).exp() / mu_star)
}
