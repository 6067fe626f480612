//! Fundamental-domain grid for the diagonal Hopf quotient.
//!
//! Chart: `z1 = R cos(eta) e^{i xi1}`, `z2 = R sin(eta) e^{i xi2}` with
//! `R = lambda^s`. One fundamental annulus is `s in [0, 1)`; the deck
//! transformation `z -> lambda z` acts as `s -> s + 1` and leaves
//! `(eta, xi1, xi2)` fixed, so equivariant fields live on an `s`-periodic
//! grid with a multiplicative seam factor. The polar angle `eta` runs over
//! `(0, pi/2)` on staggered midpoints, keeping the curves `z1 = 0` and
//! `z2 = 0` off-grid; values on those curves are recovered by one-sided
//! extrapolation.

use crate::stencil::{cell_quadrature_weights, lagrange_weights, Op1D};
use crate::{Error, Result};
use nalgebra::{Matrix4, Vector4};
use std::f64::consts::{FRAC_PI_2, TAU};

/// Grid axes in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    S = 0,
    Eta = 1,
    Xi1 = 2,
    Xi2 = 3,
}

pub const AXES: [Axis; 4] = [Axis::S, Axis::Eta, Axis::Xi1, Axis::Xi2];

/// Contraction factors of the defining automorphism, `z_i -> a_i z_i`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct HopfParams {
    pub a1: f64,
    pub a2: f64,
}

impl HopfParams {
    pub fn diagonal(lambda: f64) -> Self {
        HopfParams { a1: lambda, a2: lambda }
    }

    /// The common contraction factor. The numeric backend covers the
    /// equal-factor case only and rejects anything else up front.
    pub fn lambda(&self) -> Result<f64> {
        if self.a1 != self.a2 {
            return Err(Error::Config(format!(
                "unequal contraction factors a1 = {} and a2 = {} are outside the numeric \
                 backend's scope; it handles the diagonal case a1 = a2 only",
                self.a1, self.a2
            )));
        }
        let l = self.a1;
        if !(l.is_finite() && l > 1e-3 && l < 1.0 - 1e-3) {
            return Err(Error::Config(format!(
                "contraction factor lambda = {l} must lie in (0.001, 0.999)"
            )));
        }
        Ok(l)
    }
}

/// Flat line bundle `L_{p1,p2}^power` with monodromy `mu = (a1^p1 a2^p2)^power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BundleSpec {
    pub p1: i32,
    pub p2: i32,
    #[serde(default = "default_power")]
    pub power: i32,
}

fn default_power() -> i32 {
    1
}

impl BundleSpec {
    pub fn new(p1: i32, p2: i32) -> Self {
        BundleSpec { p1, p2, power: 1 }
    }

    /// Effective exponents after raising to `power`.
    pub fn exponents(&self) -> (i64, i64) {
        (self.p1 as i64 * self.power as i64, self.p2 as i64 * self.power as i64)
    }

    /// Monodromy factor of the bundle (real and positive here).
    pub fn mu(&self, lambda: f64) -> f64 {
        let (q1, q2) = self.exponents();
        lambda.powi((q1 + q2) as i32)
    }

    /// Monodromy of the dual bundle; the deformation series lives there.
    pub fn mu_star(&self, lambda: f64) -> f64 {
        1.0 / self.mu(lambda)
    }
}

/// Rectangular grid over one fundamental annulus.
#[derive(Debug)]
pub struct FundamentalGrid {
    pub lambda: f64,
    /// ln(lambda), negative.
    pub ell: f64,
    pub dims: [usize; 4],
    strides: [usize; 4],
    pub h: [f64; 4],
    pub s: Vec<f64>,
    pub eta: Vec<f64>,
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
    /// 4th-order quadrature weights for the eta axis.
    pub eta_weights: Vec<f64>,
    /// Seam identification: for each node on the `s = 0` face, its flat
    /// index and the coordinates of the deck image at `s = 1`.
    seam: Vec<(usize, [f64; 4])>,
    corrupt_eta_stencil: bool,
}

impl FundamentalGrid {
    pub fn new(lambda: f64, dims: [usize; 4]) -> Result<FundamentalGrid> {
        HopfParams::diagonal(lambda).lambda()?;
        for (&n, name) in dims.iter().zip(["n_s", "n_eta", "n_xi1", "n_xi2"]) {
            if !(5..=128).contains(&n) {
                return Err(Error::Config(format!(
                    "{name} = {n} is out of the supported range 5..=128"
                )));
            }
        }
        for (&n, name) in dims[2..].iter().zip(["n_xi1", "n_xi2"]) {
            if n % 2 != 0 {
                return Err(Error::Config(format!(
                    "{name} = {n} must be even: continuing fields across the \
                     degeneracy curves pairs each angle pencil with its antipode"
                )));
            }
        }
        let total: usize = dims.iter().product();
        if total > 1 << 24 {
            return Err(Error::Config(format!(
                "grid with {total} nodes exceeds the supported size"
            )));
        }
        let h = [
            1.0 / dims[0] as f64,
            FRAC_PI_2 / dims[1] as f64,
            TAU / dims[2] as f64,
            TAU / dims[3] as f64,
        ];
        let s: Vec<f64> = (0..dims[0]).map(|i| i as f64 * h[0]).collect();
        // Staggered midpoints keep eta = 0 and eta = pi/2 off-grid.
        let eta: Vec<f64> = (0..dims[1]).map(|j| (j as f64 + 0.5) * h[1]).collect();
        let xi1: Vec<f64> = (0..dims[2]).map(|k| k as f64 * h[2]).collect();
        let xi2: Vec<f64> = (0..dims[3]).map(|l| l as f64 * h[3]).collect();
        let eta_weights = cell_quadrature_weights(&eta, 0.0, FRAC_PI_2);
        let strides = [dims[1] * dims[2] * dims[3], dims[2] * dims[3], dims[3], 1];
        let mut seam = Vec::with_capacity(strides[0]);
        for rest in 0..strides[0] {
            let j = (rest / strides[1]) % dims[1];
            let k = (rest / strides[2]) % dims[2];
            let l = rest % dims[3];
            seam.push((rest, [1.0, eta[j], xi1[k], xi2[l]]));
        }
        Ok(FundamentalGrid {
            lambda,
            ell: lambda.ln(),
            dims,
            strides,
            h,
            s,
            eta,
            xi1,
            xi2,
            eta_weights,
            seam,
            corrupt_eta_stencil: false,
        })
    }

    /// Seam identification pairs: the flat index of each `s = 0` node and
    /// the chart coordinates of its deck image at `s = 1`. A section with
    /// seam factor `nu` satisfies `u(image) = nu * u(node)`.
    pub fn seam_nodes(&self) -> &[(usize, [f64; 4])] {
        &self.seam
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn strides(&self) -> [usize; 4] {
        self.strides
    }

    #[inline]
    pub fn flat(&self, m: [usize; 4]) -> usize {
        m[0] * self.strides[0] + m[1] * self.strides[1] + m[2] * self.strides[2] + m[3]
    }

    #[inline]
    pub fn multi(&self, flat: usize) -> [usize; 4] {
        [
            flat / self.strides[0],
            (flat / self.strides[1]) % self.dims[1],
            (flat / self.strides[2]) % self.dims[2],
            flat % self.dims[3],
        ]
    }

    #[inline]
    pub fn coords(&self, flat: usize) -> [f64; 4] {
        let m = self.multi(flat);
        [self.s[m[0]], self.eta[m[1]], self.xi1[m[2]], self.xi2[m[3]]]
    }

    /// Ambient point `(Re z1, Im z1, Re z2, Im z2)` for chart coordinates.
    pub fn ambient_at(&self, q: [f64; 4]) -> Vector4<f64> {
        let r = self.lambda.powf(q[0]);
        let (se, ce) = q[1].sin_cos();
        let (s1, c1) = q[2].sin_cos();
        let (s2, c2) = q[3].sin_cos();
        Vector4::new(r * ce * c1, r * ce * s1, r * se * c2, r * se * s2)
    }

    pub fn ambient(&self, flat: usize) -> Vector4<f64> {
        self.ambient_at(self.coords(flat))
    }

    /// Chart Jacobian `A = d(ambient)/d(s, eta, xi1, xi2)` (columns are the
    /// ambient components of the coordinate frame vectors).
    pub fn chart_jacobian(&self, q: [f64; 4]) -> Matrix4<f64> {
        let r = self.lambda.powf(q[0]);
        let l = self.ell;
        let (se, ce) = q[1].sin_cos();
        let (s1, c1) = q[2].sin_cos();
        let (s2, c2) = q[3].sin_cos();
        Matrix4::new(
            l * r * ce * c1, -r * se * c1, -r * ce * s1, 0.0,
            l * r * ce * s1, -r * se * s1, r * ce * c1, 0.0,
            l * r * se * c2, r * ce * c2, 0.0, -r * se * s2,
            l * r * se * s2, r * ce * s2, 0.0, r * se * c2,
        )
    }

    /// Analytic inverse of [`Self::chart_jacobian`] (rows are the coordinate
    /// differentials in ambient components). Unbounded as `eta` approaches a
    /// pole; only grid-interior evaluations are meaningful.
    pub fn chart_jacobian_inv(&self, q: [f64; 4]) -> Matrix4<f64> {
        let r = self.lambda.powf(q[0]);
        let l = self.ell;
        let (se, ce) = q[1].sin_cos();
        let (s1, c1) = q[2].sin_cos();
        let (s2, c2) = q[3].sin_cos();
        Matrix4::new(
            ce * c1 / (l * r), ce * s1 / (l * r), se * c2 / (l * r), se * s2 / (l * r),
            -se * c1 / r, -se * s1 / r, ce * c2 / r, ce * s2 / r,
            -s1 / (r * ce), c1 / (r * ce), 0.0, 0.0,
            0.0, 0.0, -s2 / (r * se), c2 / (r * se),
        )
    }

    /// 1-D derivative operator along `axis`. For the compact `s` axis the
    /// seam rule `u(s + 1) = factor * u(s)` is baked into the wrap taps; the
    /// angle axes are always plain periodic and `eta` is bounded.
    pub fn derivative_op(&self, axis: Axis, factor: f64) -> Op1D {
        match axis {
            Axis::S => Op1D::twisted_periodic_derivative(self.dims[0], self.h[0], factor),
            Axis::Eta => {
                let mut op = Op1D::bounded_derivative(&self.eta);
                if self.corrupt_eta_stencil {
                    op.corrupt();
                }
                op
            }
            Axis::Xi1 => Op1D::twisted_periodic_derivative(self.dims[2], self.h[2], 1.0),
            Axis::Xi2 => Op1D::twisted_periodic_derivative(self.dims[3], self.h[3], 1.0),
        }
    }

    /// The three-part eta derivative that treats both ends as coordinate
    /// degeneracies rather than boundaries: `d0` holds the in-range taps of
    /// interior-quality centered rows, `lo`/`hi` hold the fold-back taps
    /// that must be fed the half-period-shifted `xi2`/`xi1` pencils.
    /// Componentwise valid for functions of the manifold point (bundle
    /// scalars, ambient-frame components); chart-frame components pick up
    /// index signs under the fold and must not use it.
    pub fn eta_polar_ops(&self) -> (Op1D, Op1D, Op1D) {
        let (mut d0, lo, hi) = Op1D::polar_derivative_parts(self.dims[1], self.h[1]);
        if self.corrupt_eta_stencil {
            d0.corrupt();
        }
        (d0, lo, hi)
    }

    /// Coordinate-measure weight of one node (no metric factor).
    #[inline]
    pub fn coord_weight(&self, flat: usize) -> f64 {
        let j = (flat / self.strides[1]) % self.dims[1];
        self.h[0] * self.h[2] * self.h[3] * self.eta_weights[j]
    }

    /// Weights for one-sided extrapolation of an eta pencil to `eta_target`
    /// (0 or pi/2); returns the node window and the Lagrange weights.
    pub fn eta_extrapolation(&self, eta_target: f64) -> (std::ops::Range<usize>, Vec<f64>) {
        let n = self.dims[1];
        let window = if eta_target < FRAC_PI_2 * 0.5 { 0..4 } else { n - 4..n };
        let w = lagrange_weights(eta_target, &self.eta[window.clone()]);
        (window, w)
    }

    /// Enable the deliberate stencil fault used by the self-check suite.
    pub fn inject_stencil_fault(&mut self) {
        self.corrupt_eta_stencil = true;
    }

    pub fn fault_injected(&self) -> bool {
        self.corrupt_eta_stencil
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> FundamentalGrid {
        FundamentalGrid::new(0.5, [8, 9, 8, 8]).unwrap()
    }

    #[test]
    fn rejects_unequal_factors_with_clear_message() {
        let err = HopfParams { a1: 0.5, a2: 0.4 }.lambda().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("a1 = 0.5"), "{msg}");
        assert!(msg.contains("diagonal"), "{msg}");
    }

    #[test]
    fn bundle_monodromy_matches_hand_values() {
        let b = BundleSpec::new(-1, 0);
        assert_relative_eq!(b.mu(0.5), 2.0);
        assert_relative_eq!(b.mu_star(0.5), 0.5);
        let b2 = BundleSpec { p1: -1, p2: -1, power: 1 };
        assert_relative_eq!(b2.mu(0.5), 4.0);
    }

    #[test]
    fn flat_and_multi_roundtrip() {
        let g = grid();
        for flat in [0, 1, 17, g.len() - 1] {
            assert_eq!(g.flat(g.multi(flat)), flat);
        }
    }

    #[test]
    fn deck_transformation_scales_ambient_points() {
        let g = grid();
        let q = [0.3, 0.7, 1.1, 2.9];
        let q2 = [1.3, 0.7, 1.1, 2.9];
        let z = g.ambient_at(q);
        let z2 = g.ambient_at(q2);
        for i in 0..4 {
            assert_relative_eq!(z2[i], 0.5 * z[i], max_relative = 1e-13);
        }
    }

    #[test]
    fn chart_jacobian_inverse_is_exact() {
        let g = grid();
        for flat in [3, 101, 2047] {
            let q = g.coords(flat);
            let a = g.chart_jacobian(q);
            let ainv = g.chart_jacobian_inv(q);
            let id = a * ainv;
            let err = (id - Matrix4::identity()).norm();
            assert!(err < 1e-12, "A A^-1 deviates by {err}");
        }
    }

    #[test]
    fn chart_jacobian_matches_finite_differences() {
        let g = grid();
        let q = [0.4, 0.8, 2.0, 0.9];
        let a = g.chart_jacobian(q);
        let eps = 1e-6;
        for c in 0..4 {
            let mut qp = q;
            let mut qm = q;
            qp[c] += eps;
            qm[c] -= eps;
            let col = (g.ambient_at(qp) - g.ambient_at(qm)) / (2.0 * eps);
            for r in 0..4 {
                assert_relative_eq!(a[(r, c)], col[r], epsilon = 1e-8, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn eta_extrapolation_recovers_pole_values() {
        let g = grid();
        // f(eta) = cos(eta)^2 has value 1 at eta = 0 and 0 at eta = pi/2.
        let f: Vec<f64> = g.eta.iter().map(|e| e.cos().powi(2)).collect();
        let (win0, w0) = g.eta_extrapolation(0.0);
        let v0: f64 = win0.clone().zip(&w0).map(|(j, &c)| c * f[j]).sum();
        assert_relative_eq!(v0, 1.0, epsilon = 5e-3);
        let (win1, w1) = g.eta_extrapolation(FRAC_PI_2);
        let v1: f64 = win1.clone().zip(&w1).map(|(j, &c)| c * f[j]).sum();
        assert!(v1.abs() < 5e-3, "pole value {v1}");
    }

    #[test]
    fn coordinate_volume_matches_closed_form() {
        // total coordinate measure with the sin*cos density:
        // 1 * (1/2) * (2 pi)^2.
        let g = grid();
        let mut total = 0.0;
        for flat in 0..g.len() {
            let q = g.coords(flat);
            total += g.coord_weight(flat) * q[1].sin() * q[1].cos();
        }
        assert_relative_eq!(total, 0.5 * TAU * TAU, max_relative = 2e-4);
    }
}
