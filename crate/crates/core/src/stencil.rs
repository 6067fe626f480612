//! One-dimensional finite-difference building blocks.
//!
//! Every derivative in the engine is a tensor product of the 1-D operators
//! defined here, so discrete exterior calculus identities (`d o d = 0`,
//! exact transposes for adjoints) reduce to properties of these operators.
//! All operators are 4th order accurate.

/// Weights of the `m`-th derivative at `x0` from samples at `xs`
/// (Fornberg's recurrence; `m = 0` gives interpolation weights).
pub fn fd_weights(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(n > m, "need more than {m} nodes for derivative order {m}");
    let mut c = vec![vec![0.0f64; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Interpolation weights at `x0` from samples at `xs`.
pub fn lagrange_weights(x0: f64, xs: &[f64]) -> Vec<f64> {
    fd_weights(x0, xs, 0)
}

/// A sparse 1-D linear operator stored by rows.
///
/// Twist factors for seam-crossing taps are baked into the coefficients, so
/// `transpose` is the exact adjoint with respect to the unweighted dot
/// product. That exactness is what the Hodge solver's adjoint relies on.
#[derive(Debug, Clone)]
pub struct Op1D {
    pub n: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl Op1D {
    /// 5-tap centered derivative on a uniform grid with step `h` and the
    /// multiplicative seam rule `u(i + n) = factor * u(i)`.
    pub fn twisted_periodic_derivative(n: usize, h: f64, factor: f64) -> Op1D {
        assert!(n >= 5, "periodic derivative needs at least 5 nodes");
        assert!(factor.is_finite() && factor > 0.0, "seam factor must be positive");
        let taps: [(isize, f64); 4] = [(-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)];
        let scale = 1.0 / (12.0 * h);
        let rows = (0..n as isize)
            .map(|i| {
                taps.iter()
                    .map(|&(t, c)| {
                        let j = i + t;
                        let (col, mult) = if j < 0 {
                            ((j + n as isize) as usize, 1.0 / factor)
                        } else if j >= n as isize {
                            ((j - n as isize) as usize, factor)
                        } else {
                            (j as usize, 1.0)
                        };
                        (col, c * scale * mult)
                    })
                    .collect()
            })
            .collect();
        Op1D { n, rows }
    }

    /// Centered derivative in the interior, one-sided 5-node rows at the
    /// boundary (no wrap; used for the polar-angle axis).
    pub fn bounded_derivative(nodes: &[f64]) -> Op1D {
        let n = nodes.len();
        assert!(n >= 5, "bounded derivative needs at least 5 nodes");
        let rows = (0..n)
            .map(|i| {
                let start = i.saturating_sub(2).min(n - 5);
                let w = fd_weights(nodes[i], &nodes[start..start + 5], 1);
                w.iter()
                    .enumerate()
                    .filter(|(_, &c)| c != 0.0)
                    .map(|(k, &c)| (start + k, c))
                    .collect()
            })
            .collect();
        Op1D { n, rows }
    }

    /// Three-part centered derivative for a polar-type axis on uniform
    /// staggered midpoints: both ends are coordinate degeneracies, not
    /// boundaries, so ghost taps fold back onto in-range nodes that live
    /// on the antipodal pencil of the paired angle. Returns
    /// `(d0, lo, hi)`; the full operator is `d0 + lo . S_low + hi . S_high`
    /// where `S_*` is the half-period shift of the matching angle axis.
    /// Every row is the same interior-quality centered 5-tap stencil;
    /// one-sided rows (and the layer errors their transposes feed into
    /// elliptic solves) never appear.
    pub fn polar_derivative_parts(n: usize, h: f64) -> (Op1D, Op1D, Op1D) {
        assert!(n >= 4, "polar derivative needs at least 4 nodes");
        let c = 1.0 / (12.0 * h);
        let taps: [(isize, f64); 4] = [(-2, c), (-1, -8.0 * c), (1, 8.0 * c), (2, -c)];
        let mut d0 = vec![Vec::new(); n];
        let mut lo = vec![Vec::new(); n];
        let mut hi = vec![Vec::new(); n];
        for row in 0..n as isize {
            for &(t, w) in &taps {
                let col = row + t;
                if col < 0 {
                    // Midpoint at -eta_{k} mirrors to eta_{k} (k = -col - 1).
                    lo[row as usize].push(((-col - 1) as usize, w));
                } else if col >= n as isize {
                    // Mirror across the top end.
                    hi[row as usize].push(((2 * n as isize - 1 - col) as usize, w));
                } else {
                    d0[row as usize].push((col as usize, w));
                }
            }
        }
        (Op1D { n, rows: d0 }, Op1D { n, rows: lo }, Op1D { n, rows: hi })
    }

    /// Exact transpose.
    pub fn transpose(&self) -> Op1D {
        let mut rows = vec![Vec::new(); self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, c) in row {
                rows[j].push((i, c));
            }
        }
        Op1D { n: self.n, rows }
    }

    /// Apply to a scalar pencil (mainly for tests; field code gathers
    /// directly from the row table).
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n);
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, c)| c * u[j]).sum())
            .collect()
    }

    /// Perturb one interior coefficient. Fault-injection hook used by the
    /// self-check suite to prove the invariant tests can fail.
    pub fn corrupt(&mut self) {
        let i = self.n / 2;
        if let Some(entry) = self.rows[i].first_mut() {
            entry.1 *= 1.0 + 1e-3;
        }
    }
}

/// Composite quadrature weights for midpoint-sampled nodes on `[a, b]`:
/// each inter-edge cell is integrated by the cubic interpolant through the
/// 4 nearest nodes (4th order overall; plain midpoint would cap refinement
/// studies at 2nd order).
pub fn cell_quadrature_weights(nodes: &[f64], a: f64, b: f64) -> Vec<f64> {
    let n = nodes.len();
    assert!(n >= 4, "cell quadrature needs at least 4 nodes");
    // 3-point Gauss-Legendre on [-1, 1]; exact for the cubic interpolant.
    let gauss: [(f64, f64); 3] = {
        let x = (0.6f64).sqrt();
        [(-x, 5.0 / 9.0), (0.0, 8.0 / 9.0), (x, 5.0 / 9.0)]
    };
    let mut w = vec![0.0f64; n];
    let cell = (b - a) / n as f64;
    for k in 0..n {
        let x0 = a + cell * k as f64;
        let start = k.saturating_sub(1).min(n - 4);
        let window = &nodes[start..start + 4];
        for &(g, gw) in &gauss {
            let xg = x0 + 0.5 * cell * (g + 1.0);
            let lw = lagrange_weights(xg, window);
            for (i, &c) in lw.iter().enumerate() {
                w[start + i] += 0.5 * cell * gw * c;
            }
        }
    }
    w
}
