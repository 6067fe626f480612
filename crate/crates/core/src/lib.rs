//! Numerical engine for bi-Hermitian structures on diagonal Hopf surfaces.
//!
//! The library builds pairs of integrable complex structures sharing an
//! orientation-compatible Riemannian metric on the compact quotient
//! `(C^2 \ 0) / (z -> lambda z)` with `0 < lambda < 1`. Two independent
//! pipelines produce the candidate structures:
//!
//! * a power-series deformation of a locally conformally Kahler metric,
//!   driven by a holomorphic Poisson bivector and a twisted Hodge solve
//!   per order ([`deform`], [`hodge`]);
//! * a Hamiltonian flow applied to a potential-generated twisted Kahler
//!   form ([`flow`]).
//!
//! Both pipelines feed one verification harness ([`verify`], [`report`])
//! that checks the defining algebraic identity, integrability of the second
//! complex structure, closedness conditions, and metric positivity, then
//! renders a machine-readable verdict.
//!
//! # Conventions
//!
//! All tensors are stored against the real chart frame
//! `(d/ds, d/deta, d/dxi1, d/dxi2)` of the log-polar chart
//! `z1 = lambda^s cos(eta) e^{i xi1}`, `z2 = lambda^s sin(eta) e^{i xi2}`.
//!
//! * A 2-form `w` is stored as its "map matrix" `M : T -> T*`, i.e.
//!   `w(X, Y) = Y^T M X`; antisymmetry reads `M^T = -M` and the bilinear
//!   component table is `w(e_mu, e_nu) = M[(nu, mu)]`.
//! * A bivector `Q` is stored as a map `T* -> T` (again antisymmetric), so
//!   `Q w : T -> T` is the plain matrix product `M_Q M_w`.
//! * An almost complex structure is a map `J : T -> T` with `J^2 = -Id`;
//!   its action on covectors is `J* a = -a(J .)`, with matrix `-J^T`.
//! * A metric is stored as the symmetric matrix `G` of `g(X, Y) = Y^T G X`.
//! * Fields over the quotient are stored on one fundamental annulus
//!   `s in [0, 1)` as componentwise arrays `u` with the multiplicative seam
//!   rule `u(s + 1, .) = factor * u(s, .)`; `factor = 1` is a true periodic
//!   field, other factors represent sections of flat line bundles.

pub mod config;
pub mod deform;
pub mod dolbeault;
pub mod field;
pub mod flow;
pub mod grid;
pub mod hodge;
pub mod hopf;
pub mod io;
pub mod plot;
pub mod pointwise;
pub mod report;
pub mod stencil;
pub mod verify;

use thiserror::Error;

/// Unified error type for the whole engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or unsupported parameter combination.
    #[error("config error: {0}")]
    Config(String),

    /// An iterative solver failed to reach its tolerance.
    #[error("solver failure: {0}")]
    Solver(String),

    /// A pointwise algebraic precondition failed (degenerate input, loss of
    /// positivity, non-convergent fixed point, ...).
    #[error("numerical failure: {0}")]
    Numerics(String),

    /// I/O or serialization problem.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// JSON encode/decode problem.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line driver.
    ///
    /// 0 = valid, 2 = verification failed, 3 = config error, 4 = solver or
    /// numerical failure. I/O problems map to the generic failure code 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 3,
            Error::Solver(_) | Error::Numerics(_) => 4,
            Error::Io(_) | Error::Json(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Initialize the global rayon thread pool from the `BIHOPF_THREADS`
/// environment variable (defaults to 1 for reproducible single-core runs).
///
/// Safe to call more than once; only the first call takes effect.
pub fn init_threads() -> usize {
    let n = std::env::var("BIHOPF_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1);
    // Ignore the error if a pool already exists (tests may call this twice).
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    n
}
