//! Spectral-Galerkin simulation of the two-dimensional Kawahara equation
//!
//! ```text
//! u_t + (alpha + u) u_x + u_xxx + u_xyy - u_xxxxx = 0
//! ```
//!
//! on the half-strip `{x > 0, 0 < y < L}` with homogeneous boundary data.
//! The field is expanded in the Dirichlet sine eigenfunctions of `(0, L)`,
//! which turns the problem into `N` coupled fifth-order equations for the
//! modal profiles `g_j(x, t)`. Those are discretized on a truncated uniform
//! x-grid with summation-by-parts operators and advanced with an IMEX
//! Crank-Nicolson / Adams-Bashforth scheme.
//!
//! The [`diagnostics`] module tracks the energy balance through the left
//! boundary, weighted `e^{kx}` norms, the Lyapunov functional and the
//! exponential decay bound, and issues decay certificates.

pub mod banded;
pub mod basis;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod initdata;
pub mod oracle;

pub use basis::TransverseBasis;
pub use config::{derive_params, DerivedParams, RunConfig, SolverConfig};
pub use diagnostics::{DecayCertificate, EnergyLedger, LedgerRecord};
pub use dynamics::{ModeField, Simulation};
pub use error::{Error, Result};
pub use grid::{DerivativeOperators, HalfLineGrid};
