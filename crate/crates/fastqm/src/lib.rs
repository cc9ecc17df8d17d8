//! Quadratic-manifold approximation of high-dimensional snapshot data.
//!
//! A state trajectory `s(t) ∈ R^N` is approximated as
//!
//! ```text
//! s(t) ≈ s̄ + V_r ŝ(t) + V_q Ξ (ŝ(t) ⊗ ŝ(t))
//! ```
//!
//! where `ŝ = V_rᵀ(s − s̄)` are the reduced coordinates and the Kronecker
//! square is compressed to its `r(r+1)/2` unique entries. The crate provides
//! four ways of constructing the bases `V_r`, `V_q` and the coefficient
//! matrix `Ξ`:
//!
//! * plain POD (no quadratic term),
//! * POD-based quadratic manifolds (leading singular vectors, `Ξ` by
//!   regularized least squares),
//! * greedy quadratic manifolds (non-sequential singular-vector selection),
//! * Riemannian quadratic manifolds: both bases are rotated inside the span
//!   of `m` candidate singular vectors by minimizing the reconstruction
//!   error over the Stiefel manifold `St(m, r+q)`.
//!
//! The Riemannian route works entirely in the `m`-dimensional feature space,
//! so its cost is independent of the full state dimension `N`. All four
//! methods are exposed behind the [`strategy::FitStrategy`] trait and can be
//! selected by name at runtime.

pub mod error;
pub mod eval;
pub mod io;
pub mod qmfit;
pub mod snapshots;
pub mod stiefel;
pub mod strategy;
pub mod synth;
pub mod tensorops;

pub use error::{Error, Result};
pub use qmfit::{Method, QuadraticManifoldModel};
pub use snapshots::{CandidateBasis, CenteringMode, SnapshotSet};
pub use stiefel::{FitReport, SolverConfig, StiefelPoint, Termination};
pub use strategy::{lookup, registry, FitOutcome, FitParams, FitStrategy};
