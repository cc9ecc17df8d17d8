//! Runtime-selectable fitting strategies.
//!
//! Every construction method implements [`FitStrategy`] behind a common
//! signature and is registered under the name used on the command line
//! (`pod`, `qm`, `greedy`, `riemannian`). Sweeps and the CLI select
//! strategies through [`lookup`].

use crate::error::Result;
use crate::qmfit::{
    fit_fastqm, fit_greedy, fit_pod, fit_pod_qm, GreedyTrace, QuadraticManifoldModel,
};
use crate::snapshots::CandidateBasis;
use crate::stiefel::{FitReport, SolverConfig};

/// Parameters shared by all fitting strategies. The solver settings are
/// only consulted by the Riemannian method.
#[derive(Debug, Clone)]
pub struct FitParams {
    pub r: usize,
    pub q: usize,
    pub gamma: f64,
    pub solver: SolverConfig,
}

/// A fitted model together with method-specific diagnostics.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: QuadraticManifoldModel,
    /// Optimizer history (Riemannian method only).
    pub report: Option<FitReport>,
    /// Selection record (greedy method only).
    pub trace: Option<GreedyTrace>,
}

/// A quadratic-manifold construction method selectable by name.
pub trait FitStrategy: Send + Sync {
    /// Registry key, also the CLI spelling.
    fn name(&self) -> &'static str;

    /// Whether the method fits a quadratic correction (`q` is meaningful).
    fn uses_quadratic(&self) -> bool {
        true
    }

    fn fit(&self, basis: &CandidateBasis, params: &FitParams) -> Result<FitOutcome>;
}

struct PodStrategy;

impl FitStrategy for PodStrategy {
    fn name(&self) -> &'static str {
        "pod"
    }

    fn uses_quadratic(&self) -> bool {
        false
    }

    fn fit(&self, basis: &CandidateBasis, params: &FitParams) -> Result<FitOutcome> {
        Ok(FitOutcome {
            model: fit_pod(basis, params.r)?,
            report: None,
            trace: None,
        })
    }
}

struct PodQmStrategy;

impl FitStrategy for PodQmStrategy {
    fn name(&self) -> &'static str {
        "qm"
    }

    fn fit(&self, basis: &CandidateBasis, params: &FitParams) -> Result<FitOutcome> {
        Ok(FitOutcome {
            model: fit_pod_qm(basis, params.r, params.q, params.gamma)?,
            report: None,
            trace: None,
        })
    }
}

struct GreedyStrategy;

impl FitStrategy for GreedyStrategy {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn fit(&self, basis: &CandidateBasis, params: &FitParams) -> Result<FitOutcome> {
        let (model, trace) = fit_greedy(basis, params.r, params.q, params.gamma)?;
        Ok(FitOutcome {
            model,
            report: None,
            trace: Some(trace),
        })
    }
}

struct RiemannianStrategy;

impl FitStrategy for RiemannianStrategy {
    fn name(&self) -> &'static str {
        "riemannian"
    }

    fn fit(&self, basis: &CandidateBasis, params: &FitParams) -> Result<FitOutcome> {
        let (model, report) = fit_fastqm(basis, params.r, params.q, params.gamma, &params.solver)?;
        Ok(FitOutcome {
            model,
            report: Some(report),
            trace: None,
        })
    }
}

static STRATEGIES: &[&dyn FitStrategy] = &[
    &PodStrategy,
    &PodQmStrategy,
    &GreedyStrategy,
    &RiemannianStrategy,
];

/// All registered strategies in a fixed order.
pub fn registry() -> &'static [&'static dyn FitStrategy] {
    STRATEGIES
}

/// Finds a strategy by its registry name.
pub fn lookup(name: &str) -> Option<&'static dyn FitStrategy> {
    STRATEGIES.iter().copied().find(|s| s.name() == name)
}
