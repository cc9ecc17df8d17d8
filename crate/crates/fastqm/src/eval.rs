//! Reconstruction metrics and parameter sweeps.
//!
//! The principal accuracy measure is the relative state error
//! `‖S_test − S_approx‖_F / ‖S_test‖_F` on centered snapshot matrices.
//! Sweeps fit every requested method over a parameter grid and record one
//! row per grid point; infeasible combinations (`r + q > m`) are flagged
//! rather than skipped.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qmfit::{training_relative_error, Method, QuadraticManifoldModel};
use crate::snapshots::{CandidateBasis, SnapshotSet};
use crate::stiefel::SolverConfig;
use crate::strategy::{FitParams, FitStrategy};

/// Accuracy of one model on one test set.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    /// `‖S_test − S_approx‖_F / ‖S_test‖_F` on centered data.
    pub relative_frobenius: f64,
    /// Per-snapshot error norms `‖column error‖₂`.
    pub per_snapshot_l2: Vec<f64>,
    /// Per-snapshot error norms divided by the per-snapshot data norm
    /// (NaN where a test column has zero norm).
    pub per_snapshot_l2_normalized: Vec<f64>,
    pub method: Method,
    /// `(r, q, m, gamma)` of the producing fit; `m = 0` when unknown.
    pub params: (usize, usize, usize, f64),
}

/// Reconstructs every test snapshot through the model:
/// `column k = decode(encode(raw column k))`, in raw (uncentered) space.
pub fn reconstruct_set(
    model: &QuadraticManifoldModel,
    s_test: &SnapshotSet,
) -> Result<DMatrix<f64>> {
    if s_test.state_dim() != model.state_dim() {
        return Err(Error::invalid(format!(
            "test state dimension {} != model dimension {}",
            s_test.state_dim(),
            model.state_dim()
        )));
    }
    let mut out = DMatrix::zeros(s_test.state_dim(), s_test.len());
    for k in 0..s_test.len() {
        let raw = s_test.raw_column(k);
        let decoded = model.decode(&model.encode(&raw)?)?;
        out.set_column(k, &decoded);
    }
    Ok(out)
}

/// Relative Frobenius error `‖S_test − S_approx‖_F / ‖S_test‖_F`.
pub fn relative_error(s_test: &DMatrix<f64>, s_approx: &DMatrix<f64>) -> Result<f64> {
    if s_test.shape() != s_approx.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: test {:?} vs approximation {:?}",
            s_test.shape(),
            s_approx.shape()
        )));
    }
    let denom = s_test.norm();
    if denom == 0.0 {
        return Err(Error::invalid("test data has zero norm"));
    }
    Ok((s_test - s_approx).norm() / denom)
}

/// Evaluates a model on a test set centered by the model's reference.
pub fn evaluate(
    model: &QuadraticManifoldModel,
    s_test: &SnapshotSet,
) -> Result<ErrorReport> {
    let ref_diff = (s_test.reference() - model.reference()).norm();
    if ref_diff > 1e-8 * (1.0 + model.reference().norm()) {
        return Err(Error::invalid(
            "test set is centered by a different reference than the model",
        ));
    }
    let approx_raw = reconstruct_set(model, s_test)?;
    // compare in centered coordinates
    let mut approx_centered = approx_raw;
    for mut col in approx_centered.column_iter_mut() {
        col -= model.reference();
    }
    let rel = relative_error(s_test.data(), &approx_centered)?;
    let mut per = Vec::with_capacity(s_test.len());
    let mut per_norm = Vec::with_capacity(s_test.len());
    for k in 0..s_test.len() {
        let e = (s_test.data().column(k) - approx_centered.column(k)).norm();
        let d = s_test.data().column(k).norm();
        per.push(e);
        per_norm.push(if d > 0.0 { e / d } else { f64::NAN });
    }
    Ok(ErrorReport {
        relative_frobenius: rel,
        per_snapshot_l2: per,
        per_snapshot_l2_normalized: per_norm,
        method: model.method(),
        params: (
            model.reduced_dim(),
            model.quadratic_dim(),
            0,
            model.gamma(),
        ),
    })
}

/// Feasibility outcome of one sweep cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PointStatus {
    Ok,
    /// The parameter combination violates a dimension constraint.
    Infeasible(String),
    /// The fit itself failed (numerical error).
    Failed(String),
}

/// One evaluated sweep cell.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub r: usize,
    pub q: usize,
    pub m: usize,
    pub gamma: f64,
    pub method: String,
    pub status: PointStatus,
    pub test_error: Option<f64>,
    pub train_error: Option<f64>,
}

/// Cartesian parameter grid; every axis must be nonempty.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub r: Vec<usize>,
    pub q: Vec<usize>,
    pub m: Vec<usize>,
    pub gamma: Vec<f64>,
}

impl SweepGrid {
    fn validate(&self, basis_m: usize) -> Result<()> {
        if self.r.is_empty() || self.q.is_empty() || self.m.is_empty() || self.gamma.is_empty() {
            return Err(Error::invalid("every sweep axis needs at least one value"));
        }
        if let Some(&m) = self.m.iter().find(|&&m| m == 0 || m > basis_m) {
            return Err(Error::invalid(format!(
                "grid value m = {m} outside the stored candidate basis (m ≤ {basis_m})"
            )));
        }
        if let Some(&g) = self.gamma.iter().find(|&&g| g < 0.0) {
            return Err(Error::invalid(format!("grid value gamma = {g} is negative")));
        }
        Ok(())
    }

    fn points(&self) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::new();
        for &m in &self.m {
            for &r in &self.r {
                for &q in &self.q {
                    for &g in &self.gamma {
                        out.push((r, q, m, g));
                    }
                }
            }
        }
        out
    }
}

fn feasibility(strategy: &dyn FitStrategy, r: usize, q: usize, m: usize) -> Option<String> {
    if r == 0 {
        return Some("r must be at least 1".to_string());
    }
    if !strategy.uses_quadratic() {
        if r > m {
            return Some(format!("r = {r} exceeds m = {m}"));
        }
        return None;
    }
    if q == 0 {
        return Some("q must be at least 1 for quadratic methods".to_string());
    }
    if r + q > m {
        return Some(format!("r + q = {} exceeds m = {m}", r + q));
    }
    None
}

/// Runs every strategy at every grid point against the test set.
///
/// Rows are ordered by grid position (m, r, q, gamma) and then by method,
/// independent of the parallel execution order. Training errors come from
/// the feature-space residual of the fitted model; test errors from the
/// full-space reconstruction.
pub fn sweep(
    basis: &CandidateBasis,
    s_test: &SnapshotSet,
    grid: &SweepGrid,
    methods: &[&dyn FitStrategy],
    solver: &SolverConfig,
) -> Result<Vec<SweepRow>> {
    grid.validate(basis.m())?;
    if methods.is_empty() {
        return Err(Error::invalid("no methods selected for the sweep"));
    }
    let points = grid.points();
    let mut cells: Vec<(usize, usize, usize, f64, &dyn FitStrategy)> = Vec::new();
    for &(r, q, m, g) in &points {
        for &strategy in methods {
            cells.push((r, q, m, g, strategy));
        }
    }
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(r, q, m, gamma, strategy)| {
            if let Some(reason) = feasibility(strategy, r, q, m) {
                return SweepRow {
                    r,
                    q,
                    m,
                    gamma,
                    method: strategy.name().to_string(),
                    status: PointStatus::Infeasible(reason),
                    test_error: None,
                    train_error: None,
                };
            }
            let run = || -> Result<(f64, f64)> {
                let sub = basis.truncated(m)?;
                let params = FitParams {
                    r,
                    q,
                    gamma,
                    solver: solver.clone(),
                };
                let outcome = strategy.fit(&sub, &params)?;
                let train = training_relative_error(&outcome.model, &sub)?;
                let test = evaluate(&outcome.model, s_test)?.relative_frobenius;
                Ok((train, test))
            };
            match run() {
                Ok((train, test)) => SweepRow {
                    r,
                    q,
                    m,
                    gamma,
                    method: strategy.name().to_string(),
                    status: PointStatus::Ok,
                    test_error: Some(test),
                    train_error: Some(train),
                },
                Err(e) => SweepRow {
                    r,
                    q,
                    m,
                    gamma,
                    method: strategy.name().to_string(),
                    status: PointStatus::Failed(e.to_string()),
                    test_error: None,
                    train_error: None,
                },
            }
        })
        .collect();
    Ok(rows)
}
