//! Stiefel-manifold geometry and a Riemannian conjugate-gradient minimizer.
//!
//! Points are `m × p` matrices with orthonormal columns, `St(m, p)`, carrying
//! a `(r, q)` column split: the leading `r` columns rotate the linear basis,
//! the trailing `q` columns the quadratic one. The geometry uses the metric
//! inherited from `R^{m×p}`:
//!
//! * tangent projection `Z = G − Q sym(Qᵀ G)`,
//! * QR retraction with the R-diagonal forced positive,
//! * vector transport by tangent projection at the new point.
//!
//! The minimizer is Polak–Ribière-plus conjugate gradient with Armijo
//! backtracking, restarted periodically and whenever the search direction
//! stops being a descent direction.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A point on `St(m, p)` with its `(r, q)` column split, `p = r + q`.
#[derive(Debug, Clone)]
pub struct StiefelPoint {
    q: DMatrix<f64>,
    split_r: usize,
    split_q: usize,
}

impl StiefelPoint {
    /// Wraps an orthonormal frame. Fails if the columns are not orthonormal
    /// (`‖QᵀQ − I‖_F > 1e−10 √p`) or the split does not match the shape.
    pub fn new(q: DMatrix<f64>, split_r: usize, split_q: usize) -> Result<Self> {
        let (m, p) = q.shape();
        if split_r + split_q != p {
            return Err(Error::invalid(format!(
                "split ({split_r}, {split_q}) does not sum to the column count {p}"
            )));
        }
        if split_r == 0 {
            return Err(Error::invalid("the linear block of the split must be nonempty"));
        }
        if p > m {
            return Err(Error::invalid(format!(
                "St(m, p) requires p <= m, got m = {m}, p = {p}"
            )));
        }
        let defect = orthonormality_defect(&q);
        if defect > 1e-10 * (p as f64).sqrt() {
            return Err(Error::invalid(format!(
                "columns are not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(StiefelPoint {
            q,
            split_r,
            split_q,
        })
    }

    /// The canonical starting frame `[I_p; 0]`: columns select the leading
    /// `p = r + q` candidate modes, so iteration zero of any descent method
    /// coincides with the POD-based quadratic manifold.
    pub fn leading(m: usize, split_r: usize, split_q: usize) -> Result<Self> {
        let p = split_r + split_q;
        if p > m || split_r == 0 {
            return Err(Error::invalid(format!(
                "invalid leading frame: m = {m}, r = {split_r}, q = {split_q}"
            )));
        }
        let mut q = DMatrix::zeros(m, p);
        for j in 0..p {
            q[(j, j)] = 1.0;
        }
        Ok(StiefelPoint {
            q,
            split_r,
            split_q,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Leading `r` columns (linear-basis rotation `Q_r`).
    pub fn q_r(&self) -> DMatrix<f64> {
        self.q.columns(0, self.split_r).into_owned()
    }

    /// Trailing `q` columns (quadratic-basis rotation `Q_q`).
    pub fn q_q(&self) -> DMatrix<f64> {
        self.q.columns(self.split_r, self.split_q).into_owned()
    }

    pub fn split(&self) -> (usize, usize) {
        (self.split_r, self.split_q)
    }

    pub fn rows(&self) -> usize {
        self.q.nrows()
    }

    pub fn cols(&self) -> usize {
        self.q.ncols()
    }

    /// `‖QᵀQ − I‖_F`.
    pub fn feasibility_defect(&self) -> f64 {
        orthonormality_defect(&self.q)
    }
}

fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let p = q.ncols();
    (q.transpose() * q - DMatrix::identity(p, p)).norm()
}

/// A tangent direction `Z` at some Stiefel point (`sym(Qᵀ Z) = 0`).
#[derive(Debug, Clone)]
pub struct TangentVector {
    z: DMatrix<f64>,
}

impl TangentVector {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn norm(&self) -> f64 {
        self.z.norm()
    }

    pub fn inner(&self, other: &TangentVector) -> f64 {
        self.z.dot(&other.z)
    }
}

/// Projects an ambient matrix onto the tangent space at `x`:
/// `Z = G − Q sym(Qᵀ G)` with `sym(A) = (A + Aᵀ)/2`.
pub fn project_tangent(x: &StiefelPoint, g: &DMatrix<f64>) -> Result<TangentVector> {
    if g.shape() != x.q.shape() {
        return Err(Error::invalid(format!(
            "gradient shape {:?} does not match point shape {:?}",
            g.shape(),
            x.q.shape()
        )));
    }
    let qtg = x.q.transpose() * g;
    let sym = (&qtg + qtg.transpose()) * 0.5;
    Ok(TangentVector {
        z: g - &x.q * sym,
    })
}

/// QR retraction: the Q-factor of `X + step·Z`, with the diagonal of R made
/// positive so the result is deterministic. Fails on rank deficiency.
pub fn retract(x: &StiefelPoint, z: &TangentVector, step: f64) -> Result<StiefelPoint> {
    if z.z.shape() != x.q.shape() {
        return Err(Error::invalid("tangent vector shape mismatch"));
    }
    let y = &x.q + &z.z * step;
    let qr = y.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        if d == 0.0 || !d.is_finite() {
            return Err(Error::numerical(
                "rank-deficient retraction; reduce the step size",
            ));
        }
        if d < 0.0 {
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(StiefelPoint {
        q,
        split_r: x.split_r,
        split_q: x.split_q,
    })
}

/// Transports a tangent vector to the tangent space at `x_new` by projection.
pub fn transport(x_new: &StiefelPoint, z_old: &TangentVector) -> Result<TangentVector> {
    project_tangent(x_new, &z_old.z)
}

/// Backtracking line-search parameters (Armijo sufficient decrease).
#[derive(Debug, Clone)]
pub struct LineSearchConfig {
    /// Nominal first trial step, rescaled by `1/(1 + ‖grad‖)` each iteration.
    pub initial_step: f64,
    /// Sufficient-decrease slope constant in (0, 1).
    pub armijo_c: f64,
    /// Step shrink factor in (0, 1).
    pub backtrack: f64,
    /// Trials before the search gives up.
    pub max_backtracks: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            initial_step: 1.0,
            armijo_c: 1e-4,
            backtrack: 0.5,
            max_backtracks: 30,
        }
    }
}

/// Stopping rule and line-search settings for [`minimize`].
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Stop when the Riemannian gradient norm falls below this value.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub line_search: LineSearchConfig,
    /// Forced steepest-descent restart period of the CG direction.
    pub cg_restart_period: usize,
    /// Reserved for randomized restarts; the default initialization is
    /// deterministic and ignores it.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grad_tol: 2e-4,
            max_iters: 500,
            line_search: LineSearchConfig::default(),
            cg_restart_period: 100,
            seed: 0,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.grad_tol <= 0.0 {
            return Err(Error::invalid("grad_tol must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        let ls = &self.line_search;
        if !(ls.backtrack > 0.0 && ls.backtrack < 1.0) {
            return Err(Error::invalid("backtracking factor must lie in (0, 1)"));
        }
        if !(ls.armijo_c > 0.0 && ls.armijo_c < 1.0) {
            return Err(Error::invalid("Armijo constant must lie in (0, 1)"));
        }
        if ls.initial_step <= 0.0 {
            return Err(Error::invalid("initial step must be positive"));
        }
        Ok(())
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Riemannian gradient norm reached `grad_tol`.
    GradTol,
    /// Iteration budget exhausted.
    MaxIters,
    /// No Armijo step found within `max_backtracks` trials.
    LineSearchFailure,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::GradTol => "grad_tol",
            Termination::MaxIters => "max_iters",
            Termination::LineSearchFailure => "line_search_failure",
        }
    }
}

/// Per-run diagnostics of [`minimize`].
#[derive(Debug, Clone)]
pub struct FitReport {
    /// Number of accepted steps.
    pub iterations: usize,
    /// Cost at each iterate, normalized by `|initial cost|` so runs of very
    /// different magnitude share a stopping scale.
    pub cost_history: Vec<f64>,
    /// Riemannian gradient norm at each iterate.
    pub grad_norm_history: Vec<f64>,
    /// Elapsed seconds.
    pub wall_time: f64,
    pub termination: Termination,
    /// Largest `‖QᵀQ − I‖_F` observed over all iterates.
    pub max_feasibility_defect: f64,
}

/// Minimizes a smooth cost over the Stiefel manifold by Riemannian
/// conjugate gradient.
///
/// `cost_and_grad` returns the cost and its Euclidean gradient at a feasible
/// point; the Riemannian gradient is obtained by tangent projection. The
/// search direction uses the Polak–Ribière-plus coefficient (clipped at
/// zero) with projection transport, reset to steepest descent every
/// `cg_restart_period` iterations and whenever it fails the descent test.
/// Steps are accepted under the Armijo condition along the QR retraction.
pub fn minimize<F>(
    mut cost_and_grad: F,
    x0: StiefelPoint,
    cfg: &SolverConfig,
) -> Result<(StiefelPoint, FitReport)>
where
    F: FnMut(&StiefelPoint) -> Result<(f64, DMatrix<f64>)>,
{
    cfg.validate()?;
    let start = Instant::now();

    let mut report = FitReport {
        iterations: 0,
        cost_history: Vec::new(),
        grad_norm_history: Vec::new(),
        wall_time: 0.0,
        termination: Termination::MaxIters,
        max_feasibility_defect: x0.feasibility_defect(),
    };

    let (mut cost, grad0) = cost_and_grad(&x0)?;
    if !cost.is_finite() {
        report.wall_time = start.elapsed().as_secs_f64();
        return Err(Error::numerical_with_report(
            "non-finite cost at the initial point",
            report,
        ));
    }
    let cost_scale = if cost.abs() > f64::MIN_POSITIVE {
        cost.abs()
    } else {
        1.0
    };
    let mut x = x0;
    let mut grad = project_tangent(&x, &grad0)?;
    report.cost_history.push(cost / cost_scale);
    report.grad_norm_history.push(grad.norm());

    let mut dir = TangentVector {
        z: -grad.matrix().clone(),
    };

    loop {
        let grad_norm = grad.norm();
        if !grad_norm.is_finite() {
            report.wall_time = start.elapsed().as_secs_f64();
            return Err(Error::numerical_with_report(
                format!("non-finite gradient at iteration {}", report.iterations),
                report,
            ));
        }
        if grad_norm <= cfg.grad_tol {
            report.termination = Termination::GradTol;
            break;
        }
        if report.iterations >= cfg.max_iters {
            report.termination = Termination::MaxIters;
            break;
        }

        let mut slope = dir.inner(&grad);
        if slope >= 0.0 {
            // not a descent direction: restart with steepest descent
            dir = TangentVector {
                z: -grad.matrix().clone(),
            };
            slope = -grad_norm * grad_norm;
        }

        // Armijo backtracking along the retraction; trial points that fail
        // to evaluate (rank-deficient retraction, singular inner solve) are
        // rejected like an insufficient decrease
        let mut step = cfg.line_search.initial_step / (1.0 + grad_norm);
        let mut accepted = None;
        for _ in 0..cfg.line_search.max_backtracks {
            let candidate = match retract(&x, &dir, step) {
                Ok(p) => p,
                Err(_) => {
                    step *= cfg.line_search.backtrack;
                    continue;
                }
            };
            if let Ok((c_new, g_new)) = cost_and_grad(&candidate) {
                if c_new.is_finite() && c_new <= cost + cfg.line_search.armijo_c * step * slope {
                    accepted = Some((candidate, c_new, g_new));
                    break;
                }
            }
            step *= cfg.line_search.backtrack;
        }

        let Some((x_new, cost_new, grad_new_euclid)) = accepted else {
            report.termination = Termination::LineSearchFailure;
            break;
        };

        let grad_new = project_tangent(&x_new, &grad_new_euclid)?;

        // Polak-Ribiere-plus with projection transport
        let grad_old_t = transport(&x_new, &grad)?;
        let denom = grad_norm * grad_norm;
        let beta = ((grad_new.inner(&grad_new) - grad_new.inner(&grad_old_t)) / denom).max(0.0);
        let dir_t = transport(&x_new, &dir)?;

        report.iterations += 1;
        let restart = cfg.cg_restart_period > 0 && report.iterations % cfg.cg_restart_period == 0;
        dir = if restart {
            TangentVector {
                z: -grad_new.matrix().clone(),
            }
        } else {
            TangentVector {
                z: -grad_new.matrix() + dir_t.matrix() * beta,
            }
        };

        x = x_new;
        cost = cost_new;
        grad = grad_new;
        report.cost_history.push(cost / cost_scale);
        report.grad_norm_history.push(grad.norm());
        report.max_feasibility_defect = report
            .max_feasibility_defect
            .max(x.feasibility_defect());
    }

    report.wall_time = start.elapsed().as_secs_f64();
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn random_point(rng: &mut ChaCha8Rng, m: usize, r: usize, q: usize) -> StiefelPoint {
        let g = random_matrix(rng, m, r + q);
        let qr = g.qr();
        let mut qmat = qr.q();
        let rmat = qr.r();
        for j in 0..qmat.ncols() {
            if rmat[(j, j)] < 0.0 {
                for i in 0..qmat.nrows() {
                    qmat[(i, j)] = -qmat[(i, j)];
                }
            }
        }
        StiefelPoint::new(qmat, r, q).unwrap()
    }

    #[test]
    fn new_rejects_bad_frames() {
        let q = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(StiefelPoint::new(q, 1, 1).is_err());
        let id = DMatrix::<f64>::identity(3, 2);
        assert!(StiefelPoint::new(id.clone(), 1, 2).is_err()); // split sums to 3 != 2
        assert!(StiefelPoint::new(id, 1, 1).is_ok());
    }

    #[test]
    fn projection_is_idempotent_and_kills_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_point(&mut rng, 6, 2, 2);
        let g = random_matrix(&mut rng, 6, 4);
        let z = project_tangent(&x, &g).unwrap();
        // tangency
        let qtz = x.matrix().transpose() * z.matrix();
        let sym = (&qtz + qtz.transpose()) * 0.5;
        assert!(sym.norm() <= 1e-10 * z.norm().max(1.0));
        // idempotence
        let z2 = project_tangent(&x, z.matrix()).unwrap();
        assert_relative_eq!(z.matrix(), z2.matrix(), max_relative = 1e-12, epsilon = 1e-14);
        // projecting the base point gives zero
        let z0 = project_tangent(&x, x.matrix()).unwrap();
        assert!(z0.norm() < 1e-12);
        // the removed component is orthogonal to random tangent directions
        let t = project_tangent(&x, &random_matrix(&mut rng, 6, 4)).unwrap();
        let removed = &g - z.matrix();
        assert!(removed.dot(t.matrix()).abs() < 1e-10 * removed.norm() * t.norm());
    }

    #[test]
    fn retract_zero_step_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_point(&mut rng, 5, 2, 1);
        let z = project_tangent(&x, &random_matrix(&mut rng, 5, 3)).unwrap();
        let y = retract(&x, &z, 0.0).unwrap();
        assert!((y.matrix() - x.matrix()).norm() < 1e-12);
    }

    #[test]
    fn retract_normalizes_single_column() {
        let x = StiefelPoint::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), 1, 0).unwrap();
        let z = project_tangent(&x, &DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        let y = retract(&x, &z, 1.0).unwrap();
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(y.matrix()[(0, 0)], inv_sqrt2, max_relative = 1e-12);
        assert_relative_eq!(y.matrix()[(1, 0)], inv_sqrt2, max_relative = 1e-12);
    }

    #[test]
    fn retraction_is_first_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_point(&mut rng, 6, 2, 1);
        let z = project_tangent(&x, &random_matrix(&mut rng, 6, 3)).unwrap();
        let mut prev = None;
        for k in 0..4 {
            let eps = 1e-2 / f64::powi(2.0, k);
            let resid = (retract(&x, &z, eps).unwrap().matrix() - (x.matrix() + z.matrix() * eps))
                .norm();
            if let Some(p) = prev {
                let ratio: f64 = p / resid;
                assert!(
                    (ratio - 4.0).abs() < 0.5,
                    "halving eps should quarter the residual, got ratio {ratio}"
                );
            }
            prev = Some(resid);
        }
    }

    #[test]
    fn transport_preserves_tangency_and_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_point(&mut rng, 7, 2, 2);
        let z = project_tangent(&x, &random_matrix(&mut rng, 7, 4)).unwrap();
        // transport to the same point leaves the vector unchanged
        let same = transport(&x, &z).unwrap();
        assert_relative_eq!(same.matrix(), z.matrix(), max_relative = 1e-12, epsilon = 1e-14);
        // transported vector is tangent at the new point
        let y = random_point(&mut rng, 7, 2, 2);
        let moved = transport(&y, &z).unwrap();
        let qtz = y.matrix().transpose() * moved.matrix();
        let sym = (&qtz + qtz.transpose()) * 0.5;
        assert!(sym.norm() <= 1e-8 * moved.norm().max(1e-300));
        let zero = TangentVector { z: DMatrix::zeros(7, 4) };
        assert_eq!(transport(&y, &zero).unwrap().norm(), 0.0);
    }

    #[test]
    fn constant_cost_stops_immediately() {
        let x0 = StiefelPoint::leading(4, 1, 1).unwrap();
        let cfg = SolverConfig::default();
        let (_, report) = minimize(
            |x| Ok((3.5, DMatrix::zeros(x.rows(), x.cols()))),
            x0,
            &cfg,
        )
        .unwrap();
        assert_eq!(report.iterations, 0);
        assert_eq!(report.termination, Termination::GradTol);
    }

    #[test]
    fn recovers_dominant_singular_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let a = random_matrix(&mut rng, 8, 12);
            let sigma_max = a.clone().svd(false, false).singular_values[0];
            let x0 = StiefelPoint::leading(8, 1, 0).unwrap();
            let cfg = SolverConfig {
                grad_tol: 1e-8,
                max_iters: 500,
                ..SolverConfig::default()
            };
            let cost_scale = {
                let q0 = DMatrix::<f64>::identity(8, 1);
                (a.transpose() * q0).norm_squared()
            };
            let (x, report) = minimize(
                |x| {
                    let atq = a.transpose() * x.matrix();
                    Ok((-atq.norm_squared(), -2.0 * &a * atq))
                },
                x0,
                &cfg,
            )
            .unwrap();
            let achieved = -(a.transpose() * x.matrix()).norm_squared();
            assert_relative_eq!(achieved, -sigma_max * sigma_max, max_relative = 1e-6);
            assert!(report.max_feasibility_defect <= 1e-8);
            assert!(cost_scale > 0.0);
        }
    }

    #[test]
    fn descent_is_monotone_and_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_matrix(&mut rng, 10, 10);
        let sym = (&a + a.transpose()) * 0.5;
        let x0 = StiefelPoint::leading(10, 2, 1).unwrap();
        let cfg = SolverConfig {
            grad_tol: 1e-7,
            max_iters: 300,
            ..SolverConfig::default()
        };
        // Rayleigh-quotient style cost: minimize tr(Qt Sym Q)
        let (x, report) = minimize(
            |x| {
                let sq = &sym * x.matrix();
                Ok((x.matrix().dot(&sq), 2.0 * sq))
            },
            x0,
            &cfg,
        )
        .unwrap();
        assert!(report
            .cost_history
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-12));
        assert!(report.max_feasibility_defect <= 1e-8 * (3.0f64).sqrt());
        assert!(x.feasibility_defect() <= 1e-10 * (3.0f64).sqrt());
        // optimum is the sum of the three smallest eigenvalues
        let mut eigs: Vec<f64> =
            sym.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let target: f64 = eigs[..3].iter().sum();
        let achieved = x.matrix().dot(&(&sym * x.matrix()));
        assert_relative_eq!(achieved, target, max_relative = 1e-5);
    }

    #[test]
    fn split_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 6, 9);
        let x0 = StiefelPoint::leading(6, 2, 1).unwrap();
        let (x, _) = minimize(
            |x| {
                let atq = a.transpose() * x.matrix();
                Ok((-atq.norm_squared(), -2.0 * &a * atq))
            },
            x0,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(x.split(), (2, 1));
        assert_eq!(x.q_r().ncols(), 2);
        assert_eq!(x.q_q().ncols(), 1);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let x0 = StiefelPoint::leading(3, 1, 1).unwrap();
        let bad = SolverConfig {
            grad_tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(minimize(|_| Ok((0.0, DMatrix::zeros(3, 2))), x0, &bad).is_err());
    }

    #[test]
    fn non_finite_cost_reports_error() {
        let x0 = StiefelPoint::leading(3, 1, 1).unwrap();
        let err = minimize(
            |_| Ok((f64::NAN, DMatrix::zeros(3, 2))),
            x0,
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }));
    }
}
