//! Quadratic-manifold fitting.
//!
//! All methods produce the same decoder
//! `s ≈ s̄ + V_r ŝ + V_q Ξ csq(ŝ)` and differ only in how the bases are
//! chosen from the candidate span:
//!
//! * [`fit_pod`] — leading modes, no quadratic term;
//! * [`fit_pod_qm`] — leading `r` modes plus the next `q` modes, `Ξ` from a
//!   regularized least-squares fit;
//! * [`fit_greedy`] — non-sequential selection of the linear modes, each
//!   chosen to minimize the quadratic representation error over the
//!   remaining pool;
//! * [`fit_fastqm`] — continuous rotation of both bases inside the candidate
//!   span by Riemannian optimization of the reduced objective.
//!
//! The reduced objective and its analytic gradient live in
//! [`feature_objective`]; everything is expressed through `S̃ = Ṽᵀ S`, so no
//! operation here scales with the full state dimension.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::snapshots::CandidateBasis;
use crate::stiefel::{self, FitReport, SolverConfig, StiefelPoint};
use crate::tensorops::{compressed_len, compressed_square, khatri_rao_square, square_pullback};

/// Which construction produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Pod,
    PodQm,
    GreedyQm,
    RiemannianQm,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Pod => "pod",
            Method::PodQm => "pod_qm",
            Method::GreedyQm => "greedy_qm",
            Method::RiemannianQm => "riemannian_qm",
        }
    }

    /// Accepts both the stored names and the short CLI spellings.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pod" => Ok(Method::Pod),
            "pod_qm" | "qm" => Ok(Method::PodQm),
            "greedy_qm" | "greedy" => Ok(Method::GreedyQm),
            "riemannian_qm" | "riemannian" => Ok(Method::RiemannianQm),
            other => Err(Error::invalid(format!(
                "unknown method '{other}' (expected pod|qm|greedy|riemannian)"
            ))),
        }
    }
}

/// Rotation matrices of a Riemannian fit, kept so the model can be related
/// back to the candidate basis it was optimized in.
#[derive(Debug, Clone)]
pub struct FactorizedForm {
    pub q_r: DMatrix<f64>,
    pub q_q: DMatrix<f64>,
}

/// A fitted quadratic-manifold decoder.
#[derive(Debug, Clone)]
pub struct QuadraticManifoldModel {
    reference: DVector<f64>,
    v_r: DMatrix<f64>,
    v_q: DMatrix<f64>,
    xi: DMatrix<f64>,
    gamma: f64,
    method: Method,
    factor: Option<FactorizedForm>,
}

impl QuadraticManifoldModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        reference: DVector<f64>,
        v_r: DMatrix<f64>,
        v_q: DMatrix<f64>,
        xi: DMatrix<f64>,
        gamma: f64,
        method: Method,
        factor: Option<FactorizedForm>,
    ) -> Result<Self> {
        let n = reference.len();
        if v_r.nrows() != n || (v_q.ncols() > 0 && v_q.nrows() != n) {
            return Err(Error::invalid("basis row count != state dimension"));
        }
        let q = v_q.ncols();
        if xi.nrows() != q {
            return Err(Error::invalid("coefficient rows != quadratic basis size"));
        }
        if q > 0 && xi.ncols() != compressed_len(v_r.ncols()) {
            return Err(Error::invalid(
                "coefficient columns != r(r+1)/2 for the linear basis size",
            ));
        }
        Ok(QuadraticManifoldModel {
            reference,
            v_r,
            v_q,
            xi,
            gamma,
            method,
            factor,
        })
    }

    pub fn reference(&self) -> &DVector<f64> {
        &self.reference
    }

    pub fn v_r(&self) -> &DMatrix<f64> {
        &self.v_r
    }

    pub fn v_q(&self) -> &DMatrix<f64> {
        &self.v_q
    }

    pub fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn factor(&self) -> Option<&FactorizedForm> {
        self.factor.as_ref()
    }

    pub fn state_dim(&self) -> usize {
        self.reference.len()
    }

    pub fn reduced_dim(&self) -> usize {
        self.v_r.ncols()
    }

    pub fn quadratic_dim(&self) -> usize {
        self.v_q.ncols()
    }

    /// Reduced coordinates of a full state: `ŝ = V_rᵀ (s − s̄)`.
    pub fn encode(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        if s.len() != self.state_dim() {
            return Err(Error::invalid(format!(
                "state length {} != model dimension {}",
                s.len(),
                self.state_dim()
            )));
        }
        Ok(self.v_r.transpose() * (s - &self.reference))
    }

    /// Full-state reconstruction `s̄ + V_r ŝ + V_q Ξ csq(ŝ)`.
    ///
    /// POD models have no quadratic part and return `s̄ + V_r ŝ`.
    pub fn decode(&self, s_hat: &DVector<f64>) -> Result<DVector<f64>> {
        if s_hat.len() != self.reduced_dim() {
            return Err(Error::invalid(format!(
                "reduced state length {} != r = {}",
                s_hat.len(),
                self.reduced_dim()
            )));
        }
        let mut out = &self.reference + &self.v_r * s_hat;
        if self.quadratic_dim() > 0 {
            let w = compressed_square(s_hat);
            out += &self.v_q * (&self.xi * w);
        }
        Ok(out)
    }

    /// Consistency checks on the stored bases: orthonormality of `V_r` and
    /// `V_q`, their mutual orthogonality, and (when the factorized form is
    /// present) agreement with `Ṽ Q_r`, `Ṽ Q_q`.
    pub fn validate(&self, basis: Option<&CandidateBasis>) -> Result<()> {
        let r = self.reduced_dim();
        let q = self.quadratic_dim();
        let ortho_r = (self.v_r.transpose() * &self.v_r - DMatrix::identity(r, r)).norm();
        if ortho_r > 1e-8 * (r as f64).sqrt() {
            return Err(Error::numerical(format!(
                "linear basis not orthonormal (defect {ortho_r:.3e})"
            )));
        }
        if q > 0 {
            let ortho_q = (self.v_q.transpose() * &self.v_q - DMatrix::identity(q, q)).norm();
            if ortho_q > 1e-8 * (q as f64).sqrt() {
                return Err(Error::numerical(format!(
                    "quadratic basis not orthonormal (defect {ortho_q:.3e})"
                )));
            }
            let cross = (self.v_r.transpose() * &self.v_q).norm();
            if cross > 1e-8 * ((r * q) as f64).sqrt() {
                return Err(Error::numerical(format!(
                    "bases not mutually orthogonal (defect {cross:.3e})"
                )));
            }
        }
        if let (Some(f), Some(b)) = (&self.factor, basis) {
            let err_r = (b.v_tilde() * &f.q_r - &self.v_r).norm() / self.v_r.norm().max(1e-300);
            let err_q = if q > 0 {
                (b.v_tilde() * &f.q_q - &self.v_q).norm() / self.v_q.norm().max(1e-300)
            } else {
                0.0
            };
            if err_r > 1e-10 || err_q > 1e-10 {
                return Err(Error::numerical(
                    "factorized form does not reproduce the stored bases",
                ));
            }
        }
        Ok(())
    }
}

/// Greedy selection record: chosen candidate indices (0-based) and the
/// minimized objective value after each pick.
#[derive(Debug, Clone)]
pub struct GreedyTrace {
    pub selected_indices: Vec<usize>,
    pub objective_history: Vec<f64>,
}

/// Solves the inner regularized least-squares problem
/// `Ξ (W Wᵀ + γ I) = S_q Wᵀ` by Cholesky factorization.
///
/// `s_hat_q` is the quadratic-side projection of the data (`Q_qᵀ S̃` in
/// feature space, `V_qᵀ S` in the full space). With `γ = 0` the normal
/// matrix must be numerically positive definite; otherwise the call fails
/// with a hint to regularize.
pub fn solve_xi(s_hat_q: &DMatrix<f64>, w: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    if gamma < 0.0 {
        return Err(Error::invalid("gamma must be non-negative"));
    }
    if s_hat_q.ncols() != w.ncols() {
        return Err(Error::invalid(format!(
            "column counts differ: data {} vs features {}",
            s_hat_q.ncols(),
            w.ncols()
        )));
    }
    let nw = w.nrows();
    if s_hat_q.nrows() == 0 {
        return Ok(DMatrix::zeros(0, nw));
    }
    let mut normal = w * w.transpose();
    for i in 0..nw {
        normal[(i, i)] += gamma;
    }
    let chol = nalgebra::Cholesky::new(normal).ok_or_else(|| {
        if gamma == 0.0 {
            Error::numerical(
                "normal matrix W Wᵀ is singular at gamma = 0; use gamma > 0 to regularize",
            )
        } else {
            Error::numerical("Cholesky factorization of W Wᵀ + γI failed")
        }
    })?;
    let rhs = w * s_hat_q.transpose(); // nw × q
    Ok(chol.solve(&rhs).transpose())
}

/// Reduced training residual `‖S − V_r V_rᵀ S − V_q Ξ W‖_F²` evaluated in
/// feature space: `‖S‖² − ‖A‖² + ‖ΞW‖² − 2⟨P, ΞW⟩` with `A = Q_rᵀ S̃` and
/// `P = Q_qᵀ S̃`. Clamped at zero against rounding.
fn residual_sq_from_features(
    a: &DMatrix<f64>,
    p: &DMatrix<f64>,
    xi_w: &DMatrix<f64>,
    total_energy: f64,
) -> f64 {
    let value =
        total_energy - a.norm_squared() + xi_w.norm_squared() - 2.0 * p.dot(xi_w);
    value.max(0.0)
}

/// Relative training error of a model against the basis it was fitted on,
/// computed entirely in feature space.
pub fn training_relative_error(
    model: &QuadraticManifoldModel,
    basis: &CandidateBasis,
) -> Result<f64> {
    if model.state_dim() != basis.state_dim() {
        return Err(Error::invalid("model and basis state dimensions differ"));
    }
    if basis.total_energy() <= 0.0 {
        return Err(Error::invalid("training data has zero energy"));
    }
    let q_r = basis.v_tilde().transpose() * model.v_r();
    let a = q_r.transpose() * basis.s_tilde();
    let resid_sq = if model.quadratic_dim() > 0 {
        let q_q = basis.v_tilde().transpose() * model.v_q();
        let p = q_q.transpose() * basis.s_tilde();
        let w = khatri_rao_square(&a);
        let xi_w = model.xi() * w;
        residual_sq_from_features(&a, &p, &xi_w, basis.total_energy())
    } else {
        (basis.total_energy() - a.norm_squared()).max(0.0)
    };
    Ok((resid_sq / basis.total_energy()).sqrt())
}

/// Reduced cost, its Euclidean gradient, and the inner solution `Ξ` at a
/// Stiefel point.
///
/// The cost is the feature-space objective
///
/// ```text
/// J(Q_r, Q_q) = −‖Q_rᵀ S̃‖_F² + ‖ΞW‖_F² + γ‖Ξ‖_F² − 2 Tr(S̃ᵀ Q_q Ξ W)
/// ```
///
/// with `W = krs(Q_rᵀ S̃)` and `Ξ` the inner least-squares minimizer; it
/// differs from the full-space objective by the constant `‖S‖_F²`. The
/// gradient holds `Ξ` fixed at its minimizer (envelope argument; the inner
/// problem is strongly convex for `γ > 0`): the `Q_q` block is
/// `−2 S̃ (ΞW)ᵀ`, the `Q_r` block is `−2 S̃ Aᵀ` plus the chain rule of
/// `2Ξᵀ(ΞW − Q_qᵀS̃)` pulled back through the compressed square.
pub fn feature_objective(
    point: &StiefelPoint,
    s_tilde: &DMatrix<f64>,
    gamma: f64,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    if point.rows() != s_tilde.nrows() {
        return Err(Error::invalid(format!(
            "point has {} rows but the projected data has {}",
            point.rows(),
            s_tilde.nrows()
        )));
    }
    let (r, _) = point.split();
    let q_r = point.q_r();
    let q_q = point.q_q();
    let a = q_r.transpose() * s_tilde; // r × K
    let w = khatri_rao_square(&a); // nw × K
    let p = q_q.transpose() * s_tilde; // q × K
    let xi = solve_xi(&p, &w, gamma)?;
    let xi_w = &xi * &w;

    let cost = -a.norm_squared() + xi_w.norm_squared() + gamma * xi.norm_squared()
        - 2.0 * p.dot(&xi_w);

    // dJ/dW, pulled back to A, then to Q_r
    let u = xi.transpose() * (&xi_w - &p) * 2.0;
    let b = square_pullback(&a, &u);
    let g_r = s_tilde * (b.transpose() - a.transpose() * 2.0);
    let g_q = -2.0 * s_tilde * xi_w.transpose();

    let mut grad = DMatrix::zeros(point.rows(), point.cols());
    grad.columns_mut(0, r).copy_from(&g_r);
    grad.columns_mut(r, point.cols() - r).copy_from(&g_q);
    Ok((cost, grad, xi))
}

fn check_fit_dims(basis: &CandidateBasis, r: usize, q: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::invalid("r must be at least 1"));
    }
    if r + q > basis.m() {
        return Err(Error::invalid(format!(
            "r + q = {} exceeds the number of candidate modes m = {}",
            r + q,
            basis.m()
        )));
    }
    Ok(())
}

/// Plain POD model: leading `r` candidate modes, no quadratic correction.
pub fn fit_pod(basis: &CandidateBasis, r: usize) -> Result<QuadraticManifoldModel> {
    check_fit_dims(basis, r, 0)?;
    QuadraticManifoldModel::from_parts(
        basis.reference().clone(),
        basis.v_tilde().columns(0, r).into_owned(),
        DMatrix::zeros(basis.state_dim(), 0),
        DMatrix::zeros(0, 0),
        0.0,
        Method::Pod,
        None,
    )
}

/// POD-based quadratic manifold: `V_r` = leading `r` modes, `V_q` = the next
/// `q` modes, `Ξ` from the regularized least-squares fit.
pub fn fit_pod_qm(
    basis: &CandidateBasis,
    r: usize,
    q: usize,
    gamma: f64,
) -> Result<QuadraticManifoldModel> {
    check_fit_dims(basis, r, q)?;
    if q == 0 {
        return Err(Error::invalid(
            "q must be at least 1 for a quadratic manifold; use the POD fit for q = 0",
        ));
    }
    let a = basis.s_tilde().rows(0, r).into_owned();
    let p = basis.s_tilde().rows(r, q).into_owned();
    let w = khatri_rao_square(&a);
    let xi = solve_xi(&p, &w, gamma)?;
    QuadraticManifoldModel::from_parts(
        basis.reference().clone(),
        basis.v_tilde().columns(0, r).into_owned(),
        basis.v_tilde().columns(r, q).into_owned(),
        xi,
        gamma,
        Method::PodQm,
        None,
    )
}

/// Quadratic manifold by Riemannian optimization of the reduced objective
/// over `St(m, r+q)`, started from the POD frame `[I; 0]`.
///
/// Because the start is the POD-based quadratic manifold and descent is
/// monotone, the result never has a larger training objective than
/// [`fit_pod_qm`] at the same `(r, q, γ)`.
pub fn fit_fastqm(
    basis: &CandidateBasis,
    r: usize,
    q: usize,
    gamma: f64,
    cfg: &SolverConfig,
) -> Result<(QuadraticManifoldModel, FitReport)> {
    check_fit_dims(basis, r, q)?;
    if q == 0 {
        return Err(Error::invalid(
            "q must be at least 1 for a quadratic manifold; use the POD fit for q = 0",
        ));
    }
    let s_tilde = basis.s_tilde();
    let x0 = StiefelPoint::leading(basis.m(), r, q)?;
    let (x, report) = stiefel::minimize(
        |point| feature_objective(point, s_tilde, gamma).map(|(c, g, _)| (c, g)),
        x0,
        cfg,
    )?;
    let (_, _, xi) = feature_objective(&x, s_tilde, gamma)?;
    let q_r = x.q_r();
    let q_q = x.q_q();
    let model = QuadraticManifoldModel::from_parts(
        basis.reference().clone(),
        basis.v_tilde() * &q_r,
        basis.v_tilde() * &q_q,
        xi,
        gamma,
        Method::RiemannianQm,
        Some(FactorizedForm { q_r, q_q }),
    )?;
    Ok((model, report))
}

/// Value of the greedy selection objective when `rows_sel` are the linear
/// modes and every other candidate mode forms the quadratic pool.
///
/// Computed row by row: the residual decomposes over the orthonormal
/// candidate directions, each pool row contributing
/// `‖s̃_p‖² − s̃_p Wᵀ (W Wᵀ + γI)⁻¹ W s̃_pᵀ`, plus the constant energy
/// outside the candidate span.
fn greedy_objective(
    s_tilde: &DMatrix<f64>,
    row_norms_sq: &[f64],
    rows_sel: &[usize],
    gamma: f64,
    total_energy: f64,
) -> Result<f64> {
    let m = s_tilde.nrows();
    let k = s_tilde.ncols();
    let mut a = DMatrix::zeros(rows_sel.len(), k);
    for (dst, &src) in rows_sel.iter().enumerate() {
        a.set_row(dst, &s_tilde.row(src));
    }
    let w = khatri_rao_square(&a);
    let nw = w.nrows();
    let mut normal = &w * w.transpose();
    for i in 0..nw {
        normal[(i, i)] += gamma;
    }
    let chol = nalgebra::Cholesky::new(normal).ok_or_else(|| {
        if gamma == 0.0 {
            Error::numerical(
                "normal matrix W Wᵀ is singular at gamma = 0; use gamma > 0 to regularize",
            )
        } else {
            Error::numerical("Cholesky factorization failed in greedy selection")
        }
    })?;

    let pool: Vec<usize> = (0..m).filter(|i| !rows_sel.contains(i)).collect();
    let mut d = DMatrix::zeros(pool.len(), k);
    for (dst, &src) in pool.iter().enumerate() {
        d.set_row(dst, &s_tilde.row(src));
    }
    let g = &w * d.transpose(); // nw × pool
    let x = chol.solve(&g);
    let explained = g.dot(&x);

    let selected_energy: f64 = rows_sel.iter().map(|&u| row_norms_sq[u]).sum();
    Ok((total_energy - selected_energy - explained).max(0.0))
}

/// Greedy quadratic manifold.
///
/// At each of the `r` iterations every unselected candidate mode is tried as
/// the next linear mode, with all remaining modes acting as the quadratic
/// pool; the candidate with the smallest minimized objective wins, ties
/// broken by the smaller index. After the selection, the quadratic basis
/// keeps the `q` unselected modes of largest singular value and `Ξ` is refit
/// against it.
pub fn fit_greedy(
    basis: &CandidateBasis,
    r: usize,
    q: usize,
    gamma: f64,
) -> Result<(QuadraticManifoldModel, GreedyTrace)> {
    check_fit_dims(basis, r, q)?;
    if q == 0 {
        return Err(Error::invalid(
            "q must be at least 1 for a quadratic manifold; use the POD fit for q = 0",
        ));
    }
    let s_tilde = basis.s_tilde();
    let m = basis.m();
    let row_norms_sq: Vec<f64> = (0..m)
        .map(|i| s_tilde.row(i).norm_squared())
        .collect();

    let mut selected: Vec<usize> = Vec::with_capacity(r);
    let mut objective_history = Vec::with_capacity(r);
    for _ in 0..r {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..m {
            if selected.contains(&j) {
                continue;
            }
            let mut trial = selected.clone();
            trial.push(j);
            let value = greedy_objective(
                s_tilde,
                &row_norms_sq,
                &trial,
                gamma,
                basis.total_energy(),
            )?;
            let better = match best {
                None => true,
                Some((bv, _)) => value < bv,
            };
            if better {
                best = Some((value, j));
            }
        }
        let (value, j) = best.expect("at least one unselected candidate");
        selected.push(j);
        objective_history.push(value);
    }

    // quadratic pool: the q unselected modes of largest singular value,
    // i.e. the smallest unselected indices
    let quad_rows: Vec<usize> = (0..m).filter(|i| !selected.contains(i)).take(q).collect();

    let mut a = DMatrix::zeros(r, basis.len());
    for (dst, &src) in selected.iter().enumerate() {
        a.set_row(dst, &s_tilde.row(src));
    }
    let mut p = DMatrix::zeros(q, basis.len());
    for (dst, &src) in quad_rows.iter().enumerate() {
        p.set_row(dst, &s_tilde.row(src));
    }
    let w = khatri_rao_square(&a);
    let xi = solve_xi(&p, &w, gamma)?;

    let mut v_r = DMatrix::zeros(basis.state_dim(), r);
    for (dst, &src) in selected.iter().enumerate() {
        v_r.set_column(dst, &basis.v_tilde().column(src));
    }
    let mut v_q = DMatrix::zeros(basis.state_dim(), q);
    for (dst, &src) in quad_rows.iter().enumerate() {
        v_q.set_column(dst, &basis.v_tilde().column(src));
    }

    let model = QuadraticManifoldModel::from_parts(
        basis.reference().clone(),
        v_r,
        v_q,
        xi,
        gamma,
        Method::GreedyQm,
        None,
    )?;
    Ok((
        model,
        GreedyTrace {
            selected_indices: selected,
            objective_history,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshots::{CenteringMode, SnapshotSet};
    use crate::stiefel::{project_tangent, retract};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn random_stiefel(rng: &mut ChaCha8Rng, m: usize, r: usize, q: usize) -> StiefelPoint {
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

    fn random_basis(
        rng: &mut ChaCha8Rng,
        n: usize,
        k: usize,
        m: usize,
    ) -> (SnapshotSet, CandidateBasis) {
        let raw = random_matrix(rng, n, k);
        let set = SnapshotSet::center(&raw, CenteringMode::Zero, None).unwrap();
        let basis = CandidateBasis::from_snapshots(&set, m).unwrap();
        (set, basis)
    }

    /// Independent full-space evaluation of the regularized objective.
    fn full_objective(
        xi: &DMatrix<f64>,
        v_r: &DMatrix<f64>,
        v_q: &DMatrix<f64>,
        s: &DMatrix<f64>,
        gamma: f64,
    ) -> f64 {
        let w = khatri_rao_square(&(v_r.transpose() * s));
        let resid = s - v_r * (v_r.transpose() * s) - v_q * (xi * &w);
        resid.norm_squared() + gamma * xi.norm_squared()
    }

    #[test]
    fn solve_xi_zero_data_gives_zero() {
        let w = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let p = DMatrix::zeros(2, 3);
        let xi = solve_xi(&p, &w, 0.5).unwrap();
        assert!(xi.iter().all(|&v| v == 0.0));
        assert_eq!(xi.shape(), (2, 1));
    }

    #[test]
    fn solve_xi_matches_dense_normal_equation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (q, r, k, gamma) = (2, 2, 10, 0.1);
        let w = random_matrix(&mut rng, compressed_len(r), k);
        let p = random_matrix(&mut rng, q, k);
        let xi = solve_xi(&p, &w, gamma).unwrap();
        // oracle: explicit inverse of the normal matrix
        let nw = w.nrows();
        let normal = &w * w.transpose() + DMatrix::identity(nw, nw) * gamma;
        let xi_oracle = (&p * w.transpose()) * normal.try_inverse().unwrap();
        assert_relative_eq!(xi, xi_oracle, max_relative = 1e-8);
        // residual bound from the postcondition
        let lhs = &xi * (&w * w.transpose() + DMatrix::identity(nw, nw) * gamma);
        let rhs = &p * w.transpose();
        assert!((lhs - &rhs).norm() <= 1e-8 * rhs.norm());
    }

    #[test]
    fn solve_xi_large_gamma_shrinks_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = random_matrix(&mut rng, 3, 12);
        let p = random_matrix(&mut rng, 2, 12);
        let xi0 = solve_xi(&p, &w, 0.0).unwrap();
        let xi_big = solve_xi(&p, &w, 1e12).unwrap();
        assert!(xi_big.norm() < 1e-9 * xi0.norm());
    }

    #[test]
    fn solve_xi_singular_at_zero_gamma_is_reported() {
        // duplicated feature rows make W W^T singular
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let p = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 1.0]);
        let err = solve_xi(&p, &w, 0.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gamma"), "unexpected message: {msg}");
        assert!(solve_xi(&p, &w, 1e-6).is_ok());
    }

    #[test]
    fn feature_and_full_objective_differ_by_total_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..8 {
            let (set, basis) = random_basis(&mut rng, 12, 15, 6);
            let point = random_stiefel(&mut rng, 6, 2, 2);
            let gamma = 0.01;
            let (cost, _, xi) = feature_objective(&point, basis.s_tilde(), gamma).unwrap();
            let v_r = basis.v_tilde() * point.q_r();
            let v_q = basis.v_tilde() * point.q_q();
            let full = full_objective(&xi, &v_r, &v_q, set.data(), gamma);
            assert_relative_eq!(
                full,
                set.data().norm_squared() + cost,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for trial in 0..20 {
            let m = 4 + (trial % 4);
            let r = 1 + (trial % 3);
            let q = 1 + ((trial / 3) % 3);
            if r + q > m {
                continue;
            }
            let k = 8 + (trial % 10);
            let (_, basis) = random_basis(&mut rng, m + 3, k, m);
            let point = random_stiefel(&mut rng, m, r, q);
            let gamma = 0.05;
            let (_, grad, _) = feature_objective(&point, basis.s_tilde(), gamma).unwrap();
            let rgrad = project_tangent(&point, &grad).unwrap();
            let z = project_tangent(&point, &random_matrix(&mut rng, m, r + q)).unwrap();
            let eps = 1e-6 * point.matrix().norm() / z.norm();
            let cost_at = |s: f64| {
                let moved = retract(&point, &z, s).unwrap();
                feature_objective(&moved, basis.s_tilde(), gamma).unwrap().0
            };
            let fd = (cost_at(eps) - cost_at(-eps)) / (2.0 * eps);
            let analytic = rgrad.inner(&z);
            assert_relative_eq!(fd, analytic, max_relative = 1e-4);
        }
    }

    #[test]
    fn data_orthogonal_to_quadratic_features_forces_xi_zero() {
        // a = [1, -1] gives w = [1, 1]; p = [0.7, -0.7] is orthogonal to w
        let s_tilde = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.7, -0.7]);
        let point = StiefelPoint::leading(2, 1, 1).unwrap();
        let (cost, grad, xi) = feature_objective(&point, &s_tilde, 0.1).unwrap();
        assert!(xi.norm() < 1e-14);
        assert_relative_eq!(cost, -2.0, epsilon = 1e-12); // -||a||^2
        assert!(grad.column(1).norm() < 1e-14); // Q_q block vanishes
    }

    #[test]
    fn pod_qm_feature_path_agrees_with_full_space_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (set, basis) = random_basis(&mut rng, 10, 14, 5);
        let (r, q, gamma) = (2, 2, 0.3);
        let model = fit_pod_qm(&basis, r, q, gamma).unwrap();
        // full-space route: V_r^T S and V_q^T S directly
        let v_r = basis.v_tilde().columns(0, r).into_owned();
        let v_q = basis.v_tilde().columns(r, q).into_owned();
        let w_full = khatri_rao_square(&(v_r.transpose() * set.data()));
        let xi_full = solve_xi(&(v_q.transpose() * set.data()), &w_full, gamma).unwrap();
        assert_relative_eq!(model.xi(), &xi_full, max_relative = 1e-10);
        model.validate(Some(&basis)).unwrap();
    }

    #[test]
    fn pod_qm_on_exactly_spanned_data_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        // data spanned by two fixed directions only
        let u = random_matrix(&mut rng, 8, 2);
        let coeff = random_matrix(&mut rng, 2, 12);
        let raw = u * coeff;
        let set = SnapshotSet::center(&raw, CenteringMode::Zero, None).unwrap();
        let basis = CandidateBasis::from_snapshots(&set, 3).unwrap();
        let model = fit_pod_qm(&basis, 2, 1, 1e-8).unwrap();
        let err = training_relative_error(&model, &basis).unwrap();
        assert!(err <= 1e-8, "training error {err}");
    }

    #[test]
    fn pod_qm_xi_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (set, basis) = random_basis(&mut rng, 9, 12, 5);
        let (r, q, gamma) = (2, 2, 0.05);
        let model = fit_pod_qm(&basis, r, q, gamma).unwrap();
        let base = full_objective(model.xi(), model.v_r(), model.v_q(), set.data(), gamma);
        for _ in 0..100 {
            let delta = random_matrix(&mut rng, q, compressed_len(r)) * 0.1;
            let perturbed = model.xi() + delta;
            let value = full_objective(&perturbed, model.v_r(), model.v_q(), set.data(), gamma);
            assert!(value >= base - 1e-10 * base.abs().max(1.0));
        }
    }

    #[test]
    fn fastqm_never_does_worse_than_pod_qm() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for trial in 0..4 {
            let (_, basis) = random_basis(&mut rng, 12, 16, 6);
            let (r, q) = (1 + trial % 2, 1 + trial % 3);
            let gamma = 0.01;
            let cfg = SolverConfig {
                grad_tol: 1e-6,
                max_iters: 300,
                ..SolverConfig::default()
            };
            let pod_qm = fit_pod_qm(&basis, r, q, gamma).unwrap();
            let (fast, report) = fit_fastqm(&basis, r, q, gamma, &cfg).unwrap();
            let e_pod = training_relative_error(&fit_pod(&basis, r).unwrap(), &basis).unwrap();
            let e_qm = training_relative_error(&pod_qm, &basis).unwrap();
            let e_fast = training_relative_error(&fast, &basis).unwrap();
            assert!(e_fast <= e_qm + 1e-10, "{e_fast} vs {e_qm}");
            assert!(e_qm <= e_pod + 1e-10, "{e_qm} vs {e_pod}");
            assert!(report
                .cost_history
                .windows(2)
                .all(|w| w[1] <= w[0] + 1e-12));
            fast.validate(Some(&basis)).unwrap();
        }
    }

    #[test]
    fn fastqm_on_already_optimal_data_stays_put() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        // data exactly in the span of the first two modes, zero quadratic residual
        let u = random_matrix(&mut rng, 10, 2);
        let coeff = random_matrix(&mut rng, 2, 14);
        let raw = u * coeff;
        let set = SnapshotSet::center(&raw, CenteringMode::Zero, None).unwrap();
        let basis = CandidateBasis::from_snapshots(&set, 3).unwrap();
        let cfg = SolverConfig::default();
        let (model, _) = fit_fastqm(&basis, 2, 1, 1e-6, &cfg).unwrap();
        let err = training_relative_error(&model, &basis).unwrap();
        assert!(err <= 1e-8, "training error {err}");
    }

    /// Brute-force greedy oracle evaluating the full-space objective for
    /// every candidate at every iteration.
    fn greedy_bruteforce(
        set: &SnapshotSet,
        basis: &CandidateBasis,
        r: usize,
        gamma: f64,
    ) -> (Vec<usize>, Vec<f64>) {
        let m = basis.m();
        let mut selected: Vec<usize> = Vec::new();
        let mut history = Vec::new();
        for _ in 0..r {
            let mut best: Option<(f64, usize)> = None;
            for j in 0..m {
                if selected.contains(&j) {
                    continue;
                }
                let lin: Vec<usize> = selected.iter().copied().chain([j]).collect();
                let pool: Vec<usize> = (0..m).filter(|i| !lin.contains(i)).collect();
                let mut v_lin = DMatrix::zeros(basis.state_dim(), lin.len());
                for (dst, &src) in lin.iter().enumerate() {
                    v_lin.set_column(dst, &basis.v_tilde().column(src));
                }
                let mut v_pool = DMatrix::zeros(basis.state_dim(), pool.len());
                for (dst, &src) in pool.iter().enumerate() {
                    v_pool.set_column(dst, &basis.v_tilde().column(src));
                }
                let w = khatri_rao_square(&(v_lin.transpose() * set.data()));
                let xi = solve_xi(&(v_pool.transpose() * set.data()), &w, gamma).unwrap();
                let value = full_objective(&xi, &v_lin, &v_pool, set.data(), gamma);
                if best.map(|(bv, _)| value < bv).unwrap_or(true) {
                    best = Some((value, j));
                }
            }
            let (value, j) = best.unwrap();
            selected.push(j);
            history.push(value);
        }
        (selected, history)
    }

    #[test]
    fn greedy_matches_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..5 {
            let (set, basis) = random_basis(&mut rng, 10, 18, 6);
            let gamma = 0.1;
            let (_, trace) = fit_greedy(&basis, 3, 2, gamma).unwrap();
            let (oracle_sel, oracle_hist) = greedy_bruteforce(&set, &basis, 3, gamma);
            assert_eq!(trace.selected_indices, oracle_sel);
            for (a, b) in trace.objective_history.iter().zip(&oracle_hist) {
                assert_relative_eq!(a, b, max_relative = 1e-9);
            }
            assert!(trace
                .objective_history
                .windows(2)
                .all(|w| w[1] <= w[0] + 1e-10));
        }
    }

    #[test]
    fn greedy_prefers_dominant_modes_without_quadratic_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        // strongly decaying spectrum, purely linear data
        let sig = [10.0, 8.0, 6.0, 0.5, 0.4, 0.3];
        let u = {
            let g = random_matrix(&mut rng, 20, 6);
            let qr = g.qr();
            qr.q()
        };
        let z = {
            let g = random_matrix(&mut rng, 30, 6);
            let qr = g.qr();
            qr.q()
        };
        let mut raw = DMatrix::zeros(20, 30);
        for (i, &s) in sig.iter().enumerate() {
            raw += u.column(i) * z.column(i).transpose() * s;
        }
        let set = SnapshotSet::center(&raw, CenteringMode::Zero, None).unwrap();
        let basis = CandidateBasis::from_snapshots(&set, 6).unwrap();
        let (_, trace) = fit_greedy(&basis, 3, 3, 1e-2).unwrap();
        let mut picked = trace.selected_indices.clone();
        picked.sort_unstable();
        assert_eq!(picked, vec![0, 1, 2]);
    }

    #[test]
    fn greedy_single_pick_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (set, basis) = random_basis(&mut rng, 9, 16, 5);
        let gamma = 0.05;
        let (_, trace) = fit_greedy(&basis, 1, 2, gamma).unwrap();
        let (oracle_sel, _) = greedy_bruteforce(&set, &basis, 1, gamma);
        assert_eq!(trace.selected_indices, oracle_sel);
    }

    #[test]
    fn encode_decode_round_trip_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let raw = random_matrix(&mut rng, 8, 12);
        let set = SnapshotSet::center(&raw, CenteringMode::Mean, None).unwrap();
        let basis = CandidateBasis::from_snapshots(&set, 4).unwrap();
        let model = fit_pod_qm(&basis, 2, 2, 0.1).unwrap();

        // s = reference maps to the origin and back
        let zero = model.encode(model.reference()).unwrap();
        assert!(zero.norm() < 1e-12);
        let back = model.decode(&zero).unwrap();
        assert_relative_eq!(&back, model.reference(), epsilon = 1e-12);

        // s = reference + v_r e_1 encodes to e_1
        let e1 = model.reference() + model.v_r().column(0).into_owned();
        let enc = model.encode(&e1).unwrap();
        assert_relative_eq!(enc[0], 1.0, epsilon = 1e-10);
        assert!(enc.rows(1, 1).norm() < 1e-10);

        // projection contraction
        for _ in 0..10 {
            let s = random_matrix(&mut rng, 8, 1).column(0).into_owned();
            let enc = model.encode(&s).unwrap();
            assert!(enc.norm() <= (&s - model.reference()).norm() + 1e-12);
        }

        // xi = 0 reduces decode to the linear reconstruction
        let linear = QuadraticManifoldModel::from_parts(
            model.reference().clone(),
            model.v_r().clone(),
            model.v_q().clone(),
            DMatrix::zeros(2, 3),
            0.0,
            Method::PodQm,
            None,
        )
        .unwrap();
        let s_hat = DVector::from_vec(vec![0.3, -1.1]);
        let lin_dec = linear.decode(&s_hat).unwrap();
        let expected = model.reference() + model.v_r() * &s_hat;
        assert_relative_eq!(lin_dec, expected, epsilon = 1e-12);
    }

    #[test]
    fn fit_dimension_guards() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let (_, basis) = random_basis(&mut rng, 8, 10, 4);
        assert!(fit_pod(&basis, 0).is_err());
        assert!(fit_pod(&basis, 5).is_err());
        assert!(fit_pod_qm(&basis, 3, 2, 0.1).is_err()); // r + q > m
        assert!(fit_pod_qm(&basis, 2, 0, 0.1).is_err());
        assert!(fit_greedy(&basis, 4, 1, 0.1).is_err());
        let cfg = SolverConfig::default();
        assert!(fit_fastqm(&basis, 4, 1, 0.1, &cfg).is_err());
    }
}
