//! Snapshot ingestion, centering, and candidate-basis extraction.
//!
//! A snapshot matrix collects state observations as columns. Centering
//! subtracts a reference vector (zero, the column mean, the first snapshot,
//! or a user-supplied vector). The candidate basis holds the `m` leading
//! left singular vectors of the centered data together with the projected
//! snapshots `S̃ = Ṽᵀ S`; every fitting method in this crate searches inside
//! that span.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// How the reference vector of a [`SnapshotSet`] is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CenteringMode {
    /// Reference is the zero vector; data is used as given.
    Zero,
    /// Reference is the column-wise mean of the raw snapshots.
    Mean,
    /// Reference is the first snapshot.
    Initial,
    /// Reference supplied by the caller.
    Custom,
}

impl CenteringMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CenteringMode::Zero => "zero",
            CenteringMode::Mean => "mean",
            CenteringMode::Initial => "initial",
            CenteringMode::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(CenteringMode::Zero),
            "mean" => Ok(CenteringMode::Mean),
            "initial" => Ok(CenteringMode::Initial),
            "custom" => Ok(CenteringMode::Custom),
            other => Err(Error::invalid(format!(
                "unknown centering mode '{other}' (expected zero|mean|initial|custom)"
            ))),
        }
    }
}

/// Centered snapshot matrix with its reference vector.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    data: DMatrix<f64>,
    reference: DVector<f64>,
    centering: CenteringMode,
}

impl SnapshotSet {
    /// Centers raw snapshots: `data[:, k] = raw[:, k] − reference`.
    pub fn center(
        raw: &DMatrix<f64>,
        mode: CenteringMode,
        custom_ref: Option<&DVector<f64>>,
    ) -> Result<Self> {
        let (n, k) = raw.shape();
        if n == 0 || k == 0 {
            return Err(Error::invalid("snapshot matrix must be nonempty"));
        }
        let reference = match mode {
            CenteringMode::Zero => DVector::zeros(n),
            CenteringMode::Mean => {
                let mut mean = DVector::zeros(n);
                for col in raw.column_iter() {
                    mean += col;
                }
                mean / k as f64
            }
            CenteringMode::Initial => raw.column(0).into_owned(),
            CenteringMode::Custom => {
                let r = custom_ref.ok_or_else(|| {
                    Error::invalid("centering mode 'custom' requires a reference vector")
                })?;
                if r.len() != n {
                    return Err(Error::invalid(format!(
                        "custom reference length {} does not match state dimension {}",
                        r.len(),
                        n
                    )));
                }
                r.clone()
            }
        };
        let mut data = raw.clone();
        for mut col in data.column_iter_mut() {
            col -= &reference;
        }
        Ok(SnapshotSet {
            data,
            reference,
            centering: mode,
        })
    }

    /// Wraps already-centered data with its reference vector.
    pub fn from_centered(
        data: DMatrix<f64>,
        reference: DVector<f64>,
        centering: CenteringMode,
    ) -> Result<Self> {
        if data.nrows() != reference.len() {
            return Err(Error::invalid(format!(
                "reference length {} does not match state dimension {}",
                reference.len(),
                data.nrows()
            )));
        }
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(Error::invalid("snapshot matrix must be nonempty"));
        }
        Ok(SnapshotSet {
            data,
            reference,
            centering,
        })
    }

    /// Centered data matrix (`N × K`).
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// The reference vector subtracted from every snapshot.
    pub fn reference(&self) -> &DVector<f64> {
        &self.reference
    }

    pub fn centering(&self) -> CenteringMode {
        self.centering
    }

    /// State dimension `N`.
    pub fn state_dim(&self) -> usize {
        self.data.nrows()
    }

    /// Number of snapshots `K`.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    /// Raw (uncentered) snapshot `k`.
    pub fn raw_column(&self, k: usize) -> DVector<f64> {
        self.data.column(k).into_owned() + &self.reference
    }
}

/// Leading left singular vectors of a snapshot set with the projected data.
#[derive(Debug, Clone)]
pub struct CandidateBasis {
    v_tilde: DMatrix<f64>,
    sigma: DVector<f64>,
    s_tilde: DMatrix<f64>,
    total_energy: f64,
    reference: DVector<f64>,
    centering: CenteringMode,
}

impl CandidateBasis {
    /// Extracts the `m` leading left singular vectors of the centered data.
    ///
    /// Stores all `min(N, K)` singular values, the projection `S̃ = Ṽᵀ S`,
    /// and the total energy `‖S‖_F²`. Requires `1 ≤ m ≤ min(N, K)`.
    pub fn from_snapshots(set: &SnapshotSet, m: usize) -> Result<Self> {
        let (n, k) = set.data().shape();
        let max_m = n.min(k);
        if m == 0 || m > max_m {
            return Err(Error::invalid(format!(
                "m must satisfy 1 <= m <= min(N, K) = {max_m}, got m = {m}"
            )));
        }
        let (u, sigma) = thin_left_svd(set.data(), m)?;
        let mut v_tilde = u.columns(0, m).into_owned();
        // guard the orthonormality invariant: SVD routines can lose accuracy
        // in directions whose singular values sit at the noise floor
        let defect = (v_tilde.transpose() * &v_tilde - DMatrix::identity(m, m)).norm();
        if defect > 1e-11 * (m as f64).sqrt() {
            v_tilde = reorthonormalize(&v_tilde);
        }
        let s_tilde = v_tilde.transpose() * set.data();
        let total_energy = set.data().iter().map(|v| v * v).sum();
        Ok(CandidateBasis {
            v_tilde,
            sigma,
            s_tilde,
            total_energy,
            reference: set.reference().clone(),
            centering: set.centering(),
        })
    }

    /// Rebuilds a basis from stored components (used by file loading).
    pub fn from_parts(
        v_tilde: DMatrix<f64>,
        sigma: DVector<f64>,
        s_tilde: DMatrix<f64>,
        total_energy: f64,
        reference: DVector<f64>,
        centering: CenteringMode,
    ) -> Result<Self> {
        let m = v_tilde.ncols();
        if sigma.len() < m {
            return Err(Error::invalid(
                "singular value vector shorter than basis size",
            ));
        }
        if s_tilde.nrows() != m {
            return Err(Error::invalid("projected data row count != basis size"));
        }
        if reference.len() != v_tilde.nrows() {
            return Err(Error::invalid("reference length != state dimension"));
        }
        Ok(CandidateBasis {
            v_tilde,
            sigma,
            s_tilde,
            total_energy,
            reference,
            centering,
        })
    }

    /// Candidate modes `Ṽ` (`N × m`, orthonormal columns).
    pub fn v_tilde(&self) -> &DMatrix<f64> {
        &self.v_tilde
    }

    /// Singular values (non-increasing, length `≥ m`).
    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    /// Projected snapshots `S̃ = Ṽᵀ S` (`m × K`).
    pub fn s_tilde(&self) -> &DMatrix<f64> {
        &self.s_tilde
    }

    /// `‖S‖_F²` of the centered training data.
    pub fn total_energy(&self) -> f64 {
        self.total_energy
    }

    pub fn reference(&self) -> &DVector<f64> {
        &self.reference
    }

    pub fn centering(&self) -> CenteringMode {
        self.centering
    }

    /// Number of candidate modes `m`.
    pub fn m(&self) -> usize {
        self.v_tilde.ncols()
    }

    /// State dimension `N`.
    pub fn state_dim(&self) -> usize {
        self.v_tilde.nrows()
    }

    /// Number of training snapshots `K`.
    pub fn len(&self) -> usize {
        self.s_tilde.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.s_tilde.ncols() == 0
    }

    /// Restriction to the leading `m_new ≤ m` candidate modes.
    pub fn truncated(&self, m_new: usize) -> Result<CandidateBasis> {
        if m_new == 0 || m_new > self.m() {
            return Err(Error::invalid(format!(
                "truncation size {m_new} out of range 1..={}",
                self.m()
            )));
        }
        Ok(CandidateBasis {
            v_tilde: self.v_tilde.columns(0, m_new).into_owned(),
            sigma: self.sigma.clone(),
            s_tilde: self.s_tilde.rows(0, m_new).into_owned(),
            total_energy: self.total_energy,
            reference: self.reference.clone(),
            centering: self.centering,
        })
    }

    /// Relative POD projection error `√(Σ_{i>r} σ_i² / ‖S‖_F²)` for the
    /// leading `r ≤ m` modes.
    ///
    /// The tail energy is computed as `‖S‖_F²` minus the retained energy,
    /// which also accounts for singular values beyond the stored ones.
    pub fn pod_projection_error(&self, r: usize) -> Result<f64> {
        if r > self.m() {
            return Err(Error::invalid(format!(
                "r = {r} exceeds the number of candidate modes m = {}",
                self.m()
            )));
        }
        if self.total_energy <= 0.0 {
            return Err(Error::invalid("total snapshot energy is zero"));
        }
        let retained: f64 = (0..r).map(|i| self.sigma[i] * self.sigma[i]).sum();
        let tail = (self.total_energy - retained).max(0.0);
        Ok((tail / self.total_energy).sqrt())
    }
}

/// QR pass with a sign-fixed diagonal; leaves already-orthonormal columns
/// essentially unchanged.
fn reorthonormalize(v: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = v.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Thin left SVD of `data`, returning `(U, σ)` with `U` holding all
/// `min(N, K)` left singular vectors and `σ` non-increasing.
///
/// For tall matrices the Gram route (eigendecomposition of `SᵀS`, the method
/// of snapshots) is used, with the left vectors re-orthonormalized by a QR
/// pass. It falls back to the direct SVD when the requested modes reach into
/// the numerical null space, where the Gram route loses accuracy.
fn thin_left_svd(data: &DMatrix<f64>, m: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (n, k) = data.shape();
    if n >= 4 * k {
        if let Some(out) = gram_left_svd(data, m) {
            return Ok(out);
        }
    }
    direct_left_svd(data)
}

fn direct_left_svd(data: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let svd = data.clone().svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::numerical("SVD did not produce left singular vectors"))?;
    let mut sigma = svd.singular_values;
    // nalgebra sorts descending; enforce it anyway so downstream code can rely on it
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap());
    if order.windows(2).any(|w| w[0] > w[1]) {
        let u_sorted = DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, order[j])]);
        let s_sorted = DVector::from_fn(sigma.len(), |i, _| sigma[order[i]]);
        return Ok((u_sorted, s_sorted));
    }
    for v in sigma.iter_mut() {
        if !v.is_finite() {
            return Err(Error::numerical("SVD produced non-finite singular values"));
        }
    }
    Ok((u, sigma))
}

/// Method of snapshots: eigendecomposition of the `K × K` Gram matrix.
/// Returns `None` when any of the leading `m` singular values is too small
/// relative to `σ₁` for `u_i = S z_i / σ_i` to be trustworthy.
fn gram_left_svd(data: &DMatrix<f64>, m: usize) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let k = data.ncols();
    let gram = data.transpose() * data;
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let sigma = DVector::from_fn(k, |i, _| eig.eigenvalues[order[i]].max(0.0).sqrt());
    if sigma[0] <= 0.0 || sigma[m - 1] <= 1e-9 * sigma[0] {
        return None;
    }
    let mut u = DMatrix::zeros(data.nrows(), k);
    for (col, &src) in order.iter().enumerate() {
        if sigma[col] > 1e-9 * sigma[0] {
            let z = eig.eigenvectors.column(src);
            u.set_column(col, &((data * z) / sigma[col]));
        }
        // columns past the numerical rank stay zero; they are never requested
        // because of the sigma guard above when col < m
    }
    // one re-orthonormalization pass over the leading columns
    let lead = u.columns(0, m).into_owned();
    let qr = lead.qr();
    let q = qr.q();
    let r = qr.r();
    let mut q = q;
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    for j in 0..m {
        u.set_column(j, &q.column(j));
    }
    Some((u, sigma))
}
