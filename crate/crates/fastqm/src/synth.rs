//! Synthetic problem generators for desk-scale validation.
//!
//! Two families: a two-dimensional parabolic trajectory whose quadratic
//! structure a single linear mode cannot capture, and a seeded
//! higher-dimensional generator with exact quadratic structure planted in a
//! known subspace.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::qmfit::solve_xi;
use crate::snapshots::{CandidateBasis, CenteringMode, SnapshotSet};
use crate::tensorops::{compressed_len, khatri_rao_square};

/// Default sampling interval of the parabola trajectory.
pub const PARABOLA_T_RANGE: (f64, f64) = (-0.75, 1.25);

/// Which synthetic problem to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Parabola2d,
    PolyManifold,
}

/// Generator parameters; `t_range` applies to the parabola, the dimension
/// fields to the polynomial manifold.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub samples: usize,
    pub t_range: (f64, f64),
    pub state_dim: usize,
    pub intrinsic_dim: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn parabola(samples: usize) -> Self {
        SynthSpec {
            kind: SynthKind::Parabola2d,
            samples,
            t_range: PARABOLA_T_RANGE,
            state_dim: 2,
            intrinsic_dim: 1,
            seed: 0,
        }
    }

    pub fn poly_manifold(state_dim: usize, intrinsic_dim: usize, samples: usize, seed: u64) -> Self {
        SynthSpec {
            kind: SynthKind::PolyManifold,
            samples,
            t_range: PARABOLA_T_RANGE,
            state_dim,
            intrinsic_dim,
            seed,
        }
    }

    pub fn generate(&self) -> Result<SnapshotSet> {
        if self.samples < 2 {
            return Err(Error::invalid("at least two samples are required"));
        }
        if self.t_range.0 >= self.t_range.1 {
            return Err(Error::invalid("degenerate sampling interval"));
        }
        match self.kind {
            SynthKind::Parabola2d => gen_parabola_over(self.samples, self.t_range),
            SynthKind::PolyManifold => {
                gen_poly_manifold(self.state_dim, self.intrinsic_dim, self.samples, self.seed)
            }
        }
    }
}

/// Trajectory `s(t) = [t, t²]ᵀ` sampled uniformly on `[−0.75, 1.25]`, with
/// zero reference vector. Deterministic.
pub fn gen_parabola(samples: usize) -> Result<SnapshotSet> {
    gen_parabola_over(samples, PARABOLA_T_RANGE)
}

fn gen_parabola_over(samples: usize, (t0, t1): (f64, f64)) -> Result<SnapshotSet> {
    if samples < 2 {
        return Err(Error::invalid("at least two samples are required"));
    }
    let step = (t1 - t0) / (samples - 1) as f64;
    let data = DMatrix::from_fn(2, samples, |i, k| {
        let t = t0 + step * k as f64;
        if i == 0 {
            t
        } else {
            t * t
        }
    });
    SnapshotSet::from_centered(data, DVector::zeros(2), CenteringMode::Zero)
}

/// Snapshots `s_k = U a_k + V H csq(a_k)` with random orthonormal `U`
/// (`N × r_true`), `V` orthogonal to `U` (`N × r_true(r_true+1)/2`), a fixed
/// random coupling `H`, and latent samples `a_k` uniform on `[−1, 1]`.
/// Bit-reproducible for a fixed seed.
///
/// By construction an exact quadratic decoder exists with
/// `(r, q) = (r_true, r_true(r_true+1)/2)` inside the span of
/// `m = r + q` candidate modes.
pub fn gen_poly_manifold(
    state_dim: usize,
    r_true: usize,
    samples: usize,
    seed: u64,
) -> Result<SnapshotSet> {
    if r_true == 0 {
        return Err(Error::invalid("intrinsic dimension must be at least 1"));
    }
    let nw = compressed_len(r_true);
    if state_dim < r_true + nw {
        return Err(Error::invalid(format!(
            "state dimension {state_dim} is too small; need at least r(r+3)/2 = {}",
            r_true + nw
        )));
    }
    if samples < 2 {
        return Err(Error::invalid("at least two samples are required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss: DMatrix<f64> =
        DMatrix::from_fn(state_dim, r_true + nw, |_, _| StandardNormal.sample(&mut rng));
    let qr = gauss.qr();
    let mut frame = qr.q();
    let rmat = qr.r();
    for j in 0..frame.ncols() {
        if rmat[(j, j)] < 0.0 {
            for i in 0..frame.nrows() {
                frame[(i, j)] = -frame[(i, j)];
            }
        }
    }
    let u = frame.columns(0, r_true).into_owned();
    let v = frame.columns(r_true, nw).into_owned();
    let coupling = DMatrix::from_fn(nw, nw, |_, _| {
        let g: f64 = StandardNormal.sample(&mut rng);
        0.5 * g
    });
    let unit = Uniform::new_inclusive(-1.0, 1.0)
        .map_err(|e| Error::invalid(format!("latent distribution: {e}")))?;
    let latents = DMatrix::from_fn(r_true, samples, |_, _| unit.sample(&mut rng));
    let data = &u * &latents + v * (coupling * khatri_rao_square(&latents));
    SnapshotSet::from_centered(data, DVector::zeros(state_dim), CenteringMode::Zero)
}

/// Training error of the two-dimensional quadratic manifold at a fixed
/// rotation angle, for each angle in `angles`.
///
/// The candidate frame is the full 2×2 basis of the data with the sign of
/// each singular vector fixed so its first component is positive; this pins
/// the orientation of the angle axis. For each `θ`,
/// `[Q_r Q_q] = [[cos θ, −sin θ], [sin θ, cos θ]]`, `Ξ` solves the inner
/// least-squares problem, and the training error is evaluated; `θ = 0`
/// therefore reproduces the POD-based quadratic manifold.
pub fn rotation_sweep(
    set: &SnapshotSet,
    angles: &[f64],
    gamma: f64,
) -> Result<Vec<(f64, f64)>> {
    if set.state_dim() != 2 {
        return Err(Error::invalid(format!(
            "rotation sweep requires two-dimensional states, got N = {}",
            set.state_dim()
        )));
    }
    let basis = CandidateBasis::from_snapshots(set, 2)?;
    // orientation convention: first component of each candidate mode positive
    let mut v = basis.v_tilde().clone();
    let mut s_tilde = basis.s_tilde().clone();
    for j in 0..2 {
        let lead = (0..2)
            .find(|&i| v[(i, j)].abs() > 1e-14)
            .unwrap_or(0);
        if v[(lead, j)] < 0.0 {
            for i in 0..2 {
                v[(i, j)] = -v[(i, j)];
            }
            for k in 0..s_tilde.ncols() {
                s_tilde[(j, k)] = -s_tilde[(j, k)];
            }
        }
    }
    let total = basis.total_energy();
    if total <= 0.0 {
        return Err(Error::invalid("snapshot data has zero energy"));
    }
    let mut out = Vec::with_capacity(angles.len());
    for &theta in angles {
        let (sin, cos) = theta.sin_cos();
        let a = s_tilde.row(0) * cos + s_tilde.row(1) * sin;
        let p = s_tilde.row(0) * (-sin) + s_tilde.row(1) * cos;
        let a = DMatrix::from_rows(&[a]);
        let p = DMatrix::from_rows(&[p]);
        let w = khatri_rao_square(&a);
        let xi = solve_xi(&p, &w, gamma)?;
        let xi_w = &xi * &w;
        let resid_sq = (total - a.norm_squared() + xi_w.norm_squared() - 2.0 * p.dot(&xi_w))
            .max(0.0);
        out.push((theta, (resid_sq / total).sqrt()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmfit::{fit_fastqm, fit_pod, training_relative_error};
    use crate::stiefel::SolverConfig;
    use approx::assert_relative_eq;

    #[test]
    fn parabola_grid_endpoints_and_midpoint() {
        let set = gen_parabola(25).unwrap();
        assert_eq!(set.data().shape(), (2, 25));
        let first = set.data().column(0);
        assert_relative_eq!(first[0], -0.75);
        assert_relative_eq!(first[1], 0.5625);
        let last = set.data().column(24);
        assert_relative_eq!(last[0], 1.25);
        assert_relative_eq!(last[1], 1.5625);
        // sample 13 of 25 sits at t = 0.25
        let mid = set.data().column(12);
        assert_relative_eq!(mid[0], 0.25, epsilon = 1e-14);
        assert_relative_eq!(mid[1], 0.0625, epsilon = 1e-14);
        assert!(set.reference().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parabola_is_deterministic() {
        let a = gen_parabola(25).unwrap();
        let b = gen_parabola(25).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(gen_parabola(1).is_err());
    }

    #[test]
    fn rotation_zero_matches_pod_qm_error() {
        let set = gen_parabola(25).unwrap();
        let table = rotation_sweep(&set, &[0.0], 0.0).unwrap();
        assert_relative_eq!(table[0].1, 0.365876, epsilon = 5e-4);
    }

    #[test]
    fn rotation_error_is_pi_periodic() {
        let set = gen_parabola(25).unwrap();
        let thetas: Vec<f64> = (0..10).map(|k| 0.3 * k as f64).collect();
        let shifted: Vec<f64> = thetas.iter().map(|t| t + std::f64::consts::PI).collect();
        let base = rotation_sweep(&set, &thetas, 0.0).unwrap();
        let moved = rotation_sweep(&set, &shifted, 0.0).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            assert_relative_eq!(a.1, b.1, max_relative = 1e-8);
        }
    }

    #[test]
    fn rotation_sweep_rejects_higher_dimensions() {
        let set = gen_poly_manifold(10, 2, 12, 0).unwrap();
        assert!(rotation_sweep(&set, &[0.0], 0.0).is_err());
    }

    #[test]
    fn poly_manifold_is_seed_reproducible() {
        let a = gen_poly_manifold(20, 2, 15, 42).unwrap();
        let b = gen_poly_manifold(20, 2, 15, 42).unwrap();
        let c = gen_poly_manifold(20, 2, 15, 43).unwrap();
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
        assert!(gen_poly_manifold(4, 2, 15, 0).is_err()); // needs N >= 5
    }

    #[test]
    fn poly_manifold_quadratic_energy_is_substantial() {
        // POD at r_true leaves much more error than the planted structure
        let set = gen_poly_manifold(40, 2, 30, 1).unwrap();
        let basis = CandidateBasis::from_snapshots(&set, 5).unwrap();
        let pod = fit_pod(&basis, 2).unwrap();
        let e_pod = training_relative_error(&pod, &basis).unwrap();
        assert!(e_pod > 0.05, "quadratic component too weak: {e_pod}");
    }

    #[test]
    fn poly_manifold_exact_structure_is_recoverable() {
        let set = gen_poly_manifold(30, 2, 25, 3).unwrap();
        let basis = CandidateBasis::from_snapshots(&set, 5).unwrap();
        let cfg = SolverConfig {
            grad_tol: 1e-10,
            max_iters: 2000,
            ..SolverConfig::default()
        };
        let (model, _) = fit_fastqm(&basis, 2, 3, 0.0, &cfg).unwrap();
        let err = training_relative_error(&model, &basis).unwrap();
        assert!(err <= 1e-6, "training error {err}");
    }
}
