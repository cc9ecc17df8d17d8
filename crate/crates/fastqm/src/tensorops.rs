//! Compressed quadratic feature maps.
//!
//! The Kronecker square `x ⊗ x` of a length-`r` vector contains every product
//! `x_i x_j` twice (once as `(i,j)`, once as `(j,i)`). All quadratic terms in
//! this crate use the compressed form that keeps only the `r(r+1)/2` unique
//! products, ordered lexicographically:
//!
//! ```text
//! (1,1), (1,2), ..., (1,r), (2,2), ..., (2,r), ..., (r,r)
//! ```
//!
//! No `√2` weighting is applied to the cross terms; the least-squares
//! coefficient matrix absorbs any scaling, but stored coefficients are only
//! meaningful together with this ordering convention.

use nalgebra::{DMatrix, DVector};

/// Number of unique entries in the compressed Kronecker square of a
/// length-`r` vector.
pub fn compressed_len(r: usize) -> usize {
    r * (r + 1) / 2
}

/// Fixed ordering of the unique index pairs `(i, j)`, `i ≤ j`, of the
/// compressed Kronecker square (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadIndexMap {
    r: usize,
    pairs: Vec<(usize, usize)>,
}

impl QuadIndexMap {
    pub fn new(r: usize) -> Self {
        let mut pairs = Vec::with_capacity(compressed_len(r));
        for i in 0..r {
            for j in i..r {
                pairs.push((i, j));
            }
        }
        QuadIndexMap { r, pairs }
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The `(i, j)` pair stored at compressed position `idx`.
    pub fn pair(&self, idx: usize) -> (usize, usize) {
        self.pairs[idx]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

/// Unique entries of `x ⊗ x`, ordered by [`QuadIndexMap`].
pub fn compressed_square(x: &DVector<f64>) -> DVector<f64> {
    let r = x.len();
    let mut out = DVector::zeros(compressed_len(r));
    let mut idx = 0;
    for i in 0..r {
        for j in i..r {
            out[idx] = x[i] * x[j];
            idx += 1;
        }
    }
    out
}

/// Columnwise compressed Kronecker square of an `r × K` matrix.
///
/// Column `k` of the result equals `compressed_square` of column `k` of `x`.
/// Applied to the reduced coordinates `Q_rᵀ S̃` this produces the quadratic
/// feature matrix `W` of the regularized least-squares fit.
pub fn khatri_rao_square(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, k) = x.shape();
    let mut out = DMatrix::zeros(compressed_len(r), k);
    for col in 0..k {
        let mut idx = 0;
        for i in 0..r {
            for j in i..r {
                out[(idx, col)] = x[(i, col)] * x[(j, col)];
                idx += 1;
            }
        }
    }
    out
}

/// Expands a compressed quadratic vector back to the full `r²` Kronecker
/// layout: entry `(i,j)` of the compressed vector lands at both flat
/// positions `i·r + j` and `j·r + i`.
///
/// The vector length must equal `r(r+1)/2`.
pub fn expand_to_full(w: &DVector<f64>, r: usize) -> DVector<f64> {
    debug_assert_eq!(w.len(), compressed_len(r));
    let mut out = DVector::zeros(r * r);
    let mut idx = 0;
    for i in 0..r {
        for j in i..r {
            out[i * r + j] = w[idx];
            out[j * r + i] = w[idx];
            idx += 1;
        }
    }
    out
}

/// Adjoint of the compressed-square map, used for gradient chain rules.
///
/// With `W = khatri_rao_square(A)` and `U = ∂J/∂W`, returns `∂J/∂A`:
/// row `l`, column `k` collects `U_{(i,j),k} A_{j,k}` over pairs with
/// `i = l` plus `U_{(i,j),k} A_{i,k}` over pairs with `j = l` (the diagonal
/// pair `(l,l)` contributes twice, matching `d(a_l²) = 2 a_l da_l`).
pub fn square_pullback(a: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, k) = a.shape();
    debug_assert_eq!(u.nrows(), compressed_len(r));
    debug_assert_eq!(u.ncols(), k);
    let mut out = DMatrix::zeros(r, k);
    for col in 0..k {
        let mut idx = 0;
        for i in 0..r {
            for j in i..r {
                let uv = u[(idx, col)];
                out[(i, col)] += uv * a[(j, col)];
                out[(j, col)] += uv * a[(i, col)];
                idx += 1;
            }
        }
    }
    out
}
