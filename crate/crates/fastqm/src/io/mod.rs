//! File formats: the FQM1 binary container and plain CSV matrices.
//!
//! FQM1 is the exact-round-trip format for snapshot sets, candidate bases,
//! and fitted models; CSV is accepted for small matrices (at most
//! [`MAX_CSV_ENTRIES`] entries) as a convenience. Readers sniff the FQM1
//! magic bytes, so any matrix input may be given in either format.

mod csvmat;
mod fqm1;

pub use csvmat::{read_csv_matrix, write_csv_matrix};
pub use fqm1::Fqm1File;

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::qmfit::{FactorizedForm, Method, QuadraticManifoldModel};
use crate::snapshots::{CandidateBasis, CenteringMode, SnapshotSet};

/// Largest matrix (in entries) accepted or produced as CSV.
pub const MAX_CSV_ENTRIES: usize = 1_000_000;

/// True when the file starts with the FQM1 magic bytes.
pub fn is_fqm1(path: &Path) -> Result<bool> {
    use std::io::Read;
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    match file.read_exact(&mut magic) {
        Ok(()) => Ok(&magic == fqm1::MAGIC),
        Err(_) => Ok(false),
    }
}

/// Reads a plain matrix from either format. FQM1 files must carry a
/// `data` block (any `kind`); CSV files are size-limited.
pub fn read_matrix_auto(path: &Path) -> Result<DMatrix<f64>> {
    if is_fqm1(path)? {
        let file = Fqm1File::read(path)?;
        file.block("data")
            .cloned()
            .ok_or_else(|| Error::format(format!("{}: no 'data' block", path.display())))
    } else {
        read_csv_matrix(path)
    }
}

/// Writes a plain matrix, choosing the format by extension (`.csv` writes
/// CSV, anything else FQM1 with a single `data` block).
pub fn write_matrix_auto(path: &Path, matrix: &DMatrix<f64>, meta: &[(String, String)]) -> Result<()> {
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    if is_csv {
        let comments: Vec<String> = meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write_csv_matrix(path, matrix, &comments)
    } else {
        let mut file = Fqm1File::new("matrix");
        for (k, v) in meta {
            file.set_meta(k, v)?;
        }
        file.push_block("data", matrix.clone())?;
        file.write(path)
    }
}

/// Stores a snapshot set (centered data plus reference vector).
pub fn save_snapshots(path: &Path, set: &SnapshotSet, meta: &[(String, String)]) -> Result<()> {
    let mut file = Fqm1File::new("snapshots");
    file.set_meta("centering", set.centering().as_str())?;
    for (k, v) in meta {
        file.set_meta(k, v)?;
    }
    file.push_block("data", set.data().clone())?;
    file.push_block("reference", column_block(set.reference()))?;
    file.write(path)
}

pub fn load_snapshots(path: &Path) -> Result<SnapshotSet> {
    let file = Fqm1File::read(path)?;
    file.expect_kind("snapshots")?;
    let data = file.require_block("data")?.clone();
    let reference = block_column(file.require_block("reference")?)?;
    let centering = match file.meta("centering") {
        Some(s) => CenteringMode::parse(s)?,
        None => CenteringMode::Custom,
    };
    SnapshotSet::from_centered(data, reference, centering)
}

/// Stores a candidate basis together with the training reference.
pub fn save_basis(path: &Path, basis: &CandidateBasis, meta: &[(String, String)]) -> Result<()> {
    let mut file = Fqm1File::new("basis");
    file.set_meta("centering", basis.centering().as_str())?;
    file.set_meta("m", &basis.m().to_string())?;
    for (k, v) in meta {
        file.set_meta(k, v)?;
    }
    file.push_block("v_tilde", basis.v_tilde().clone())?;
    file.push_block("sigma", column_block(basis.sigma()))?;
    file.push_block("s_tilde", basis.s_tilde().clone())?;
    file.push_block(
        "total_energy",
        DMatrix::from_element(1, 1, basis.total_energy()),
    )?;
    file.push_block("reference", column_block(basis.reference()))?;
    file.write(path)
}

pub fn load_basis(path: &Path) -> Result<CandidateBasis> {
    let file = Fqm1File::read(path)?;
    file.expect_kind("basis")?;
    let v_tilde = file.require_block("v_tilde")?.clone();
    let sigma = block_column(file.require_block("sigma")?)?;
    let s_tilde = file.require_block("s_tilde")?.clone();
    let total = file.require_block("total_energy")?[(0, 0)];
    let reference = block_column(file.require_block("reference")?)?;
    let centering = match file.meta("centering") {
        Some(s) => CenteringMode::parse(s)?,
        None => CenteringMode::Custom,
    };
    CandidateBasis::from_parts(v_tilde, sigma, s_tilde, total, reference, centering)
}

/// Stores a fitted model (bases, coefficients, and, for Riemannian fits,
/// the rotation matrices).
pub fn save_model(
    path: &Path,
    model: &QuadraticManifoldModel,
    meta: &[(String, String)],
) -> Result<()> {
    let mut file = Fqm1File::new("model");
    file.set_meta("method", model.method().as_str())?;
    file.set_meta("gamma", &model.gamma().to_string())?;
    file.set_meta("r", &model.reduced_dim().to_string())?;
    file.set_meta("q", &model.quadratic_dim().to_string())?;
    for (k, v) in meta {
        file.set_meta(k, v)?;
    }
    file.push_block("reference", column_block(model.reference()))?;
    file.push_block("v_r", model.v_r().clone())?;
    file.push_block("v_q", model.v_q().clone())?;
    file.push_block("xi", model.xi().clone())?;
    if let Some(factor) = model.factor() {
        file.push_block("q_r", factor.q_r.clone())?;
        file.push_block("q_q", factor.q_q.clone())?;
    }
    file.write(path)
}

pub fn load_model(path: &Path) -> Result<QuadraticManifoldModel> {
    let file = Fqm1File::read(path)?;
    file.expect_kind("model")?;
    let reference = block_column(file.require_block("reference")?)?;
    let v_r = file.require_block("v_r")?.clone();
    let v_q = file.require_block("v_q")?.clone();
    let xi = file.require_block("xi")?.clone();
    let method = Method::parse(
        file.meta("method")
            .ok_or_else(|| Error::format("model file lacks a 'method' entry"))?,
    )?;
    let gamma: f64 = file
        .meta("gamma")
        .ok_or_else(|| Error::format("model file lacks a 'gamma' entry"))?
        .parse()
        .map_err(|e| Error::format(format!("bad gamma value: {e}")))?;
    let factor = match (file.block("q_r"), file.block("q_q")) {
        (Some(q_r), Some(q_q)) => Some(FactorizedForm {
            q_r: q_r.clone(),
            q_q: q_q.clone(),
        }),
        _ => None,
    };
    QuadraticManifoldModel::from_parts(reference, v_r, v_q, xi, gamma, method, factor)
}

fn column_block(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn block_column(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if m.ncols() != 1 {
        return Err(Error::format(format!(
            "expected a single-column block, found {} columns",
            m.ncols()
        )));
    }
    Ok(DVector::from_column_slice(m.as_slice()))
}
