//! Plain numeric CSV matrices.
//!
//! One row per line, comma-separated, `#` lines are comments. Floats are
//! written in Rust's shortest round-trip form, so reading back reproduces
//! the exact values. Matrices above [`super::MAX_CSV_ENTRIES`] entries are
//! rejected in both directions; use FQM1 for those.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn write_csv_matrix(path: &Path, matrix: &DMatrix<f64>, comments: &[String]) -> Result<()> {
    if matrix.len() > super::MAX_CSV_ENTRIES {
        return Err(Error::format(format!(
            "matrix with {} entries exceeds the CSV limit of {}; write FQM1 instead",
            matrix.len(),
            super::MAX_CSV_ENTRIES
        )));
    }
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let mut line = String::new();
    for i in 0..matrix.nrows() {
        line.clear();
        for j in 0..matrix.ncols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&matrix[(i, j)].to_string());
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut entries = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for field in trimmed.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::format(format!(
                    "{}:{}: '{}' is not a number",
                    path.display(),
                    lineno + 1,
                    field.trim()
                ))
            })?;
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::format(format!(
                    "{}:{}: expected {} fields, found {}",
                    path.display(),
                    lineno + 1,
                    w,
                    row.len()
                )));
            }
            _ => {}
        }
        entries += row.len();
        if entries > super::MAX_CSV_ENTRIES {
            return Err(Error::format(format!(
                "{} exceeds the CSV limit of {} entries; convert it to FQM1",
                path.display(),
                super::MAX_CSV_ENTRIES
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    let nrows = rows.len();
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
