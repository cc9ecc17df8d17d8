//! The FQM1 binary container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! bytes 0..4   magic "FQM1"
//! u64          metadata length in bytes
//! ...          metadata: UTF-8 "key=value" lines, one per entry
//! repeated until end of file:
//!   u64        block-name length in bytes
//!   ...        block name, UTF-8
//!   u64        rows
//!   u64        cols
//!   rows*cols  f64 values, IEEE-754 little-endian, column-major
//! ```
//!
//! Values round-trip bit-exactly. Metadata keys are stored sorted so that
//! writing the same content twice produces identical bytes.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub(crate) const MAGIC: &[u8; 4] = b"FQM1";

/// An FQM1 container: ordered metadata plus named f64 matrix blocks.
#[derive(Debug, Clone)]
pub struct Fqm1File {
    metadata: BTreeMap<String, String>,
    blocks: Vec<(String, DMatrix<f64>)>,
}

impl Fqm1File {
    /// New container of the given `kind` (stored as metadata).
    pub fn new(kind: &str) -> Self {
        let mut metadata = BTreeMap::new();
        metadata.insert("kind".to_string(), kind.to_string());
        metadata.insert("format_version".to_string(), "1".to_string());
        Fqm1File {
            metadata,
            blocks: Vec::new(),
        }
    }

    pub fn set_meta(&mut self, key: &str, value: &str) -> Result<()> {
        if key.is_empty() || key.contains('=') || key.contains('\n') {
            return Err(Error::format(format!("invalid metadata key '{key}'")));
        }
        if value.contains('\n') {
            return Err(Error::format("metadata values must be single-line"));
        }
        self.metadata.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        match self.meta("kind") {
            Some(k) if k == kind => Ok(()),
            Some(k) => Err(Error::format(format!(
                "expected a '{kind}' file, found kind '{k}'"
            ))),
            None => Err(Error::format("file has no 'kind' metadata")),
        }
    }

    pub fn push_block(&mut self, name: &str, matrix: DMatrix<f64>) -> Result<()> {
        if name.is_empty() {
            return Err(Error::format("block names must be nonempty"));
        }
        if self.blocks.iter().any(|(n, _)| n == name) {
            return Err(Error::format(format!("duplicate block '{name}'")));
        }
        self.blocks.push((name.to_string(), matrix));
        Ok(())
    }

    pub fn block(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
    }

    pub fn require_block(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.block(name)
            .ok_or_else(|| Error::format(format!("missing block '{name}'")))
    }

    pub fn blocks(&self) -> &[(String, DMatrix<f64>)] {
        &self.blocks
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        let mut header = String::new();
        for (k, v) in &self.metadata {
            header.push_str(k);
            header.push('=');
            header.push_str(v);
            header.push('\n');
        }
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(header.as_bytes())?;
        for (name, matrix) in &self.blocks {
            w.write_all(&(name.len() as u64).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(matrix.nrows() as u64).to_le_bytes())?;
            w.write_all(&(matrix.ncols() as u64).to_le_bytes())?;
            // nalgebra stores column-major, so the slice is already in
            // file order
            let mut buf = Vec::with_capacity(matrix.len() * 8);
            for v in matrix.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(&mut BufReader::new(file))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("not an FQM1 file (bad magic)"));
        }
        let header_len = read_u64(r)?;
        let mut header = vec![0u8; usize::try_from(header_len).map_err(oversize)?];
        r.read_exact(&mut header)?;
        let header =
            String::from_utf8(header).map_err(|_| Error::format("metadata is not UTF-8"))?;
        let mut metadata = BTreeMap::new();
        for line in header.lines() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("malformed metadata line '{line}'")))?;
            metadata.insert(k.to_string(), v.to_string());
        }
        let mut blocks = Vec::new();
        loop {
            let name_len = match read_u64_opt(r)? {
                Some(n) => n,
                None => break,
            };
            let mut name = vec![0u8; usize::try_from(name_len).map_err(oversize)?];
            r.read_exact(&mut name)?;
            let name =
                String::from_utf8(name).map_err(|_| Error::format("block name is not UTF-8"))?;
            let rows = usize::try_from(read_u64(r)?).map_err(oversize)?;
            let cols = usize::try_from(read_u64(r)?).map_err(oversize)?;
            let count = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::format("block size overflow"))?;
            let mut buf = vec![0u8; count * 8];
            r.read_exact(&mut buf)?;
            let values: Vec<f64> = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blocks.push((name, DMatrix::from_column_slice(rows, cols, &values)));
        }
        Ok(Fqm1File { metadata, blocks })
    }
}

fn oversize<E>(_: E) -> Error {
    Error::format("size field exceeds the addressable range")
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Like `read_u64`, but a clean end-of-stream yields `None`.
fn read_u64_opt(r: &mut impl Read) -> Result<Option<u64>> {
    let mut buf = [0u8; 8];
    let mut filled = 0;
    while filled < 8 {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(Error::format("truncated block header"));
        }
        filled += n;
    }
    Ok(Some(u64::from_le_bytes(buf)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = DMatrix::from_fn(37, 23, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * 1e3
        });
        let mut file = Fqm1File::new("matrix");
        file.set_meta("note", "round trip").unwrap();
        file.push_block("data", m.clone()).unwrap();
        let mut bytes = Vec::new();
        file.write_to(&mut bytes).unwrap();
        let loaded = Fqm1File::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(loaded.meta("note"), Some("round trip"));
        let got = loaded.block("data").unwrap();
        assert_eq!(got.shape(), m.shape());
        for (a, b) in got.iter().zip(m.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn special_values_survive() {
        let m = DMatrix::from_column_slice(
            2,
            3,
            &[0.0, -0.0, f64::MIN_POSITIVE, f64::MAX, 1e-308, -7.25],
        );
        let mut file = Fqm1File::new("matrix");
        file.push_block("data", m.clone()).unwrap();
        let mut bytes = Vec::new();
        file.write_to(&mut bytes).unwrap();
        let loaded = Fqm1File::read_from(&mut bytes.as_slice()).unwrap();
        for (a, b) in loaded.block("data").unwrap().iter().zip(m.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn writes_are_deterministic() {
        let mut a = Fqm1File::new("matrix");
        a.set_meta("zebra", "1").unwrap();
        a.set_meta("alpha", "2").unwrap();
        a.push_block("data", DMatrix::identity(3, 3)).unwrap();
        let mut b = Fqm1File::new("matrix");
        b.set_meta("alpha", "2").unwrap();
        b.set_meta("zebra", "1").unwrap();
        b.push_block("data", DMatrix::identity(3, 3)).unwrap();
        let mut bytes_a = Vec::new();
        let mut bytes_b = Vec::new();
        a.write_to(&mut bytes_a).unwrap();
        b.write_to(&mut bytes_b).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Fqm1File::read_from(&mut &b"NOPE"[..]).is_err());
        let mut file = Fqm1File::new("matrix");
        assert!(file.set_meta("bad=key", "x").is_err());
        assert!(file.set_meta("key", "two\nlines").is_err());
        file.push_block("data", DMatrix::zeros(1, 1)).unwrap();
        assert!(file.push_block("data", DMatrix::zeros(1, 1)).is_err());
        // truncated payload
        let mut bytes = Vec::new();
        file.write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(Fqm1File::read_from(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn empty_blocks_are_fine() {
        let mut file = Fqm1File::new("model");
        file.push_block("v_q", DMatrix::zeros(5, 0)).unwrap();
        file.push_block("xi", DMatrix::zeros(0, 0)).unwrap();
        let mut bytes = Vec::new();
        file.write_to(&mut bytes).unwrap();
        let loaded = Fqm1File::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(loaded.block("v_q").unwrap().shape(), (5, 0));
        assert_eq!(loaded.block("xi").unwrap().shape(), (0, 0));
    }
}
