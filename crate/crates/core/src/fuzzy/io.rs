//! Binary matrix file.
//!
//! A JSON header line, then one block per relation (primary set first, then
//! the dense variant when `dense_variant` is set). All integers are
//! little-endian `u32`, values little-endian `f64`.
//!
//! ```text
//! block  := kind:u8 relation:u32 records:u32 record*
//! sparse record (kind 0) := row:u32 nnz:u32 (col:u32 value:f64)*
//! dense record  (kind 1) := row:u32 value:f64 * entities
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::{FuzzyError, FuzzyMatrix, MatrixSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixFileHeader {
    pub entities: usize,
    pub relations: usize,
    pub dtype: String,
    pub layout: String,
    #[serde(default)]
    pub dense_variant: bool,
}

const SPARSE: u8 = 0;
const DENSE: u8 = 1;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> FuzzyError + '_ {
    move |source| FuzzyError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn fmt_err(path: &Path, message: impl Into<String>) -> FuzzyError {
    FuzzyError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn write_block<T: Scalar>(
    w: &mut impl Write,
    r: usize,
    m: &FuzzyMatrix<T>,
) -> std::io::Result<()> {
    if m.is_dense() {
        w.write_all(&[DENSE])?;
        w.write_all(&(r as u32).to_le_bytes())?;
        w.write_all(&(m.rows() as u32).to_le_bytes())?;
        for i in 0..m.rows() {
            w.write_all(&(i as u32).to_le_bytes())?;
            for j in 0..m.cols() {
                w.write_all(&m.get(i, j).to_f64_lossy().to_le_bytes())?;
            }
        }
    } else {
        let rows: Vec<usize> = (0..m.rows()).filter(|&i| m.row(i).stored_len() > 0).collect();
        w.write_all(&[SPARSE])?;
        w.write_all(&(r as u32).to_le_bytes())?;
        w.write_all(&(rows.len() as u32).to_le_bytes())?;
        for i in rows {
            let row = m.row(i);
            w.write_all(&(i as u32).to_le_bytes())?;
            w.write_all(&(row.stored_len() as u32).to_le_bytes())?;
            for (j, v) in row.nonzeros() {
                w.write_all(&(j as u32).to_le_bytes())?;
                w.write_all(&v.to_f64_lossy().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn write_matrix_set<T: Scalar>(set: &MatrixSet<T>, path: &Path) -> Result<(), FuzzyError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let header = MatrixFileHeader {
        entities: set.entity_count(),
        relations: set.relation_count(),
        dtype: "f64".into(),
        layout: "row-sparse".into(),
        dense_variant: set.dense_variant().is_some(),
    };
    let mut line = serde_json::to_string(&header).expect("header serializes");
    line.push('\n');
    let mut go = || -> std::io::Result<()> {
        w.write_all(line.as_bytes())?;
        for (r, m) in set.primary().matrices().iter().enumerate() {
            write_block(&mut w, r, m)?;
        }
        if let Some(dense) = set.dense_variant() {
            for (r, m) in dense.matrices().iter().enumerate() {
                write_block(&mut w, r, m)?;
            }
        }
        w.flush()
    };
    go().map_err(io_err(path))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], FuzzyError> {
        if self.at + n > self.bytes.len() {
            return Err(fmt_err(self.path, format!("truncated at byte {}", self.at)));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FuzzyError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, FuzzyError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64, FuzzyError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn read_block<T: Scalar>(
    c: &mut Cursor<'_>,
    n: usize,
    expect_r: usize,
) -> Result<FuzzyMatrix<T>, FuzzyError> {
    let kind = c.u8()?;
    let r = c.u32()?;
    if r != expect_r {
        return Err(fmt_err(c.path, format!("expected block for r{expect_r}, found r{r}")));
    }
    let records = c.u32()?;
    if records > n {
        return Err(fmt_err(c.path, format!("block r{r} has {records} rows for {n} entities")));
    }
    let bad = |e: FuzzyError| fmt_err(c.path, format!("block r{r}: {e}"));
    match kind {
        SPARSE => {
            let mut data: Vec<Vec<(u32, T)>> = vec![Vec::new(); n];
            for _ in 0..records {
                let row = c.u32()?;
                let nnz = c.u32()?;
                if row >= n || nnz > n {
                    return Err(fmt_err(c.path, format!("block r{r}: bad row record {row}")));
                }
                let mut entries = Vec::with_capacity(nnz);
                for _ in 0..nnz {
                    let col = c.u32()? as u32;
                    entries.push((col, T::from_f64_lossy(c.f64()?)));
                }
                data[row] = entries;
            }
            FuzzyMatrix::from_sparse_rows(n, n, data).map_err(bad)
        }
        DENSE => {
            let mut vals = vec![T::zero(); n * n];
            for _ in 0..records {
                let row = c.u32()?;
                if row >= n {
                    return Err(fmt_err(c.path, format!("block r{r}: bad row {row}")));
                }
                for j in 0..n {
                    vals[row * n + j] = T::from_f64_lossy(c.f64()?);
                }
            }
            FuzzyMatrix::from_dense(n, n, vals).map_err(bad)
        }
        k => Err(fmt_err(c.path, format!("unknown block kind {k}"))),
    }
}

pub fn read_matrix_set<T: Scalar>(path: &Path) -> Result<MatrixSet<T>, FuzzyError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(io_err(path))?)
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| fmt_err(path, "missing header line"))?;
    let header: MatrixFileHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| fmt_err(path, format!("bad header: {e}")))?;
    if header.dtype != "f64" {
        return Err(fmt_err(path, format!("unsupported dtype {}", header.dtype)));
    }
    let mut c = Cursor {
        bytes: &bytes,
        at: nl + 1,
        path,
    };
    let n = header.entities;
    let primary = (0..header.relations)
        .map(|r| read_block(&mut c, n, r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut set = MatrixSet::new(n, primary).map_err(|e| fmt_err(path, e.to_string()))?;
    if header.dense_variant {
        let dense = (0..header.relations)
            .map(|r| read_block(&mut c, n, r))
            .collect::<Result<Vec<_>, _>>()?;
        set = set
            .with_dense_variant(dense)
            .map_err(|e| fmt_err(path, e.to_string()))?;
    }
    if c.at != bytes.len() {
        return Err(fmt_err(path, "trailing bytes after last block"));
    }
    Ok(set)
}
