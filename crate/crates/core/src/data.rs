//! Dense float datasets, fvecs/ivecs file I/O and the exact brute-force
//! search oracle that everything else is measured against.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::linalg::dot;
use crate::topk::TopK;

#[derive(Debug)]
pub enum DataError {
    Io(io::Error),
    /// File held no records at all.
    NoRecords,
    /// A record's dimension disagreed with the first record.
    DimensionMismatch {
        expected: usize,
        actual: usize,
        record: usize,
    },
    TruncatedRecord {
        record: usize,
    },
    NonFinite {
        record: usize,
        index: usize,
    },
    ZeroNormRow {
        record: usize,
    },
    BadDim {
        query: usize,
        dataset: usize,
    },
    BadK {
        k: usize,
        n: usize,
    },
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Io(e) => write!(f, "i/o error: {e}"),
            DataError::NoRecords => write!(f, "no records"),
            DataError::DimensionMismatch {
                expected,
                actual,
                record,
            } => write!(
                f,
                "record {record} has dimension {actual}, expected {expected}"
            ),
            DataError::TruncatedRecord { record } => write!(f, "record {record} is truncated"),
            DataError::NonFinite { record, index } => {
                write!(f, "non-finite value at record {record}, index {index}")
            }
            DataError::ZeroNormRow { record } => write!(f, "row {record} has zero norm"),
            DataError::BadDim { query, dataset } => {
                write!(f, "query dimension {query} does not match dataset {dataset}")
            }
            DataError::BadK { k, n } => write!(f, "k = {k} out of range for {n} rows"),
        }
    }
}

impl std::error::Error for DataError {}

impl From<io::Error> for DataError {
    fn from(e: io::Error) -> Self {
        DataError::Io(e)
    }
}

/// Row-major dense matrix of f32 with at least one row. Immutable after
/// construction, so it can be shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    values: Vec<f32>,
}

impl Dataset {
    pub fn from_flat(dim: usize, values: Vec<f32>) -> Result<Self, DataError> {
        if dim == 0 || values.is_empty() {
            return Err(DataError::NoRecords);
        }
        if values.len() % dim != 0 {
            return Err(DataError::TruncatedRecord {
                record: values.len() / dim,
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    record: i / dim,
                    index: i % dim,
                });
            }
        }
        Ok(Dataset { dim, values })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::NoRecords);
        }
        let dim = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(DataError::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                    record: i,
                });
            }
        }
        Self::from_flat(dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least one row
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.values
    }

    /// Scale every row to unit Euclidean norm.
    pub fn l2_normalized(&self) -> Result<Dataset, DataError> {
        let mut out = Vec::with_capacity(self.values.len());
        for (i, row) in self.rows().enumerate() {
            let n = crate::linalg::norm(row);
            if n == 0.0 {
                return Err(DataError::ZeroNormRow { record: i });
            }
            out.extend(row.iter().map(|x| (*x as f64 / n) as f32));
        }
        Ok(Dataset {
            dim: self.dim,
            values: out,
        })
    }

    /// FNV-1a over the raw little-endian bytes; used to key caches.
    pub fn content_hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut byte = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        };
        for b in (self.dim as u32).to_le_bytes() {
            byte(b);
        }
        for v in &self.values {
            for b in v.to_le_bytes() {
                byte(b);
            }
        }
        h
    }
}

/// Read an fvecs file: repeated records of [int32 d][d × float32], all
/// little-endian.
pub fn load_fvecs<P: AsRef<Path>>(path: P) -> Result<Dataset, DataError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut dim: Option<usize> = None;
    let mut values: Vec<f32> = Vec::new();
    let mut record = 0usize;
    loop {
        let mut head = [0u8; 4];
        match reader.read_exact(&mut head) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let d = i32::from_le_bytes(head);
        if d <= 0 {
            return Err(DataError::DimensionMismatch {
                expected: dim.unwrap_or(0),
                actual: d.max(0) as usize,
                record,
            });
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(DataError::DimensionMismatch {
                    expected,
                    actual: d,
                    record,
                });
            }
            _ => {}
        }
        let mut payload = vec![0u8; d * 4];
        reader
            .read_exact(&mut payload)
            .map_err(|e| match e.kind() {
                io::ErrorKind::UnexpectedEof => DataError::TruncatedRecord { record },
                _ => DataError::Io(e),
            })?;
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(DataError::NonFinite { record, index: i });
            }
            values.push(v);
        }
        record += 1;
    }
    match dim {
        None => Err(DataError::NoRecords),
        Some(d) => Ok(Dataset { dim: d, values }),
    }
}

pub fn save_fvecs<P: AsRef<Path>>(data: &Dataset, path: P) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in data.rows() {
        w.write_all(&(data.dim as i32).to_le_bytes())?;
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read an ivecs file (same layout as fvecs with int32 payload). Rows may
/// have differing lengths, which ground-truth lists never do but the
/// format itself permits.
pub fn load_ivecs<P: AsRef<Path>>(path: P) -> Result<Vec<Vec<i32>>, DataError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut record = 0usize;
    loop {
        let mut head = [0u8; 4];
        match reader.read_exact(&mut head) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let d = i32::from_le_bytes(head);
        if d < 0 {
            return Err(DataError::TruncatedRecord { record });
        }
        let mut payload = vec![0u8; d as usize * 4];
        reader
            .read_exact(&mut payload)
            .map_err(|e| match e.kind() {
                io::ErrorKind::UnexpectedEof => DataError::TruncatedRecord { record },
                _ => DataError::Io(e),
            })?;
        rows.push(
            payload
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        );
        record += 1;
    }
    if rows.is_empty() {
        return Err(DataError::NoRecords);
    }
    Ok(rows)
}

pub fn save_ivecs<P: AsRef<Path>>(rows: &[Vec<i32>], path: P) -> Result<(), DataError> {
    if rows.is_empty() {
        return Err(DataError::NoRecords);
    }
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        w.write_all(&(row.len() as i32).to_le_bytes())?;
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Exact top answers for a query set, descending by inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub ids: Vec<Vec<u32>>,
    pub scores: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn depth(&self) -> usize {
        self.ids.first().map_or(0, |r| r.len())
    }
}

/// Exact top-k rows by inner product, descending, ties broken by the
/// smaller row id.
pub fn brute_force_topk(
    data: &Dataset,
    query: &[f32],
    k: usize,
) -> Result<Vec<(u32, f64)>, DataError> {
    if query.len() != data.dim() {
        return Err(DataError::BadDim {
            query: query.len(),
            dataset: data.dim(),
        });
    }
    if k == 0 || k > data.len() {
        return Err(DataError::BadK { k, n: data.len() });
    }
    let mut top = TopK::new(k);
    for (id, row) in data.rows().enumerate() {
        top.push(dot(query, row), id as u32);
    }
    Ok(top.into_sorted())
}

/// Ground truth for a whole query set. Parallel over queries; output
/// order always matches query order.
pub fn brute_force_ground_truth(
    data: &Dataset,
    queries: &Dataset,
    depth: usize,
) -> Result<GroundTruth, DataError> {
    if queries.dim() != data.dim() {
        return Err(DataError::BadDim {
            query: queries.dim(),
            dataset: data.dim(),
        });
    }
    if depth == 0 || depth > data.len() {
        return Err(DataError::BadK {
            k: depth,
            n: data.len(),
        });
    }
    let per_query: Vec<Vec<(u32, f64)>> = (0..queries.len())
        .into_par_iter()
        .map(|qi| brute_force_topk(data, queries.row(qi), depth).expect("checked above"))
        .collect();
    let ids = per_query
        .iter()
        .map(|r| r.iter().map(|(id, _)| *id).collect())
        .collect();
    let scores = per_query
        .iter()
        .map(|r| r.iter().map(|(_, s)| *s).collect())
        .collect();
    Ok(GroundTruth { ids, scores })
}
