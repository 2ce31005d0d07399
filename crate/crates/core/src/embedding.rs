//! Descriptors, embedding sets and their on-disk format.
//!
//! A set is stored as two files: a little-endian binary matrix
//!
//! ```text
//! magic "ISCE" | version u32 | dim u32 | count u64 | count*dim f32 (row-major)
//! ```
//!
//! and a sidecar `<basename>.ids` with one UTF-8 id per line. Version 1 marks a
//! set of unit-norm descriptors, version 2 a set of raw feature vectors.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Allowed deviation of a descriptor's L2 norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Norms below this are treated as zero.
pub const MIN_NORM: f64 = 1e-12;

pub const MAGIC: &[u8; 4] = b"ISCE";
pub const VERSION_UNIT: u32 = 1;
pub const VERSION_RAW: u32 = 2;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

/// A unit-norm, finite descriptor held in 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(Vec<f64>);

impl Descriptor {
    /// Wraps `values`, checking that they are finite and of unit norm.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_unit(&values, 0)?;
        Ok(Descriptor(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&v| v as f32).collect()
    }
}

impl AsRef<[f64]> for Descriptor {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &[f64]) -> Result<Descriptor> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidDescriptor {
            row: 0,
            reason: "non-finite component".into(),
        });
    }
    let norm = l2_norm(v);
    if norm < MIN_NORM {
        return Err(Error::ZeroVector);
    }
    Ok(Descriptor(v.iter().map(|x| x / norm).collect()))
}

/// Inner product of a 64-bit query with a stored 32-bit row.
///
/// Eight independent accumulators keep the loop vectorizable; the summation
/// order is fixed, so results are reproducible.
#[inline]
pub fn dot_mixed(a: &[f64], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let xa = &a[c * 8..c * 8 + 8];
        let xb = &b[c * 8..c * 8 + 8];
        for l in 0..8 {
            acc[l] += xa[l] * xb[l] as f64;
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i] as f64;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn check_unit(values: &[f64], row: usize) -> Result<()> {
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidDescriptor {
            row,
            reason: "non-finite component".into(),
        });
    }
    let norm = l2_norm(values);
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::InvalidDescriptor {
            row,
            reason: format!("norm {norm} is not within {NORM_TOLERANCE} of 1"),
        });
    }
    Ok(())
}

/// Whether the rows of a set are unit-norm descriptors or raw feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetKind {
    Unit,
    Raw,
}

impl SetKind {
    fn version(self) -> u32 {
        match self {
            SetKind::Unit => VERSION_UNIT,
            SetKind::Raw => VERSION_RAW,
        }
    }
}

/// Ordered collection of vectors keyed by unique string ids. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    kind: SetKind,
}

impl EmbeddingSet {
    /// Builds a set of unit-norm descriptors; every row is validated.
    pub fn new(dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self> {
        Self::with_kind(dim, ids, data, SetKind::Unit)
    }

    /// Builds a set of raw (unnormalized) finite vectors.
    pub fn raw(dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self> {
        Self::with_kind(dim, ids, data, SetKind::Raw)
    }

    pub fn with_kind(dim: usize, ids: Vec<String>, data: Vec<f32>, kind: SetKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dim must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::ShapeMismatch {
                expected: ids.len() * dim,
                found: data.len(),
            });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if id.contains('\n') || id.contains('\r') {
                return Err(Error::Format(format!("id {id:?} contains a line break")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let mut row = vec![0.0f64; dim];
        for (i, chunk) in data.chunks_exact(dim).enumerate() {
            match kind {
                SetKind::Unit => {
                    for (r, &v) in row.iter_mut().zip(chunk) {
                        *r = v as f64;
                    }
                    check_unit(&row, i)?;
                }
                SetKind::Raw => {
                    if chunk.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidDescriptor {
                            row: i,
                            reason: "non-finite component".into(),
                        });
                    }
                }
            }
        }
        Ok(EmbeddingSet {
            dim,
            ids,
            data,
            kind,
        })
    }

    /// Collects descriptors into a unit set, storing them as 32-bit floats.
    pub fn from_descriptors(
        dim: usize,
        ids: Vec<String>,
        descriptors: &[Descriptor],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(descriptors.len() * dim);
        for d in descriptors {
            if d.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: d.dim(),
                });
            }
            data.extend(d.as_slice().iter().map(|&v| v as f32));
        }
        Self::new(dim, ids, data)
    }

    /// Builds a raw set from 64-bit rows.
    pub fn from_raw_rows(dim: usize, ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend(r.iter().map(|&v| v as f32));
        }
        Self::raw(dim, ids, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn kind(&self) -> SetKind {
        self.kind
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    /// Row `i` as a descriptor. Only meaningful for unit sets.
    pub fn descriptor(&self, i: usize) -> Descriptor {
        Descriptor(self.row_f64(i))
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// New set holding the given rows in the given order.
    pub fn select(&self, indices: &[usize]) -> EmbeddingSet {
        let mut ids = Vec::with_capacity(indices.len());
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            ids.push(self.ids[i].clone());
            data.extend_from_slice(self.row(i));
        }
        EmbeddingSet {
            dim: self.dim,
            ids,
            data,
            kind: self.kind,
        }
    }
}

/// Path of the id sidecar for a matrix file.
pub fn ids_path(path: &Path) -> PathBuf {
    path.with_extension("ids")
}

/// Writes the binary matrix to `path` and the ids to its `.ids` sidecar.
pub fn write_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&set.kind.version().to_le_bytes())?;
    let dim = u32::try_from(set.dim).map_err(|_| Error::Format("dim exceeds u32".into()))?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&(set.len() as u64).to_le_bytes())?;
    for v in &set.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;

    let mut ids = BufWriter::new(fs::File::create(ids_path(path))?);
    for id in &set.ids {
        ids.write_all(id.as_bytes())?;
        ids.write_all(b"\n")?;
    }
    ids.flush()?;
    Ok(())
}

/// Reads a set written by [`write_embeddings`].
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let (kind, dim, data) = decode_matrix(&bytes)?;
    let count = data.len() / dim;

    let text = fs::read_to_string(ids_path(path))?;
    let ids: Vec<String> = text.lines().map(str::to_owned).collect();
    if ids.len() != count {
        return Err(Error::Format(format!(
            "id sidecar holds {} lines, header declares {count}",
            ids.len()
        )));
    }
    EmbeddingSet::with_kind(dim, ids, data, kind)
}

fn decode_matrix(bytes: &[u8]) -> Result<(SetKind, usize, Vec<f32>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("file shorter than header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let kind = match version {
        VERSION_UNIT => SetKind::Unit,
        VERSION_RAW => SetKind::Raw,
        v => return Err(Error::Format(format!("unsupported version {v}"))),
    };
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if dim == 0 {
        return Err(Error::Format("dim is zero".into()));
    }
    let payload = &bytes[HEADER_LEN..];
    let row_bytes = dim * 4;
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(row_bytes))
        .ok_or_else(|| Error::Format("count overflows".into()))?;
    if payload.len() != expected {
        // A payload that is a whole number of rows of the declared width is a
        // truncated or padded file; one that only fits another width is a dim error.
        if !payload.len().is_multiple_of(row_bytes)
            && count > 0
            && payload.len().is_multiple_of(count as usize * 4)
        {
            return Err(Error::DimMismatch {
                expected: dim,
                found: payload.len() / (count as usize * 4),
            });
        }
        return Err(Error::Format(format!(
            "payload holds {} bytes, header declares {count} rows of dim {dim}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((kind, dim, data))
}
