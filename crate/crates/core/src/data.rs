//! Data series and dataset access.
//!
//! A dataset file is a headerless concatenation of little-endian `f32`
//! series, all of the same length. The length is supplied by the caller.
//! Datasets are either loaded fully into memory or kept on disk and read on
//! demand with positioned reads; both expose the same per-id access.

use std::borrow::Cow;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{check_dims, Error, Result};

/// Size in bytes of one stored value.
pub const VALUE_BYTES: usize = 4;

const DEGENERATE_STD: f64 = 1e-12;
const SCAN_CHUNK_BYTES: usize = 1 << 20;
/// Largest byte buffer a positioned read decodes through.
pub(crate) const READ_DECODE_BYTES: usize = 64 << 10;

/// Z-normalizes a series to population mean 0 and standard deviation 1.
///
/// Series whose standard deviation is below `1e-12` map to all zeros.
pub fn z_normalize(series: &[f32]) -> Result<Vec<f32>> {
    if series.is_empty() {
        return Err(Error::param("cannot normalize an empty series"));
    }
    if let Some(pos) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            id: 0,
            offset: (pos * VALUE_BYTES) as u64,
        });
    }
    let mut out = vec![0.0; series.len()];
    z_normalize_into(series, &mut out);
    Ok(out)
}

/// Unchecked variant writing into `out`; inputs must be finite and equal length.
pub(crate) fn z_normalize_into(series: &[f32], out: &mut [f32]) {
    debug_assert_eq!(series.len(), out.len());
    let n = series.len() as f64;
    let mean = series.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = series
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if std < DEGENERATE_STD {
        out.fill(0.0);
        return;
    }
    for (o, &v) in out.iter_mut().zip(series) {
        *o = ((v as f64 - mean) / std) as f32;
    }
}

/// How a dataset file is held after loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    InMemory,
    FileBacked,
}

#[derive(Debug)]
enum Source {
    Memory(Vec<f32>),
    File(File),
}

/// Read access to a collection of equal-length series, addressed by id.
#[derive(Debug)]
pub struct Dataset {
    dim: usize,
    count: usize,
    normalized: bool,
    checksum: u32,
    path: Option<PathBuf>,
    source: Source,
}

impl Dataset {
    /// Wraps a row-major block of `values.len() / dim` series.
    ///
    /// With `normalize` each series is z-normalized once here. The checksum
    /// is taken over the values as given.
    pub fn from_vec(mut values: Vec<f32>, dim: usize, normalize: bool) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dimension must be positive"));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::param(format!(
                "block of {} values is not a multiple of dimension {dim}",
                values.len()
            )));
        }
        validate_finite(&values, dim, 0)?;
        let checksum = checksum_values(&values);
        if normalize {
            normalize_rows(&mut values, dim);
        }
        Ok(Self {
            dim,
            count: values.len() / dim,
            normalized: normalize,
            checksum,
            path: None,
            source: Source::Memory(values),
        })
    }

    /// Opens a raw `f32` dataset file of series of length `dim`.
    ///
    /// The whole file is streamed once to validate values and compute the
    /// checksum. In file-backed mode only a bounded scan buffer is held.
    pub fn load(path: impl AsRef<Path>, dim: usize, mode: LoadMode, normalize: bool) -> Result<Self> {
        let path = path.as_ref();
        if dim == 0 {
            return Err(Error::param("dimension must be positive"));
        }
        let mut file = File::open(path)?;
        let size = file.metadata()?.len();
        let record = (dim * VALUE_BYTES) as u64;
        if size % record != 0 {
            return Err(Error::SizeMismatch { size, record, dim });
        }
        let count = (size / record) as usize;

        let mut hasher = crc32fast::Hasher::new();
        let mut kept = match mode {
            LoadMode::InMemory => Some(Vec::with_capacity(count * dim)),
            LoadMode::FileBacked => None,
        };
        let rows_per_chunk = (SCAN_CHUNK_BYTES / record as usize).max(1);
        let mut buf = vec![0u8; rows_per_chunk * record as usize];
        let mut values = Vec::with_capacity(rows_per_chunk * dim);
        let mut first_row = 0usize;
        while first_row < count {
            let rows = rows_per_chunk.min(count - first_row);
            let bytes = &mut buf[..rows * record as usize];
            file.read_exact(bytes)?;
            hasher.update(bytes);
            values.clear();
            values.extend(decode_f32(bytes));
            validate_finite(&values, dim, first_row)?;
            if let Some(kept) = kept.as_mut() {
                kept.extend_from_slice(&values);
            }
            first_row += rows;
        }

        let source = match kept {
            Some(mut values) => {
                if normalize {
                    normalize_rows(&mut values, dim);
                }
                Source::Memory(values)
            }
            None => Source::File(file),
        };
        Ok(Self {
            dim,
            count,
            normalized: normalize,
            checksum: hasher.finalize(),
            path: Some(path.to_path_buf()),
            source,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Whether series are z-normalized when read.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// CRC-32 of the stored (pre-normalization) payload.
    pub fn checksum(&self) -> u32 {
        self.checksum
    }

    /// File the dataset was loaded from, if any.
    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn is_file_backed(&self) -> bool {
        matches!(self.source, Source::File(_))
    }

    /// The contiguous payload when the dataset is memory resident.
    pub fn as_slice(&self) -> Option<&[f32]> {
        match &self.source {
            Source::Memory(v) => Some(v),
            Source::File(_) => None,
        }
    }

    /// The `id`-th series in file order.
    pub fn get_series(&self, id: usize) -> Result<Cow<'_, [f32]>> {
        self.check_id(id)?;
        match &self.source {
            Source::Memory(v) => Ok(Cow::Borrowed(&v[id * self.dim..(id + 1) * self.dim])),
            Source::File(_) => {
                let mut out = vec![0.0; self.dim];
                self.read_rows(id, &mut out)?;
                Ok(Cow::Owned(out))
            }
        }
    }

    /// Reads `out.len() / dim` consecutive series starting at `first`.
    pub fn read_rows(&self, first: usize, out: &mut [f32]) -> Result<()> {
        if !out.len().is_multiple_of(self.dim) {
            return Err(Error::param("output buffer is not a whole number of series"));
        }
        let rows = out.len() / self.dim;
        if rows == 0 {
            return Ok(());
        }
        self.check_id(first + rows - 1)?;
        match &self.source {
            Source::Memory(v) => {
                out.copy_from_slice(&v[first * self.dim..(first + rows) * self.dim]);
            }
            Source::File(file) => {
                let mut bytes = vec![0u8; (out.len() * VALUE_BYTES).min(READ_DECODE_BYTES)];
                let mut offset = (first * self.dim * VALUE_BYTES) as u64;
                for piece in out.chunks_mut(READ_DECODE_BYTES / VALUE_BYTES) {
                    let bytes = &mut bytes[..piece.len() * VALUE_BYTES];
                    read_exact_at(file, bytes, offset)?;
                    offset += bytes.len() as u64;
                    for (o, v) in piece.iter_mut().zip(decode_f32(bytes)) {
                        *o = v;
                    }
                }
                if self.normalized {
                    let mut scratch = vec![0.0; self.dim];
                    for row in out.chunks_exact_mut(self.dim) {
                        z_normalize_into(row, &mut scratch);
                        row.copy_from_slice(&scratch);
                    }
                }
            }
        }
        Ok(())
    }

    /// Copies every series into memory, normalizing if requested and not
    /// already done.
    pub fn to_memory(&self, normalize: bool) -> Result<Vec<f32>> {
        let mut values = vec![0.0; self.count * self.dim];
        // reading through read_rows applies the handle's own normalization
        const ROWS: usize = 4096;
        for (chunk_idx, chunk) in values.chunks_mut(ROWS * self.dim).enumerate() {
            self.read_rows(chunk_idx * ROWS, chunk)?;
        }
        if normalize && !self.normalized {
            normalize_rows(&mut values, self.dim);
        }
        Ok(values)
    }

    /// Memory-resident copy that keeps this handle's provenance and checksum.
    pub(crate) fn resident_copy(&self, normalize: bool) -> Result<Dataset> {
        Ok(Dataset {
            dim: self.dim,
            count: self.count,
            normalized: normalize || self.normalized,
            checksum: self.checksum,
            path: self.path.clone(),
            source: Source::Memory(self.to_memory(normalize)?),
        })
    }

    /// Reopens the backing file as a file-backed handle, without rescanning.
    pub(crate) fn reopen_file_backed(&self, normalize: bool) -> Result<Dataset> {
        let path = self
            .path
            .as_ref()
            .ok_or_else(|| Error::param("disk storage requires a dataset loaded from a file"))?;
        let file = File::open(path)?;
        let size = file.metadata()?.len();
        let expected = (self.count * self.dim * VALUE_BYTES) as u64;
        if size != expected {
            return Err(Error::Integrity(format!(
                "{} is {size} bytes, expected {expected}",
                path.display()
            )));
        }
        Ok(Dataset {
            dim: self.dim,
            count: self.count,
            normalized: normalize,
            checksum: self.checksum,
            path: Some(path.clone()),
            source: Source::File(file),
        })
    }

    /// Re-reads the backing file and checks its length and checksum against
    /// the values seen at load time. Memory-resident handles always pass.
    pub(crate) fn verify_backing_file(&self) -> Result<()> {
        let Source::File(file) = &self.source else {
            return Ok(());
        };
        let name = || {
            self.path
                .as_ref()
                .map_or_else(|| "raw data file".to_string(), |p| p.display().to_string())
        };
        let size = file.metadata()?.len();
        let expected = (self.count * self.dim * VALUE_BYTES) as u64;
        if size != expected {
            return Err(Error::Integrity(format!(
                "{} is {size} bytes, expected {expected}",
                name()
            )));
        }
        let mut hasher = crc32fast::Hasher::new();
        let mut buf = vec![0u8; SCAN_CHUNK_BYTES];
        let mut offset = 0u64;
        while offset < size {
            let len = SCAN_CHUNK_BYTES.min((size - offset) as usize);
            read_exact_at(file, &mut buf[..len], offset)?;
            hasher.update(&buf[..len]);
            offset += len as u64;
        }
        let computed = hasher.finalize();
        if computed != self.checksum {
            return Err(Error::Integrity(format!(
                "{} changed since it was indexed (checksum {computed:#010x}, expected {:#010x})",
                name(),
                self.checksum
            )));
        }
        Ok(())
    }

    fn check_id(&self, id: usize) -> Result<()> {
        if id >= self.count {
            return Err(Error::OutOfBounds {
                id,
                count: self.count,
            });
        }
        Ok(())
    }
}

/// Validates a query block against a dataset dimension, returning the row count.
pub(crate) fn rows_of(block: &[f32], dim: usize) -> Result<usize> {
    if dim == 0 || !block.len().is_multiple_of(dim) {
        return Err(Error::param(format!(
            "block of {} values is not a multiple of dimension {dim}",
            block.len()
        )));
    }
    Ok(block.len() / dim)
}

pub(crate) fn check_series(series: &[f32], dim: usize) -> Result<()> {
    check_dims(dim, series.len())?;
    if let Some(pos) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            id: 0,
            offset: (pos * VALUE_BYTES) as u64,
        });
    }
    Ok(())
}

pub(crate) fn normalize_rows(values: &mut [f32], dim: usize) {
    let mut scratch = vec![0.0; dim];
    for row in values.chunks_exact_mut(dim) {
        z_normalize_into(row, &mut scratch);
        row.copy_from_slice(&scratch);
    }
}

fn validate_finite(values: &[f32], dim: usize, first_row: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(Error::NonFinite {
            id: first_row + pos / dim,
            offset: ((first_row * dim + pos) * VALUE_BYTES) as u64,
        }),
        None => Ok(()),
    }
}

pub(crate) fn checksum_values(values: &[f32]) -> u32 {
    let mut hasher = crc32fast::Hasher::new();
    let mut buf = Vec::with_capacity(SCAN_CHUNK_BYTES);
    for chunk in values.chunks(SCAN_CHUNK_BYTES / VALUE_BYTES) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        hasher.update(&buf);
    }
    hasher.finalize()
}

fn decode_f32(bytes: &[u8]) -> impl Iterator<Item = f32> + '_ {
    bytes
        .chunks_exact(VALUE_BYTES)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Writes series as raw little-endian `f32`.
pub fn write_dataset(path: impl AsRef<Path>, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * VALUE_BYTES);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn read_exact_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        match file.seek_read(buf, offset)? {
            0 => return Err(std::io::ErrorKind::UnexpectedEof.into()),
            n => {
                buf = &mut buf[n..];
                offset += n as u64;
            }
        }
    }
    Ok(())
}
