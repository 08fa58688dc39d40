//! EMB1: a little-endian dense matrix container.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "EMB1"
//!      4     4  version (u32) = 1
//!      8     4  dtype (u32) = 1, f32 little-endian
//!     12     8  rows (u64)
//!     20     8  cols (u64)
//!     28     …  rows × cols f32 values, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::EmbeddingMatrix;

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const VERSION: u32 = 1;
pub const DTYPE_F32_LE: u32 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbeddingFileHeader {
    pub rows: u64,
    pub cols: u64,
}

impl EmbeddingFileHeader {
    pub fn payload_len(&self) -> u64 {
        self.rows * self.cols * 4
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&VERSION.to_le_bytes());
        out[8..12].copy_from_slice(&DTYPE_F32_LE.to_le_bytes());
        out[12..20].copy_from_slice(&self.rows.to_le_bytes());
        out[20..28].copy_from_slice(&self.cols.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format {
                offset: bytes.len() as u64,
                message: format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len()),
            });
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {:?}", String::from_utf8_lossy(&bytes[0..4])),
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let dtype = u32_at(8);
        if dtype != DTYPE_F32_LE {
            return Err(Error::Format {
                offset: 8,
                message: format!("unsupported dtype code {dtype}"),
            });
        }
        let rows = u64_at(12);
        let cols = u64_at(20);
        if rows == 0 {
            return Err(Error::Format {
                offset: 12,
                message: "rows must be ≥ 1".into(),
            });
        }
        if cols == 0 {
            return Err(Error::Format {
                offset: 20,
                message: "cols must be ≥ 1".into(),
            });
        }
        rows.checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format {
                offset: 12,
                message: format!("{rows}×{cols} overflows"),
            })?;
        Ok(EmbeddingFileHeader { rows, cols })
    }
}

pub fn encode_matrix(m: &EmbeddingMatrix) -> Result<Vec<u8>> {
    if m.is_empty() {
        return Err(Error::EmptyInput("cannot write an empty matrix"));
    }
    if let Some(i) = m.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::Format {
            offset: (HEADER_LEN + 4 * i) as u64,
            message: "non-finite value".into(),
        });
    }
    let header = EmbeddingFileHeader {
        rows: m.rows() as u64,
        cols: m.cols() as u64,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(&header.encode());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let header = EmbeddingFileHeader::decode(bytes)?;
    let expected = header.payload_len();
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::Format {
            offset: HEADER_LEN as u64 + expected,
            message: format!("{} trailing bytes after payload", actual - expected),
        });
    }
    let mut data = Vec::with_capacity((header.rows * header.cols) as usize);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Format {
                offset: (HEADER_LEN + 4 * i) as u64,
                message: "non-finite value".into(),
            });
        }
        data.push(v);
    }
    EmbeddingMatrix::from_vec(header.rows as usize, header.cols as usize, data)
}

pub fn write_embedding_file(path: impl AsRef<Path>, m: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_matrix(m)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}

/// Reads and validates only the header, checking the payload size against
/// the file length.
pub fn read_header(path: impl AsRef<Path>) -> Result<EmbeddingFileHeader> {
    use std::io::Read;
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut buf = Vec::with_capacity(HEADER_LEN);
    file.by_ref()
        .take(HEADER_LEN as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    let header = EmbeddingFileHeader::decode(&buf)?;
    let actual = len - HEADER_LEN as u64;
    if actual != header.payload_len() {
        return Err(Error::Truncated {
            expected: header.payload_len(),
            actual,
        });
    }
    Ok(header)
}
