//! FSEQ feature files: `"FSEQ"`, version byte `0x01`, `u32` M, `u32` D
//! (little-endian), then `M·D` little-endian `f32` values, row-major.

use std::io::{Read, Write};
use std::path::Path;

use beac_core::Tensor;

pub const MAGIC: &[u8; 4] = b"FSEQ";
pub const VERSION: u8 = 1;
const HEADER: usize = 4 + 1 + 4 + 4;

#[derive(Debug, thiserror::Error)]
pub enum FseqError {
    #[error("bad magic {0:?}, expected \"FSEQ\"")]
    BadMagic([u8; 4]),
    #[error("unsupported FSEQ version {0}")]
    BadVersion(u8),
    #[error("truncated FSEQ: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("FSEQ has {0} trailing bytes")]
    Trailing(usize),
    #[error("FSEQ dimensions {frames}x{dim} must both be positive")]
    Empty { frames: u32, dim: u32 },
    #[error("non-finite value at frame {frame}, dim {dim}")]
    NonFinite { frame: usize, dim: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode(frames: &Tensor<f32>) -> Vec<u8> {
    let (m, d) = (frames.rows(), frames.cols());
    let mut out = Vec::with_capacity(HEADER + 4 * frames.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in frames.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Tensor<f32>, FseqError> {
    if bytes.len() < 5 {
        return Err(FseqError::Truncated {
            expected: HEADER,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(FseqError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(FseqError::BadVersion(bytes[4]));
    }
    if bytes.len() < HEADER {
        return Err(FseqError::Truncated {
            expected: HEADER,
            found: bytes.len(),
        });
    }
    let m = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes"));
    let d = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes"));
    if m == 0 || d == 0 {
        return Err(FseqError::Empty { frames: m, dim: d });
    }
    let expected = HEADER + 4 * m as usize * d as usize;
    if bytes.len() < expected {
        return Err(FseqError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FseqError::Trailing(bytes.len() - expected));
    }
    let data: Vec<f32> = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(FseqError::NonFinite {
            frame: i / d as usize + 1,
            dim: i % d as usize,
        });
    }
    Ok(Tensor::new(&[m as usize, d as usize], data).expect("size checked"))
}

pub fn write(path: &Path, frames: &Tensor<f32>) -> Result<(), FseqError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode(frames))?;
    f.flush()?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Tensor<f32>, FseqError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode(&buf)
}
