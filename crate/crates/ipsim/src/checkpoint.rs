// SPDX-License-Identifier: Apache-2.0

//! Binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic         8 bytes  "IPSIMCKP"
//! format        u32      FORMAT_VERSION
//! vocab         u32      vocabulary version
//! input_dim     u32
//! layers        u32
//! hidden        u32
//! pool_ratio    f64
//! readout       u8       0 max, 1 mean, 2 sum
//! dropout       f64
//! epoch         u32
//! loss          f64
//! seed          u64
//! blocks        u32      layers + 1
//! per block:    rows u32, cols u32, rows*cols f64 in row-major order
//! ```
//!
//! Blocks are the GCN weights in layer order followed by the score vector.

use std::path::Path;

use ipsim_core::linalg::Matrix;
use ipsim_core::model::{Hyper, ModelParams, Readout};
use ipsim_core::train::Checkpoint;
use ipsim_core::VOCAB_VERSION;

use crate::fsio::write_atomic;

pub const MAGIC: &[u8; 8] = b"IPSIMCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    Format(u32),
    #[error("checkpoint vocabulary version {found} does not match this build ({expected})")]
    VocabMismatch { expected: u32, found: u32 },
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("checkpoint has {0} trailing bytes")]
    Trailing(usize),
    #[error("invalid checkpoint contents: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode(c: &Checkpoint) -> Vec<u8> {
    let h = &c.params.hyper;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for v in [FORMAT_VERSION, c.vocab_version, h.input_dim as u32, h.layers as u32, h.hidden as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&h.pool_ratio.to_le_bytes());
    out.push(h.readout.code());
    out.extend_from_slice(&h.dropout.to_le_bytes());
    out.extend_from_slice(&c.epoch.to_le_bytes());
    out.extend_from_slice(&c.loss.to_le_bytes());
    out.extend_from_slice(&c.seed.to_le_bytes());
    let blocks = c.params.tensors();
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for m in blocks {
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let end = self
            .at
            .checked_add(N)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated(self.bytes.len()))?;
        let out = self.bytes[self.at..end].try_into().expect("slice of length N");
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        self.take().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        self.take().map(f64::from_le_bytes)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { bytes, at: 0 };
    if bytes.len() < MAGIC.len() {
        return Err(if MAGIC.starts_with(bytes) {
            CheckpointError::Truncated(bytes.len())
        } else {
            CheckpointError::BadMagic
        });
    }
    if &r.take::<8>()? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let format = r.u32()?;
    if format != FORMAT_VERSION {
        return Err(CheckpointError::Format(format));
    }
    let vocab = r.u32()?;
    if vocab != VOCAB_VERSION {
        return Err(CheckpointError::VocabMismatch { expected: VOCAB_VERSION, found: vocab });
    }
    let (input_dim, layers, hidden) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let pool_ratio = r.f64()?;
    let [code] = r.take::<1>()?;
    let readout = Readout::from_code(code).ok_or_else(|| CheckpointError::Invalid(format!("readout code {code}")))?;
    let dropout = r.f64()?;
    let hyper = Hyper { input_dim, layers, hidden, pool_ratio, readout, dropout };
    hyper.validate().map_err(|e| CheckpointError::Invalid(e.to_string()))?;
    let epoch = r.u32()?;
    let loss = r.f64()?;
    let seed = u64::from_le_bytes(r.take()?);
    let count = r.u32()? as usize;
    if count != layers + 1 {
        return Err(CheckpointError::Invalid(format!("{count} weight blocks for {layers} layers")));
    }
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        let len = rows.checked_mul(cols).ok_or(CheckpointError::Truncated(bytes.len()))?;
        if len.saturating_mul(8) > bytes.len() - r.at {
            return Err(CheckpointError::Truncated(bytes.len()));
        }
        let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        blocks.push(Matrix::from_vec(rows, cols, data));
    }
    if r.at != bytes.len() {
        return Err(CheckpointError::Trailing(bytes.len() - r.at));
    }
    let score = blocks.pop().expect("count >= 1");
    let params = ModelParams { hyper, gcn: blocks, score };
    params.check().map_err(|e| CheckpointError::Invalid(e.to_string()))?;
    Ok(Checkpoint { vocab_version: vocab, params, epoch, loss, seed })
}

pub fn save(path: &Path, c: &Checkpoint) -> Result<(), CheckpointError> {
    Ok(write_atomic(path, &encode(c))?)
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode(&std::fs::read(path)?)
}
