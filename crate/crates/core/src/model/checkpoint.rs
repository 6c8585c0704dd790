//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "AMUZ"
//! 4       4     u32 format version (currently 1)
//! 8       4     u32 mode tag: 0 melody, 1 harmony, 2 harmony-sum-ablation
//! 12      4     u32 vocab size
//! 16      4     u32 embedding width
//! 20      4     u32 hidden width
//! 24      4     u32 LSTM layers
//! 28      4     u32 chord vocabulary (0 when there is no chord embedding)
//! 32      4     f32 dropout rate
//! 36      ...   f32 parameters, row-major, in this order:
//!                 note embedding          vocab x embed
//!                 chord embedding         chords x embed   (harmony only)
//!                 per layer l:
//!                   input weights         4*hidden x in_l  (gates i, f, g, o)
//!                   recurrent weights     4*hidden x hidden
//!                   bias                  4*hidden
//!                 output weights          vocab x hidden
//!                 output bias             vocab
//! ```

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{ModelDims, ModelMode, SequenceModel};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AMUZ";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 36;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {CHECKPOINT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("checkpoint is truncated")]
    TruncatedFile,
    #[error("checkpoint is corrupt: {0}")]
    Corrupt(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_checkpoint<W: Write>(model: &SequenceModel<f32>, mut out: W) -> Result<(), CheckpointError> {
    let d = &model.dims;
    let chord_vocab = if model.params.chord_embedding.is_some() { d.chord_vocab } else { 0 };
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        model.mode.tag(),
        d.vocab as u32,
        d.embed as u32,
        d.hidden as u32,
        d.layers as u32,
        chord_vocab as u32,
    ] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    header.extend_from_slice(&(model.dropout as f32).to_le_bytes());
    out.write_all(&header)?;
    let mut payload = Vec::with_capacity(model.params.len() * 4);
    for (_, t) in model.params.tensors() {
        for v in t {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&payload)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<SequenceModel<f32>, CheckpointError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 4 {
        return Err(CheckpointError::TruncatedFile);
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::TruncatedFile);
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch { found: version });
    }
    let mode = ModelMode::from_tag(u32_at(8)).ok_or(CheckpointError::Corrupt("unknown mode tag"))?;
    let dims = ModelDims {
        vocab: u32_at(12) as usize,
        embed: u32_at(16) as usize,
        hidden: u32_at(20) as usize,
        layers: u32_at(24) as usize,
        chord_vocab: u32_at(28) as usize,
    };
    if (mode == ModelMode::Harmony) != (dims.chord_vocab > 0) {
        return Err(CheckpointError::Corrupt("chord embedding present iff harmony mode"));
    }
    if dims.vocab == 0 || dims.embed == 0 || dims.hidden == 0 || dims.layers == 0 {
        return Err(CheckpointError::Corrupt("zero dimension"));
    }
    let dropout = f32::from_le_bytes(bytes[32..36].try_into().unwrap()) as f64;

    let mut model = SequenceModel::<f32>::zeros(mode, dims);
    model.dropout = dropout;
    let expected = model.params.len() * 4;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(CheckpointError::TruncatedFile);
    }
    if payload.len() > expected {
        return Err(CheckpointError::Corrupt("trailing bytes after parameters"));
    }
    let mut chunks = payload.chunks_exact(4);
    for t in model.params.tensors_mut() {
        for (v, c) in t.iter_mut().zip(&mut chunks) {
            *v = f32::from_le_bytes(c.try_into().unwrap());
        }
    }
    Ok(model)
}

pub fn save_checkpoint(model: &SequenceModel<f32>, path: &Path) -> Result<(), CheckpointError> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SequenceModel<f32>, CheckpointError> {
    read_checkpoint(std::fs::File::open(path)?)
}
