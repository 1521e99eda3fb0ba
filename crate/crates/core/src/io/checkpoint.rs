use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::train::TrainState;

use super::write_atomic;

pub const MAGIC: [u8; 8] = *b"HSPLATCK";
pub const FORMAT_VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 8 + 32;

/// `magic | version (u32 LE) | payload length (u64 LE) | SHA-256 | payload`.
pub fn encode_checkpoint(state: &TrainState) -> Result<Vec<u8>> {
    let payload = bincode::serde::encode_to_vec(state, bincode::config::standard())
        .map_err(|e| Error::InvalidState(format!("checkpoint encoding: {e}")))?;
    let mut out = Vec::with_capacity(HEADER + payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainState> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::Truncated(format!("{} bytes cannot hold a checkpoint header", bytes.len())));
    }
    if bytes[..8] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER {
        return Err(Error::Truncated(format!("header needs {HEADER} bytes, found {}", bytes.len())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let payload = &bytes[HEADER..];
    if (payload.len() as u64) < len {
        return Err(Error::Truncated(format!("payload holds {} of {len} bytes", payload.len())));
    }
    if payload.len() as u64 != len {
        return Err(Error::ChecksumMismatch);
    }
    if Sha256::digest(payload).as_slice() != &bytes[20..52] {
        return Err(Error::ChecksumMismatch);
    }
    let (state, used): (TrainState, usize) = bincode::serde::decode_from_slice(payload, bincode::config::standard())
        .map_err(|e| Error::InvalidState(format!("checkpoint payload: {e}")))?;
    if used != payload.len() {
        return Err(Error::InvalidState("checkpoint payload has trailing bytes".into()));
    }
    state.audit()?;
    Ok(state)
}

pub fn save_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    write_atomic(path, &encode_checkpoint(state)?)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes)
}
