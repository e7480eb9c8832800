//! Binary checkpoints.
//!
//! Layout: 8-byte magic, little-endian `u32` format version, `u64` header
//! length, a JSON header, the little-endian `f64` arrays listed in the
//! header's directory, then an FNV-1a `u64` checksum of everything before it.
//! Every float array of the state lives in the binary section, so a load
//! followed by a save reproduces the input bytes.

use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::RunConfig;
use super::protocol::Progress;
use crate::error::{Error, Result};
use crate::stream::StreamLedger;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STREAMDP";
pub const CHECKPOINT_VERSION: u32 = 1;

const ARRAY_KEY: &str = "$f64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub ledger: StreamLedger,
    /// Protocol position when saved between streams of a run.
    pub progress: Option<Progress>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    data_dim: usize,
    latent_dim: usize,
    clusters: usize,
    stream_index: usize,
    /// Length of each binary array, in storage order.
    arrays: Vec<usize>,
    state: Value,
}

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn extract_arrays(v: &mut Value, arrays: &mut Vec<Vec<f64>>) {
    match v {
        Value::Array(items) if !items.is_empty() && items.iter().all(|i| matches!(i, Value::Number(n) if n.is_f64())) => {
            let data = items.iter().map(|i| i.as_f64().expect("checked f64")).collect();
            arrays.push(data);
            *v = json!({ ARRAY_KEY: arrays.len() - 1 });
        }
        Value::Array(items) => items.iter_mut().for_each(|i| extract_arrays(i, arrays)),
        Value::Object(map) => map.values_mut().for_each(|i| extract_arrays(i, arrays)),
        _ => {}
    }
}

fn restore_arrays(v: &mut Value, arrays: &mut [Option<Vec<f64>>]) -> Result<()> {
    match v {
        Value::Object(map) if map.len() == 1 && map.contains_key(ARRAY_KEY) => {
            let idx = map[ARRAY_KEY]
                .as_u64()
                .ok_or_else(|| Error::Integrity("array reference is not an index".into()))? as usize;
            let data = arrays
                .get_mut(idx)
                .and_then(Option::take)
                .ok_or_else(|| Error::Integrity(format!("array {idx} is missing or referenced twice")))?;
            let items = data
                .into_iter()
                .map(|x| {
                    serde_json::Number::from_f64(x)
                        .map(Value::Number)
                        .ok_or_else(|| Error::Integrity("non-finite value in checkpoint array".into()))
                })
                .collect::<Result<Vec<_>>>()?;
            *v = Value::Array(items);
        }
        Value::Array(items) => {
            for i in items {
                restore_arrays(i, arrays)?;
            }
        }
        Value::Object(map) => {
            for i in map.values_mut() {
                restore_arrays(i, arrays)?;
            }
        }
        _ => {}
    }
    Ok(())
}

pub fn encode_checkpoint(c: &Checkpoint) -> Result<Vec<u8>> {
    let mut state = serde_json::to_value(c).map_err(|e| Error::numeric(format!("checkpoint state: {e}")))?;
    let mut arrays = Vec::new();
    extract_arrays(&mut state, &mut arrays);
    let header = Header {
        data_dim: c.ledger.codec.data_dim,
        latent_dim: c.ledger.codec.latent_dim,
        clusters: c.ledger.model.len(),
        stream_index: c.ledger.stream_index,
        arrays: arrays.iter().map(Vec::len).collect(),
        state,
    };
    let header_bytes = serde_json::to_vec(&header).map_err(|e| Error::numeric(format!("checkpoint header: {e}")))?;
    let mut out = Vec::with_capacity(header_bytes.len() + 8 * arrays.iter().map(Vec::len).sum::<usize>() + 28);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for a in &arrays {
        for x in a {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let prefix = CHECKPOINT_MAGIC.len() + 4 + 8;
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(Error::Integrity("not a checkpoint file".into()));
    }
    if bytes.len() < prefix + 8 {
        return Err(Error::Integrity(format!("file is truncated at {} bytes", bytes.len())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if checksum(body) != stored {
        return Err(Error::Integrity("checksum mismatch; the file is truncated or corrupted".into()));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = prefix
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| Error::Integrity("header length exceeds the file".into()))?;
    let header: Header = serde_json::from_slice(&body[prefix..header_end])
        .map_err(|e| Error::Integrity(format!("unreadable header: {e}")))?;
    let total: usize = header.arrays.iter().sum();
    if body.len() - header_end != 8 * total {
        return Err(Error::Integrity(format!(
            "expected {} bytes of array data, found {}",
            8 * total,
            body.len() - header_end
        )));
    }
    let mut cursor = header_end;
    let mut arrays = Vec::with_capacity(header.arrays.len());
    for &len in &header.arrays {
        let data: Vec<f64> = body[cursor..cursor + 8 * len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        cursor += 8 * len;
        arrays.push(Some(data));
    }
    let mut state = header.state;
    restore_arrays(&mut state, &mut arrays)?;
    if arrays.iter().any(Option::is_some) {
        return Err(Error::Integrity("unreferenced array in checkpoint".into()));
    }
    serde_json::from_value(state).map_err(|e| Error::Integrity(format!("checkpoint state does not match this build: {e}")))
}

pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(c)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}
