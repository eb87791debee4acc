use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::nn::Parameterized;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MDOTSCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// A model plus free-form metadata (training seed, epoch, ...).
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: serde_json::Value,
}

/// Layout: magic, u32 version, u64 header length, JSON header, then every
/// parameter as little-endian f32 in `params()` order.
pub fn save_checkpoint(path: &Path, model: &Model, meta: &serde_json::Value) -> Result<()> {
    let header = Header {
        config: model.config(),
        meta: meta.clone(),
        tensors: model
            .params()
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(json.len() + 4 * model.num_params() + 20);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in model.params() {
        for v in &p.value {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    crate::util::write_atomic(path, &buf)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    parse(&bytes).map_err(|msg| Error::Checkpoint(format!("{}: {msg}", path.display())))
}

fn parse(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err("not a checkpoint file".into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..20 + hlen).ok_or("truncated header")?;
    let header: Header = serde_json::from_slice(body).map_err(|e| format!("bad header: {e}"))?;
    let mut model = Model::new(
        header.config,
        &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0),
    )
    .map_err(|e| format!("bad config: {e}"))?;
    let mut payload = &bytes[20 + hlen..];
    let params = model.params_mut();
    if params.len() != header.tensors.len() {
        return Err(format!(
            "header lists {} tensors, architecture has {}",
            header.tensors.len(),
            params.len()
        ));
    }
    for (p, t) in params.into_iter().zip(&header.tensors) {
        if p.name != t.name || p.shape != t.shape {
            return Err(format!(
                "tensor {} {:?} does not match architecture tensor {} {:?}",
                t.name, t.shape, p.name, p.shape
            ));
        }
        for v in p.value.iter_mut() {
            let mut b = [0u8; 4];
            payload
                .read_exact(&mut b)
                .map_err(|_| "truncated payload")?;
            *v = f32::from_le_bytes(b);
        }
    }
    if !payload.is_empty() {
        return Err(format!("{} trailing bytes after payload", payload.len()));
    }
    Ok(Checkpoint {
        model,
        meta: header.meta,
    })
}
