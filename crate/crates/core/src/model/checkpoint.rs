//! Parameter checkpoints.
//!
//! Layout: magic `DCKP`, one version byte, a little-endian `u32` header
//! length, a JSON header holding the model configuration and tensor shapes,
//! then every tensor as raw little-endian `f64` in declared order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Array;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DCKP";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    shapes: Vec<Vec<usize>>,
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let header = Header {
        config: model.config.clone(),
        shapes: model.params.iter().map(|a| a.shape().to_vec()).collect(),
    };
    let json = serde_json::to_vec(&header)
        .map_err(|e| Error::Format(format!("cannot encode checkpoint header: {e}")))?;
    let mut buf = Vec::with_capacity(9 + json.len() + 8 * model.params.parameter_count());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.push(CHECKPOINT_VERSION);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for a in model.params.iter() {
        for v in a.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let bytes = fs::read(path)?;
    if bytes.len() < 9 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    if bytes[4] != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {}",
            bytes[4]
        )));
    }
    let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let body_start = 9 + header_len;
    if bytes.len() < body_start {
        return Err(Error::Format("truncated checkpoint header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[9..body_start])
        .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;
    if header.shapes != ModelParams::shapes(&header.config) {
        return Err(Error::Format(
            "checkpoint shapes do not match its configuration".into(),
        ));
    }
    let total: usize = header
        .shapes
        .iter()
        .map(|s| s.iter().product::<usize>())
        .sum();
    if bytes.len() != body_start + 8 * total {
        return Err(Error::Format(format!(
            "checkpoint body holds {} bytes, expected {}",
            bytes.len() - body_start,
            8 * total
        )));
    }
    let mut values = bytes[body_start..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut arrays = Vec::with_capacity(header.shapes.len());
    for shape in &header.shapes {
        let len = shape.iter().product();
        arrays.push(Array::new(
            shape.clone(),
            values.by_ref().take(len).collect(),
        )?);
    }
    let template = ModelParams::init(&header.config)?;
    let params = template.rebuild(arrays)?;
    Model::from_parts(header.config, params)
}
