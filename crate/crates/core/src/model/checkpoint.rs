//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! "PIQA" | version: u32 | config_len: u32 | config JSON (UTF-8)
//! then per tensor, until end of file:
//! name_len: u32 | name (UTF-8) | rank: u32 | dims: u32 * rank | values: f32 * prod(dims)
//! ```
//!
//! Tensors are the trainable parameters followed by batch-norm running statistics.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{CheckpointError, Error, Result};
use crate::numerics::Tensor;

use super::{Model, ModelConfig};

pub const MAGIC: [u8; 4] = *b"PIQA";
pub const VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Serializes parameters, running statistics and config.
pub fn checkpoint_bytes(model: &Model<f32>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    put_u32(&mut buf, VERSION);
    let config = serde_json::to_vec(model.config()).expect("config serializes");
    put_u32(&mut buf, config.len() as u32);
    buf.extend_from_slice(&config);
    let params = model.named_params();
    let tensors = params
        .iter()
        .map(|p| (p.name.clone(), p.tensor))
        .chain(model.named_buffers());
    for (name, t) in tensors {
        put_u32(&mut buf, name.len() as u32);
        buf.extend_from_slice(name.as_bytes());
        put_u32(&mut buf, t.rank() as u32);
        for &d in t.shape() {
            put_u32(&mut buf, d as u32);
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn save_checkpoint(model: &Model<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(what.to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Parses a checkpoint, rebuilding the model from its embedded config.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> std::result::Result<Model<f32>, CheckpointError> {
    let mut rd = Reader { buf: bytes, pos: 0 };
    let magic = rd.take(4, "magic")?;
    if magic != MAGIC {
        return Err(CheckpointError::Magic {
            found: magic.try_into().expect("4 bytes"),
        });
    }
    let version = rd.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let len = rd.u32("config length")? as usize;
    let config: ModelConfig =
        serde_json::from_slice(rd.take(len, "config")?).map_err(|e| CheckpointError::Config(e.to_string()))?;
    let mut model = Model::<f32>::build(config).map_err(|e| CheckpointError::Config(e.to_string()))?;

    let mut stored: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::new();
    while !rd.done() {
        let name_len = rd.u32("tensor name length")? as usize;
        let name = String::from_utf8(rd.take(name_len, "tensor name")?.to_vec())
            .map_err(|_| CheckpointError::Truncated("tensor name (invalid UTF-8)".into()))?;
        let rank = rd.u32(&name)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(rd.u32(&name)? as usize);
        }
        let count: usize = dims.iter().product();
        let raw = rd.take(
            count
                .checked_mul(4)
                .ok_or_else(|| CheckpointError::Truncated(name.clone()))?,
            &name,
        )?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        stored.insert(name, (dims, values));
    }

    let mut names: Vec<String> = model.named_params().into_iter().map(|p| p.name).collect();
    names.extend(model.named_buffers().into_iter().map(|(n, _)| n));
    let (params, buffers) = model.params_and_buffers_mut();
    let targets: Vec<&mut Tensor<f32>> = params.into_iter().chain(buffers).collect();
    for (name, target) in names.iter().zip(targets) {
        let (dims, values) = stored
            .remove(name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.clone()))?;
        if dims != target.shape() {
            return Err(CheckpointError::Dimension {
                name: name.clone(),
                stored: dims,
                expected: target.shape().to_vec(),
            });
        }
        target.data_mut().copy_from_slice(&values);
    }
    if let Some(extra) = stored.keys().min() {
        return Err(CheckpointError::UnknownTensor(extra.clone()));
    }
    model.set_generation(0);
    Ok(model)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(checkpoint_from_bytes(&bytes)?)
}

/// Loads a checkpoint and insists its architecture matches `expected`.
/// The initialization seed is not compared.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Model<f32>> {
    let model = load_checkpoint(path)?;
    let expected = ModelConfig {
        seed: model.config().seed,
        ..expected.clone()
    };
    if model.config() != &expected {
        return Err(CheckpointError::ConfigMismatch.into());
    }
    Ok(model)
}
