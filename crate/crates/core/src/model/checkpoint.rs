//! Binary checkpoint: magic, format version, a JSON header, then every
//! tensor as row-major little-endian f32 in header order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, NdFloat};
use serde::{Deserialize, Serialize};

use super::network::Model;
use super::{LoraTarget, ModelConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TRIAGEW\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraEntry {
    pub rank: usize,
    pub targets: Vec<LoraTarget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model: ModelConfig,
    pub tokenizer_hash: String,
    #[serde(default)]
    pub lora: Option<LoraEntry>,
    pub tensors: Vec<TensorEntry>,
    /// Free-form training metadata (strategy, chunk size, ...).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Model<f32>,
}

impl Checkpoint {
    pub fn new(model: Model<f32>, tokenizer_hash: impl Into<String>, metadata: serde_json::Value) -> Self {
        let header = CheckpointHeader {
            format_version: CHECKPOINT_VERSION,
            model: model.config.clone(),
            tokenizer_hash: tokenizer_hash.into(),
            lora: model.lora_rank().map(|rank| LoraEntry {
                rank,
                targets: model.lora_targets().unwrap_or_default().to_vec(),
            }),
            tensors: model
                .params
                .iter()
                .map(|p| TensorEntry {
                    name: p.name.clone(),
                    shape: [p.value.nrows(), p.value.ncols()],
                    trainable: p.trainable,
                })
                .collect(),
            metadata,
        };
        Self { header, model }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for p in self.model.params.iter() {
            let mut buf = Vec::with_capacity(p.value.len() * 4);
            for v in p.value.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a model checkpoint".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: CheckpointHeader = serde_json::from_slice(&header)?;

        let mut model = Model::<f32>::new(header.model.clone())?;
        if let Some(l) = &header.lora {
            model.inject_lora(l.rank, &l.targets, 0)?;
        }
        if model.params.len() != header.tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint lists {} tensors, architecture has {}",
                header.tensors.len(),
                model.params.len()
            )));
        }
        for (p, entry) in model.params.iter_mut().zip(&header.tensors) {
            let shape = [p.value.nrows(), p.value.ncols()];
            if p.name != entry.name || shape != entry.shape {
                return Err(Error::Format(format!(
                    "tensor {} {:?} does not match architecture tensor {} {:?}",
                    entry.name, entry.shape, p.name, shape
                )));
            }
            let mut bytes = vec![0u8; shape[0] * shape[1] * 4];
            r.read_exact(&mut bytes)?;
            let values =
                bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            p.value = Array2::from_shape_vec((shape[0], shape[1]), values)
                .map_err(|e| Error::Format(e.to_string()))?;
            p.trainable = entry.trainable;
        }
        Ok(Self { header, model })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    checkpoint.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path)?;
    Checkpoint::read_from(std::io::BufReader::new(file))
}

impl<F: NdFloat> Model<F> {
    /// Copy with f32 storage, as written to checkpoints.
    pub fn to_f32(&self) -> Model<f32> {
        self.cast()
    }
}
