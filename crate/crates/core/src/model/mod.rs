//! Transformer encoder, classification heads and LoRA adapters.

mod checkpoint;
mod config;
mod lora;
mod network;
pub mod ops;
mod output;
mod params;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
pub use config::{HeadKind, ModelConfig, Pooling};
pub use lora::ParamCount;
pub use network::{EncoderInput, EncoderOutput, ForwardPass, Mode, Model, Prediction};
pub use output::{argmax, TriageRecommendation};
pub use params::{Grads, Param, ParamId, ParamStore};

/// Attention projection that can carry a LoRA adapter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoraTarget {
    Query,
    Key,
    Value,
}

impl LoraTarget {
    pub const ALL: [LoraTarget; 3] = [LoraTarget::Query, LoraTarget::Key, LoraTarget::Value];

    pub fn name(self) -> &'static str {
        match self {
            LoraTarget::Query => "query",
            LoraTarget::Key => "key",
            LoraTarget::Value => "value",
        }
    }
}
