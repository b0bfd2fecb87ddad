use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::team::NUM_TEAMS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    PooledMlp,
    LabelAttention,
}

/// How the pooled head reduces per-token states to one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// State at the sequence-start position.
    Start,
    MaskedMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_positions: usize,
    pub dropout: f64,
    pub num_labels: usize,
    pub head_kind: HeadKind,
    pub pooling: Pooling,
    /// Width of the optional tanh hidden layer of the pooled head; `None`
    /// makes the head a single linear layer.
    pub pooled_hidden: Option<usize>,
    /// Learned absolute position embeddings.
    pub positional: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 8000,
            hidden: 128,
            layers: 4,
            heads: 4,
            ff_dim: 512,
            max_positions: 512,
            dropout: 0.1,
            num_labels: NUM_TEAMS,
            head_kind: HeadKind::PooledMlp,
            pooling: Pooling::Start,
            pooled_hidden: None,
            positional: true,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("max_positions", self.max_positions),
            ("num_labels", self.num_labels),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.pooled_hidden == Some(0) {
            return Err(Error::config("pooled_hidden must be positive when set"));
        }
        Ok(())
    }

    /// Checks that inputs of `len` tokens per row fit the position table.
    pub fn check_input_length(&self, len: usize) -> Result<()> {
        if self.positional && len > self.max_positions {
            return Err(Error::config(format!(
                "input length {len} exceeds max_positions {}",
                self.max_positions
            )));
        }
        Ok(())
    }
}
