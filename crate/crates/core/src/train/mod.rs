//! Loss, gradients, AdamW, learning-rate schedule, early stopping and the
//! training loop.

mod early;
mod fit;
mod gradcheck;
mod loss;
mod optim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EncoderInput;

pub use early::{EarlyStopping, StopDecision};
pub use fit::{batch_gradients, fit, fit_with, macro_f1_on, EpochRecord, FitResult};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::cross_entropy;
pub use optim::{lr_at, AdamW};

/// One supervised example: encoder input and gold class index.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub id: String,
    pub input: EncoderInput,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gradient_accumulation_steps: usize,
    /// Fraction of total optimizer steps spent warming up.
    pub warmup_fraction: f64,
    pub max_epochs: usize,
    /// Evaluations without macro-F1 improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::document_level()
    }
}

impl TrainConfig {
    /// Full fine-tuning on single documents.
    pub fn document_level() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 8,
            gradient_accumulation_steps: 2,
            warmup_fraction: 0.1,
            max_epochs: 20,
            patience: 3,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }

    /// One whole instance per batch, as used with segment batching and LoRA.
    pub fn instance_level() -> Self {
        Self { learning_rate: 1e-4, batch_size: 1, gradient_accumulation_steps: 16, ..Self::document_level() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("gradient_accumulation_steps", self.gradient_accumulation_steps),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::config("warmup_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}
