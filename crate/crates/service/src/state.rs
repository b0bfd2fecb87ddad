use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use sha2::{Digest, Sha256};
use triage_core::corpus::Instance;
use triage_core::explain::ProjectionMap;
use triage_core::model::{Checkpoint, Model};
use triage_core::strategy::{Strategy, StrategyConfig};
use triage_core::text::Tokenizer;

use crate::error::LoadError;

/// Checkpoint metadata keys written by the trainer.
pub const META_STRATEGY: &str = "strategy";
pub const META_STRATEGY_CONFIG: &str = "strategy_config";

#[derive(Debug, Clone)]
pub struct ServedModel {
    pub strategy: Strategy,
    pub model: Model<f32>,
    pub strategy_config: StrategyConfig,
    /// Hex SHA-256 of the checkpoint file.
    pub hash: String,
}

impl ServedModel {
    /// Decodes a checkpoint file; strategy and strategy settings come from
    /// its metadata.
    pub fn from_bytes(bytes: &[u8], path: &str, tokenizer: &Tokenizer) -> Result<Self, LoadError> {
        let ckpt = Checkpoint::read_from(bytes)?;
        if ckpt.header.tokenizer_hash != tokenizer.hash() {
            return Err(LoadError::TokenizerMismatch {
                path: path.to_string(),
                expected: ckpt.header.tokenizer_hash.clone(),
                actual: tokenizer.hash(),
            });
        }
        let meta = &ckpt.header.metadata;
        let strategy: Strategy = meta
            .get(META_STRATEGY)
            .and_then(|v| v.as_str())
            .ok_or_else(|| LoadError::MissingStrategy(path.to_string()))?
            .parse()?;
        let strategy_config = match meta.get(META_STRATEGY_CONFIG) {
            Some(v) => serde_json::from_value(v.clone()).map_err(triage_core::Error::from)?,
            None => StrategyConfig::default(),
        };
        Ok(Self { strategy, model: ckpt.model, strategy_config, hash: hex::encode(Sha256::digest(bytes)) })
    }

    pub fn load(path: &Path, tokenizer: &Tokenizer) -> Result<Self, LoadError> {
        let bytes = std::fs::read(path).map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes, &path.display().to_string(), tokenizer)
    }
}

/// Everything inference needs; immutable once published.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub tokenizer: Tokenizer,
    pub models: Vec<ServedModel>,
    pub map: Option<ProjectionMap>,
}

impl Artifacts {
    pub fn new(tokenizer: Tokenizer, models: Vec<ServedModel>, map: Option<ProjectionMap>) -> Result<Self, LoadError> {
        for (i, m) in models.iter().enumerate() {
            if models[..i].iter().any(|o| o.strategy == m.strategy) {
                return Err(LoadError::DuplicateStrategy(m.strategy.to_string()));
            }
        }
        Ok(Self { tokenizer, models, map })
    }

    pub fn model(&self, strategy: Strategy) -> Option<&ServedModel> {
        self.models.iter().find(|m| m.strategy == strategy)
    }
}

/// Shared, read-only service state. The corpus is available immediately;
/// artifacts are published once, possibly after the server starts.
#[derive(Debug)]
pub struct AppState {
    pub(crate) corpus: Vec<Instance>,
    pub(crate) index: HashMap<String, usize>,
    pub(crate) artifacts: OnceLock<Artifacts>,
    pub(crate) started: Instant,
}

impl AppState {
    pub fn new(corpus: Vec<Instance>) -> Self {
        let index = corpus.iter().enumerate().map(|(i, inst)| (inst.instance_id.clone(), i)).collect();
        Self { corpus, index, artifacts: OnceLock::new(), started: Instant::now() }
    }

    pub fn with_artifacts(corpus: Vec<Instance>, artifacts: Artifacts) -> Self {
        let state = Self::new(corpus);
        state.publish(artifacts);
        state
    }

    /// Makes models available to handlers. Later calls are ignored: served
    /// artifacts never change.
    pub fn publish(&self, artifacts: Artifacts) -> bool {
        self.artifacts.set(artifacts).is_ok()
    }

    pub fn artifacts(&self) -> Option<&Artifacts> {
        self.artifacts.get()
    }

    pub fn instance(&self, id: &str) -> Option<&Instance> {
        self.index.get(id).map(|&i| &self.corpus[i])
    }
}
