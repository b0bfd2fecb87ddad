//! End-to-end helpers shared by the CLI, the service and the acceptance
//! suite: building per-strategy models, training them and scoring them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusConfig, Instance};
use crate::error::{Error, Result};
use crate::eval::{bench_inference, compute_metrics, stratified_f1, BenchResult, MethodReport, Timer};
use crate::model::{EncoderInput, LoraTarget, Model, ModelConfig};
use crate::strategy::{
    document_examples, document_sequence, infer, instance_examples, Strategy, StrategyConfig,
};
use crate::team::TeamLabel;
use crate::text::{assemble_instance, Tokenizer};
use crate::train::{fit, FitResult, TrainConfig, TrainExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub corpus: CorpusConfig,
    pub vocab_size: usize,
    /// Encoder shape shared by all strategies; head kind and position
    /// count are set per strategy.
    pub model: ModelConfig,
    pub document_training: TrainConfig,
    pub instance_training: TrainConfig,
    pub strategy: StrategyConfig,
    pub eval_fraction: f64,
    /// Per-team cap on training documents for brute force.
    pub documents_per_class: Option<usize>,
    /// Per-team cap on evaluation documents used for early stopping.
    pub eval_documents_per_class: Option<usize>,
    /// Adapter rank for the instance-level strategies; `None` trains all
    /// weights.
    pub lora_rank: Option<usize>,
    /// Learning rate used instead of the instance-level one when adapters
    /// are trained.
    pub lora_learning_rate: Option<f64>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            vocab_size: 8000,
            model: ModelConfig::default(),
            document_training: TrainConfig::document_level(),
            instance_training: TrainConfig::instance_level(),
            strategy: StrategyConfig::default(),
            eval_fraction: 0.2,
            documents_per_class: Some(13_000),
            eval_documents_per_class: Some(1_000),
            lora_rank: None,
            lora_learning_rate: None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Model configuration for `strategy` given a tokenizer vocabulary.
    pub fn model_config(&self, strategy: Strategy, vocab_size: usize) -> ModelConfig {
        let max_positions = match strategy {
            Strategy::BruteForce => self.strategy.document_len,
            Strategy::Concat512 | Strategy::Concat4096 => strategy.concat_len().expect("concat"),
            Strategy::SegmentBatch => self.strategy.segment_size,
        };
        ModelConfig {
            vocab_size,
            max_positions,
            head_kind: strategy.head_kind(),
            init_seed: self.seed,
            ..self.model.clone()
        }
    }

    pub fn training_config(&self, strategy: Strategy) -> TrainConfig {
        let base = match strategy {
            Strategy::BruteForce => &self.document_training,
            _ => &self.instance_training,
        };
        let mut cfg = TrainConfig { seed: self.seed, ..base.clone() };
        if let (Some(_), Some(lr), true) = (self.lora_rank, self.lora_learning_rate, strategy != Strategy::BruteForce) {
            cfg.learning_rate = lr;
        }
        cfg
    }
}

/// Training examples shaped for `strategy`.
pub fn strategy_examples(
    strategy: Strategy,
    instances: &[Instance],
    tokenizer: &Tokenizer,
    config: &ExperimentConfig,
    per_class: Option<usize>,
) -> Result<Vec<TrainExample>> {
    match strategy {
        Strategy::BruteForce => {
            Ok(document_examples(instances, tokenizer, config.strategy.document_len, per_class, config.seed))
        }
        _ => instance_examples(instances, tokenizer, strategy, &config.strategy),
    }
}

#[derive(Debug, Clone)]
pub struct TrainedStrategy {
    pub strategy: Strategy,
    pub model: Model<f32>,
    pub fit: FitResult,
}

/// Builds and trains the model of `strategy`. When `base` is given its
/// encoder weights initialise the new model; with `lora_rank` set, the
/// instance-level strategies train adapters and the head only.
pub fn train_strategy(
    strategy: Strategy,
    train: &[Instance],
    eval: &[Instance],
    tokenizer: &Tokenizer,
    config: &ExperimentConfig,
    base: Option<&Model<f32>>,
) -> Result<TrainedStrategy> {
    let mut model = Model::<f32>::new(config.model_config(strategy, tokenizer.vocab_size()))?;
    if let Some(base) = base {
        model.load_encoder_from(base)?;
    }
    if let (Some(rank), true) = (config.lora_rank, strategy != Strategy::BruteForce) {
        model.inject_lora(rank, &LoraTarget::ALL, config.seed)?;
    }
    let train_ex = strategy_examples(strategy, train, tokenizer, config, config.documents_per_class)?;
    let eval_ex = strategy_examples(strategy, eval, tokenizer, config, config.eval_documents_per_class)?;
    let fit = fit(model, &train_ex, &eval_ex, &config.training_config(strategy))?;
    Ok(TrainedStrategy { strategy, model: fit.model.clone(), fit })
}

/// Predictions of one strategy over the labelled instances of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub strategy: Strategy,
    pub instance_ids: Vec<String>,
    pub predictions: Vec<TeamLabel>,
    pub gold: Vec<TeamLabel>,
    /// Full assembled length in tokens, before any truncation.
    pub lengths: Vec<usize>,
    pub warnings: Vec<String>,
}

impl EvalOutcome {
    pub fn report(&self) -> Result<MethodReport> {
        Ok(MethodReport {
            method: self.strategy.name().to_string(),
            metrics: compute_metrics(&self.predictions, &self.gold)?,
            strata: stratified_f1(&self.predictions, &self.gold, &self.lengths)?,
        })
    }

    /// Restricts the outcome to instances whose index passes `keep`.
    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> EvalOutcome {
        let idx: Vec<usize> = (0..self.gold.len()).filter(|&i| keep(i)).collect();
        EvalOutcome {
            strategy: self.strategy,
            instance_ids: idx.iter().map(|&i| self.instance_ids[i].clone()).collect(),
            predictions: idx.iter().map(|&i| self.predictions[i]).collect(),
            gold: idx.iter().map(|&i| self.gold[i]).collect(),
            lengths: idx.iter().map(|&i| self.lengths[i]).collect(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Runs `strategy` over every labelled instance in parallel.
///
/// Padding of brute-force documents is switched off here: it never changes
/// outputs, only cost. Zero-document instances fall back to the model's
/// prediction for an empty document.
pub fn evaluate_strategy(
    strategy: Strategy,
    model: &Model<f32>,
    tokenizer: &Tokenizer,
    instances: &[Instance],
    config: &StrategyConfig,
) -> Result<EvalOutcome> {
    let cfg = StrategyConfig { pad_documents: false, ..config.clone() };
    let labelled: Vec<(&Instance, TeamLabel)> = instances.iter().filter_map(|i| i.label.map(|l| (i, l))).collect();
    let rows = labelled
        .par_iter()
        .map(|(inst, _)| -> Result<(TeamLabel, usize, Vec<String>)> {
            let len = assemble_instance(inst, tokenizer).tokens.len();
            if strategy == Strategy::BruteForce && inst.documents.is_empty() {
                let ids = document_sequence("", tokenizer, cfg.document_len);
                let p = model.predict(&EncoderInput::single(&ids))?;
                let team = TeamLabel::from_index(crate::model::argmax(&p.logits)).expect("team");
                let w = format!("{}: no documents, scored from an empty document", inst.instance_id);
                return Ok((team, len, vec![w]));
            }
            let out = infer(strategy, inst, model, tokenizer, &cfg)?;
            Ok((out.recommendation.predicted, len, out.warnings))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut outcome = EvalOutcome {
        strategy,
        instance_ids: labelled.iter().map(|(i, _)| i.instance_id.clone()).collect(),
        predictions: Vec::with_capacity(rows.len()),
        gold: labelled.iter().map(|(_, l)| *l).collect(),
        lengths: Vec::with_capacity(rows.len()),
        warnings: Vec::new(),
    };
    for (p, len, w) in rows {
        outcome.predictions.push(p);
        outcome.lengths.push(len);
        outcome.warnings.extend(w);
    }
    Ok(outcome)
}

impl ExperimentConfig {
    /// Small encoder trained from scratch, sized to run all strategies on
    /// a 2,000-instance corpus on one CPU core in minutes.
    pub fn desk_scale(seed: u64) -> Self {
        let instance_training = TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 3,
            patience: 2,
            ..TrainConfig::instance_level()
        };
        let document_training = TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 4,
            patience: 2,
            ..TrainConfig::document_level()
        };
        Self {
            corpus: CorpusConfig { n_patients: 1830, seed, ..CorpusConfig::default() },
            vocab_size: 2000,
            model: ModelConfig { hidden: 32, layers: 1, heads: 2, ff_dim: 64, ..ModelConfig::default() },
            document_training,
            instance_training,
            strategy: StrategyConfig { segment_size: 128, ..StrategyConfig::default() },
            documents_per_class: Some(885),
            eval_documents_per_class: Some(200),
            lora_learning_rate: Some(1e-2),
            seed,
            ..Self::default()
        }
    }
}

/// Inference cost of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRow {
    pub strategy: Strategy,
    pub trainable_parameters: usize,
    pub max_sequence_length: usize,
    pub bench: BenchResult,
}

impl SpeedRow {
    pub fn per_instance_mean(&self) -> f64 {
        self.bench.mean_seconds / self.bench.instances as f64
    }

    pub fn per_instance_sd(&self) -> f64 {
        self.bench.sd_seconds / self.bench.instances as f64
    }
}

/// Times `strategy` over `instances` on the calling thread. Brute force
/// pads documents as configured, since padding is what it pays for.
pub fn bench_strategy(
    strategy: Strategy,
    model: &Model<f32>,
    tokenizer: &Tokenizer,
    instances: &[Instance],
    repetitions: usize,
    config: &StrategyConfig,
    timer: &mut dyn Timer,
) -> Result<SpeedRow> {
    let bench = bench_inference(instances, repetitions, timer, |inst| {
        infer(strategy, inst, model, tokenizer, config).map(|_| ())
    })?;
    let max_sequence_length = match strategy {
        Strategy::BruteForce => config.document_len,
        Strategy::Concat512 | Strategy::Concat4096 => strategy.concat_len().expect("concat"),
        Strategy::SegmentBatch => config.max_total_tokens,
    };
    Ok(SpeedRow {
        strategy,
        trainable_parameters: model.count_parameters().trainable,
        max_sequence_length,
        bench,
    })
}

/// Aligned table: method, trainable parameters, max length, mean and SD
/// of per-instance seconds.
pub fn speed_table(rows: &[SpeedRow]) -> String {
    let mut out = format!(
        "{:<14}  {:>10}  {:>8}  {:>12}  {:>12}\n",
        "Method", "Trainable", "Max len", "Mean s/inst", "SD s/inst"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<14}  {:>10}  {:>8}  {:>12.6}  {:>12.6}\n",
            r.strategy.name(),
            r.trainable_parameters,
            r.max_sequence_length,
            r.per_instance_mean(),
            r.per_instance_sd()
        ));
    }
    out
}
