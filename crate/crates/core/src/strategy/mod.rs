//! The three ways of turning a multi-document instance into one
//! recommendation: per-document voting, concatenate-and-truncate, and
//! segment-and-batch with a label-attention head.

mod examples;
mod vote;

use std::fmt;
use std::str::FromStr;

use ndarray::NdFloat;
use serde::{Deserialize, Serialize};

use crate::corpus::Instance;
use crate::error::{Error, Result};
use crate::model::{EncoderInput, HeadKind, Model, Prediction, TriageRecommendation};
use crate::text::{assemble_instance, clean_text, segment, AssembledSequence, Tokenizer};
use crate::team::TeamLabel;

pub use examples::{document_examples, instance_examples, instance_input};
pub use vote::{modal_vote, Vote, VoteRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    BruteForce,
    #[serde(rename = "concat_512")]
    Concat512,
    #[serde(rename = "concat_4096")]
    Concat4096,
    SegmentBatch,
}

impl Strategy {
    pub const ALL: [Strategy; 4] =
        [Strategy::BruteForce, Strategy::Concat512, Strategy::Concat4096, Strategy::SegmentBatch];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::BruteForce => "brute_force",
            Strategy::Concat512 => "concat_512",
            Strategy::Concat4096 => "concat_4096",
            Strategy::SegmentBatch => "segment_batch",
        }
    }

    /// Truncation length of the concatenating strategies.
    pub fn concat_len(self) -> Option<usize> {
        match self {
            Strategy::Concat512 => Some(512),
            Strategy::Concat4096 => Some(4096),
            _ => None,
        }
    }

    pub fn head_kind(self) -> HeadKind {
        match self {
            Strategy::SegmentBatch => HeadKind::LabelAttention,
            _ => HeadKind::PooledMlp,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    /// Per-document truncation length of brute-force voting.
    pub document_len: usize,
    /// Pad every document to `document_len`, as a fixed-shape encoder
    /// would. Padding does not change outputs, only cost.
    pub pad_documents: bool,
    pub segment_size: usize,
    /// Cap on tokens per instance for segment batching.
    pub max_total_tokens: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self { document_len: 512, pad_documents: true, segment_size: 512, max_total_tokens: 12_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub recommendation: TriageRecommendation,
    pub votes: Option<VoteRecord>,
    /// The exact sequence given to the encoder (concat and segment paths).
    pub sequence: Option<AssembledSequence>,
    pub warnings: Vec<String>,
}

/// Serialized result of one strategy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub probabilities: Vec<f64>,
    pub predicted: TeamLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<VoteRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_ref: Option<String>,
}

impl StrategyOutcome {
    pub fn result(&self, attention_ref: Option<String>) -> StrategyResult {
        StrategyResult {
            strategy: self.strategy,
            probabilities: self.recommendation.probabilities.clone(),
            predicted: self.recommendation.predicted,
            votes: self.votes.clone(),
            attention_ref: attention_ref.filter(|_| self.recommendation.per_label_attention.is_some()),
        }
    }
}

fn require_head<F: NdFloat>(model: &Model<F>, strategy: Strategy) -> Result<()> {
    let want = strategy.head_kind();
    if model.config.head_kind != want {
        return Err(Error::UnsupportedHead(format!(
            "{strategy} needs a {want:?} head, model has {:?}",
            model.config.head_kind
        )));
    }
    Ok(())
}

/// Runs `strategy` on one instance.
pub fn infer<F: NdFloat + Into<f64>>(
    strategy: Strategy,
    instance: &Instance,
    model: &Model<F>,
    tokenizer: &Tokenizer,
    config: &StrategyConfig,
) -> Result<StrategyOutcome> {
    match strategy {
        Strategy::BruteForce => infer_brute_force(instance, model, tokenizer, config),
        Strategy::Concat512 | Strategy::Concat4096 => {
            infer_concat_truncate(instance, model, tokenizer, strategy.concat_len().expect("concat"))
        }
        Strategy::SegmentBatch => infer_segment_batch(instance, model, tokenizer, config),
    }
}

/// Start token plus one document's tokens, truncated.
pub fn document_sequence(text: &str, tokenizer: &Tokenizer, max_len: usize) -> Vec<u32> {
    let mut ids = vec![tokenizer.special().start];
    ids.extend(tokenizer.encode(&clean_text(text)));
    ids.truncate(max_len);
    ids
}

/// Votes over documents; the mean per-document distribution is reported.
pub fn infer_brute_force<F: NdFloat + Into<f64>>(
    instance: &Instance,
    model: &Model<F>,
    tokenizer: &Tokenizer,
    config: &StrategyConfig,
) -> Result<StrategyOutcome> {
    require_head(model, Strategy::BruteForce)?;
    if instance.documents.is_empty() {
        return Err(Error::arg(format!("instance {} has no documents to vote", instance.instance_id)));
    }
    let pad = tokenizer.special().pad;
    let mut votes = Vec::with_capacity(instance.documents.len());
    for (doc_index, doc) in instance.documents.iter().enumerate() {
        let ids = document_sequence(&doc.text, tokenizer, config.document_len);
        let input = if config.pad_documents {
            EncoderInput::padded(&ids, config.document_len, pad)
        } else {
            EncoderInput::single(&ids)
        };
        let rec = TriageRecommendation::from_prediction(&model.predict(&input)?)?;
        votes.push(Vote { doc_index, team: rec.predicted, probabilities: rec.probabilities });
    }
    let record = VoteRecord::from_votes(votes);
    let n = record.votes.len() as f64;
    let mut mean = vec![0.0; crate::team::NUM_TEAMS];
    for v in &record.votes {
        for (m, p) in mean.iter_mut().zip(&v.probabilities) {
            *m += p / n;
        }
    }
    let recommendation =
        TriageRecommendation { probabilities: mean, predicted: record.modal_team, per_label_attention: None };
    Ok(StrategyOutcome {
        strategy: Strategy::BruteForce,
        recommendation,
        votes: Some(record),
        sequence: None,
        warnings: Vec::new(),
    })
}

/// Concatenates most-recent-first, keeps the first `max_len` tokens and
/// classifies with the pooled head.
pub fn infer_concat_truncate<F: NdFloat + Into<f64>>(
    instance: &Instance,
    model: &Model<F>,
    tokenizer: &Tokenizer,
    max_len: usize,
) -> Result<StrategyOutcome> {
    require_head(model, Strategy::Concat512)?;
    if model.config.positional && max_len > model.config.max_positions {
        return Err(Error::arg(format!(
            "max_len {max_len} exceeds the model's {} positions",
            model.config.max_positions
        )));
    }
    let seq = assemble_instance(instance, tokenizer).truncated(max_len);
    let pred = model.predict(&EncoderInput::single(&seq.tokens.ids))?;
    let strategy = if max_len <= 512 { Strategy::Concat512 } else { Strategy::Concat4096 };
    Ok(StrategyOutcome {
        strategy,
        recommendation: TriageRecommendation::from_prediction(&pred)?,
        votes: None,
        sequence: Some(seq),
        warnings: Vec::new(),
    })
}

/// Splits the whole instance into fixed-size segments, encodes them as one
/// batch and classifies all real tokens with the label-attention head.
pub fn infer_segment_batch<F: NdFloat + Into<f64>>(
    instance: &Instance,
    model: &Model<F>,
    tokenizer: &Tokenizer,
    config: &StrategyConfig,
) -> Result<StrategyOutcome> {
    let (pred, seq, warnings) = segment_batch_prediction(instance, model, tokenizer, config)?;
    Ok(StrategyOutcome {
        strategy: Strategy::SegmentBatch,
        recommendation: TriageRecommendation::from_prediction(&pred)?,
        votes: None,
        sequence: Some(seq),
        warnings,
    })
}

/// Raw prediction of the segment path, with the encoded sequence.
pub fn segment_batch_prediction<F: NdFloat>(
    instance: &Instance,
    model: &Model<F>,
    tokenizer: &Tokenizer,
    config: &StrategyConfig,
) -> Result<(Prediction<F>, AssembledSequence, Vec<String>)> {
    require_head(model, Strategy::SegmentBatch)?;
    let (input, seq, warnings) = instance_input(instance, tokenizer, Strategy::SegmentBatch, config)?;
    let pred = model.predict(&input)?;
    Ok((pred, seq, warnings))
}

/// Read-only helper so callers can check what a strategy feeds the model.
pub fn concat_input(instance: &Instance, tokenizer: &Tokenizer, max_len: usize) -> Vec<u32> {
    assemble_instance(instance, tokenizer).truncated(max_len).tokens.ids
}

pub(crate) fn segment_input(seq: &AssembledSequence, tokenizer: &Tokenizer, s: usize) -> Result<EncoderInput> {
    Ok(EncoderInput::from_segments(&segment(&seq.tokens, s, tokenizer.special().pad)?))
}
