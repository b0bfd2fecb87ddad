use chrono::{DateTime, Utc};
use ndarray::{Array1, Array2, NdFloat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Instance;
use crate::error::{Error, Result};
use crate::model::{argmax, HeadKind, Model};
use crate::strategy::{segment_batch_prediction, StrategyConfig};
use crate::team::TeamLabel;
use crate::text::{clean_text, TokenOrigin, Tokenizer};

pub const EXPLANATION_SCHEMA_VERSION: u32 = 1;

/// One document token with its attention weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub doc_index: usize,
    /// Char range in the cleaned document text.
    pub start: usize,
    pub end: usize,
    /// Position in the encoded sequence.
    pub token_index: usize,
    /// Raw soft-maxed attention weight.
    pub weight: f64,
    /// Weight min-max rescaled over this instance's spans, for display.
    pub display: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedDocument {
    pub doc_index: usize,
    pub doc_id: String,
    pub timestamp: DateTime<Utc>,
    /// Cleaned text the span offsets refer to.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationBundle {
    pub schema_version: u32,
    pub instance_id: String,
    pub predicted: TeamLabel,
    pub probabilities: Vec<f64>,
    /// Label whose attention row is shown.
    pub label: TeamLabel,
    pub normalization: String,
    /// Full attention row over the encoded sequence, including the start
    /// and separator tokens; sums to 1.
    pub attention: Vec<f64>,
    pub spans: Vec<Span>,
    pub documents: Vec<ExplainedDocument>,
    pub warnings: Vec<String>,
}

const NORMALIZATION: &str = "weights are soft-maxed per label over all encoded tokens; \
display values are min-max rescaled per instance";

/// Explains the segment-batch prediction of `instance` through the
/// attention row of `label` (the predicted team when `None`).
pub fn explain_instance<F: NdFloat + Into<f64>>(
    instance: &Instance,
    model: &Model<F>,
    tokenizer: &Tokenizer,
    config: &StrategyConfig,
    label: Option<TeamLabel>,
) -> Result<ExplanationBundle> {
    if model.config.head_kind != HeadKind::LabelAttention {
        return Err(Error::UnsupportedHead("explanations need the label-attention head".into()));
    }
    let (pred, seq, warnings) = segment_batch_prediction(instance, model, tokenizer, config)?;
    let probabilities: Vec<f64> = pred.probabilities.iter().map(|&p| p.into()).collect();
    let predicted = TeamLabel::from_index(argmax(&probabilities)).expect("team index");
    let label = label.unwrap_or(predicted);
    let att = pred.attention.expect("label-attention head");
    let attention: Vec<f64> = att.row(label.index()).iter().map(|&a| a.into()).collect();

    let mut spans: Vec<Span> = seq
        .origins
        .iter()
        .enumerate()
        .filter_map(|(token_index, origin)| match *origin {
            TokenOrigin::Document { doc_index, start, end } => Some(Span {
                doc_index,
                start,
                end,
                token_index,
                weight: attention[token_index],
                display: 0.0,
            }),
            _ => None,
        })
        .collect();
    let lo = spans.iter().map(|s| s.weight).fold(f64::INFINITY, f64::min);
    let hi = spans.iter().map(|s| s.weight).fold(f64::NEG_INFINITY, f64::max);
    for s in &mut spans {
        s.display = if hi > lo { (s.weight - lo) / (hi - lo) } else { 1.0 };
    }

    let documents = instance
        .documents
        .iter()
        .enumerate()
        .map(|(doc_index, d)| ExplainedDocument {
            doc_index,
            doc_id: d.doc_id.clone(),
            timestamp: d.timestamp,
            text: clean_text(&d.text),
        })
        .collect();
    Ok(ExplanationBundle {
        schema_version: EXPLANATION_SCHEMA_VERSION,
        instance_id: instance.instance_id.clone(),
        predicted,
        probabilities,
        label,
        normalization: NORMALIZATION.into(),
        attention,
        spans,
        documents,
        warnings,
    })
}

/// Value vector of the predicted label from the segment-batch path, and
/// the predicted team.
pub fn embed_instance<F: NdFloat + Into<f64>>(
    instance: &Instance,
    model: &Model<F>,
    tokenizer: &Tokenizer,
    config: &StrategyConfig,
) -> Result<(Array1<f64>, TeamLabel)> {
    let (pred, _, _) = segment_batch_prediction(instance, model, tokenizer, config)?;
    let k = argmax(&pred.logits);
    let values = pred.label_values.expect("label-attention head");
    Ok((values.row(k).mapv(|v| v.into()), TeamLabel::from_index(k).expect("team index")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub instance_ids: Vec<String>,
    pub labels: Vec<TeamLabel>,
    /// One row per instance.
    pub vectors: Array2<f64>,
}

/// Embeds every labelled instance; rows follow the input order.
pub fn embed_training_set<F: NdFloat + Into<f64>>(
    instances: &[Instance],
    model: &Model<F>,
    tokenizer: &Tokenizer,
    config: &StrategyConfig,
) -> Result<Embeddings> {
    let labelled: Vec<(&Instance, TeamLabel)> =
        instances.iter().filter_map(|i| i.label.map(|l| (i, l))).collect();
    let rows = labelled
        .par_iter()
        .map(|(inst, _)| embed_instance(inst, model, tokenizer, config).map(|(v, _)| v))
        .collect::<Result<Vec<_>>>()?;
    let d = model.config.hidden;
    let mut vectors = Array2::zeros((rows.len(), d));
    for (mut dst, src) in vectors.rows_mut().into_iter().zip(&rows) {
        dst.assign(src);
    }
    Ok(Embeddings {
        instance_ids: labelled.iter().map(|(i, _)| i.instance_id.clone()).collect(),
        labels: labelled.iter().map(|(_, l)| *l).collect(),
        vectors,
    })
}
