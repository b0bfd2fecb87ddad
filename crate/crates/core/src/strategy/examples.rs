use super::{document_sequence, segment_input, Strategy, StrategyConfig};
use crate::corpus::{subsample_per_class, Instance};
use crate::error::{Error, Result};
use crate::model::EncoderInput;
use crate::text::{assemble_instance, AssembledSequence, Tokenizer};
use crate::train::TrainExample;

/// Encoder input of an instance for the concat or segment strategies.
/// Segment inputs longer than `max_total_tokens` are head-truncated and a
/// warning is returned.
pub fn instance_input(
    instance: &Instance,
    tokenizer: &Tokenizer,
    strategy: Strategy,
    config: &StrategyConfig,
) -> Result<(EncoderInput, AssembledSequence, Vec<String>)> {
    let full = assemble_instance(instance, tokenizer);
    match strategy {
        Strategy::BruteForce => Err(Error::arg("brute force has one input per document")),
        Strategy::Concat512 | Strategy::Concat4096 => {
            let seq = full.truncated(strategy.concat_len().expect("concat"));
            Ok((EncoderInput::single(&seq.tokens.ids), seq, Vec::new()))
        }
        Strategy::SegmentBatch => {
            let mut warnings = Vec::new();
            let seq = if full.tokens.len() > config.max_total_tokens {
                warnings.push(format!(
                    "instance {} has {} tokens; truncated to {}",
                    instance.instance_id,
                    full.tokens.len(),
                    config.max_total_tokens
                ));
                full.truncated(config.max_total_tokens)
            } else {
                full
            };
            Ok((segment_input(&seq, tokenizer, config.segment_size)?, seq, warnings))
        }
    }
}

/// One example per document of every labelled instance, labelled with the
/// instance's team, optionally capped at `per_class` per team.
pub fn document_examples(
    instances: &[Instance],
    tokenizer: &Tokenizer,
    max_len: usize,
    per_class: Option<usize>,
    seed: u64,
) -> Vec<TrainExample> {
    let all: Vec<TrainExample> = instances
        .iter()
        .filter_map(|inst| inst.label.map(|l| (inst, l)))
        .flat_map(|(inst, label)| {
            inst.documents.iter().map(move |doc| TrainExample {
                id: doc.doc_id.clone(),
                input: EncoderInput::single(&document_sequence(&doc.text, tokenizer, max_len)),
                label: label.index(),
            })
        })
        .collect();
    match per_class {
        Some(n) => subsample_per_class(&all, |e| e.label, n, seed),
        None => all,
    }
}

/// One example per labelled instance, shaped for `strategy`.
pub fn instance_examples(
    instances: &[Instance],
    tokenizer: &Tokenizer,
    strategy: Strategy,
    config: &StrategyConfig,
) -> Result<Vec<TrainExample>> {
    instances
        .iter()
        .filter_map(|inst| inst.label.map(|l| (inst, l)))
        .map(|(inst, label)| {
            let (input, _, _) = instance_input(inst, tokenizer, strategy, config)?;
            Ok(TrainExample { id: inst.instance_id.clone(), input, label: label.index() })
        })
        .collect()
}
