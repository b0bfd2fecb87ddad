use serde::{Deserialize, Serialize};

use super::{Acceptance, Instance};
use crate::error::{Error, Result};
use crate::text::TokenCount;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    pub count: usize,
    pub mean: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
}

impl LengthSummary {
    pub fn from_lengths(lengths: &[f64]) -> Option<Self> {
        if lengths.is_empty() {
            return None;
        }
        let mut sorted = lengths.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            count: sorted.len(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p25: percentile_sorted(&sorted, 25.0),
            p50: percentile_sorted(&sorted, 50.0),
            p75: percentile_sorted(&sorted, 75.0),
            p90: percentile_sorted(&sorted, 90.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_document: LengthSummary,
    pub per_instance: LengthSummary,
    pub median_accepted: Option<f64>,
    pub median_not_accepted: Option<f64>,
    pub label_counts: Vec<usize>,
}

/// Percentile with linear interpolation between closest ranks.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, q)
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let rank = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Token statistics. Instance length is the sum of its documents' token
/// counts (no special tokens).
pub fn corpus_stats(instances: &[Instance], tokens: &dyn TokenCount) -> Result<CorpusStats> {
    if instances.is_empty() {
        return Err(Error::arg("corpus is empty"));
    }
    let mut per_doc = Vec::new();
    let mut per_inst = Vec::with_capacity(instances.len());
    let mut accepted = Vec::new();
    let mut not_accepted = Vec::new();
    let mut label_counts = vec![0; crate::team::NUM_TEAMS];
    for inst in instances {
        let mut total = 0usize;
        for d in &inst.documents {
            let n = tokens.count_tokens(&d.text);
            per_doc.push(n as f64);
            total += n;
        }
        per_inst.push(total as f64);
        match inst.acceptance {
            Acceptance::Accepted => accepted.push(total as f64),
            Acceptance::NotAccepted => not_accepted.push(total as f64),
            Acceptance::Censored => {}
        }
        if let Some(l) = inst.label {
            label_counts[l.index()] += 1;
        }
    }
    let per_document = LengthSummary::from_lengths(&per_doc)
        .ok_or_else(|| Error::arg("corpus has no documents"))?;
    Ok(CorpusStats {
        per_document,
        per_instance: LengthSummary::from_lengths(&per_inst).expect("non-empty"),
        median_accepted: (!accepted.is_empty()).then(|| percentile(&accepted, 50.0)),
        median_not_accepted: (!not_accepted.is_empty()).then(|| percentile(&not_accepted, 50.0)),
        label_counts,
    })
}
