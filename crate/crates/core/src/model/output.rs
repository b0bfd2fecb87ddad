use serde::{Deserialize, Serialize};

use super::network::Prediction;
use crate::error::{Error, Result};
use crate::team::TeamLabel;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<F: PartialOrd + Copy>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageRecommendation {
    pub probabilities: Vec<f64>,
    pub predicted: TeamLabel,
    /// Labels × tokens, present for the label-attention head.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_label_attention: Option<Vec<Vec<f64>>>,
}

impl TriageRecommendation {
    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != crate::team::NUM_TEAMS {
            return Err(Error::arg(format!("{} probabilities for 5 teams", probabilities.len())));
        }
        let predicted = TeamLabel::from_index(argmax(&probabilities)).expect("index below team count");
        Ok(Self { probabilities, predicted, per_label_attention: None })
    }

    pub fn from_prediction<F: Into<f64> + Copy>(p: &Prediction<F>) -> Result<Self> {
        let mut rec = Self::from_probabilities(p.probabilities.iter().map(|&v| v.into()).collect())?;
        rec.per_label_attention = p
            .attention
            .as_ref()
            .map(|a| a.rows().into_iter().map(|r| r.iter().map(|&v| v.into()).collect()).collect());
        Ok(rec)
    }
}
