use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Instance;
use crate::team::{TeamLabel, NUM_TEAMS};

pub const BOUNCE_WINDOW_DAYS: i64 = 30;

/// First-to-second referral cross-tabulation. Row `A` is the team that
/// received a patient's first referral; column `B < T` the team receiving
/// the next referral within the window; column `T` means no onward
/// referral in the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BounceTable {
    pub window_days: i64,
    pub counts: Vec<Vec<u64>>,
    pub probabilities: Vec<Vec<f64>>,
}

impl BounceTable {
    pub fn column_labels() -> Vec<String> {
        TeamLabel::ALL
            .iter()
            .map(|t| t.code().to_string())
            .chain(std::iter::once("none".to_string()))
            .collect()
    }
}

/// Builds the bounce table from each patient's first two referrals.
/// Longer chains contribute only their first transition. Instances without
/// `referred_team` are ignored.
pub fn bounce_matrix(instances: &[Instance], window_days: i64) -> BounceTable {
    let mut by_patient: BTreeMap<&str, Vec<&Instance>> = BTreeMap::new();
    for inst in instances.iter().filter(|i| i.referred_team.is_some()) {
        by_patient.entry(inst.patient_id.as_str()).or_default().push(inst);
    }

    let mut counts = vec![vec![0u64; NUM_TEAMS + 1]; NUM_TEAMS];
    for refs in by_patient.values_mut() {
        refs.sort_by(|a, b| a.referral_date.cmp(&b.referral_date).then_with(|| a.instance_id.cmp(&b.instance_id)));
        let first = refs[0];
        let a = first.referred_team.expect("filtered").index();
        let col = refs
            .get(1)
            .filter(|second| (second.referral_date - first.referral_date).num_days() <= window_days)
            .and_then(|second| second.referred_team)
            .map(|t| t.index())
            .unwrap_or(NUM_TEAMS);
        counts[a][col] += 1;
    }

    let probabilities = counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                let mut p = vec![0.0; NUM_TEAMS + 1];
                p[NUM_TEAMS] = 1.0;
                p
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();

    BounceTable { window_days, counts, probabilities }
}
