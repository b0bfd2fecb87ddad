use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Instance;
use crate::team::NUM_TEAMS;

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<Instance>,
    pub eval: Vec<Instance>,
}

/// Patient-disjoint split: a shuffled `eval_fraction` of unique patient ids
/// goes to the eval side, the rest to train. Instance order is preserved.
pub fn split_by_patient(instances: &[Instance], eval_fraction: f64, seed: u64) -> Split {
    let mut patients: Vec<&str> = instances
        .iter()
        .map(|i| i.patient_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    patients.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_eval = ((patients.len() as f64) * eval_fraction.clamp(0.0, 1.0)).round() as usize;
    let eval_ids: BTreeSet<&str> = patients.into_iter().take(n_eval).collect();

    let (eval, train): (Vec<Instance>, Vec<Instance>) =
        instances.iter().cloned().partition(|i| eval_ids.contains(i.patient_id.as_str()));
    Split { train, eval }
}

/// Caps each class at `per_class` items by seeded random subsampling,
/// keeping the original relative order of the survivors.
pub fn subsample_per_class<T: Clone>(
    items: &[T],
    label: impl Fn(&T) -> usize,
    per_class: usize,
    seed: u64,
) -> Vec<T> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_class.entry(label(item)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for class in 0..NUM_TEAMS.max(by_class.keys().max().map_or(0, |k| k + 1)) {
        if let Some(idx) = by_class.get_mut(&class) {
            idx.shuffle(&mut rng);
            keep.extend(idx.iter().take(per_class).copied());
        }
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| items[i].clone()).collect()
}
