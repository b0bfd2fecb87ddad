use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::team::{TeamLabel, NUM_TEAMS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub team: TeamLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
}

impl ClassMetrics {
    /// A class neither predicted nor present in the gold labels.
    pub fn is_absent(&self) -> bool {
        self.support == 0 && self.predicted == 0
    }
}

/// Classification report. Macro averages run over classes that occur in
/// the predictions or the gold labels; absent classes are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[gold][pred]`.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn support(&self, team: TeamLabel) -> usize {
        self.counts[team.index()].iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

fn check_pair(predictions: &[TeamLabel], gold: &[TeamLabel]) -> Result<()> {
    if predictions.len() != gold.len() {
        return Err(Error::arg(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    Ok(())
}

pub fn confusion_matrix(predictions: &[TeamLabel], gold: &[TeamLabel]) -> Result<ConfusionMatrix> {
    check_pair(predictions, gold)?;
    let mut counts = vec![vec![0; NUM_TEAMS]; NUM_TEAMS];
    for (p, g) in predictions.iter().zip(gold) {
        counts[g.index()][p.index()] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn compute_metrics(predictions: &[TeamLabel], gold: &[TeamLabel]) -> Result<MetricsReport> {
    if gold.is_empty() {
        return Err(Error::arg("no predictions to score"));
    }
    let cm = confusion_matrix(predictions, gold)?;
    let n = gold.len();
    let per_class: Vec<ClassMetrics> = TeamLabel::ALL
        .iter()
        .map(|&team| {
            let i = team.index();
            let tp = cm.counts[i][i];
            let support = cm.support(team);
            let predicted: usize = cm.counts.iter().map(|row| row[i]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            ClassMetrics { team, precision, recall, f1: f1(precision, recall), support, predicted }
        })
        .collect();

    let present: Vec<&ClassMetrics> = per_class.iter().filter(|c| !c.is_absent()).collect();
    let mean = |f: fn(&ClassMetrics) -> f64| present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64;
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / n as f64
    };
    let accuracy = ratio(cm.trace(), n);
    Ok(MetricsReport {
        count: n,
        accuracy,
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        // single-label classification: every error is one FP and one FN
        micro_precision: accuracy,
        micro_recall: accuracy,
        micro_f1: accuracy,
        weighted_precision: weighted(|c| c.precision),
        weighted_recall: weighted(|c| c.recall),
        weighted_f1: weighted(|c| c.f1),
        per_class,
    })
}

/// Instance length buckets in tokens: (0,128], (128,512], (512,4096], (4096,∞).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthStratum {
    Short,
    Medium,
    Long,
    ExtraLong,
}

impl LengthStratum {
    pub const ALL: [LengthStratum; 4] =
        [LengthStratum::Short, LengthStratum::Medium, LengthStratum::Long, LengthStratum::ExtraLong];

    pub fn of(tokens: usize) -> Self {
        match tokens {
            0..=128 => LengthStratum::Short,
            129..=512 => LengthStratum::Medium,
            513..=4096 => LengthStratum::Long,
            _ => LengthStratum::ExtraLong,
        }
    }

    /// `(min exclusive, max inclusive)`.
    pub fn bounds(self) -> (usize, Option<usize>) {
        match self {
            LengthStratum::Short => (0, Some(128)),
            LengthStratum::Medium => (128, Some(512)),
            LengthStratum::Long => (512, Some(4096)),
            LengthStratum::ExtraLong => (4096, None),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LengthStratum::Short => "short",
            LengthStratum::Medium => "medium",
            LengthStratum::Long => "long",
            LengthStratum::ExtraLong => "extra_long",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumF1 {
    pub stratum: LengthStratum,
    pub count: usize,
    pub macro_f1: f64,
}

/// Macro F1 inside each populated length stratum, in stratum order.
pub fn stratified_f1(predictions: &[TeamLabel], gold: &[TeamLabel], lengths: &[usize]) -> Result<Vec<StratumF1>> {
    check_pair(predictions, gold)?;
    if lengths.len() != gold.len() {
        return Err(Error::arg(format!("{} lengths for {} labels", lengths.len(), gold.len())));
    }
    let mut out = Vec::new();
    for stratum in LengthStratum::ALL {
        let idx: Vec<usize> = (0..gold.len()).filter(|&i| LengthStratum::of(lengths[i]) == stratum).collect();
        if idx.is_empty() {
            continue;
        }
        let p: Vec<_> = idx.iter().map(|&i| predictions[i]).collect();
        let g: Vec<_> = idx.iter().map(|&i| gold[i]).collect();
        out.push(StratumF1 { stratum, count: idx.len(), macro_f1: compute_metrics(&p, &g)?.macro_f1 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use TeamLabel::*;

    #[test]
    fn perfect_predictions() {
        let g = [ED, ID, OA, EIP, PN, OA];
        let r = compute_metrics(&g, &g).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        let cm = confusion_matrix(&g, &g).unwrap();
        for i in 0..NUM_TEAMS {
            for j in 0..NUM_TEAMS {
                if i != j {
                    assert_eq!(cm.counts[i][j], 0);
                }
            }
        }
    }

    #[test]
    fn two_class_hand_case() {
        let r = compute_metrics(&[ED, ED, ID], &[ED, ID, ID]).unwrap();
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.per_class.iter().filter(|c| c.is_absent()).count(), 3);
    }

    #[test]
    fn off_diagonal_single() {
        let cm = confusion_matrix(&[OA], &[ED]).unwrap();
        assert_eq!(cm.counts[ED.index()][OA.index()], 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn empty_and_mismatch_rejected() {
        assert!(matches!(compute_metrics(&[], &[]), Err(Error::Argument(_))));
        assert!(compute_metrics(&[ED], &[ED, ID]).is_err());
    }

    #[test]
    fn strata_bounds() {
        assert_eq!(LengthStratum::of(1), LengthStratum::Short);
        assert_eq!(LengthStratum::of(128), LengthStratum::Short);
        assert_eq!(LengthStratum::of(129), LengthStratum::Medium);
        assert_eq!(LengthStratum::of(512), LengthStratum::Medium);
        assert_eq!(LengthStratum::of(4096), LengthStratum::Long);
        assert_eq!(LengthStratum::of(4097), LengthStratum::ExtraLong);
        let s = stratified_f1(&[ED, ID], &[ED, ID], &[100, 100]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].stratum, LengthStratum::Short);
    }

    fn labels() -> impl Strategy<Value = Vec<(usize, usize)>> {
        prop::collection::vec((0..NUM_TEAMS, 0..NUM_TEAMS), 1..60)
    }

    proptest! {
        #[test]
        fn report_invariants(pairs in labels(), perm in Just(()).prop_perturb(|_, mut rng| {
            let mut p: Vec<usize> = (0..NUM_TEAMS).collect();
            for i in (1..p.len()).rev() { p.swap(i, rng.random_range(0..=i)); }
            p
        })) {
            let preds: Vec<_> = pairs.iter().map(|p| TeamLabel::from_index(p.0).unwrap()).collect();
            let gold: Vec<_> = pairs.iter().map(|p| TeamLabel::from_index(p.1).unwrap()).collect();
            let r = compute_metrics(&preds, &gold).unwrap();
            let cm = confusion_matrix(&preds, &gold).unwrap();
            prop_assert!((r.accuracy - cm.trace() as f64 / gold.len() as f64).abs() < 1e-12);
            for v in [r.accuracy, r.macro_f1, r.macro_precision, r.macro_recall, r.weighted_f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            for c in &r.per_class {
                prop_assert_eq!(c.support, cm.support(c.team));
            }
            let map = |t: &TeamLabel| TeamLabel::from_index(perm[t.index()]).unwrap();
            let rp = compute_metrics(&preds.iter().map(map).collect::<Vec<_>>(), &gold.iter().map(map).collect::<Vec<_>>()).unwrap();
            prop_assert!((rp.macro_f1 - r.macro_f1).abs() < 1e-12);
            let lengths = vec![300; gold.len()];
            let s = stratified_f1(&preds, &gold, &lengths).unwrap();
            prop_assert!((s[0].macro_f1 - r.macro_f1).abs() < 1e-12);
        }
    }
}
