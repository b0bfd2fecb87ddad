use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit::batch_gradients;
use super::TrainExample;
use crate::error::{Error, Result};
use crate::model::{Model, ParamId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `name[row, col]` of the worst coordinate.
    pub worst: String,
    /// Largest relative error per checked tensor.
    pub per_tensor: Vec<(String, f64)>,
}

/// Relative error floor: coordinates whose analytic and numeric gradients
/// are both below this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

/// Compares analytic gradients of the mean batch loss with central
/// differences on at least `samples` coordinates spread over every
/// trainable tensor. Dropout masks are held fixed by `seed`.
pub fn grad_check(
    model: &Model<f64>,
    batch: &[TrainExample],
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::arg("eps must be positive"));
    }
    let dropout = Some(seed);
    let (_, grads) = batch_gradients(model, batch, dropout)?;
    let tracked: Vec<ParamId> = grads.iter().map(|(id, _)| id).collect();
    if tracked.is_empty() {
        return Err(Error::arg("model has no trainable parameters"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quota = samples.div_ceil(tracked.len()).max(1);
    let used_ids: std::collections::BTreeSet<usize> =
        batch.iter().flat_map(|e| e.input.ids.iter().map(|&i| i as usize)).collect();
    let max_len = batch.iter().map(|e| e.input.row_len()).max().unwrap_or(0);

    let mut probe = model.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, worst: String::new(), per_tensor: Vec::new() };
    for id in tracked {
        let name = model.params.param(id).name.clone();
        let (rows, cols) = model.params.get(id).dim();
        // embedding rows that the batch never touches have zero gradient
        let row_pool: Vec<usize> = match name.as_str() {
            "embed.tokens" => used_ids.iter().copied().collect(),
            "embed.positions" => (0..max_len.min(rows)).collect(),
            _ => (0..rows).collect(),
        };
        let pool = row_pool.len() * cols;
        let picks = sample(&mut rng, pool, quota.min(pool));
        let mut worst_here: f64 = 0.0;
        for k in picks {
            let (r, c) = (row_pool[k / cols], k % cols);
            let orig = probe.params.get(id)[[r, c]];
            probe.params.get_mut(id)[[r, c]] = orig + eps;
            let (plus, _) = batch_gradients(&probe, batch, dropout)?;
            probe.params.get_mut(id)[[r, c]] = orig - eps;
            let (minus, _) = batch_gradients(&probe, batch, dropout)?;
            probe.params.get_mut(id)[[r, c]] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(id).expect("tracked")[[r, c]];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
            worst_here = worst_here.max(rel);
            if rel > report.max_rel_error || report.checked == 0 {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst = format!("{name}[{r}, {c}]");
            }
            report.checked += 1;
        }
        report.per_tensor.push((name, worst_here));
    }
    Ok(report)
}
