use ndarray::NdFloat;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::early::{EarlyStopping, StopDecision};
use super::loss::cross_entropy;
use super::optim::{lr_at, AdamW};
use super::{TrainConfig, TrainExample};
use crate::error::{Error, Result};
use crate::eval::compute_metrics;
use crate::model::ops::cst;
use crate::model::{argmax, Grads, Mode, Model};
use crate::team::TeamLabel;

fn dropout_seed(base: u64, i: usize) -> u64 {
    base ^ (i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Adds `scale ·` ∇loss of every example to `grads` and returns the summed
/// loss. `seed = None` disables dropout.
fn accumulate<F: NdFloat>(
    model: &Model<F>,
    batch: &[&TrainExample],
    seed: Option<u64>,
    scale: F,
    grads: &mut Grads<F>,
    batch_id: &str,
) -> Result<F> {
    let mut total = F::zero();
    for (i, ex) in batch.iter().enumerate() {
        let mode = match seed {
            Some(s) => Mode::Train { dropout_seed: dropout_seed(s, i) },
            None => Mode::Eval,
        };
        let pass = model.forward(&ex.input, mode)?;
        let (loss, mut dlogits) = cross_entropy(&pass.logits, ex.label)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { batch: format!("{batch_id} (example {})", ex.id) });
        }
        dlogits.iter_mut().for_each(|g| *g *= scale);
        model.backward(&pass, &dlogits, grads);
        total += loss;
    }
    Ok(total)
}

/// Mean loss over `batch` and its gradient for every trainable tensor.
pub fn batch_gradients<F: NdFloat>(
    model: &Model<F>,
    batch: &[TrainExample],
    seed: Option<u64>,
) -> Result<(F, Grads<F>)> {
    if batch.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    let mut grads = Grads::zeros_like(&model.params);
    let refs: Vec<&TrainExample> = batch.iter().collect();
    let scale = F::one() / cst::<F>(batch.len() as f64);
    let total = accumulate(model, &refs, seed, scale, &mut grads, "batch")?;
    Ok((total * scale, grads))
}

/// Macro F1 of argmax predictions over `examples`, evaluated in parallel.
pub fn macro_f1_on<F: NdFloat>(model: &Model<F>, examples: &[TrainExample]) -> Result<f64> {
    let preds = examples
        .par_iter()
        .map(|ex| model.predict(&ex.input).map(|p| argmax(&p.logits)))
        .collect::<Result<Vec<_>>>()?;
    let to_team = |i: usize| TeamLabel::from_index(i).ok_or_else(|| Error::arg(format!("label {i} is not a team")));
    let preds = preds.into_iter().map(to_team).collect::<Result<Vec<_>>>()?;
    let gold = examples.iter().map(|e| to_team(e.label)).collect::<Result<Vec<_>>>()?;
    Ok(compute_metrics(&preds, &gold)?.macro_f1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    pub mean_loss: f64,
    pub eval_macro_f1: f64,
    pub lr: f64,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        format!(
            "epoch={} step={} loss={:.6} eval_f1={:.4} lr={:.3e}",
            self.epoch, self.step, self.mean_loss, self.eval_macro_f1, self.lr
        )
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Weights of the best evaluation.
    pub model: Model<f32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_f1: f64,
    pub stopped_early: bool,
    pub optimizer_steps: usize,
    pub micro_batches: usize,
}

impl FitResult {
    pub fn log(&self) -> String {
        self.history.iter().map(|r| r.log_line() + "\n").collect()
    }
}

/// Trains with AdamW, linear warm-up/decay and gradient accumulation,
/// scoring macro F1 on `eval` after every epoch.
pub fn fit(model: Model<f32>, train: &[TrainExample], eval: &[TrainExample], config: &TrainConfig) -> Result<FitResult> {
    if eval.is_empty() {
        return Err(Error::arg("empty evaluation split"));
    }
    fit_with(model, train, config, |m| macro_f1_on(m, eval))
}

/// [`fit`] with a caller-supplied evaluation score (higher is better).
pub fn fit_with(
    mut model: Model<f32>,
    train: &[TrainExample],
    config: &TrainConfig,
    mut evaluate: impl FnMut(&Model<f32>) -> Result<f64>,
) -> Result<FitResult> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::arg("empty training split"));
    }
    let window = config.batch_size * config.gradient_accumulation_steps;
    let steps_per_epoch = train.len().div_ceil(window);
    let total_steps = steps_per_epoch * config.max_epochs;
    let warmup = (config.warmup_fraction * total_steps as f64).round() as usize;
    let mut opt = AdamW::new(config.beta1, config.beta2, config.epsilon, config.weight_decay);
    let mut grads = Grads::zeros_like(&model.params);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.clone();
    let mut history = Vec::new();
    let mut step = 0;
    let mut micro_batches = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for chunk in order.chunks(window) {
            grads.zero();
            let scale = 1.0 / chunk.len() as f32;
            for micro in chunk.chunks(config.batch_size) {
                let batch: Vec<&TrainExample> = micro.iter().map(|&i| &train[i]).collect();
                let id = format!("epoch {epoch} step {}", step + 1);
                let seed = config.seed ^ ((epoch as u64) << 32) ^ (micro_batches as u64);
                loss_sum += accumulate(&model, &batch, Some(seed), scale, &mut grads, &id)? as f64;
                micro_batches += 1;
            }
            if !grads.all_finite() {
                return Err(Error::NonFiniteLoss { batch: format!("epoch {epoch} step {} (gradient)", step + 1) });
            }
            step += 1;
            lr = lr_at(step, warmup, total_steps, config.learning_rate);
            opt.step(&mut model.params, &grads, lr)?;
        }
        let f1 = evaluate(&model)?;
        let record = EpochRecord { epoch, step, mean_loss: loss_sum / train.len() as f64, eval_macro_f1: f1, lr };
        log::info!("{}", record.log_line());
        history.push(record);
        match stopper.observe(f1) {
            StopDecision::Improved => best = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, best_f1) = stopper.best().expect("at least one evaluation");
    Ok(FitResult { model: best, history, best_epoch, best_f1, stopped_early, optimizer_steps: step, micro_batches })
}
