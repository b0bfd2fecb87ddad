use ndarray::{Array2, NdFloat};
use serde::{Deserialize, Serialize};

use super::network::{normal_init, LoraIds, LoraState, Model};
use super::LoraTarget;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub total: usize,
    pub trainable: usize,
}

impl<F: NdFloat> Model<F> {
    pub fn count_parameters(&self) -> ParamCount {
        let mut count = ParamCount { total: 0, trainable: 0 };
        for p in self.params.iter() {
            count.total += p.value.len();
            if p.trainable {
                count.trainable += p.value.len();
            }
        }
        count
    }

    pub fn is_adapted(&self) -> bool {
        self.lora.is_some()
    }

    pub fn lora_rank(&self) -> Option<usize> {
        self.lora.as_ref().map(|l| l.rank)
    }

    pub fn lora_targets(&self) -> Option<&[LoraTarget]> {
        self.lora.as_ref().map(|l| l.targets.as_slice())
    }

    /// Adds rank-`rank` adapters to the chosen projections of every layer
    /// and freezes everything except adapters and the head.
    ///
    /// `A` starts from a small normal draw and `B` from zeros, so the
    /// adapted model initially computes exactly the base function.
    pub fn inject_lora(&mut self, rank: usize, targets: &[LoraTarget], seed: u64) -> Result<()> {
        if self.lora.is_some() {
            return Err(Error::State("model already carries LoRA adapters".into()));
        }
        let d = self.config.hidden;
        if rank == 0 || rank >= d {
            return Err(Error::arg(format!("LoRA rank must lie in [1, {d}), got {rank}")));
        }
        if targets.is_empty() {
            return Err(Error::arg("no LoRA targets given"));
        }
        let mut targets = targets.to_vec();
        targets.sort_by_key(|t| LoraTarget::ALL.iter().position(|a| a == t));
        targets.dedup();

        let first_param = self.params.len();
        let std = 1.0 / (d as f64).sqrt();
        let mut layers = std::mem::take(&mut self.layers);
        for (l, layer) in layers.iter_mut().enumerate() {
            for (t, &target) in targets.iter().enumerate() {
                let name = format!("layer{l}.attn.{}", target.name());
                let init_seed = seed ^ ((l * 3 + t) as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let a = self.params.push(format!("{name}.lora_a"), normal_init(init_seed, rank, d, std));
                let b = self.params.push(format!("{name}.lora_b"), Array2::zeros((d, rank)));
                layer.projection_mut(target).lora = Some(LoraIds { a, b });
            }
        }
        self.layers = layers;

        let ids: Vec<_> = (0..self.params.len()).map(super::ParamId).collect();
        for id in ids {
            let keep = id.0 >= first_param || Self::is_head_param(&self.params.param(id).name);
            self.params.set_trainable(id, keep);
        }
        self.lora = Some(LoraState { rank, targets, first_param });
        Ok(())
    }

    /// Folds every adapter into its base weight and removes the adapters.
    /// The result is a plain, fully trainable model.
    pub fn merge_lora(&mut self) -> Result<()> {
        let state = self.lora.take().ok_or_else(|| Error::State("model has no LoRA adapters".into()))?;
        let mut layers = std::mem::take(&mut self.layers);
        for layer in layers.iter_mut() {
            for &target in &state.targets {
                let lin = layer.projection_mut(target);
                if let Some(l) = lin.lora.take() {
                    // weights are stored in×out, so the update is (BA)ᵀ
                    let delta = self.params.get(l.a).t().dot(&self.params.get(l.b).t());
                    *self.params.get_mut(lin.w) += &delta;
                }
            }
        }
        self.layers = layers;
        self.params.truncate(state.first_param);
        for p in self.params.iter_mut() {
            p.trainable = true;
        }
        Ok(())
    }

    /// Marks every tensor frozen or trainable.
    pub fn set_all_trainable(&mut self, trainable: bool) {
        for p in self.params.iter_mut() {
            p.trainable = trainable;
        }
    }
}

impl<F: NdFloat> Model<F> {
    /// Copies every non-head tensor of `other` with a matching name. Row
    /// counts may differ for position tables; overlapping rows are copied.
    /// Returns the number of tensors copied.
    pub fn load_encoder_from(&mut self, other: &Model<F>) -> Result<usize> {
        let mut copied = 0;
        for p in self.params.iter_mut().filter(|p| !Self::is_head_param(&p.name)) {
            let Some(id) = other.params.find(&p.name) else { continue };
            let src = other.params.get(id);
            if src.ncols() != p.value.ncols() {
                return Err(Error::Shape(format!(
                    "{}: width {} vs {}",
                    p.name,
                    src.ncols(),
                    p.value.ncols()
                )));
            }
            if src.nrows() != p.value.nrows() && p.name != "embed.positions" {
                return Err(Error::Shape(format!("{}: {} vs {} rows", p.name, src.nrows(), p.value.nrows())));
            }
            let rows = src.nrows().min(p.value.nrows());
            p.value.slice_mut(ndarray::s![..rows, ..]).assign(&src.slice(ndarray::s![..rows, ..]));
            copied += 1;
        }
        Ok(copied)
    }
}
