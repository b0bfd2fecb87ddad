use ndarray::NdFloat;

use crate::error::{Error, Result};
use crate::model::ops;

/// Cross-entropy `−log softmax(logits)[gold]` and its gradient with
/// respect to the logits.
pub fn cross_entropy<F: NdFloat>(logits: &[F], gold: usize) -> Result<(F, Vec<F>)> {
    if gold >= logits.len() {
        return Err(Error::arg(format!("label {gold} outside [0, {})", logits.len())));
    }
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).fold(F::zero(), |a, b| a + b).ln();
    let loss = lse - logits[gold];
    let mut grad = ops::softmax(logits);
    grad[gold] -= F::one();
    Ok((loss, grad))
}
