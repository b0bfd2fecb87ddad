use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source of timestamps in seconds; injectable for tests.
pub trait Timer {
    fn now(&mut self) -> f64;
}

#[derive(Debug, Clone)]
pub struct WallTimer {
    origin: Instant,
}

impl Default for WallTimer {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Timer for WallTimer {
    fn now(&mut self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Advances by a fixed step on every reading.
#[derive(Debug, Clone)]
pub struct FixedStepTimer {
    pub t: f64,
    pub step: f64,
}

impl Timer for FixedStepTimer {
    fn now(&mut self) -> f64 {
        self.t += self.step;
        self.t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub instances: usize,
    pub repetitions: usize,
    /// Total seconds over the instance set, one per repetition.
    pub totals: Vec<f64>,
    pub mean_seconds: f64,
    /// Sample standard deviation of the totals.
    pub sd_seconds: f64,
}

/// Times `run` over every item, `repetitions` times, after one untimed
/// warm-up pass. Runs on the calling thread.
pub fn bench_inference<T>(
    items: &[T],
    repetitions: usize,
    timer: &mut dyn Timer,
    mut run: impl FnMut(&T) -> Result<()>,
) -> Result<BenchResult> {
    if items.is_empty() {
        return Err(Error::arg("nothing to benchmark"));
    }
    if repetitions == 0 {
        return Err(Error::arg("repetitions must be positive"));
    }
    for item in items {
        run(item)?;
    }
    let mut totals = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = timer.now();
        for item in items {
            run(item)?;
        }
        totals.push(timer.now() - start);
    }
    let mean = totals.iter().sum::<f64>() / repetitions as f64;
    let sd = if repetitions > 1 {
        (totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (repetitions - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(BenchResult { instances: items.len(), repetitions, totals, mean_seconds: mean, sd_seconds: sd })
}
