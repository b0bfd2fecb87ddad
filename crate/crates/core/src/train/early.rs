#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best evaluation score and stops after `patience`
/// consecutive evaluations without strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<(usize, f64)>,
    bad: usize,
    seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, bad: 0, seen: 0 }
    }

    /// Records one evaluation; evaluations are numbered from 1.
    pub fn observe(&mut self, score: f64) -> StopDecision {
        self.seen += 1;
        match self.best {
            Some((_, b)) if score <= b => {
                self.bad += 1;
                if self.bad >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((self.seen, score));
                self.bad = 0;
                StopDecision::Improved
            }
        }
    }

    /// `(evaluation number, score)` of the best evaluation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}
