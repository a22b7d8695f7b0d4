use serde::{Deserialize, Serialize};

/// Halves the learning rate after `patience` consecutive epochs without a
/// strictly lower validation loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub lr_initial: f64,
    pub patience: usize,
    pub best: f64,
    pub epochs_without_improvement: usize,
    pub halvings: i32,
}

impl PlateauSchedule {
    pub fn new(lr_initial: f64, patience: usize) -> Self {
        Self {
            lr_initial,
            patience,
            best: f64::INFINITY,
            epochs_without_improvement: 0,
            halvings: 0,
        }
    }

    /// `lr_initial · 2^(−k)` for `k` halvings so far.
    pub fn lr(&self) -> f64 {
        self.lr_initial * 0.5f64.powi(self.halvings)
    }

    /// Records one epoch's validation loss; returns whether the rate halved.
    pub fn update(&mut self, validation_loss: f64) -> bool {
        if validation_loss < self.best {
            self.best = validation_loss;
            self.epochs_without_improvement = 0;
            return false;
        }
        self.epochs_without_improvement += 1;
        if self.patience > 0 && self.epochs_without_improvement >= self.patience {
            self.halvings += 1;
            self.epochs_without_improvement = 0;
            return true;
        }
        false
    }
}
