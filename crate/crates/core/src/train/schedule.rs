use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateauConfig {
    pub factor: f64,
    /// Epochs without any improvement before the rate is cut.
    pub patience: usize,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self { factor: 0.5, patience: 50, min_lr: 1e-6 }
    }
}

/// Reduce-on-plateau learning-rate schedule. Any strict decrease of the
/// monitored loss counts as an improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    cfg: PlateauConfig,
    lr: f64,
    best: f64,
    stale: usize,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64, cfg: PlateauConfig) -> Self {
        Self { cfg, lr: initial_lr, best: f64::INFINITY, stale: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's validation loss and returns the rate for the next epoch.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.cfg.patience {
                self.lr = (self.lr * self.cfg.factor).max(self.cfg.min_lr);
                self.stale = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStopConfig {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self { patience: 150, min_delta: 1e-6 }
    }
}

/// Tracks the best validation loss; the first observation always counts as best.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    cfg: EarlyStopConfig,
    best: Option<f64>,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopSignal {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(cfg: EarlyStopConfig) -> Self {
        Self { cfg, best: None, stale: 0 }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn observe(&mut self, val_loss: f64) -> StopSignal {
        let improved = match self.best {
            None => true,
            Some(best) => val_loss < best - self.cfg.min_delta,
        };
        if improved {
            self.best = Some(val_loss);
            self.stale = 0;
            return StopSignal::Improved;
        }
        self.stale += 1;
        if self.stale >= self.cfg.patience {
            StopSignal::Stop
        } else {
            StopSignal::Continue
        }
    }
}
