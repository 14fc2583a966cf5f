//! Training hyperparameters as read from JSON.

use serde::{Deserialize, Serialize};

use crate::error::{GrdlError, Result};

/// Initial value of `π = 1/θ`.
pub const PI_INIT: f64 = 500.0;

/// Reference size: an explicit row count or a selector over the training
/// split's node counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RefSizeRepr", into = "RefSizeRepr")]
pub enum RefSize {
    Fixed(usize),
    /// `G1..G5` map to min, (min+median)/2, median, (median+max)/2, max.
    Selector(u8),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RefSizeRepr {
    Fixed(usize),
    Named(String),
}

impl TryFrom<RefSizeRepr> for RefSize {
    type Error = String;

    fn try_from(r: RefSizeRepr) -> std::result::Result<Self, String> {
        match r {
            RefSizeRepr::Fixed(0) => Err("ref_size must be positive".into()),
            RefSizeRepr::Fixed(m) => Ok(RefSize::Fixed(m)),
            RefSizeRepr::Named(s) => match s.as_str() {
                "G1" => Ok(RefSize::Selector(1)),
                "G2" => Ok(RefSize::Selector(2)),
                "G3" => Ok(RefSize::Selector(3)),
                "G4" => Ok(RefSize::Selector(4)),
                "G5" => Ok(RefSize::Selector(5)),
                _ => Err(format!("ref_size must be a positive integer or G1..G5, got {s:?}")),
            },
        }
    }
}

impl From<RefSize> for RefSizeRepr {
    fn from(r: RefSize) -> Self {
        match r {
            RefSize::Fixed(m) => RefSizeRepr::Fixed(m),
            RefSize::Selector(g) => RefSizeRepr::Named(format!("G{g}")),
        }
    }
}

impl RefSize {
    /// Concrete row count given (min, median, max) training node counts.
    pub fn resolve(self, min: usize, median: f64, max: usize) -> usize {
        let (lo, hi) = (min as f64, max as f64);
        let v = match self {
            RefSize::Fixed(m) => return m,
            RefSize::Selector(1) => lo,
            RefSize::Selector(2) => (lo + median) / 2.0,
            RefSize::Selector(3) => median,
            RefSize::Selector(4) => (median + hi) / 2.0,
            RefSize::Selector(_) => hi,
        };
        (v.round() as usize).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub layers: usize,
    pub mlp_depth: usize,
    pub hidden: usize,
    pub ref_size: RefSize,
    pub ref_per_class: usize,
    pub lambda: f64,
    pub lr: f64,
    pub lr_theta: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub holdout: f64,
    pub folds: usize,
    pub val_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layers: 5,
            mlp_depth: 2,
            hidden: 32,
            ref_size: RefSize::Selector(3),
            ref_per_class: 1,
            lambda: 1.0,
            lr: 1e-3,
            lr_theta: 1.0,
            lr_decay: 0.95,
            batch_size: 32,
            epochs: 300,
            seed: 0,
            holdout: 0.0,
            folds: 10,
            val_interval: 5,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|e| GrdlError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(GrdlError::Config(m.to_string()));
        if self.layers == 0 || self.mlp_depth == 0 || self.hidden == 0 {
            return fail("layers, mlp_depth and hidden must be at least 1");
        }
        if self.ref_per_class == 0 {
            return fail("ref_per_class must be at least 1");
        }
        if !(self.lambda >= 0.0) {
            return fail("lambda must be nonnegative");
        }
        if !(self.lr > 0.0) || !(self.lr_theta >= 0.0) {
            return fail("learning rates must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return fail("lr_decay must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.val_interval == 0 {
            return fail("batch_size, epochs and val_interval must be at least 1");
        }
        if !(0.0..0.5).contains(&self.holdout) {
            return fail("holdout must lie in [0, 0.5)");
        }
        if self.folds < 2 {
            return fail("folds must be at least 2");
        }
        Ok(())
    }

    /// Encoder/reference learning rate at 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch as i32)
    }
}
