use serde::{Deserialize, Serialize};

use crate::data::AugmentParams;
use crate::error::{Error, Result};

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f32,
    pub weight_decay: f32,
    pub lambda_box: f64,
    pub lambda_obj: f64,
    pub lambda_cls: f64,
    pub seed: u64,
    /// Turns flip/rotation/crop augmentation on for training batches.
    pub augment: bool,
    /// Backpropagate the per-image loss times the batch size rather than
    /// the plain batch mean. Logged losses are per-image means either way.
    pub batch_sum_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            batch_size: 32,
            epochs: 50,
            momentum: 0.9,
            weight_decay: 0.0005,
            lambda_box: 0.05,
            lambda_obj: 1.0,
            lambda_cls: 0.5,
            seed: 0,
            augment: true,
            batch_sum_loss: true,
        }
    }
}

/// Objectness balance across the stride-8, 16 and 32 maps.
pub const OBJ_BALANCE: [f64; 3] = [4.0, 1.0, 0.4];

/// Anchor match threshold on the worst side ratio.
pub const ANCHOR_RATIO_LIMIT: f32 = 4.0;

impl TrainConfig {
    /// Full-scale defaults with the batch reduced to 8 for CPU runs.
    pub fn desk() -> Self {
        Self {
            batch_size: 8,
            ..Self::default()
        }
    }

    pub fn augment_params(&self) -> AugmentParams {
        if self.augment {
            AugmentParams::default()
        } else {
            AugmentParams::none()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            bad.push(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be at least 1".to_string());
        }
        if self.epochs == 0 {
            bad.push("epochs must be at least 1".to_string());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            bad.push(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            bad.push(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            ));
        }
        for (name, v) in [
            ("lambda_box", self.lambda_box),
            ("lambda_obj", self.lambda_obj),
            ("lambda_cls", self.lambda_cls),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(bad.join("; ")))
        }
    }
}
