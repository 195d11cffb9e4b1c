//! Run configuration: model spec, training hyperparameters and thresholds
//! read from a flat TOML file, with later layers (flags) overriding.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::ModelSpec;
use crate::error::{Error, Result};
use crate::postprocess::Thresholds;
use crate::train::TrainConfig;

/// One configuration layer. Every key is optional; absent keys keep the
/// value from the layer below.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub width_multiple: Option<f32>,
    pub depth_multiple: Option<f32>,
    pub num_classes: Option<usize>,
    pub input_size: Option<usize>,
    pub anchors: Option<Vec<f32>>,
    pub strides: Option<Vec<usize>>,
    pub learning_rate: Option<f32>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub momentum: Option<f32>,
    pub weight_decay: Option<f32>,
    pub lambda_box: Option<f64>,
    pub lambda_obj: Option<f64>,
    pub lambda_cls: Option<f64>,
    pub seed: Option<u64>,
    pub augment: Option<bool>,
    pub batch_sum_loss: Option<bool>,
    pub conf_threshold: Option<f32>,
    pub iou_threshold: Option<f32>,
    pub eval_candidate_threshold: Option<f32>,
    pub match_iou: Option<f32>,
}

impl ConfigLayer {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub train: TrainConfig,
    /// Gate and suppression overlap for reported detections.
    pub thresholds: Thresholds,
    /// Candidate gate used when collecting detections for curves.
    pub eval_candidate_threshold: f32,
    /// Overlap a detection needs to count as a true positive.
    pub match_iou: f32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            train: TrainConfig::desk(),
            thresholds: Thresholds::default(),
            eval_candidate_threshold: 0.001,
            match_iou: 0.5,
        }
    }
}

impl RunConfig {
    /// Applies `layer` on top of `self`, then validates the result.
    pub fn merge(&mut self, layer: &ConfigLayer) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        macro_rules! set {
            ($($dst:expr => $src:ident),* $(,)?) => {
                $(if let Some(v) = layer.$src.clone() { $dst = v; })*
            };
        }
        set!(
            m.width_multiple => width_multiple,
            m.depth_multiple => depth_multiple,
            m.num_classes => num_classes,
            m.input_size => input_size,
            t.learning_rate => learning_rate,
            t.batch_size => batch_size,
            t.epochs => epochs,
            t.momentum => momentum,
            t.weight_decay => weight_decay,
            t.lambda_box => lambda_box,
            t.lambda_obj => lambda_obj,
            t.lambda_cls => lambda_cls,
            t.seed => seed,
            t.augment => augment,
            t.batch_sum_loss => batch_sum_loss,
            self.thresholds.confidence => conf_threshold,
            self.thresholds.iou => iou_threshold,
            self.eval_candidate_threshold => eval_candidate_threshold,
            self.match_iou => match_iou,
        );
        if let Some(a) = &layer.anchors {
            m.set_anchors_flat(a)?;
        }
        if let Some(s) = &layer.strides {
            m.strides = s.as_slice().try_into().map_err(|_| {
                Error::InvalidSpec(format!("strides needs 3 numbers, got {}", s.len()))
            })?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        for (name, v) in [
            ("conf_threshold", self.thresholds.confidence),
            ("iou_threshold", self.thresholds.iou),
            ("eval_candidate_threshold", self.eval_candidate_threshold),
            ("match_iou", self.match_iou),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Defaults overlaid with each layer in turn.
    pub fn layered(layers: &[&ConfigLayer]) -> Result<Self> {
        let mut c = Self::default();
        for l in layers {
            c.merge(l)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Every key, fully populated.
    pub fn to_layer(&self) -> ConfigLayer {
        let (m, t) = (&self.model, &self.train);
        ConfigLayer {
            width_multiple: Some(m.width_multiple),
            depth_multiple: Some(m.depth_multiple),
            num_classes: Some(m.num_classes),
            input_size: Some(m.input_size),
            anchors: Some(m.anchors_flat()),
            strides: Some(m.strides.to_vec()),
            learning_rate: Some(t.learning_rate),
            batch_size: Some(t.batch_size),
            epochs: Some(t.epochs),
            momentum: Some(t.momentum),
            weight_decay: Some(t.weight_decay),
            lambda_box: Some(t.lambda_box),
            lambda_obj: Some(t.lambda_obj),
            lambda_cls: Some(t.lambda_cls),
            seed: Some(t.seed),
            augment: Some(t.augment),
            batch_sum_loss: Some(t.batch_sum_loss),
            conf_threshold: Some(self.thresholds.confidence),
            iou_threshold: Some(self.thresholds.iou),
            eval_candidate_threshold: Some(self.eval_candidate_threshold),
            match_iou: Some(self.match_iou),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_layer()).expect("flat config always serializes")
    }
}
