use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::ParamStore;

/// SGD with momentum and decoupled-from-bias weight decay. Velocity buffers
/// are indexed like the parameter store.
#[derive(Debug, Clone, Default)]
pub struct Sgd {
    velocity: Vec<Option<Vec<f32>>>,
}

impl Sgd {
    pub fn new() -> Self {
        Self::default()
    }

    /// `v = m·v + g + wd·p` (decay only for weights), then `p −= lr·v`.
    /// Parameters without a gradient are left alone.
    pub fn step(&mut self, store: &mut ParamStore, cfg: &TrainConfig) -> Result<()> {
        if !store
            .iter()
            .any(|(_, p)| p.trainable() && p.tensor.grad().is_some())
        {
            return Err(Error::Graph(
                "optimizer step without gradients; run backward first".into(),
            ));
        }
        if self.velocity.len() < store.len() {
            self.velocity.resize(store.len(), None);
        }
        for (param, vel) in store.iter_mut().zip(self.velocity.iter_mut()) {
            if !param.trainable() {
                continue;
            }
            let decay = if param.decays() {
                cfg.weight_decay
            } else {
                0.0
            };
            let Some(grad) = param.tensor.grad().map(<[f32]>::to_vec) else {
                continue;
            };
            let v = vel.get_or_insert_with(|| vec![0.0; grad.len()]);
            let data = param.tensor.data_mut();
            for ((p, vi), g) in data.iter_mut().zip(v.iter_mut()).zip(&grad) {
                *vi = cfg.momentum * *vi + g + decay * *p;
                *p -= cfg.learning_rate * *vi;
            }
        }
        Ok(())
    }
}
