use std::collections::HashSet;

use super::assign::AssignedTarget;
use super::config::{TrainConfig, OBJ_BALANCE};
use crate::detector::{check_raw, head_channel, ModelSpec, RawHeadOutput, NUM_SCALES};
use crate::error::{Error, Result};
use crate::geometry::{ciou_with_grad, BBox};
use crate::nn::kernels::sigmoid_f64;
use crate::nn::{Graph, Var};
use crate::tensor::Tensor;

/// Unweighted loss components.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    /// Mean of `1 − CIoU` over targets.
    pub box_loss: f64,
    /// Balanced sum of per-scale objectness BCE means.
    pub obj: f64,
    /// Class BCE mean over targets; zero for single-class models.
    pub cls: f64,
}

impl LossParts {
    /// `(λ_box·box, λ_obj·obj, λ_cls·cls)`.
    pub fn weighted(&self, cfg: &TrainConfig) -> [f64; 3] {
        [
            cfg.lambda_box * self.box_loss,
            cfg.lambda_obj * self.obj,
            cfg.lambda_cls * self.cls,
        ]
    }

    pub fn total(&self, cfg: &TrainConfig) -> f64 {
        self.weighted(cfg).iter().sum()
    }
}

/// `log(1 + e^x) − x·y`, stable for large |x|.
fn bce_with_logits(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}

struct Layout {
    plane: usize,
    per_image: usize,
    grid: usize,
}

impl Layout {
    fn new(spec: &ModelSpec, scale: usize) -> Self {
        let grid = spec.grid_size(scale);
        Self {
            plane: grid * grid,
            per_image: spec.head_channels() * grid * grid,
            grid,
        }
    }

    fn index(
        &self,
        spec: &ModelSpec,
        image: usize,
        anchor: usize,
        k: usize,
        cell: (usize, usize),
    ) -> usize {
        image * self.per_image
            + head_channel(spec, anchor, k) * self.plane
            + cell.1 * self.grid
            + cell.0
    }
}

/// Loss components and, when `with_grad`, the gradient of the weighted
/// total with respect to each head map.
pub fn loss_and_grad(
    maps: [&Tensor; NUM_SCALES],
    targets: &[AssignedTarget],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    with_grad: bool,
) -> Result<(LossParts, Option<[Vec<f32>; NUM_SCALES]>)> {
    let raw = RawHeadOutput {
        maps: maps.map(|m| m.clone()),
    };
    let n = check_raw(&raw, spec)?;
    let nc = spec.num_classes;
    let mut grads: [Vec<f64>; NUM_SCALES] = if with_grad {
        maps.map(|m| vec![0.0; m.numel()])
    } else {
        Default::default()
    };
    let mut parts = LossParts::default();

    for t in targets {
        if t.image >= n || t.scale >= NUM_SCALES || t.class_id >= nc {
            return Err(Error::InvalidArgument(format!(
                "target {t:?} does not fit a batch of {n} with {nc} classes"
            )));
        }
    }

    // box regression and classification at assigned slots
    if !targets.is_empty() {
        let inv_t = 1.0 / targets.len() as f64;
        let cls_scale = inv_t / nc as f64;
        for t in targets {
            let lay = Layout::new(spec, t.scale);
            let data = maps[t.scale].data();
            let stride = spec.strides[t.scale] as f64;
            let (aw, ah) = spec.anchors[t.scale][t.anchor];
            let idx: [usize; 4] =
                std::array::from_fn(|k| lay.index(spec, t.image, t.anchor, k, t.cell));
            let s = idx.map(|i| sigmoid_f64(data[i] as f64));
            let pred = [
                (2.0 * s[0] - 0.5 + t.cell.0 as f64) * stride,
                (2.0 * s[1] - 0.5 + t.cell.1 as f64) * stride,
                (4.0 * s[2] * s[2] * aw as f64).max(1e-9),
                (4.0 * s[3] * s[3] * ah as f64).max(1e-9),
            ];
            let target: BBox<f64> = t.bbox.cast();
            let (c, dc) = ciou_with_grad(pred, &target);
            parts.box_loss += (1.0 - c) * inv_t;
            if with_grad {
                let dpred = [
                    2.0 * stride,
                    2.0 * stride,
                    8.0 * s[2] * aw as f64,
                    8.0 * s[3] * ah as f64,
                ];
                for k in 0..4 {
                    let ds = s[k] * (1.0 - s[k]);
                    grads[t.scale][idx[k]] += -cfg.lambda_box * inv_t * dc[k] * dpred[k] * ds;
                }
            }
            if nc > 1 {
                for c in 0..nc {
                    let i = lay.index(spec, t.image, t.anchor, 5 + c, t.cell);
                    let x = data[i] as f64;
                    let y = if c == t.class_id { 1.0 } else { 0.0 };
                    parts.cls += bce_with_logits(x, y) * cls_scale;
                    if with_grad {
                        grads[t.scale][i] += cfg.lambda_cls * cls_scale * (sigmoid_f64(x) - y);
                    }
                }
            }
        }
    }

    // objectness over every slot of every map
    for scale in 0..NUM_SCALES {
        let lay = Layout::new(spec, scale);
        let positive: HashSet<usize> = targets
            .iter()
            .filter(|t| t.scale == scale)
            .map(|t| lay.index(spec, t.image, t.anchor, 4, t.cell))
            .collect();
        let data = maps[scale].data();
        let count = (n * spec.anchors[scale].len() * lay.plane) as f64;
        let w = OBJ_BALANCE[scale] / count;
        let mut sum = 0.0;
        for image in 0..n {
            for anchor in 0..spec.anchors[scale].len() {
                let base = lay.index(spec, image, anchor, 4, (0, 0));
                for i in base..base + lay.plane {
                    let x = data[i] as f64;
                    let y = if positive.contains(&i) { 1.0 } else { 0.0 };
                    sum += bce_with_logits(x, y);
                    if with_grad {
                        grads[scale][i] += cfg.lambda_obj * w * (sigmoid_f64(x) - y);
                    }
                }
            }
        }
        parts.obj += sum * w;
    }

    let grads = with_grad.then(|| grads.map(|g| g.into_iter().map(|v| v as f32).collect()));
    Ok((parts, grads))
}

/// Adds the weighted loss to the graph as a scalar node over the head maps,
/// multiplied by the batch size when `cfg.batch_sum_loss` is set. The
/// returned parts are unscaled.
pub fn compute_loss(
    g: &mut Graph,
    heads: [Var; NUM_SCALES],
    targets: &[AssignedTarget],
    spec: &ModelSpec,
    cfg: &TrainConfig,
) -> Result<(Var, LossParts)> {
    let maps = heads.map(|v| g.value(v));
    let (parts, grads) = loss_and_grad(maps, targets, spec, cfg, true)?;
    let total = parts.total(cfg);
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("loss is {total}")));
    }
    let scale = if cfg.batch_sum_loss {
        maps[0].shape()[0] as f32
    } else {
        1.0
    };
    let grads = grads
        .expect("gradients requested")
        .into_iter()
        .map(|g| g.into_iter().map(|v| v * scale).collect())
        .collect();
    let var = g.external_scalar(&heads, total as f32 * scale, grads)?;
    Ok((var, parts))
}
