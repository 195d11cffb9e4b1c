//! Independent reference implementations shared by the integration suites
//! and the acceptance runner.
#![allow(dead_code)]

pub mod ops;

use std::collections::HashSet;

use lungdet::data::synth::render;
use lungdet::data::{sample_rng, Sample};
use lungdet::detector::{head_channel, CandidateBox, Detector, ModelSpec};
use lungdet::geometry::{BBox, ScoredBox};
use lungdet::nn::{Graph, ParamStore};
use lungdet::tensor::Tensor;
use lungdet::train::{
    assign_batch, compute_loss, loss_and_grad, AssignedTarget, Batch, TrainConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_box(rng: &mut impl Rng, extent: f32) -> BBox<f32> {
    let x0 = rng.random_range(0.0..extent * 0.9);
    let y0 = rng.random_range(0.0..extent * 0.9);
    let w = rng.random_range(extent * 0.01..extent * 0.4);
    let h = rng.random_range(extent * 0.01..extent * 0.4);
    BBox::new(x0, y0, (x0 + w).min(extent), (y0 + h).min(extent))
}

/// IoU straight from corner arithmetic in f64.
pub fn iou_reference(a: &BBox<f32>, b: &BBox<f32>) -> f64 {
    let area = |x0: f64, y0: f64, x1: f64, y1: f64| (x1 - x0).max(0.0) * (y1 - y0).max(0.0);
    let inter = area(
        (a.x_min as f64).max(b.x_min as f64),
        (a.y_min as f64).max(b.y_min as f64),
        (a.x_max as f64).min(b.x_max as f64),
        (a.y_max as f64).min(b.y_max as f64),
    );
    let ua = area(
        a.x_min as f64,
        a.y_min as f64,
        a.x_max as f64,
        a.y_max as f64,
    );
    let ub = area(
        b.x_min as f64,
        b.y_min as f64,
        b.x_max as f64,
        b.y_max as f64,
    );
    let union = ua + ub - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Random candidates for suppression: few distinct confidences so ties
/// occur, boxes clustered so overlaps occur, two classes.
pub fn random_candidates(rng: &mut impl Rng, max: usize) -> Vec<CandidateBox> {
    let n = rng.random_range(0..=max);
    (0..n)
        .map(|_| ScoredBox {
            bbox: random_box(rng, 40.0),
            confidence: rng.random_range(0..8) as f32 / 8.0 + 0.05,
            class_id: rng.random_range(0..2),
        })
        .collect()
}

/// Suppression by repeated scans: pick the best live candidate, keep it,
/// strike every same-class live box overlapping it, repeat.
pub fn nms_reference(cands: &[CandidateBox], conf: f32, iou_th: f32) -> Vec<CandidateBox> {
    let mut live: Vec<CandidateBox> = cands
        .iter()
        .filter(|c| c.confidence > conf)
        .copied()
        .collect();
    let better = |a: &CandidateBox, b: &CandidateBox| {
        (a.confidence, -a.bbox.x_min, -a.bbox.y_min) > (b.confidence, -b.bbox.x_min, -b.bbox.y_min)
    };
    let mut kept = Vec::new();
    while !live.is_empty() {
        let mut best = 0;
        for i in 1..live.len() {
            if better(&live[i], &live[best]) {
                best = i;
            }
        }
        let top = live.remove(best);
        live.retain(|c| {
            c.class_id != top.class_id || iou_reference(&top.bbox, &c.bbox) <= iou_th as f64
        });
        kept.push(top);
    }
    kept
}

/// Random ground truth in network-input pixels for `assign_targets`.
pub fn random_gt(rng: &mut impl Rng, size: f32) -> Vec<(usize, BBox<f32>)> {
    let n = rng.random_range(0..6);
    (0..n)
        .map(|_| {
            let w = rng.random_range(2.0..size * 0.8);
            let h = rng.random_range(2.0..size * 0.8);
            let cx = if rng.random_bool(0.2) {
                // exactly on a stride-8 cell center
                (rng.random_range(0..(size as usize / 8)) as f32 + 0.5) * 8.0
            } else {
                rng.random_range(0.0..size)
            };
            let cy = rng.random_range(0.0..size);
            (rng.random_range(0..2), BBox::from_center(cx, cy, w, h))
        })
        .collect()
}

/// Loops over every box × scale × anchor × cell of the grid and applies
/// the assignment conditions literally.
pub fn assign_reference(
    image: usize,
    gt: &[(usize, BBox<f32>)],
    spec: &ModelSpec,
) -> Vec<AssignedTarget> {
    let mut out = Vec::new();
    let mut taken = HashSet::new();
    for &(class_id, bbox) in gt {
        let w = (bbox.x_max - bbox.x_min) as f64;
        let h = (bbox.y_max - bbox.y_min) as f64;
        if w <= 0.0 || h <= 0.0 {
            continue;
        }
        let (cx, cy) = bbox.center();
        for scale in 0..3 {
            let stride = spec.strides[scale] as f32;
            let grid = spec.input_size / spec.strides[scale];
            let (gx, gy) = (cx / stride, cy / stride);
            let home = |g: f32| (g.floor().max(0.0) as usize).min(grid - 1);
            let (hx, hy) = (home(gx), home(gy));
            for anchor in 0..3 {
                let (aw, ah) = spec.anchors[scale][anchor];
                let worst = [w / aw as f64, h / ah as f64]
                    .into_iter()
                    .map(|r| r.max(1.0 / r))
                    .fold(0.0f64, f64::max);
                if worst as f32 >= 4.0 {
                    continue;
                }
                let mut cells = Vec::new();
                for y in 0..grid {
                    for x in 0..grid {
                        let qualifies = if (x, y) == (hx, hy) {
                            true
                        } else if y == hy && x + 1 == hx {
                            gx - (hx as f32) < 0.5
                        } else if y == hy && x == hx + 1 {
                            gx - (hx as f32) > 0.5
                        } else if x == hx && y + 1 == hy {
                            gy - (hy as f32) < 0.5
                        } else if x == hx && y == hy + 1 {
                            gy - (hy as f32) > 0.5
                        } else {
                            false
                        };
                        if qualifies {
                            cells.push((x, y));
                        }
                    }
                }
                // containing cell first, then x neighbor, then y neighbor
                cells.sort_by_key(|&(x, y)| ((x, y) != (hx, hy), y != hy));
                for cell in cells {
                    if taken.insert((scale, anchor, cell)) {
                        out.push(AssignedTarget {
                            image,
                            scale,
                            anchor,
                            cell,
                            bbox,
                            class_id,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Mann-Whitney statistic: fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half.
pub fn mann_whitney(scores: &[f32], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Area under the monotonized precision-recall curve as a literal
/// left-endpoint Riemann sum on a fine recall grid.
pub fn riemann_ap(dets: &[(f32, bool)], total_gt: usize) -> f64 {
    let mut sorted = dets.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((tp as f64 / total_gt as f64, tp as f64 / (tp + fp) as f64));
    }
    let envelope = |r: f64| {
        points
            .iter()
            .filter(|p| p.0 >= r)
            .map(|p| p.1)
            .fold(0.0f64, f64::max)
    };
    let steps = 200_000;
    (0..steps)
        .map(|k| envelope((k as f64 + 0.5) / steps as f64) / steps as f64)
        .sum()
}

pub struct FdReport {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel: f64,
}

fn fd_report(name: String, index: usize, analytic: f64, numeric: f64, floor: f64) -> FdReport {
    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
    FdReport {
        name,
        index,
        analytic,
        numeric,
        rel,
    }
}

/// Random head logits and matching targets for a 64-pixel input.
pub fn random_heads(seed: u64, spec: &ModelSpec, n: usize) -> ([Tensor; 3], Vec<AssignedTarget>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let maps = std::array::from_fn(|s| {
        let g = spec.grid_size(s);
        let shape = [n, spec.head_channels(), g, g];
        let data = (0..shape.iter().product())
            .map(|_| rng.random_range(-2.0f32..2.0))
            .collect();
        Tensor::new(&shape, data).unwrap()
    });
    let size = spec.input_size as f32;
    let gt: Vec<Vec<(usize, BBox<f32>)>> = (0..n)
        .map(|_| {
            (0..3)
                .map(|_| {
                    let cx = rng.random_range(0.1 * size..0.9 * size);
                    let cy = rng.random_range(0.1 * size..0.9 * size);
                    let w = rng.random_range(0.1 * size..0.5 * size);
                    let h = rng.random_range(0.1 * size..0.5 * size);
                    (
                        rng.random_range(0..spec.num_classes),
                        BBox::from_center(cx, cy, w, h),
                    )
                })
                .collect()
        })
        .collect();
    (maps, assign_batch(&gt, spec))
}

/// Central differences of `compute_loss` with respect to its raw head
/// inputs. Half the probes sit on assigned slots so the box and class
/// terms are exercised, half anywhere.
pub fn head_fd_check(
    maps: &[Tensor; 3],
    targets: &[AssignedTarget],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    count: usize,
    seed: u64,
) -> Vec<FdReport> {
    let h = 1e-3f32;
    let mut store = ParamStore::new();
    let ids: Vec<_> = maps
        .iter()
        .enumerate()
        .map(|(s, m)| {
            store
                .insert(&format!("head{s}"), m.clone().with_requires_grad(true))
                .unwrap()
        })
        .collect();
    let mut g = Graph::new();
    let heads = [0, 1, 2].map(|s| g.param(&store, ids[s]).unwrap());
    let (loss, _) = compute_loss(&mut g, heads, targets, spec, cfg).unwrap();
    g.backward(loss, &mut store).unwrap();

    let n = maps[0].shape()[0];
    let scale = if cfg.batch_sum_loss { n as f64 } else { 1.0 };
    let objective = |maps: &[Tensor; 3]| {
        let (parts, _) = loss_and_grad(maps.each_ref(), targets, spec, cfg, false).unwrap();
        parts.total(cfg) * scale
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::new();
    for k in 0..count {
        if k % 2 == 0 && !targets.is_empty() {
            let t = &targets[rng.random_range(0..targets.len())];
            let g = spec.grid_size(t.scale);
            let channel = head_channel(
                spec,
                t.anchor,
                rng.random_range(0..spec.outputs_per_anchor()),
            );
            let index = ((t.image * spec.head_channels() + channel) * g + t.cell.1) * g + t.cell.0;
            probes.push((t.scale, index));
        } else {
            let s = rng.random_range(0..3);
            probes.push((s, rng.random_range(0..maps[s].numel())));
        }
    }
    let mut work = maps.clone();
    probes
        .into_iter()
        .map(|(s, index)| {
            let analytic = store.get(ids[s]).tensor.grad().unwrap()[index] as f64;
            let orig = work[s].data()[index];
            work[s].data_mut()[index] = orig + h;
            let up = objective(&work);
            work[s].data_mut()[index] = orig - h;
            let down = objective(&work);
            work[s].data_mut()[index] = orig;
            let numeric = (up - down) / ((orig + h) as f64 - (orig - h) as f64);
            fd_report(format!("head{s}"), index, analytic, numeric, 1e-3)
        })
        .collect()
}

/// Compares the backpropagated gradient of the total training loss with
/// central differences on `count` randomly sampled trainable scalars of
/// the whole network.
pub fn loss_fd_check(
    det: &Detector,
    batch: &Batch,
    cfg: &TrainConfig,
    count: usize,
    seed: u64,
    h: f32,
    floor: f64,
) -> Vec<FdReport> {
    let spec = det.spec().clone();
    let targets = assign_batch(&batch.gt, &spec);
    let scale = if cfg.batch_sum_loss {
        batch.images.shape()[0] as f64
    } else {
        1.0
    };
    let objective = |det: &Detector| -> f64 {
        let mut det = det.clone();
        let mut g = Graph::new();
        let x = g.input(batch.images.clone()).unwrap();
        let heads = det.forward_train(&mut g, x).unwrap();
        let maps = heads.map(|v| g.value(v));
        let (parts, _) = loss_and_grad(maps, &targets, &spec, cfg, false).unwrap();
        parts.total(cfg) * scale
    };

    let mut analytic_det = det.clone();
    let mut g = Graph::new();
    let x = g.input(batch.images.clone()).unwrap();
    let heads = analytic_det.forward_train(&mut g, x).unwrap();
    let (loss, _) = compute_loss(&mut g, heads, &targets, &spec, cfg).unwrap();
    analytic_det.params_mut().zero_grad();
    g.backward(loss, analytic_det.params_mut()).unwrap();

    let mut slots: Vec<(String, usize)> = det
        .params()
        .iter()
        .filter(|(_, p)| p.trainable())
        .flat_map(|(_, p)| (0..p.tensor.numel()).map(move |i| (p.name.clone(), i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    slots.shuffle(&mut rng);

    let mut probe = det.clone();
    slots
        .into_iter()
        .take(count)
        .map(|(name, index)| {
            let id = probe.params().id_of(&name).unwrap();
            let analytic = analytic_det.params().get(id).tensor.grad().unwrap()[index] as f64;
            let orig = probe.params().get(id).tensor.data()[index];
            probe.params_mut().get_mut(id).tensor.data_mut()[index] = orig + h;
            let up = objective(&probe);
            probe.params_mut().get_mut(id).tensor.data_mut()[index] = orig - h;
            let down = objective(&probe);
            probe.params_mut().get_mut(id).tensor.data_mut()[index] = orig;
            let numeric = (up - down) / ((orig + h) as f64 - (orig - h) as f64);
            fd_report(name, index, analytic, numeric, floor)
        })
        .collect()
}

/// In-memory synthetic samples drawn the same way the generator draws them.
pub fn synth_samples(count: usize, size: usize, positive_fraction: f64, seed: u64) -> Vec<Sample> {
    let n_pos = (count as f64 * positive_fraction).round() as usize;
    (0..count)
        .map(|i| {
            let id = format!("img_{i:04}");
            let mut rng = sample_rng(seed, &id, u64::MAX);
            let img = render(&mut rng, size, i < n_pos, true);
            Sample {
                image_id: id,
                boxes: img.boxes(),
                pixels: img.raster,
            }
        })
        .collect()
}
