use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::assign::assign_batch;
use super::config::TrainConfig;
use super::loss::{compute_loss, loss_and_grad, LossParts};
use super::sgd::Sgd;
use crate::data::{augment, letterbox, normalize, sample_rng, stack, AugmentParams, Sample};
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::nn::{checkpoint, Graph};
use crate::tensor::Tensor;

/// Network-ready images with their ground truth in canvas pixels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Tensor,
    pub gt: Vec<Vec<(usize, BBox<f32>)>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt.is_empty()
    }
}

/// Letterboxes (after augmenting, when `aug` is given) and stacks samples.
/// `epoch` selects the per-sample random stream.
pub fn make_batch(
    samples: &[&Sample],
    input_size: usize,
    aug: Option<(&AugmentParams, u64, u64)>,
) -> Result<Batch> {
    let prepared = samples
        .par_iter()
        .map(|s| {
            let lb = match aug {
                Some((params, seed, epoch)) => {
                    let mut rng = sample_rng(seed, &s.image_id, epoch);
                    letterbox(&augment(s, &mut rng, params), input_size)?
                }
                None => letterbox(s, input_size)?,
            };
            Ok((normalize(&lb.raster), lb.boxes))
        })
        .collect::<Result<Vec<_>>>()?;
    let (images, gt): (Vec<_>, Vec<_>) = prepared.into_iter().unzip();
    Ok(Batch {
        images: stack(&images)?,
        gt,
    })
}

/// Forward, loss, backward and one optimizer step.
pub fn train_step(
    det: &mut Detector,
    batch: &Batch,
    cfg: &TrainConfig,
    opt: &mut Sgd,
) -> Result<LossParts> {
    let spec = det.spec().clone();
    let targets = assign_batch(&batch.gt, &spec);
    let mut g = Graph::new();
    let x = g.input(batch.images.clone())?;
    let heads = det.forward_train(&mut g, x)?;
    let (loss, parts) = compute_loss(&mut g, heads, &targets, &spec, cfg)?;
    det.params_mut().zero_grad();
    g.backward(loss, det.params_mut())?;
    opt.step(det.params_mut(), cfg)?;
    Ok(parts)
}

/// Loss with batch norm in evaluation mode and no parameter update.
pub fn eval_loss(det: &Detector, batch: &Batch, cfg: &TrainConfig) -> Result<LossParts> {
    let raw = det.predict(batch.images.clone())?;
    let targets = assign_batch(&batch.gt, det.spec());
    let (parts, _) = loss_and_grad(raw.maps.each_ref(), &targets, det.spec(), cfg, false)?;
    Ok(parts)
}

/// One line of the training log. Loss columns are the λ-weighted terms, so
/// they add up to the optimized total.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_box: f64,
    pub train_obj: f64,
    pub train_cls: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

impl EpochRecord {
    pub fn train_loss(&self) -> f64 {
        self.train_box + self.train_obj + self.train_cls
    }

    pub fn log_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.3}",
            self.epoch, self.train_box, self.train_obj, self.train_cls, self.val_loss, self.seconds
        )
    }
}

pub const LOG_COLUMNS: &str = "epoch\ttrain_box\ttrain_obj\ttrain_cls\tval_loss\tseconds";

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_checkpoint: PathBuf,
}

fn mean_loss(det: &Detector, samples: &[Sample], cfg: &TrainConfig) -> Result<f64> {
    let mut sum = 0.0;
    for chunk in samples.chunks(cfg.batch_size) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let batch = make_batch(&refs, det.spec().input_size, None)?;
        sum += eval_loss(det, &batch, cfg)?.total(cfg) * chunk.len() as f64;
    }
    Ok(sum / samples.len() as f64)
}

/// The epoch loop. Writes `train.log`, `epoch_<k>.ndck` and `best.ndck`
/// (lowest validation loss, earliest epoch on ties) into `out`.
pub fn train(
    det: &mut Detector,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    out: &Path,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let log_path = out.join("train.log");
    let mut log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let header = format!(
        "# learning_rate {} batch_size {} epochs {} momentum {} weight_decay {} seed {}\n# {LOG_COLUMNS}\n",
        cfg.learning_rate, cfg.batch_size, cfg.epochs, cfg.momentum, cfg.weight_decay, cfg.seed
    );
    log.write_all(header.as_bytes())
        .map_err(|e| Error::io(&log_path, e))?;

    let aug = cfg.augment_params();
    let input_size = det.spec().input_size;
    let mut opt = Sgd::new();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize)> = None;
    let best_path = out.join("best.ndck");

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut sample_rng(cfg.seed, "epoch-order", epoch as u64));
        let mut sums = [0.0f64; 3];
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let batch = make_batch(&refs, input_size, Some((&aug, cfg.seed, epoch as u64)))?;
            let parts = train_step(det, &batch, cfg, &mut opt).map_err(|e| match e {
                Error::NonFinite(_) => Error::NonFiniteLoss {
                    epoch,
                    batch: b + 1,
                },
                other => other,
            })?;
            for (s, w) in sums.iter_mut().zip(parts.weighted(cfg)) {
                *s += w * idx.len() as f64;
            }
        }
        let n = train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            f64::NAN
        } else {
            mean_loss(det, val_set, cfg)?
        };
        let record = EpochRecord {
            epoch,
            train_box: sums[0] / n,
            train_obj: sums[1] / n,
            train_cls: sums[2] / n,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
        };

        checkpoint::save(det.params(), &out.join(format!("epoch_{epoch}.ndck")))?;
        let score = if val_loss.is_finite() {
            val_loss
        } else {
            record.train_loss()
        };
        if best.is_none_or(|(b, _)| score < b) {
            best = Some((score, epoch));
            checkpoint::save(det.params(), &best_path)?;
        }
        writeln!(log, "{}", record.log_line()).map_err(|e| Error::io(&log_path, e))?;
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        on_epoch(&record);
        records.push(record);
    }

    Ok(TrainOutcome {
        records,
        best_epoch: best.map_or(1, |(_, e)| e),
        best_checkpoint: best_path,
    })
}
