//! File-level jobs behind the command line: each reads its inputs from
//! disk, runs one stage and writes its outputs.

use std::path::{Path, PathBuf};

use crate::config::{ConfigLayer, RunConfig};
use crate::data::letterbox::gt_to_pixels;
use crate::data::split::SplitName;
use crate::data::{split_dataset, Dataset, DatasetManifest, Raster, Sample};
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::eval::{emit_report, evaluate, MetricsReport};
use crate::nn::checkpoint;
use crate::postprocess::{detect_batch, format_detections, DetectionRecord, Thresholds};
use crate::train::{train, EpochRecord, TrainOutcome};

/// Name of the configuration snapshot written next to checkpoints.
pub const MODEL_CONFIG: &str = "model.toml";

/// Images per forward pass during detection and evaluation.
const INFERENCE_BATCH: usize = 8;

/// Splits every image under `data` and writes `manifest.txt`.
pub fn run_split(data: &Path, seed: u64) -> Result<DatasetManifest> {
    let ds = Dataset::open(data)?;
    let manifest = split_dataset(&ds.ids(), seed)?;
    manifest.save(&ds.manifest_path())?;
    Ok(manifest)
}

fn load_split(ds: &Dataset, ids: &[String]) -> Result<Vec<Sample>> {
    ids.iter().map(|id| ds.load(id)).collect()
}

/// Trains from the manifest's train and val splits into `out`, which
/// receives the log, checkpoints and a `model.toml` snapshot of `cfg`.
pub fn run_train(
    data: &Path,
    cfg: &RunConfig,
    out: &Path,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ds = Dataset::open(data)?;
    if !ds.manifest_path().exists() {
        return Err(Error::InvalidArgument(format!(
            "{} has no manifest.txt; run the split step first",
            data.display()
        )));
    }
    let manifest = ds.manifest()?;
    if manifest.train.is_empty() {
        return Err(Error::InvalidArgument("the train split is empty".into()));
    }
    let train_set = load_split(&ds, &manifest.train)?;
    let val_set = load_split(&ds, &manifest.val)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let snapshot = out.join(MODEL_CONFIG);
    std::fs::write(&snapshot, cfg.to_toml()).map_err(|e| Error::io(&snapshot, e))?;
    let mut det = Detector::build(&cfg.model, cfg.train.seed)?;
    train(&mut det, &train_set, &val_set, &cfg.train, out, on_epoch)
}

/// Rebuilds the detector for `checkpoint` from the `model.toml` beside it,
/// with `overrides` layered on top of the saved configuration.
pub fn load_detector(
    checkpoint_path: &Path,
    overrides: &ConfigLayer,
) -> Result<(Detector, RunConfig)> {
    let dir = checkpoint_path.parent().unwrap_or(Path::new("."));
    let saved = ConfigLayer::load(&dir.join(MODEL_CONFIG))?;
    let cfg = RunConfig::layered(&[&saved, overrides])?;
    let mut det = Detector::build(&cfg.model, 0)?;
    checkpoint::load(det.params_mut(), checkpoint_path)?;
    Ok((det, cfg))
}

/// PNG/JPEG files directly inside `dir`, sorted by file stem.
pub fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn detect_all(
    det: &Detector,
    samples: &[Sample],
    th: &Thresholds,
) -> Result<Vec<Vec<crate::postprocess::Detection>>> {
    let mut all = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(INFERENCE_BATCH) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        all.extend(detect_batch(det, &refs, th)?);
    }
    Ok(all)
}

fn records(
    samples: &[Sample],
    dets: &[Vec<crate::postprocess::Detection>],
    gate: f32,
) -> Vec<DetectionRecord> {
    samples
        .iter()
        .zip(dets)
        .flat_map(|(s, d)| {
            d.iter()
                .filter(move |d| d.confidence > gate)
                .map(|d| DetectionRecord {
                    image_id: s.image_id.clone(),
                    detection: *d,
                })
        })
        .collect()
}

/// Runs the detector over every image in `images` and writes the
/// detection file to `out`.
pub fn run_detect(
    checkpoint_path: &Path,
    images: &Path,
    out: &Path,
    overrides: &ConfigLayer,
) -> Result<Vec<DetectionRecord>> {
    let files = list_images(images)?;
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} contains no PNG or JPEG images",
            images.display()
        )));
    }
    let (det, cfg) = load_detector(checkpoint_path, overrides)?;
    let samples = files
        .into_iter()
        .map(|(id, path)| {
            Ok(Sample {
                image_id: id,
                pixels: Raster::load(&path)?,
                boxes: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dets = detect_all(&det, &samples, &cfg.thresholds)?;
    let recs = records(&samples, &dets, cfg.thresholds.confidence);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(out, format_detections(&recs)).map_err(|e| Error::io(out, e))?;
    Ok(recs)
}

/// Evaluates `checkpoint` on the first `limit` images of `split` and writes
/// `metrics.json`, `roc.csv`, `pr.csv` and `detections.txt` into `out`.
pub fn run_evaluate(
    checkpoint_path: &Path,
    data: &Path,
    split: SplitName,
    limit: Option<usize>,
    out: &Path,
    overrides: &ConfigLayer,
) -> Result<MetricsReport> {
    let (det, cfg) = load_detector(checkpoint_path, overrides)?;
    let ds = Dataset::open(data)?;
    let manifest = ds.manifest()?;
    let ids = manifest.get(split);
    let ids = &ids[..limit.unwrap_or(ids.len()).min(ids.len())];
    if ids.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "split {split:?} has no images to evaluate"
        )));
    }
    let samples = load_split(&ds, ids)?;
    let candidate_th = Thresholds {
        confidence: cfg.eval_candidate_threshold,
        iou: cfg.thresholds.iou,
    };
    let dets = detect_all(&det, &samples, &candidate_th)?;
    let gts: Vec<_> = samples
        .iter()
        .map(|s| {
            s.boxes
                .iter()
                .map(|b| (b.class_id, gt_to_pixels(b, s.pixels.width, s.pixels.height)))
                .collect()
        })
        .collect();
    let report = evaluate(&dets, &gts, cfg.thresholds.confidence, cfg.match_iou)?;
    emit_report(&report, out)?;
    let path = out.join("detections.txt");
    let recs = records(&samples, &dets, cfg.thresholds.confidence);
    std::fs::write(&path, format_detections(&recs)).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
