//! Scoring images with a trained model and computing the test report.

use crate::config::EvalConfig;
use crate::data::{load_mask, to_tensor, DatasetManifest, Image, LoadedSplit};
use crate::error::{Error, Result};
use crate::loss::scores_of;
use crate::metrics::{evaluate, BinaryMask, EvalImage, MetricsReport};
use crate::model::{upsample, Model};

/// Model output for one image.
#[derive(Clone, Debug)]
pub struct Prediction {
    /// Image-level score `z_k` per type.
    pub scores: Vec<f64>,
    /// Heatmap per type at input resolution; empty unless requested.
    pub maps: Vec<Vec<f64>>,
}

/// Runs the model in evaluation mode over `images`, `batch_size` at a time.
pub fn predict(model: &Model<f32>, images: &[Image], batch_size: usize, with_maps: bool) -> Result<Vec<Prediction>> {
    let batch_size = batch_size.max(1);
    let input = model.config().input_size;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch_size) {
        let x = to_tensor(chunk)?;
        let o = model.infer(&x)?;
        let z = scores_of(&o.heatmaps)?;
        let up = if with_maps {
            Some(upsample(&o.heatmaps, input.height, input.width)?)
        } else {
            None
        };
        let plane = input.height * input.width;
        for i in 0..chunk.len() {
            let scores: Vec<f64> = (0..z.types).map(|k| z.get(i, k)).collect();
            if scores.iter().any(|s| !s.is_finite()) {
                return Err(Error::Numeric("model produced a non-finite anomaly score".into()));
            }
            let maps = match &up {
                Some(u) => (0..z.types)
                    .map(|k| {
                        let start = (i * z.types + k) * plane;
                        u.data()[start..start + plane].iter().map(|&v| v as f64).collect()
                    })
                    .collect(),
                None => Vec::new(),
            };
            out.push(Prediction { scores, maps });
        }
    }
    Ok(out)
}

/// Per-type image-level AUROC on a split, without pixel metrics.
pub fn image_level(model: &Model<f32>, split: &LoadedSplit, class_names: &[String], batch_size: usize) -> Result<MetricsReport> {
    let preds = predict(model, &split.images, batch_size, false)?;
    let images: Vec<EvalImage> = preds
        .into_iter()
        .zip(&split.labels)
        .map(|(p, labels)| EvalImage {
            labels: labels.clone(),
            scores: p.scores,
            heatmaps: vec![Vec::new(); labels.len()],
            masks: vec![None; labels.len()],
            height: 0,
            width: 0,
        })
        .collect();
    // Without masks the pixel metrics are skipped; drop their warnings.
    let mut report = evaluate(&images, class_names, 0.3, 2)?;
    report.warnings.retain(|w| !w.contains("lack masks"));
    Ok(report)
}

/// Ground-truth masks of one record, one entry per type.
pub fn record_masks(manifest: &DatasetManifest, record: usize) -> Result<Vec<Option<BinaryMask>>> {
    let r = &manifest.records[record];
    manifest
        .classes
        .iter()
        .map(|c| {
            r.masks
                .get(c)
                .map(|p| {
                    let path = manifest.resolve(p);
                    let (h, w, data) = load_mask(&path)?;
                    BinaryMask::new(h, w, data)
                        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
                })
                .transpose()
        })
        .collect()
}

/// Full test report: per-type I-AUROC, P-AUROC and AUPRO with means.
pub fn evaluate_split(
    model: &Model<f32>,
    manifest: &DatasetManifest,
    split: &LoadedSplit,
    eval: &EvalConfig,
    batch_size: usize,
) -> Result<MetricsReport> {
    let preds = predict(model, &split.images, batch_size, true)?;
    let input = model.config().input_size;
    let mut images = Vec::with_capacity(preds.len());
    for ((p, labels), &rec) in preds.into_iter().zip(&split.labels).zip(&split.records) {
        let masks = record_masks(manifest, rec)?;
        for m in masks.iter().flatten() {
            if (m.height, m.width) != (input.height, input.width) {
                return Err(Error::Data(format!(
                    "{}: mask is {}x{}, images are {}x{}",
                    manifest.records[rec].path.display(),
                    m.height,
                    m.width,
                    input.height,
                    input.width
                )));
            }
        }
        images.push(EvalImage {
            labels: labels.clone(),
            scores: p.scores,
            heatmaps: p.maps,
            masks,
            height: input.height,
            width: input.width,
        });
    }
    evaluate(&images, &manifest.class_names(), eval.fpr_limit, eval.thresholds)
}
