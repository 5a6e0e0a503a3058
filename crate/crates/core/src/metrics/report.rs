use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

use super::components::BinaryMask;
use super::pro::{aupro, pro_curve};
use super::roc::auroc;

/// Everything the evaluator needs to know about one test image.
#[derive(Clone, Debug)]
pub struct EvalImage {
    /// Multi-hot labels, one entry per anomaly type.
    pub labels: Vec<u8>,
    /// Image-level score `z_k` per type.
    pub scores: Vec<f64>,
    /// Full-resolution heatmap per type, row-major `height × width`.
    pub heatmaps: Vec<Vec<f64>>,
    /// Ground-truth mask per type. `None` on a positive type means the mask
    /// is unavailable; normal images need no masks.
    pub masks: Vec<Option<BinaryMask>>,
    pub height: usize,
    pub width: usize,
}

impl EvalImage {
    pub fn is_normal(&self) -> bool {
        self.labels.iter().all(|&y| y == 0)
    }

    fn check(&self, m: usize, idx: usize) -> Result<()> {
        let plane = self.height * self.width;
        if self.labels.len() != m || self.scores.len() != m || self.heatmaps.len() != m || self.masks.len() != m {
            return Err(Error::Contract(format!(
                "test image {idx}: expected {m} entries per type"
            )));
        }
        if let Some(h) = self.heatmaps.iter().find(|h| h.len() != plane) {
            return Err(Error::Contract(format!(
                "test image {idx}: heatmap has {} pixels, expected {plane}",
                h.len()
            )));
        }
        for mask in self.masks.iter().flatten() {
            if (mask.height, mask.width) != (self.height, self.width) {
                return Err(Error::Contract(format!(
                    "test image {idx}: mask is {}x{}, heatmap is {}x{}",
                    mask.height, mask.width, self.height, self.width
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub name: String,
    pub i_auroc: Option<f64>,
    pub p_auroc: Option<f64>,
    pub aupro: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub classes: Vec<ClassMetrics>,
    pub mean_i_auroc: Option<f64>,
    pub mean_p_auroc: Option<f64>,
    pub mean_aupro: Option<f64>,
    /// P-AUROC over every (image, type) pixel population pooled together.
    pub pooled_p_auroc: Option<f64>,
    pub fpr_limit: f64,
    pub warnings: Vec<String>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-type image and pixel metrics.
///
/// For type `k` the population is every image labelled `k` (positives) and
/// every normal image (negatives). Images carrying only other types are left
/// out. Pixel metrics for a type are skipped with a warning when any of its
/// positive images lacks a mask.
pub fn evaluate(
    images: &[EvalImage],
    class_names: &[String],
    fpr_limit: f64,
    max_thresholds: usize,
) -> Result<MetricsReport> {
    let m = class_names.len();
    for (i, img) in images.iter().enumerate() {
        img.check(m, i)?;
    }
    let mut warnings = Vec::new();
    let mut classes = Vec::with_capacity(m);
    let mut pooled_scores: Vec<f64> = Vec::new();
    let mut pooled_labels: Vec<bool> = Vec::new();

    for (k, name) in class_names.iter().enumerate() {
        let members: Vec<&EvalImage> = images
            .iter()
            .filter(|im| im.labels[k] == 1 || im.is_normal())
            .collect();
        let scores: Vec<f64> = members.iter().map(|im| im.scores[k]).collect();
        let labels: Vec<bool> = members.iter().map(|im| im.labels[k] == 1).collect();
        let i_auroc = match auroc(&scores, &labels) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(msg)) => {
                warnings.push(format!("{name}: image AUROC undefined ({msg})"));
                None
            }
            Err(e) => return Err(e),
        };

        let missing = members
            .iter()
            .filter(|im| im.labels[k] == 1 && im.masks[k].is_none())
            .count();
        let (mut p_auroc, mut class_aupro) = (None, None);
        if missing > 0 {
            warnings.push(format!(
                "{name}: {missing} positive images lack masks, pixel metrics skipped"
            ));
        } else {
            let empties: Vec<BinaryMask> = members
                .iter()
                .map(|im| BinaryMask::empty(im.height, im.width))
                .collect();
            let pairs: Vec<(&[f64], &BinaryMask)> = members
                .iter()
                .zip(&empties)
                .map(|(im, empty)| (im.heatmaps[k].as_slice(), im.masks[k].as_ref().unwrap_or(empty)))
                .collect();
            let px_scores: Vec<f64> = pairs.iter().flat_map(|p| p.0.iter().copied()).collect();
            let px_labels: Vec<bool> = pairs.iter().flat_map(|p| p.1.data.iter().copied()).collect();
            p_auroc = match auroc(&px_scores, &px_labels) {
                Ok(v) => Some(v),
                Err(Error::UndefinedMetric(msg)) => {
                    warnings.push(format!("{name}: pixel AUROC undefined ({msg})"));
                    None
                }
                Err(e) => return Err(e),
            };
            class_aupro = match pro_curve(&pairs, max_thresholds) {
                Ok(curve) => Some(aupro(&curve.points, fpr_limit)?),
                Err(Error::UndefinedMetric(msg)) => {
                    warnings.push(format!("{name}: AUPRO undefined ({msg})"));
                    None
                }
                Err(e) => return Err(e),
            };
            pooled_scores.extend(px_scores);
            pooled_labels.extend(px_labels);
        }
        classes.push(ClassMetrics {
            name: name.clone(),
            i_auroc,
            p_auroc,
            aupro: class_aupro,
        });
    }

    let pooled_p_auroc = if pooled_scores.is_empty() {
        None
    } else {
        match auroc(&pooled_scores, &pooled_labels) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        }
    };
    Ok(MetricsReport {
        mean_i_auroc: mean(classes.iter().map(|c| c.i_auroc)),
        mean_p_auroc: mean(classes.iter().map(|c| c.p_auroc)),
        mean_aupro: mean(classes.iter().map(|c| c.aupro)),
        classes,
        pooled_p_auroc,
        fpr_limit,
        warnings,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Metrics as rows, types as columns, with the mean in the last column.
impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<10}", "metric")?;
        for c in &self.classes {
            write!(f, " {:>8}", c.name)?;
        }
        writeln!(f, " {:>8}", "mean")?;
        let rows: [(&str, fn(&ClassMetrics) -> Option<f64>, Option<f64>); 3] = [
            ("I-AUROC", |c| c.i_auroc, self.mean_i_auroc),
            ("P-AUROC", |c| c.p_auroc, self.mean_p_auroc),
            ("AUPRO", |c| c.aupro, self.mean_aupro),
        ];
        for (label, get, mean) in rows {
            write!(f, "{label:<10}")?;
            for c in &self.classes {
                write!(f, " {:>8}", cell(get(c)))?;
            }
            writeln!(f, " {:>8}", cell(mean))?;
        }
        writeln!(f, "pooled P-AUROC {}", cell(self.pooled_p_auroc))?;
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}
