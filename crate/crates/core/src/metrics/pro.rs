use crate::error::{Error, Result};

use super::components::{connected_components, BinaryMask};

/// Default cap on the number of thresholds swept.
pub const MAX_THRESHOLDS: usize = 5000;

/// Default integration limit for AUPRO.
pub const DEFAULT_FPR_LIMIT: f64 = 0.3;

/// Per-region overlap curve. `points` are `(fpr, pro)` pairs in
/// non-decreasing FPR order, starting at `(0, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProCurve {
    pub thresholds: Vec<f64>,
    pub points: Vec<(f64, f64)>,
    pub num_components: usize,
}

/// Candidate thresholds in descending order: every distinct score when there
/// are at most `max` of them, otherwise `max` values spaced evenly by rank
/// (always including the extremes).
pub fn select_thresholds(scores: impl Iterator<Item = f64>, max: usize) -> Vec<f64> {
    let mut uniq: Vec<f64> = scores.collect();
    uniq.sort_by(|a, b| b.total_cmp(a));
    uniq.dedup();
    if uniq.len() <= max || max < 2 {
        return uniq;
    }
    let last = (uniq.len() - 1) as f64;
    let mut out: Vec<f64> = (0..max)
        .map(|i| uniq[(i as f64 * last / (max - 1) as f64).round() as usize])
        .collect();
    out.dedup();
    out
}

/// PRO curve over a set of `(scores, mask)` pairs of equal-sized maps.
///
/// Ground-truth regions are the 8-connected components of each mask. For a
/// threshold `τ` a pixel is predicted anomalous when its score is `≥ τ`; PRO
/// is the mean over regions of the covered fraction and FPR is taken over all
/// pixels outside every mask.
pub fn pro_curve(items: &[(&[f64], &BinaryMask)], max_thresholds: usize) -> Result<ProCurve> {
    // Region id per pixel (u32::MAX for background), with region sizes.
    let mut pixels: Vec<(f64, u32)> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    for (img, (scores, mask)) in items.iter().enumerate() {
        if scores.len() != mask.data.len() {
            return Err(Error::Contract(format!(
                "image {img}: {} scores for a {}x{} mask",
                scores.len(),
                mask.height,
                mask.width
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Numeric(format!("image {img}: NaN anomaly score")));
        }
        let mut region = vec![u32::MAX; scores.len()];
        for comp in connected_components(mask, img, 0) {
            let id = sizes.len() as u32;
            sizes.push(comp.len());
            for p in comp.pixels {
                region[p] = id;
            }
        }
        pixels.extend(scores.iter().copied().zip(region));
    }
    let normal_total = pixels.iter().filter(|p| p.1 == u32::MAX).count();
    if sizes.is_empty() {
        return Err(Error::UndefinedMetric(
            "PRO needs at least one ground-truth region".into(),
        ));
    }
    if normal_total == 0 {
        return Err(Error::UndefinedMetric(
            "PRO needs at least one normal pixel".into(),
        ));
    }

    let thresholds = select_thresholds(pixels.iter().map(|p| p.0), max_thresholds);
    pixels.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_regions = sizes.len() as f64;
    // Integer hit counts, so a fully covered curve ends at exactly 1.
    let mut hits = vec![0usize; sizes.len()];

    let mut points = Vec::with_capacity(thresholds.len() + 1);
    points.push((0.0, 0.0));
    let (mut fp, mut next) = (0usize, 0usize);
    for &tau in &thresholds {
        while next < pixels.len() && pixels[next].0 >= tau {
            match pixels[next].1 {
                u32::MAX => fp += 1,
                id => hits[id as usize] += 1,
            }
            next += 1;
        }
        let overlap: f64 = hits.iter().zip(&sizes).map(|(&h, &s)| h as f64 / s as f64).sum();
        points.push((fp as f64 / normal_total as f64, overlap / n_regions));
    }
    Ok(ProCurve {
        thresholds,
        points,
        num_components: sizes.len(),
    })
}

/// Normalised area under a PRO curve up to `fpr_limit`, by the trapezoidal
/// rule. The last segment is interpolated at the limit; a curve that stops
/// short of the limit is extended horizontally from its last point.
pub fn aupro(points: &[(f64, f64)], fpr_limit: f64) -> Result<f64> {
    if !(fpr_limit > 0.0 && fpr_limit <= 1.0) {
        return Err(Error::Config(format!(
            "fpr limit must lie in (0, 1], got {fpr_limit}"
        )));
    }
    if points.is_empty() {
        return Err(Error::UndefinedMetric("empty PRO curve".into()));
    }
    if points.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::Contract("PRO curve FPR must be non-decreasing".into()));
    }
    let mut area = 0.0;
    let mut last = points[0];
    for &(x1, y1) in &points[1..] {
        let (x0, y0) = last;
        if x1 > fpr_limit {
            let y_at = y0 + (y1 - y0) * (fpr_limit - x0) / (x1 - x0);
            area += (fpr_limit - x0) * (y0 + y_at) / 2.0;
            return Ok(area / fpr_limit);
        }
        area += (x1 - x0) * (y0 + y1) / 2.0;
        last = (x1, y1);
    }
    if last.0 < fpr_limit {
        area += (fpr_limit - last.0) * last.1;
    }
    Ok(area / fpr_limit)
}
