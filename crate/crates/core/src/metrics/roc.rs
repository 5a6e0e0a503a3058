use crate::error::{Error, Result};

/// ROC curve with one point per distinct score threshold, including the
/// `(0, 0)` and `(1, 1)` endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// Descending; the first entry is `+inf` for the `(0, 0)` point.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

/// Cumulative (false positive, true positive) counts at each distinct
/// threshold, from the highest score down.
fn sweep(scores: &[f64], labels: &[bool]) -> Result<(Vec<f64>, Vec<(u64, u64)>, u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score passed to ROC".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUROC needs both classes ({pos} positive, {neg} negative)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut thresholds = vec![f64::INFINITY];
    let mut counts = vec![(0u64, 0u64)];
    let (mut fp, mut tp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(s);
        counts.push((fp, tp));
    }
    Ok((thresholds, counts, pos, neg))
}

pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (thresholds, counts, pos, neg) = sweep(scores, labels)?;
    Ok(RocCurve {
        thresholds,
        fpr: counts.iter().map(|c| c.0 as f64 / neg as f64).collect(),
        tpr: counts.iter().map(|c| c.1 as f64 / pos as f64).collect(),
    })
}

/// Area under the ROC curve by the trapezoidal rule. Ties contribute half,
/// so the result equals `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (_, counts, pos, neg) = sweep(scores, labels)?;
    // Twice the area in count units, accumulated exactly.
    let mut twice_area: u128 = 0;
    for w in counts.windows(2) {
        let (fp0, tp0) = w[0];
        let (fp1, tp1) = w[1];
        twice_area += (fp1 - fp0) as u128 * (tp0 + tp1) as u128;
    }
    Ok(twice_area as f64 / (2.0 * pos as f64 * neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        assert_eq!(auroc(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
    }

    #[test]
    fn all_tied_is_half() {
        assert_eq!(auroc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(
            auroc(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn curve_endpoints_and_monotonicity() {
        let c = roc_curve(&[0.2, 0.5, 0.5, 0.9, 0.1], &[false, true, false, true, false]).unwrap();
        assert_eq!((c.fpr[0], c.tpr[0]), (0.0, 0.0));
        assert_eq!((*c.fpr.last().unwrap(), *c.tpr.last().unwrap()), (1.0, 1.0));
        assert!(c.fpr.windows(2).all(|w| w[0] <= w[1]));
        assert!(c.tpr.windows(2).all(|w| w[0] <= w[1]));
    }
}
