//! Per-type anomaly scores and the weakly supervised multi-type objective.
//!
//! For every image `i` and anomaly type `k` the score `z_ik` is the mean of
//! the (non-negative) heatmap channel `k`. The objective averages
//! `(1 - y) z - y log(1 - exp(-z))` over the `N × M` score matrix: normal
//! entries pull the whole map towards zero, anomalous entries push the
//! score up.

use fcdd_autodiff::{CustomOp, Real, Tape, Tensor, Var};

use crate::error::{Error, Result};

/// Lower clamp applied to `z` inside the anomalous log term.
pub const Z_MIN: f64 = 1e-8;

/// `batch × M` matrix of non-negative scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector {
    pub batch: usize,
    pub types: usize,
    pub z: Vec<f64>,
}

impl ScoreVector {
    pub fn new(batch: usize, types: usize, z: Vec<f64>) -> Result<Self> {
        if z.len() != batch * types {
            return Err(Error::Contract(format!(
                "{} scores for a {batch}x{types} matrix",
                z.len()
            )));
        }
        if let Some(bad) = z.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Contract(format!("score {bad} is negative or NaN")));
        }
        Ok(Self { batch, types, z })
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.z[i * self.types + k]
    }

    /// Scores of type `k` across the batch.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.batch).map(|i| self.get(i, k)).collect()
    }

    pub fn extend(&mut self, other: &ScoreVector) -> Result<()> {
        if other.types != self.types {
            return Err(Error::Contract("score matrices differ in type count".into()));
        }
        self.batch += other.batch;
        self.z.extend_from_slice(&other.z);
        Ok(())
    }
}

/// `batch × M` binary label matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMatrix {
    pub batch: usize,
    pub types: usize,
    pub y: Vec<u8>,
}

impl LabelMatrix {
    pub fn new(batch: usize, types: usize, y: Vec<u8>) -> Result<Self> {
        if y.len() != batch * types {
            return Err(Error::Contract(format!(
                "{} labels for a {batch}x{types} matrix",
                y.len()
            )));
        }
        if let Some(bad) = y.iter().find(|v| **v > 1) {
            return Err(Error::Contract(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self { batch, types, y })
    }

    /// Labels for a batch where each row is normal (`None`) or carries a
    /// single anomaly type.
    pub fn from_single(types: usize, rows: &[Option<usize>]) -> Result<Self> {
        let mut y = vec![0u8; rows.len() * types];
        for (i, r) in rows.iter().enumerate() {
            if let Some(k) = *r {
                if k >= types {
                    return Err(Error::Contract(format!("type {k} out of range {types}")));
                }
                y[i * types + k] = 1;
            }
        }
        Ok(Self {
            batch: rows.len(),
            types,
            y,
        })
    }

    pub fn get(&self, i: usize, k: usize) -> u8 {
        self.y[i * self.types + k]
    }

    pub fn is_normal(&self, i: usize) -> bool {
        (0..self.types).all(|k| self.get(i, k) == 0)
    }

    pub fn extend(&mut self, other: &LabelMatrix) -> Result<()> {
        if other.types != self.types {
            return Err(Error::Contract("label matrices differ in type count".into()));
        }
        self.batch += other.batch;
        self.y.extend_from_slice(&other.y);
        Ok(())
    }
}

/// `-log(1 - exp(-z))` evaluated as `-log(-expm1(-z))` with `z` clamped at
/// [`Z_MIN`].
pub fn anomalous_term<T: Real>(z: T) -> T {
    let z = z.max(T::of(Z_MIN));
    -(-(-z).exp_m1()).ln()
}

/// Textbook form of [`anomalous_term`]; loses precision for small `z`.
pub fn anomalous_term_naive(z: f64) -> f64 {
    -(1.0 - (-z).exp()).ln()
}

/// Derivative of [`anomalous_term`], `-1 / expm1(z)`, taken at the clamped
/// point so a vanishing score still receives an upward push.
pub fn anomalous_term_grad<T: Real>(z: T) -> T {
    let z = z.max(T::of(Z_MIN));
    -T::one() / z.exp_m1()
}

fn check_pair(z: &ScoreVector, y: &LabelMatrix) -> Result<()> {
    if (z.batch, z.types) != (y.batch, y.types) {
        return Err(Error::Contract(format!(
            "scores are {}x{} but labels are {}x{}",
            z.batch, z.types, y.batch, y.types
        )));
    }
    if z.batch == 0 || z.types == 0 {
        return Err(Error::Contract("empty score matrix".into()));
    }
    Ok(())
}

/// Mean over the `N × M` entries of the per-entry objective.
pub fn loss_value(z: &ScoreVector, y: &LabelMatrix) -> Result<f64> {
    check_pair(z, y)?;
    let total: f64 = z
        .z
        .iter()
        .zip(&y.y)
        .map(|(&zi, &yi)| {
            if yi == 0 {
                zi
            } else {
                anomalous_term(zi)
            }
        })
        .sum();
    Ok(total / z.z.len() as f64)
}

/// `∂ loss / ∂ z_ik` for every entry.
pub fn loss_gradient(z: &ScoreVector, y: &LabelMatrix) -> Result<Vec<f64>> {
    check_pair(z, y)?;
    let scale = 1.0 / z.z.len() as f64;
    Ok(z.z
        .iter()
        .zip(&y.y)
        .map(|(&zi, &yi)| {
            scale
                * if yi == 0 {
                    1.0
                } else {
                    anomalous_term_grad(zi)
                }
        })
        .collect())
}

struct SpatialMean;

impl<T: Real> CustomOp<T> for SpatialMean {
    fn name(&self) -> &str {
        "anomaly_scores"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _out: &Tensor<T>, g: &[T]) -> Vec<Vec<T>> {
        let shape = inputs[0].shape();
        let plane = shape[2] * shape[3];
        let inv = T::one() / T::of(plane as f64);
        let mut dx = Vec::with_capacity(inputs[0].numel());
        for &gi in g {
            dx.extend(std::iter::repeat_n(gi * inv, plane));
        }
        vec![dx]
    }
}

/// Records the per-type scores `z = mean_{u,v} A` on the tape; output shape
/// is `(batch, M)`.
pub fn anomaly_scores<T: Real>(tape: &mut Tape<T>, heatmaps: Var) -> Result<Var> {
    let a = tape.value(heatmaps);
    let (n, m, u, v) = a.dims4()?;
    if a.data().iter().any(|x| !(*x >= T::zero())) {
        return Err(Error::Contract(
            "heatmaps must be non-negative to be scored".into(),
        ));
    }
    let inv = T::one() / T::of((u * v) as f64);
    let z: Vec<T> = a
        .data()
        .chunks(u * v)
        .map(|c| c.iter().copied().sum::<T>() * inv)
        .collect();
    let out = Tensor::new(vec![n, m], z)?;
    Ok(tape.custom(Box::new(SpatialMean), &[heatmaps], out)?)
}

/// Scores of already-computed heatmaps.
pub fn scores_of<T: Real>(heatmaps: &Tensor<T>) -> Result<ScoreVector> {
    let mut tape = Tape::new();
    let a = tape.input(heatmaps.clone());
    let z = anomaly_scores(&mut tape, a)?;
    let t = tape.value(z);
    ScoreVector::new(
        t.shape()[0],
        t.shape()[1],
        t.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
    )
}

struct MultiTypeLoss {
    labels: Vec<u8>,
}

impl<T: Real> CustomOp<T> for MultiTypeLoss {
    fn name(&self) -> &str {
        "multitype_loss"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _out: &Tensor<T>, g: &[T]) -> Vec<Vec<T>> {
        let z = inputs[0].data();
        let scale = g[0] / T::of(z.len() as f64);
        let dz = z
            .iter()
            .zip(&self.labels)
            .map(|(&zi, &yi)| {
                scale
                    * if yi == 0 {
                        T::one()
                    } else {
                        anomalous_term_grad(zi)
                    }
            })
            .collect();
        vec![dz]
    }
}

/// Records the batch objective on the tape: `1/(N·M) Σ_i Σ_k
/// [(1 - y_ik) z_ik - y_ik log(1 - exp(-z_ik))]`.
pub fn multitype_loss<T: Real>(tape: &mut Tape<T>, z: Var, y: &LabelMatrix) -> Result<Var> {
    let zt = tape.value(z);
    if zt.shape() != [y.batch, y.types] {
        return Err(Error::Contract(format!(
            "scores have shape {:?} but labels are {}x{}",
            zt.shape(),
            y.batch,
            y.types
        )));
    }
    if zt.data().iter().any(|v| !(*v >= T::zero())) {
        return Err(Error::Contract("scores must be non-negative".into()));
    }
    let total: T = zt
        .data()
        .iter()
        .zip(&y.y)
        .map(|(&zi, &yi)| {
            if yi == 0 {
                zi
            } else {
                anomalous_term(zi)
            }
        })
        .sum();
    let value = total / T::of(zt.numel() as f64);
    let op = MultiTypeLoss {
        labels: y.y.clone(),
    };
    Ok(tape.custom(Box::new(op), &[z], Tensor::scalar(value))?)
}

/// Outcome of checking that gradient signs follow the labels.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSignReport {
    /// Entries with `y = 0` whose gradient is not strictly positive.
    pub normal_violations: usize,
    /// Entries with `y = 1` whose gradient is not strictly negative.
    pub anomalous_violations: usize,
    pub gradient: Vec<f64>,
}

impl GradientSignReport {
    pub fn ok(&self) -> bool {
        self.normal_violations == 0 && self.anomalous_violations == 0
    }
}

/// Verifies `∂loss/∂z > 0` on normal entries and `< 0` on anomalous ones.
pub fn loss_gradient_sanity(z: &ScoreVector, y: &LabelMatrix) -> Result<GradientSignReport> {
    if z.z.iter().any(|&v| v <= 0.0) {
        return Err(Error::Contract("gradient sanity requires z > 0".into()));
    }
    let gradient = loss_gradient(z, y)?;
    let mut report = GradientSignReport {
        normal_violations: 0,
        anomalous_violations: 0,
        gradient,
    };
    for (g, &yi) in report.gradient.iter().zip(&y.y) {
        match yi {
            0 if !(*g > 0.0) => report.normal_violations += 1,
            1 if !(*g < 0.0) => report.anomalous_violations += 1,
            _ => {}
        }
    }
    Ok(report)
}

/// Binary FCDD per-sample objective `(1 - y) z - y log(1 - exp(-z))`.
pub fn binary_fcdd_loss(z: f64, anomalous: bool) -> f64 {
    if anomalous {
        -(-(-z.max(Z_MIN)).exp()).ln_1p()
    } else {
        z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub multitype: f64,
    pub binary: f64,
}

impl EquivalenceReport {
    pub fn difference(&self) -> f64 {
        (self.multitype - self.binary).abs()
    }
}

/// With a single anomaly channel the multi-type objective must coincide
/// with the mean binary FCDD loss.
pub fn binary_mode_equivalence(z: &ScoreVector, y: &LabelMatrix) -> Result<EquivalenceReport> {
    if z.types != 1 {
        return Err(Error::Contract(format!(
            "binary equivalence needs M = 1, got {}",
            z.types
        )));
    }
    let multitype = loss_value(z, y)?;
    let per_sample: Vec<f64> = (0..z.batch)
        .map(|i| binary_fcdd_loss(z.get(i, 0), y.get(i, 0) == 1))
        .collect();
    let binary = per_sample.iter().sum::<f64>() / z.batch as f64;
    Ok(EquivalenceReport { multitype, binary })
}
