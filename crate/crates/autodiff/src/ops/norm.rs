use crate::real::Real;

/// Exponential-moving-average statistics used by batch normalisation in
/// evaluation mode.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Real> RunningStats<T> {
    pub const DEFAULT_MOMENTUM: f64 = 0.1;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Normalise with batch statistics and update the running averages.
    Train,
    /// Normalise with the running averages.
    Eval,
}

pub(crate) struct BnSaved<T> {
    /// Normalised input (train mode only).
    pub x_hat: Vec<T>,
    pub inv_std: Vec<T>,
}

/// Returns `(output, saved)`; `x` is `(n, c, h, w)` flattened.
#[allow(clippy::too_many_arguments)]
pub(crate) fn forward<T: Real>(
    x: &[T],
    dims: (usize, usize, usize, usize),
    gamma: &[T],
    beta: &[T],
    stats: &mut RunningStats<T>,
    mode: NormMode,
) -> (Vec<T>, BnSaved<T>) {
    let (n, c, h, w) = dims;
    let hw = h * w;
    let count = n * hw;
    let eps = T::of(stats.eps);
    let mut mean = vec![T::zero(); c];
    let mut inv_std = vec![T::zero(); c];

    match mode {
        NormMode::Train => {
            let cnt = T::of(count as f64);
            let mom = T::of(stats.momentum);
            for ch in 0..c {
                let mut sum = T::zero();
                for s in 0..n {
                    sum = x[(s * c + ch) * hw..][..hw].iter().fold(sum, |a, &v| a + v);
                }
                let mu = sum / cnt;
                let mut sq = T::zero();
                for s in 0..n {
                    sq = x[(s * c + ch) * hw..][..hw]
                        .iter()
                        .fold(sq, |a, &v| a + (v - mu) * (v - mu));
                }
                let var = sq / cnt;
                mean[ch] = mu;
                inv_std[ch] = T::one() / (var + eps).sqrt();
                let unbiased = if count > 1 {
                    sq / T::of((count - 1) as f64)
                } else {
                    var
                };
                stats.mean[ch] = (T::one() - mom) * stats.mean[ch] + mom * mu;
                stats.var[ch] = (T::one() - mom) * stats.var[ch] + mom * unbiased;
            }
        }
        NormMode::Eval => {
            for ch in 0..c {
                mean[ch] = stats.mean[ch];
                inv_std[ch] = T::one() / (stats.var[ch] + eps).sqrt();
            }
        }
    }

    let mut x_hat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * hw;
            for i in base..base + hw {
                let xh = (x[i] - mean[ch]) * inv_std[ch];
                x_hat[i] = xh;
                out[i] = gamma[ch] * xh + beta[ch];
            }
        }
    }
    (
        out,
        BnSaved { x_hat, inv_std },
    )
}

pub(crate) struct BnGrads<T> {
    pub dx: Vec<T>,
    pub dgamma: Vec<T>,
    pub dbeta: Vec<T>,
}

pub(crate) fn backward<T: Real>(
    dims: (usize, usize, usize, usize),
    gamma: &[T],
    saved: &BnSaved<T>,
    mode: NormMode,
    dy: &[T],
) -> BnGrads<T> {
    let (n, c, h, w) = dims;
    let hw = h * w;
    let cnt = T::of((n * hw) as f64);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * hw;
            for i in base..base + hw {
                dgamma[ch] = dgamma[ch] + dy[i] * saved.x_hat[i];
                dbeta[ch] = dbeta[ch] + dy[i];
            }
        }
    }
    let mut dx = vec![T::zero(); dy.len()];
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * hw;
            let scale = gamma[ch] * saved.inv_std[ch];
            for i in base..base + hw {
                dx[i] = match mode {
                    NormMode::Eval => scale * dy[i],
                    NormMode::Train => {
                        scale / cnt * (cnt * dy[i] - dbeta[ch] - saved.x_hat[i] * dgamma[ch])
                    }
                };
            }
        }
    }
    BnGrads { dx, dgamma, dbeta }
}
