//! Class-balanced sampling and balanced-epoch length estimation.
//!
//! Each draw picks one of the `n` classes (normal plus every anomaly type
//! present) uniformly at random, then takes the next image from that
//! class's shuffled pool. An exhausted pool is reshuffled and reused. A
//! balanced epoch ends once every class has been drawn at least as many
//! times as it has images, which makes its length a generalised
//! coupon-collector variable.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ClassQuota {
    pub class_id: usize,
    /// Dataset indices of this class, in current shuffled order.
    pub pool: Vec<usize>,
    cursor: usize,
    pub drawn_this_epoch: usize,
}

impl ClassQuota {
    /// Quota `m_i`: the number of images in the class.
    pub fn quota(&self) -> usize {
        self.pool.len()
    }

    pub fn satisfied(&self) -> bool {
        self.drawn_this_epoch >= self.quota()
    }
}

/// One sampled image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Draw {
    pub class_id: usize,
    pub index: usize,
}

#[derive(Clone, Debug)]
pub struct SamplerState {
    pub quotas: Vec<ClassQuota>,
    pub batch_size: usize,
    rng: ChaCha8Rng,
    iterations: u64,
}

impl SamplerState {
    /// `classes[c]` lists the dataset indices belonging to class `c`.
    pub fn new(classes: Vec<Vec<usize>>, batch_size: usize, seed: u64) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("sampler needs at least one class".into()));
        }
        if let Some(c) = classes.iter().position(Vec::is_empty) {
            return Err(Error::Config(format!("class {c} has no images")));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let quotas = classes
            .into_iter()
            .enumerate()
            .map(|(class_id, mut pool)| {
                pool.shuffle(&mut rng);
                ClassQuota {
                    class_id,
                    pool,
                    cursor: 0,
                    drawn_this_epoch: 0,
                }
            })
            .collect();
        Ok(Self {
            quotas,
            batch_size,
            rng,
            iterations: 0,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.quotas.len()
    }

    /// Total draws since construction.
    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn next_sample(&mut self) -> Draw {
        let c = self.rng.random_range(0..self.quotas.len());
        let q = &mut self.quotas[c];
        if q.cursor == q.pool.len() {
            q.pool.shuffle(&mut self.rng);
            q.cursor = 0;
        }
        let index = q.pool[q.cursor];
        q.cursor += 1;
        q.drawn_this_epoch += 1;
        self.iterations += 1;
        Draw { class_id: c, index }
    }

    pub fn epoch_complete(&self) -> bool {
        self.quotas.iter().all(ClassQuota::satisfied)
    }

    /// Clears the per-epoch counters; pools keep their position.
    pub fn reset_epoch(&mut self) {
        for q in &mut self.quotas {
            q.drawn_this_epoch = 0;
        }
    }

    /// Draws until the current balanced epoch completes.
    pub fn draw_epoch(&mut self) -> Vec<Draw> {
        let mut draws = Vec::new();
        while !self.epoch_complete() {
            draws.push(self.next_sample());
        }
        draws
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochEstimate {
    /// Mean draws per balanced epoch.
    pub mu_t: f64,
    /// Mean mini-batch iterations per balanced epoch (`mu_t / batch_size`).
    pub mu_t_batch: f64,
    /// Sample standard deviation of the draw count.
    pub std_t: f64,
    pub trials: usize,
}

/// Draws needed for one simulated balanced epoch. Only class counts matter
/// for the epoch length, so images themselves are not simulated.
fn simulate_epoch(quotas: &[usize], rng: &mut ChaCha8Rng) -> u64 {
    let n = quotas.len();
    let mut remaining = quotas.to_vec();
    let mut open = remaining.iter().filter(|&&m| m > 0).count();
    let mut t = 0u64;
    while open > 0 {
        let c = rng.random_range(0..n);
        t += 1;
        if remaining[c] > 0 {
            remaining[c] -= 1;
            if remaining[c] == 0 {
                open -= 1;
            }
        }
    }
    t
}

/// Monte Carlo estimate of the balanced-epoch length. Trial `j` uses stream
/// `j` of a ChaCha generator keyed by `seed`, so results do not depend on
/// the number of worker threads.
pub fn estimate_epoch_length(
    quotas: &[usize],
    n_trials: usize,
    batch_size: usize,
    seed: u64,
) -> Result<EpochEstimate> {
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be at least 1".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if quotas.is_empty() || quotas.contains(&0) {
        return Err(Error::Config(
            "every class needs a positive quota".into(),
        ));
    }
    let lengths: Vec<u64> = (0..n_trials as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j);
            simulate_epoch(quotas, &mut rng)
        })
        .collect();
    let n = lengths.len() as f64;
    let mu_t = lengths.iter().map(|&t| t as f64).sum::<f64>() / n;
    let std_t = if lengths.len() > 1 {
        (lengths
            .iter()
            .map(|&t| (t as f64 - mu_t).powi(2))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    } else {
        0.0
    };
    Ok(EpochEstimate {
        mu_t,
        mu_t_batch: mu_t / batch_size as f64,
        std_t,
        trials: n_trials,
    })
}

/// Balanced-epoch length expressed in standard epochs (one pass over
/// `total_images`).
pub fn std_epoch_ratio(mu_t_batch: f64, total_images: usize, batch_size: usize) -> Result<f64> {
    if total_images == 0 || batch_size == 0 {
        return Err(Error::Config(
            "total images and batch size must be positive".into(),
        ));
    }
    Ok(mu_t_batch / std_iterations(total_images, batch_size))
}

/// Mini-batch iterations in one standard epoch.
pub fn std_iterations(total_images: usize, batch_size: usize) -> f64 {
    total_images as f64 / batch_size as f64
}
