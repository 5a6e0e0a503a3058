//! Training loop over balanced (or plain) epochs.

use fcdd_autodiff::{Adam, NormMode, Tape};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{balanced_order, epoch_rng, plain_order, Batch, BatchIterator, LoadedSplit};
use crate::error::{Error, Result};
use crate::evaluate::image_level;
use crate::loss::{anomaly_scores, multitype_loss};
use crate::model::Model;
use crate::sampler::{estimate_epoch_length, std_iterations};

const SAMPLER_STREAM: u32 = 0;
const AUGMENT_STREAM: u32 = 1;
const PLAIN_STREAM: u32 = 2;

/// Trials used to size plain epochs to the expected balanced length.
const MATCH_TRIALS: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: u32,
    pub draws: usize,
    pub iterations: usize,
    /// The same number of draws expressed in standard epochs.
    pub std_epochs: f64,
    pub mean_loss: f64,
    /// Mean loss of each `log_every`-iteration window.
    pub window_losses: Vec<f64>,
    pub val_i_auroc: Vec<Option<f64>>,
    pub val_mean_i_auroc: Option<f64>,
}

pub enum TrainEvent<'a> {
    Window { epoch: u32, iteration: usize, loss: f64 },
    Epoch(&'a EpochRecord),
}

/// One optimisation step; returns the batch loss.
pub fn train_step(model: &mut Model<f32>, adam: &Adam, batch: &Batch) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.input(batch.input.clone());
    let vars = model.forward(&mut tape, x, NormMode::Train)?;
    let z = anomaly_scores(&mut tape, vars.heatmaps)?;
    let loss = multitype_loss(&mut tape, z, &batch.labels)?;
    let value = tape.value(loss).data()[0] as f64;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("training loss became {value}")));
    }
    let grads = tape.backward(loss)?;
    model.accumulate(&grads);
    adam.step(model.params_mut())?;
    Ok(value)
}

/// Refuses data that cannot train a weakly supervised detector.
pub fn check_training_split(train: &LoadedSplit) -> Result<()> {
    if train.anomalous_count() == 0 {
        return Err(Error::Data(
            "the training split has no anomalous images; weak supervision needs \
             labelled anomalies of every type to learn from"
                .into(),
        ));
    }
    if train.anomalous_count() == train.len() {
        return Err(Error::Data("the training split has no normal images".into()));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: RunConfig,
    pub model: Model<f32>,
    pub epochs_done: u32,
    pub history: Vec<EpochRecord>,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::build(config.model.clone())?;
        Ok(Self {
            config,
            model,
            epochs_done: 0,
            history: Vec::new(),
        })
    }

    fn adam(&self) -> Adam {
        let o = &self.config.optimizer;
        Adam {
            lr: o.lr,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
        }
    }

    /// Draw order for epoch `epoch` (1-based). Balanced epochs come from the
    /// class-balanced sampler; plain epochs are shuffled passes cut to the
    /// expected balanced length so both arms see the same budget.
    pub fn epoch_order(&self, train: &LoadedSplit, epoch: u32) -> Result<Vec<usize>> {
        let t = &self.config.training;
        let bs = self.config.optimizer.batch_size;
        if t.balanced {
            let seed: u64 = epoch_rng(t.seed, SAMPLER_STREAM, epoch).random();
            balanced_order(train, bs, seed)
        } else {
            let quotas: Vec<usize> = train.class_partition().iter().map(Vec::len).collect();
            let est = estimate_epoch_length(&quotas, MATCH_TRIALS, bs, t.seed)?;
            let draws = est.mu_t.round() as usize;
            Ok(plain_order(train.len(), draws, &mut epoch_rng(t.seed, PLAIN_STREAM, epoch)))
        }
    }

    /// Runs the next epoch and, given a test split, records image-level
    /// validation metrics.
    pub fn train_epoch(
        &mut self,
        train: &LoadedSplit,
        test: Option<(&LoadedSplit, &[String])>,
        on_event: &mut dyn FnMut(TrainEvent<'_>),
    ) -> Result<EpochRecord> {
        check_training_split(train)?;
        let epoch = self.epochs_done + 1;
        let order = self.epoch_order(train, epoch)?;
        let draws = order.len();
        let t = self.config.training.clone();
        let bs = self.config.optimizer.batch_size;
        let adam = self.adam();
        let batches = BatchIterator::new(train, order, bs, t.augment_prob, epoch_rng(t.seed, AUGMENT_STREAM, epoch))?;
        let (mut losses, mut window, mut windows) = (Vec::new(), Vec::new(), Vec::new());
        for batch in batches {
            let loss = train_step(&mut self.model, &adam, &batch?)?;
            losses.push(loss);
            window.push(loss);
            if window.len() == t.log_every {
                let mean = window.iter().sum::<f64>() / window.len() as f64;
                on_event(TrainEvent::Window {
                    epoch,
                    iteration: losses.len(),
                    loss: mean,
                });
                windows.push(mean);
                window.clear();
            }
        }
        if !window.is_empty() {
            windows.push(window.iter().sum::<f64>() / window.len() as f64);
        }
        let (val_i_auroc, val_mean_i_auroc) = match test {
            Some((split, names)) => {
                let r = image_level(&self.model, split, names, bs.max(32))?;
                (r.classes.iter().map(|c| c.i_auroc).collect(), r.mean_i_auroc)
            }
            None => (Vec::new(), None),
        };
        let record = EpochRecord {
            epoch,
            draws,
            iterations: losses.len(),
            std_epochs: losses.len() as f64 / std_iterations(train.len(), bs),
            mean_loss: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
            window_losses: windows,
            val_i_auroc,
            val_mean_i_auroc,
        };
        self.epochs_done = epoch;
        self.history.push(record.clone());
        on_event(TrainEvent::Epoch(&record));
        Ok(record)
    }

    /// Epoch with the highest validation mean I-AUROC (earliest on ties).
    pub fn best_epoch(&self) -> Option<&EpochRecord> {
        self.history
            .iter()
            .filter(|r| r.val_mean_i_auroc.is_some())
            .fold(None, |best: Option<&EpochRecord>, r| match best {
                Some(b) if b.val_mean_i_auroc >= r.val_mean_i_auroc => Some(b),
                _ => Some(r),
            })
    }
}
