use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{argmax, Batch, Network, PROB_FLOOR};
use super::optim::{OptimizerConfig, OptimizerState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    /// Consecutive non-improving epochs tolerated; 0 stops at the first one.
    pub patience: usize,
    /// Minimum decrease in test loss that counts as an improvement.
    pub min_delta: f64,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self {
            patience: 10,
            min_delta: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub early_stopping: Option<EarlyStopping>,
    /// Seeds mini-batch shuffling.
    pub seed: u64,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "batch size must be at least 1".into(),
            ));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Running mean of mini-batch losses, measured before each update.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Number of epochs actually run.
    pub stop_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn last(&self) -> &EpochStats {
        self.epochs.last().expect("at least one epoch runs")
    }
}

/// Loss and accuracy of one optimizer step, measured on the pre-update
/// parameters.
pub(crate) struct StepOutcome {
    pub loss_sum: f64,
    pub correct: usize,
}

/// Mini-batch loop shared by the plain and private trainers.
///
/// The batch order is reshuffled every epoch from `config.seed`; the last
/// partial batch is kept.
pub(crate) fn train_loop<F>(
    net: &mut Network,
    train: &Dataset,
    test: &Dataset,
    config: &FitConfig,
    mut step: F,
) -> Result<TrainReport>
where
    F: FnMut(&mut Network, &Batch, &mut OptimizerState) -> Result<StepOutcome>,
{
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if test.is_empty() {
        return Err(Error::Empty("test set".into()));
    }
    let mut shuffle_rng = rng::seeded(config.seed);
    let mut state = OptimizerState::new(config.optimizer, net.num_params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let test_batch = test.to_batch();

    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = train.batch(chunk);
            let out = step(net, &batch, &mut state)?;
            if !out.loss_sum.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {b}"
                )));
            }
            if !net.is_finite() {
                return Err(Error::NonFinite(format!(
                    "weights after epoch {epoch}, batch {b} (learning rate {})",
                    config.optimizer.learning_rate
                )));
            }
            loss_sum += out.loss_sum;
            correct += out.correct;
        }
        let (test_loss, test_accuracy) = evaluate_batch(net, &test_batch)?;
        epochs.push(EpochStats {
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            test_loss,
            test_accuracy,
        });

        if let Some(es) = config.early_stopping {
            if test_loss < best - es.min_delta {
                best = test_loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= es.patience.max(1) {
                    stop_reason = StopReason::EarlyStop;
                    break;
                }
            }
        }
    }
    Ok(TrainReport {
        stop_epoch: epochs.len(),
        epochs,
        stop_reason,
    })
}

/// Trains `net` with plain mini-batch SGD or Adam.
pub fn fit(
    net: &mut Network,
    train: &Dataset,
    test: &Dataset,
    config: &FitConfig,
) -> Result<TrainReport> {
    train_loop(net, train, test, config, |net, batch, state| {
        let stats = net.batch_gradient_stats(batch)?;
        state.apply(net.params_mut(), &stats.grad)?;
        Ok(StepOutcome {
            loss_sum: stats.loss_sum,
            correct: stats.correct,
        })
    })
}

/// Mean cross-entropy and accuracy over a batch.
pub fn evaluate_batch(net: &Network, batch: &Batch) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let fwd = net.forward(batch)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (i, &y) in batch.labels.iter().enumerate() {
        let p = fwd.softmax.row(i);
        loss -= p[y].max(PROB_FLOOR).ln();
        correct += usize::from(argmax(p) == y);
    }
    let n = batch.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Fraction of records whose argmax prediction equals the label.
pub fn evaluate_accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    Ok(evaluate_batch(net, &data.to_batch())?.1)
}
