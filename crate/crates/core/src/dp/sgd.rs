use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::accountant::{PrivacySpent, RdpAccountant};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{l2_norm, FitConfig, Network, OptimizerState, StepOutcome, TrainReport};
use crate::rng;

/// Stream tag separating gradient noise from batch shuffling.
const NOISE_STREAM: u64 = 0x006e_6f69_7365;

/// Central-DP training parameters. `sigma = noise_multiplier * clip_norm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdpParams {
    pub noise_multiplier: f64,
    /// `None` disables clipping; only valid without noise.
    pub clip_norm: Option<f64>,
    /// Defaults to `1 / n` for a training set of `n` records.
    #[serde(default)]
    pub delta: Option<f64>,
}

impl CdpParams {
    pub fn new(noise_multiplier: f64, clip_norm: f64) -> Self {
        Self {
            noise_multiplier,
            clip_norm: Some(clip_norm),
            delta: None,
        }
    }

    /// Plain training routed through the private code path.
    pub fn disabled() -> Self {
        Self {
            noise_multiplier: 0.0,
            clip_norm: None,
            delta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise multiplier must be finite and non-negative, got {}",
                self.noise_multiplier
            )));
        }
        match self.clip_norm {
            Some(c) if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::InvalidParameter(format!(
                    "clipping norm must be positive, got {c}"
                )));
            }
            None if self.noise_multiplier > 0.0 => {
                return Err(Error::InvalidParameter(
                    "noise needs a clipping norm to calibrate against".into(),
                ));
            }
            _ => {}
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "delta must lie in (0, 1), got {d}"
                )));
            }
        }
        Ok(())
    }

    /// Gaussian standard deviation added to the summed clipped gradient.
    pub fn sigma(&self) -> f64 {
        match self.clip_norm {
            Some(c) => self.noise_multiplier * c,
            None => 0.0,
        }
    }

    pub fn delta_for(&self, n: usize) -> f64 {
        self.delta.unwrap_or(1.0 / n as f64)
    }
}

/// Scales `grad` by `min(1, C / ||grad||)` over the whole flattened vector.
pub fn clip_per_example(grad: &[f64], clip_norm: f64) -> Result<Vec<f64>> {
    if !(clip_norm > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "clipping norm must be positive, got {clip_norm}"
        )));
    }
    let mut out = grad.to_vec();
    clip_in_place(&mut out, clip_norm);
    Ok(out)
}

fn clip_in_place(grad: &mut [f64], clip_norm: f64) {
    let norm = l2_norm(grad);
    if norm > clip_norm {
        let factor = clip_norm / norm;
        grad.iter_mut().for_each(|g| *g *= factor);
    }
}

/// One private update: clip each per-example gradient, sum them in order,
/// add `N(0, sigma^2)` per coordinate, divide by the lot size and hand the
/// result to the optimizer. Returns the privatized gradient.
pub fn dp_step<R: Rng + ?Sized>(
    theta: &mut [f64],
    per_example: &[Vec<f64>],
    params: &CdpParams,
    rng: &mut R,
    state: &mut OptimizerState,
) -> Result<Vec<f64>> {
    params.validate()?;
    if per_example.is_empty() {
        return Err(Error::Empty("lot".into()));
    }
    let mut sum = vec![0.0; theta.len()];
    for (i, g) in per_example.iter().enumerate() {
        if g.len() != theta.len() {
            return Err(Error::Shape(format!(
                "per-example gradient {i} has {} entries, parameters {}",
                g.len(),
                theta.len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("per-example gradient {i}")));
        }
        accumulate_clipped(&mut sum, g.clone(), params.clip_norm);
    }
    privatize_sum(&mut sum, per_example.len(), params, rng);
    state.apply(theta, &sum)?;
    Ok(sum)
}

fn accumulate_clipped(sum: &mut [f64], mut g: Vec<f64>, clip_norm: Option<f64>) {
    if let Some(c) = clip_norm {
        clip_in_place(&mut g, c);
    }
    for (s, v) in sum.iter_mut().zip(&g) {
        *s += v;
    }
}

fn privatize_sum<R: Rng + ?Sized>(sum: &mut [f64], lot: usize, params: &CdpParams, rng: &mut R) {
    let sigma = params.sigma();
    if sigma > 0.0 {
        for s in sum.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *s += sigma * n;
        }
    }
    let inv = 1.0 / lot as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
}

/// Outcome of a private training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpFitReport {
    pub train: TrainReport,
    /// Lots processed.
    pub steps: u64,
    pub sampling_ratio: f64,
    pub spent: PrivacySpent,
}

impl DpFitReport {
    pub fn epsilon(&self) -> f64 {
        self.spent.epsilon
    }
}

/// Trains `net` with DP-SGD / DP-Adam and accounts the run.
///
/// Lots are the mini-batches of `config` (fixed-size, drawn by shuffling), so
/// the sampling ratio is `batch_size / n`. Gradient noise comes from its own
/// stream derived from `config.seed`.
pub fn dp_fit(
    net: &mut Network,
    train: &Dataset,
    test: &Dataset,
    params: &CdpParams,
    config: &FitConfig,
) -> Result<DpFitReport> {
    params.validate()?;
    let mut noise_rng = rng::derived(config.seed, NOISE_STREAM);
    let mut steps = 0u64;
    let report = crate::nn::train_loop(net, train, test, config, |net, batch, state| {
        let pe = net.per_example_grads(batch)?;
        let mut sum = vec![0.0; net.num_params()];
        let mut correct = 0;
        for (i, g) in pe.grads.into_iter().enumerate() {
            correct += usize::from(pe.predicted[i] == batch.labels[i]);
            accumulate_clipped(&mut sum, g, params.clip_norm);
        }
        privatize_sum(&mut sum, batch.len(), params, &mut noise_rng);
        state.apply(net.params_mut(), &sum)?;
        steps += 1;
        Ok(StepOutcome {
            loss_sum: pe.losses.iter().sum(),
            correct,
        })
    })?;
    let q = (config.batch_size.min(train.len()) as f64) / train.len() as f64;
    let mut accountant = RdpAccountant::with_default_orders(q, params.noise_multiplier)?;
    accountant.record_steps(steps);
    let spent = accountant.spent(params.delta_for(train.len()))?;
    Ok(DpFitReport {
        train: report,
        steps,
        sampling_ratio: q,
        spent,
    })
}
