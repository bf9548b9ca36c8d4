//! Target and shadow model training under a privacy mode.

use serde::{Deserialize, Serialize};

use crate::data::{AttackDataLayout, Dataset, FeatureKind};
use crate::dp::{dp_fit, CdpParams};
use crate::error::{Error, Result};
use crate::mechanisms::{ldp_perturb_dataset, pixelate_dataset, rr_retention, PixelationParams};
use crate::nn::{fit, EarlyStopping, FitConfig, Network, OptimizerConfig, TrainReport};
use crate::parallel::par_map;
use crate::rng::{derive_seed, derived};

const INIT_STREAM: u64 = 20;
const PERTURB_STREAM: u64 = 21;
const FIT_STREAM: u64 = 22;
const SHADOW_STREAM: u64 = 23;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case")]
pub enum LdpMechanism {
    /// Bitwise randomized response on binary records.
    Rr,
    /// Laplace pixelation of image records.
    Pixelation { neighborhood: f64, cell: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdpParams {
    #[serde(flatten)]
    pub mechanism: LdpMechanism,
    /// Per-feature budget.
    pub epsilon_i: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PrivacyMode {
    None,
    Ldp(LdpParams),
    Cdp(CdpParams),
}

impl PrivacyMode {
    pub fn name(&self) -> &'static str {
        match self {
            PrivacyMode::None => "none",
            PrivacyMode::Ldp(_) => "ldp",
            PrivacyMode::Cdp(_) => "cdp",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PrivacyMode::None => Ok(()),
            PrivacyMode::Ldp(p) => {
                rr_retention(p.epsilon_i)?;
                if let LdpMechanism::Pixelation { neighborhood, cell } = p.mechanism {
                    PixelationParams::new(neighborhood, cell, p.epsilon_i)?;
                }
                Ok(())
            }
            PrivacyMode::Cdp(c) => c.validate(),
        }
    }
}

/// Architecture and optimizer shared by target and shadow models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub early_stopping: Option<EarlyStopping>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128],
            optimizer: OptimizerConfig::adam(0.001),
            batch_size: 128,
            epochs: 200,
            early_stopping: None,
        }
    }
}

impl ModelConfig {
    pub fn sizes(&self, inputs: usize, classes: usize) -> Vec<usize> {
        let mut s = vec![inputs];
        s.extend(&self.hidden);
        s.push(classes);
        s
    }

    pub fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            early_stopping: self.early_stopping,
            seed,
        }
    }
}

/// A trained classifier plus what it cost and what it saw.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub net: Network,
    pub report: TrainReport,
    /// Per-record LDP budget, accounted CDP epsilon, or infinity.
    pub epsilon: f64,
    /// Digest of the records the optimizer consumed.
    pub trained_on: u64,
}

/// Applies the local randomizer of `params` to every record.
pub fn perturb_records(data: &Dataset, params: &LdpParams, seed: u64) -> Result<(Dataset, f64)> {
    let mut rng = derived(seed, PERTURB_STREAM);
    match params.mechanism {
        LdpMechanism::Rr => {
            if data.kind() != FeatureKind::Binary {
                return Err(Error::InvalidParameter(
                    "randomized response needs binary features".into(),
                ));
            }
            ldp_perturb_dataset(data, rr_retention(params.epsilon_i)?, &mut rng)
        }
        LdpMechanism::Pixelation { neighborhood, cell } => {
            let p = PixelationParams::new(neighborhood, cell, params.epsilon_i)?;
            Ok((pixelate_dataset(data, &p, &mut rng)?, params.epsilon_i))
        }
    }
}

/// Trains one model on `train` (perturbed first in LDP mode) with early
/// stopping on `test`.
pub fn train_model(
    train: &Dataset,
    test: &Dataset,
    config: &ModelConfig,
    mode: &PrivacyMode,
    seed: u64,
) -> Result<TrainedModel> {
    mode.validate()?;
    let sizes = config.sizes(train.width(), train.num_classes());
    let mut net = Network::new(&sizes, &mut derived(seed, INIT_STREAM))?;
    let fit_cfg = config.fit_config(derive_seed(seed, FIT_STREAM));
    let (report, epsilon, trained_on) = match mode {
        PrivacyMode::None => (
            fit(&mut net, train, test, &fit_cfg)?,
            f64::INFINITY,
            train.digest(),
        ),
        PrivacyMode::Ldp(p) => {
            let (noisy, eps) = perturb_records(train, p, seed)?;
            (fit(&mut net, &noisy, test, &fit_cfg)?, eps, noisy.digest())
        }
        PrivacyMode::Cdp(c) => {
            let r = dp_fit(&mut net, train, test, c, &fit_cfg)?;
            (r.train, r.spent.epsilon, train.digest())
        }
    };
    Ok(TrainedModel {
        net,
        report,
        epsilon,
        trained_on,
    })
}

/// Seed of shadow `k` for a job seeded with `seed`.
pub fn shadow_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, SHADOW_STREAM.wrapping_add((k as u64) << 16))
}

/// Trains one shadow per layout pair, mirroring the target's privacy mode.
pub fn train_shadows(
    data: &Dataset,
    layout: &AttackDataLayout,
    config: &ModelConfig,
    mode: &PrivacyMode,
    seed: u64,
    jobs: usize,
) -> Result<Vec<TrainedModel>> {
    par_map(&layout.shadows, jobs, |k, split| {
        let train = data.subset(&split.train)?;
        let test = data.subset(&split.test)?;
        train_model(&train, &test, config, mode, shadow_seed(seed, k))
    })
}
