//! Synthetic datasets: skewed purchase baskets, unbalanced carts and
//! patterned grayscale images.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::rng::{derived, JobRng};

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

/// Skewed Purchases parameters.
///
/// Class `c` owns the indicator block `[c*d/C, (c+1)*d/C)`; its bits are set
/// with `p_indicator` in both splits while every other bit is noise, set
/// with `p_noise_train` in the training split and `p_noise_test` in the test
/// split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewSpec {
    pub classes: usize,
    /// Records per split.
    pub records: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_p_indicator")]
    pub p_indicator: f64,
    #[serde(default = "default_p_noise_train")]
    pub p_noise_train: f64,
    #[serde(default = "default_p_noise_test")]
    pub p_noise_test: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_width() -> usize {
    600
}
fn default_p_indicator() -> f64 {
    0.8
}
fn default_p_noise_train() -> f64 {
    0.2
}
fn default_p_noise_test() -> f64 {
    0.5
}

impl SkewSpec {
    pub fn new(classes: usize, records: usize, seed: u64) -> Self {
        Self {
            classes,
            records,
            width: default_width(),
            p_indicator: default_p_indicator(),
            p_noise_train: default_p_noise_train(),
            p_noise_test: default_p_noise_test(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidParameter("need at least 2 classes".into()));
        }
        if self.width % self.classes != 0 {
            return Err(Error::InvalidParameter(format!(
                "width {} is not divisible by {} classes",
                self.width, self.classes
            )));
        }
        for (name, p) in [
            ("indicator", self.p_indicator),
            ("train noise", self.p_noise_train),
            ("test noise", self.p_noise_test),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "{name} probability {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn block(&self, class: usize) -> std::ops::Range<usize> {
        let b = self.width / self.classes;
        class * b..(class + 1) * b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Streams skewed records one at a time, so large splits never need to be
/// materialized.
pub struct SkewedRecords {
    spec: SkewSpec,
    p_noise: f64,
    rng: JobRng,
    remaining: usize,
}

impl Iterator for SkewedRecords {
    type Item = (Vec<bool>, usize);

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let c = self.rng.random_range(0..self.spec.classes);
        let block = self.spec.block(c);
        let bits = (0..self.spec.width)
            .map(|j| {
                let p = if block.contains(&j) {
                    self.spec.p_indicator
                } else {
                    self.p_noise
                };
                self.rng.random::<f64>() < p
            })
            .collect();
        Some((bits, c))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

pub fn skewed_records(spec: &SkewSpec, split: Split) -> Result<SkewedRecords> {
    spec.validate()?;
    let (stream, p_noise) = match split {
        Split::Train => (TRAIN_STREAM, spec.p_noise_train),
        Split::Test => (TEST_STREAM, spec.p_noise_test),
    };
    Ok(SkewedRecords {
        spec: *spec,
        p_noise,
        rng: derived(spec.seed, stream),
        remaining: spec.records,
    })
}

fn collect(records: impl Iterator<Item = (Vec<bool>, usize)>, spec: &SkewSpec) -> Result<Dataset> {
    let mut features = Vec::with_capacity(spec.records * spec.width);
    let mut labels = Vec::with_capacity(spec.records);
    for (bits, c) in records {
        features.extend(bits.into_iter().map(|b| f64::from(u8::from(b))));
        labels.push(c);
    }
    Dataset::new(
        features,
        spec.width,
        labels,
        spec.classes,
        FeatureKind::Binary,
    )
}

/// Materializes both splits.
pub fn gen_skewed_purchases(spec: &SkewSpec) -> Result<(Dataset, Dataset)> {
    let train = collect(skewed_records(spec, Split::Train)?, spec)?;
    let test = collect(skewed_records(spec, Split::Test)?, spec)?;
    Ok((train, test))
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    h(p) + h(1.0 - p)
}

/// Mean class-conditional per-bit entropy of one split, estimated from the
/// empirical bit frequencies of each class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    /// Averaged over each record's noise positions only.
    pub noise_bits: f64,
    /// Averaged over all positions.
    pub all_bits: f64,
    pub records: usize,
}

/// Builds the profile from a record stream without storing records.
pub fn entropy_profile(
    spec: &SkewSpec,
    records: impl Iterator<Item = (Vec<bool>, usize)>,
) -> Result<EntropyProfile> {
    spec.validate()?;
    let d = spec.width;
    let mut ones = vec![0u64; spec.classes * d];
    let mut counts = vec![0u64; spec.classes];
    let mut total = 0usize;
    for (bits, c) in records {
        if bits.len() != d || c >= spec.classes {
            return Err(Error::Shape(format!(
                "record of width {} / class {c} does not fit the spec",
                bits.len()
            )));
        }
        counts[c] += 1;
        total += 1;
        for (j, b) in bits.into_iter().enumerate() {
            ones[c * d + j] += u64::from(b);
        }
    }
    if total == 0 {
        return Err(Error::Empty("record stream".into()));
    }
    let (mut noise, mut all) = (0.0, 0.0);
    for c in 0..spec.classes {
        if counts[c] == 0 {
            continue;
        }
        let weight = counts[c] as f64 / total as f64;
        let block = spec.block(c);
        let (mut hn, mut ha) = (0.0, 0.0);
        for j in 0..d {
            let h = binary_entropy(ones[c * d + j] as f64 / counts[c] as f64);
            ha += h;
            if !block.contains(&j) {
                hn += h;
            }
        }
        noise += weight * hn / (d - block.len()) as f64;
        all += weight * ha / d as f64;
    }
    Ok(EntropyProfile {
        noise_bits: noise,
        all_bits: all,
        records: total,
    })
}

/// Test-minus-train entropy gaps of a skewed dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyGap {
    pub train: EntropyProfile,
    pub test: EntropyProfile,
}

impl EntropyGap {
    /// Gap over noise positions; analytically `H(p_test) - H(p_train)`.
    pub fn noise_bits(&self) -> f64 {
        self.test.noise_bits - self.train.noise_bits
    }

    /// Gap over all positions; analytically `(1 - 1/C)` times the above.
    pub fn all_bits(&self) -> f64 {
        self.test.all_bits - self.train.all_bits
    }
}

pub fn skewed_entropy_gap(spec: &SkewSpec) -> Result<EntropyGap> {
    Ok(EntropyGap {
        train: entropy_profile(spec, skewed_records(spec, Split::Train)?)?,
        test: entropy_profile(spec, skewed_records(spec, Split::Test)?)?,
    })
}

/// Unbalanced binary carts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartSpec {
    pub classes: usize,
    pub records: usize,
    pub width: usize,
    /// Class `r` (0-based) gets weight `(r + 1)^-gamma`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Probability that a record copies its class prototype bit; otherwise
    /// the bit is a fair coin.
    #[serde(default = "default_strength")]
    pub strength: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_gamma() -> f64 {
    1.0
}
fn default_strength() -> f64 {
    0.6
}

impl CartSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidParameter("need at least 2 classes".into()));
        }
        if self.width < self.classes {
            return Err(Error::InvalidParameter(format!(
                "width {} smaller than class count {}",
                self.width, self.classes
            )));
        }
        if self.records < self.classes {
            return Err(Error::Capacity {
                needed: self.classes,
                available: self.records,
            });
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(
                "imbalance exponent must be >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(Error::InvalidParameter(
                "pattern strength must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Splits `total` proportionally to `weights` by largest remainder; ties in
/// the remainder go to the lower index.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = total - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

pub fn cart_class_sizes(spec: &CartSpec) -> Vec<usize> {
    let weights: Vec<f64> = (1..=spec.classes)
        .map(|r| (r as f64).powf(-spec.gamma))
        .collect();
    apportion(spec.records, &weights)
}

pub fn gen_unbalanced_carts(spec: &CartSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = derived(spec.seed, TRAIN_STREAM);
    let prototypes: Vec<Vec<bool>> = (0..spec.classes)
        .map(|_| (0..spec.width).map(|_| rng.random()).collect())
        .collect();
    let mut labels: Vec<usize> = cart_class_sizes(spec)
        .into_iter()
        .enumerate()
        .flat_map(|(c, n)| std::iter::repeat(c).take(n))
        .collect();
    labels.shuffle(&mut rng);
    let mut features = Vec::with_capacity(spec.records * spec.width);
    for &c in &labels {
        for &proto in &prototypes[c] {
            let bit = if rng.random::<f64>() < spec.strength {
                proto
            } else {
                rng.random()
            };
            features.push(f64::from(u8::from(bit)));
        }
    }
    Dataset::new(
        features,
        spec.width,
        labels,
        spec.classes,
        FeatureKind::Binary,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    HorizontalBars,
    VerticalBars,
    Diagonal,
    Square,
    Cross,
    Border,
    Checker,
    Circle,
}

impl Pattern {
    pub const ALL: [Pattern; 8] = [
        Pattern::HorizontalBars,
        Pattern::VerticalBars,
        Pattern::Diagonal,
        Pattern::Square,
        Pattern::Cross,
        Pattern::Border,
        Pattern::Checker,
        Pattern::Circle,
    ];

    /// Whether pixel `(r, c)` of a `side x side` canvas is lit.
    fn lit(self, r: usize, c: usize, side: usize) -> bool {
        let q = side / 4;
        match self {
            Pattern::HorizontalBars => (r / 2) % 2 == 0,
            Pattern::VerticalBars => (c / 2) % 2 == 0,
            Pattern::Diagonal => r.abs_diff(c) <= side / 8,
            Pattern::Square => (q..side - q).contains(&r) && (q..side - q).contains(&c),
            Pattern::Cross => r.abs_diff(side / 2) <= side / 8 || c.abs_diff(side / 2) <= side / 8,
            Pattern::Border => r < 2 || c < 2 || r >= side - 2 || c >= side - 2,
            Pattern::Checker => ((r / q.max(1)) + (c / q.max(1))) % 2 == 0,
            Pattern::Circle => {
                let centre = (side as f64 - 1.0) / 2.0;
                let d = ((r as f64 - centre).powi(2) + (c as f64 - centre).powi(2)).sqrt();
                (d - side as f64 / 3.0).abs() < 1.5
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraySpec {
    pub count: usize,
    pub side: usize,
    pub patterns: Vec<Pattern>,
    /// Standard deviation of additive Gaussian pixel noise.
    #[serde(default = "default_pixel_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_pixel_noise() -> f64 {
    40.0
}

/// Images of uniformly drawn pattern classes: lit pixels near 200, dark near
/// 40, plus noise, clamped to [0, 255].
pub fn gen_gray_images(spec: &GraySpec) -> Result<Dataset> {
    if spec.side < 8 {
        return Err(Error::InvalidParameter(format!(
            "image side must be at least 8, got {}",
            spec.side
        )));
    }
    if spec.patterns.len() < 2 {
        return Err(Error::InvalidParameter("need at least 2 patterns".into()));
    }
    let noise = Normal::new(0.0, spec.noise)
        .map_err(|e| Error::InvalidParameter(format!("pixel noise: {e}")))?;
    let mut rng = derived(spec.seed, TRAIN_STREAM);
    let side = spec.side;
    let mut features = Vec::with_capacity(spec.count * side * side);
    let mut labels = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let c = rng.random_range(0..spec.patterns.len());
        let bright = rng.random_range(170.0..230.0);
        let dark = rng.random_range(20.0..60.0);
        for r in 0..side {
            for col in 0..side {
                let base = if spec.patterns[c].lit(r, col, side) {
                    bright
                } else {
                    dark
                };
                let v: f64 = base + noise.sample(&mut rng);
                features.push(v.clamp(0.0, 255.0));
            }
        }
        labels.push(c);
    }
    let names = spec
        .patterns
        .iter()
        .map(|p| {
            serde_json::to_value(p)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default()
        })
        .collect();
    Dataset::with_label_names(
        features,
        side * side,
        labels,
        FeatureKind::Image { side },
        names,
    )
}
