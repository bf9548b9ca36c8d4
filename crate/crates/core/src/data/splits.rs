//! Target / shadow index layouts for membership-inference experiments.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::generators::apportion;
use crate::error::{Error, Result};
use crate::rng::{derived, seeded};

/// One shadow model's member / non-member indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Record indices into one dataset.
///
/// Target train and test are disjoint and of equal size. Every shadow pair is
/// drawn from the pool (records outside both target sets); pairs may overlap
/// each other but a shadow's train and test never do.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackDataLayout {
    pub target_train: Vec<usize>,
    pub target_test: Vec<usize>,
    pub pool: Vec<usize>,
    pub shadows: Vec<ShadowSplit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Records in each of target train and target test.
    pub n: usize,
    pub shadows: usize,
    /// Records in each shadow train and shadow test; defaults to `n`.
    pub shadow_size: Option<usize>,
    /// Keep class proportions of the full dataset in the target sets.
    pub stratified: bool,
    pub seed: u64,
}

impl SplitOptions {
    pub fn new(n: usize, shadows: usize, seed: u64) -> Self {
        Self {
            n,
            shadows,
            shadow_size: None,
            stratified: false,
            seed,
        }
    }
}

const TARGET_STREAM: u64 = 10;
const SHADOW_STREAM: u64 = 11;

pub fn partition_attack_data(data: &Dataset, opts: &SplitOptions) -> Result<AttackDataLayout> {
    if opts.n == 0 {
        return Err(Error::InvalidParameter(
            "target size must be positive".into(),
        ));
    }
    let shadow_size = opts.shadow_size.unwrap_or(opts.n);
    let needed = 2 * opts.n + if opts.shadows > 0 { 2 * shadow_size } else { 0 };
    if data.len() < needed {
        return Err(Error::Capacity {
            needed,
            available: data.len(),
        });
    }

    let mut rng = derived(opts.seed, TARGET_STREAM);
    let (target_train, target_test, pool) = if opts.stratified {
        stratified_targets(data, opts.n, &mut rng)
    } else {
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut rng);
        let pool = idx.split_off(2 * opts.n);
        let test = idx.split_off(opts.n);
        (idx, test, pool)
    };

    Ok(with_shadows(
        target_train,
        target_test,
        pool,
        opts,
        shadow_size,
    ))
}

fn with_shadows(
    target_train: Vec<usize>,
    target_test: Vec<usize>,
    mut pool: Vec<usize>,
    opts: &SplitOptions,
    shadow_size: usize,
) -> AttackDataLayout {
    pool.sort_unstable();
    let mut shadows = Vec::with_capacity(opts.shadows);
    for s in 0..opts.shadows {
        let mut srng = derived(opts.seed, SHADOW_STREAM.wrapping_add((s as u64) << 8));
        let mut draw = pool.clone();
        draw.shuffle(&mut srng);
        draw.truncate(2 * shadow_size);
        let test = draw.split_off(shadow_size);
        shadows.push(ShadowSplit { train: draw, test });
    }
    AttackDataLayout {
        target_train,
        target_test,
        pool,
        shadows,
    }
}

/// Layout over two domains stored back to back: records `0..train_len`
/// come from the training distribution and the next `test_len` from the
/// test distribution. Target train draws from the first domain, target test
/// from the second, and the leftovers of both form the shadow pool.
pub fn partition_domains(
    train_len: usize,
    test_len: usize,
    opts: &SplitOptions,
) -> Result<AttackDataLayout> {
    if opts.n == 0 {
        return Err(Error::InvalidParameter(
            "target size must be positive".into(),
        ));
    }
    let shadow_size = opts.shadow_size.unwrap_or(opts.n);
    let pool_needed = if opts.shadows > 0 { 2 * shadow_size } else { 0 };
    let available = train_len.min(test_len);
    if available < opts.n || train_len + test_len < 2 * opts.n + pool_needed {
        return Err(Error::Capacity {
            needed: 2 * opts.n + pool_needed,
            available: train_len + test_len,
        });
    }
    let mut rng = derived(opts.seed, TARGET_STREAM);
    let mut a: Vec<usize> = (0..train_len).collect();
    let mut b: Vec<usize> = (train_len..train_len + test_len).collect();
    a.shuffle(&mut rng);
    b.shuffle(&mut rng);
    let mut pool = a.split_off(opts.n);
    pool.extend(b.split_off(opts.n));
    Ok(with_shadows(a, b, pool, opts, shadow_size))
}

type Targets = (Vec<usize>, Vec<usize>, Vec<usize>);

fn stratified_targets(data: &Dataset, n: usize, rng: &mut crate::rng::JobRng) -> Targets {
    let counts = data.class_counts();
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let quota = apportion(n, &weights);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for i in 0..data.len() {
        by_class[data.label(i)].push(i);
    }
    let (mut train, mut test, mut pool) = (Vec::new(), Vec::new(), Vec::new());
    for (c, mut idx) in by_class.into_iter().enumerate() {
        idx.shuffle(rng);
        // A class too small for both quotas gives what it has.
        let q = quota[c].min(idx.len() / 2);
        test.extend(idx.drain(q..2 * q));
        train.extend(idx.drain(..q));
        pool.extend(idx);
    }
    // Top up from the pool when small classes fell short.
    pool.shuffle(rng);
    while train.len() < n {
        train.push(pool.pop().expect("capacity checked"));
    }
    while test.len() < n {
        test.push(pool.pop().expect("capacity checked"));
    }
    train.shuffle(rng);
    test.shuffle(rng);
    (train, test, pool)
}

impl AttackDataLayout {
    /// Named index sets: `target_train`, `target_test`, `pool`,
    /// `shadow_<k>_train`, `shadow_<k>_test`.
    pub fn to_named(&self) -> BTreeMap<String, Vec<usize>> {
        let mut m = BTreeMap::new();
        m.insert("target_train".into(), self.target_train.clone());
        m.insert("target_test".into(), self.target_test.clone());
        m.insert("pool".into(), self.pool.clone());
        for (k, s) in self.shadows.iter().enumerate() {
            m.insert(format!("shadow_{k}_train"), s.train.clone());
            m.insert(format!("shadow_{k}_test"), s.test.clone());
        }
        m
    }

    pub fn from_named(mut m: BTreeMap<String, Vec<usize>>) -> Result<Self> {
        let mut take = |name: &str| {
            m.remove(name)
                .ok_or_else(|| Error::Config(format!("split file lacks `{name}`")))
        };
        let target_train = take("target_train")?;
        let target_test = take("target_test")?;
        let pool = take("pool")?;
        let mut shadows = Vec::new();
        while let Ok(train) = take(&format!("shadow_{}_train", shadows.len())) {
            let test = take(&format!("shadow_{}_test", shadows.len()))?;
            shadows.push(ShadowSplit { train, test });
        }
        Ok(Self {
            target_train,
            target_test,
            pool,
            shadows,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_named()).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_named(m)
    }

    /// Checks the disjointness rules against a dataset of `len` records.
    pub fn validate(&self, len: usize) -> Result<()> {
        let mut owner = vec![0u8; len];
        for (set, tag) in [
            (&self.target_train, 1u8),
            (&self.target_test, 2),
            (&self.pool, 3),
        ] {
            for &i in set {
                if i >= len {
                    return Err(Error::InvalidParameter(format!(
                        "split index {i} out of range for {len} records"
                    )));
                }
                if owner[i] != 0 {
                    return Err(Error::InvalidParameter(format!(
                        "record {i} appears in more than one of target train / target test / pool"
                    )));
                }
                owner[i] = tag;
            }
        }
        if self.target_train.len() != self.target_test.len() {
            return Err(Error::InvalidParameter(
                "target train and test differ in size".into(),
            ));
        }
        for (k, s) in self.shadows.iter().enumerate() {
            let mut seen = std::collections::HashSet::new();
            for &i in s.train.iter().chain(&s.test) {
                if i >= len || owner[i] != 3 {
                    return Err(Error::InvalidParameter(format!(
                        "shadow {k} uses record {i} from outside the pool"
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::InvalidParameter(format!(
                        "shadow {k} uses record {i} twice"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Partitions `data` and optionally persists the index sets as JSON.
pub fn make_splits(
    data: &Dataset,
    opts: &SplitOptions,
    path: Option<&Path>,
) -> Result<AttackDataLayout> {
    let layout = partition_attack_data(data, opts)?;
    if let Some(p) = path {
        layout.save(p)?;
    }
    Ok(layout)
}

/// Random halves of `indices` (first has `round(len * fraction)` entries).
pub fn split_fraction(indices: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut v = indices.to_vec();
    v.shuffle(&mut seeded(seed));
    let k = ((v.len() as f64) * fraction).round() as usize;
    let rest = v.split_off(k.min(v.len()));
    (v, rest)
}
