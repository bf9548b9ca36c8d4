//! Local randomizers and noise calibration.
//!
//! * Randomized response on bits: keep the true bit with probability `rho`,
//!   otherwise answer with a fair coin. The per-bit budget is
//!   `ln((1 + rho) / (1 - rho))`.
//! * Laplace pixelation of grayscale images with scale
//!   `255 * m / (b^2 * eps)`.
//! * Edge-level randomized response on adjacency matrices.
//! * Closed-form Gaussian / Laplace calibration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Randomized-response parameters: retention probability and the budget it
/// yields per invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrParams {
    retention: f64,
    epsilon: f64,
}

impl RrParams {
    pub fn from_retention(rho: f64) -> Result<Self> {
        Ok(Self {
            retention: rho,
            epsilon: rr_budget(rho)?,
        })
    }

    pub fn from_budget(epsilon: f64) -> Result<Self> {
        Ok(Self {
            retention: rr_retention(epsilon)?,
            epsilon,
        })
    }

    pub fn retention(&self) -> f64 {
        self.retention
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

fn check_retention(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!(
            "retention probability must lie in [0, 1), got {rho}"
        )));
    }
    Ok(())
}

/// Per-bit LDP budget of randomized response with retention `rho`:
/// `ln(P[yes|yes] / P[yes|no])`.
pub fn rr_budget(rho: f64) -> Result<f64> {
    check_retention(rho)?;
    // ln((rho + (1-rho)/2) / ((1-rho)/2)) == ln(1+rho) - ln(1-rho)
    Ok(rho.ln_1p() - (-rho).ln_1p())
}

/// Retention probability that spends exactly `epsilon` per bit.
pub fn rr_retention(epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "per-bit budget must be finite and non-negative, got {epsilon}"
        )));
    }
    // (e^eps - 1) / (e^eps + 1)
    Ok((epsilon / 2.0).tanh())
}

/// Keeps `bit` with probability `rho`, otherwise returns a fair coin.
pub fn rr_perturb_bit<R: Rng + ?Sized>(bit: bool, rho: f64, rng: &mut R) -> Result<bool> {
    check_retention(rho)?;
    Ok(perturb_bit_unchecked(bit, rho, rng))
}

fn perturb_bit_unchecked<R: Rng + ?Sized>(bit: bool, rho: f64, rng: &mut R) -> bool {
    if rng.random::<f64>() < rho {
        bit
    } else {
        rng.random::<bool>()
    }
}

/// Randomizes every bit of a binary record independently.
///
/// Returns the perturbed record and the composed budget `d * eps_i`.
pub fn ldp_perturb_record<R: Rng + ?Sized>(
    bits: &[f64],
    rho: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let per_bit = rr_budget(rho)?;
    if let Some(pos) = bits.iter().position(|&b| b != 0.0 && b != 1.0) {
        return Err(Error::InvalidParameter(format!(
            "feature {pos} is {}, randomized response needs binary input",
            bits[pos]
        )));
    }
    let out = bits
        .iter()
        .map(|&b| {
            if perturb_bit_unchecked(b == 1.0, rho, rng) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok((out, compose_local_budget(&vec![per_bit; bits.len()])?))
}

/// Applies [`ldp_perturb_record`] to every record; labels are untouched.
/// Returns the perturbed dataset and the per-record composed budget.
pub fn ldp_perturb_dataset<R: Rng + ?Sized>(
    data: &Dataset,
    rho: f64,
    rng: &mut R,
) -> Result<(Dataset, f64)> {
    let mut features = Vec::with_capacity(data.features().len());
    let mut epsilon = 0.0;
    for i in 0..data.len() {
        let (rec, eps) = ldp_perturb_record(data.record(i), rho, rng)?;
        features.extend(rec);
        epsilon = eps;
    }
    if data.is_empty() {
        epsilon = compose_local_budget(&vec![rr_budget(rho)?; data.width()])?;
    }
    Ok((data.with_features(features)?, epsilon))
}

/// Sequential composition of local randomizers: the budgets add up.
///
/// The sum is exactly rounded (Shewchuk partials), so the result does not
/// depend on the order of the list.
pub fn compose_local_budget(eps: &[f64]) -> Result<f64> {
    if let Some(&bad) = eps.iter().find(|&&e| !(e >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "local budgets must be non-negative, got {bad}"
        )));
    }
    Ok(exact_sum(eps.iter().copied()))
}

fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // Round the partials to one double (msum/fsum final step).
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Laplace pixelation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelationParams {
    /// Neighborhood `m`, in pixels.
    pub neighborhood: f64,
    /// Cell width `b`; 1 disables coarsening.
    pub cell: usize,
    /// Per-pixel budget.
    pub epsilon: f64,
}

impl PixelationParams {
    pub fn new(neighborhood: f64, cell: usize, epsilon: f64) -> Result<Self> {
        let p = Self {
            neighborhood,
            cell,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.neighborhood > 0.0 && self.neighborhood.is_finite()) {
            return Err(Error::InvalidParameter(
                "pixelation neighborhood must be positive".into(),
            ));
        }
        if self.cell == 0 {
            return Err(Error::InvalidParameter(
                "pixelation cell width must be at least 1".into(),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(
                "pixelation budget must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Laplace scale `255 * m / (b^2 * eps)`.
    pub fn scale(&self) -> f64 {
        255.0 * self.neighborhood / ((self.cell * self.cell) as f64 * self.epsilon)
    }
}

/// Draws from Laplace(0, scale) by inverting the CDF.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    // u in (-1/2, 1/2]; the open end keeps ln finite.
    let u: f64 = 0.5 - rng.random::<f64>();
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Pixelates a grayscale image: mean-coarsen into `b x b` cells, add
/// Laplace noise per cell, clamp to [0, 255].
pub fn pixelate_image<R: Rng + ?Sized>(
    img: &Matrix,
    params: &PixelationParams,
    rng: &mut R,
) -> Result<Matrix> {
    params.validate()?;
    if let Some(&v) = img
        .as_slice()
        .iter()
        .find(|&&v| !(0.0..=255.0).contains(&v))
    {
        return Err(Error::InvalidParameter(format!(
            "pixel value {v} outside the grayscale range [0, 255]"
        )));
    }
    let b = params.cell;
    let (rows, cols) = (img.rows(), img.cols());
    if b > rows || b > cols {
        return Err(Error::InvalidParameter(format!(
            "cell width {b} exceeds the {rows}x{cols} image"
        )));
    }
    if rows % b != 0 || cols % b != 0 {
        return Err(Error::InvalidParameter(format!(
            "cell width {b} does not tile the {rows}x{cols} image"
        )));
    }
    let scale = params.scale();
    let mut out = Matrix::zeros(rows, cols);
    for cr in (0..rows).step_by(b) {
        for cc in (0..cols).step_by(b) {
            let mut mean = 0.0;
            for r in cr..cr + b {
                mean += img.row(r)[cc..cc + b].iter().sum::<f64>();
            }
            mean /= (b * b) as f64;
            let noisy = (mean + sample_laplace(scale, rng)).clamp(0.0, 255.0);
            for r in cr..cr + b {
                out.row_mut(r)[cc..cc + b]
                    .iter_mut()
                    .for_each(|p| *p = noisy);
            }
        }
    }
    Ok(out)
}

/// Pixelates every image of an image dataset.
pub fn pixelate_dataset<R: Rng + ?Sized>(
    data: &Dataset,
    params: &PixelationParams,
    rng: &mut R,
) -> Result<Dataset> {
    let crate::data::FeatureKind::Image { side } = data.kind() else {
        return Err(Error::InvalidParameter(
            "pixelation needs an image dataset".into(),
        ));
    };
    let mut features = Vec::with_capacity(data.features().len());
    for i in 0..data.len() {
        let img = Matrix::from_vec(side, side, data.record(i).to_vec())?;
        features.extend(pixelate_image(&img, params, rng)?.into_vec());
    }
    data.with_features(features)
}

/// Square 0/1 adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    cells: Vec<u8>,
}

impl Adjacency {
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut cells = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape(format!(
                    "adjacency row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(&v) = row.iter().find(|&&v| v > 1) {
                return Err(Error::InvalidParameter(format!(
                    "adjacency row {i} contains {v}, expected 0 or 1"
                )));
            }
            cells.extend_from_slice(row);
        }
        Ok(Self { n, cells })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.cells[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: u8) {
        self.cells[i * self.n + j] = v;
    }

    pub fn degree(&self, i: usize) -> usize {
        self.cells[i * self.n..(i + 1) * self.n]
            .iter()
            .filter(|&&v| v == 1)
            .count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.cells
            .chunks(self.n.max(1))
            .map(<[u8]>::to_vec)
            .collect()
    }
}

/// Edge-level randomized response.
///
/// Each upper-triangle entry goes through randomized response and is
/// mirrored; the diagonal is cleared; any node left without edges is joined
/// to a uniformly chosen partner.
pub fn edge_rr_adjacency<R: Rng + ?Sized>(
    adj: &Adjacency,
    rho: f64,
    rng: &mut R,
) -> Result<Adjacency> {
    check_retention(rho)?;
    let n = adj.n;
    let mut out = Adjacency {
        n,
        cells: vec![0; n * n],
    };
    for i in 0..n {
        for j in i + 1..n {
            let v = u8::from(perturb_bit_unchecked(adj.get(i, j) == 1, rho, rng));
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    if n >= 2 {
        for i in 0..n {
            if out.degree(i) == 0 {
                let mut partner = rng.random_range(0..n - 1);
                if partner >= i {
                    partner += 1;
                }
                out.set(i, partner, 1);
                out.set(partner, i, 1);
            }
        }
    }
    Ok(out)
}

/// Result of calibrating a central mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibration {
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: f64,
    /// Gaussian standard deviation or Laplace scale.
    pub scale: f64,
}

/// Smallest Gaussian sigma satisfying `sigma >= sqrt(2 ln(1.25/delta)) * sensitivity / eps`.
///
/// The classical bound only holds for `eps` in (0, 1).
pub fn gaussian_sigma_for(epsilon: f64, delta: f64, sensitivity: f64) -> Result<NoiseCalibration> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Gaussian mechanism calibration needs eps in (0, 1), got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(Error::InvalidParameter(
            "sensitivity must be positive".into(),
        ));
    }
    let c = (2.0 * (1.25 / delta).ln()).sqrt();
    Ok(NoiseCalibration {
        epsilon,
        delta,
        sensitivity,
        scale: c * sensitivity / epsilon,
    })
}

/// Laplace scale `sensitivity / eps` for pure eps-DP.
pub fn laplace_scale_for(epsilon: f64, sensitivity: f64) -> Result<NoiseCalibration> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eps must be positive, got {epsilon}"
        )));
    }
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(Error::InvalidParameter(
            "sensitivity must be positive".into(),
        ));
    }
    Ok(NoiseCalibration {
        epsilon,
        delta: 0.0,
        sensitivity,
        scale: sensitivity / epsilon,
    })
}
