//! Rényi-DP accounting for the subsampled Gaussian mechanism.
//!
//! For sampling ratio `q` and noise multiplier `z`, one step at order `a`
//! costs `ln(A_a) / (a - 1)` where `A_a = E_{x ~ N(0, z^2)}[(1 - q + q *
//! exp((2x - 1) / (2 z^2)))^a]`. Integer orders use the finite binomial
//! expansion; fractional orders use the two-sided erfc series. Steps add up
//! per order and the total converts to `(eps, delta)` via
//! `eps = min_a T * rdp(a) + ln(1/delta) / (a - 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orders `1.1, 1.2, ..., 10.9` followed by the integers `11..=256`.
pub fn default_orders() -> Vec<f64> {
    (11..110)
        .map(|k| k as f64 / 10.0)
        .chain((11..=256).map(f64::from))
        .collect()
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(e^a - e^b)` for `a >= b`.
fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a <= b {
        // Cancellation down to nothing; the caller's terms are rounding noise.
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

fn log_erfc(x: f64) -> f64 {
    if x < 25.0 {
        libm::erfc(x).ln()
    } else {
        // Asymptotic expansion; erfc itself goes subnormal near x = 26.5.
        let x2 = x * x;
        -std::f64::consts::PI.ln() / 2.0 - x.ln() - x2 - 0.5 / x2 + 0.625 / (x2 * x2)
            - 37.0 / 24.0 / (x2 * x2 * x2)
            + 353.0 / 64.0 / (x2 * x2 * x2 * x2)
    }
}

fn ln_binom(n: u64, k: u64) -> f64 {
    let lg = |v: u64| libm::lgamma(v as f64 + 1.0);
    lg(n) - lg(k) - lg(n - k)
}

fn log_a_int(q: f64, z: f64, alpha: u64) -> f64 {
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let mut acc = f64::NEG_INFINITY;
    for k in 0..=alpha {
        let kf = k as f64;
        let term = ln_binom(alpha, k)
            + kf * lq
            + (alpha - k) as f64 * l1q
            + (kf * kf - kf) / (2.0 * z * z);
        acc = log_add(acc, term);
    }
    acc
}

fn log_a_frac(q: f64, z: f64, alpha: f64) -> f64 {
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let z0 = z * z * (1.0 / q - 1.0).ln() + 0.5;
    let s2 = std::f64::consts::SQRT_2 * z;
    let (mut log_a0, mut log_a1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut coef = 1.0f64;
    for i in 0..100_000u32 {
        let fi = f64::from(i);
        if i > 0 {
            coef *= (alpha - fi + 1.0) / fi;
        }
        if coef == 0.0 {
            break;
        }
        let log_coef = coef.abs().ln();
        let j = alpha - fi;
        let log_t0 = log_coef + fi * lq + j * l1q;
        let log_t1 = log_coef + j * lq + fi * l1q;
        let log_e0 = 0.5f64.ln() + log_erfc((fi - z0) / s2);
        let log_e1 = 0.5f64.ln() + log_erfc((z0 - j) / s2);
        let log_s0 = log_t0 + (fi * fi - fi) / (2.0 * z * z) + log_e0;
        let log_s1 = log_t1 + (j * j - j) / (2.0 * z * z) + log_e1;
        if coef > 0.0 {
            log_a0 = log_add(log_a0, log_s0);
            log_a1 = log_add(log_a1, log_s1);
        } else {
            log_a0 = log_sub(log_a0, log_s0);
            log_a1 = log_sub(log_a1, log_s1);
        }
        if log_s0.max(log_s1) < -30.0 {
            break;
        }
    }
    log_add(log_a0, log_a1)
}

/// Per-step RDP of the subsampled Gaussian mechanism at order `alpha`.
///
/// Returns `f64::INFINITY` when `z == 0` (no noise, no privacy) and 0 when
/// `q == 0`.
pub fn rdp_subsampled_gaussian(q: f64, z: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "sampling ratio must lie in [0, 1], got {q}"
        )));
    }
    if !(z >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise multiplier must be non-negative, got {z}"
        )));
    }
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Rényi order must be finite and > 1, got {alpha}"
        )));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if z == 0.0 {
        return Ok(f64::INFINITY);
    }
    if q == 1.0 {
        return Ok(alpha / (2.0 * z * z));
    }
    let log_a = if alpha.fract() == 0.0 {
        log_a_int(q, z, alpha as u64)
    } else {
        log_a_frac(q, z, alpha)
    };
    Ok((log_a / (alpha - 1.0)).max(0.0))
}

/// Converted guarantee at a fixed delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpent {
    pub epsilon: f64,
    pub delta: f64,
    /// Order attaining the minimum.
    pub order: f64,
}

/// Running RDP totals for one training job.
#[derive(Debug, Clone, PartialEq)]
pub struct RdpAccountant {
    q: f64,
    z: f64,
    steps: u64,
    orders: Vec<f64>,
    per_step: Vec<f64>,
}

impl RdpAccountant {
    pub fn new(q: f64, z: f64, orders: Vec<f64>) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::InvalidParameter("empty Rényi order grid".into()));
        }
        if q <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sampling ratio must lie in (0, 1], got {q}"
            )));
        }
        let per_step = orders
            .iter()
            .map(|&a| rdp_subsampled_gaussian(q, z, a))
            .collect::<Result<_>>()?;
        Ok(Self {
            q,
            z,
            steps: 0,
            orders,
            per_step,
        })
    }

    pub fn with_default_orders(q: f64, z: f64) -> Result<Self> {
        Self::new(q, z, default_orders())
    }

    pub fn sampling_ratio(&self) -> f64 {
        self.q
    }

    pub fn noise_multiplier(&self) -> f64 {
        self.z
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn record_steps(&mut self, steps: u64) {
        self.steps += steps;
    }

    /// Accumulated RDP per order.
    pub fn rdp(&self) -> Vec<f64> {
        self.per_step.iter().map(|&r| self.total(r)).collect()
    }

    fn total(&self, per_step: f64) -> f64 {
        // Zero steps cost nothing even when a single step is unbounded.
        if self.steps == 0 {
            0.0
        } else {
            per_step * self.steps as f64
        }
    }

    pub fn spent(&self, delta: f64) -> Result<PrivacySpent> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        let log_inv_delta = -delta.ln();
        let mut best = PrivacySpent {
            epsilon: f64::INFINITY,
            delta,
            order: self.orders[0],
        };
        for (&a, &r) in self.orders.iter().zip(&self.per_step) {
            let eps = self.total(r) + log_inv_delta / (a - 1.0);
            if eps < best.epsilon {
                best.epsilon = eps;
                best.order = a;
            }
        }
        Ok(best)
    }
}

/// Expected number of lots in `epochs` passes: `ceil(epochs * n / lot)`.
pub fn expected_steps(n: usize, lot: usize, epochs: usize) -> Result<u64> {
    if n == 0 || lot == 0 {
        return Err(Error::InvalidParameter(
            "record count and lot size must be positive".into(),
        ));
    }
    if lot > n {
        return Err(Error::InvalidParameter(format!(
            "lot size {lot} exceeds record count {n}"
        )));
    }
    let num = epochs as u128 * n as u128;
    Ok(num.div_ceil(lot as u128) as u64)
}

/// One-shot accountant query.
pub fn account_training(
    q: f64,
    z: f64,
    steps: u64,
    delta: f64,
    orders: &[f64],
) -> Result<PrivacySpent> {
    let mut acc = RdpAccountant::new(q, z, orders.to_vec())?;
    acc.record_steps(steps);
    acc.spent(delta)
}
