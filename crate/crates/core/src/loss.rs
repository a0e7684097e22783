//! Pinball loss and the composite point + interval objective.

use serde::{Deserialize, Serialize};

use crate::network::{StepOutput, HEAD_OUTPUTS};
use crate::preprocess::DAY_HOURS;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub q_star: f64,
    pub q_lower: f64,
    pub q_upper: f64,
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { q_star: 0.5, q_lower: 0.05, q_upper: 0.95, gamma: 0.3 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = 0.0 < self.q_lower && self.q_lower < self.q_star && self.q_star < self.q_upper && self.q_upper < 1.0;
        if !ordered {
            return Err(Error::Config(format!(
                "quantile orders must satisfy 0 < q_lower < q_star < q_upper < 1, got {} / {} / {}",
                self.q_lower, self.q_star, self.q_upper
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Nominal miss rate of the interval, `1 - (q_upper - q_lower)`.
    pub fn alpha(&self) -> f64 {
        1.0 - (self.q_upper - self.q_lower)
    }
}

/// `(y - y_hat) q` when `y >= y_hat`, else `(y - y_hat)(q - 1)`.
pub fn pinball(y: f64, y_hat: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::QuantileOrder(q));
    }
    Ok(pinball_unchecked(y, y_hat, q))
}

#[inline]
fn pinball_unchecked(y: f64, y_hat: f64, q: f64) -> f64 {
    let r = y - y_hat;
    if r >= 0.0 {
        r * q
    } else {
        r * (q - 1.0)
    }
}

/// Derivative of [`pinball`] with respect to `y_hat`: `-q` where
/// `y >= y_hat` (the kink takes this branch), `1 - q` otherwise.
#[inline]
pub fn pinball_grad(y: f64, y_hat: f64, q: f64) -> f64 {
    if y >= y_hat {
        -q
    } else {
        1.0 - q
    }
}

fn check_lengths(target: &[f64], out: &StepOutput) -> Result<()> {
    if target.len() != DAY_HOURS || out.point.len() != DAY_HOURS || out.lower.len() != DAY_HOURS || out.upper.len() != DAY_HOURS {
        return Err(Error::Shape("composite loss expects 24-hour target and forecasts".into()));
    }
    Ok(())
}

/// Mean over the 24 hours of
/// `rho(y, point; q*) + gamma (rho(y, lower; q_lower) + rho(y, upper; q_upper))`.
pub fn composite_loss(target: &[f64], out: &StepOutput, cfg: &LossConfig) -> Result<f64> {
    check_lengths(target, out)?;
    let mut total = 0.0;
    for h in 0..DAY_HOURS {
        let y = target[h];
        total += pinball_unchecked(y, out.point[h], cfg.q_star)
            + cfg.gamma * (pinball_unchecked(y, out.lower[h], cfg.q_lower) + pinball_unchecked(y, out.upper[h], cfg.q_upper));
    }
    Ok(total / DAY_HOURS as f64)
}

/// Gradient of [`composite_loss`] w.r.t. the 72 head outputs
/// `[point | lower | upper]`.
pub fn composite_loss_grad(target: &[f64], out: &StepOutput, cfg: &LossConfig) -> Result<Vec<f64>> {
    check_lengths(target, out)?;
    let n = DAY_HOURS as f64;
    let mut g = vec![0.0; HEAD_OUTPUTS];
    for h in 0..DAY_HOURS {
        let y = target[h];
        g[h] = pinball_grad(y, out.point[h], cfg.q_star) / n;
        g[DAY_HOURS + h] = cfg.gamma * pinball_grad(y, out.lower[h], cfg.q_lower) / n;
        g[2 * DAY_HOURS + h] = cfg.gamma * pinball_grad(y, out.upper[h], cfg.q_upper) / n;
    }
    Ok(g)
}
