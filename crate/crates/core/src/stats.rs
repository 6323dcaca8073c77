//! Confidence intervals.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.high - self.low)
    }
}

/// Two-sided standard normal quantile for `confidence ∈ (0, 1)`.
pub fn z_value(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(0.5 + confidence / 2.0))
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson(successes: usize, n: usize, confidence: f64) -> Result<Interval> {
    if n == 0 || successes > n {
        return Err(Error::InvalidArgument(format!("invalid proportion {successes}/{n}")));
    }
    let z = z_value(confidence)?;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Ok(Interval {
        estimate: p,
        low: (center - half).max(0.0),
        high: (center + half).min(1.0),
    })
}

/// Normal-approximation interval for the mean of `values`.
pub fn mean_interval(values: &[f64], confidence: f64) -> Result<Interval> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 values, got {n}")));
    }
    let z = z_value(confidence)?;
    let nf = n as f64;
    let mean = crate::linalg::pairwise_sum(0, n, &|i| values[i]) / nf;
    let var = crate::linalg::pairwise_sum(0, n, &|i| (values[i] - mean).powi(2)) / (nf - 1.0);
    let half = z * (var / nf).sqrt();
    Ok(Interval {
        estimate: mean,
        low: mean - half,
        high: mean + half,
    })
}
