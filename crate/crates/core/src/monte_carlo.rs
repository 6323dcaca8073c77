//! Monte Carlo estimation of output mean, covariance and mean squared error.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::pairwise_sum;
use crate::net::Network;
use crate::noise::{noisy_forward, NoiseProfile};
use crate::rng::RngStream;

/// A randomized map `x ↦ output`, driven entirely by the given stream.
pub trait NoisyEvaluator: Sync {
    fn evaluate(&self, x: &DVector<f64>, rng: &RngStream) -> Result<DVector<f64>>;
}

impl<F> NoisyEvaluator for F
where
    F: Fn(&DVector<f64>, &RngStream) -> Result<DVector<f64>> + Sync,
{
    fn evaluate(&self, x: &DVector<f64>, rng: &RngStream) -> Result<DVector<f64>> {
        self(x, rng)
    }
}

/// The unmodified noisy network.
#[derive(Debug, Clone, Copy)]
pub struct PlainOnn<'a> {
    pub net: &'a Network,
    pub profile: &'a NoiseProfile,
}

impl NoisyEvaluator for PlainOnn<'_> {
    fn evaluate(&self, x: &DVector<f64>, rng: &RngStream) -> Result<DVector<f64>> {
        noisy_forward(self.net, self.profile, x, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleStats {
    pub n: usize,
    pub mean: DVector<f64>,
    /// Unbiased (divisor `n − 1`).
    pub covariance: DMatrix<f64>,
    /// Mean of `‖output − reference‖²` over trials.
    pub mse_vs_reference: f64,
}

impl SampleStats {
    /// Two-pass statistics of an ordered sample with pairwise summation.
    pub fn from_samples(samples: &[DVector<f64>], reference: &DVector<f64>) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n}")));
        }
        let d = reference.len();
        if let Some(bad) = samples.iter().find(|s| s.len() != d) {
            return Err(Error::dim("sample vs reference", d, bad.len()));
        }
        let nf = n as f64;
        let mean = DVector::from_fn(d, |i, _| pairwise_sum(0, n, &|t| samples[t][i]) / nf);
        let mut covariance = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let c = pairwise_sum(0, n, &|t| (samples[t][i] - mean[i]) * (samples[t][j] - mean[j]))
                    / (nf - 1.0);
                covariance[(i, j)] = c;
                covariance[(j, i)] = c;
            }
        }
        let mse_vs_reference = pairwise_sum(0, n, &|t| (&samples[t] - reference).norm_squared()) / nf;
        Ok(SampleStats {
            n,
            mean,
            covariance,
            mse_vs_reference,
        })
    }

    pub fn trace(&self) -> f64 {
        self.covariance.trace()
    }
}

/// Stream of trial `t` under `seed`.
pub fn trial_stream(seed: u64, trial: usize) -> RngStream {
    RngStream::new(seed).child(trial as u64)
}

/// Raw outputs of `trials` evaluations, in trial order.
pub fn sample_outputs<E: NoisyEvaluator + ?Sized>(
    evaluator: &E,
    x: &DVector<f64>,
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<DVector<f64>>> {
    exec.try_map(trials, |t| evaluator.evaluate(x, &trial_stream(seed, t)))
}

/// Runs `trials` independent evaluations on per-trial streams.
pub fn monte_carlo<E: NoisyEvaluator + ?Sized>(
    evaluator: &E,
    x: &DVector<f64>,
    reference: &DVector<f64>,
    trials: usize,
    seed: u64,
) -> Result<SampleStats> {
    monte_carlo_with(evaluator, x, reference, trials, seed, Exec::default())
}

pub fn monte_carlo_with<E: NoisyEvaluator + ?Sized>(
    evaluator: &E,
    x: &DVector<f64>,
    reference: &DVector<f64>,
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<SampleStats> {
    if trials < 2 {
        return Err(Error::InvalidArgument(format!("trials must be at least 2, got {trials}")));
    }
    let samples = sample_outputs(evaluator, x, trials, seed, exec)?;
    SampleStats::from_samples(&samples, reference)
}
