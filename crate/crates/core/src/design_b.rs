//! Combine/split averaging: each layer runs `m` weighted additions in parallel,
//! merges them into one signal, divides by `m` and splits it back into `m`
//! branches that are activated independently.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monte_carlo::NoisyEvaluator;
use crate::net::Network;
use crate::noise::{stream, NoiseProfile};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DesignBSpecRepr", into = "DesignBSpecRepr")]
pub struct DesignBSpec {
    network: Network,
    m: u64,
}

#[derive(Serialize, Deserialize)]
struct DesignBSpecRepr {
    network: Network,
    m: u64,
}

impl TryFrom<DesignBSpecRepr> for DesignBSpec {
    type Error = Error;
    fn try_from(r: DesignBSpecRepr) -> Result<Self> {
        DesignBSpec::new(r.network, r.m)
    }
}

impl From<DesignBSpec> for DesignBSpecRepr {
    fn from(s: DesignBSpec) -> Self {
        DesignBSpecRepr {
            network: s.network,
            m: s.m,
        }
    }
}

impl DesignBSpec {
    pub fn new(network: Network, m: u64) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        Ok(DesignBSpec { network, m })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Output of the combine/split network and the number of weighted additions (`m·L`).
///
/// Branch `j` is modulated from `[MODULATION, j]`; at layer `ℓ` it draws weight
/// noise from `[WEIGHT, ℓ, j]`, split noise from `[SPLIT, ℓ, j]` and activation
/// noise from `[ACTIVATION, ℓ, j]`; the combiner draws once from `[COMBINE, ℓ]`.
/// With `m = 1` and no combine/split noise this is the plain noisy forward pass.
pub fn eval_design_b_counted(
    spec: &DesignBSpec,
    x: &DVector<f64>,
    profile: &NoiseProfile,
    rng: &RngStream,
) -> Result<(DVector<f64>, u64)> {
    let net = &spec.network;
    net.check_input(x)?;
    profile.check_dims(&net.dims())?;
    let m = spec.m;
    let mut additions = 0u64;
    let mut branches: Vec<DVector<f64>> = (0..m)
        .map(|j| {
            let mut h = x.clone();
            profile
                .modulation_source()
                .perturb(&mut h, &mut rng.derive(&[stream::MODULATION, j]));
            h
        })
        .collect();
    for (idx, layer) in net.layers().iter().enumerate() {
        let l = idx as u64 + 1;
        let mut combined: Option<DVector<f64>> = None;
        for (j, h) in branches.iter().enumerate() {
            let mut xi = layer.affine(h);
            profile
                .weight_source(idx + 1)
                .perturb(&mut xi, &mut rng.derive(&[stream::WEIGHT, l, j as u64]));
            additions += 1;
            combined = Some(match combined {
                None => xi,
                Some(sum) => sum + xi,
            });
        }
        let mut y = combined.expect("m is at least 1");
        profile
            .combine_source()
            .perturb(&mut y, &mut rng.derive(&[stream::COMBINE, l]));
        if m > 1 {
            y /= m as f64;
        }
        branches = (0..m)
            .map(|j| {
                let mut z = y.clone();
                profile
                    .split_source()
                    .perturb(&mut z, &mut rng.derive(&[stream::SPLIT, l, j]));
                let mut h = layer.activation.apply(z);
                profile
                    .activation_source(idx + 1)
                    .perturb(&mut h, &mut rng.derive(&[stream::ACTIVATION, l, j]));
                h
            })
            .collect();
    }
    let mut iter = branches.into_iter();
    let first = iter.next().expect("m is at least 1");
    let mut out = iter.fold(first, |acc, h| acc + h);
    if m > 1 {
        out /= m as f64;
    }
    Ok((out, additions))
}

pub fn eval_design_b(
    spec: &DesignBSpec,
    x: &DVector<f64>,
    profile: &NoiseProfile,
    rng: &RngStream,
) -> Result<DVector<f64>> {
    eval_design_b_counted(spec, x, profile, rng).map(|(out, _)| out)
}

#[derive(Debug, Clone, Copy)]
pub struct DesignB<'a> {
    pub spec: &'a DesignBSpec,
    pub profile: &'a NoiseProfile,
}

impl NoisyEvaluator for DesignB<'_> {
    fn evaluate(&self, x: &DVector<f64>, rng: &RngStream) -> Result<DVector<f64>> {
        eval_design_b(self.spec, x, self.profile, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MHeuristic {
    /// `⌈(‖D‖_F‖W‖_F)²⌉`, from the convergence condition of the limit.
    Theoretical,
    /// `⌈(‖D‖_F‖W‖_F/d)²⌉`, the contour observed for scaled identities.
    Empirical,
}

/// Copy count suggested by the Frobenius norms of `D` and `W`; at least 1.
pub fn suggested_m(d_norm: f64, w_norm: f64, variant: MHeuristic, d: usize) -> Result<u64> {
    if !(d_norm >= 0.0 && w_norm >= 0.0) || !d_norm.is_finite() || !w_norm.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "norms must be finite and nonnegative, got {d_norm} and {w_norm}"
        )));
    }
    let product = match variant {
        MHeuristic::Theoretical => d_norm * w_norm,
        MHeuristic::Empirical => {
            if d == 0 {
                return Err(Error::InvalidArgument("dimension must be at least 1".into()));
            }
            d_norm * w_norm / d as f64
        }
    };
    Ok(((product * product).ceil() as u64).max(1))
}
