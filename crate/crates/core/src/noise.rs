//! Additive white Gaussian noise: covariance specifications, noise profiles and
//! the noisy forward pass (modulation → weighted addition → activation).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, matrix_from_rows, matrix_to_rows};
use crate::net::Network;
use crate::rng::RngStream;

/// Path tags for the sub-streams of one evaluation. Layers are numbered from 1.
pub mod stream {
    /// `[MODULATION, copy]`
    pub const MODULATION: u64 = 0;
    /// `[WEIGHT, layer, copy]`
    pub const WEIGHT: u64 = 1;
    /// `[ACTIVATION, layer, copy]`
    pub const ACTIVATION: u64 = 2;
    /// `[COMBINE, layer]`
    pub const COMBINE: u64 = 3;
    /// `[SPLIT, layer, copy]`
    pub const SPLIT: u64 = 4;
}

/// Covariance of a zero-mean Gaussian noise term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CovSpecRepr", into = "CovSpecRepr")]
pub enum CovSpec {
    Zero,
    Isotropic(f64),
    Diagonal(Vec<f64>),
    Full(DMatrix<f64>),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum CovSpecRepr {
    Zero,
    Isotropic(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl TryFrom<CovSpecRepr> for CovSpec {
    type Error = Error;

    fn try_from(r: CovSpecRepr) -> Result<Self> {
        let spec = match r {
            CovSpecRepr::Zero => CovSpec::Zero,
            CovSpecRepr::Isotropic(v) => CovSpec::Isotropic(v),
            CovSpecRepr::Diagonal(v) => CovSpec::Diagonal(v),
            CovSpecRepr::Full(rows) => CovSpec::Full(matrix_from_rows(&rows, "full covariance")?),
        };
        spec.compile()?;
        Ok(spec)
    }
}

impl From<CovSpec> for CovSpecRepr {
    fn from(s: CovSpec) -> Self {
        match s {
            CovSpec::Zero => CovSpecRepr::Zero,
            CovSpec::Isotropic(v) => CovSpecRepr::Isotropic(v),
            CovSpec::Diagonal(v) => CovSpecRepr::Diagonal(v),
            CovSpec::Full(m) => CovSpecRepr::Full(matrix_to_rows(&m)),
        }
    }
}

impl CovSpec {
    /// Intrinsic dimension, if the spec fixes one.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            CovSpec::Zero | CovSpec::Isotropic(_) => None,
            CovSpec::Diagonal(v) => Some(v.len()),
            CovSpec::Full(m) => Some(m.nrows()),
        }
    }

    pub fn check_dim(&self, dim: usize, context: &str) -> Result<()> {
        match self.fixed_dim() {
            Some(d) if d != dim => Err(Error::dim(context.to_string(), dim, d)),
            _ => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CovSpec::Zero => true,
            CovSpec::Isotropic(v) => *v == 0.0,
            CovSpec::Diagonal(v) => v.iter().all(|&x| x == 0.0),
            CovSpec::Full(m) => m.iter().all(|&x| x == 0.0),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        match self {
            CovSpec::Full(m) => {
                (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
            }
            _ => true,
        }
    }

    /// Largest variance on the diagonal (0 for `Zero`).
    pub fn max_variance(&self) -> f64 {
        match self {
            CovSpec::Zero => 0.0,
            CovSpec::Isotropic(v) => *v,
            CovSpec::Diagonal(v) => v.iter().copied().fold(0.0, f64::max),
            CovSpec::Full(m) => m.diagonal().iter().copied().fold(0.0, f64::max),
        }
    }

    /// Dense covariance matrix of size `dim`.
    pub fn matrix(&self, dim: usize) -> Result<DMatrix<f64>> {
        self.check_dim(dim, "covariance matrix")?;
        Ok(match self {
            CovSpec::Zero => DMatrix::zeros(dim, dim),
            CovSpec::Isotropic(v) => DMatrix::identity(dim, dim) * *v,
            CovSpec::Diagonal(v) => linalg::diag_matrix(v),
            CovSpec::Full(m) => m.clone(),
        })
    }

    /// Validates the spec and precomputes its sampling factor.
    pub fn compile(&self) -> Result<NoiseSource> {
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        Ok(match self {
            CovSpec::Zero => NoiseSource::Zero,
            CovSpec::Isotropic(v) => {
                if !nonneg(*v) {
                    return Err(Error::NotPsd(format!("isotropic variance {v} is negative or non-finite")));
                }
                if *v == 0.0 {
                    NoiseSource::Zero
                } else {
                    NoiseSource::Scale(v.sqrt())
                }
            }
            CovSpec::Diagonal(vs) => {
                if let Some(bad) = vs.iter().find(|&&v| !nonneg(v)) {
                    return Err(Error::NotPsd(format!("diagonal variance {bad} is negative or non-finite")));
                }
                if vs.iter().all(|&v| v == 0.0) {
                    NoiseSource::Zero
                } else {
                    NoiseSource::Diagonal(vs.iter().map(|v| v.sqrt()).collect())
                }
            }
            CovSpec::Full(m) => {
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NotPsd("full covariance has non-finite entries".into()));
                }
                if m.iter().all(|&v| v == 0.0) {
                    NoiseSource::Zero
                } else {
                    NoiseSource::Factor(linalg::psd_factor(m)?)
                }
            }
        })
    }
}

/// A validated covariance ready for sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSource {
    Zero,
    Scale(f64),
    Diagonal(Vec<f64>),
    /// Lower-triangular factor `L` with `L Lᵀ = Σ`.
    Factor(DMatrix<f64>),
}

impl NoiseSource {
    pub fn is_zero(&self) -> bool {
        matches!(self, NoiseSource::Zero)
    }

    /// One draw, or `None` for zero noise (no random numbers are consumed).
    pub fn sample(&self, dim: usize, rng: &mut RngStream) -> Option<DVector<f64>> {
        let mut z = || -> f64 { StandardNormal.sample(rng) };
        match self {
            NoiseSource::Zero => None,
            NoiseSource::Scale(s) => Some(DVector::from_fn(dim, |_, _| s * z())),
            NoiseSource::Diagonal(sd) => Some(DVector::from_fn(dim, |i, _| sd[i] * z())),
            NoiseSource::Factor(l) => {
                let std = DVector::from_fn(dim, |_, _| z());
                Some(l * std)
            }
        }
    }

    /// Adds one draw to `v` in place; a no-op for zero noise.
    pub fn perturb(&self, v: &mut DVector<f64>, rng: &mut RngStream) {
        if let Some(n) = self.sample(v.len(), rng) {
            *v += n;
        }
    }
}

/// One draw from `Normal(0, Σ)`; `Zero` yields the zero vector.
pub fn sample_noise(spec: &CovSpec, dim: usize, rng: &mut RngStream) -> Result<DVector<f64>> {
    spec.check_dim(dim, "sample_noise")?;
    Ok(spec.compile()?.sample(dim, rng).unwrap_or_else(|| DVector::zeros(dim)))
}

/// Covariances of every noise source in the network.
///
/// `combine` and `split` are only read by the combine/split design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileRepr", into = "ProfileRepr")]
pub struct NoiseProfile {
    modulation: CovSpec,
    weight: Vec<CovSpec>,
    activation: Vec<CovSpec>,
    combine: CovSpec,
    split: CovSpec,
    sources: Sources,
}

#[derive(Debug, Clone, PartialEq)]
struct Sources {
    modulation: NoiseSource,
    weight: Vec<NoiseSource>,
    activation: Vec<NoiseSource>,
    combine: NoiseSource,
    split: NoiseSource,
}

#[derive(Serialize, Deserialize)]
struct ProfileRepr {
    modulation: CovSpec,
    weight: Vec<CovSpec>,
    activation: Vec<CovSpec>,
    #[serde(default = "zero_spec")]
    combine: CovSpec,
    #[serde(default = "zero_spec")]
    split: CovSpec,
}

fn zero_spec() -> CovSpec {
    CovSpec::Zero
}

impl TryFrom<ProfileRepr> for NoiseProfile {
    type Error = Error;
    fn try_from(r: ProfileRepr) -> Result<Self> {
        NoiseProfile::with_combine_split(r.modulation, r.weight, r.activation, r.combine, r.split)
    }
}

impl From<NoiseProfile> for ProfileRepr {
    fn from(p: NoiseProfile) -> Self {
        ProfileRepr {
            modulation: p.modulation,
            weight: p.weight,
            activation: p.activation,
            combine: p.combine,
            split: p.split,
        }
    }
}

impl NoiseProfile {
    pub fn new(modulation: CovSpec, weight: Vec<CovSpec>, activation: Vec<CovSpec>) -> Result<Self> {
        Self::with_combine_split(modulation, weight, activation, CovSpec::Zero, CovSpec::Zero)
    }

    pub fn with_combine_split(
        modulation: CovSpec,
        weight: Vec<CovSpec>,
        activation: Vec<CovSpec>,
        combine: CovSpec,
        split: CovSpec,
    ) -> Result<Self> {
        if weight.len() != activation.len() {
            return Err(Error::dim(
                "noise profile: activation entries vs weight entries",
                weight.len(),
                activation.len(),
            ));
        }
        let sources = Sources {
            modulation: modulation.compile()?,
            weight: weight.iter().map(CovSpec::compile).collect::<Result<_>>()?,
            activation: activation.iter().map(CovSpec::compile).collect::<Result<_>>()?,
            combine: combine.compile()?,
            split: split.compile()?,
        };
        Ok(NoiseProfile {
            modulation,
            weight,
            activation,
            combine,
            split,
            sources,
        })
    }

    /// All-zero profile for a network of the given depth.
    pub fn zero(depth: usize) -> Self {
        Self::new(CovSpec::Zero, vec![CovSpec::Zero; depth], vec![CovSpec::Zero; depth])
            .expect("zero profile is valid")
    }

    /// Same isotropic variances at every layer.
    pub fn isotropic(depth: usize, modulation: f64, weight: f64, activation: f64) -> Result<Self> {
        Self::new(
            CovSpec::Isotropic(modulation),
            vec![CovSpec::Isotropic(weight); depth],
            vec![CovSpec::Isotropic(activation); depth],
        )
    }

    pub fn depth(&self) -> usize {
        self.weight.len()
    }

    pub fn modulation(&self) -> &CovSpec {
        &self.modulation
    }

    /// Weighted-addition noise of layer `layer` (1-based).
    pub fn weight(&self, layer: usize) -> &CovSpec {
        &self.weight[layer - 1]
    }

    /// Activation noise of layer `layer` (1-based).
    pub fn activation(&self, layer: usize) -> &CovSpec {
        &self.activation[layer - 1]
    }

    pub fn weights(&self) -> &[CovSpec] {
        &self.weight
    }

    pub fn activations(&self) -> &[CovSpec] {
        &self.activation
    }

    pub fn combine(&self) -> &CovSpec {
        &self.combine
    }

    pub fn split(&self) -> &CovSpec {
        &self.split
    }

    pub(crate) fn modulation_source(&self) -> &NoiseSource {
        &self.sources.modulation
    }

    pub(crate) fn weight_source(&self, layer: usize) -> &NoiseSource {
        &self.sources.weight[layer - 1]
    }

    pub(crate) fn activation_source(&self, layer: usize) -> &NoiseSource {
        &self.sources.activation[layer - 1]
    }

    pub(crate) fn combine_source(&self) -> &NoiseSource {
        &self.sources.combine
    }

    pub(crate) fn split_source(&self) -> &NoiseSource {
        &self.sources.split
    }

    pub fn with_combine(mut self, combine: CovSpec) -> Result<Self> {
        self.sources.combine = combine.compile()?;
        self.combine = combine;
        Ok(self)
    }

    pub fn with_split(mut self, split: CovSpec) -> Result<Self> {
        self.sources.split = split.compile()?;
        self.split = split;
        Ok(self)
    }

    /// Checks lengths and dimensions against `d_0, …, d_L`.
    pub fn check_dims(&self, dims: &[usize]) -> Result<()> {
        let depth = dims.len().saturating_sub(1);
        if self.weight.len() != depth {
            return Err(Error::dim("noise profile depth", depth, self.weight.len()));
        }
        self.modulation.check_dim(dims[0], "modulation noise")?;
        for (l, &dim) in dims.iter().enumerate().skip(1) {
            self.weight[l - 1].check_dim(dim, &format!("weight noise of layer {l}"))?;
            self.activation[l - 1].check_dim(dim, &format!("activation noise of layer {l}"))?;
            self.combine.check_dim(dim, &format!("combine noise at layer {l}"))?;
            self.split.check_dim(dim, &format!("split noise at layer {l}"))?;
        }
        Ok(())
    }

    /// Largest variance over every diagonal entry of every noise source used by
    /// the plain and tree-replicated networks (modulation, weight, activation).
    pub fn max_variance(&self) -> f64 {
        std::iter::once(&self.modulation)
            .chain(&self.weight)
            .chain(&self.activation)
            .map(CovSpec::max_variance)
            .fold(0.0, f64::max)
    }

    pub fn all_diagonal(&self) -> bool {
        std::iter::once(&self.modulation)
            .chain(&self.weight)
            .chain(&self.activation)
            .all(CovSpec::is_diagonal)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serialization is infallible")
    }
}

/// One noisy evaluation: modulation noise on the input, then for every layer
/// weight noise inside the activation and activation noise after it.
///
/// Draws come from the sub-streams `[MODULATION, 0]`, `[WEIGHT, ℓ, 0]` and
/// `[ACTIVATION, ℓ, 0]` of `rng`.
pub fn noisy_forward(
    net: &Network,
    profile: &NoiseProfile,
    x: &DVector<f64>,
    rng: &RngStream,
) -> Result<DVector<f64>> {
    net.check_input(x)?;
    profile.check_dims(&net.dims())?;
    let mut h = x.clone();
    profile
        .modulation_source()
        .perturb(&mut h, &mut rng.derive(&[stream::MODULATION, 0]));
    for (idx, layer) in net.layers().iter().enumerate() {
        let l = idx + 1;
        let mut pre = layer.affine(&h);
        profile
            .weight_source(l)
            .perturb(&mut pre, &mut rng.derive(&[stream::WEIGHT, l as u64, 0]));
        h = layer.activation.apply(pre);
        profile
            .activation_source(l)
            .perturb(&mut h, &mut rng.derive(&[stream::ACTIVATION, l as u64, 0]));
    }
    Ok(h)
}
