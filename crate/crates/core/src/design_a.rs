//! Tree replication: every layer averages the noisy weighted additions of
//! `n_{ℓ−1}` independent copies of the subnetwork below it.

use std::path::Path;

use nalgebra::DVector;
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::monte_carlo::{trial_stream, NoisyEvaluator};
use crate::net::{Layer, LipschitzReport, Network};
use crate::noise::{stream, CovSpec, NoiseProfile};
use crate::rng::RngStream;
use crate::stats::{self, Interval};

/// Placeholder values for the absolute constants of the Hoeffding bound.
pub const DEFAULT_HOEFFDING_C: f64 = 1.0;
pub const DEFAULT_HOEFFDING_SMALL_C: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DesignASpecRepr", into = "DesignASpecRepr")]
pub struct DesignASpec {
    network: Network,
    copies: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct DesignASpecRepr {
    network: Network,
    copies: Vec<u64>,
}

impl TryFrom<DesignASpecRepr> for DesignASpec {
    type Error = Error;
    fn try_from(r: DesignASpecRepr) -> Result<Self> {
        DesignASpec::new(r.network, r.copies)
    }
}

impl From<DesignASpec> for DesignASpecRepr {
    fn from(s: DesignASpec) -> Self {
        DesignASpecRepr {
            network: s.network,
            copies: s.copies,
        }
    }
}

impl DesignASpec {
    /// `copies = (n_0, …, n_L)` with `n_L = 1`.
    pub fn new(network: Network, copies: Vec<u64>) -> Result<Self> {
        let depth = network.depth();
        if copies.len() != depth + 1 {
            return Err(Error::dim("copies vector (depth + 1)", depth + 1, copies.len()));
        }
        if copies.contains(&0) {
            return Err(Error::InvalidArgument("every copy count must be at least 1".into()));
        }
        if copies[depth] != 1 {
            return Err(Error::InvalidArgument(format!(
                "the output layer is not replicated: n_L must be 1, got {}",
                copies[depth]
            )));
        }
        Ok(DesignASpec { network, copies })
    }

    /// `(n, …, n, 1)`.
    pub fn uniform(network: Network, n: u64) -> Result<Self> {
        let depth = network.depth();
        let mut copies = vec![n; depth + 1];
        copies[depth] = 1;
        Self::new(network, copies)
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn copies(&self) -> &[u64] {
        &self.copies
    }

    pub fn total_copies(&self) -> BigUint {
        total_copies(&self.copies)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

struct Tree<'a> {
    spec: &'a DesignASpec,
    profile: &'a NoiseProfile,
    x: &'a DVector<f64>,
    rng: &'a RngStream,
    additions: u64,
}

impl Tree<'_> {
    /// Output of node `alpha` at layer `l`; layer 0 nodes are modulated inputs.
    fn node(&mut self, l: usize, alpha: u64) -> DVector<f64> {
        if l == 0 {
            let mut h = self.x.clone();
            self.profile
                .modulation_source()
                .perturb(&mut h, &mut self.rng.derive(&[stream::MODULATION, alpha]));
            return h;
        }
        let layer = &self.spec.network.layers()[l - 1];
        let fan_in = self.spec.copies[l - 1];
        let mut acc: Option<DVector<f64>> = None;
        for j in 0..fan_in {
            let child = alpha * fan_in + j;
            let h = self.node(l - 1, child);
            let mut pre = layer.affine(&h);
            self.profile
                .weight_source(l)
                .perturb(&mut pre, &mut self.rng.derive(&[stream::WEIGHT, l as u64, child]));
            self.additions += 1;
            acc = Some(match acc {
                None => pre,
                Some(sum) => sum + pre,
            });
        }
        let mut pre = acc.expect("fan-in is at least 1");
        if fan_in > 1 {
            pre /= fan_in as f64;
        }
        let mut out = layer.activation.apply(pre);
        self.profile
            .activation_source(l)
            .perturb(&mut out, &mut self.rng.derive(&[stream::ACTIVATION, l as u64, alpha]));
        out
    }
}

/// Output of the replicated network and the number of weighted additions performed.
///
/// Node `α` at layer `ℓ` averages children `α·n_{ℓ−1} + j`; its draws come from
/// the sub-streams `[WEIGHT, ℓ, child]` and `[ACTIVATION, ℓ, α]`, and leaf `α`
/// from `[MODULATION, α]`. With all copies 1 these coincide with the plain
/// noisy forward pass.
pub fn eval_design_a_counted(
    spec: &DesignASpec,
    x: &DVector<f64>,
    profile: &NoiseProfile,
    rng: &RngStream,
) -> Result<(DVector<f64>, u64)> {
    spec.network.check_input(x)?;
    profile.check_dims(&spec.network.dims())?;
    let mut tree = Tree {
        spec,
        profile,
        x,
        rng,
        additions: 0,
    };
    let out = tree.node(spec.network.depth(), 0);
    Ok((out, tree.additions))
}

pub fn eval_design_a(
    spec: &DesignASpec,
    x: &DVector<f64>,
    profile: &NoiseProfile,
    rng: &RngStream,
) -> Result<DVector<f64>> {
    eval_design_a_counted(spec, x, profile, rng).map(|(out, _)| out)
}

#[derive(Debug, Clone, Copy)]
pub struct DesignA<'a> {
    pub spec: &'a DesignASpec,
    pub profile: &'a NoiseProfile,
}

impl NoisyEvaluator for DesignA<'_> {
    fn evaluate(&self, x: &DVector<f64>, rng: &RngStream) -> Result<DVector<f64>> {
        eval_design_a(self.spec, x, self.profile, rng)
    }
}

/// Moves every nonzero activation noise into the weight noise of an identity
/// layer inserted right after it (replicated once), giving an equivalent
/// replicated network whose only per-layer noise is weighted-addition noise.
pub fn fold_activation_noise(spec: &DesignASpec, profile: &NoiseProfile) -> Result<(DesignASpec, NoiseProfile)> {
    let dims = spec.network.dims();
    profile.check_dims(&dims)?;
    let mut layers = Vec::new();
    let mut copies = Vec::new();
    let mut weight = Vec::new();
    for (idx, layer) in spec.network.layers().iter().enumerate() {
        let l = idx + 1;
        layers.push(layer.clone());
        copies.push(spec.copies[idx]);
        weight.push(profile.weight(l).clone());
        if !profile.activation(l).is_zero() {
            layers.push(Layer::identity(dims[l]));
            copies.push(1);
            weight.push(profile.activation(l).clone());
        }
    }
    copies.push(1);
    let depth = layers.len();
    let network = Network::new(spec.network.input_dim(), layers)?;
    let folded = NoiseProfile::new(profile.modulation().clone(), weight, vec![CovSpec::Zero; depth])?;
    Ok((DesignASpec::new(network, copies)?, folded))
}

/// `μ_d = √2 Γ((d+1)/2) / Γ(d/2)`, the mean norm of a `d`-dimensional standard normal.
pub fn chi_mean(d: u64) -> Result<f64> {
    const RECURRENCE_LIMIT: u64 = 64;
    if d == 0 {
        return Err(Error::InvalidArgument("chi mean needs d ≥ 1".into()));
    }
    let ratio = if d < RECURRENCE_LIMIT {
        // r(d) = Γ((d+1)/2)/Γ(d/2) with r(d+2) = r(d)(d+1)/d.
        let (mut k, mut r) = if d % 2 == 1 {
            (1u64, 1.0 / std::f64::consts::PI.sqrt())
        } else {
            (2u64, std::f64::consts::PI.sqrt() / 2.0)
        };
        while k < d {
            r *= (k + 1) as f64 / k as f64;
            k += 2;
        }
        r
    } else {
        // ln Γ(x+½) − ln Γ(x) asymptotic series, x = d/2 ≥ 32.
        let x = d as f64 / 2.0;
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        let series = inv * (-1.0 / 8.0 + inv2 * (1.0 / 192.0 + inv2 * (-1.0 / 640.0 + inv2 * (17.0 / 14336.0))));
        (0.5 * x.ln() + series).exp()
    };
    Ok(std::f64::consts::SQRT_2 * ratio)
}

/// Squared sub-gaussian norm `4·4^{1/d} / (2·4^{1/d} − 2)` of a chi variable.
///
/// Grows like `2d / ln 4` as `d → ∞`.
pub fn subgaussian_norm_sq(d: u64) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument("sub-gaussian norm needs d ≥ 1".into()));
    }
    let t = std::f64::consts::LN_2 * 2.0 / d as f64;
    Ok(2.0 * t.exp() / t.exp_m1())
}

pub fn total_copies(copies: &[u64]) -> BigUint {
    copies.iter().fold(BigUint::one(), |acc, &n| acc * n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub sum_ok: bool,
    pub product_ok: bool,
    pub diagnostics: Vec<String>,
}

fn exact(v: f64) -> Option<BigRational> {
    BigRational::from_float(v)
}

/// `Σ δ_ℓ ≤ D_L` and `Π (1 − κ_ℓ) > 1 − C_L`, evaluated exactly on the binary
/// values of the inputs.
pub fn budget_feasible(deltas: &[f64], kappas: &[f64], d_l: f64, c_l: f64) -> Feasibility {
    let mut diagnostics = Vec::new();
    let sum_ok = match (deltas.iter().map(|&v| exact(v)).collect::<Option<Vec<_>>>(), exact(d_l)) {
        (Some(ds), Some(target)) => {
            let total: BigRational = ds.into_iter().sum();
            let ok = total <= target;
            if !ok {
                diagnostics.push(format!("sum of deltas {} exceeds D_L = {d_l}", deltas.iter().sum::<f64>()));
            }
            ok
        }
        _ => {
            diagnostics.push("deltas or D_L are not finite".into());
            false
        }
    };
    let product_ok = match (kappas.iter().map(|&v| exact(v)).collect::<Option<Vec<_>>>(), exact(c_l)) {
        (Some(ks), Some(target)) => {
            let one = BigRational::one();
            let prod = ks.iter().fold(one.clone(), |acc, k| acc * (&one - k));
            let ok = prod > &one - target;
            if !ok {
                let approx: f64 = kappas.iter().map(|k| 1.0 - k).product();
                diagnostics.push(format!(
                    "product of (1 - kappa) = {approx} is not above 1 - C_L = {}",
                    1.0 - c_l
                ));
            }
            ok
        }
        _ => {
            diagnostics.push("kappas or C_L are not finite".into());
            false
        }
    };
    Feasibility {
        feasible: sum_ok && product_ok,
        sum_ok,
        product_ok,
        diagnostics,
    }
}

/// Inputs of the sufficient-copies bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyBudgetRequest {
    /// Common bound on every noise variance.
    pub sigma_sq: f64,
    /// `δ_1..δ_L`.
    pub deltas: Vec<f64>,
    /// `κ_1..κ_L`.
    pub kappas: Vec<f64>,
    /// Deviation target `D_L`.
    pub target_deviation: f64,
    /// Failure-probability target `C_L`.
    pub target_failure: f64,
    #[serde(default = "default_big_c")]
    pub hoeffding_big_c: f64,
    #[serde(default = "default_small_c")]
    pub hoeffding_small_c: f64,
    pub lipschitz: LipschitzReport,
}

fn default_big_c() -> f64 {
    DEFAULT_HOEFFDING_C
}

fn default_small_c() -> f64 {
    DEFAULT_HOEFFDING_SMALL_C
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CopyBudget {
    /// `n_0..n_L`.
    pub copies: Vec<u64>,
    /// Real-valued lower bounds for `n_0..n_{L−1}` before rounding up.
    pub bounds: Vec<f64>,
    /// `Π n_ℓ` as a decimal string.
    #[serde(serialize_with = "as_decimal")]
    pub total: BigUint,
    pub hoeffding_big_c: f64,
    pub hoeffding_small_c: f64,
    /// True while the constants are the documented defaults rather than
    /// values from the concentration literature.
    pub placeholder_constants: bool,
}

fn as_decimal<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_str_radix(10))
}

impl CopyBudget {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("budget serialization is infallible")
    }
}

/// Copy counts sufficient for `P[‖Ψ_NN − Ψ_ONN‖ < D_L] > 1 − C_L`, built from the
/// output layer down since the bound for `n_{ℓ−1}` needs `M_ℓ = Π_{k≥ℓ} n_k`:
///
/// `n_{ℓ−1} ≥ σ²(Π_{i≥ℓ} a_i Π_{i>ℓ} ‖W_i‖)²/δ_ℓ² · (√(C² ψ(d_ℓ)(−ln(κ_ℓ/2))/(c M_ℓ)) + μ_{d_ℓ})²`.
///
/// `dims` holds `d_1..d_L`.
pub fn sufficient_copies(req: &CopyBudgetRequest, dims: &[usize]) -> Result<CopyBudget> {
    let depth = dims.len();
    let lens = [
        ("deltas", req.deltas.len()),
        ("kappas", req.kappas.len()),
        ("Lipschitz constants", req.lipschitz.per_layer.len()),
        ("operator norms", req.lipschitz.operator_norms.len()),
    ];
    for (what, len) in lens {
        if len != depth {
            return Err(Error::dim(format!("copy budget {what}"), depth, len));
        }
    }
    if !(req.sigma_sq >= 0.0) || !req.sigma_sq.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma_sq must be finite and nonnegative, got {}", req.sigma_sq)));
    }
    if let Some(d) = req.deltas.iter().find(|&&d| !(d > 0.0)) {
        return Err(Error::InvalidArgument(format!("every delta must be positive, got {d}")));
    }
    if let Some(k) = req.kappas.iter().find(|&&k| !(k > 0.0 && k < 1.0)) {
        return Err(Error::InvalidArgument(format!("every kappa must lie in (0, 1), got {k}")));
    }
    if !(req.hoeffding_big_c > 0.0 && req.hoeffding_small_c > 0.0) {
        return Err(Error::InvalidArgument("Hoeffding constants must be positive".into()));
    }
    let feas = budget_feasible(&req.deltas, &req.kappas, req.target_deviation, req.target_failure);
    if !feas.feasible {
        return Err(Error::Infeasible(feas.diagnostics.join("; ")));
    }

    let a = &req.lipschitz.per_layer;
    let w = &req.lipschitz.operator_norms;
    let mut copies = vec![1u64; depth + 1];
    let mut bounds = vec![0.0; depth];
    // M = Π_{k=ℓ}^{L} n_k, starting from M_L = n_L = 1.
    let mut downstream = 1.0;
    for l in (1..=depth).rev() {
        let gain: f64 = a[l - 1..].iter().product::<f64>() * w[l..].iter().product::<f64>();
        let prefactor = req.sigma_sq * gain * gain / (req.deltas[l - 1] * req.deltas[l - 1]);
        let dim = dims[l - 1] as u64;
        let tail = req.hoeffding_big_c.powi(2) * subgaussian_norm_sq(dim)? * (-(req.kappas[l - 1] / 2.0).ln())
            / (req.hoeffding_small_c * downstream);
        let bound = prefactor * (tail.sqrt() + chi_mean(dim)?).powi(2);
        if !bound.is_finite() || bound >= u64::MAX as f64 {
            return Err(Error::InvalidArgument(format!("copy bound for layer {l} is too large: {bound:e}")));
        }
        bounds[l - 1] = bound;
        copies[l - 1] = (bound.ceil() as u64).max(1);
        downstream *= copies[l - 1] as f64;
    }
    Ok(CopyBudget {
        total: total_copies(&copies),
        copies,
        bounds,
        hoeffding_big_c: req.hoeffding_big_c,
        hoeffding_small_c: req.hoeffding_small_c,
        placeholder_constants: req.hoeffding_big_c == DEFAULT_HOEFFDING_C
            && req.hoeffding_small_c == DEFAULT_HOEFFDING_SMALL_C,
    })
}

/// Largest diagonal variance across modulation, weight and activation noise.
/// The copy bound assumes diagonal covariances, so full ones are rejected.
pub fn common_variance_bound(profile: &NoiseProfile) -> Result<f64> {
    if !profile.all_diagonal() {
        return Err(Error::InvalidArgument(
            "the copy bound assumes diagonal noise covariances; found a full covariance".into(),
        ));
    }
    Ok(profile.max_variance())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub trials: usize,
    pub failures: usize,
    /// Failure fraction with its Wilson interval.
    pub failure_probability: Interval,
}

/// Fraction of trials in which `max_x ‖Ψ_NN(x) − Ψ_A(x)‖₂ ≥ D_L` over the given inputs.
///
/// Input `i` of trial `t` uses stream `trial_stream(seed, t).child(i)`.
pub fn deviation_check(
    spec: &DesignASpec,
    profile: &NoiseProfile,
    inputs: &[DVector<f64>],
    target_deviation: f64,
    trials: usize,
    seed: u64,
    confidence: f64,
) -> Result<DeviationReport> {
    if trials < 100 {
        return Err(Error::InvalidArgument(format!("deviation check needs at least 100 trials, got {trials}")));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("deviation check needs at least one input".into()));
    }
    let clean = inputs
        .iter()
        .map(|x| spec.network.forward(x))
        .collect::<Result<Vec<_>>>()?;
    let failed = Exec::default().try_map(trials, |t| -> Result<bool> {
        let rng = trial_stream(seed, t);
        let mut worst: f64 = 0.0;
        for (i, (x, y)) in inputs.iter().zip(&clean).enumerate() {
            let out = eval_design_a(spec, x, profile, &rng.child(i as u64))?;
            worst = worst.max((out - y).norm());
        }
        Ok(!(worst < target_deviation))
    })?;
    let failures = failed.iter().filter(|&&f| f).count();
    Ok(DeviationReport {
        trials,
        failures,
        failure_probability: stats::wilson(failures, trials, confidence)?,
    })
}
