//! Desk-scale experiments: noise calibration, MSE and accuracy against copy
//! counts, identity-layer depth sweeps and minimal-`m` grid scans.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize, Serializer};

use crate::design_a::{eval_design_a, DesignASpec};
use crate::design_b::{eval_design_b, suggested_m, DesignBSpec, MHeuristic};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::idx;
use crate::linear::{min_stable_m, SymmetricConfig};
use crate::monte_carlo::trial_stream;
use crate::net::{Layer, Network};
use crate::noise::{noisy_forward, CovSpec, NoiseProfile};
use crate::rng::RngStream;
use crate::stats::{self, DEFAULT_CONFIDENCE};

/// Positions (after layer k, 1-based) used when a network has at least 8 layers.
pub const DEFAULT_SLOTS: [usize; 4] = [1, 3, 5, 7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    /// Path to a noise profile JSON.
    Profile(PathBuf),
    /// Calibrate from the signal range over the input set.
    Calibrate { w_fraction: f64, a_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignChoice {
    #[default]
    None,
    A { copies: Vec<u64> },
    B { m: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    Idx {
        images: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
        #[serde(default)]
        limit: Option<usize>,
    },
    /// `count` points uniform in `[low, high]^{d_0}`.
    Synthetic { count: usize, low: f64, high: f64, seed: u64 },
    Inline(Vec<Vec<f64>>),
}

/// Experiment description; relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub network: PathBuf,
    pub noise: NoiseSource,
    #[serde(default)]
    pub design: DesignChoice,
    pub inputs: InputSource,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_trials() -> usize {
    1000
}

fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Parses the file and makes its relative paths absolute.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.network);
        if let NoiseSource::Profile(p) = &mut self.noise {
            fix(p);
        }
        if let InputSource::Idx { images, labels, .. } = &mut self.inputs {
            fix(images);
            if let Some(l) = labels {
                fix(l);
            }
        }
        if let Some(o) = &mut self.output {
            fix(o);
        }
    }

    /// Loads and validates every referenced file before any computation.
    pub fn prepare(&self) -> Result<Setup> {
        if self.trials < 2 {
            return Err(Error::InvalidArgument(format!("trials must be at least 2, got {}", self.trials)));
        }
        stats::z_value(self.confidence)?;
        let net = Network::load(&self.network)?;
        let (inputs, labels) = load_inputs(&self.inputs, net.input_dim())?;
        let (profile, warnings) = match &self.noise {
            NoiseSource::Profile(p) => (NoiseProfile::load(p)?, Vec::new()),
            NoiseSource::Calibrate { w_fraction, a_fraction } => {
                let c = calibrate_noise(&net, &inputs, *w_fraction, *a_fraction)?;
                (c.profile, c.warnings)
            }
        };
        profile.check_dims(&net.dims())?;
        let design = match &self.design {
            DesignChoice::None => Design::None,
            DesignChoice::A { copies } => Design::A(DesignASpec::new(net.clone(), copies.clone())?),
            DesignChoice::B { m } => Design::B(DesignBSpec::new(net.clone(), *m)?),
        };
        Ok(Setup {
            net,
            profile,
            inputs,
            labels,
            design,
            trials: self.trials,
            seed: self.seed,
            confidence: self.confidence,
            warnings,
        })
    }
}

type Inputs = (Vec<DVector<f64>>, Option<Vec<usize>>);

fn load_inputs(src: &InputSource, dim: usize) -> Result<Inputs> {
    let (inputs, labels) = match src {
        InputSource::Idx { images, labels, limit } => {
            let imgs = idx::load_images(images)?;
            let mut xs = imgs.images;
            let mut ls = labels
                .as_ref()
                .map(|p| idx::load_labels(p).map(|v| v.into_iter().map(usize::from).collect::<Vec<_>>()))
                .transpose()?;
            if let Some(ls) = &ls {
                if ls.len() != xs.len() {
                    return Err(Error::dim("label count vs image count", xs.len(), ls.len()));
                }
            }
            if let Some(n) = *limit {
                xs.truncate(n);
                if let Some(ls) = &mut ls {
                    ls.truncate(n);
                }
            }
            (xs, ls)
        }
        InputSource::Synthetic { count, low, high, seed } => {
            if !(low < high) {
                return Err(Error::InvalidArgument(format!("synthetic range [{low}, {high}] is empty")));
            }
            let xs = (0..*count)
                .map(|i| {
                    let mut rng = RngStream::from_path(*seed, &[i as u64]);
                    DVector::from_fn(dim, |_, _| rng.random_range(*low..*high))
                })
                .collect();
            (xs, None)
        }
        InputSource::Inline(rows) => (rows.iter().map(|r| DVector::from_vec(r.clone())).collect(), None),
    };
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("input set is empty".into()));
    }
    if let Some(bad) = inputs.iter().find(|x| x.len() != dim) {
        return Err(Error::dim("input vector", dim, bad.len()));
    }
    Ok((inputs, labels))
}

/// A noisy evaluator selected at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    None,
    A(DesignASpec),
    B(DesignBSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    None,
    A,
    B,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::None => "none",
            DesignKind::A => "a",
            DesignKind::B => "b",
        }
    }
}

impl Design {
    /// Design A with uniform copies `(n, …, n, 1)` or Design B with `m = n`.
    pub fn with_copies(kind: DesignKind, net: &Network, n: u64) -> Result<Self> {
        Ok(match kind {
            DesignKind::None => Design::None,
            DesignKind::A => Design::A(DesignASpec::uniform(net.clone(), n)?),
            DesignKind::B => Design::B(DesignBSpec::new(net.clone(), n)?),
        })
    }

    pub fn kind(&self) -> DesignKind {
        match self {
            Design::None => DesignKind::None,
            Design::A(_) => DesignKind::A,
            Design::B(_) => DesignKind::B,
        }
    }

    pub fn evaluate(&self, net: &Network, profile: &NoiseProfile, x: &DVector<f64>, rng: &RngStream) -> Result<DVector<f64>> {
        match self {
            Design::None => noisy_forward(net, profile, x, rng),
            Design::A(spec) => eval_design_a(spec, x, profile, rng),
            Design::B(spec) => eval_design_b(spec, x, profile, rng),
        }
    }

    /// Number of physical network copies as a decimal string.
    pub fn total_copies(&self, depth: usize) -> String {
        match self {
            Design::None => "1".into(),
            Design::A(spec) => spec.total_copies().to_string(),
            Design::B(spec) => (spec.m() as u128 * depth as u128).to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Setup {
    pub net: Network,
    pub profile: NoiseProfile,
    pub inputs: Vec<DVector<f64>>,
    pub labels: Option<Vec<usize>>,
    pub design: Design,
    pub trials: usize,
    pub seed: u64,
    pub confidence: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub profile: NoiseProfile,
    pub input_diameter: f64,
    /// Per layer: diameter of the pre-activations.
    pub pre_activation_diameters: Vec<f64>,
    /// Per layer: diameter of the activations.
    pub activation_diameters: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Largest per-coordinate spread `max_i x_i[k] − min_i x_i[k]` over a set of vectors.
fn diameter<'a>(mut vs: impl Iterator<Item = &'a DVector<f64>>) -> f64 {
    let Some(first) = vs.next() else { return 0.0 };
    let (lo, hi) = vs.fold((first.clone(), first.clone()), |(lo, hi), v| (lo.inf(v), hi.sup(v)));
    (hi - lo).max()
}

fn check_fractions(w_fraction: f64, a_fraction: f64) -> Result<()> {
    if !(w_fraction >= 0.0 && a_fraction >= 0.0) || !w_fraction.is_finite() || !a_fraction.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "fractions must be finite and nonnegative, got {w_fraction} and {a_fraction}"
        )));
    }
    Ok(())
}

/// Noise levels proportional to the observed signal range: `Σ_w^(ℓ)` uses the
/// pre-activation spread of layer `ℓ`, `Σ_a^(ℓ)` its activation spread and `Σ_m`
/// the input spread, each as `diag((fraction·diameter)²)`. The input uses
/// `a_fraction`. A diameter is the largest per-coordinate spread across the
/// calibration set, so a single input yields zero everywhere.
pub fn calibrate_noise(
    net: &Network,
    calibration_inputs: &[DVector<f64>],
    w_fraction: f64,
    a_fraction: f64,
) -> Result<Calibration> {
    check_fractions(w_fraction, a_fraction)?;
    if calibration_inputs.is_empty() {
        return Err(Error::InvalidArgument("calibration set is empty".into()));
    }
    let traces = calibration_inputs
        .iter()
        .map(|x| net.trace(x))
        .collect::<Result<Vec<_>>>()?;
    let pre: Vec<f64> = (0..net.depth()).map(|l| diameter(traces.iter().map(|t| &t[l].0))).collect();
    let act: Vec<f64> = (0..net.depth()).map(|l| diameter(traces.iter().map(|t| &t[l].1))).collect();
    calibrate_from_diameters(diameter(calibration_inputs.iter()), &pre, &act, w_fraction, a_fraction)
}

/// Same rule with caller-supplied diameters, for ranges defined some other way.
pub fn calibrate_from_diameters(
    input_diameter: f64,
    pre_activation_diameters: &[f64],
    activation_diameters: &[f64],
    w_fraction: f64,
    a_fraction: f64,
) -> Result<Calibration> {
    check_fractions(w_fraction, a_fraction)?;
    if pre_activation_diameters.len() != activation_diameters.len() {
        return Err(Error::dim(
            "activation diameters",
            pre_activation_diameters.len(),
            activation_diameters.len(),
        ));
    }
    if let Some(bad) = std::iter::once(&input_diameter)
        .chain(pre_activation_diameters)
        .chain(activation_diameters)
        .find(|d| !(**d >= 0.0) || !d.is_finite())
    {
        return Err(Error::InvalidArgument(format!("diameters must be finite and nonnegative, got {bad}")));
    }
    let mut warnings = Vec::new();
    let mut spec = |fraction: f64, diam: f64, what: String| {
        if diam == 0.0 {
            warnings.push(format!("{what} has zero diameter; its noise variance is set to 0"));
        }
        CovSpec::Isotropic((fraction * diam).powi(2))
    };
    let modulation = spec(a_fraction, input_diameter, "input".into());
    let mut weight = Vec::with_capacity(activation_diameters.len());
    let mut activation = Vec::with_capacity(activation_diameters.len());
    for (l, (&pd, &ad)) in pre_activation_diameters.iter().zip(activation_diameters).enumerate() {
        weight.push(spec(w_fraction, pd, format!("layer {} pre-activation", l + 1)));
        activation.push(spec(a_fraction, ad, format!("layer {} activation", l + 1)));
    }
    Ok(Calibration {
        profile: NoiseProfile::new(modulation, weight, activation)?,
        input_diameter,
        pre_activation_diameters: pre_activation_diameters.to_vec(),
        activation_diameters: activation_diameters.to_vec(),
        warnings,
    })
}

/// Per-trial mean over inputs of `‖output − clean‖² / d_L`; input `i` of trial
/// `t` uses stream `trial_stream(seed, t).child(i)`.
pub fn per_trial_mse(
    design: &Design,
    net: &Network,
    profile: &NoiseProfile,
    inputs: &[DVector<f64>],
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<f64>> {
    let clean = inputs.iter().map(|x| net.forward(x)).collect::<Result<Vec<_>>>()?;
    let d = net.output_dim() as f64;
    exec.try_map(trials, |t| -> Result<f64> {
        let rng = trial_stream(seed, t);
        let mut acc = 0.0;
        for (i, (x, y)) in inputs.iter().zip(&clean).enumerate() {
            let out = design.evaluate(net, profile, x, &rng.child(i as u64))?;
            acc += (out - y).norm_squared() / d;
        }
        Ok(acc / inputs.len() as f64)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseRow {
    pub design: &'static str,
    pub copies: u64,
    pub total_copies: String,
    pub mse: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: usize,
    pub seed: u64,
    pub confidence: f64,
}

fn check_grid<T>(grid: &[T], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} grid is empty")));
    }
    Ok(())
}

/// Monte Carlo MSE against the noiseless network for every copy count in the grid.
pub fn run_mse_experiment(setup: &Setup, kind: DesignKind, copies_grid: &[u64], exec: Exec) -> Result<Vec<MseRow>> {
    check_grid(copies_grid, "copies")?;
    copies_grid
        .iter()
        .map(|&n| {
            let design = Design::with_copies(kind, &setup.net, n)?;
            let values = per_trial_mse(&design, &setup.net, &setup.profile, &setup.inputs, setup.trials, setup.seed, exec)?;
            let ci = stats::mean_interval(&values, setup.confidence)?;
            Ok(MseRow {
                design: kind.name(),
                copies: n,
                total_copies: design.total_copies(setup.net.depth()),
                mse: ci.estimate,
                ci_low: ci.low,
                ci_high: ci.high,
                trials: setup.trials,
                seed: setup.seed,
                confidence: setup.confidence,
            })
        })
        .collect()
}

fn argmax(v: &DVector<f64>) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeAccuracy {
    pub acc_design: f64,
    pub acc_onn_baseline: f64,
    pub acc_nn_noiseless: f64,
    /// `None` when the noisy baseline already matches the noiseless accuracy.
    #[serde(serialize_with = "undefined_if_none")]
    pub relative: Option<f64>,
}

impl RelativeAccuracy {
    pub fn new(acc_design: f64, acc_onn_baseline: f64, acc_nn_noiseless: f64) -> Self {
        RelativeAccuracy {
            acc_design,
            acc_onn_baseline,
            acc_nn_noiseless,
            relative: relative(acc_design, acc_onn_baseline, acc_nn_noiseless),
        }
    }
}

fn relative(design: f64, onn: f64, nn: f64) -> Option<f64> {
    (nn != onn).then(|| (design - onn) / (nn - onn))
}

fn undefined_if_none<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("undefined"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub design: &'static str,
    pub copies: u64,
    pub total_copies: String,
    pub acc_design: f64,
    pub acc_design_low: f64,
    pub acc_design_high: f64,
    pub acc_onn: f64,
    pub acc_onn_low: f64,
    pub acc_onn_high: f64,
    pub acc_nn: f64,
    #[serde(serialize_with = "undefined_if_none")]
    pub relative: Option<f64>,
    #[serde(serialize_with = "undefined_if_none")]
    pub relative_low: Option<f64>,
    #[serde(serialize_with = "undefined_if_none")]
    pub relative_high: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub confidence: f64,
}

impl AccuracyRow {
    pub fn relative_accuracy(&self) -> RelativeAccuracy {
        RelativeAccuracy::new(self.acc_design, self.acc_onn, self.acc_nn)
    }
}

/// Correct classifications over all trials and inputs.
#[allow(clippy::too_many_arguments)]
fn correct_count(
    design: &Design,
    net: &Network,
    profile: &NoiseProfile,
    inputs: &[DVector<f64>],
    labels: &[usize],
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<usize> {
    let per_trial = exec.try_map(trials, |t| -> Result<usize> {
        let rng = trial_stream(seed, t);
        let mut hits = 0;
        for (i, (x, &label)) in inputs.iter().zip(labels).enumerate() {
            let out = design.evaluate(net, profile, x, &rng.child(i as u64))?;
            hits += usize::from(argmax(&out) == label);
        }
        Ok(hits)
    })?;
    Ok(per_trial.into_iter().sum())
}

/// Accuracy of the design, the unmodified noisy network and the noiseless network.
pub fn run_accuracy_experiment(
    setup: &Setup,
    labels: &[usize],
    kind: DesignKind,
    copies_grid: &[u64],
    exec: Exec,
) -> Result<Vec<AccuracyRow>> {
    check_grid(copies_grid, "copies")?;
    if labels.len() != setup.inputs.len() {
        return Err(Error::dim("labels vs inputs", setup.inputs.len(), labels.len()));
    }
    let n_inputs = setup.inputs.len();
    let nn_hits = setup
        .inputs
        .iter()
        .zip(labels)
        .map(|(x, &l)| setup.net.forward(x).map(|y| usize::from(argmax(&y) == l)))
        .sum::<Result<usize>>()?;
    let acc_nn = nn_hits as f64 / n_inputs as f64;
    let total = setup.trials * n_inputs;
    let onn_hits = correct_count(
        &Design::None,
        &setup.net,
        &setup.profile,
        &setup.inputs,
        labels,
        setup.trials,
        setup.seed,
        exec,
    )?;
    let onn = stats::wilson(onn_hits, total, setup.confidence)?;
    copies_grid
        .iter()
        .map(|&n| {
            let design = Design::with_copies(kind, &setup.net, n)?;
            let hits = correct_count(
                &design,
                &setup.net,
                &setup.profile,
                &setup.inputs,
                labels,
                setup.trials,
                setup.seed,
                exec,
            )?;
            let acc = stats::wilson(hits, total, setup.confidence)?;
            Ok(AccuracyRow {
                design: kind.name(),
                copies: n,
                total_copies: design.total_copies(setup.net.depth()),
                acc_design: acc.estimate,
                acc_design_low: acc.low,
                acc_design_high: acc.high,
                acc_onn: onn.estimate,
                acc_onn_low: onn.low,
                acc_onn_high: onn.high,
                acc_nn,
                relative: relative(acc.estimate, onn.estimate, acc_nn),
                relative_low: relative(acc.low, onn.estimate, acc_nn),
                relative_high: relative(acc.high, onn.estimate, acc_nn),
                trials: setup.trials,
                seed: setup.seed,
                confidence: setup.confidence,
            })
        })
        .collect()
}

/// How `n` extra identity layers are spread over four insertion slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InsertionPlan {
    pub n: usize,
    pub tuple: [usize; 4],
    /// Each slot `k` means "after layer k" (0 = before the first layer).
    pub slots: [usize; 4],
}

/// `(⌊(n+3)/4⌋, ⌊(n+2)/4⌋, ⌊(n+1)/4⌋, ⌊n/4⌋)`.
pub fn insertion_tuple(n: usize) -> [usize; 4] {
    [n.div_ceil(4), (n + 2) / 4, (n + 1) / 4, n / 4]
}

impl InsertionPlan {
    pub fn new(net: &Network, n: usize, slots: Option<[usize; 4]>) -> Result<Self> {
        let slots = match slots {
            Some(s) => s,
            None if net.depth() >= 8 => DEFAULT_SLOTS,
            None => {
                return Err(Error::InvalidArgument(format!(
                    "default insertion slots need at least 8 layers, network has {}; pass explicit slots",
                    net.depth()
                )))
            }
        };
        if let Some(&bad) = slots.iter().find(|&&s| s > net.depth()) {
            return Err(Error::InvalidArgument(format!(
                "insertion slot {bad} is out of range 0..={}",
                net.depth()
            )));
        }
        Ok(InsertionPlan {
            n,
            tuple: insertion_tuple(n),
            slots,
        })
    }
}

/// Inserts identity layers (`W = I`, `b = 0`, identity activation) per the plan.
pub fn insert_identity_layers(net: &Network, plan: &InsertionPlan) -> Result<Network> {
    let dims = net.dims();
    let mut extra = vec![0usize; net.depth() + 1];
    for (&slot, &count) in plan.slots.iter().zip(&plan.tuple) {
        if slot > net.depth() {
            return Err(Error::InvalidArgument(format!("insertion slot {slot} is out of range")));
        }
        extra[slot] += count;
    }
    let mut layers = Vec::with_capacity(net.depth() + plan.n);
    layers.extend(std::iter::repeat_with(|| Layer::identity(dims[0])).take(extra[0]));
    for (idx, layer) in net.layers().iter().enumerate() {
        layers.push(layer.clone());
        layers.extend(std::iter::repeat_with(|| Layer::identity(dims[idx + 1])).take(extra[idx + 1]));
    }
    Network::new(net.input_dim(), layers)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthRow {
    pub inserted: usize,
    pub variance: f64,
    pub design: &'static str,
    pub copies: u64,
    pub mse: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub accuracy: Option<f64>,
    pub accuracy_low: Option<f64>,
    pub accuracy_high: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub confidence: f64,
}

/// MSE (and accuracy when labels are present) over inserted-layer counts and
/// noise levels. At level `v` every layer, inserted or not, gets isotropic
/// weight and activation variance `v`, and the input gets modulation variance `v`.
pub fn run_depth_sweep(
    setup: &Setup,
    n_grid: &[usize],
    variance_grid: &[f64],
    slots: Option<[usize; 4]>,
    kind: DesignKind,
    copies: u64,
    exec: Exec,
) -> Result<Vec<DepthRow>> {
    check_grid(n_grid, "inserted-layer")?;
    check_grid(variance_grid, "variance")?;
    let mut rows = Vec::with_capacity(n_grid.len() * variance_grid.len());
    for &n in n_grid {
        let plan = InsertionPlan::new(&setup.net, n, slots)?;
        let net = insert_identity_layers(&setup.net, &plan)?;
        let design = Design::with_copies(kind, &net, copies)?;
        for &v in variance_grid {
            let profile = NoiseProfile::isotropic(net.depth(), v, v, v)?;
            let values = per_trial_mse(&design, &net, &profile, &setup.inputs, setup.trials, setup.seed, exec)?;
            let ci = stats::mean_interval(&values, setup.confidence)?;
            let acc = match &setup.labels {
                Some(labels) => {
                    let hits = correct_count(&design, &net, &profile, &setup.inputs, labels, setup.trials, setup.seed, exec)?;
                    Some(stats::wilson(hits, setup.trials * setup.inputs.len(), setup.confidence)?)
                }
                None => None,
            };
            rows.push(DepthRow {
                inserted: n,
                variance: v,
                design: kind.name(),
                copies,
                mse: ci.estimate,
                ci_low: ci.low,
                ci_high: ci.high,
                accuracy: acc.map(|a| a.estimate),
                accuracy_low: acc.map(|a| a.low),
                accuracy_high: acc.map(|a| a.high),
                trials: setup.trials,
                seed: setup.seed,
                confidence: setup.confidence,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    #[serde(rename = "norm_W")]
    pub norm_w: f64,
    #[serde(rename = "norm_D")]
    pub norm_d: f64,
    pub min_m: usize,
    /// `⌈(‖D‖_F‖W‖_F/d)²⌉`.
    pub predicted_m: u64,
}

/// Scaled identities with the given Frobenius norms, unit noise everywhere.
pub fn scaled_identity_config(d: usize, norm_d: f64, norm_w: f64) -> Result<SymmetricConfig> {
    let root = (d as f64).sqrt();
    let iso = CovSpec::Isotropic(1.0);
    SymmetricConfig::new(
        DVector::from_element(d, norm_d / root),
        DMatrix::identity(d, d) * (norm_w / root),
        &iso,
        &iso,
        &iso,
    )
}

/// `min_stable_m` for every `(‖W‖_F, ‖D‖_F)` cell of scaled-identity networks.
pub fn scan_m_grid(
    d: usize,
    norm_grid_w: &[f64],
    norm_grid_d: &[f64],
    depth: usize,
    growth_tol: f64,
    exec: Exec,
) -> Result<Vec<ScanRow>> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    check_grid(norm_grid_w, "norm_W")?;
    check_grid(norm_grid_d, "norm_D")?;
    if let Some(bad) = norm_grid_w.iter().chain(norm_grid_d).find(|&&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("grid norms must be positive, got {bad}")));
    }
    let cells: Vec<(f64, f64)> = norm_grid_w
        .iter()
        .flat_map(|&w| norm_grid_d.iter().map(move |&dn| (w, dn)))
        .collect();
    exec.try_map(cells.len(), |i| {
        let (norm_w, norm_d) = cells[i];
        let cfg = scaled_identity_config(d, norm_d, norm_w)?;
        Ok(ScanRow {
            norm_w,
            norm_d,
            min_m: min_stable_m(&cfg, depth, growth_tol)?,
            predicted_m: suggested_m(norm_d, norm_w, MHeuristic::Empirical, d)?,
        })
    })
}
