use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use onn_noise::design_a::{
    common_variance_bound, eval_design_a_counted, sufficient_copies, CopyBudgetRequest, DesignA, DesignASpec,
    DEFAULT_HOEFFDING_C, DEFAULT_HOEFFDING_SMALL_C,
};
use onn_noise::design_b::{eval_design_b_counted, DesignB, DesignBSpec};
use onn_noise::experiments::{
    insert_identity_layers, run_accuracy_experiment, run_depth_sweep, run_mse_experiment, scan_m_grid,
    DesignChoice, DesignKind, ExperimentConfig, InsertionPlan,
};
use onn_noise::linalg::matrix_to_rows;
use onn_noise::linear::{
    design_b_output_covariance, fixed_point_solve, fixed_point_solve_b, limit_series, limit_series_b, propagate,
    propagate_b, propagate_b_averaged, symmetric_closed_form, symmetric_closed_form_b, Contraction, CovarianceState,
    FixedPointMethod, LinearNet, SymmetricConfig, Trajectory, DEFAULT_GROWTH_TOL,
};
use onn_noise::monte_carlo::{sample_outputs, NoisyEvaluator, PlainOnn, SampleStats};
use onn_noise::stats::{mean_interval, z_value, DEFAULT_CONFIDENCE};
use onn_noise::{Exec, Network, NoiseProfile, RngStream};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::output::{Plot, Provenance, Report, Table};
use crate::{Command, Global};

const DEFAULT_SEED: u64 = 0;
const DEFAULT_TRIALS: usize = 1000;

pub struct Outcome {
    pub report: Report,
    pub seed: u64,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
    /// Output path named by an experiment config.
    pub default_output: Option<PathBuf>,
    pub plot: Option<Plot>,
}

#[derive(Debug, Args, Serialize)]
pub struct ForwardArgs {
    #[arg(long)]
    net: PathBuf,
    /// Input vector as a JSON array.
    #[arg(long)]
    input: String,
}

#[derive(Debug, Args, Serialize)]
pub struct NoisyInput {
    #[arg(long)]
    net: PathBuf,
    /// Noise profile JSON; zero noise when omitted.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Input vector as a JSON array.
    #[arg(long)]
    input: String,
    /// Run trials on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: NoisyInput,
}

#[derive(Debug, Args, Serialize)]
pub struct DesignAArgs {
    #[command(flatten)]
    common: NoisyInput,
    /// Copies `[n_0, ..., n_L]` as a JSON array (n_L = 1).
    #[arg(long, conflicts_with = "uniform")]
    copies: Option<String>,
    /// Uniform copies `(n, ..., n, 1)`.
    #[arg(long)]
    uniform: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct DesignBArgs {
    #[command(flatten)]
    common: NoisyInput,
    #[arg(long)]
    m: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMethod {
    /// Plain recursion `T`.
    Propagate,
    /// Combine/split recursion `T_m`.
    PropagateB,
    /// `T_m` recursion with the terminal averaging correction.
    PropagateBAveraged,
    /// Exact covariance of the branch average.
    ExactB,
    /// Closed form of a repeated layer.
    ClosedForm,
    /// Closed form of `T_m` for a repeated layer.
    ClosedFormB,
}

#[derive(Debug, Args, Serialize)]
pub struct CovarianceArgs {
    /// Network with identity or diagonal activations (biases are ignored).
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, value_enum, default_value_t = CovarianceMethod::Propagate)]
    method: CovarianceMethod,
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Depth for the closed forms (the net holds the single repeated layer).
    #[arg(long)]
    depth: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitMethod {
    Series,
    Iterate,
    Vectorized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractionArg {
    Frobenius,
    Operator,
}

#[derive(Debug, Args, Serialize)]
pub struct LimitArgs {
    /// Single square diagonal-linear layer.
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, value_enum, default_value_t = LimitMethod::Series)]
    method: LimitMethod,
    /// Use the combine/split map with this many copies.
    #[arg(long)]
    m: Option<usize>,
    /// Series tail tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = ContractionArg::Frobenius)]
    contraction: ContractionArg,
}

#[derive(Debug, Args, Serialize)]
pub struct CopiesArgs {
    #[arg(long)]
    net: PathBuf,
    /// Noise profile; the common variance bound is its largest variance.
    #[arg(long)]
    profile: PathBuf,
    /// Per-layer deviation shares as a JSON array.
    #[arg(long)]
    deltas: String,
    /// Per-layer failure shares as a JSON array.
    #[arg(long)]
    kappas: String,
    #[arg(long)]
    target_deviation: f64,
    #[arg(long)]
    target_failure: f64,
    #[arg(long, default_value_t = DEFAULT_HOEFFDING_C)]
    hoeffding_c: f64,
    #[arg(long, default_value_t = DEFAULT_HOEFFDING_SMALL_C)]
    hoeffding_small_c: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ScanMArgs {
    #[arg(long, default_value_t = 4)]
    dim: usize,
    /// Frobenius norms of W as a JSON array.
    #[arg(long)]
    norms_w: String,
    /// Frobenius norms of D as a JSON array.
    #[arg(long)]
    norms_d: String,
    #[arg(long, default_value_t = 2000)]
    depth: usize,
    #[arg(long, default_value_t = DEFAULT_GROWTH_TOL)]
    growth_tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct InsertLayersArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    n: usize,
    /// Four slots as a JSON array, each "after layer k"; defaults to 1, 3, 5, 7.
    #[arg(long)]
    slots: Option<String>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentCommand {
    /// MSE against the noiseless network over a copy grid.
    Mse(GridArgs),
    /// Accuracy and relative accuracy over a copy grid.
    Accuracy(GridArgs),
    /// MSE over inserted identity layers and noise levels.
    Depth(DepthArgs),
}

impl ExperimentCommand {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentCommand::Mse(_) => "mse",
            ExperimentCommand::Accuracy(_) => "accuracy",
            ExperimentCommand::Depth(_) => "depth",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GridArgs {
    /// Copy counts as a JSON array.
    #[arg(long, default_value = "[1,2,4,8]")]
    grid: String,
}

#[derive(Debug, Args, Serialize)]
pub struct DepthArgs {
    /// Inserted-layer counts as a JSON array.
    #[arg(long, default_value = "[0,1,2,3,4]")]
    n_grid: String,
    /// Noise variances as a JSON array.
    #[arg(long)]
    variances: String,
    /// Four insertion slots as a JSON array.
    #[arg(long)]
    slots: Option<String>,
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Usage(format!("--{what}: {e}")))
}

fn load_net(prov: &mut Provenance, path: &Path) -> Result<Network, CliError> {
    Network::from_json_str(&prov.read_string(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_profile(prov: &mut Provenance, path: Option<&Path>, net: &Network) -> Result<NoiseProfile, CliError> {
    let profile = match path {
        Some(p) => NoiseProfile::from_json_str(&prov.read_string(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => NoiseProfile::zero(net.depth()),
    };
    profile.check_dims(&net.dims())?;
    Ok(profile)
}

fn parse_input(text: &str, net: &Network) -> Result<DVector<f64>, CliError> {
    let v: Vec<f64> = parse_json(text, "input")?;
    if v.len() != net.input_dim() {
        return Err(CliError::Usage(format!(
            "--input has {} entries, network expects {}",
            v.len(),
            net.input_dim()
        )));
    }
    Ok(DVector::from_vec(v))
}

fn vector_table(v: &DVector<f64>) -> Table {
    let mut t = Table::new(&["index", "value"]);
    for (i, x) in v.iter().enumerate() {
        t.push(vec![json!(i), json!(x)]);
    }
    t
}

/// Monte Carlo output: summary statistics and the samples they came from.
struct Sampled {
    stats: SampleStats,
    samples: Vec<DVector<f64>>,
    reference: DVector<f64>,
    confidence: f64,
}

impl Sampled {
    /// Normal-approximation interval of `estimate` from per-trial contributions.
    fn interval(&self, estimate: f64, per_trial: impl Fn(&DVector<f64>) -> f64) -> Result<[f64; 2], CliError> {
        let values: Vec<f64> = self.samples.iter().map(per_trial).collect();
        let half = mean_interval(&values, self.confidence)?.half_width();
        Ok([estimate - half, estimate + half])
    }
}

fn stats_report(s: &Sampled, extra: Value) -> Result<Report, CliError> {
    let stats = &s.stats;
    let n = stats.n as f64;
    let d = stats.mean.len();
    let mut t = Table::new(&["stat", "i", "j", "value", "ci_low", "ci_high", "trials", "confidence"]);
    let mut row = |stat: &str, i: Value, j: Value, value: f64, ci: [f64; 2]| {
        t.push(vec![json!(stat), i, j, json!(value), json!(ci[0]), json!(ci[1]), json!(stats.n), json!(s.confidence)]);
    };
    let mut mean_ci = Vec::with_capacity(d);
    for i in 0..d {
        let ci = s.interval(stats.mean[i], |y| y[i])?;
        row("mean", json!(i), Value::Null, stats.mean[i], ci);
        mean_ci.push(ci);
    }
    let mut cov_ci = vec![vec![[0.0; 2]; d]; d];
    for i in 0..d {
        for j in 0..d {
            let (mi, mj) = (stats.mean[i], stats.mean[j]);
            let ci = s.interval(stats.covariance[(i, j)], |y| (y[i] - mi) * (y[j] - mj) * n / (n - 1.0))?;
            row("covariance", json!(i), json!(j), stats.covariance[(i, j)], ci);
            cov_ci[i][j] = ci;
        }
    }
    let mse_ci = s.interval(stats.mse_vs_reference, |y| (y - &s.reference).norm_squared())?;
    row("mse_vs_reference", Value::Null, Value::Null, stats.mse_vs_reference, mse_ci);
    let mut result = json!({
        "trials": stats.n,
        "confidence": s.confidence,
        "mean": stats.mean.as_slice(),
        "mean_ci": mean_ci,
        "covariance": matrix_to_rows(&stats.covariance),
        "covariance_ci": cov_ci,
        "mse_vs_reference": stats.mse_vs_reference,
        "mse_vs_reference_ci": mse_ci,
    });
    if let (Value::Object(r), Value::Object(e)) = (&mut result, extra) {
        r.extend(e);
    }
    Report::new(&result, Some(t))
}

fn trajectory_table(traj: &Trajectory) -> Table {
    let mut t = Table::new(&["index", "i", "j", "value"]);
    for s in &traj.states {
        for i in 0..s.sigma.nrows() {
            for j in 0..s.sigma.ncols() {
                t.push(vec![json!(s.layer_index), json!(i), json!(j), json!(s.sigma[(i, j)])]);
            }
        }
    }
    t
}

fn matrix_table(m: &DMatrix<f64>) -> Table {
    let mut t = Table::new(&["i", "j", "value"]);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            t.push(vec![json!(i), json!(j), json!(m[(i, j)])]);
        }
    }
    t
}

fn linear(net: &Network) -> Result<LinearNet, CliError> {
    Ok(net.as_linear()?)
}

/// The repeated layer of a one-layer square network with its layer-1 noise.
fn symmetric_config(net: &Network, profile: &NoiseProfile, m: usize) -> Result<SymmetricConfig, CliError> {
    let lin = linear(net)?;
    if lin.depth() != 1 {
        return Err(CliError::Usage(format!(
            "closed forms and limits take a single repeated layer; the network has {} layers",
            lin.depth()
        )));
    }
    if !profile.combine().is_zero() || !profile.split().is_zero() {
        return Err(CliError::Usage(
            "closed forms and limits do not model combine/split noise; set them to zero".into(),
        ));
    }
    let layer = &lin.layers()[0];
    Ok(SymmetricConfig::new(
        layer.d.clone(),
        layer.w.clone(),
        profile.modulation(),
        profile.weight(1),
        profile.activation(1),
    )?
    .with_m(m)?)
}

struct Run {
    seed: u64,
    trials: usize,
    exec: Exec,
    confidence: f64,
}

fn run_params(global: &Global, sequential: bool) -> Run {
    Run {
        seed: global.seed.unwrap_or(DEFAULT_SEED),
        trials: global.trials.unwrap_or(DEFAULT_TRIALS),
        exec: if sequential { Exec::Sequential } else { Exec::Parallel },
        confidence: global.confidence.unwrap_or(DEFAULT_CONFIDENCE),
    }
}

fn simulate<E: NoisyEvaluator>(
    eval: &E,
    x: &DVector<f64>,
    clean: &DVector<f64>,
    run: &Run,
) -> Result<Sampled, CliError> {
    z_value(run.confidence)?;
    if run.trials < 2 {
        return Err(CliError::Usage(format!("--trials must be at least 2, got {}", run.trials)));
    }
    let samples = sample_outputs(eval, x, run.trials, run.seed, run.exec)?;
    Ok(Sampled {
        stats: SampleStats::from_samples(&samples, clean)?,
        samples,
        reference: clean.clone(),
        confidence: run.confidence,
    })
}

fn outcome(report: Report, seed: u64, provenance: Provenance) -> Outcome {
    Outcome {
        report,
        seed,
        provenance,
        warnings: Vec::new(),
        default_output: None,
        plot: None,
    }
}

pub fn execute(global: &Global, command: &Command) -> Result<Outcome, CliError> {
    let mut prov = Provenance::default();
    let seed = global.seed.unwrap_or(DEFAULT_SEED);
    match command {
        Command::Forward(a) => {
            let net = load_net(&mut prov, &a.net)?;
            let y = net.forward(&parse_input(&a.input, &net)?)?;
            let report = Report::new(&json!({"output": y.as_slice()}), Some(vector_table(&y)))?;
            Ok(outcome(report, seed, prov))
        }
        Command::Simulate(a) => {
            let c = &a.common;
            let net = load_net(&mut prov, &c.net)?;
            let profile = load_profile(&mut prov, c.profile.as_deref(), &net)?;
            let x = parse_input(&c.input, &net)?;
            let run = run_params(global, c.sequential);
            let stats = simulate(&PlainOnn { net: &net, profile: &profile }, &x, &net.forward(&x)?, &run)?;
            Ok(outcome(stats_report(&stats, json!({}))?, run.seed, prov))
        }
        Command::DesignA(a) => {
            let c = &a.common;
            let net = load_net(&mut prov, &c.net)?;
            let profile = load_profile(&mut prov, c.profile.as_deref(), &net)?;
            let x = parse_input(&c.input, &net)?;
            let spec = match (&a.copies, a.uniform) {
                (Some(text), _) => DesignASpec::new(net.clone(), parse_json(text, "copies")?)?,
                (None, Some(n)) => DesignASpec::uniform(net.clone(), n)?,
                (None, None) => return Err(CliError::Usage("design-a needs --copies or --uniform".into())),
            };
            let run = run_params(global, c.sequential);
            let stats = simulate(&DesignA { spec: &spec, profile: &profile }, &x, &net.forward(&x)?, &run)?;
            let (_, additions) = eval_design_a_counted(&spec, &x, &NoiseProfile::zero(net.depth()), &RngStream::new(0))?;
            let extra = json!({
                "copies": spec.copies(),
                "total_copies": spec.total_copies().to_string(),
                "weighted_additions": additions,
            });
            Ok(outcome(stats_report(&stats, extra)?, run.seed, prov))
        }
        Command::DesignB(a) => {
            let c = &a.common;
            let net = load_net(&mut prov, &c.net)?;
            let profile = load_profile(&mut prov, c.profile.as_deref(), &net)?;
            let x = parse_input(&c.input, &net)?;
            let spec = DesignBSpec::new(net.clone(), a.m)?;
            let run = run_params(global, c.sequential);
            let stats = simulate(&DesignB { spec: &spec, profile: &profile }, &x, &net.forward(&x)?, &run)?;
            let (_, additions) = eval_design_b_counted(&spec, &x, &NoiseProfile::zero(net.depth()), &RngStream::new(0))?;
            let extra = json!({"m": a.m, "weighted_additions": additions});
            Ok(outcome(stats_report(&stats, extra)?, run.seed, prov))
        }
        Command::Covariance(a) => {
            let net = load_net(&mut prov, &a.net)?;
            let profile = load_profile(&mut prov, Some(&a.profile), &net)?;
            let lin = linear(&net)?;
            let single = |index: usize, sigma: DMatrix<f64>| Trajectory {
                states: vec![CovarianceState { layer_index: index, sigma }],
            };
            let closed_depth = || {
                a.depth
                    .ok_or_else(|| CliError::Usage("closed forms need --depth".into()))
            };
            let traj = match a.method {
                CovarianceMethod::Propagate => propagate(&lin, &profile)?,
                CovarianceMethod::PropagateB => propagate_b(&lin, &profile, a.m)?,
                CovarianceMethod::PropagateBAveraged => single(lin.depth(), propagate_b_averaged(&lin, &profile, a.m)?),
                CovarianceMethod::ExactB => design_b_output_covariance(&lin, &profile, a.m)?,
                CovarianceMethod::ClosedForm => {
                    let depth = closed_depth()?;
                    single(depth, symmetric_closed_form(&symmetric_config(&net, &profile, 1)?, depth)?)
                }
                CovarianceMethod::ClosedFormB => {
                    let depth = closed_depth()?;
                    single(depth, symmetric_closed_form_b(&symmetric_config(&net, &profile, a.m)?, depth)?)
                }
            };
            let table = trajectory_table(&traj);
            Ok(outcome(Report::new(&traj, Some(table))?, seed, prov))
        }
        Command::Limit(a) => {
            let net = load_net(&mut prov, &a.net)?;
            let profile = load_profile(&mut prov, Some(&a.profile), &net)?;
            let averaged = a.m.is_some();
            let cfg = symmetric_config(&net, &profile, a.m.unwrap_or(1))?;
            let contraction = match a.contraction {
                ContractionArg::Frobenius => Contraction::Frobenius,
                ContractionArg::Operator => Contraction::OperatorNorm,
            };
            let report = match a.method {
                LimitMethod::Series => {
                    let lim = if averaged {
                        limit_series_b(&cfg, a.tol, contraction)?
                    } else {
                        limit_series(&cfg, a.tol, contraction)?
                    };
                    Report::new(&lim, Some(matrix_table(&lim.sigma)))?
                }
                LimitMethod::Iterate | LimitMethod::Vectorized => {
                    let method = if a.method == LimitMethod::Iterate {
                        FixedPointMethod::Iterate
                    } else {
                        FixedPointMethod::Vectorized
                    };
                    let fp = if averaged {
                        fixed_point_solve_b(&cfg, method, contraction)?
                    } else {
                        fixed_point_solve(&cfg, method, contraction)?
                    };
                    Report::new(&fp, Some(matrix_table(&fp.sigma)))?
                }
            };
            Ok(outcome(report, seed, prov))
        }
        Command::Copies(a) => {
            let net = load_net(&mut prov, &a.net)?;
            let profile = load_profile(&mut prov, Some(&a.profile), &net)?;
            let req = CopyBudgetRequest {
                sigma_sq: common_variance_bound(&profile)?,
                deltas: parse_json(&a.deltas, "deltas")?,
                kappas: parse_json(&a.kappas, "kappas")?,
                target_deviation: a.target_deviation,
                target_failure: a.target_failure,
                hoeffding_big_c: a.hoeffding_c,
                hoeffding_small_c: a.hoeffding_small_c,
                lipschitz: net.lipschitz_bounds()?,
            };
            let budget = sufficient_copies(&req, &net.dims()[1..])?;
            let mut t = Table::new(&["layer", "copies", "bound", "total"]);
            for (l, &n) in budget.copies.iter().enumerate() {
                let bound = budget.bounds.get(l).map_or(Value::Null, |b| json!(b));
                t.push(vec![json!(l), json!(n), bound, json!(budget.total.to_string())]);
            }
            let result = json!({"sigma_sq": req.sigma_sq, "budget": budget});
            Ok(outcome(Report::new(&result, Some(t))?, seed, prov))
        }
        Command::ScanM(a) => {
            let rows = scan_m_grid(
                a.dim,
                &parse_json::<Vec<f64>>(&a.norms_w, "norms-w")?,
                &parse_json::<Vec<f64>>(&a.norms_d, "norms-d")?,
                a.depth,
                a.growth_tol,
                Exec::Parallel,
            )?;
            let table = Table::from_rows(&rows)?;
            Ok(outcome(Report::new(&rows, Some(table))?, seed, prov))
        }
        Command::InsertLayers(a) => {
            let net = load_net(&mut prov, &a.net)?;
            let slots = a
                .slots
                .as_deref()
                .map(|s| parse_json::<[usize; 4]>(s, "slots"))
                .transpose()?;
            let plan = InsertionPlan::new(&net, a.n, slots)?;
            let deeper = insert_identity_layers(&net, &plan)?;
            let result = json!({"plan": plan, "network": deeper});
            Ok(outcome(Report::new(&result, None)?, seed, prov))
        }
        Command::Experiment(e) => experiment(global, e, prov),
    }
}

fn experiment(global: &Global, cmd: &ExperimentCommand, mut prov: Provenance) -> Result<Outcome, CliError> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("experiments need --config".into()))?;
    let mut cfg = ExperimentConfig::from_json_str(&prov.read_string(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    cfg.resolve_paths(path.parent().unwrap_or_else(|| Path::new(".")));
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = global.trials {
        cfg.trials = trials;
    }
    cfg.confidence = global.confidence.unwrap_or(cfg.confidence);
    let setup = cfg.prepare()?;
    for p in referenced_files(&cfg) {
        prov.read(&p)?;
    }
    let kind = match &cfg.design {
        DesignChoice::None => DesignKind::None,
        DesignChoice::A { .. } => DesignKind::A,
        DesignChoice::B { .. } => DesignKind::B,
    };
    let plot = |x, y, low, high| Some(Plot { x, y, low, high });
    let (report, plot) = match cmd {
        ExperimentCommand::Mse(g) | ExperimentCommand::Accuracy(g) => {
            if kind == DesignKind::None {
                return Err(CliError::Usage(
                    "copy-grid experiments need design {\"a\": ...} or {\"b\": ...} in the config".into(),
                ));
            }
            let grid: Vec<u64> = parse_json(&g.grid, "grid")?;
            if let ExperimentCommand::Accuracy(_) = cmd {
                let labels = setup
                    .labels
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("accuracy needs labelled inputs (idx labels)".into()))?;
                let rows = run_accuracy_experiment(&setup, labels, kind, &grid, Exec::Parallel)?;
                let report = Report::new(&rows, Some(Table::from_rows(&rows)?))?;
                (report, plot("copies", "acc_design", "acc_design_low", "acc_design_high"))
            } else {
                let rows = run_mse_experiment(&setup, kind, &grid, Exec::Parallel)?;
                (Report::new(&rows, Some(Table::from_rows(&rows)?))?, plot("copies", "mse", "ci_low", "ci_high"))
            }
        }
        ExperimentCommand::Depth(d) => {
            let copies = match &cfg.design {
                DesignChoice::None => 1,
                DesignChoice::A { copies } => copies[0],
                DesignChoice::B { m } => *m,
            };
            let slots = d
                .slots
                .as_deref()
                .map(|s| parse_json::<[usize; 4]>(s, "slots"))
                .transpose()?;
            let rows = run_depth_sweep(
                &setup,
                &parse_json::<Vec<usize>>(&d.n_grid, "n-grid")?,
                &parse_json::<Vec<f64>>(&d.variances, "variances")?,
                slots,
                kind,
                copies,
                Exec::Parallel,
            )?;
            (Report::new(&rows, Some(Table::from_rows(&rows)?))?, plot("inserted", "mse", "ci_low", "ci_high"))
        }
    };
    Ok(Outcome {
        report,
        seed: setup.seed,
        provenance: prov,
        warnings: setup.warnings.clone(),
        default_output: cfg.output.clone(),
        plot,
    })
}

fn referenced_files(cfg: &ExperimentConfig) -> Vec<PathBuf> {
    use onn_noise::experiments::{InputSource, NoiseSource};
    let mut files = vec![cfg.network.clone()];
    if let NoiseSource::Profile(p) = &cfg.noise {
        files.push(p.clone());
    }
    if let InputSource::Idx { images, labels, .. } = &cfg.inputs {
        files.push(images.clone());
        files.extend(labels.clone());
    }
    files
}
