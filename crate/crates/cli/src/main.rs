//! `onn-noise`: noisy forward passes, designs, covariance analysis and experiments.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::CliError;
use crate::output::Format;

#[derive(Debug, Parser)]
#[command(name = "onn-noise", version, about = "Noise propagation and noise-averaging designs for optical neural networks")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Global {
    /// Root seed of all random streams (experiments default to the config's seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo trials (experiments default to the config's trials).
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Experiment configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    #[serde(skip)]
    pub format: Format,
    /// Also write a gnuplot script for the CSV result (experiments only).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub gnuplot: Option<PathBuf>,
    /// Confidence level of reported intervals.
    #[arg(long, global = true)]
    pub confidence: Option<f64>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Noiseless forward pass.
    Forward(commands::ForwardArgs),
    /// Monte Carlo statistics of the plain noisy network.
    Simulate(commands::SimulateArgs),
    /// Monte Carlo statistics of the tree-replication design.
    DesignA(commands::DesignAArgs),
    /// Monte Carlo statistics of the combine/split design.
    DesignB(commands::DesignBArgs),
    /// Exact covariance trajectories of diagonal-linear networks.
    Covariance(commands::CovarianceArgs),
    /// Infinite-depth covariance of a repeated square layer.
    Limit(commands::LimitArgs),
    /// Copy counts sufficient for a deviation target.
    Copies(commands::CopiesArgs),
    /// Minimal stable m over a grid of scaled-identity layers.
    ScanM(commands::ScanMArgs),
    /// Insert identity layers into a network.
    InsertLayers(commands::InsertLayersArgs),
    /// Experiments driven by a configuration file.
    #[command(subcommand)]
    Experiment(commands::ExperimentCommand),
}

impl Command {
    fn name(&self) -> String {
        let base = match self {
            Command::Forward(_) => "forward",
            Command::Simulate(_) => "simulate",
            Command::DesignA(_) => "design-a",
            Command::DesignB(_) => "design-b",
            Command::Covariance(_) => "covariance",
            Command::Limit(_) => "limit",
            Command::Copies(_) => "copies",
            Command::ScanM(_) => "scan-m",
            Command::InsertLayers(_) => "insert-layers",
            Command::Experiment(e) => return format!("experiment {}", e.name()),
        };
        base.to_string()
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let name = cli.command.name();
    let args = serde_json::json!({"global": &cli.global, "command": &cli.command});
    let outcome = commands::execute(&cli.global, &cli.command)?;
    let meta = output::Meta {
        config_hash: outcome.provenance.config_hash(&name, &args),
        command: name,
        seed: outcome.seed,
        generator: onn_noise::rng::GENERATOR_NAME,
    };
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let text = outcome.report.render(&meta, cli.global.format)?;
    let target = cli.global.output.as_ref().or(outcome.default_output.as_ref());
    let script = match &cli.global.gnuplot {
        None => None,
        Some(path) => {
            let plot = outcome
                .plot
                .ok_or_else(|| CliError::Usage(format!("`{}` has no plot; --gnuplot is for experiments", meta.command)))?;
            let data = match (cli.global.format, target) {
                (Format::Csv, Some(data)) => data,
                _ => return Err(CliError::Usage("--gnuplot needs --format csv and an output file".into())),
            };
            Some((path, plot.script(&text, data)?))
        }
    };
    output::emit(&text, target)?;
    if let Some((path, script)) = script {
        output::emit(&script, Some(path))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
