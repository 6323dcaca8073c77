//! Random instance generators and reporting shared by the acceptance run.

use std::fmt;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use onn_noise::linear::{LinearLayer, LinearNet, SymmetricConfig};
use onn_noise::{CovSpec, NoiseProfile, RngStream};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    /// Not evaluated; the detail explains why.
    Skip,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Skip => "SKIP",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: String,
    pub title: &'static str,
    pub outcome: Outcome,
    pub detail: String,
}

impl Verdict {
    pub fn new(id: impl Into<String>, title: &'static str, pass: bool, detail: String) -> Self {
        Verdict {
            id: id.into(),
            title,
            outcome: if pass { Outcome::Pass } else { Outcome::Fail },
            detail,
        }
    }

    pub fn skip(id: impl Into<String>, title: &'static str, detail: String) -> Self {
        Verdict {
            id: id.into(),
            title,
            outcome: Outcome::Skip,
            detail,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "criterion {}: {} | {} | {}", self.id, self.outcome, self.title, self.detail)
    }
}

/// Directory holding the committed network and dataset fixtures.
pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn random_vector(rng: &mut RngStream, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| uniform(rng, lo, hi))
}

/// `B Bᵀ` with `B` uniform in `[−1, 1]`, rescaled to trace `scale·n`.
pub fn random_psd(rng: &mut RngStream, n: usize, scale: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| uniform(rng, -1.0, 1.0));
    let s = &b * b.transpose();
    let tr = s.trace().max(f64::MIN_POSITIVE);
    s * (scale * n as f64 / tr)
}

/// Full, diagonal or isotropic with equal odds.
pub fn random_cov(rng: &mut RngStream, n: usize, scale: f64) -> CovSpec {
    match rng.random_range(0..3) {
        0 => CovSpec::Full(random_psd(rng, n, scale)),
        1 => CovSpec::Diagonal((0..n).map(|_| uniform(rng, 0.2, 1.8) * scale).collect()),
        _ => CovSpec::Isotropic(uniform(rng, 0.2, 1.8) * scale),
    }
}

/// `±[0.5, 1.2]` entries.
pub fn random_diag(rng: &mut RngStream, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| {
        let v = uniform(rng, 0.5, 1.2);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

pub fn random_weights(rng: &mut RngStream, rows: usize, cols: usize) -> DMatrix<f64> {
    let scale = 1.0 / (cols as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| uniform(rng, -1.0, 1.0) * scale)
}

/// A diagonal-linear network with `1..=max_depth` layers of widths `1..=max_dim`.
pub fn random_linear_net(rng: &mut RngStream, max_depth: usize, max_dim: usize) -> LinearNet {
    let depth = rng.random_range(1..=max_depth);
    let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=max_dim)).collect();
    let layers = (0..depth)
        .map(|l| LinearLayer::new(random_diag(rng, dims[l + 1]), random_weights(rng, dims[l + 1], dims[l])).unwrap())
        .collect();
    LinearNet::new(layers).unwrap()
}

/// Random modulation, weight and activation noise matching `dims`.
pub fn random_profile(rng: &mut RngStream, dims: &[usize], scale: f64) -> NoiseProfile {
    let modulation = random_cov(rng, dims[0], scale);
    let weight = dims[1..].iter().map(|&d| random_cov(rng, d, scale)).collect();
    let activation = dims[1..].iter().map(|&d| random_cov(rng, d, scale)).collect();
    NoiseProfile::new(modulation, weight, activation).unwrap()
}

/// A repeated square layer; when `frobenius_product` is given, `W` is rescaled
/// so that `‖D‖_F‖W‖_F` equals it.
pub fn random_symmetric_config(
    rng: &mut RngStream,
    max_dim: usize,
    frobenius_product: Option<f64>,
) -> SymmetricConfig {
    let n = rng.random_range(1..=max_dim);
    let d = random_diag(rng, n);
    let mut w = random_weights(rng, n, n);
    if let Some(target) = frobenius_product {
        w *= target / (d.norm() * w.norm());
    }
    let specs: Vec<CovSpec> = (0..3).map(|_| CovSpec::Full(random_psd(rng, n, 0.1))).collect();
    SymmetricConfig::new(d, w, &specs[0], &specs[1], &specs[2]).unwrap()
}

pub fn rel_frobenius(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    (estimate - truth).norm() / truth.norm()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

pub fn bitwise_eq(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
