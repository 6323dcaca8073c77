//! Exact output covariances of noisy networks with diagonal-linear activations.
//!
//! A layer with activation `y ↦ D y` maps an input covariance `Σ` to
//! `T(Σ) = DWΣWᵀD + DΣ_wD + Σ_a`. The combine/split design averages `m`
//! weighted additions per layer, giving
//! `T_m(Σ) = (1/m)DWΣ(DW)ᵀ + (1/m)DΣ_wD + (1/m²)DΣ_sumD + DΣ_splD + Σ_a`.
//! Both maps are affine in `Σ`, so deep compositions have closed forms,
//! geometric limits and fixed points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, frobenius, matrix_to_rows, symmetrize};
use crate::net::{Activation, Layer, Network};
use crate::noise::{CovSpec, NoiseProfile};

/// Frobenius step below which `iterate` declares convergence.
pub const FIXED_POINT_STEP_TOL: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITER: usize = 1_000_000;
/// Largest dimension for which the `d² × d²` Kronecker system is built.
pub const VECTORIZED_MAX_DIM: usize = 64;
/// Safety cap on the number of series terms.
pub const SERIES_MAX_TERMS: usize = 10_000_000;
pub const MIN_STABLE_M_CAP: usize = 1_000_000;
pub const MIN_STABLE_M_MIN_DEPTH: usize = 50;
pub const DEFAULT_GROWTH_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    /// Diagonal of `D`.
    pub d: DVector<f64>,
    pub w: DMatrix<f64>,
}

impl LinearLayer {
    pub fn new(d: DVector<f64>, w: DMatrix<f64>) -> Result<Self> {
        if d.len() != w.nrows() {
            return Err(Error::dim("diagonal activation vs weight rows", w.nrows(), d.len()));
        }
        Ok(LinearLayer { d, w })
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    /// The product `D W`.
    pub fn dw(&self) -> DMatrix<f64> {
        scale_rows(&self.d, &self.w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearNet {
    layers: Vec<LinearLayer>,
}

impl LinearNet {
    pub fn new(layers: Vec<LinearLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("linear network needs at least one layer".into()));
        }
        for (idx, pair) in layers.windows(2).enumerate() {
            if pair[1].input_dim() != pair[0].output_dim() {
                return Err(Error::dim(
                    format!("layer {} input", idx + 2),
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        Ok(LinearNet { layers })
    }

    /// `depth` copies of one square layer.
    pub fn repeated(layer: LinearLayer, depth: usize) -> Result<Self> {
        Self::new(vec![layer; depth])
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// The same map as a [`Network`] with zero biases and diagonal activations.
    pub fn to_network(&self) -> Result<Network> {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer::new(l.w.clone(), DVector::zeros(l.output_dim()), Activation::Diag(l.d.iter().copied().collect())))
            .collect();
        Network::new(self.layers[0].input_dim(), layers)
    }

    /// `d_0, d_1, …, d_L`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].input_dim())
            .chain(self.layers.iter().map(LinearLayer::output_dim))
            .collect()
    }
}

fn scale_rows(d: &DVector<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = w.clone();
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row *= d[i];
    }
    a
}

/// `D S D` for diagonal `D`.
fn diag_sandwich(d: &DVector<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| d[i] * s[(i, j)] * d[j])
}

fn congruence(a: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    a * s * a.transpose()
}

fn is_zero(m: &DMatrix<f64>) -> bool {
    m.iter().all(|&v| v == 0.0)
}

fn check_square(m: &DMatrix<f64>, dim: usize, what: &str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::dim(format!("{what} ({}x{})", m.nrows(), m.ncols()), dim, m.nrows().max(m.ncols())));
    }
    Ok(())
}

/// `T(Σ) = DWΣWᵀD + DΣ_wD + Σ_a`, re-symmetrized.
pub fn step_map(
    d: &DVector<f64>,
    w: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
    sigma_a: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    step_map_b(d, w, sigma, sigma_w, sigma_a, None, 1)
}

/// `T_m(Σ)`; `combine_split` holds `(Σ_sum, Σ_spl)`, `None` meaning both zero.
///
/// With `m = 1` and no combine/split noise this is bit-identical to [`step_map`].
pub fn step_map_b(
    d: &DVector<f64>,
    w: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
    sigma_a: &DMatrix<f64>,
    combine_split: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    m: usize,
) -> Result<DMatrix<f64>> {
    if m < 1 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let out = w.nrows();
    if d.len() != out {
        return Err(Error::dim("diagonal activation vs weight rows", out, d.len()));
    }
    check_square(sigma, w.ncols(), "input covariance")?;
    check_square(sigma_w, out, "weight noise covariance")?;
    check_square(sigma_a, out, "activation noise covariance")?;
    let inv_m = 1.0 / m as f64;
    let a = scale_rows(d, w);
    let mut next = congruence(&a, sigma) * inv_m + diag_sandwich(d, sigma_w) * inv_m;
    if let Some((sum, spl)) = combine_split {
        check_square(sum, out, "combine noise covariance")?;
        check_square(spl, out, "split noise covariance")?;
        if !is_zero(sum) {
            next += diag_sandwich(d, sum) * (inv_m * inv_m);
        }
        if !is_zero(spl) {
            next += diag_sandwich(d, spl);
        }
    }
    next += sigma_a;
    Ok(symmetrize(&next))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceState {
    #[serde(rename = "index")]
    pub layer_index: usize,
    #[serde(with = "rows")]
    pub sigma: DMatrix<f64>,
}

mod rows {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let r = Vec::<Vec<f64>>::deserialize(d)?;
        linalg::matrix_from_rows(&r, "sigma").map_err(serde::de::Error::custom)
    }
}

impl CovarianceState {
    /// Symmetric to `SYMMETRY_TOL` and positive semidefinite to `PSD_PIVOT_TOL`.
    pub fn check(&self) -> Result<()> {
        linalg::psd_factor(&self.sigma).map(|_| ())
    }
}

/// `Σ^(0), Σ^(1), …, Σ^(L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(rename = "layers")]
    pub states: Vec<CovarianceState>,
}

impl Trajectory {
    fn from_sigmas(sigmas: Vec<DMatrix<f64>>) -> Self {
        Trajectory {
            states: sigmas
                .into_iter()
                .enumerate()
                .map(|(layer_index, sigma)| CovarianceState { layer_index, sigma })
                .collect(),
        }
    }

    pub fn last(&self) -> &CovarianceState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn output(&self) -> &DMatrix<f64> {
        &self.last().sigma
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serialization is infallible")
    }
}

fn spec_matrices(specs: &[CovSpec], dims: &[usize]) -> Result<Vec<DMatrix<f64>>> {
    specs.iter().zip(&dims[1..]).map(|(s, &d)| s.matrix(d)).collect()
}

/// Covariance of every layer output of the plain noisy network, from `Σ^(0) = Σ_m`.
pub fn propagate(net: &LinearNet, profile: &NoiseProfile) -> Result<Trajectory> {
    propagate_b(net, &profile.clone().with_combine(CovSpec::Zero)?.with_split(CovSpec::Zero)?, 1)
}

/// The recursion `Σ^(ℓ) = T_m(Σ^(ℓ−1))`, `Σ^(0) = Σ_m`.
pub fn propagate_b(net: &LinearNet, profile: &NoiseProfile, m: usize) -> Result<Trajectory> {
    let dims = net.dims();
    profile.check_dims(&dims)?;
    let sw = spec_matrices(profile.weights(), &dims)?;
    let sa = spec_matrices(profile.activations(), &dims)?;
    let mut sigmas = vec![profile.modulation().matrix(dims[0])?];
    for (idx, layer) in net.layers().iter().enumerate() {
        let d = dims[idx + 1];
        let sum = profile.combine().matrix(d)?;
        let spl = profile.split().matrix(d)?;
        let cs = (!is_zero(&sum) || !is_zero(&spl)).then_some((&sum, &spl));
        let next = step_map_b(&layer.d, &layer.w, &sigmas[idx], &sw[idx], &sa[idx], cs, m)?;
        sigmas.push(next);
    }
    Ok(Trajectory::from_sigmas(sigmas))
}

/// Covariance of the average of the `m` final branches given the recursion's
/// per-branch covariance: the split and activation noise of the last layer are
/// independent across branches, so averaging divides them by `m`.
pub fn terminal_average_correction(
    sigma_last: &DMatrix<f64>,
    d_last: &DVector<f64>,
    sigma_a: &DMatrix<f64>,
    sigma_spl: &DMatrix<f64>,
    m: usize,
) -> Result<DMatrix<f64>> {
    if m < 1 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let dim = sigma_last.nrows();
    check_square(sigma_a, dim, "activation noise covariance")?;
    check_square(sigma_spl, dim, "split noise covariance")?;
    let per_branch = sigma_a + diag_sandwich(d_last, sigma_spl);
    Ok(symmetrize(&(sigma_last - per_branch * (1.0 - 1.0 / m as f64))))
}

/// [`propagate_b`] followed by [`terminal_average_correction`].
pub fn propagate_b_averaged(net: &LinearNet, profile: &NoiseProfile, m: usize) -> Result<DMatrix<f64>> {
    let traj = propagate_b(net, profile, m)?;
    let dims = net.dims();
    let l = net.depth();
    let last = &net.layers()[l - 1];
    terminal_average_correction(
        traj.output(),
        &last.d,
        &profile.activation(l).matrix(dims[l])?,
        &profile.split().matrix(dims[l])?,
        m,
    )
}

/// Exact covariance of the combine/split evaluator's output on a linear network.
///
/// All branches of a layer share the combined pre-activation, so the state that
/// propagates is the covariance of the branch average `h̄`:
/// `Q_0 = Σ_m/m`, `C_ℓ = W Q_{ℓ−1} Wᵀ + Σ_w/m + Σ_sum/m²`,
/// `Q_ℓ = D C_ℓ D + DΣ_splD/m + Σ_a/m`. The returned trajectory holds `Q_0..Q_L`.
pub fn design_b_output_covariance(net: &LinearNet, profile: &NoiseProfile, m: usize) -> Result<Trajectory> {
    if m < 1 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let dims = net.dims();
    profile.check_dims(&dims)?;
    let inv_m = 1.0 / m as f64;
    let mut sigmas = vec![profile.modulation().matrix(dims[0])? * inv_m];
    for (idx, layer) in net.layers().iter().enumerate() {
        let l = idx + 1;
        let d = dims[l];
        let pre = congruence(&layer.w, &sigmas[idx])
            + profile.weight(l).matrix(d)? * inv_m
            + profile.combine().matrix(d)? * (inv_m * inv_m);
        let q = diag_sandwich(&layer.d, &pre)
            + diag_sandwich(&layer.d, &profile.split().matrix(d)?) * inv_m
            + profile.activation(l).matrix(d)? * inv_m;
        sigmas.push(symmetrize(&q));
    }
    Ok(Trajectory::from_sigmas(sigmas))
}

/// A repeated square layer with fixed noise, as used by the closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricConfig {
    d: DVector<f64>,
    w: DMatrix<f64>,
    sigma_m: DMatrix<f64>,
    sigma_w: DMatrix<f64>,
    sigma_a: DMatrix<f64>,
    m: usize,
}

impl SymmetricConfig {
    pub fn new(
        d: DVector<f64>,
        w: DMatrix<f64>,
        sigma_m: &CovSpec,
        sigma_w: &CovSpec,
        sigma_a: &CovSpec,
    ) -> Result<Self> {
        let dim = d.len();
        check_square(&w, dim, "weight matrix")?;
        for spec in [sigma_m, sigma_w, sigma_a] {
            spec.compile()?;
        }
        Ok(SymmetricConfig {
            sigma_m: sigma_m.matrix(dim)?,
            sigma_w: sigma_w.matrix(dim)?,
            sigma_a: sigma_a.matrix(dim)?,
            d,
            w,
            m: 1,
        })
    }

    pub fn with_m(mut self, m: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        self.m = m;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn sigma_m(&self) -> &DMatrix<f64> {
        &self.sigma_m
    }

    pub fn sigma_w(&self) -> &DMatrix<f64> {
        &self.sigma_w
    }

    pub fn sigma_a(&self) -> &DMatrix<f64> {
        &self.sigma_a
    }

    pub fn dw(&self) -> DMatrix<f64> {
        scale_rows(&self.d, &self.w)
    }

    /// The equivalent `depth`-layer network.
    pub fn net(&self, depth: usize) -> Result<LinearNet> {
        LinearNet::repeated(LinearLayer::new(self.d.clone(), self.w.clone())?, depth)
    }

    /// The equivalent noise profile for `depth` layers.
    pub fn profile(&self, depth: usize) -> Result<NoiseProfile> {
        NoiseProfile::new(
            CovSpec::Full(self.sigma_m.clone()),
            vec![CovSpec::Full(self.sigma_w.clone()); depth],
            vec![CovSpec::Full(self.sigma_a.clone()); depth],
        )
    }

    /// `X ↦ s·AXAᵀ + C` with `s = 1` (plain) or `1/m` (combine/split).
    fn affine_map(&self, averaged: bool) -> AffineMap {
        let dsw = diag_sandwich(&self.d, &self.sigma_w);
        let (scale, c) = if averaged {
            let s = 1.0 / self.m as f64;
            (s, dsw * s + &self.sigma_a)
        } else {
            (1.0, dsw + &self.sigma_a)
        };
        AffineMap {
            a: self.dw(),
            scale,
            c,
        }
    }
}

struct AffineMap {
    a: DMatrix<f64>,
    scale: f64,
    c: DMatrix<f64>,
}

impl AffineMap {
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(congruence(&self.a, x) * self.scale + &self.c))
    }

    /// `s^L A^L X A^Lᵀ + Σ_{k<L} s^k A^k C A^kᵀ`.
    fn closed_form(&self, x0: &DMatrix<f64>, depth: usize) -> DMatrix<f64> {
        let n = self.c.nrows();
        let mut power = DMatrix::identity(n, n);
        let mut weight = 1.0;
        let mut acc = DMatrix::zeros(n, n);
        for _ in 0..depth {
            acc += congruence(&power, &self.c) * weight;
            power = &self.a * power;
            weight *= self.scale;
        }
        acc += congruence(&power, x0) * weight;
        symmetrize(&acc)
    }
}

/// `Σ^(L) = P^(0)Σ_m P^(0)ᵀ + Σ_ℓ P^(ℓ)(DΣ_wD + Σ_a)P^(ℓ)ᵀ` with `P^(ℓ) = (DW)^{L−ℓ}`.
pub fn symmetric_closed_form(cfg: &SymmetricConfig, depth: usize) -> Result<DMatrix<f64>> {
    if depth < 1 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    Ok(cfg.affine_map(false).closed_form(&cfg.sigma_m, depth))
}

/// `Σ_ℓ m^{−(L−ℓ+1)} P^(ℓ)(DΣ_wD + mΣ_a)P^(ℓ)ᵀ + m^{−L} P^(0)Σ_m P^(0)ᵀ`.
pub fn symmetric_closed_form_b(cfg: &SymmetricConfig, depth: usize) -> Result<DMatrix<f64>> {
    if depth < 1 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    Ok(cfg.affine_map(true).closed_form(&cfg.sigma_m, depth))
}

/// Which sufficient condition certifies that the series converges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contraction {
    /// `‖D‖_F‖W‖_F < √m`.
    #[default]
    Frobenius,
    /// Override: `‖DW‖_op < √m`.
    OperatorNorm,
}

impl Contraction {
    fn check(self, cfg: &SymmetricConfig, averaged: bool) -> Result<f64> {
        let m = if averaged { cfg.m as f64 } else { 1.0 };
        let op = linalg::operator_norm(&cfg.dw())?;
        let (value, name) = match self {
            Contraction::Frobenius => (cfg.d.norm() * frobenius(&cfg.w), "‖D‖_F‖W‖_F"),
            Contraction::OperatorNorm => (op, "‖DW‖_op"),
        };
        if !(value < m.sqrt()) {
            return Err(Error::Precondition(format!(
                "{name} = {value} is not below √m = {}",
                m.sqrt()
            )));
        }
        Ok(op * op / m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesLimit {
    #[serde(serialize_with = "rows::serialize")]
    pub sigma: DMatrix<f64>,
    pub terms: usize,
    /// Ratio `q` of the certified geometric tail.
    pub ratio: f64,
    pub contraction: Contraction,
}

fn series(map: &AffineMap, tol: f64, ratio: f64, contraction: Contraction) -> Result<SeriesLimit> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let n = map.c.nrows();
    let threshold = tol * (1.0 - ratio);
    let mut acc = DMatrix::zeros(n, n);
    let mut power = DMatrix::identity(n, n);
    let mut weight = 1.0;
    for k in 0..SERIES_MAX_TERMS {
        let term = congruence(&power, &map.c) * weight;
        let size = frobenius(&term);
        acc += term;
        if size < threshold {
            return Ok(SeriesLimit {
                sigma: symmetrize(&acc),
                terms: k + 1,
                ratio,
                contraction,
            });
        }
        power = &map.a * power;
        weight *= map.scale;
    }
    Err(Error::NotConverged {
        what: "limit series",
        iterations: SERIES_MAX_TERMS,
        residual: ratio,
        last_iterate: acc.iter().copied().collect(),
    })
}

/// `Σ_n (DW)^n (DΣ_wD + Σ_a) (DW)^nᵀ`, truncated once a term drops below
/// `tol·(1−q)` with `q = ‖DW‖²_op`, so the neglected tail is at most `tol`.
pub fn limit_series(cfg: &SymmetricConfig, tol: f64, contraction: Contraction) -> Result<SeriesLimit> {
    let q = contraction.check(cfg, false)?;
    series(&cfg.affine_map(false), tol, q, contraction)
}

/// `Σ_n m^{−(n+1)} (DW)^n (DΣ_wD + mΣ_a) (DW)^nᵀ` with `q = ‖DW‖²_op / m`.
pub fn limit_series_b(cfg: &SymmetricConfig, tol: f64, contraction: Contraction) -> Result<SeriesLimit> {
    let q = contraction.check(cfg, true)?;
    series(&cfg.affine_map(true), tol, q, contraction)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointMethod {
    Iterate,
    Vectorized,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPoint {
    #[serde(serialize_with = "rows::serialize")]
    pub sigma: DMatrix<f64>,
    /// Index of the first iterate whose image moved less than the step tolerance
    /// (0 for the vectorized solver).
    pub iterations: usize,
    /// `‖T(X) − X‖_F`.
    pub residual: f64,
}

fn solve_fixed_point(map: &AffineMap, start: &DMatrix<f64>, method: FixedPointMethod) -> Result<FixedPoint> {
    let n = map.c.nrows();
    let sigma = match method {
        FixedPointMethod::Iterate => {
            let mut x = start.clone();
            let mut step = f64::INFINITY;
            for k in 0..FIXED_POINT_MAX_ITER {
                let next = map.apply(&x);
                step = frobenius(&(&next - &x));
                if !step.is_finite() {
                    break;
                }
                if step < FIXED_POINT_STEP_TOL {
                    let residual = frobenius(&(map.apply(&next) - &next));
                    return Ok(FixedPoint {
                        sigma: next,
                        iterations: k,
                        residual,
                    });
                }
                x = next;
            }
            return Err(Error::NotConverged {
                what: "fixed-point iteration",
                iterations: FIXED_POINT_MAX_ITER,
                residual: step,
                last_iterate: x.iter().copied().collect(),
            });
        }
        FixedPointMethod::Vectorized => {
            if n > VECTORIZED_MAX_DIM {
                return Err(Error::InvalidArgument(format!(
                    "vectorized solver supports d ≤ {VECTORIZED_MAX_DIM}, got {n}; use iterate"
                )));
            }
            // Column-stacking vec: vec(AXAᵀ) = (A ⊗ A) vec X.
            let system = DMatrix::identity(n * n, n * n) - map.a.kronecker(&map.a) * map.scale;
            let rhs = DVector::from_column_slice(map.c.as_slice());
            let solution = system.clone().lu().solve(&rhs);
            let residual_of = |v: &DVector<f64>| (&system * v - &rhs).norm();
            match solution {
                Some(v) if residual_of(&v) <= 1e-8 * (1.0 + rhs.norm()) => {
                    symmetrize(&DMatrix::from_column_slice(n, n, v.as_slice()))
                }
                Some(v) => return Err(Error::Singular { residual: residual_of(&v) }),
                None => return Err(Error::Singular { residual: f64::INFINITY }),
            }
        }
    };
    let residual = frobenius(&(map.apply(&sigma) - &sigma));
    Ok(FixedPoint {
        sigma,
        iterations: 0,
        residual,
    })
}

/// Fixed point of `T`, by iteration from `Σ_m` or by solving `(I − A⊗A) vec X = vec C`.
pub fn fixed_point_solve(
    cfg: &SymmetricConfig,
    method: FixedPointMethod,
    contraction: Contraction,
) -> Result<FixedPoint> {
    contraction.check(cfg, false)?;
    solve_fixed_point(&cfg.affine_map(false), &cfg.sigma_m, method)
}

/// Fixed point of `T_m` (no combine/split noise).
pub fn fixed_point_solve_b(
    cfg: &SymmetricConfig,
    method: FixedPointMethod,
    contraction: Contraction,
) -> Result<FixedPoint> {
    contraction.check(cfg, true)?;
    solve_fixed_point(&cfg.affine_map(true), &cfg.sigma_m, method)
}

/// `‖T(X) − X‖_F` for the plain (`averaged = false`) or `T_m` map.
pub fn fixed_point_residual(cfg: &SymmetricConfig, x: &DMatrix<f64>, averaged: bool) -> f64 {
    let map = cfg.affine_map(averaged);
    frobenius(&(map.apply(x) - x))
}

/// `‖Σ^(L)‖_F / ‖Σ^(L−1)‖_F` of the `T_m` recursion with `m` copies, or `None`
/// once anything overflows.
pub fn growth_ratio(cfg: &SymmetricConfig, depth: usize, m: usize) -> Option<f64> {
    let map = SymmetricConfig { m, ..cfg.clone() }.affine_map(true);
    let mut prev = cfg.sigma_m.clone();
    let mut cur = map.apply(&prev);
    for _ in 1..depth {
        prev = cur;
        cur = map.apply(&prev);
        if !cur[(0, 0)].is_finite() {
            return None;
        }
    }
    let ratio = frobenius(&cur) / frobenius(&prev);
    ratio.is_finite().then_some(ratio)
}

/// Smallest `m` for which `‖Σ^(L)‖_F / ‖Σ^(L−1)‖_F ≤ 1 + growth_tol`, scanning `m = 1, 2, …`.
pub fn min_stable_m(cfg: &SymmetricConfig, depth: usize, growth_tol: f64) -> Result<usize> {
    if depth < MIN_STABLE_M_MIN_DEPTH {
        return Err(Error::InvalidArgument(format!(
            "depth must be at least {MIN_STABLE_M_MIN_DEPTH} to expose growth, got {depth}"
        )));
    }
    if !(growth_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("growth tolerance must be nonnegative, got {growth_tol}")));
    }
    for m in 1..=MIN_STABLE_M_CAP {
        if growth_ratio(cfg, depth, m).is_some_and(|r| r <= 1.0 + growth_tol) {
            return Ok(m);
        }
    }
    Err(Error::NotConverged {
        what: "minimal stable m scan",
        iterations: MIN_STABLE_M_CAP,
        residual: f64::NAN,
        last_iterate: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn scalar_cfg(d: f64, w: f64, sm: f64, sw: f64, sa: f64) -> SymmetricConfig {
        SymmetricConfig::new(v(d), s(w), &CovSpec::Isotropic(sm), &CovSpec::Isotropic(sw), &CovSpec::Isotropic(sa))
            .unwrap()
    }

    #[test]
    fn step_map_examples() {
        let i2 = DMatrix::identity(2, 2);
        let z = DMatrix::zeros(2, 2);
        let ones = DVector::from_element(2, 1.0);
        assert_eq!(step_map(&ones, &i2, &i2, &z, &z).unwrap(), i2);
        let forgotten = step_map(&ones, &z, &(i2.clone() * 7.0), &z, &(i2.clone() * 0.3)).unwrap();
        assert_eq!(forgotten, i2 * 0.3);
        let r = step_map(&v(0.5), &s(2.0), &s(1.0), &s(0.04), &s(0.09)).unwrap();
        assert_relative_eq!(r[(0, 0)], 1.1, epsilon = 1e-15);
    }

    #[test]
    fn step_map_rejects_mismatch() {
        let r = step_map(&v(1.0), &s(1.0), &DMatrix::identity(2, 2), &s(0.0), &s(0.0));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn step_map_b_examples() {
        let r = step_map_b(&v(1.0), &s(1.0), &s(1.0), &s(1.0), &s(0.0), None, 4).unwrap();
        assert_relative_eq!(r[(0, 0)], 0.5, epsilon = 1e-15);
        let r = step_map_b(&v(1.0), &s(1.0), &s(1.0), &s(1.0), &s(0.3), None, 1_000_000).unwrap();
        assert!((r[(0, 0)] - 0.3).abs() < 1e-5);
        assert!(step_map_b(&v(1.0), &s(1.0), &s(1.0), &s(1.0), &s(0.0), None, 0).is_err());
    }

    #[test]
    fn step_map_b_with_unit_m_is_bit_identical() {
        let d = DVector::from_vec(vec![0.7, -1.3]);
        let w = DMatrix::from_row_slice(2, 2, &[0.3, -0.2, 1.1, 0.9]);
        let sig = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let sw = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.2]);
        let sa = DMatrix::from_row_slice(2, 2, &[0.05, 0.01, 0.01, 0.05]);
        let z = DMatrix::zeros(2, 2);
        let a = step_map(&d, &w, &sig, &sw, &sa).unwrap();
        let b = step_map_b(&d, &w, &sig, &sw, &sa, Some((&z, &z)), 1).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn propagate_scalar_chain() {
        let cfg = scalar_cfg(0.5, 2.0, 1.0, 0.04, 0.09);
        let traj = propagate(&cfg.net(2).unwrap(), &cfg.profile(2).unwrap()).unwrap();
        assert_relative_eq!(traj.states[1].sigma[(0, 0)], 1.1, epsilon = 1e-14);
        assert_relative_eq!(traj.states[2].sigma[(0, 0)], 1.2, epsilon = 1e-14);
        assert_relative_eq!(symmetric_closed_form(&cfg, 2).unwrap()[(0, 0)], 1.2, epsilon = 1e-14);
    }

    #[test]
    fn propagate_b_scalar_chain() {
        let cfg = scalar_cfg(1.0, 1.0, 1.0, 0.0, 1.0).with_m(2).unwrap();
        let traj = propagate_b(&cfg.net(2).unwrap(), &cfg.profile(2).unwrap(), 2).unwrap();
        assert_relative_eq!(traj.states[1].sigma[(0, 0)], 1.5, epsilon = 1e-15);
        assert_relative_eq!(traj.states[2].sigma[(0, 0)], 1.75, epsilon = 1e-15);
        assert_relative_eq!(symmetric_closed_form_b(&cfg, 2).unwrap()[(0, 0)], 1.75, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_single_layer_and_zero_noise() {
        let cfg = scalar_cfg(0.5, 2.0, 1.0, 0.04, 0.09).with_m(3).unwrap();
        let b1 = symmetric_closed_form_b(&cfg, 1).unwrap()[(0, 0)];
        assert_relative_eq!(b1, (1.0 + 0.25 * 0.04) / 3.0 + 0.09, epsilon = 1e-15);
        let zero = scalar_cfg(0.5, 2.0, 0.0, 0.0, 0.0);
        assert_eq!(symmetric_closed_form(&zero, 7).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn limit_series_scalar() {
        let cfg = scalar_cfg(0.5, 1.0, 0.0, 0.04, 0.09);
        let lim = limit_series(&cfg, 1e-14, Contraction::Frobenius).unwrap();
        assert_relative_eq!(lim.sigma[(0, 0)], 0.1 / 0.75, epsilon = 1e-13);
        for method in [FixedPointMethod::Iterate, FixedPointMethod::Vectorized] {
            let fp = fixed_point_solve(&cfg, method, Contraction::Frobenius).unwrap();
            assert_relative_eq!(fp.sigma[(0, 0)], 0.1 / 0.75, epsilon = 1e-11);
        }
    }

    #[test]
    fn limit_series_b_scalar() {
        let cfg = scalar_cfg(1.0, 1.0, 0.0, 0.0, 1.0).with_m(2).unwrap();
        let lim = limit_series_b(&cfg, 1e-14, Contraction::Frobenius).unwrap();
        assert_relative_eq!(lim.sigma[(0, 0)], 2.0, epsilon = 1e-13);
    }

    #[test]
    fn zero_dw_is_one_term() {
        let cfg = scalar_cfg(0.0, 1.0, 5.0, 0.04, 0.09);
        let lim = limit_series(&cfg, 1e-12, Contraction::Frobenius).unwrap();
        assert_eq!(lim.sigma[(0, 0)], 0.09);
        assert_eq!(lim.terms, 2);
        let fp = fixed_point_solve(&cfg, FixedPointMethod::Iterate, Contraction::Frobenius).unwrap();
        assert_eq!(fp.iterations, 1);
        assert_eq!(fp.sigma[(0, 0)], 0.09);
    }

    #[test]
    fn contraction_precondition() {
        let cfg = scalar_cfg(1.0, 1.5, 0.0, 0.1, 0.1);
        assert!(matches!(limit_series(&cfg, 1e-10, Contraction::Frobenius), Err(Error::Precondition(_))));
        // ‖D‖_F‖W‖_F = 2·0.6·√2 ≈ 1.70 but DW = 0.6·I has operator norm 0.6.
        let d = DVector::from_element(2, 1.0);
        let w = DMatrix::identity(2, 2) * 0.6;
        let iso = CovSpec::Isotropic(0.1);
        let cfg = SymmetricConfig::new(d, w, &CovSpec::Zero, &iso, &iso).unwrap();
        assert!(limit_series(&cfg, 1e-10, Contraction::Frobenius).is_err());
        let lim = limit_series(&cfg, 1e-12, Contraction::OperatorNorm).unwrap();
        assert_relative_eq!(lim.sigma[(0, 0)], 0.2 / 0.64, epsilon = 1e-11);
    }

    #[test]
    fn min_stable_m_examples() {
        let half = scalar_cfg(0.5, 1.0, 1.0, 0.1, 0.1);
        assert_eq!(min_stable_m(&half, 50, DEFAULT_GROWTH_TOL).unwrap(), 1);
        let doubling = scalar_cfg(1.0, 2.0, 1.0, 0.1, 0.1);
        assert_eq!(min_stable_m(&doubling, 2000, DEFAULT_GROWTH_TOL).unwrap(), 4);
        assert!(growth_ratio(&doubling, 2000, 3).is_none_or(|r| r > 1.0 + DEFAULT_GROWTH_TOL));
        assert!(min_stable_m(&doubling, 10, DEFAULT_GROWTH_TOL).is_err());
    }

    #[test]
    fn terminal_correction_matches_exact_for_single_layer() {
        let d = DVector::from_vec(vec![0.8, 1.2]);
        let w = DMatrix::from_row_slice(2, 2, &[0.5, -0.3, 0.2, 0.9]);
        let net = LinearNet::new(vec![LinearLayer::new(d, w).unwrap()]).unwrap();
        let profile = NoiseProfile::isotropic(1, 0.3, 0.2, 0.1)
            .unwrap()
            .with_combine(CovSpec::Isotropic(0.05))
            .unwrap()
            .with_split(CovSpec::Isotropic(0.07))
            .unwrap();
        for m in [1, 2, 4] {
            let corrected = propagate_b_averaged(&net, &profile, m).unwrap();
            let exact = design_b_output_covariance(&net, &profile, m).unwrap();
            assert_relative_eq!(corrected, exact.output().clone(), epsilon = 1e-14);
        }
    }

    #[test]
    fn exact_recursion_departs_from_per_branch_map_in_depth() {
        // Branches share their combined pre-activation, so the input to layer 2
        // is not m independent copies.
        let cfg = scalar_cfg(1.0, 1.0, 1.0, 0.0, 1.0);
        let net = cfg.net(2).unwrap();
        let profile = cfg.profile(2).unwrap();
        let theory = propagate_b_averaged(&net, &profile, 2).unwrap()[(0, 0)];
        let exact = design_b_output_covariance(&net, &profile, 2).unwrap().output()[(0, 0)];
        assert_relative_eq!(theory, 1.25, epsilon = 1e-15);
        assert_relative_eq!(exact, 1.5, epsilon = 1e-15);
    }

    #[test]
    fn trajectory_json_shape() {
        let cfg = scalar_cfg(0.5, 2.0, 1.0, 0.04, 0.09);
        let traj = propagate(&cfg.net(1).unwrap(), &cfg.profile(1).unwrap()).unwrap();
        let value: serde_json::Value = serde_json::from_str(&traj.to_json_string()).unwrap();
        assert_eq!(value["layers"][1]["index"], 1);
        assert_eq!(value["layers"][0]["sigma"][0][0], 1.0);
        let back: Trajectory = serde_json::from_value(value).unwrap();
        assert_eq!(back, traj);
    }
}
