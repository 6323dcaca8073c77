//! Feed-forward networks: layers, the noiseless forward map and the per-layer
//! quantities (Lipschitz constants, operator norms, diagonal-linear form) used by
//! the analysis modules.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, matrix_from_rows, matrix_to_rows};
use crate::linear::{LinearLayer, LinearNet};

/// Activation applied after a layer's weighted addition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Softmax,
    /// `y ↦ diag(e) y`.
    #[serde(rename = "diag")]
    Diag(Vec<f64>),
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
            Activation::Diag(_) => "diag",
        }
    }

    pub fn apply(&self, y: DVector<f64>) -> DVector<f64> {
        match self {
            Activation::Identity => y,
            Activation::Tanh => y.map(f64::tanh),
            Activation::Relu => y.map(|v| v.max(0.0)),
            Activation::Softmax => {
                let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exp = y.map(|v| (v - max).exp());
                let total: f64 = exp.iter().sum();
                exp / total
            }
            Activation::Diag(e) => DVector::from_fn(y.len(), |i, _| e[i] * y[i]),
        }
    }

    /// Lipschitz constant with respect to the Euclidean norm.
    ///
    /// Softmax is 1-Lipschitz in the 2-norm (its Jacobian has spectral norm ≤ 1/2),
    /// so 1 is a valid, if loose, constant.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Activation::Diag(e) => e.iter().fold(0.0_f64, |a, v| a.max(v.abs())),
            _ => 1.0,
        }
    }

    /// Coefficients `e` when the activation is `diag(e)`; identity maps to all ones.
    pub fn diagonal(&self, dim: usize) -> Option<DVector<f64>> {
        match self {
            Activation::Identity => Some(DVector::from_element(dim, 1.0)),
            Activation::Diag(e) => Some(DVector::from_column_slice(e)),
            _ => None,
        }
    }
}

/// One layer `x ↦ σ(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Self {
        Layer {
            weights,
            bias,
            activation,
        }
    }

    /// `W = I`, `b = 0`, identity activation.
    pub fn identity(dim: usize) -> Self {
        Layer::new(
            DMatrix::identity(dim, dim),
            DVector::zeros(dim),
            Activation::Identity,
        )
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Weighted addition `W x + b`.
    pub fn affine(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.weights * x + &self.bias
    }
}

/// A broken structural invariant, with 1-based layer numbers.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    EmptyNetwork,
    ZeroInputDim,
    DimensionChain {
        layer: usize,
        expected: usize,
        found: usize,
    },
    BiasLength {
        layer: usize,
        rows: usize,
        bias: usize,
    },
    DiagLength {
        layer: usize,
        expected: usize,
        found: usize,
    },
    NonFinite {
        layer: usize,
        what: &'static str,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::EmptyNetwork => write!(f, "network has no layers"),
            ValidationIssue::ZeroInputDim => write!(f, "input dimension is zero"),
            ValidationIssue::DimensionChain {
                layer,
                expected,
                found,
            } => write!(
                f,
                "layer {layer}: weights have {found} columns but the incoming dimension is {expected}"
            ),
            ValidationIssue::BiasLength { layer, rows, bias } => write!(
                f,
                "layer {layer}: weights have {rows} rows but bias has length {bias}"
            ),
            ValidationIssue::DiagLength {
                layer,
                expected,
                found,
            } => write!(
                f,
                "layer {layer}: diagonal activation has {found} coefficients, expected {expected}"
            ),
            ValidationIssue::NonFinite { layer, what } => {
                write!(f, "layer {layer}: {what} contains NaN or infinite values")
            }
        }
    }
}

/// Checks every structural invariant and reports all violations.
pub fn validate_layers(input_dim: usize, layers: &[Layer]) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    if layers.is_empty() {
        issues.push(ValidationIssue::EmptyNetwork);
    }
    if input_dim == 0 {
        issues.push(ValidationIssue::ZeroInputDim);
    }
    let mut incoming = input_dim;
    for (idx, layer) in layers.iter().enumerate() {
        let number = idx + 1;
        if layer.input_dim() != incoming {
            issues.push(ValidationIssue::DimensionChain {
                layer: number,
                expected: incoming,
                found: layer.input_dim(),
            });
        }
        if layer.bias.len() != layer.output_dim() {
            issues.push(ValidationIssue::BiasLength {
                layer: number,
                rows: layer.output_dim(),
                bias: layer.bias.len(),
            });
        }
        if let Activation::Diag(e) = &layer.activation {
            if e.len() != layer.output_dim() {
                issues.push(ValidationIssue::DiagLength {
                    layer: number,
                    expected: layer.output_dim(),
                    found: e.len(),
                });
            }
            if e.iter().any(|v| !v.is_finite()) {
                issues.push(ValidationIssue::NonFinite {
                    layer: number,
                    what: "diagonal activation",
                });
            }
        }
        if layer.weights.iter().any(|v| !v.is_finite()) {
            issues.push(ValidationIssue::NonFinite {
                layer: number,
                what: "weights",
            });
        }
        if layer.bias.iter().any(|v| !v.is_finite()) {
            issues.push(ValidationIssue::NonFinite {
                layer: number,
                what: "bias",
            });
        }
        incoming = layer.output_dim();
    }
    issues
}

/// A validated feed-forward network `Ψ = Ψ_L ∘ … ∘ Ψ_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct Network {
    input_dim: usize,
    layers: Vec<Layer>,
}

/// Per-layer Lipschitz constants `a` and operator norms `‖W‖_op`.
///
/// Tanh, ReLU, identity and softmax all report 1 (softmax is 1-Lipschitz in the
/// 2-norm); a diagonal activation reports `max |e_i|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub per_layer: Vec<f64>,
    pub operator_norms: Vec<f64>,
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let issues = validate_layers(input_dim, &layers);
        if !issues.is_empty() {
            return Err(Error::InvalidNetwork(issues));
        }
        Ok(Network { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Layer::output_dim)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// `d_0, d_1, …, d_L`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(Layer::output_dim))
            .collect()
    }

    /// Always empty for a constructed network; kept so callers can re-check after edits.
    pub fn validate(&self) -> Vec<ValidationIssue> {
        validate_layers(self.input_dim, &self.layers)
    }

    pub(crate) fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::dim("network input", self.input_dim, x.len()));
        }
        Ok(())
    }

    /// Noiseless evaluation `σ_L(W_L(… σ_1(W_1 x + b_1) …) + b_L)`.
    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.activation.apply(layer.affine(&h));
        }
        Ok(h)
    }

    /// Noiseless pre-activations and activations of every layer, in order.
    pub fn trace(&self, x: &DVector<f64>) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
        self.check_input(x)?;
        let mut h = x.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let pre = layer.affine(&h);
            h = layer.activation.apply(pre.clone());
            out.push((pre, h.clone()));
        }
        Ok(out)
    }

    pub fn lipschitz_bounds(&self) -> Result<LipschitzReport> {
        let per_layer = self.layers.iter().map(|l| l.activation.lipschitz()).collect();
        let operator_norms = self
            .layers
            .iter()
            .map(|l| linalg::operator_norm(&l.weights))
            .collect::<Result<Vec<_>>>()?;
        Ok(LipschitzReport {
            per_layer,
            operator_norms,
        })
    }

    /// The `(D, W)` pairs of a network whose activations are all diagonal-linear.
    pub fn as_linear(&self) -> Result<LinearNet> {
        let mut pairs = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            let d = layer
                .activation
                .diagonal(layer.output_dim())
                .ok_or_else(|| Error::NonlinearActivation {
                    layer: idx + 1,
                    kind: layer.activation.name().to_string(),
                })?;
            pairs.push(LinearLayer::new(d, layer.weights.clone())?);
        }
        LinearNet::new(pairs)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serialization is infallible")
    }
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    input_dim: usize,
    layers: Vec<LayerRepr>,
}

impl TryFrom<NetworkRepr> for Network {
    type Error = Error;

    fn try_from(repr: NetworkRepr) -> Result<Self> {
        let mut layers = Vec::with_capacity(repr.layers.len());
        for (idx, l) in repr.layers.into_iter().enumerate() {
            let context = format!("layer {} weights", idx + 1);
            let mut weights = matrix_from_rows(&l.weights, &context)?;
            if l.weights.is_empty() {
                weights = DMatrix::zeros(0, 0);
            }
            layers.push(Layer::new(
                weights,
                DVector::from_vec(l.bias),
                l.activation,
            ));
        }
        Network::new(repr.input_dim, layers)
    }
}

impl From<Network> for NetworkRepr {
    fn from(net: Network) -> Self {
        NetworkRepr {
            input_dim: net.input_dim,
            layers: net
                .layers
                .into_iter()
                .map(|l| LayerRepr {
                    weights: matrix_to_rows(&l.weights),
                    bias: l.bias.iter().copied().collect(),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}
