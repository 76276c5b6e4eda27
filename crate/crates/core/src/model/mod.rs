//! The four feed-forward architectures and their parameters.
//!
//! All of them share one layout: `L` weight layers, `L - 1` hidden layers of
//! width `m`. The linearly gated variants carry a second, same-shaped stack of
//! value weights; their primary stack only computes gates.

mod backward;
pub mod checkpoint;
mod forward;
mod gradcheck;
mod hyperplanes;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{he_gaussian_init, Matrix, Rng};

pub use backward::{loss_and_grads, tangent_factors, Batch, LossKind, TangentFactor, Targets};
pub use forward::{forward, forward_batch, gate_tensor, gate_tensor_with, ForwardTrace, GateTensor};
pub use gradcheck::{gradient_check, GradCheck, GRAD_CHECK_FLOOR};
pub use hyperplanes::{dlgn_hyperplanes, Hyperplane};
pub use train::{evaluate, train, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchKind {
    Relu,
    Dlgn,
    DlgnPwc,
    Dln,
}

impl ArchKind {
    pub const ALL: [ArchKind; 4] = [ArchKind::Relu, ArchKind::Dlgn, ArchKind::DlgnPwc, ArchKind::Dln];

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Relu => "relu",
            ArchKind::Dlgn => "dlgn",
            ArchKind::DlgnPwc => "dlgn-pwc",
            ArchKind::Dln => "dln",
        }
    }

    /// True for the variants whose gates come from a separate linear network.
    pub fn is_linearly_gated(self) -> bool {
        matches!(self, ArchKind::Dlgn | ArchKind::DlgnPwc)
    }

    pub fn has_gates(self) -> bool {
        self != ArchKind::Dln
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "relu" => Ok(ArchKind::Relu),
            "dlgn" => Ok(ArchKind::Dlgn),
            "dlgn-pwc" | "pwc" => Ok(ArchKind::DlgnPwc),
            "dln" => Ok(ArchKind::Dln),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ArchKind,
    pub input_dim: usize,
    pub hidden_width: usize,
    /// Number of weight layers `L`; there are `L - 1` hidden layers.
    pub num_layers: usize,
    pub output_dim: usize,
    pub use_bias: bool,
}

impl Architecture {
    pub fn new(
        kind: ArchKind,
        input_dim: usize,
        hidden_width: usize,
        num_layers: usize,
        output_dim: usize,
        use_bias: bool,
    ) -> Result<Self> {
        let arch = Architecture {
            kind,
            input_dim,
            hidden_width,
            num_layers,
            output_dim,
            use_bias,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.hidden_width < 1 || self.num_layers < 2 || self.output_dim < 1 {
            return Err(Error::InvalidArgument(format!(
                "architecture needs d >= 1, m >= 1, L >= 2, out >= 1; got d={}, m={}, L={}, out={}",
                self.input_dim, self.hidden_width, self.num_layers, self.output_dim
            )));
        }
        Ok(())
    }

    pub fn hidden_layers(&self) -> usize {
        self.num_layers - 1
    }

    /// `m^(L-1)`, saturating.
    pub fn path_count(&self) -> u128 {
        (self.hidden_width as u128).saturating_pow(self.hidden_layers() as u32)
    }

    /// `(rows, cols)` of weight layer `layer` (0-based).
    pub fn layer_shape(&self, layer: usize) -> (usize, usize) {
        let rows = if layer + 1 == self.num_layers {
            self.output_dim
        } else {
            self.hidden_width
        };
        let cols = if layer == 0 { self.input_dim } else { self.hidden_width };
        (rows, cols)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GateMode {
    /// `1(pre-activation >= 0)`.
    Hard,
    /// `sigmoid(beta * pre-activation)`.
    Soft { beta: f64 },
}

impl GateMode {
    pub fn soft(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(GateMode::Soft { beta })
        } else {
            Err(Error::InvalidArgument(format!(
                "soft gate temperature must be positive, got {beta}"
            )))
        }
    }

    #[inline]
    pub(crate) fn gate(self, z: f64) -> f64 {
        match self {
            GateMode::Hard => hard_gate(z),
            GateMode::Soft { beta } => sigmoid(beta * z),
        }
    }

    /// Derivative of [`GateMode::gate`]; zero almost everywhere for hard gates.
    #[inline]
    pub(crate) fn gate_slope(self, z: f64) -> f64 {
        match self {
            GateMode::Hard => 0.0,
            GateMode::Soft { beta } => {
                let s = sigmoid(beta * z);
                beta * s * (1.0 - s)
            }
        }
    }
}

#[inline]
pub(crate) fn hard_gate(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Freeze {
    pub gates: bool,
    pub values: bool,
}

impl Freeze {
    pub const NONE: Freeze = Freeze {
        gates: false,
        values: false,
    };
}

impl FromStr for Freeze {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "" => Ok(Freeze::NONE),
            "gates" => Ok(Freeze {
                gates: true,
                values: false,
            }),
            "values" => Ok(Freeze {
                gates: false,
                values: true,
            }),
            "both" | "all" => Ok(Freeze {
                gates: true,
                values: true,
            }),
            other => Err(Error::Config(format!("unknown freeze setting `{other}`"))),
        }
    }
}

impl fmt::Display for Freeze {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match (self.gates, self.values) {
            (false, false) => "none",
            (true, false) => "gates",
            (false, true) => "values",
            (true, true) => "both",
        })
    }
}

/// Which stack a parameter tensor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    /// `W`: the gating network for DLGN variants, the whole network otherwise.
    Weights,
    /// `U`: value network of the DLGN variants.
    ValueWeights,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize, bias: bool) -> Self {
        Layer {
            weight: Matrix::zeros(rows, cols),
            bias: bias.then(|| vec![0.0; rows]),
        }
    }

    /// `inputs · Wᵀ + b`.
    pub(crate) fn affine(&self, inputs: &Matrix) -> Matrix {
        let mut out = inputs.matmul_t(&self.weight);
        if let Some(b) = &self.bias {
            out.add_row_vector(b);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    pub weights: Vec<Layer>,
    /// Present exactly for the DLGN variants.
    pub value_weights: Option<Vec<Layer>>,
    pub freeze: Freeze,
}

/// A view of one parameter tensor.
pub struct ParamTensor<'a> {
    pub group: ParamGroup,
    pub layer: usize,
    pub is_bias: bool,
    pub data: &'a [f64],
}

pub struct ParamTensorMut<'a> {
    pub group: ParamGroup,
    pub layer: usize,
    pub is_bias: bool,
    pub data: &'a mut [f64],
}

impl ModelParams {
    /// He-initialized weights, zero biases.
    pub fn init(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let stack = |rng: &mut Rng| -> Vec<Layer> {
            (0..arch.num_layers)
                .map(|l| {
                    let (rows, cols) = arch.layer_shape(l);
                    Layer {
                        weight: he_gaussian_init(rows, cols, rng),
                        bias: arch.use_bias.then(|| vec![0.0; rows]),
                    }
                })
                .collect()
        };
        let weights = stack(rng);
        let value_weights = arch.kind.is_linearly_gated().then(|| stack(rng));
        Ok(ModelParams {
            arch,
            weights,
            value_weights,
            freeze: Freeze::NONE,
        })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let stack = || -> Vec<Layer> {
            (0..arch.num_layers)
                .map(|l| {
                    let (rows, cols) = arch.layer_shape(l);
                    Layer::zeros(rows, cols, arch.use_bias)
                })
                .collect()
        };
        Ok(ModelParams {
            arch,
            weights: stack(),
            value_weights: arch.kind.is_linearly_gated().then(stack),
            freeze: Freeze::NONE,
        })
    }

    /// Zero-filled parameters of the same shape and freeze flags.
    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(self.arch).expect("validated architecture");
        z.freeze = self.freeze;
        z
    }

    pub fn with_freeze(mut self, freeze: Freeze) -> Self {
        self.freeze = freeze;
        self
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    /// Checks that every tensor matches the architecture.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let check = |stack: &[Layer], name: &str| -> Result<()> {
            if stack.len() != self.arch.num_layers {
                return Err(Error::ShapeMismatch {
                    context: "model parameters",
                    expected: format!("{} {name} layers", self.arch.num_layers),
                    found: stack.len().to_string(),
                });
            }
            for (l, layer) in stack.iter().enumerate() {
                let shape = self.arch.layer_shape(l);
                let bias_ok = match &layer.bias {
                    Some(b) => self.arch.use_bias && b.len() == shape.0,
                    None => !self.arch.use_bias,
                };
                if layer.weight.shape() != shape || !bias_ok {
                    return Err(Error::ShapeMismatch {
                        context: "model parameters",
                        expected: format!("{name}[{l}] {shape:?}, bias={}", self.arch.use_bias),
                        found: format!(
                            "{:?}, bias={:?}",
                            layer.weight.shape(),
                            layer.bias.as_ref().map(Vec::len)
                        ),
                    });
                }
            }
            Ok(())
        };
        check(&self.weights, "W")?;
        match (&self.value_weights, self.arch.kind.is_linearly_gated()) {
            (Some(u), true) => check(u, "U"),
            (None, false) => Ok(()),
            _ => Err(Error::InvalidArgument(format!(
                "value weights must be present exactly for DLGN variants ({})",
                self.arch.kind
            ))),
        }
    }

    /// Whether gradient steps may touch `group`.
    ///
    /// Without a value stack, `W` is both gate and value, so either flag
    /// freezes it.
    pub fn is_trainable(&self, group: ParamGroup) -> bool {
        match (group, self.arch.kind.is_linearly_gated()) {
            (ParamGroup::Weights, true) => !self.freeze.gates,
            (ParamGroup::ValueWeights, true) => !self.freeze.values,
            (ParamGroup::Weights, false) => !self.freeze.gates && !self.freeze.values,
            (ParamGroup::ValueWeights, false) => false,
        }
    }

    pub fn stack(&self, group: ParamGroup) -> Option<&[Layer]> {
        match group {
            ParamGroup::Weights => Some(&self.weights),
            ParamGroup::ValueWeights => self.value_weights.as_deref(),
        }
    }

    /// Every tensor, in checkpoint order: `W_1..W_L` then `U_1..U_L`, each
    /// weight followed by its bias.
    pub fn tensors(&self) -> Vec<ParamTensor<'_>> {
        let mut out = Vec::new();
        for (group, stack) in [
            (ParamGroup::Weights, Some(&self.weights)),
            (ParamGroup::ValueWeights, self.value_weights.as_ref()),
        ] {
            for (layer, l) in stack.into_iter().flatten().enumerate() {
                out.push(ParamTensor {
                    group,
                    layer,
                    is_bias: false,
                    data: l.weight.as_slice(),
                });
                if let Some(b) = &l.bias {
                    out.push(ParamTensor {
                        group,
                        layer,
                        is_bias: true,
                        data: b,
                    });
                }
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<ParamTensorMut<'_>> {
        let mut out = Vec::new();
        for (group, stack) in [
            (ParamGroup::Weights, Some(&mut self.weights)),
            (ParamGroup::ValueWeights, self.value_weights.as_mut()),
        ] {
            for (layer, l) in stack.into_iter().flatten().enumerate() {
                out.push(ParamTensorMut {
                    group,
                    layer,
                    is_bias: false,
                    data: l.weight.as_mut_slice(),
                });
                if let Some(b) = &mut l.bias {
                    out.push(ParamTensorMut {
                        group,
                        layer,
                        is_bias: true,
                        data: b,
                    });
                }
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// All entries concatenated in [`ModelParams::tensors`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(Error::ShapeMismatch {
                context: "ModelParams::set_flat",
                expected: n.to_string(),
                found: flat.len().to_string(),
            });
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let len = t.data.len();
            t.data.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// Zeroes every tensor whose group is frozen.
    pub(crate) fn zero_frozen(&mut self) {
        let trainable = [
            self.is_trainable(ParamGroup::Weights),
            self.is_trainable(ParamGroup::ValueWeights),
        ];
        for t in self.tensors_mut() {
            let idx = match t.group {
                ParamGroup::Weights => 0,
                ParamGroup::ValueWeights => 1,
            };
            if !trainable[idx] {
                t.data.iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arch_validation() {
        assert!(Architecture::new(ArchKind::Relu, 2, 3, 1, 1, false).is_err());
        assert!(Architecture::new(ArchKind::Relu, 0, 3, 3, 1, false).is_err());
        assert!(Architecture::new(ArchKind::Dlgn, 2, 3, 2, 1, true).is_ok());
    }

    #[test]
    fn shapes_follow_architecture() {
        let arch = Architecture::new(ArchKind::Dlgn, 2, 4, 3, 10, true).unwrap();
        let p = ModelParams::init(arch, &mut Rng::new(0)).unwrap();
        p.validate().unwrap();
        let shapes: Vec<_> = p.weights.iter().map(|l| l.weight.shape()).collect();
        assert_eq!(shapes, vec![(4, 2), (4, 4), (10, 4)]);
        assert_eq!(p.value_weights.as_ref().unwrap().len(), 3);
        assert!(p
            .weights
            .iter()
            .all(|l| l.bias.as_ref().unwrap().iter().all(|&b| b == 0.0)));
        let relu = ModelParams::init(
            Architecture {
                kind: ArchKind::Relu,
                ..arch
            },
            &mut Rng::new(0),
        )
        .unwrap();
        assert!(relu.value_weights.is_none());
    }

    #[test]
    fn flat_round_trip() {
        let arch = Architecture::new(ArchKind::DlgnPwc, 3, 2, 3, 1, true).unwrap();
        let p = ModelParams::init(arch, &mut Rng::new(4)).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.num_params());
        let mut q = p.zeros_like();
        q.set_flat(&flat).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&flat[1..]).is_err());
    }

    #[test]
    fn trainable_groups() {
        let arch = Architecture::new(ArchKind::Dlgn, 2, 2, 2, 1, false).unwrap();
        let p = ModelParams::zeros(arch).unwrap().with_freeze("gates".parse().unwrap());
        assert!(!p.is_trainable(ParamGroup::Weights));
        assert!(p.is_trainable(ParamGroup::ValueWeights));
        let relu = ModelParams::zeros(Architecture {
            kind: ArchKind::Relu,
            ..arch
        })
        .unwrap()
        .with_freeze("values".parse().unwrap());
        assert!(!relu.is_trainable(ParamGroup::Weights));
    }

    #[test]
    fn parse_names() {
        for k in ArchKind::ALL {
            assert_eq!(k.name().parse::<ArchKind>().unwrap(), k);
        }
        assert!("cnn".parse::<ArchKind>().is_err());
        assert!(GateMode::soft(0.0).is_err());
    }
}
