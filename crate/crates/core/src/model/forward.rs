use crate::error::{Error, Result};
use crate::math::Matrix;

use super::{hard_gate, ArchKind, GateMode, ModelParams};

/// Every intermediate of a batched forward pass. Rows index inputs.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub input: Matrix,
    /// Gate pre-activations of hidden layers `1..L-1`: `η_ℓ` for the DLGN
    /// variants, `W_ℓ h_{ℓ-1} + b_ℓ` otherwise.
    pub pre: Vec<Matrix>,
    /// Gate values in `[0, 1]`, identically one for DLN.
    pub gates: Vec<Matrix>,
    /// DLGN variants only: `U_ℓ h_{ℓ-1} + c_ℓ`, before gating.
    pub value_pre: Vec<Matrix>,
    /// `h_0 .. h_{L-1}`. For DLGN-PWC `h_0` is all ones.
    pub hidden: Vec<Matrix>,
    pub output: Matrix,
    pub mode: GateMode,
}

pub fn forward_batch(params: &ModelParams, inputs: &Matrix, mode: GateMode) -> Result<ForwardTrace> {
    let arch = params.arch();
    if inputs.cols() != arch.input_dim {
        return Err(Error::ShapeMismatch {
            context: "forward",
            expected: format!("inputs with {} columns", arch.input_dim),
            found: format!("{} columns", inputs.cols()),
        });
    }
    let hidden_layers = arch.hidden_layers();
    let mut pre = Vec::with_capacity(hidden_layers);
    let mut gates = Vec::with_capacity(hidden_layers);
    let mut value_pre = Vec::new();
    let mut hidden = Vec::with_capacity(hidden_layers + 1);

    let output = match arch.kind {
        ArchKind::Relu | ArchKind::Dln => {
            hidden.push(inputs.clone());
            for layer in &params.weights[..hidden_layers] {
                let z = layer.affine(hidden.last().expect("h_0 pushed"));
                let (g, h) = if arch.kind == ArchKind::Dln {
                    (Matrix::filled(z.rows(), z.cols(), 1.0), z.clone())
                } else {
                    let g = z.map(|v| mode.gate(v));
                    let h = g.hadamard(&z);
                    (g, h)
                };
                pre.push(z);
                gates.push(g);
                hidden.push(h);
            }
            params.weights[hidden_layers].affine(hidden.last().expect("non-empty"))
        }
        ArchKind::Dlgn | ArchKind::DlgnPwc => {
            let values = params
                .value_weights
                .as_ref()
                .ok_or(Error::InvalidArgument("DLGN parameters without value weights".into()))?;
            hidden.push(if arch.kind == ArchKind::DlgnPwc {
                Matrix::filled(inputs.rows(), inputs.cols(), 1.0)
            } else {
                inputs.clone()
            });
            let mut eta = inputs.clone();
            for (gate_layer, value_layer) in params.weights.iter().zip(values).take(hidden_layers) {
                eta = gate_layer.affine(&eta);
                let g = eta.map(|v| mode.gate(v));
                let v = value_layer.affine(hidden.last().expect("non-empty"));
                hidden.push(g.hadamard(&v));
                pre.push(eta.clone());
                gates.push(g);
                value_pre.push(v);
            }
            values[hidden_layers].affine(hidden.last().expect("non-empty"))
        }
    };

    Ok(ForwardTrace {
        input: inputs.clone(),
        pre,
        gates,
        value_pre,
        hidden,
        output,
        mode,
    })
}

/// Forward pass for a single input.
pub fn forward(params: &ModelParams, x: &[f64], mode: GateMode) -> Result<ForwardTrace> {
    let inputs = Matrix::from_vec(1, x.len(), x.to_vec())?;
    forward_batch(params, &inputs, mode)
}

/// Gate activations of every hidden layer over a batch: `layers[ℓ]` is
/// `n x m`, row `a` holding `G_{ℓ+1}(x_a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateTensor {
    pub layers: Vec<Matrix>,
}

impl GateTensor {
    pub fn num_inputs(&self) -> usize {
        self.layers.first().map_or(0, Matrix::rows)
    }

    pub fn width(&self) -> usize {
        self.layers.first().map_or(0, Matrix::cols)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Hard gate bit of neuron `neuron` in hidden layer `layer` (0-based) at input `input`.
    pub fn is_active(&self, layer: usize, input: usize, neuron: usize) -> bool {
        self.layers[layer][(input, neuron)] >= 0.5
    }

    /// Number of active neurons per hidden layer at `input`.
    pub fn active_counts(&self, input: usize) -> Vec<usize> {
        self.layers
            .iter()
            .map(|g| g.row(input).iter().filter(|&&v| v >= 0.5).count())
            .collect()
    }

    /// Concatenated per-layer gate bits of one input.
    pub fn pattern(&self, input: usize) -> Vec<bool> {
        self.layers
            .iter()
            .flat_map(|g| g.row(input).iter().map(|&v| v >= 0.5))
            .collect()
    }

    pub fn is_binary(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.as_slice().iter().all(|&v| v == 0.0 || v == 1.0))
    }
}

/// Hard gates over a batch.
pub fn gate_tensor(params: &ModelParams, inputs: &Matrix) -> Result<GateTensor> {
    gate_tensor_with(params, inputs, GateMode::Hard)
}

/// Gates over a batch in the given mode. For ReLU nets the hidden recursion
/// itself uses `mode`, so soft ReLU gates differ from hard ones beyond layer 1.
pub fn gate_tensor_with(params: &ModelParams, inputs: &Matrix, mode: GateMode) -> Result<GateTensor> {
    if !params.arch().kind.has_gates() {
        return Err(Error::NoGates(params.arch().kind.name()));
    }
    let trace = forward_batch(params, inputs, mode)?;
    Ok(GateTensor { layers: trace.gates })
}

impl ForwardTrace {
    /// Hard gate bits implied by the recorded pre-activations.
    pub fn hard_gates_from_pre(&self) -> Vec<Matrix> {
        self.pre.iter().map(|p| p.map(hard_gate)).collect()
    }
}
