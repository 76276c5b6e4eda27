use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::{dot, Matrix};

use super::ModelParams;

/// The affine form `a·x + c` of one gating neuron, expressed in input space.
/// The neuron is active on the half-space `a·x + c >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hyperplane {
    pub layer: usize,
    pub neuron: usize,
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) + self.offset
    }

    pub fn is_active(&self, x: &[f64]) -> bool {
        self.eval(x) >= 0.0
    }
}

/// Input-space hyperplanes of every hidden neuron of a DLGN: layer `ℓ` is
/// `W_ℓ···W_1 x + (W_ℓ(···(W_1·0 + b_1)···) + b_ℓ)`. Outer index is the
/// hidden layer (0-based).
pub fn dlgn_hyperplanes(params: &ModelParams) -> Result<Vec<Vec<Hyperplane>>> {
    let arch = params.arch();
    if !arch.kind.is_linearly_gated() {
        return Err(Error::NotLinearlyGated(arch.kind.name()));
    }
    let mut composed = Matrix::identity(arch.input_dim);
    let mut offset = vec![0.0; arch.input_dim];
    let mut out = Vec::with_capacity(arch.hidden_layers());
    for (l, layer) in params.weights[..arch.hidden_layers()].iter().enumerate() {
        composed = layer.weight.matmul(&composed);
        offset = layer.weight.apply(&offset);
        if let Some(b) = &layer.bias {
            offset.iter_mut().zip(b).for_each(|(o, b)| *o += b);
        }
        out.push(
            (0..composed.rows())
                .map(|i| Hyperplane {
                    layer: l,
                    neuron: i,
                    normal: composed.row(i).to_vec(),
                    offset: offset[i],
                })
                .collect(),
        );
    }
    Ok(out)
}
