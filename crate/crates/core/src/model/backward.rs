//! Reverse-mode gradients for the four architectures.
//!
//! Backpropagation produces, for every weight layer, the per-sample delta
//! `∂out/∂(pre-activation)` and the layer's input. A weight gradient is the
//! outer product of the two summed over samples; the tangent kernel uses them
//! unreduced.

use crate::error::{Error, Result};
use crate::math::Matrix;

use super::forward::{forward_batch, ForwardTrace};
use super::{ArchKind, GateMode, ModelParams, ParamGroup};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Mean over the batch of `½‖ŷ - y‖²`.
    Mse,
    /// Mean cross-entropy of the softmax of the outputs.
    SoftmaxCrossEntropy,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// `n x out` regression targets.
    Values(Matrix),
    /// 0-based class indices.
    Classes(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Values(m) => m.rows(),
            Targets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The targets of rows `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Values(m) => {
                let rows: Vec<&[f64]> = idx.iter().map(|&i| m.row(i)).collect();
                let mut data = Vec::with_capacity(idx.len() * m.cols());
                rows.iter().for_each(|r| data.extend_from_slice(r));
                Targets::Values(Matrix::from_vec(idx.len(), m.cols(), data).expect("consistent rows"))
            }
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub targets: Targets,
}

impl Batch {
    pub fn new(inputs: Matrix, targets: Targets) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(Error::ShapeMismatch {
                context: "batch",
                expected: format!("{} targets", inputs.rows()),
                found: targets.len().to_string(),
            });
        }
        Ok(Batch { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        let mut data = Vec::with_capacity(idx.len() * self.inputs.cols());
        for &i in idx {
            data.extend_from_slice(self.inputs.row(i));
        }
        Batch {
            inputs: Matrix::from_vec(idx.len(), self.inputs.cols(), data).expect("consistent rows"),
            targets: self.targets.select(idx),
        }
    }
}

/// Per-sample factors of the output gradient for one weight layer: the
/// gradient of output `k` at sample `a` with respect to `W[i][j]` is
/// `delta[a][i] * input[a][j]`, and with respect to `b[i]` it is `delta[a][i]`.
#[derive(Clone, Debug)]
pub struct TangentFactor {
    pub group: ParamGroup,
    pub layer: usize,
    pub delta: Matrix,
    pub input: Matrix,
    pub has_bias: bool,
}

/// Backpropagates `d_out` (`∂loss/∂output`, one row per sample) through the
/// trace. Only layers of trainable groups are returned; gate-path deltas are
/// skipped entirely under hard gates, where they vanish.
fn backprop(params: &ModelParams, trace: &ForwardTrace, d_out: &Matrix) -> Vec<TangentFactor> {
    let arch = params.arch();
    let hidden_layers = arch.hidden_layers();
    let train_w = params.is_trainable(ParamGroup::Weights);
    let train_u = params.is_trainable(ParamGroup::ValueWeights);
    let mode = trace.mode;
    let mut factors = Vec::new();

    match arch.kind {
        ArchKind::Relu | ArchKind::Dln => {
            if !train_w {
                return factors;
            }
            let w = &params.weights;
            factors.push(TangentFactor {
                group: ParamGroup::Weights,
                layer: hidden_layers,
                delta: d_out.clone(),
                input: trace.hidden[hidden_layers].clone(),
                has_bias: w[hidden_layers].bias.is_some(),
            });
            let mut d_hidden = d_out.matmul(&w[hidden_layers].weight);
            for l in (0..hidden_layers).rev() {
                let d_pre = if arch.kind == ArchKind::Dln {
                    d_hidden
                } else {
                    let z = &trace.pre[l];
                    let g = &trace.gates[l];
                    let mut d = d_hidden;
                    for ((dv, &zv), &gv) in d.as_mut_slice().iter_mut().zip(z.as_slice()).zip(g.as_slice()) {
                        *dv *= gv + zv * mode.gate_slope(zv);
                    }
                    d
                };
                d_hidden = if l > 0 {
                    d_pre.matmul(&w[l].weight)
                } else {
                    Matrix::zeros(0, 0)
                };
                factors.push(TangentFactor {
                    group: ParamGroup::Weights,
                    layer: l,
                    delta: d_pre,
                    input: trace.hidden[l].clone(),
                    has_bias: w[l].bias.is_some(),
                });
            }
        }
        ArchKind::Dlgn | ArchKind::DlgnPwc => {
            let u = params.value_weights.as_ref().expect("validated DLGN params");
            let w = &params.weights;
            let gate_grads = train_w && matches!(mode, GateMode::Soft { .. });
            if train_u {
                factors.push(TangentFactor {
                    group: ParamGroup::ValueWeights,
                    layer: hidden_layers,
                    delta: d_out.clone(),
                    input: trace.hidden[hidden_layers].clone(),
                    has_bias: u[hidden_layers].bias.is_some(),
                });
            }
            let mut d_hidden = d_out.matmul(&u[hidden_layers].weight);
            let mut d_eta_above: Option<Matrix> = None;
            for l in (0..hidden_layers).rev() {
                let d_value = d_hidden.hadamard(&trace.gates[l]);
                if gate_grads {
                    let mut d_eta = d_hidden.hadamard(&trace.value_pre[l]);
                    for (dv, &eta) in d_eta.as_mut_slice().iter_mut().zip(trace.pre[l].as_slice()) {
                        *dv *= mode.gate_slope(eta);
                    }
                    if let Some(above) = &d_eta_above {
                        let carried = above.matmul(&w[l + 1].weight);
                        for (dv, c) in d_eta.as_mut_slice().iter_mut().zip(carried.as_slice()) {
                            *dv += c;
                        }
                    }
                    let eta_in = if l == 0 { &trace.input } else { &trace.pre[l - 1] };
                    factors.push(TangentFactor {
                        group: ParamGroup::Weights,
                        layer: l,
                        delta: d_eta.clone(),
                        input: eta_in.clone(),
                        has_bias: w[l].bias.is_some(),
                    });
                    d_eta_above = Some(d_eta);
                }
                if l > 0 {
                    d_hidden = d_value.matmul(&u[l].weight);
                }
                if train_u {
                    factors.push(TangentFactor {
                        group: ParamGroup::ValueWeights,
                        layer: l,
                        delta: d_value,
                        input: trace.hidden[l].clone(),
                        has_bias: u[l].bias.is_some(),
                    });
                }
            }
        }
    }
    factors
}

fn check_differentiable(params: &ModelParams, mode: GateMode) -> Result<()> {
    if params.arch().kind.is_linearly_gated() && mode == GateMode::Hard && params.is_trainable(ParamGroup::Weights) {
        return Err(Error::HardGatesNotDifferentiable);
    }
    Ok(())
}

/// Loss and the output-layer gradient `∂loss/∂output` for a forward pass.
fn loss_and_output_grad(output: &Matrix, targets: &Targets, loss: LossKind) -> Result<(f64, Matrix)> {
    let n = output.rows() as f64;
    match (loss, targets) {
        (LossKind::Mse, Targets::Values(y)) => {
            if y.shape() != output.shape() {
                return Err(Error::ShapeMismatch {
                    context: "regression targets",
                    expected: format!("{:?}", output.shape()),
                    found: format!("{:?}", y.shape()),
                });
            }
            let mut d = Matrix::zeros(output.rows(), output.cols());
            let mut total = 0.0;
            for ((dv, &o), &t) in d.as_mut_slice().iter_mut().zip(output.as_slice()).zip(y.as_slice()) {
                let r = o - t;
                total += 0.5 * r * r;
                *dv = r / n;
            }
            Ok((total / n, d))
        }
        (LossKind::SoftmaxCrossEntropy, Targets::Classes(labels)) => {
            let mut d = Matrix::zeros(output.rows(), output.cols());
            let mut total = 0.0;
            for (a, &label) in labels.iter().enumerate() {
                if label >= output.cols() {
                    return Err(Error::InvalidArgument(format!(
                        "class {label} out of range for {} outputs",
                        output.cols()
                    )));
                }
                let row = output.row(a);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
                total += log_sum - row[label];
                for (j, dv) in d.row_mut(a).iter_mut().enumerate() {
                    let p = (row[j] - log_sum).exp();
                    *dv = (p - if j == label { 1.0 } else { 0.0 }) / n;
                }
            }
            Ok((total / n, d))
        }
        _ => Err(Error::InvalidArgument(format!(
            "{loss:?} does not match the target kind"
        ))),
    }
}

/// Mean loss over the batch and its gradient with respect to every
/// parameter. Frozen groups get exactly zero gradients.
pub fn loss_and_grads(
    params: &ModelParams,
    batch: &Batch,
    mode: GateMode,
    loss: LossKind,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    check_differentiable(params, mode)?;
    let trace = forward_batch(params, &batch.inputs, mode)?;
    let (value, d_out) = loss_and_output_grad(&trace.output, &batch.targets, loss)?;

    let mut grads = params.zeros_like();
    for f in backprop(params, &trace, &d_out) {
        let layer = match f.group {
            ParamGroup::Weights => &mut grads.weights[f.layer],
            ParamGroup::ValueWeights => &mut grads.value_weights.as_mut().expect("DLGN grads")[f.layer],
        };
        layer.weight = f.delta.t_matmul(&f.input);
        if let Some(b) = &mut layer.bias {
            *b = f.delta.column_sums();
        }
    }
    grads.zero_frozen();
    Ok((value, grads))
}

pub(crate) fn batch_loss(output: &Matrix, targets: &Targets, loss: LossKind) -> Result<f64> {
    loss_and_output_grad(output, targets, loss).map(|(v, _)| v)
}

/// Per-sample gradient factors of output coordinate `output` over all
/// trainable parameters. Under hard gates the gating network contributes
/// nothing, since its gradient is zero almost everywhere.
pub fn tangent_factors(
    params: &ModelParams,
    inputs: &Matrix,
    mode: GateMode,
    output: usize,
) -> Result<Vec<TangentFactor>> {
    let out_dim = params.arch().output_dim;
    if output >= out_dim {
        return Err(Error::InvalidArgument(format!(
            "output {output} out of range for {out_dim} outputs"
        )));
    }
    let trace = forward_batch(params, inputs, mode)?;
    let mut d_out = Matrix::zeros(inputs.rows(), out_dim);
    for a in 0..inputs.rows() {
        d_out[(a, output)] = 1.0;
    }
    Ok(backprop(params, &trace, &d_out))
}
