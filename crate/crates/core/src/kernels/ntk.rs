use crate::error::Result;
use crate::math::{dot, Matrix};
use crate::model::{tangent_factors, GateMode, ModelParams};

use super::{KernelKind, KernelMatrix};

/// `NTK[a][b] = ⟨∇θ ŷ(x_a), ∇θ ŷ(x_b)⟩` over the trainable parameters,
/// averaged over output units.
///
/// Each weight gradient is a per-sample outer product `δ ⊗ input`, so the
/// inner product of two of them factors as `⟨δ_a, δ_b⟩·⟨in_a, in_b⟩`; the
/// Jacobian itself is never formed.
pub fn empirical_ntk(params: &ModelParams, inputs: &Matrix, mode: GateMode) -> Result<KernelMatrix> {
    let n = inputs.rows();
    let outputs = params.arch().output_dim;
    let mut total = Matrix::zeros(n, n);
    for k in 0..outputs {
        for f in tangent_factors(params, inputs, mode, k)? {
            let deltas = f.delta.matmul_t(&f.delta);
            let mut ins = f.input.matmul_t(&f.input);
            if f.has_bias {
                ins.as_mut_slice().iter_mut().for_each(|v| *v += 1.0);
            }
            for ((t, d), i) in total
                .as_mut_slice()
                .iter_mut()
                .zip(deltas.as_slice())
                .zip(ins.as_slice())
            {
                *t += d * i;
            }
        }
    }
    total.scale(1.0 / outputs as f64);
    Ok(KernelMatrix::new(KernelKind::Ntk, total))
}

/// Only the diagonal of [`empirical_ntk`], in `O(n)` memory.
pub fn ntk_diagonal(params: &ModelParams, inputs: &Matrix, mode: GateMode) -> Result<Vec<f64>> {
    let n = inputs.rows();
    let outputs = params.arch().output_dim;
    let mut diag = vec![0.0; n];
    for k in 0..outputs {
        for f in tangent_factors(params, inputs, mode, k)? {
            for (a, d) in diag.iter_mut().enumerate() {
                let dd = dot(f.delta.row(a), f.delta.row(a));
                let ii = dot(f.input.row(a), f.input.row(a)) + if f.has_bias { 1.0 } else { 0.0 };
                *d += dd * ii;
            }
        }
    }
    diag.iter_mut().for_each(|d| *d /= outputs as f64);
    Ok(diag)
}
