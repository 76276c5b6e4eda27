//! Finite-difference verification of [`loss_and_grads`].

use crate::error::Result;
use crate::math::finite_diff_grad;

use super::backward::{batch_loss, loss_and_grads, Batch, LossKind};
use super::forward::forward_batch;
use super::{GateMode, ModelParams};

/// Entries smaller than this fraction of the largest gradient magnitude are
/// compared against that fraction instead of their own size. Central
/// differences carry roundoff of order `ε·|loss|/h` regardless of the
/// entry, so near-zero entries cannot be resolved relative to themselves.
pub const GRAD_CHECK_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// `max_i |a_i - n_i| / max(|a_i|, |n_i|, floor · max_j max(|a_j|, |n_j|))`
    /// over the trainable parameters.
    pub max_relative_error: f64,
    pub params_checked: usize,
}

/// Compares analytic gradients with central differences of step `h`.
/// Frozen parameters are skipped: their analytic gradient is zero by
/// construction while the loss still depends on them.
pub fn gradient_check(
    params: &ModelParams,
    batch: &Batch,
    mode: GateMode,
    loss: LossKind,
    h: f64,
) -> Result<GradCheck> {
    let (_, grads) = loss_and_grads(params, batch, mode, loss)?;
    let analytic = grads.to_flat();
    let mut trainable = Vec::with_capacity(analytic.len());
    for t in params.tensors() {
        trainable.extend(std::iter::repeat_n(params.is_trainable(t.group), t.data.len()));
    }
    let mut probe = params.clone();
    let numeric = finite_diff_grad(
        |flat| {
            probe.set_flat(flat).expect("same length");
            forward_batch(&probe, &batch.inputs, mode)
                .and_then(|t| batch_loss(&t.output, &batch.targets, loss))
                .unwrap_or(f64::NAN)
        },
        &params.to_flat(),
        h,
    );
    let pairs: Vec<(f64, f64)> = analytic
        .iter()
        .zip(&numeric)
        .zip(&trainable)
        .filter(|(_, &keep)| keep)
        .map(|((&a, &n), _)| (a, n))
        .collect();
    let scale = pairs.iter().fold(0.0f64, |m, (a, n)| m.max(a.abs()).max(n.abs()));
    let floor = (GRAD_CHECK_FLOOR * scale).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for &(a, n) in &pairs {
        let err = (a - n).abs() / a.abs().max(n.abs()).max(floor);
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
    }
    Ok(GradCheck {
        max_relative_error: worst,
        params_checked: pairs.len(),
    })
}
