//! Analytic gradients and tangent kernels against finite differences.

use pathnet::kernels::empirical_ntk;
use pathnet::math::finite_diff_grad;
use pathnet::model::{forward_batch, gradient_check, Batch, LossKind, ParamGroup, Targets};
use pathnet::{ArchKind, Architecture, Freeze, GateMode, Matrix, ModelParams, Rng};

const H: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;
const SEEDS: u64 = 6;

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.normal()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn problem(kind: ArchKind, loss: LossKind, bias: bool, seed: u64) -> (ModelParams, Batch) {
    let out = match loss {
        LossKind::Mse => 2,
        LossKind::SoftmaxCrossEntropy => 3,
    };
    let arch = Architecture::new(kind, 3, 4, 3, out, bias).unwrap();
    let mut rng = Rng::new(seed);
    let mut params = ModelParams::init(arch, &mut rng).unwrap();
    // Nonzero biases so they are exercised too.
    for t in params.tensors_mut() {
        if t.is_bias {
            t.data.iter_mut().for_each(|b| *b = 0.3 * rng.normal());
        }
    }
    let inputs = random_matrix(7, 3, &mut rng);
    let targets = match loss {
        LossKind::Mse => Targets::Values(random_matrix(7, out, &mut rng)),
        LossKind::SoftmaxCrossEntropy => Targets::Classes((0..7).map(|_| rng.below(out)).collect()),
    };
    (params, Batch::new(inputs, targets).unwrap())
}

/// Every combination the trainer accepts. Hard gates are only trainable
/// through the gating network when it is frozen.
fn trainable_configs() -> Vec<(ArchKind, LossKind, GateMode, Freeze)> {
    let mut out = Vec::new();
    for kind in ArchKind::ALL {
        for loss in [LossKind::Mse, LossKind::SoftmaxCrossEntropy] {
            for mode in [
                GateMode::Hard,
                GateMode::Soft { beta: 1.0 },
                GateMode::Soft { beta: 4.0 },
            ] {
                for freeze in ["none", "gates", "values"] {
                    let freeze: Freeze = freeze.parse().unwrap();
                    if kind.is_linearly_gated() && mode == GateMode::Hard && !freeze.gates {
                        continue;
                    }
                    // Without a value stack any freeze flag freezes everything.
                    if !kind.is_linearly_gated() && freeze != Freeze::NONE {
                        continue;
                    }
                    out.push((kind, loss, mode, freeze));
                }
            }
        }
    }
    out
}

#[test]
fn analytic_gradients_match_central_differences() {
    for (kind, loss, mode, freeze) in trainable_configs() {
        for bias in [false, true] {
            for seed in 0..SEEDS {
                let (params, batch) = problem(kind, loss, bias, seed);
                let params = params.with_freeze(freeze);
                let check = gradient_check(&params, &batch, mode, loss, H).unwrap();
                assert!(
                    check.max_relative_error < TOLERANCE,
                    "{kind} {loss:?} {mode:?} freeze={freeze} bias={bias} seed={seed}: {:e}",
                    check.max_relative_error
                );
                assert!(check.params_checked > 0);
            }
        }
    }
}

#[test]
fn hard_gates_with_trainable_gating_network_are_rejected() {
    for kind in [ArchKind::Dlgn, ArchKind::DlgnPwc] {
        let (params, batch) = problem(kind, LossKind::Mse, true, 0);
        assert!(gradient_check(&params, &batch, GateMode::Hard, LossKind::Mse, H).is_err());
    }
}

/// Tangent kernel from an explicit finite-difference Jacobian over the
/// trainable parameters, averaged over outputs.
fn jacobian_ntk(params: &ModelParams, inputs: &Matrix, mode: GateMode) -> Matrix {
    let mut trainable = Vec::new();
    for t in params.tensors() {
        let keep = params.is_trainable(t.group);
        trainable.extend(std::iter::repeat_n(keep, t.data.len()));
    }
    let flat = params.to_flat();
    let out_dim = params.arch().output_dim;
    let n = inputs.rows();
    let mut probe = params.clone();
    // jac[a][k][p] = ∂ŷ_k(x_a)/∂θ_p
    let mut jac = vec![vec![Vec::new(); out_dim]; n];
    for (a, rows) in jac.iter_mut().enumerate() {
        let x = Matrix::from_rows(&[inputs.row(a)]).unwrap();
        for (k, row) in rows.iter_mut().enumerate() {
            let g = finite_diff_grad(
                |theta| {
                    probe.set_flat(theta).unwrap();
                    forward_batch(&probe, &x, mode).unwrap().output[(0, k)]
                },
                &flat,
                H,
            );
            *row = g
                .into_iter()
                .zip(&trainable)
                .map(|(v, &keep)| if keep { v } else { 0.0 })
                .collect();
        }
    }
    let mut k = Matrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let s: f64 = (0..out_dim)
                .map(|o| jac[a][o].iter().zip(&jac[b][o]).map(|(u, v)| u * v).sum::<f64>())
                .sum();
            k[(a, b)] = s / out_dim as f64;
        }
    }
    k
}

#[test]
fn tangent_kernel_matches_jacobian_gram() {
    for kind in ArchKind::ALL {
        for (mode, freeze) in [
            (GateMode::Soft { beta: 2.0 }, Freeze::NONE),
            (GateMode::Soft { beta: 2.0 }, "values".parse().unwrap()),
            (GateMode::Hard, "gates".parse().unwrap()),
        ] {
            for seed in 0..3 {
                let (params, batch) = problem(kind, LossKind::Mse, true, seed);
                let params = params.with_freeze(freeze);
                let fast = empirical_ntk(&params, &batch.inputs, mode).unwrap();
                let slow = jacobian_ntk(&params, &batch.inputs, mode);
                let scale = slow.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
                let gap = fast.matrix.max_abs_diff(&slow) / scale;
                assert!(gap < 1e-6, "{kind} {mode:?} freeze={freeze} seed={seed}: {gap:e}");
            }
        }
    }
}

#[test]
fn frozen_groups_are_excluded_from_the_tangent_kernel() {
    let (params, batch) = problem(ArchKind::Dlgn, LossKind::Mse, true, 1);
    let mode = GateMode::Soft { beta: 2.0 };
    let both = empirical_ntk(
        &params.clone().with_freeze("both".parse().unwrap()),
        &batch.inputs,
        mode,
    );
    // Nothing left to differentiate.
    assert!(both.is_err() || both.unwrap().trace() == 0.0);
    let gates_only = params.clone().with_freeze("values".parse().unwrap());
    assert!(gates_only.is_trainable(ParamGroup::Weights));
    assert!(!gates_only.is_trainable(ParamGroup::ValueWeights));
}
