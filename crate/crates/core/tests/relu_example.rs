//! A hand-built one-dimensional ReLU network whose path regions are known
//! in closed form.
//!
//! Layer 1 has units `u_i = relu(x - t_i)` with thresholds 0.5, 2 and 3.
//! The "green" unit of layer 2 computes `1 - u_1 + 2 u_2 - 2 u_3`, a
//! zig-zag that is nonnegative exactly on `[0.5, 1.5] ∪ [2.5, 3.5]` once
//! `u_1` is on. The path through `u_1` and the green unit is therefore
//! active on precisely those two intervals.

use pathnet::model::{forward, Layer};
use pathnet::paths::{Path, PathOracle};
use pathnet::{ArchKind, Architecture, GateMode, Matrix, ModelParams};

fn network() -> ModelParams {
    let arch = Architecture::new(ArchKind::Relu, 1, 3, 3, 1, true).unwrap();
    let mut p = ModelParams::zeros(arch).unwrap();
    p.weights[0] = Layer {
        weight: Matrix::from_rows(&[[1.0], [1.0], [1.0]]).unwrap(),
        bias: Some(vec![-0.5, -2.0, -3.0]),
    };
    p.weights[1] = Layer {
        weight: Matrix::from_rows(&[[-1.0, 2.0, -2.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap(),
        // the two unused units stay off
        bias: Some(vec![1.0, -1.0, -1.0]),
    };
    p.weights[2] = Layer {
        weight: Matrix::from_rows(&[[1.0, 0.0, 0.0]]).unwrap(),
        bias: Some(vec![0.0]),
    };
    p
}

fn in_expected_region(x: f64) -> bool {
    (0.5..=1.5).contains(&x) || (2.5..=3.5).contains(&x)
}

#[test]
fn green_path_is_active_on_two_intervals() {
    let p = network();
    let oracle = PathOracle::new(&p);
    let path = Path(vec![0, 0]);
    // 1/64 steps hit every interval endpoint exactly.
    for i in -64..=5 * 64 {
        let x = i as f64 / 64.0;
        assert_eq!(oracle.path_gate(&[x], &path).unwrap(), in_expected_region(x), "x = {x}");
    }
}

#[test]
fn green_unit_output_is_the_zigzag() {
    let p = network();
    for i in 0..=4 * 32 {
        let x = i as f64 / 32.0;
        let relu = |z: f64| z.max(0.0);
        let green = 1.0 - relu(x - 0.5) + 2.0 * relu(x - 2.0) - 2.0 * relu(x - 3.0);
        let y = forward(&p, &[x], GateMode::Hard).unwrap().output[(0, 0)];
        assert!((y - relu(green)).abs() < 1e-12, "x = {x}: {y} vs {}", relu(green));
    }
}

#[test]
fn unused_units_carry_no_active_paths() {
    let p = network();
    let oracle = PathOracle::new(&p);
    for x in [0.0, 1.0, 2.7, 4.0] {
        for second in 1..3 {
            for first in 0..3 {
                assert!(!oracle.path_gate(&[x], &Path(vec![first, second])).unwrap());
            }
        }
    }
}
