//! Shared fixtures for the criterion benchmarks.

use pathnet::data::circle::gen_circle;
use pathnet::{ArchKind, Architecture, Matrix, ModelParams, Rng};

/// A freshly initialized circle-sized network (`d = 2`).
pub fn circle_model(kind: ArchKind, width: usize, num_layers: usize, seed: u64) -> ModelParams {
    let arch = Architecture::new(kind, 2, width, num_layers, 1, true).expect("valid architecture");
    ModelParams::init(arch, &mut Rng::new(seed)).expect("init")
}

pub fn circle_inputs(n: usize) -> Matrix {
    gen_circle(n).expect("n >= 2").inputs()
}
