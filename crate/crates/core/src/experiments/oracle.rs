use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::overlap_counts;
use crate::math::{Matrix, Rng};
use crate::model::{forward, gate_tensor, ArchKind, Architecture, GateMode, ModelParams};
use crate::paths::PathOracle;

use super::{prepare_out_dir, Emitter, ExperimentConfig, RunManifest};

/// Allowed `|forward - Σ_π f_π g_π| / (1 + |forward|)`.
pub const MOE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct OracleSummary {
    pub nets: usize,
    pub inputs_checked: usize,
    pub pairs_checked: usize,
    pub max_moe_error: f64,
    pub max_overlap_discrepancy: u64,
    /// First offending net, as `arch d m L seed`.
    pub first_violation: Option<String>,
}

impl OracleSummary {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Compares the batched forward pass with the path-by-path sum, and the
/// overlap product formula with brute-force path counting, over a grid of
/// small bias-free networks.
pub fn run_oracle_suite(config: &ExperimentConfig) -> Result<RunManifest> {
    run_oracle_suite_with(config, |p, x| Ok(forward(p, x, GateMode::Hard)?.output.into_vec()))
}

/// [`run_oracle_suite`] with the forward pass under test supplied by the
/// caller.
pub fn run_oracle_suite_with<F>(config: &ExperimentConfig, forward_fn: F) -> Result<RunManifest>
where
    F: Fn(&ModelParams, &[f64]) -> Result<Vec<f64>>,
{
    let dir = config.out_dir.clone();
    prepare_out_dir(&dir)?;
    let mut manifest = RunManifest::new(config);
    let mut summary = OracleSummary {
        nets: 0,
        inputs_checked: 0,
        pairs_checked: 0,
        max_moe_error: 0.0,
        max_overlap_discrepancy: 0,
        first_violation: None,
    };
    let mut table = String::from("arch,input_dim,width,num_layers,seed,max_moe_error,overlap_discrepancy\n");

    for kind in ArchKind::ALL {
        for d in 1..=config.oracle_max_dim {
            for m in 1..=config.oracle_max_width {
                for layers in 2..=config.oracle_max_layers {
                    for s in 0..config.oracle_seeds {
                        let seed = config
                            .seed
                            .wrapping_mul(1_000_003)
                            .wrapping_add(((((d * 8 + m) * 8 + layers) * 10_000) + s) as u64);
                        let arch = Architecture::new(kind, d, m, layers, 1, false)?;
                        let mut rng = Rng::new(seed);
                        let params = ModelParams::init(arch, &mut rng)?;
                        let rows: Vec<Vec<f64>> = (0..config.oracle_inputs)
                            .map(|_| (0..d).map(|_| rng.normal()).collect())
                            .collect();
                        let inputs = Matrix::from_rows(&rows)?;
                        let oracle = PathOracle::new(&params);

                        let mut moe_err = 0.0f64;
                        for x in &rows {
                            let fast = forward_fn(&params, x)?;
                            let slow = oracle.moe_output(x)?;
                            for (a, b) in fast.iter().zip(&slow) {
                                moe_err = moe_err.max((a - b).abs() / (1.0 + a.abs()));
                            }
                            if fast.len() != slow.len() {
                                moe_err = f64::INFINITY;
                            }
                        }
                        let mut overlap_gap = 0u64;
                        if kind.has_gates() {
                            let counts = overlap_counts(&gate_tensor(&params, &inputs)?)?;
                            let n = rows.len();
                            for a in 0..n {
                                for b in 0..n {
                                    let brute = oracle.overlap_bruteforce(&rows[a], &rows[b])?;
                                    overlap_gap = overlap_gap.max(brute.abs_diff(counts[a * n + b]));
                                }
                            }
                            summary.pairs_checked += n * n;
                        }
                        summary.nets += 1;
                        summary.inputs_checked += rows.len();
                        summary.max_moe_error = summary.max_moe_error.max(moe_err);
                        summary.max_overlap_discrepancy = summary.max_overlap_discrepancy.max(overlap_gap);
                        table.push_str(&format!(
                            "{kind},{d},{m},{layers},{seed},{moe_err:.16e},{overlap_gap}\n"
                        ));
                        let violated = moe_err.is_nan() || moe_err > MOE_TOLERANCE || overlap_gap != 0;
                        if violated && summary.first_violation.is_none() {
                            summary.first_violation = Some(format!(
                                "arch={kind} d={d} m={m} L={layers} seed={seed} moe_error={moe_err:e} overlap_gap={overlap_gap}"
                            ));
                        }
                    }
                }
            }
        }
    }

    Emitter {
        dir: &dir,
        manifest: &mut manifest,
    }
    .text("oracle.csv", "oracle_table", None, &table)?;
    let violation = summary.first_violation.clone();
    manifest.oracle = Some(summary);
    manifest.write()?;
    match violation {
        Some(v) => Err(Error::OracleViolation(v)),
        None => Ok(manifest),
    }
}
