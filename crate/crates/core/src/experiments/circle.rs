use std::fmt::Write as _;

use serde::Serialize;

use crate::data::circle::gen_circle;
use crate::error::Result;
use crate::kernels::{empirical_ntk, layer_kernel, overlap_kernel, region_stats, trace_normalize, RegionStats};
use crate::math::rng::streams;
use crate::math::Rng;
use crate::model::{
    checkpoint, dlgn_hyperplanes, forward_batch, gate_tensor, train, LossKind, ModelParams, TrainConfig,
};

use super::export::{export_table, format_f64};
use super::{prepare_out_dir, Emitter, ExperimentConfig, HistoryEntry, RegionStatsEntry, RunManifest};

/// Training MSE below which the circle fit counts as converged.
pub const CONVERGED_MSE: f64 = 0.01;

#[derive(Clone, Debug, Serialize)]
pub struct CircleSnapshot {
    pub epoch: usize,
    pub mse: f64,
    /// Raw overlap kernel statistics (absent for the linear network).
    pub overlap: Option<RegionStats>,
    /// Trace-normalized tangent kernel statistics.
    pub ntk: RegionStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct CircleSummary {
    pub final_mse: f64,
    pub converged_epoch: Option<usize>,
    pub snapshots: Vec<CircleSnapshot>,
    pub region_stats: Vec<RegionStatsEntry>,
}

impl CircleSummary {
    pub fn snapshot(&self, epoch: usize) -> Option<&CircleSnapshot> {
        self.snapshots.iter().find(|s| s.epoch == epoch)
    }

    pub fn mse_at(manifest: &RunManifest, epoch: usize) -> Option<f64> {
        manifest.history.iter().find(|h| h.epoch == epoch).and_then(|h| h.mse)
    }
}

fn loss_csv(history: &[HistoryEntry]) -> String {
    let mut s = String::from("epoch,loss,mse\n");
    for h in history {
        let _ = writeln!(
            s,
            "{},{},{}",
            h.epoch,
            format_f64(h.loss),
            format_f64(h.mse.unwrap_or(f64::NAN))
        );
    }
    s
}

/// Trains on the circle and writes, at every snapshot epoch, the loss
/// curve so far, per-layer and overlap kernels, the tangent kernel,
/// predictions, hyperplanes (DLGN variants) and a checkpoint.
pub fn run_circle(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    let dir = config.out_dir.clone();
    prepare_out_dir(&dir)?;
    let mut manifest = RunManifest::new(config);

    let data = gen_circle(config.points)?;
    let batch = data.batch();
    let inputs = batch.inputs.clone();
    let arch = config.architecture(2, 1)?;
    let params = ModelParams::init(arch, &mut Rng::stream(config.seed, streams::INIT))?.with_freeze(config.freeze);

    let snapshot_epochs = config.snapshot_epochs();
    let mut train_config = TrainConfig::new(config.epochs, config.lr, config.gate_mode, LossKind::Mse);
    train_config.batch_size = config.batch_size;
    train_config.seed = config.seed;
    train_config.snapshot_epochs = snapshot_epochs.clone();

    let mut emit = Emitter {
        dir: &dir,
        manifest: &mut manifest,
    };
    emit.text("dataset.csv", "dataset", None, &data.to_csv())?;

    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut steps = String::from("epoch,step,loss\n");
    let mut snapshots = Vec::new();
    let mut stats_series = Vec::new();

    let outcome = train(params, &batch, &train_config, |record, params| {
        history.push(record.into());
        for (i, l) in record.step_losses.iter().enumerate() {
            let _ = writeln!(steps, "{},{},{}", record.epoch, i, format_f64(*l));
        }
        let epoch = record.epoch;
        if !snapshot_epochs.contains(&epoch) {
            return Ok(());
        }
        let tag = format!("e{epoch:04}");
        emit.text(&format!("loss_{tag}.csv"), "loss", Some(epoch), &loss_csv(&history))?;

        let mut overlap_stats = None;
        if arch.kind.has_gates() {
            let gates = gate_tensor(params, &inputs)?;
            for l in 0..arch.hidden_layers() {
                let k = layer_kernel(&gates, l)?;
                emit.kernel(&format!("kernel_{}_{tag}", k.kind.label()), &k, epoch, config.seed)?;
            }
            let raw = overlap_kernel(&gates)?;
            let norm = trace_normalize(&raw)?;
            emit.kernel(&format!("kernel_overlap_raw_{tag}"), &raw, epoch, config.seed)?;
            emit.kernel(&format!("kernel_overlap_{tag}"), &norm, epoch, config.seed)?;
            let raw_stats = region_stats(&raw, &data.regions)?;
            stats_series.push(RegionStatsEntry {
                epoch,
                kernel: "overlap".into(),
                normalized: false,
                stats: raw_stats,
            });
            stats_series.push(RegionStatsEntry {
                epoch,
                kernel: "overlap".into(),
                normalized: true,
                stats: region_stats(&norm, &data.regions)?,
            });
            overlap_stats = Some(raw_stats);
        }

        let ntk_raw = empirical_ntk(params, &inputs, config.gate_mode)?;
        let ntk = trace_normalize(&ntk_raw)?;
        emit.kernel(&format!("kernel_ntk_raw_{tag}"), &ntk_raw, epoch, config.seed)?;
        emit.kernel(&format!("kernel_ntk_{tag}"), &ntk, epoch, config.seed)?;
        let ntk_stats = region_stats(&ntk, &data.regions)?;
        stats_series.push(RegionStatsEntry {
            epoch,
            kernel: "ntk".into(),
            normalized: true,
            stats: ntk_stats,
        });

        let out = forward_batch(params, &inputs, config.gate_mode)?.output;
        let mut pred = String::from("angle,y,y_hat,region\n");
        for i in 0..data.len() {
            let _ = writeln!(
                pred,
                "{},{},{},{}",
                format_f64(data.angles[i]),
                format_f64(data.targets[i]),
                format_f64(out[(i, 0)]),
                data.regions[i]
            );
        }
        emit.text(&format!("predictions_{tag}.csv"), "predictions", Some(epoch), &pred)?;

        if arch.kind.is_linearly_gated() {
            let mut table = String::from("layer,neuron,a1,a2,c\n");
            for layer in dlgn_hyperplanes(params)? {
                for h in layer {
                    let _ = writeln!(
                        table,
                        "{},{},{},{},{}",
                        h.layer + 1,
                        h.neuron + 1,
                        format_f64(h.normal[0]),
                        format_f64(h.normal[1]),
                        format_f64(h.offset)
                    );
                }
            }
            emit.text(&format!("hyperplanes_{tag}.csv"), "hyperplanes", Some(epoch), &table)?;
        }

        emit.text(
            &format!("checkpoint_{tag}.txt"),
            "checkpoint",
            Some(epoch),
            &checkpoint::to_string(params),
        )?;
        snapshots.push(CircleSnapshot {
            epoch,
            mse: record.mse.unwrap_or(f64::NAN),
            overlap: overlap_stats,
            ntk: ntk_stats,
        });
        Ok(())
    })?;

    emit.text("loss.csv", "loss", None, &loss_csv(&history))?;
    emit.text("steps.csv", "step_losses", None, &steps)?;
    let stats_rows: Vec<Vec<f64>> = stats_series
        .iter()
        .map(|e| {
            vec![
                e.epoch as f64,
                if e.kernel == "ntk" { 1.0 } else { 0.0 },
                if e.normalized { 1.0 } else { 0.0 },
                e.stats.mean_diag_simple,
                e.stats.mean_diag_complex,
                e.stats.mean_block_ss,
                e.stats.mean_block_cc,
                e.stats.mean_block_sc,
            ]
        })
        .collect();
    export_table(
        &[
            "epoch",
            "is_ntk",
            "normalized",
            "mean_diag_simple",
            "mean_diag_complex",
            "mean_block_ss",
            "mean_block_cc",
            "mean_block_sc",
        ],
        &stats_rows,
        &dir.join("region_stats.csv"),
    )?;
    emit.record("region_stats.csv", "region_stats", None);

    let final_mse = history.last().and_then(|h| h.mse).unwrap_or(f64::NAN);
    manifest.circle = Some(CircleSummary {
        final_mse,
        converged_epoch: outcome.first_epoch_below(CONVERGED_MSE),
        snapshots,
        region_stats: stats_series,
    });
    manifest.history = history;
    manifest.write()?;
    Ok(manifest)
}
