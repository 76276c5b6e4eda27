use std::fmt::Write as _;

use serde::Serialize;

use crate::data::fmnist::{load_dir, modify_fmnist_labels, LabeledImageDataset, NUM_CLASSES};
use crate::data::Region;
use crate::error::{Error, Result};
use crate::kernels::{empirical_ntk, ntk_diagonal, overlap_kernel, trace_normalize, KernelMatrix};
use crate::math::rng::streams;
use crate::math::{Matrix, Rng};
use crate::model::{forward_batch, gate_tensor, train, GateMode, LossKind, ModelParams, TrainConfig};

use super::export::format_f64;
use super::{prepare_out_dir, Emitter, ExperimentConfig, RunManifest};

/// Per-epoch resource-allocation metrics.
#[derive(Clone, Debug, Serialize)]
pub struct FmnistEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub test_accuracy_simple: f64,
    pub test_accuracy_complex: f64,
    /// Mean active-path count `Λ(x, x)` over the probe points of a region.
    pub overlap_diag_simple: Option<f64>,
    pub overlap_diag_complex: Option<f64>,
    pub ntk_diag_simple: f64,
    pub ntk_diag_complex: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FmnistSummary {
    pub train_size: usize,
    pub test_size: usize,
    pub probe_size: usize,
    pub cluster_labels: Vec<u8>,
    pub epochs: Vec<FmnistEpoch>,
}

impl FmnistSummary {
    pub fn last(&self) -> &FmnistEpoch {
        self.epochs.last().expect("epoch 0 is always recorded")
    }
}

fn region_means(values: &[f64], regions: &[Region]) -> (f64, f64) {
    let mean = |r: Region| {
        let (s, n) = values
            .iter()
            .zip(regions)
            .filter(|(_, &g)| g == r)
            .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
        if n == 0 {
            f64::NAN
        } else {
            s / n as f64
        }
    };
    (mean(Region::Simple), mean(Region::Complex))
}

fn predicted_classes(params: &ModelParams, images: &Matrix, mode: GateMode) -> Result<Vec<usize>> {
    let out = forward_batch(params, images, mode)?.output;
    Ok(out
        .row_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
                )
                .0
        })
        .collect())
}

/// `Λ(x, x)`: the product over layers of the number of active neurons.
fn active_path_counts(params: &ModelParams, inputs: &Matrix) -> Result<Vec<f64>> {
    let gates = gate_tensor(params, inputs)?;
    Ok((0..inputs.rows())
        .map(|i| gates.active_counts(i).iter().map(|&c| c as f64).product())
        .collect())
}

/// Mean of `K` over each pair of class blocks, `classes x classes`.
pub fn class_average(k: &KernelMatrix, labels: &[usize], classes: usize) -> Matrix {
    let mut sum = Matrix::zeros(classes, classes);
    let mut count = Matrix::zeros(classes, classes);
    for (a, &ca) in labels.iter().enumerate() {
        for (b, &cb) in labels.iter().enumerate() {
            sum[(ca, cb)] += k.get(a, b);
            count[(ca, cb)] += 1.0;
        }
    }
    for (s, c) in sum.as_mut_slice().iter_mut().zip(count.as_slice()) {
        if *c > 0.0 {
            *s /= c;
        }
    }
    sum
}

fn class_probe(test: &LabeledImageDataset, per_class: usize, rng: &mut Rng) -> Vec<usize> {
    let mut out = Vec::new();
    for class in 1..=NUM_CLASSES as u8 {
        let mut idx: Vec<usize> = (0..test.len()).filter(|&i| test.labels[i] == class).collect();
        rng.shuffle(&mut idx);
        idx.truncate(per_class);
        out.extend(idx);
    }
    out.sort_by_key(|&i| (test.labels[i], i));
    out
}

/// Relabels Fashion-MNIST, trains a classifier, and tracks per region how
/// many paths are active, the tangent kernel diagonal, and test accuracy.
pub fn run_fmnist(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    let dir = config.out_dir.clone();
    let (train_full, test_full) = load_dir(&config.data_dir)?;
    prepare_out_dir(&dir)?;
    let mut manifest = RunManifest::new(config);

    let mut sub_rng = Rng::stream(config.seed, streams::SUBSAMPLE);
    let keep = |d: &LabeledImageDataset, n: usize, rng: &mut Rng| if n == 0 { d.clone() } else { d.subsample(n, rng) };
    let train_set = keep(&train_full, config.train_size, &mut sub_rng);
    let test_set = keep(&test_full, config.test_size, &mut sub_rng);
    drop((train_full, test_full));
    let modified = modify_fmnist_labels(&train_set, &test_set, &mut Rng::stream(config.seed, streams::CLUSTER))?;
    let (train_set, test_set) = (modified.train, modified.test);

    let mut probe_rng = Rng::stream(config.seed, streams::PROBE);
    let probe = test_set.select(&test_set.region_subsample(config.kernel_per_region, &mut probe_rng));
    let class_idx = class_probe(&test_set, config.kernel_per_class, &mut probe_rng);
    let class_set = test_set.select(&class_idx);
    let class_labels: Vec<usize> = class_set.labels.iter().map(|&l| l as usize - 1).collect();
    if probe.is_empty() || class_set.is_empty() {
        return Err(Error::Config("kernel probe sets are empty".into()));
    }

    let input_dim = train_set.images.cols();
    let arch = config.architecture(input_dim, NUM_CLASSES)?;
    let params = ModelParams::init(arch, &mut Rng::stream(config.seed, streams::INIT))?.with_freeze(config.freeze);
    let snapshot_epochs = config.snapshot_epochs();
    let mut train_config = TrainConfig::new(
        config.epochs,
        config.lr,
        config.gate_mode,
        LossKind::SoftmaxCrossEntropy,
    );
    train_config.batch_size = config.batch_size;
    train_config.seed = config.seed;
    train_config.snapshot_epochs = Vec::new();

    let batch = train_set.batch();
    let test_classes: Vec<usize> = test_set.labels.iter().map(|&l| l as usize - 1).collect();
    let mut emit = Emitter {
        dir: &dir,
        manifest: &mut manifest,
    };
    let mut labels_csv = String::from("cluster,original_label,assigned_label\n");
    for (j, l) in modified.cluster_labels.iter().enumerate() {
        let _ = writeln!(labels_csv, "{},{},{}", j % 5 + 1, 6 + j / 5, l);
    }
    emit.text("cluster_labels.csv", "cluster_labels", None, &labels_csv)?;

    let mut history = Vec::new();
    let mut epochs = Vec::new();
    train(params, &batch, &train_config, |record, params| {
        history.push(record.into());
        let predicted = predicted_classes(params, &test_set.images, config.gate_mode)?;
        let hits: Vec<f64> = predicted
            .iter()
            .zip(&test_classes)
            .map(|(p, t)| if p == t { 1.0 } else { 0.0 })
            .collect();
        let (acc_simple, acc_complex) = region_means(&hits, &test_set.regions);
        let (overlap_simple, overlap_complex) = if arch.kind.has_gates() {
            let (s, c) = region_means(&active_path_counts(params, &probe.images)?, &probe.regions);
            (Some(s), Some(c))
        } else {
            (None, None)
        };
        let (ntk_simple, ntk_complex) =
            region_means(&ntk_diagonal(params, &probe.images, config.gate_mode)?, &probe.regions);
        let epoch = record.epoch;
        epochs.push(FmnistEpoch {
            epoch,
            loss: record.loss,
            train_accuracy: record.accuracy.unwrap_or(f64::NAN),
            test_accuracy: hits.iter().sum::<f64>() / hits.len().max(1) as f64,
            test_accuracy_simple: acc_simple,
            test_accuracy_complex: acc_complex,
            overlap_diag_simple: overlap_simple,
            overlap_diag_complex: overlap_complex,
            ntk_diag_simple: ntk_simple,
            ntk_diag_complex: ntk_complex,
        });

        if snapshot_epochs.contains(&epoch) {
            let tag = format!("e{epoch:04}");
            let mut kernels = Vec::new();
            if arch.kind.has_gates() {
                let raw = overlap_kernel(&gate_tensor(params, &class_set.images)?)?;
                kernels.push(trace_normalize(&raw)?);
                kernels.push(raw);
            }
            let raw = empirical_ntk(params, &class_set.images, config.gate_mode)?;
            kernels.push(trace_normalize(&raw)?);
            kernels.push(raw);
            for k in &kernels {
                let suffix = if k.normalized { "" } else { "_raw" };
                let stem = format!("kernel_{}{suffix}_{tag}", k.kind.label());
                emit.kernel(&stem, k, epoch, config.seed)?;
                let avg = KernelMatrix {
                    kind: k.kind,
                    normalized: k.normalized,
                    matrix: class_average(k, &class_labels, NUM_CLASSES),
                };
                emit.kernel(&format!("class_{stem}"), &avg, epoch, config.seed)?;
            }
            emit.text(
                &format!("checkpoint_{tag}.txt"),
                "checkpoint",
                Some(epoch),
                &crate::model::checkpoint::to_string(params),
            )?;
        }
        Ok(())
    })?;

    let mut metrics = String::from(
        "epoch,loss,train_accuracy,test_accuracy,test_accuracy_simple,test_accuracy_complex,\
         overlap_diag_simple,overlap_diag_complex,ntk_diag_simple,ntk_diag_complex\n",
    );
    for e in &epochs {
        let opt = |v: Option<f64>| format_f64(v.unwrap_or(f64::NAN));
        let _ = writeln!(
            metrics,
            "{},{},{},{},{},{},{},{},{},{}",
            e.epoch,
            format_f64(e.loss),
            format_f64(e.train_accuracy),
            format_f64(e.test_accuracy),
            format_f64(e.test_accuracy_simple),
            format_f64(e.test_accuracy_complex),
            opt(e.overlap_diag_simple),
            opt(e.overlap_diag_complex),
            format_f64(e.ntk_diag_simple),
            format_f64(e.ntk_diag_complex),
        );
    }
    emit.text("metrics.csv", "region_metrics", None, &metrics)?;

    manifest.fmnist = Some(FmnistSummary {
        train_size: train_set.len(),
        test_size: test_set.len(),
        probe_size: probe.len(),
        cluster_labels: modified.cluster_labels,
        epochs,
    });
    manifest.history = history;
    manifest.write()?;
    Ok(manifest)
}
