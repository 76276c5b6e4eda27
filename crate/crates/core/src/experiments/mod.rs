//! Configuration-driven experiment runs that write every intermediate
//! (losses, kernels, predictions, hyperplanes) to an output directory and
//! describe them in a JSON manifest.
//!
//! Configuration is layered: preset defaults for the experiment kind, then
//! an optional `key = value` file (`#` starts a comment), then `PATHNET_*`
//! environment variables, then explicit overrides (the CLI flags).

mod circle;
pub mod export;
mod fmnist;
mod oracle;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{PsdReport, RegionStats};
use crate::model::{ArchKind, Architecture, EpochRecord, Freeze, GateMode};

pub use circle::{run_circle, CircleSnapshot, CircleSummary};
pub use fmnist::{run_fmnist, FmnistEpoch, FmnistSummary};
pub use oracle::{run_oracle_suite, run_oracle_suite_with, OracleSummary};

/// Prefix of environment variables that override configuration keys, e.g.
/// `PATHNET_EPOCHS=200`.
pub const ENV_PREFIX: &str = "PATHNET_";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Circle,
    Fmnist,
    OracleSuite,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Circle => "circle",
            ExperimentKind::Fmnist => "fmnist",
            ExperimentKind::OracleSuite => "oracle",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "circle" => Ok(ExperimentKind::Circle),
            "fmnist" | "fashion-mnist" => Ok(ExperimentKind::Fmnist),
            "oracle" | "oracle-suite" | "oracle_suite" => Ok(ExperimentKind::OracleSuite),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

/// Snapshot epoch list before `final` is resolved against the epoch count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SnapshotSpec {
    Epoch(usize),
    Final,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub arch: ArchKind,
    pub width: usize,
    pub hidden_layers: usize,
    pub use_bias: bool,
    pub gate_mode: GateMode,
    pub freeze: Freeze,
    pub epochs: usize,
    pub lr: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub snapshots: Vec<SnapshotSpec>,
    pub out_dir: PathBuf,
    /// Circle: number of points.
    pub points: usize,
    /// Fashion-MNIST: directory holding the four IDX files.
    pub data_dir: PathBuf,
    /// Fashion-MNIST: training / test subsample sizes (0 keeps everything).
    pub train_size: usize,
    pub test_size: usize,
    /// Fashion-MNIST: probe points per region for per-epoch kernel means.
    pub kernel_per_region: usize,
    /// Fashion-MNIST: probe points per class for the class-averaged kernels.
    pub kernel_per_class: usize,
    /// Oracle sweep: nets per architecture/shape and inputs per net.
    pub oracle_seeds: usize,
    pub oracle_inputs: usize,
    pub oracle_max_dim: usize,
    pub oracle_max_width: usize,
    pub oracle_max_layers: usize,
}

impl ExperimentConfig {
    pub fn preset(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            kind,
            arch: ArchKind::Dlgn,
            width: 16,
            hidden_layers: 5,
            use_bias: true,
            gate_mode: GateMode::Soft { beta: 10.0 },
            freeze: Freeze::NONE,
            epochs: 500,
            lr: 3e-3,
            batch_size: None,
            seed: 0,
            snapshots: vec![SnapshotSpec::Epoch(0), SnapshotSpec::Epoch(3), SnapshotSpec::Final],
            out_dir: PathBuf::from(format!("runs/{}", kind.name())),
            points: 500,
            data_dir: PathBuf::from("data/fashion-mnist"),
            train_size: 5000,
            test_size: 1000,
            kernel_per_region: 500,
            kernel_per_class: 50,
            oracle_seeds: 20,
            oracle_inputs: 10,
            oracle_max_dim: 3,
            oracle_max_width: 4,
            oracle_max_layers: 4,
        };
        match kind {
            ExperimentKind::Circle => base,
            ExperimentKind::Fmnist => ExperimentConfig {
                arch: ArchKind::DlgnPwc,
                width: 128,
                epochs: 20,
                lr: 2e-4,
                batch_size: Some(32),
                snapshots: vec![SnapshotSpec::Epoch(0), SnapshotSpec::Final],
                ..base
            },
            ExperimentKind::OracleSuite => ExperimentConfig {
                use_bias: false,
                gate_mode: GateMode::Hard,
                ..base
            },
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let value = value.trim();
        let bad = |what: &str| Error::Config(format!("invalid value `{value}` for `{key}`: expected {what}"));
        fn num<T: FromStr>(v: &str) -> Option<T> {
            v.parse().ok()
        }
        match key.as_str() {
            "kind" | "experiment" => self.kind = value.parse()?,
            "arch" => self.arch = value.parse()?,
            "width" => self.width = num(value).ok_or_else(|| bad("an integer"))?,
            "hidden_layers" => self.hidden_layers = num(value).ok_or_else(|| bad("an integer"))?,
            "bias" => self.use_bias = parse_bool(value).ok_or_else(|| bad("true or false"))?,
            "gate" => {
                self.gate_mode = match value.to_ascii_lowercase().as_str() {
                    "hard" => GateMode::Hard,
                    "soft" => GateMode::Soft { beta: self.beta() },
                    _ => return Err(bad("hard or soft")),
                }
            }
            "beta" => {
                let beta: f64 = num(value).ok_or_else(|| bad("a positive number"))?;
                self.gate_mode = GateMode::soft(beta).map_err(|_| bad("a positive number"))?;
            }
            "freeze" => self.freeze = value.parse()?,
            "epochs" => self.epochs = num(value).ok_or_else(|| bad("an integer"))?,
            "lr" => {
                self.lr = num(value)
                    .filter(|&v: &f64| v > 0.0)
                    .ok_or_else(|| bad("a positive number"))?
            }
            "batch_size" => {
                self.batch_size = match value.to_ascii_lowercase().as_str() {
                    "full" | "0" | "none" => None,
                    v => Some(
                        num(v)
                            .filter(|&b: &usize| b > 0)
                            .ok_or_else(|| bad("a positive integer or `full`"))?,
                    ),
                }
            }
            "seed" => self.seed = num(value).ok_or_else(|| bad("an unsigned integer"))?,
            "snapshots" => self.snapshots = parse_snapshots(value)?,
            "out" | "out_dir" => self.out_dir = PathBuf::from(value),
            "points" => self.points = num(value).ok_or_else(|| bad("an integer"))?,
            "data_dir" | "fmnist_dir" => self.data_dir = PathBuf::from(value),
            "train_size" => self.train_size = num(value).ok_or_else(|| bad("an integer"))?,
            "test_size" => self.test_size = num(value).ok_or_else(|| bad("an integer"))?,
            "kernel_per_region" => self.kernel_per_region = num(value).ok_or_else(|| bad("an integer"))?,
            "kernel_per_class" => self.kernel_per_class = num(value).ok_or_else(|| bad("an integer"))?,
            "oracle_seeds" => self.oracle_seeds = num(value).ok_or_else(|| bad("an integer"))?,
            "oracle_inputs" => self.oracle_inputs = num(value).ok_or_else(|| bad("an integer"))?,
            "oracle_max_dim" => self.oracle_max_dim = num(value).ok_or_else(|| bad("an integer"))?,
            "oracle_max_width" => self.oracle_max_width = num(value).ok_or_else(|| bad("an integer"))?,
            "oracle_max_layers" => self.oracle_max_layers = num(value).ok_or_else(|| bad("an integer"))?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    fn beta(&self) -> f64 {
        match self.gate_mode {
            GateMode::Soft { beta } => beta,
            GateMode::Hard => 10.0,
        }
    }

    /// Applies every line of a `key = value` file.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Applies `PATHNET_<KEY>` variables; unrelated variables are ignored.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        let mut relevant: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_ascii_lowercase(), v)))
            .collect();
        // `gate` before `beta` would drop the temperature; apply in a fixed order
        relevant.sort();
        for (k, v) in relevant {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Presets, then `file`, then the environment, then `overrides`.
    pub fn resolve<I>(kind: ExperimentKind, file: Option<&Path>, env: I, overrides: &[(String, String)]) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut config = ExperimentConfig::preset(kind);
        if let Some(path) = file {
            config.apply_file(path)?;
        }
        config.apply_env(env)?;
        for (k, v) in overrides {
            config.set(k, v)?;
        }
        config.kind = kind;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture(1, 1)?;
        for s in &self.snapshots {
            if let SnapshotSpec::Epoch(e) = s {
                if *e > self.epochs {
                    return Err(Error::Config(format!(
                        "snapshot epoch {e} beyond the {} training epochs",
                        self.epochs
                    )));
                }
            }
        }
        if self.kind == ExperimentKind::Circle && self.points < 2 {
            return Err(Error::Config("circle needs at least 2 points".into()));
        }
        Ok(())
    }

    pub fn architecture(&self, input_dim: usize, output_dim: usize) -> Result<Architecture> {
        Architecture::new(
            self.arch,
            input_dim,
            self.width,
            self.hidden_layers + 1,
            output_dim,
            self.use_bias,
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    /// Sorted, de-duplicated snapshot epochs; always includes 0.
    pub fn snapshot_epochs(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .snapshots
            .iter()
            .map(|s| match s {
                SnapshotSpec::Epoch(e) => *e,
                SnapshotSpec::Final => self.epochs,
            })
            .filter(|&e| e <= self.epochs)
            .collect();
        out.push(0);
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Every setting as `key → value`, in a form [`ExperimentConfig::set`]
    /// accepts back.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("kind", self.kind.to_string());
        put("arch", self.arch.to_string());
        put("width", self.width.to_string());
        put("hidden_layers", self.hidden_layers.to_string());
        put("bias", self.use_bias.to_string());
        match self.gate_mode {
            GateMode::Hard => put("gate", "hard".into()),
            GateMode::Soft { beta } => {
                put("gate", "soft".into());
                put("beta", format!("{beta:?}"));
            }
        }
        put("freeze", self.freeze.to_string());
        put("epochs", self.epochs.to_string());
        put("lr", format!("{:?}", self.lr));
        put("batch_size", self.batch_size.map_or("full".into(), |b| b.to_string()));
        put("seed", self.seed.to_string());
        put(
            "snapshots",
            self.snapshots
                .iter()
                .map(|s| match s {
                    SnapshotSpec::Epoch(e) => e.to_string(),
                    SnapshotSpec::Final => "final".into(),
                })
                .collect::<Vec<_>>()
                .join(","),
        );
        put("out", self.out_dir.display().to_string());
        match self.kind {
            ExperimentKind::Circle => put("points", self.points.to_string()),
            ExperimentKind::Fmnist => {
                put("data_dir", self.data_dir.display().to_string());
                put("train_size", self.train_size.to_string());
                put("test_size", self.test_size.to_string());
                put("kernel_per_region", self.kernel_per_region.to_string());
                put("kernel_per_class", self.kernel_per_class.to_string());
            }
            ExperimentKind::OracleSuite => {
                put("oracle_seeds", self.oracle_seeds.to_string());
                put("oracle_inputs", self.oracle_inputs.to_string());
                put("oracle_max_dim", self.oracle_max_dim.to_string());
                put("oracle_max_width", self.oracle_max_width.to_string());
                put("oracle_max_layers", self.oracle_max_layers.to_string());
            }
        }
        m
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

/// Comma-separated epochs; `final` stands for the last epoch.
pub fn parse_snapshots(value: &str) -> Result<Vec<SnapshotSpec>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s.eq_ignore_ascii_case("final") {
                Ok(SnapshotSpec::Final)
            } else {
                s.parse()
                    .map(SnapshotSpec::Epoch)
                    .map_err(|_| Error::Config(format!("bad snapshot epoch `{s}`")))
            }
        })
        .collect()
}

/// One file written by a run, relative to the output directory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Artifact {
    pub path: String,
    pub kind: String,
    pub epoch: Option<usize>,
}

/// Metrics of one epoch, without the per-step losses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub epoch: usize,
    pub loss: f64,
    pub mse: Option<f64>,
    pub accuracy: Option<f64>,
}

impl From<&EpochRecord> for HistoryEntry {
    fn from(r: &EpochRecord) -> Self {
        HistoryEntry {
            epoch: r.epoch,
            loss: r.loss,
            mse: r.mse,
            accuracy: r.accuracy,
        }
    }
}

/// Symmetry/PSD check of one emitted kernel.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsdEntry {
    pub epoch: usize,
    pub kernel: String,
    pub normalized: bool,
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    pub eigen_floor: f64,
    pub passes: bool,
}

impl PsdEntry {
    fn new(epoch: usize, kernel: String, normalized: bool, r: PsdReport) -> Self {
        PsdEntry {
            epoch,
            kernel,
            normalized,
            max_asymmetry: r.max_asymmetry,
            min_eigenvalue: r.min_eigenvalue,
            eigen_floor: r.eigen_floor,
            passes: r.passes(),
        }
    }
}

/// Region statistics of one kernel at one epoch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionStatsEntry {
    pub epoch: usize,
    pub kernel: String,
    pub normalized: bool,
    pub stats: RegionStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub kind: ExperimentKind,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub history: Vec<HistoryEntry>,
    pub artifacts: Vec<Artifact>,
    pub psd_checks: Vec<PsdEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circle: Option<CircleSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fmnist: Option<FmnistSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    fn new(config: &ExperimentConfig) -> Self {
        RunManifest {
            kind: config.kind,
            config: config.to_map(),
            seed: config.seed,
            history: Vec::new(),
            artifacts: Vec::new(),
            psd_checks: Vec::new(),
            circle: None,
            fmnist: None,
            oracle: None,
            out_dir: config.out_dir.clone(),
        }
    }

    pub fn artifacts_at(&self, epoch: usize) -> impl Iterator<Item = &Artifact> {
        self.artifacts.iter().filter(move |a| a.epoch == Some(epoch))
    }

    pub fn artifact_path(&self, a: &Artifact) -> PathBuf {
        self.out_dir.join(&a.path)
    }

    /// Every listed artifact exists on disk.
    pub fn verify(&self) -> Result<()> {
        for a in &self.artifacts {
            let p = self.artifact_path(a);
            if !p.is_file() {
                return Err(Error::io(
                    &p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "artifact missing"),
                ));
            }
        }
        Ok(())
    }

    fn write(&self) -> Result<()> {
        let path = self.out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// Collects artifact records while writing files under one directory.
struct Emitter<'a> {
    dir: &'a Path,
    manifest: &'a mut RunManifest,
}

impl Emitter<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str, kind: &str, epoch: Option<usize>) {
        self.manifest.artifacts.push(Artifact {
            path: name.to_string(),
            kind: kind.to_string(),
            epoch,
        });
    }

    fn text(&mut self, name: &str, kind: &str, epoch: Option<usize>, text: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.record(name, kind, epoch);
        Ok(())
    }

    /// CSV, PGM and sidecar of a kernel; returns its PSD check.
    fn kernel(&mut self, stem: &str, k: &crate::kernels::KernelMatrix, epoch: usize, seed: u64) -> Result<PsdEntry> {
        let meta = export::HeatmapMeta {
            kind: k.kind.label(),
            normalized: k.normalized,
            epoch: Some(epoch),
            seed,
        };
        export::export_csv(&k.matrix, &self.path(&format!("{stem}.csv")))?;
        export::export_heatmap(&k.matrix, &self.path(&format!("{stem}.pgm")), &meta)?;
        self.record(&format!("{stem}.csv"), "kernel_csv", Some(epoch));
        self.record(&format!("{stem}.pgm"), "kernel_pgm", Some(epoch));
        self.record(&format!("{stem}.pgm.meta"), "kernel_meta", Some(epoch));
        let entry = PsdEntry::new(epoch, k.kind.label(), k.normalized, k.psd_report());
        self.manifest.psd_checks.push(entry.clone());
        Ok(entry)
    }
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
