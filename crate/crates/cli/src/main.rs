//! `pathnet` — runs the circle, Fashion-MNIST and oracle experiments and
//! exports kernels as heatmaps.
//!
//! Settings resolve as: experiment preset, then `--config` file, then
//! `PATHNET_*` environment variables, then flags. On failure a single JSON
//! line `{"error": <code>, "message": <text>}` goes to stderr and the exit
//! status is nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pathnet::data::circle::gen_circle;
use pathnet::experiments::export::{export_heatmap, read_csv, HeatmapMeta};
use pathnet::experiments::{
    run_circle, run_fmnist, run_oracle_suite, ExperimentConfig, ExperimentKind, RunManifest, MANIFEST_FILE,
};
use pathnet::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "pathnet",
    version,
    about = "Path-decomposition experiments on gated networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on the circle regression task and emit kernels, predictions and hyperplanes.
    Circle(RunArgs),
    /// Train on relabeled Fashion-MNIST and track per-region path counts and accuracy.
    Fmnist(RunArgs),
    /// Check the fast forward pass and overlap formula against path enumeration.
    Oracle(RunArgs),
    /// Convert data to files.
    #[command(subcommand)]
    Export(ExportCommand),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// relu | dlgn | dlgn-pwc | dln
    #[arg(long)]
    arch: Option<String>,
    /// none | gates | values | both
    #[arg(long)]
    freeze: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Soft-gate temperature; implies soft gates.
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated snapshot epochs; `final` is the last epoch.
    #[arg(long)]
    snapshots: Option<String>,
    /// Fashion-MNIST IDX directory.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Any other configuration key, e.g. `--set batch_size=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum ExportCommand {
    /// Render a matrix CSV as a min–max scaled PGM with a metadata sidecar.
    Heatmap {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "kernel")]
        kind: String,
        /// Record the matrix as trace-normalized.
        #[arg(long)]
        normalized: bool,
        #[arg(long)]
        epoch: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the circle dataset as CSV.
    Circle {
        #[arg(long, default_value_t = 500)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

impl RunArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        put("seed", self.seed.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("arch", self.arch.clone());
        put("freeze", self.freeze.clone());
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("beta", self.beta.map(|v| v.to_string()));
        put("snapshots", self.snapshots.clone());
        put("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("`--set {kv}`: expected KEY=VALUE")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    fn resolve(&self, kind: ExperimentKind) -> Result<ExperimentConfig> {
        ExperimentConfig::resolve(kind, self.config.as_deref(), std::env::vars(), &self.overrides()?)
    }
}

fn report(manifest: &RunManifest) {
    println!("manifest: {}", manifest.out_dir.join(MANIFEST_FILE).display());
    println!("artifacts: {}", manifest.artifacts.len());
    if let Some(c) = &manifest.circle {
        println!("final_mse: {:e}", c.final_mse);
        match c.converged_epoch {
            Some(e) => println!("converged_epoch: {e}"),
            None => println!("converged_epoch: none"),
        }
    }
    if let Some(f) = &manifest.fmnist {
        let e = f.last();
        println!(
            "test_accuracy: {:.4} (simple {:.4}, complex {:.4})",
            e.test_accuracy, e.test_accuracy_simple, e.test_accuracy_complex
        );
    }
    if let Some(o) = &manifest.oracle {
        println!(
            "nets: {}, max_moe_error: {:e}, max_overlap_discrepancy: {}",
            o.nets, o.max_moe_error, o.max_overlap_discrepancy
        );
    }
    let failed = manifest.psd_checks.iter().filter(|p| !p.passes).count();
    if !manifest.psd_checks.is_empty() {
        println!("psd_checks: {} ({} failed)", manifest.psd_checks.len(), failed);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Circle(args) => report(&run_circle(&args.resolve(ExperimentKind::Circle)?)?),
        Command::Fmnist(args) => report(&run_fmnist(&args.resolve(ExperimentKind::Fmnist)?)?),
        Command::Oracle(args) => report(&run_oracle_suite(&args.resolve(ExperimentKind::OracleSuite)?)?),
        Command::Export(ExportCommand::Heatmap {
            input,
            out,
            kind,
            normalized,
            epoch,
            seed,
        }) => {
            let m = read_csv(&input)?;
            export_heatmap(
                &m,
                &out,
                &HeatmapMeta {
                    kind,
                    normalized,
                    epoch,
                    seed,
                },
            )?;
            println!("wrote {}", out.display());
        }
        Command::Export(ExportCommand::Circle { points, out }) => {
            gen_circle(points)?.write_csv(&out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.code(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
