//! End-to-end runs of the experiment drivers on small configurations.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use pathnet::data::idx::{write_images, write_labels, IdxImages};
use pathnet::experiments::export::{read_csv, read_pgm, read_sidecar, sidecar_path};
use pathnet::experiments::{
    run_circle, run_fmnist, run_oracle_suite, run_oracle_suite_with, ExperimentConfig, ExperimentKind, MANIFEST_FILE,
};
use pathnet::model::forward;
use pathnet::{Error, GateMode, Rng};

fn small_circle(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(ExperimentKind::Circle);
    c.apply_text("points = 40\nepochs = 6\nwidth = 4\nhidden_layers = 2\nsnapshots = 0,2,final\nseed = 3")
        .unwrap();
    c.out_dir = out.to_path_buf();
    c
}

#[test]
fn circle_run_emits_every_snapshot_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_circle(&small_circle(dir.path())).unwrap();
    manifest.verify().unwrap();
    assert!(dir.path().join(MANIFEST_FILE).is_file());
    assert_eq!(manifest.history.len(), 7);

    for epoch in [0, 2, 6] {
        let names: BTreeSet<String> = manifest.artifacts_at(epoch).map(|a| a.path.clone()).collect();
        let tag = format!("e{epoch:04}");
        for stem in [
            "kernel_layer1",
            "kernel_layer2",
            "kernel_overlap_raw",
            "kernel_overlap",
            "kernel_ntk_raw",
            "kernel_ntk",
        ] {
            for ext in ["csv", "pgm", "pgm.meta"] {
                let name = format!("{stem}_{tag}.{ext}");
                assert!(names.contains(&name), "missing {name}");
            }
        }
        for name in ["loss", "predictions", "hyperplanes"] {
            assert!(
                names.contains(&format!("{name}_{tag}.csv")),
                "missing {name} at {epoch}"
            );
        }
        assert!(names.contains(&format!("checkpoint_{tag}.txt")));

        let k = read_csv(&dir.path().join(format!("kernel_overlap_{tag}.csv"))).unwrap();
        assert_eq!(k.shape(), (40, 40));
        let (w, h, _) = read_pgm(&dir.path().join(format!("kernel_overlap_{tag}.pgm"))).unwrap();
        assert_eq!((w, h), (40, 40));
        let meta = read_sidecar(&sidecar_path(&dir.path().join(format!("kernel_overlap_{tag}.pgm")))).unwrap();
        assert!(meta.iter().any(|(k, v)| k == "epoch" && v == &epoch.to_string()));
    }
    assert!(manifest.psd_checks.iter().all(|p| p.passes));
    assert_eq!(manifest.psd_checks.len(), 3 * 6);
    let summary = manifest.circle.as_ref().unwrap();
    assert_eq!(summary.snapshots.len(), 3);
    assert!(summary.final_mse.is_finite());
}

#[test]
fn predictions_are_in_ascending_angle_order() {
    let dir = tempfile::tempdir().unwrap();
    run_circle(&small_circle(dir.path())).unwrap();
    let text = fs::read_to_string(dir.path().join("predictions_e0006.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("angle,y,y_hat,region"));
    let angles: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(angles.len(), 40);
    assert!(angles.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(angles[0], 0.0);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_circle(&small_circle(a.path())).unwrap();
    let mb = run_circle(&small_circle(b.path())).unwrap();
    assert_eq!(ma.artifacts, mb.artifacts);
    for art in &ma.artifacts {
        let x = fs::read(a.path().join(&art.path)).unwrap();
        let y = fs::read(b.path().join(&art.path)).unwrap();
        assert!(x == y, "{} differs", art.path);
    }
}

#[test]
fn different_seeds_give_different_kernels() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_circle(&small_circle(a.path())).unwrap();
    let mut other = small_circle(b.path());
    other.seed = 4;
    run_circle(&other).unwrap();
    let name = "kernel_ntk_raw_e0000.csv";
    assert_ne!(
        fs::read(a.path().join(name)).unwrap(),
        fs::read(b.path().join(name)).unwrap()
    );
}

fn small_oracle(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(ExperimentKind::OracleSuite);
    c.apply_text("oracle_seeds = 2\noracle_max_width = 3\noracle_max_layers = 3")
        .unwrap();
    c.out_dir = out.to_path_buf();
    c
}

#[test]
fn oracle_suite_passes_on_the_real_forward_pass() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_oracle_suite(&small_oracle(dir.path())).unwrap();
    let s = manifest.oracle.unwrap();
    assert!(s.passed());
    assert_eq!(s.nets, 4 * 3 * 3 * 2 * 2);
    assert!(dir.path().join("oracle.csv").is_file());
}

#[test]
fn oracle_suite_catches_a_corrupted_forward_pass() {
    let dir = tempfile::tempdir().unwrap();
    let result = run_oracle_suite_with(&small_oracle(dir.path()), |p, x| {
        let mut out = forward(p, x, GateMode::Hard)?.output.into_vec();
        out[0] += 1e-6;
        Ok(out)
    });
    assert!(matches!(result, Err(Error::OracleViolation(_))), "{result:?}");
}

/// Ten classes of 6x6 images, each class a distinct bright stripe plus noise.
fn write_fixture(dir: &Path, per_class: usize, prefix: &str, rng: &mut Rng) {
    let (rows, cols) = (6, 6);
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per_class * 10 {
        let class = i % 10;
        labels.push(class as u8);
        for p in 0..rows * cols {
            let on = p % 10 == class || (p / cols + class) % 7 == 0;
            let base = if on { 200.0 } else { 30.0 };
            pixels.push((base + 25.0 * rng.normal()).clamp(0.0, 255.0) as u8);
        }
    }
    write_images(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &IdxImages { rows, cols, pixels },
    )
    .unwrap();
    write_labels(&dir.join(format!("{prefix}-labels-idx1-ubyte")), &labels).unwrap();
}

#[test]
fn fmnist_run_on_a_synthetic_fixture() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(11);
    write_fixture(data.path(), 20, "train", &mut rng);
    write_fixture(data.path(), 8, "t10k", &mut rng);

    let mut c = ExperimentConfig::preset(ExperimentKind::Fmnist);
    c.apply_text(
        "width = 8\nhidden_layers = 2\nepochs = 2\nbatch_size = 16\ntrain_size = 0\ntest_size = 0\n\
         kernel_per_region = 10\nkernel_per_class = 3\nlr = 0.01",
    )
    .unwrap();
    c.data_dir = data.path().to_path_buf();
    c.out_dir = out.path().to_path_buf();
    let manifest = run_fmnist(&c).unwrap();
    manifest.verify().unwrap();

    let f = manifest.fmnist.as_ref().unwrap();
    assert_eq!((f.train_size, f.test_size, f.probe_size), (200, 80, 20));
    assert_eq!(f.epochs.len(), 3);
    // Each of the labels 6..=10 is given to exactly five clusters.
    for label in 6..=10u8 {
        assert_eq!(f.cluster_labels.iter().filter(|&&l| l == label).count(), 5);
    }
    let last = f.last();
    assert!(last.overlap_diag_simple.unwrap() >= 1.0);
    assert!((0.0..=1.0).contains(&last.test_accuracy));
    assert!(manifest.psd_checks.iter().all(|p| p.passes));
    let class_kernel = read_csv(&out.path().join("class_kernel_ntk_e0002.csv")).unwrap();
    assert_eq!(class_kernel.shape(), (10, 10));
}

#[test]
fn fmnist_without_data_is_an_io_error() {
    let out = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::preset(ExperimentKind::Fmnist);
    c.data_dir = out.path().join("absent");
    c.out_dir = out.path().join("run");
    assert!(matches!(run_fmnist(&c), Err(Error::Io { .. })));
}
