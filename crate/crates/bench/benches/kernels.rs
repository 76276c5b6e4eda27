use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pathnet::kernels::{empirical_ntk, overlap_kernel};
use pathnet::model::{forward_batch, gate_tensor};
use pathnet::paths::PathOracle;
use pathnet::{ArchKind, Architecture, GateMode, ModelParams, Rng};
use pathnet_bench::{circle_inputs, circle_model};

fn overlap(c: &mut Criterion) {
    let mut group = c.benchmark_group("overlap_kernel");
    for n in [100, 500] {
        let params = circle_model(ArchKind::Dlgn, 16, 6, 0);
        let x = circle_inputs(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| overlap_kernel(&gate_tensor(&params, x).unwrap()).unwrap())
        });
    }
    group.finish();
}

fn ntk(c: &mut Criterion) {
    let mut group = c.benchmark_group("empirical_ntk");
    group.sample_size(10);
    for kind in [ArchKind::Relu, ArchKind::Dlgn] {
        let params = circle_model(kind, 16, 6, 0);
        let x = circle_inputs(500);
        group.bench_with_input(BenchmarkId::from_parameter(kind.name()), &x, |b, x| {
            b.iter(|| empirical_ntk(&params, x, GateMode::Soft { beta: 10.0 }).unwrap())
        });
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_batch");
    for kind in ArchKind::ALL {
        let params = circle_model(kind, 16, 6, 0);
        let x = circle_inputs(500);
        group.bench_with_input(BenchmarkId::from_parameter(kind.name()), &x, |b, x| {
            b.iter(|| forward_batch(&params, x, GateMode::Soft { beta: 10.0 }).unwrap())
        });
    }
    group.finish();
}

fn path_enumeration(c: &mut Criterion) {
    // 4^3 = 64 paths per input, against the batched forward pass above.
    let arch = Architecture::new(ArchKind::Dlgn, 2, 4, 4, 1, false).unwrap();
    let bias_free = ModelParams::init(arch, &mut Rng::new(1)).unwrap();
    let oracle = PathOracle::new(&bias_free);
    let x = circle_inputs(50);
    c.bench_function("path_oracle_moe_50", |b| {
        b.iter(|| {
            for row in x.row_iter() {
                oracle.moe_output(row).unwrap();
            }
        })
    });
}

criterion_group!(benches, overlap, ntk, forward, path_enumeration);
criterion_main!(benches);
