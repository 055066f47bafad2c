use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use spade_bench::{operand_stream, scalar_pairs};
use spade_core::engine::unpack;
use spade_core::nn::{Arithmetic, Backend, Classifier, Dataset, Model};
use spade_core::{ref_mac, Engine, LaneMask, Mode, PositFormat};

const DOT: usize = 256;

/// MAC results per second: a 256-issue dot product per lane, then readout.
fn engine_dot(c: &mut Criterion) {
    let mut group = c.benchmark_group("engine_dot");
    for mode in Mode::ALL {
        let ops = operand_stream(mode, DOT, 1);
        group.throughput(Throughput::Elements((DOT * mode.lanes()) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(mode), &ops, |b, ops| {
            let mut engine = Engine::new(mode);
            b.iter(|| {
                engine.reset();
                for &(x, y) in ops {
                    engine.accumulate(x, y, LaneMask::all(mode)).unwrap();
                }
                black_box(engine.readout())
            })
        });
    }
    group.finish();
}

fn traced_issue(c: &mut Criterion) {
    let mut group = c.benchmark_group("traced_issue");
    for mode in Mode::ALL {
        let ops = operand_stream(mode, 1, 2)[0];
        group.bench_function(BenchmarkId::from_parameter(mode), |b| {
            let mut engine = Engine::new(mode);
            b.iter(|| black_box(engine.issue(ops.0, ops.1, LaneMask::all(mode)).unwrap()))
        });
    }
    group.finish();
}

fn stage1_unpack(c: &mut Criterion) {
    let mut group = c.benchmark_group("unpack");
    for mode in Mode::ALL {
        let ops = operand_stream(mode, 64, 3);
        group.throughput(Throughput::Elements(64));
        group.bench_function(BenchmarkId::from_parameter(mode), |b| {
            b.iter(|| {
                for &(x, _) in &ops {
                    black_box(unpack(x, mode));
                }
            })
        });
    }
    group.finish();
}

fn oracle_dot(c: &mut Criterion) {
    let mut group = c.benchmark_group("ref_mac_dot");
    for format in PositFormat::ALL {
        let pairs = scalar_pairs(format, DOT, 4);
        group.throughput(Throughput::Elements(DOT as u64));
        group.bench_function(BenchmarkId::from_parameter(format.short_name()), |b| {
            b.iter(|| black_box(ref_mac(&pairs, format)))
        });
    }
    group.finish();
}

fn mnist_image(c: &mut Criterion) {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/testdata");
    let model = Model::read(format!("{dir}/mnist_small.spdw")).unwrap();
    let data = Dataset::load_dir(dir).unwrap();
    let mut group = c.benchmark_group("mnist_image");
    group.sample_size(10);
    let float = Classifier::new(&model, Arithmetic::Float64);
    group.bench_function("float64", |b| b.iter(|| black_box(float.classify(data.image(0)).unwrap())));
    for format in PositFormat::ALL {
        let classifier = Classifier::new(
            &model,
            Arithmetic::Posit {
                default: format,
                backend: Backend::Engine,
            },
        );
        group.bench_function(format.short_name(), |b| {
            b.iter(|| black_box(classifier.classify(data.image(0)).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, engine_dot, traced_issue, stage1_unpack, oracle_dot, mnist_image);
criterion_main!(benches);
