//! Parallel against sequential execution of the hot kernels. Both paths run
//! in one binary via `par::set_force_sequential`.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nedb::data::morphology::edge_gt;
use nedb::data::{BinaryMask, SeShape, StructuringElement};
use nedb::nn::config::NedbConfig;
use nedb::nn::model::NedbModel;
use nedb::par;
use nedb::tensor::{Shape, Tape, Tensor};

fn tensor(shape: Shape, salt: usize) -> Tensor {
    Tensor::from_fn(shape, |n, c, h, w| (((n + 3 * c + 5 * h + 7 * w + salt) % 17) as f64 - 8.0) / 8.0).unwrap()
}

const PATHS: [(&str, bool); 2] = [("parallel", false), ("sequential", true)];

fn conv(c: &mut Criterion) {
    let x = tensor(Shape::new(4, 16, 32, 32), 1);
    let w = tensor(Shape::new(32, 16, 3, 3), 2);
    let mut g = c.benchmark_group("conv2d_fwd_bwd");
    for (name, seq) in PATHS {
        par::set_force_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let mut tape = Tape::new();
                let xv = tape.leaf(x.clone(), true);
                let wv = tape.leaf(w.clone(), true);
                let y = tape.conv2d(xv, wv, None, 1, 1).unwrap();
                let s = tape.sum(y).unwrap();
                black_box(tape.backward(s).unwrap());
            })
        });
    }
    par::set_force_sequential(false);
    g.finish();
}

fn forward(c: &mut Criterion) {
    let model = NedbModel::new(NedbConfig { input_size: 64, ..NedbConfig::desk() }).unwrap();
    let img = tensor(Shape::new(4, 3, 64, 64), 3);
    let mut g = c.benchmark_group("desk_forward");
    g.sample_size(10);
    for (name, seq) in PATHS {
        par::set_force_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| black_box(model.predict(&img).unwrap())));
    }
    par::set_force_sequential(false);
    g.finish();
}

fn morphology(c: &mut Criterion) {
    let mask = BinaryMask::from_fn(256, 256, |r, c| (r * 31 + c * 17) % 97 < 40);
    let se = StructuringElement::new(SeShape::Ellipse, 9).unwrap();
    let mut g = c.benchmark_group("edge_gt_256");
    for (name, seq) in PATHS {
        par::set_force_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| black_box(edge_gt(&mask, &se))));
    }
    par::set_force_sequential(false);
    g.finish();
}

criterion_group!(benches, conv, forward, morphology);
criterion_main!(benches);
