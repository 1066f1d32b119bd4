use std::hint::black_box;

use aegan::eval::mode_coverage_with;
use aegan::models::{build_network, ImageShape, NetworkRole, NetworkSpec, SampleBatch, SampleShape, ValueRange};
use aegan::par::Exec;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn random(rows: usize, cols: usize, half: f64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-half..half))
}

fn conv(c: &mut Criterion) {
    let image = ImageShape { height: 32, width: 32, channels: 3 };
    let d_x = build_network(&NetworkSpec::convolutional(NetworkRole::SampleDiscriminator, vec![16, 32, 1], image), 0).unwrap();
    let x = random(16, image.len(), 1.0);
    let mut group = c.benchmark_group("conv_discriminator_16x32x32");
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::new("forward", name), |b| b.iter(|| d_x.forward(black_box(&x), exec).unwrap()));
        let (out, tape) = d_x.forward_taped(&x, exec).unwrap();
        let up = Array2::ones(out.dim());
        group.bench_function(BenchmarkId::new("backward", name), |b| b.iter(|| d_x.backward(black_box(&tape), &up, exec)));
    }
    group.finish();
}

fn coverage(c: &mut Criterion) {
    let samples = SampleBatch::new(random(100_000, 2, 2.5), SampleShape::Point { dim: 2 }, ValueRange::symmetric(3.0)).unwrap();
    let centers: Vec<[f64; 2]> = (0..8)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / 8.0;
            [2.0 * a.cos(), 2.0 * a.sin()]
        })
        .collect();
    let mut group = c.benchmark_group("mode_coverage_100k");
    for (name, exec) in POLICIES {
        group.bench_function(name, |b| b.iter(|| mode_coverage_with(black_box(&samples), &centers, 0.06, 25, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, conv, coverage);
criterion_main!(benches);
