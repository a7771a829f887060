//! 2-D transform throughput. With the default `parallel` feature the row
//! passes run on the global rayon pool and, for comparison, on a one-thread
//! pool; build with `--no-default-features` to time the sequential path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use spsm::operators::{Fft2, Image};

fn image(n: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    Image::new(
        n,
        (0..n * n)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect(),
    )
    .unwrap()
}

fn dft2(c: &mut Criterion) {
    let mut group = c.benchmark_group("dft2");
    for n in [64, 128, 256, 512] {
        let fft = Fft2::new(n);
        let x = image(n);
        let label = if cfg!(feature = "parallel") {
            "rayon"
        } else {
            "sequential"
        };
        group.bench_with_input(BenchmarkId::new(label, n), &x, |b, x| {
            b.iter(|| fft.dft2(x))
        });

        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .unwrap();
            group.bench_with_input(BenchmarkId::new("rayon-1-thread", n), &x, |b, x| {
                pool.install(|| b.iter(|| fft.dft2(x)))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, dft2);
criterion_main!(benches);
