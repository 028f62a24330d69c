use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use kgda_bench::{fixture, random_matrix};
use kgda_core::rgcn::{encode_graph, link_loss_tape, sample_negatives, TripletSample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matmul(c: &mut Criterion) {
    let a = random_matrix(32, 1000, 1);
    let b = random_matrix(1000, 100, 2);
    c.bench_function("matmul 32x1000 * 1000x100", |bench| {
        bench.iter(|| black_box(&a).matmul(black_box(&b)).unwrap())
    });
}

fn rgcn(c: &mut Criterion) {
    let f = fixture(100);
    let g = &f.prepared.g_prime;
    let params = &f.prepared.autoencoder.params;
    c.bench_function("rgcn encode G'", |bench| bench.iter(|| encode_graph(black_box(g), params).unwrap()));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut samples: Vec<TripletSample> = g.triplets().iter().copied().map(TripletSample::positive).collect();
    samples.extend(sample_negatives(g.triplets(), g, &mut rng).unwrap());
    c.bench_function("rgcn link loss forward+backward", |bench| {
        bench.iter(|| {
            let (tape, loss) = link_loss_tape(g, params, &samples).unwrap();
            tape.backward(loss, params.store()).unwrap()
        })
    });
}

criterion_group!(benches, matmul, rgcn);
criterion_main!(benches);
