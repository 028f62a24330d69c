use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use kgda_bench::fixture;
use kgda_core::adversary::{self, Examples, Monitor, Variant, VariantConfig};
use kgda_core::corpus::{BowVocab, Document};
use kgda_core::docfeat::extract_all;

fn extraction(c: &mut Criterion) {
    let f = fixture(100);
    let docs = f.corpus.all_documents();
    let p = &f.prepared;
    let mut group = c.benchmark_group("features");
    group.sample_size(10);
    group.bench_function("extract_all 200 documents", |bench| {
        bench.iter(|| {
            extract_all(
                black_box(&docs),
                &p.g_prime,
                &p.autoencoder.params,
                &f.corpus.tagger,
                None,
                f.settings.scope,
            )
            .unwrap()
        })
    });
    group.finish();
}

fn training(c: &mut Criterion) {
    let f = fixture(100);
    let src = f.corpus.domain("dom0").unwrap();
    let tgt = f.corpus.domain("dom1").unwrap();
    let fit: Vec<Document> = src.train.iter().chain(&tgt.train).cloned().collect();
    let vocab = BowVocab::fit(&fit, 5000).unwrap();
    let feats = Some(&f.prepared.features);
    let s = Examples::build(&src.train, &vocab, feats).unwrap();
    let t = Examples::build(&tgt.train, &vocab, feats).unwrap();
    let mut group = c.benchmark_group("adversary");
    group.sample_size(10);
    for variant in [Variant::DannPlus, Variant::KingdomFull] {
        let cfg = VariantConfig {
            variant,
            epochs: 1,
            ..Default::default()
        };
        group.bench_function(format!("{variant} one epoch"), |bench| {
            bench.iter(|| adversary::train(black_box(&s), &t, &cfg, Monitor::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, extraction, training);
criterion_main!(benches);
