//! Fixtures shared by the criterion benchmarks in `benches/`.

use kgda_core::experiment::{prepare, Corpus, Prepared, Settings};
use kgda_core::numkit::Matrix;
use kgda_core::synth::{gen_synth, SynthSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::uniform(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// A synthetic two-domain corpus with its graph stage already run.
pub struct Fixture {
    pub corpus: Corpus,
    pub settings: Settings,
    pub prepared: Prepared,
}

pub fn fixture(docs_per_domain: usize) -> Fixture {
    let data = gen_synth(&SynthSpec {
        docs_per_domain,
        ..Default::default()
    })
    .expect("valid synth spec");
    let corpus = Corpus::from(data);
    let mut settings = Settings::default();
    settings.rgcn.epochs = 20;
    let prepared = prepare(&corpus, &settings, None).expect("graph stage");
    Fixture {
        corpus,
        settings,
        prepared,
    }
}
