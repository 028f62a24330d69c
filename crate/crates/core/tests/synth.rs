use kgda_core::corpus::{content_words, Document, Label};
use kgda_core::synth::{gen_synth, polarity_hub, SynthData, SynthSpec};

/// Net count of content words linked to the positive hub over the negative one.
fn hub_score(doc: &Document, data: &SynthData) -> f64 {
    let linked = |w: &str, label| {
        data.graph
            .named_triplets()
            .any(|(h, r, t)| h == w && r == "RelatedTo" && t == polarity_hub(label))
    };
    content_words(doc, &data.lexicon)
        .iter()
        .map(|w| f64::from(u8::from(linked(w, Label::Positive))) - f64::from(u8::from(linked(w, Label::Negative))))
        .sum()
}

/// Class centroids of the hub score on source train, applied to target test.
fn centroid_accuracy(density: f64) -> f64 {
    let data = gen_synth(&SynthSpec {
        bridge_density: density,
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    let src = data.domain("dom0").unwrap();
    let tgt = data.domain("dom1").unwrap();
    let centroid = |label| {
        let s: Vec<f64> = src
            .train
            .iter()
            .filter(|d| d.label == Some(label))
            .map(|d| hub_score(d, &data))
            .collect();
        s.iter().sum::<f64>() / s.len() as f64
    };
    let (pos, neg) = (centroid(Label::Positive), centroid(Label::Negative));
    let correct = tgt
        .test
        .iter()
        .filter(|d| {
            let s = hub_score(d, &data);
            let guess = if (s - pos).abs() < (s - neg).abs() {
                Label::Positive
            } else {
                Label::Negative
            };
            d.label == Some(guess)
        })
        .count();
    correct as f64 / tgt.test.len() as f64
}

#[test]
fn hub_terms_transfer_at_full_density() {
    let acc = centroid_accuracy(1.0);
    assert!(acc > 0.8, "{acc}");
}

#[test]
fn hub_terms_carry_nothing_at_zero_density() {
    let acc = centroid_accuracy(0.0);
    assert!((acc - 0.5).abs() < 1e-12, "{acc}");
}
