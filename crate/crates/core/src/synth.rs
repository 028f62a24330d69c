//! Synthetic multi-domain sentiment corpora with a controllable knowledge
//! bridge, and the two-block relational graph used to test link prediction.
//!
//! Every domain has its own sentiment words (`{domain}pos{k}`,
//! `{domain}neg{k}`) and topic words (`{domain}top{k}`). All domains share
//! neutral words (`gen{k}`), a small pool of sentiment words (`gpos{k}`,
//! `gneg{k}`) and filler stopwords. The knowledge graph links a
//! `bridge_density` fraction of each domain's sentiment words to the shared
//! polarity hubs `hubpos` / `hubneg`; topic and neutral words hang off
//! hubs of their own, so with density 0 no path connects the sentiment
//! vocabularies of two domains.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_documents, Document, Label, LexiconTagger, Pos};
use crate::error::{Error, Result};
use crate::kgraph::MultiRelGraph;

pub const POSITIVE_HUB: &str = "hubpos";
pub const NEGATIVE_HUB: &str = "hubneg";
const STOPWORDS: [&str; 6] = ["the", "a", "it", "was", "and", "this"];
const GENERAL_HUBS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub domains: usize,
    /// Must be even; half of each domain is positive.
    pub docs_per_domain: usize,
    pub general_vocab: usize,
    /// Sentiment words per polarity shared by all domains.
    pub shared_sentiment_vocab: usize,
    /// Sentiment words per polarity private to each domain.
    pub specific_sentiment_vocab: usize,
    pub topic_vocab: usize,
    pub doc_length: usize,
    /// Fraction of each domain's sentiment words linked to a polarity hub.
    pub bridge_density: f64,
    /// Probability that a token is a sentiment word of the document's label.
    pub signal: f64,
    /// Probability that a sentiment token comes from the shared pool.
    pub shared_fraction: f64,
    /// Probability that a token is a topic word of the document's domain.
    pub topic_rate: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            domains: 2,
            docs_per_domain: 400,
            general_vocab: 60,
            shared_sentiment_vocab: 4,
            specific_sentiment_vocab: 20,
            topic_vocab: 10,
            doc_length: 24,
            bridge_density: 1.0,
            signal: 0.25,
            shared_fraction: 0.03,
            topic_rate: 0.15,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("domains", self.domains),
            ("docs_per_domain", self.docs_per_domain),
            ("general_vocab", self.general_vocab),
            ("shared_sentiment_vocab", self.shared_sentiment_vocab),
            ("specific_sentiment_vocab", self.specific_sentiment_vocab),
            ("topic_vocab", self.topic_vocab),
            ("doc_length", self.doc_length),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be at least 1")));
        }
        if self.docs_per_domain % 2 != 0 {
            return Err(Error::config("docs_per_domain must be even for a 50/50 label split"));
        }
        for (name, p) in [
            ("bridge_density", self.bridge_density),
            ("signal", self.signal),
            ("shared_fraction", self.shared_fraction),
            ("topic_rate", self.topic_rate),
            ("train_fraction", self.train_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name}={p} outside [0, 1]")));
            }
        }
        if self.signal + self.topic_rate > 1.0 {
            return Err(Error::config("signal + topic_rate exceeds 1"));
        }
        Ok(())
    }
}

pub fn domain_name(k: usize) -> String {
    format!("dom{k}")
}

pub fn sentiment_word(domain: &str, label: Label, k: usize) -> String {
    format!("{domain}{label}{k}")
}

pub fn shared_sentiment_word(label: Label, k: usize) -> String {
    format!("g{label}{k}")
}

fn topic_word(domain: &str, k: usize) -> String {
    format!("{domain}top{k}")
}

fn general_word(k: usize) -> String {
    format!("gen{k}")
}

pub fn polarity_hub(label: Label) -> &'static str {
    match label {
        Label::Positive => POSITIVE_HUB,
        Label::Negative => NEGATIVE_HUB,
    }
}

#[derive(Clone, Debug)]
pub struct DomainSplit {
    pub name: String,
    pub train: Vec<Document>,
    pub test: Vec<Document>,
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub domains: Vec<DomainSplit>,
    pub graph: MultiRelGraph,
    pub lexicon: LexiconTagger,
}

/// Paths written by [`SynthData::write`].
#[derive(Clone, Debug)]
pub struct SynthFiles {
    pub triplets: PathBuf,
    pub lexicon: PathBuf,
    /// `(domain, train file, test file)`.
    pub splits: Vec<(String, PathBuf, PathBuf)>,
}

pub fn train_file_name(domain: &str) -> String {
    format!("{domain}.train.tsv")
}

pub fn test_file_name(domain: &str) -> String {
    format!("{domain}.test.tsv")
}

impl SynthData {
    pub fn domain(&self, name: &str) -> Result<&DomainSplit> {
        self.domains
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::config(format!("no synthetic domain {name:?}")))
    }

    /// Writes `kg.tsv`, `lexicon.tsv`, per-domain train/test files and the
/// split manifest.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<SynthFiles> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let triplets = dir.join("kg.tsv");
        self.graph.write_triplets(&triplets)?;
        let lexicon = dir.join("lexicon.tsv");
        let mut text = String::new();
        for (w, p) in self.lexicon.sorted_entries() {
            text.push_str(&format!("{w}\t{}\n", p.as_str()));
        }
        fs::write(&lexicon, text).map_err(|e| Error::io(&lexicon, e))?;
        let mut splits = Vec::new();
        for d in &self.domains {
            let train = dir.join(train_file_name(&d.name));
            let test = dir.join(test_file_name(&d.name));
            write_documents(&train, &d.train)?;
            write_documents(&test, &d.test)?;
            splits.push((d.name.clone(), train, test));
        }
        let names: Vec<String> = self
            .domains
            .iter()
            .flat_map(|d| [train_file_name(&d.name), test_file_name(&d.name)])
            .collect();
        crate::experiment::write_manifest(dir, &names)?;
        Ok(SynthFiles {
            triplets,
            lexicon,
            splits,
        })
    }
}

fn pick<'a, R: Rng + ?Sized>(pool: &'a [String], rng: &mut R) -> &'a str {
    &pool[rng.gen_range(0..pool.len())]
}

pub fn gen_synth(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let general: Vec<String> = (0..spec.general_vocab).map(general_word).collect();
    let shared = |label| -> Vec<String> {
        (0..spec.shared_sentiment_vocab)
            .map(|k| shared_sentiment_word(label, k))
            .collect()
    };
    let shared_pos = shared(Label::Positive);
    let shared_neg = shared(Label::Negative);
    let stop: Vec<String> = STOPWORDS.iter().map(|s| s.to_string()).collect();

    let mut lexicon = LexiconTagger::default();
    for w in &stop {
        lexicon.insert(w, Pos::Other);
    }
    for w in general.iter().chain(&shared_pos).chain(&shared_neg) {
        lexicon.insert(w, Pos::Adj);
    }

    let mut graph = MultiRelGraph::new();
    for (k, w) in general.iter().enumerate() {
        graph.add_triplet(w, "RelatedTo", &format!("genhub{}", k % GENERAL_HUBS));
    }

    let mut domains = Vec::with_capacity(spec.domains);
    for d in 0..spec.domains {
        let name = domain_name(d);
        let words = |label| -> Vec<String> {
            (0..spec.specific_sentiment_vocab)
                .map(|k| sentiment_word(&name, label, k))
                .collect()
        };
        let pos = words(Label::Positive);
        let neg = words(Label::Negative);
        let topics: Vec<String> = (0..spec.topic_vocab).map(|k| topic_word(&name, k)).collect();
        for w in pos.iter().chain(&neg) {
            lexicon.insert(w, Pos::Adj);
        }
        for w in &topics {
            lexicon.insert(w, Pos::Noun);
            graph.add_triplet(w, "IsA", &format!("{name}topic"));
        }
        let linked = (spec.bridge_density * spec.specific_sentiment_vocab as f64).round() as usize;
        for (label, pool) in [(Label::Positive, &pos), (Label::Negative, &neg)] {
            let mut order: Vec<&String> = pool.iter().collect();
            order.shuffle(&mut rng);
            for w in order.into_iter().take(linked) {
                graph.add_triplet(w, "RelatedTo", polarity_hub(label));
            }
        }

        let half = spec.docs_per_domain / 2;
        let mut labels: Vec<Label> = [Label::Positive, Label::Negative]
            .iter()
            .flat_map(|&l| std::iter::repeat(l).take(half))
            .collect();
        labels.shuffle(&mut rng);
        let mut docs = Vec::with_capacity(spec.docs_per_domain);
        for (i, &label) in labels.iter().enumerate() {
            let (own, own_shared) = match label {
                Label::Positive => (&pos, &shared_pos),
                Label::Negative => (&neg, &shared_neg),
            };
            let tokens: Vec<String> = (0..spec.doc_length)
                .map(|_| {
                    let u: f64 = rng.gen();
                    let w = if u < spec.signal {
                        if rng.gen::<f64>() < spec.shared_fraction {
                            pick(own_shared, &mut rng)
                        } else {
                            pick(own, &mut rng)
                        }
                    } else if u < spec.signal + spec.topic_rate {
                        pick(&topics, &mut rng)
                    } else if rng.gen::<f64>() < 0.3 {
                        pick(&stop, &mut rng)
                    } else {
                        pick(&general, &mut rng)
                    };
                    w.to_string()
                })
                .collect();
            docs.push(
                Document::from_text(format!("{name}-{i:05}"), name.clone(), tokens.join(" "))
                    .with_label(label),
            );
        }
        // Stratified split keeps both halves balanced.
        let mut train = Vec::new();
        let mut test = Vec::new();
        for label in [Label::Positive, Label::Negative] {
            let of_label: Vec<&Document> = docs.iter().filter(|d| d.label == Some(label)).collect();
            let cut = (spec.train_fraction * of_label.len() as f64).round() as usize;
            for (k, doc) in of_label.into_iter().enumerate() {
                if k < cut {
                    train.push(doc.clone());
                } else {
                    test.push(doc.clone());
                }
            }
        }
        train.sort_by(|a, b| a.id.cmp(&b.id));
        test.sort_by(|a, b| a.id.cmp(&b.id));
        domains.push(DomainSplit { name, train, test });
    }
    Ok(SynthData {
        domains,
        graph,
        lexicon,
    })
}

/// Concepts connected to any of `start` in the graph, ignoring direction.
pub fn reachable(graph: &MultiRelGraph, start: &BTreeSet<String>) -> BTreeSet<String> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut frontier: Vec<_> = start.iter().filter_map(|w| graph.node_id(w)).collect();
    while let Some(n) = frontier.pop() {
        if seen.insert(graph.node_name(n).to_string()) {
            frontier.extend(graph.undirected_neighbors(n));
        }
    }
    seen
}

/// Two communities of `block_size` nodes. An ordered pair of distinct nodes
/// in the same block is linked under `within` with probability `p_within`;
/// a pair spanning the blocks is linked under `across` with probability
/// `p_across`. Only block membership explains the edges.
pub fn two_block_graph(block_size: usize, p_within: f64, p_across: f64, seed: u64) -> Result<MultiRelGraph> {
    if block_size < 2 {
        return Err(Error::config("blocks need at least two nodes"));
    }
    for p in [p_within, p_across] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!("edge probability {p} outside [0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = MultiRelGraph::new();
    g.add_relation("within");
    g.add_relation("across");
    let names: Vec<String> = ["a", "b"]
        .iter()
        .flat_map(|b| (0..block_size).map(move |i| format!("{b}{i}")))
        .collect();
    for n in &names {
        g.add_node(n);
    }
    for (i, h) in names.iter().enumerate() {
        for (j, t) in names.iter().enumerate() {
            if i == j {
                continue;
            }
            let same = (i < block_size) == (j < block_size);
            let (rel, p) = if same { ("within", p_within) } else { ("across", p_across) };
            if rng.gen::<f64>() < p {
                g.add_triplet(h, rel, t);
            }
        }
    }
    Ok(g)
}
