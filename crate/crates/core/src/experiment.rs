//! Experiment orchestration: graph pretraining once per plan, then one
//! adversarial training run per (source, target, variant, seed, bow_dim).
//!
//! A data directory holds `{domain}.train.tsv` / `{domain}.test.tsv` splits
//! and a `manifest.tsv` of their SHA-256 digests, which is verified before
//! anything is trained.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::adversary::{self, Examples, LambdaSchedule, Monitor, OptimizerKind, RunMetrics, Variant, VariantConfig};
use crate::checkpoint::write_atomic;
use crate::corpus::{content_words, ingest, BowVocab, Document, LexiconTagger};
use crate::docfeat::{extract_all, FeatureTable, PassScope};
use crate::error::{Error, Result};
use crate::kgraph::{aggregate_subgraph, MultiRelGraph, SeedSet};
use crate::kvconfig::KvConfig;
use crate::rgcn::{train_autoencoder, RgcnConfig, TrainedAutoencoder};
use crate::synth::{test_file_name, train_file_name, DomainSplit, SynthData};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_TABLE: &str = "results.txt";
pub const RESULTS_HEADER: &str =
    "source,target,variant,bow_dim,seed,target_accuracy,source_accuracy,epochs,wall_seconds";

fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Records `name<TAB>sha256` for each file (given relative to `dir`).
pub fn write_manifest(dir: &Path, files: &[String]) -> Result<PathBuf> {
    let mut out = String::new();
    for f in files {
        writeln!(out, "{f}\t{}", digest_file(&dir.join(f))?).expect("write to string");
    }
    let path = dir.join(MANIFEST_FILE);
    write_atomic(&path, out.as_bytes())?;
    Ok(path)
}

/// Checks that every file in `wanted` is listed in the manifest of `dir`
/// with a matching digest.
pub fn verify_manifest(dir: &Path, wanted: &[String]) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut listed = BTreeMap::new();
    for (n, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (f, d) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(&path, n + 1, "expected file<TAB>sha256"))?;
        listed.insert(f.to_string(), d.trim().to_string());
    }
    for f in wanted {
        let expected = listed
            .get(f)
            .ok_or_else(|| Error::config(format!("{f} is not listed in {}", path.display())))?;
        if &digest_file(&dir.join(f))? != expected {
            return Err(Error::config(format!("{f} does not match its manifest digest")));
        }
    }
    Ok(())
}

/// Hyperparameters shared by every run of a plan.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub master_seed: u64,
    pub workers: usize,
    pub scope: PassScope,
    pub rgcn: RgcnConfig,
    /// Variant and seed are overwritten per run.
    pub adversary: VariantConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            master_seed: 0,
            workers: 1,
            scope: PassScope::default(),
            rgcn: RgcnConfig::default(),
            adversary: VariantConfig::default(),
        }
    }
}

impl Settings {
    pub const KEYS: &'static [&'static str] = &[
        "master_seed",
        "workers",
        "scope",
        "rgcn.epochs",
        "rgcn.batch_size",
        "rgcn.lr",
        "rgcn.patience",
        "rgcn.min_delta",
        "rgcn.input_dim",
        "rgcn.hidden_dim",
        "rgcn.output_dim",
        "rgcn.freeze_node_features",
        "adv.epochs",
        "adv.batch_size",
        "adv.lr",
        "adv.hidden",
        "adv.gamma",
        "adv.dropout",
        "adv.optimizer",
        "adv.momentum",
        "adv.schedule",
        "adv.fixed_lambda",
        "adv.anneal_lr",
    ];

    /// Applies whichever of [`Settings::KEYS`] are present.
    pub fn apply(&mut self, cfg: &KvConfig) -> Result<()> {
        cfg.set("master_seed", &mut self.master_seed)?;
        cfg.set("workers", &mut self.workers)?;
        cfg.set("scope", &mut self.scope)?;
        let r = &mut self.rgcn;
        cfg.set("rgcn.epochs", &mut r.epochs)?;
        cfg.set("rgcn.batch_size", &mut r.batch_size)?;
        cfg.set("rgcn.lr", &mut r.lr)?;
        cfg.set("rgcn.patience", &mut r.patience)?;
        cfg.set("rgcn.min_delta", &mut r.min_delta)?;
        cfg.set("rgcn.input_dim", &mut r.dims.input)?;
        cfg.set("rgcn.hidden_dim", &mut r.dims.hidden)?;
        cfg.set("rgcn.output_dim", &mut r.dims.output)?;
        cfg.set("rgcn.freeze_node_features", &mut r.freeze_node_features)?;
        let a = &mut self.adversary;
        cfg.set("adv.epochs", &mut a.epochs)?;
        cfg.set("adv.batch_size", &mut a.batch_size)?;
        cfg.set("adv.lr", &mut a.lr)?;
        cfg.set("adv.hidden", &mut a.hidden)?;
        cfg.set("adv.gamma", &mut a.gamma)?;
        cfg.set("adv.dropout", &mut a.dropout)?;
        cfg.set("adv.anneal_lr", &mut a.anneal_lr)?;
        let mut momentum = match a.optimizer {
            OptimizerKind::Sgd { momentum } => momentum,
            OptimizerKind::Adam => 0.9,
        };
        cfg.set("adv.momentum", &mut momentum)?;
        let opt = cfg.get("adv.optimizer").map(str::to_string).unwrap_or_else(|| match a.optimizer {
            OptimizerKind::Adam => "adam".into(),
            OptimizerKind::Sgd { .. } => "sgd".into(),
        });
        a.optimizer = match opt.as_str() {
            "adam" => OptimizerKind::Adam,
            "sgd" => OptimizerKind::Sgd { momentum },
            other => return Err(Error::config(format!("unknown optimizer {other:?}"))),
        };
        if let Some(s) = cfg.get("adv.schedule") {
            a.schedule = match s {
                "monotone" => LambdaSchedule::Monotone,
                "per_epoch" => LambdaSchedule::PerEpoch,
                other => return Err(Error::config(format!("unknown lambda schedule {other:?}"))),
            };
        }
        if let Some(v) = cfg.get("adv.fixed_lambda") {
            a.fixed_lambda = if v == "none" {
                None
            } else {
                Some(v.parse().map_err(|_| Error::config(format!("bad adv.fixed_lambda {v:?}")))?)
            };
        }
        Ok(())
    }

    /// Seed of one run, derived from the master seed and the run's identity.
    pub fn run_seed(&self, spec: &RunSpec) -> u64 {
        let digest = Sha256::digest(format!("{}:{}", self.master_seed, spec.slug()).as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

/// Documents, knowledge graph and tagger for a set of domains.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub domains: BTreeMap<String, DomainSplit>,
    pub graph: MultiRelGraph,
    pub tagger: LexiconTagger,
}

impl From<SynthData> for Corpus {
    fn from(d: SynthData) -> Self {
        Corpus {
            domains: d.domains.into_iter().map(|s| (s.name.clone(), s)).collect(),
            graph: d.graph,
            tagger: d.lexicon,
        }
    }
}

fn split_files(domains: &BTreeSet<String>) -> Vec<String> {
    domains
        .iter()
        .flat_map(|d| [train_file_name(d), test_file_name(d)])
        .collect()
}

impl Corpus {
    /// Loads the named domains after checking the split manifest.
    pub fn load(data_dir: &Path, domains: &BTreeSet<String>, triplets: &Path, lexicon: &Path) -> Result<Self> {
        let files = split_files(domains);
        verify_manifest(data_dir, &files)?;
        let mut out = BTreeMap::new();
        for name in domains {
            let train = ingest(data_dir.join(train_file_name(name)))?;
            let test = ingest(data_dir.join(test_file_name(name)))?;
            let ids: BTreeSet<&str> = train.iter().map(|d| d.id.as_str()).collect();
            if let Some(d) = test.iter().find(|d| ids.contains(d.id.as_str())) {
                return Err(Error::config(format!(
                    "document {:?} appears in both splits of {name}",
                    d.id
                )));
            }
            out.insert(
                name.clone(),
                DomainSplit {
                    name: name.clone(),
                    train,
                    test,
                },
            );
        }
        Ok(Corpus {
            domains: out,
            graph: MultiRelGraph::load_triplets(triplets)?,
            tagger: LexiconTagger::from_file(lexicon)?,
        })
    }

    pub fn domain(&self, name: &str) -> Result<&DomainSplit> {
        self.domains
            .get(name)
            .ok_or_else(|| Error::config(format!("unknown domain {name:?}")))
    }

    pub fn all_documents(&self) -> Vec<Document> {
        self.domains
            .values()
            .flat_map(|d| d.train.iter().chain(&d.test).cloned())
            .collect()
    }
}

/// `G'`: triplets touching a content word of any training document.
pub fn build_g_prime(graph: &MultiRelGraph, docs: &[Document], tagger: &LexiconTagger) -> MultiRelGraph {
    let mut seeds = SeedSet::default();
    for d in docs {
        seeds.extend(&SeedSet::new(content_words(d, tagger)));
    }
    aggregate_subgraph(graph, &seeds)
}

/// Output of the graph stage, shared by every run.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub g_prime: MultiRelGraph,
    pub autoencoder: TrainedAutoencoder,
    pub features: FeatureTable,
}

pub fn prepare(corpus: &Corpus, settings: &Settings, cache: Option<&Path>) -> Result<Prepared> {
    let train: Vec<Document> = corpus.domains.values().flat_map(|d| d.train.iter().cloned()).collect();
    let g_prime = build_g_prime(&corpus.graph, &train, &corpus.tagger);
    if g_prime.is_empty() {
        return Err(Error::config("no training document touches the knowledge graph"));
    }
    log::info!(
        "G' has {} nodes, {} triplets, {} relations",
        g_prime.node_count(),
        g_prime.triplet_count(),
        g_prime.relation_count()
    );
    let cfg = RgcnConfig {
        seed: settings.master_seed,
        ..settings.rgcn.clone()
    };
    let autoencoder = train_autoencoder(&g_prime, &cfg)?;
    let features = extract_all(
        &corpus.all_documents(),
        &g_prime,
        &autoencoder.params,
        &corpus.tagger,
        cache,
        settings.scope,
    )?;
    Ok(Prepared {
        g_prime,
        autoencoder,
        features,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RunSpec {
    pub source: String,
    pub target: String,
    pub variant: Variant,
    pub seed: u64,
    pub bow_dim: usize,
}

impl RunSpec {
    pub fn slug(&self) -> String {
        format!("{}_{}_{}_{}_{}", self.source, self.target, self.variant, self.bow_dim, self.seed)
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub spec: RunSpec,
    pub target_accuracy: f64,
    pub source_accuracy: f64,
    pub epochs: usize,
    pub wall_seconds: f64,
    pub metrics: RunMetrics,
}

/// Trains on the source training split plus the unlabelled target
/// training split, and scores both test splits.
pub fn run_one(corpus: &Corpus, prepared: &Prepared, spec: &RunSpec, settings: &Settings) -> Result<RunResult> {
    if spec.source == spec.target {
        return Err(Error::config(format!("source and target are both {:?}", spec.source)));
    }
    let start = Instant::now();
    let src = corpus.domain(&spec.source)?;
    let tgt = corpus.domain(&spec.target)?;
    let fit_docs: Vec<Document> = src.train.iter().chain(&tgt.train).cloned().collect();
    let vocab = BowVocab::fit(&fit_docs, spec.bow_dim)?;
    let graph = spec.variant.uses_graph().then_some(&prepared.features);
    let src_train = Examples::build(&src.train, &vocab, graph)?;
    let tgt_train = Examples::build(&tgt.train, &vocab, graph)?;
    let src_test = Examples::build(&src.test, &vocab, graph)?;
    let tgt_test = Examples::build(&tgt.test, &vocab, graph)?;
    let cfg = VariantConfig {
        variant: spec.variant,
        seed: settings.run_seed(spec),
        ..settings.adversary.clone()
    };
    let monitor = Monitor {
        source_heldout: Some(&src_test),
        target_test: Some(&tgt_test),
    };
    let trained = adversary::train(&src_train, &tgt_train, &cfg, monitor)?;
    Ok(RunResult {
        spec: spec.clone(),
        target_accuracy: adversary::evaluate(&trained.params, &tgt_test)?,
        source_accuracy: adversary::evaluate(&trained.params, &src_test)?,
        epochs: trained.metrics.epochs.len(),
        wall_seconds: start.elapsed().as_secs_f64(),
        metrics: trained.metrics,
    })
}

/// Runs in parallel on `workers` threads; results keep the order of
/// `specs`.
pub fn run_all(corpus: &Corpus, prepared: &Prepared, specs: &[RunSpec], settings: &Settings) -> Result<Vec<RunResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| specs.par_iter().map(|s| run_one(corpus, prepared, s, settings)).collect())
}

/// One `run = ...` line of a plan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanRun {
    pub source: String,
    pub target: String,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub bow_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    pub triplets: PathBuf,
    pub lexicon: PathBuf,
    pub runs: Vec<PlanRun>,
    pub settings: Settings,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.parse().map_err(|_| Error::config(format!("bad seed range {part:?}")))?;
                let b: u64 = b.parse().map_err(|_| Error::config(format!("bad seed range {part:?}")))?;
                out.extend(a..b);
            }
            None => out.push(part.parse().map_err(|_| Error::config(format!("bad seed {part:?}")))?),
        }
    }
    if out.is_empty() {
        return Err(Error::config("a run needs at least one seed"));
    }
    Ok(out)
}

impl PlanRun {
    /// `source target variant seeds bow_dim`, where seeds is a comma list
    /// of integers or half-open ranges `a..b`.
    pub fn parse(s: &str) -> Result<PlanRun> {
        let f: Vec<&str> = s.split_whitespace().collect();
        let [source, target, variant, seeds, bow_dim] = f[..] else {
            return Err(Error::config(format!(
                "run needs `source target variant seeds bow_dim`, got {s:?}"
            )));
        };
        if source == target {
            return Err(Error::config(format!("run {s:?} has the same source and target")));
        }
        Ok(PlanRun {
            source: source.into(),
            target: target.into(),
            variant: variant.parse()?,
            seeds: parse_seeds(seeds)?,
            bow_dim: bow_dim
                .parse()
                .map_err(|_| Error::config(format!("bad bow_dim {bow_dim:?}")))?,
        })
    }
}

impl ExperimentPlan {
    pub fn new(data_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        let data_dir = data_dir.into();
        ExperimentPlan {
            triplets: data_dir.join("kg.tsv"),
            lexicon: data_dir.join("lexicon.tsv"),
            data_dir,
            output_dir: output_dir.into(),
            runs: Vec::new(),
            settings: Settings::default(),
        }
    }

    /// Relative paths are resolved against `base`.
    pub fn from_config(cfg: &KvConfig, base: &Path) -> Result<Self> {
        let mut keys: Vec<&str> = Settings::KEYS.to_vec();
        keys.extend(["data_dir", "output_dir", "triplets", "lexicon", "run"]);
        cfg.reject_unknown(&keys)?;
        let path = |k: &str| cfg.get(k).map(|v| base.join(v));
        let data_dir = path("data_dir").ok_or_else(|| Error::config("plan needs data_dir"))?;
        let output_dir = path("output_dir").ok_or_else(|| Error::config("plan needs output_dir"))?;
        let mut plan = ExperimentPlan::new(data_dir, output_dir);
        if let Some(p) = path("triplets") {
            plan.triplets = p;
        }
        if let Some(p) = path("lexicon") {
            plan.lexicon = p;
        }
        plan.settings.apply(cfg)?;
        plan.runs = cfg.all("run").into_iter().map(PlanRun::parse).collect::<Result<_>>()?;
        if plan.runs.is_empty() {
            return Err(Error::config("plan has no run lines"));
        }
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_config(&KvConfig::load(path)?, base)
    }

    pub fn specs(&self) -> Vec<RunSpec> {
        self.runs
            .iter()
            .flat_map(|r| {
                r.seeds.iter().map(|&seed| RunSpec {
                    source: r.source.clone(),
                    target: r.target.clone(),
                    variant: r.variant,
                    seed,
                    bow_dim: r.bow_dim,
                })
            })
            .collect()
    }

    pub fn domains(&self) -> BTreeSet<String> {
        self.runs
            .iter()
            .flat_map(|r| [r.source.clone(), r.target.clone()])
            .collect()
    }

    /// Every input path that must exist before training starts.
    pub fn inputs(&self) -> Vec<PathBuf> {
        let mut out = vec![self.triplets.clone(), self.lexicon.clone(), self.data_dir.join(MANIFEST_FILE)];
        out.extend(split_files(&self.domains()).into_iter().map(|f| self.data_dir.join(f)));
        out
    }
}

#[derive(Clone, Debug)]
pub struct PlanReport {
    pub results: Vec<RunResult>,
    pub csv: PathBuf,
    pub table: PathBuf,
}

/// Mean accuracies per variant, in first-seen order:
/// `(variant, target mean, source mean, runs)`.
pub fn variant_means(results: &[RunResult]) -> Vec<(Variant, f64, f64, usize)> {
    let mut order: Vec<Variant> = Vec::new();
    for r in results {
        if !order.contains(&r.spec.variant) {
            order.push(r.spec.variant);
        }
    }
    order
        .into_iter()
        .map(|v| {
            let rs: Vec<&RunResult> = results.iter().filter(|r| r.spec.variant == v).collect();
            let n = rs.len() as f64;
            let t = rs.iter().map(|r| r.target_accuracy).sum::<f64>() / n;
            let s = rs.iter().map(|r| r.source_accuracy).sum::<f64>() / n;
            (v, t, s, rs.len())
        })
        .collect()
}

pub fn results_csv(results: &[RunResult]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in results {
        let s = &r.spec;
        writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6},{},{:.3}",
            s.source, s.target, s.variant, s.bow_dim, s.seed, r.target_accuracy, r.source_accuracy, r.epochs, r.wall_seconds
        )
        .expect("write to string");
    }
    for (v, t, s, _) in variant_means(results) {
        writeln!(out, "mean,,{v},,,{t:.6},{s:.6},,").expect("write to string");
    }
    out
}

/// Fixed-width table, accuracies in percent.
pub fn results_table(results: &[RunResult]) -> String {
    let mut rows: Vec<[String; 7]> = vec![[
        "source".into(),
        "target".into(),
        "variant".into(),
        "bow_dim".into(),
        "seed".into(),
        "target_acc".into(),
        "source_acc".into(),
    ]];
    for r in results {
        let s = &r.spec;
        rows.push([
            s.source.clone(),
            s.target.clone(),
            s.variant.to_string(),
            s.bow_dim.to_string(),
            s.seed.to_string(),
            format!("{:.1}", 100.0 * r.target_accuracy),
            format!("{:.1}", 100.0 * r.source_accuracy),
        ]);
    }
    for (v, t, s, n) in variant_means(results) {
        rows.push([
            "mean".into(),
            format!("({n} runs)"),
            v.to_string(),
            String::new(),
            String::new(),
            format!("{:.1}", 100.0 * t),
            format!("{:.1}", 100.0 * s),
        ]);
    }
    let widths: Vec<usize> = (0..7).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, &w))| if i < 3 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).expect("write to string");
    }
    out
}

/// Runs a whole plan. Missing inputs fail before any training.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PlanReport> {
    for p in plan.inputs() {
        if !p.is_file() {
            return Err(Error::config(format!("missing input file {}", p.display())));
        }
    }
    let corpus = Corpus::load(&plan.data_dir, &plan.domains(), &plan.triplets, &plan.lexicon)?;
    let out = &plan.output_dir;
    let metrics_dir = out.join("metrics");
    fs::create_dir_all(&metrics_dir).map_err(|e| Error::io(&metrics_dir, e))?;
    let prepared = prepare(&corpus, &plan.settings, Some(&out.join("features.cache")))?;
    write_atomic(&out.join("g_prime.tsv"), prepared.g_prime.to_triplet_text().as_bytes())?;
    prepared.autoencoder.params.save(out.join("kg.ckpt"))?;
    let results = run_all(&corpus, &prepared, &plan.specs(), &plan.settings)?;
    for r in &results {
        let p = metrics_dir.join(format!("{}.csv", r.spec.slug()));
        write_atomic(&p, r.metrics.to_csv().as_bytes())?;
    }
    let csv = out.join(RESULTS_CSV);
    let table = out.join(RESULTS_TABLE);
    write_atomic(&csv, results_csv(&results).as_bytes())?;
    write_atomic(&table, results_table(&results).as_bytes())?;
    Ok(PlanReport { results, csv, table })
}
