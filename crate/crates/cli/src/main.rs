use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, CommandFactory, Parser, Subcommand};
use kgda_core::adversary::{self, Examples, LambdaSchedule, ModelBundle, Monitor, OptimizerKind, Variant, VariantConfig};
use kgda_core::corpus::{content_words, BowVocab, Document};
use kgda_core::docfeat::{extract_all, FeatureTable, PassScope};
use kgda_core::experiment::{build_g_prime, run_plan, Corpus, ExperimentPlan};
use kgda_core::kgraph::{document_subgraph, relation_stats, MultiRelGraph, SeedSet};
use kgda_core::kvconfig::KvConfig;
use kgda_core::rgcn::{train_autoencoder, RgcnAutoencoderParams, RgcnConfig};
use kgda_core::synth::{gen_synth, SynthSpec};

/// Knowledge-guided domain adaptation pipeline.
///
/// Every flag can also be set from a `key = value` file passed with
/// `--config`; keys are flag names with `-` replaced by `_`, and flags given
/// on the command line win.
#[derive(Parser, Debug)]
#[command(name = "kgda", version)]
struct Cli {
    /// Flat key = value file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct DataArgs {
    /// Directory holding `<domain>.train.tsv`, `<domain>.test.tsv` and the split manifest.
    #[arg(long)]
    data_dir: PathBuf,
    /// Comma-separated domains; defaults to every domain in the data directory.
    #[arg(long, value_delimiter = ',')]
    domains: Option<Vec<String>>,
    /// Knowledge-graph triplets; defaults to `<data-dir>/kg.tsv`.
    #[arg(long)]
    triplets: Option<PathBuf>,
    /// Word/POS lexicon; defaults to `<data-dir>/lexicon.tsv`.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic multi-domain corpus, knowledge graph and lexicon.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "num-domains")]
        domains: Option<usize>,
        #[arg(long)]
        docs_per_domain: Option<usize>,
        #[arg(long)]
        general_vocab: Option<usize>,
        #[arg(long)]
        shared_sentiment_vocab: Option<usize>,
        #[arg(long)]
        specific_sentiment_vocab: Option<usize>,
        #[arg(long)]
        topic_vocab: Option<usize>,
        #[arg(long)]
        doc_length: Option<usize>,
        #[arg(long)]
        bridge_density: Option<f64>,
        #[arg(long)]
        signal: Option<f64>,
        #[arg(long)]
        shared_fraction: Option<f64>,
        #[arg(long)]
        topic_rate: Option<f64>,
        #[arg(long)]
        train_fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Aggregate the training documents' subgraph G' into a triplet file.
    BuildGraph {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the graph autoencoder on G' by link prediction.
    PretrainKg {
        /// G' triplets.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        min_delta: Option<f64>,
        #[arg(long)]
        input_dim: Option<usize>,
        #[arg(long)]
        hidden_dim: Option<usize>,
        #[arg(long)]
        output_dim: Option<usize>,
        #[arg(long, action = ArgAction::Set)]
        freeze_node_features: Option<bool>,
    },
    /// Pool per-document graph features into a cache file.
    ExtractFeatures {
        #[command(flatten)]
        data: DataArgs,
        /// G' triplets.
        #[arg(long)]
        graph: PathBuf,
        /// Autoencoder checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `subgraph` or `full`.
        #[arg(long, default_value = "subgraph")]
        scope: PassScope,
    },
    /// Train one variant on a source/target pair and save the model.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
        #[arg(long, default_value = "kingdom_full")]
        variant: Variant,
        /// Feature cache; required by graph-conditioned variants.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        bow_dim: usize,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch metrics CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        dropout: Option<f64>,
        /// `adam` or `sgd`.
        #[arg(long)]
        optimizer: Option<String>,
        #[arg(long)]
        momentum: Option<f64>,
        /// `monotone` or `per_epoch`.
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long)]
        fixed_lambda: Option<f64>,
        #[arg(long, action = ArgAction::Set)]
        anneal_lr: Option<bool>,
    },
    /// Accuracy of a saved model on one domain split.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        domain: String,
        /// `test` or `train`.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Execute an experiment plan and write the results tables.
    RunPlan {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        master_seed: Option<u64>,
    },
    /// Triplet counts per relation, most frequent first.
    RelationStats {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Print the subgraph of G' that feeds a document's features.
    DumpSubgraph {
        #[command(flatten)]
        data: DataArgs,
        /// G' triplets.
        #[arg(long)]
        graph: PathBuf,
        /// Document id; repeat for several.
        #[arg(long = "doc", required = true, action = ArgAction::Append)]
        docs: Vec<String>,
    },
}

fn flag_present(argv: &[String], long: &str) -> bool {
    let flag = format!("--{long}");
    let eq = format!("{flag}=");
    argv.iter().any(|a| *a == flag || a.starts_with(&eq))
}

/// Appends `--flag=value` for every config entry not already given as a
/// flag. Unknown keys are usage errors.
fn merge_config(mut argv: Vec<String>) -> std::result::Result<Vec<String>, String> {
    let path = argv.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            argv.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    });
    let Some(path) = path else { return Ok(argv) };
    let root = Cli::command();
    let Some(sub) = argv[1..]
        .iter()
        .find_map(|a| root.get_subcommands().find(|s| s.get_name() == a.as_str()))
    else {
        return Ok(argv);
    };
    let cfg = KvConfig::load(&path).map_err(|e| e.to_string())?;
    let args: Vec<(String, bool)> = sub
        .get_arguments()
        .filter_map(|a| {
            let long = a.get_long()?;
            Some((long.to_string(), matches!(a.get_action(), ArgAction::Append)))
        })
        .filter(|(long, _)| long != "help" && long != "config")
        .collect();
    let keys: Vec<String> = args.iter().map(|(l, _)| l.replace('-', "_")).collect();
    let known: Vec<&str> = keys.iter().map(String::as_str).collect();
    cfg.reject_unknown(&known).map_err(|e| e.to_string())?;
    let mut extra = Vec::new();
    for ((long, append), key) in args.iter().zip(&keys) {
        if flag_present(&argv, long) {
            continue;
        }
        let values = if *append { cfg.all(key) } else { cfg.get(key).into_iter().collect() };
        extra.extend(values.into_iter().map(|v| format!("--{long}={v}")));
    }
    argv.extend(extra);
    Ok(argv)
}

fn discover_domains(data_dir: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(data_dir).with_context(|| format!("reading {}", data_dir.display()))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(d) = name.strip_suffix(".train.tsv") {
            out.push(d.to_string());
        }
    }
    if out.is_empty() {
        bail!("no <domain>.train.tsv files in {}", data_dir.display());
    }
    out.sort();
    Ok(out)
}

impl DataArgs {
    fn load(&self) -> Result<Corpus> {
        let domains: BTreeSet<String> = match &self.domains {
            Some(d) => d.iter().cloned().collect(),
            None => discover_domains(&self.data_dir)?.into_iter().collect(),
        };
        let triplets = self.triplets.clone().unwrap_or_else(|| self.data_dir.join("kg.tsv"));
        let lexicon = self.lexicon.clone().unwrap_or_else(|| self.data_dir.join("lexicon.tsv"));
        Ok(Corpus::load(&self.data_dir, &domains, &triplets, &lexicon)?)
    }
}

fn load_features(path: Option<&Path>, variant: Variant) -> Result<Option<FeatureTable>> {
    if !variant.uses_graph() {
        return Ok(None);
    }
    let path = path.with_context(|| format!("variant {variant} needs --features"))?;
    Ok(Some(FeatureTable::load(path)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth {
            out,
            domains,
            docs_per_domain,
            general_vocab,
            shared_sentiment_vocab,
            specific_sentiment_vocab,
            topic_vocab,
            doc_length,
            bridge_density,
            signal,
            shared_fraction,
            topic_rate,
            train_fraction,
            seed,
        } => {
            let d = SynthSpec::default();
            let spec = SynthSpec {
                domains: domains.unwrap_or(d.domains),
                docs_per_domain: docs_per_domain.unwrap_or(d.docs_per_domain),
                general_vocab: general_vocab.unwrap_or(d.general_vocab),
                shared_sentiment_vocab: shared_sentiment_vocab.unwrap_or(d.shared_sentiment_vocab),
                specific_sentiment_vocab: specific_sentiment_vocab.unwrap_or(d.specific_sentiment_vocab),
                topic_vocab: topic_vocab.unwrap_or(d.topic_vocab),
                doc_length: doc_length.unwrap_or(d.doc_length),
                bridge_density: bridge_density.unwrap_or(d.bridge_density),
                signal: signal.unwrap_or(d.signal),
                shared_fraction: shared_fraction.unwrap_or(d.shared_fraction),
                topic_rate: topic_rate.unwrap_or(d.topic_rate),
                train_fraction: train_fraction.unwrap_or(d.train_fraction),
                seed: seed.unwrap_or(d.seed),
            };
            let data = gen_synth(&spec)?;
            let files = data.write(&out)?;
            println!("triplets\t{}", files.triplets.display());
            println!("lexicon\t{}", files.lexicon.display());
            for (domain, train, test) in &files.splits {
                println!("{domain}\t{}\t{}", train.display(), test.display());
            }
        }
        Command::BuildGraph { data, out } => {
            let corpus = data.load()?;
            let train: Vec<Document> = corpus.domains.values().flat_map(|d| d.train.iter().cloned()).collect();
            let g = build_g_prime(&corpus.graph, &train, &corpus.tagger);
            if g.is_empty() {
                bail!("no training document touches the knowledge graph");
            }
            g.write_triplets(&out)?;
            println!(
                "{}: {} nodes, {} relations, {} triplets",
                out.display(),
                g.node_count(),
                g.relation_count(),
                g.triplet_count()
            );
        }
        Command::PretrainKg {
            graph,
            out,
            seed,
            epochs,
            batch_size,
            lr,
            patience,
            min_delta,
            input_dim,
            hidden_dim,
            output_dim,
            freeze_node_features,
        } => {
            let g = MultiRelGraph::load_triplets(&graph)?;
            let mut cfg = RgcnConfig::default();
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
            cfg.lr = lr.unwrap_or(cfg.lr);
            cfg.patience = patience.unwrap_or(cfg.patience);
            cfg.min_delta = min_delta.unwrap_or(cfg.min_delta);
            cfg.dims.input = input_dim.unwrap_or(cfg.dims.input);
            cfg.dims.hidden = hidden_dim.unwrap_or(cfg.dims.hidden);
            cfg.dims.output = output_dim.unwrap_or(cfg.dims.output);
            cfg.freeze_node_features = freeze_node_features.unwrap_or(cfg.freeze_node_features);
            let trained = train_autoencoder(&g, &cfg)?;
            trained.params.save(&out)?;
            println!(
                "{}: {} epochs, final loss {:.6}, sha256 {}",
                out.display(),
                trained.losses.len(),
                trained.losses.last().copied().unwrap_or(f64::NAN),
                trained.params.checksum()
            );
        }
        Command::ExtractFeatures {
            data,
            graph,
            checkpoint,
            out,
            scope,
        } => {
            let corpus = data.load()?;
            let g = MultiRelGraph::load_triplets(&graph)?;
            let params = RgcnAutoencoderParams::load(&checkpoint)?;
            let table = extract_all(&corpus.all_documents(), &g, &params, &corpus.tagger, Some(&out), scope)?;
            println!(
                "{}: {} documents ({} computed, {} reused), coverage {:.3}",
                out.display(),
                table.features.len(),
                table.computed,
                table.reused,
                table.coverage()
            );
        }
        Command::Train {
            data,
            source,
            target,
            variant,
            features,
            bow_dim,
            out,
            metrics,
            seed,
            epochs,
            batch_size,
            lr,
            hidden,
            gamma,
            dropout,
            optimizer,
            momentum,
            schedule,
            fixed_lambda,
            anneal_lr,
        } => {
            if source == target {
                bail!("source and target are both {source:?}");
            }
            let corpus = data.load()?;
            let src = corpus.domain(&source)?;
            let tgt = corpus.domain(&target)?;
            let fit: Vec<Document> = src.train.iter().chain(&tgt.train).cloned().collect();
            let vocab = BowVocab::fit(&fit, bow_dim)?;
            let table = load_features(features.as_deref(), variant)?;
            let src_train = Examples::build(&src.train, &vocab, table.as_ref())?;
            let tgt_train = Examples::build(&tgt.train, &vocab, table.as_ref())?;
            let src_test = Examples::build(&src.test, &vocab, table.as_ref())?;
            let tgt_test = Examples::build(&tgt.test, &vocab, table.as_ref())?;
            let d = VariantConfig::default();
            let cfg = VariantConfig {
                variant,
                hidden: hidden.unwrap_or(d.hidden),
                gamma: gamma.unwrap_or(d.gamma),
                dropout: dropout.unwrap_or(d.dropout),
                lr: lr.unwrap_or(d.lr),
                epochs: epochs.unwrap_or(d.epochs),
                batch_size: batch_size.unwrap_or(d.batch_size),
                optimizer: match optimizer.as_deref().unwrap_or("adam") {
                    "adam" => OptimizerKind::Adam,
                    "sgd" => OptimizerKind::Sgd {
                        momentum: momentum.unwrap_or(0.9),
                    },
                    other => bail!("unknown optimizer {other:?}"),
                },
                schedule: match schedule.as_deref().unwrap_or("monotone") {
                    "monotone" => LambdaSchedule::Monotone,
                    "per_epoch" => LambdaSchedule::PerEpoch,
                    other => bail!("unknown lambda schedule {other:?}"),
                },
                fixed_lambda,
                anneal_lr: anneal_lr.unwrap_or(d.anneal_lr),
                seed: seed.unwrap_or(d.seed),
            };
            let monitor = Monitor {
                source_heldout: Some(&src_test),
                target_test: Some(&tgt_test),
            };
            let trained = adversary::train(&src_train, &tgt_train, &cfg, monitor)?;
            if let Some(path) = &metrics {
                trained.metrics.write_csv(path)?;
            }
            let target_acc = adversary::evaluate(&trained.params, &tgt_test)?;
            let source_acc = adversary::evaluate(&trained.params, &src_test)?;
            ModelBundle {
                params: trained.params,
                vocab,
            }
            .save(&out)?;
            println!("{variant} {source}->{target}: target accuracy {target_acc:.4}, source accuracy {source_acc:.4}");
        }
        Command::Evaluate {
            data,
            model,
            domain,
            split,
            features,
        } => {
            let bundle = ModelBundle::load(&model)?;
            let corpus = data.load()?;
            let d = corpus.domain(&domain)?;
            let docs = match split.as_str() {
                "test" => &d.test,
                "train" => &d.train,
                other => bail!("unknown split {other:?}; expected test or train"),
            };
            let table = load_features(features.as_deref(), bundle.params.variant())?;
            let examples = Examples::build(docs, &bundle.vocab, table.as_ref())?;
            let acc = adversary::evaluate(&bundle.params, &examples)?;
            println!("{domain} {split}: accuracy {acc:.4} over {} documents", examples.len());
        }
        Command::RunPlan {
            plan,
            output_dir,
            workers,
            master_seed,
        } => {
            let mut p = ExperimentPlan::load(&plan)?;
            if let Some(o) = output_dir {
                p.output_dir = o;
            }
            if let Some(w) = workers {
                p.settings.workers = w;
            }
            if let Some(s) = master_seed {
                p.settings.master_seed = s;
            }
            let report = run_plan(&p)?;
            print!("{}", fs::read_to_string(&report.table)?);
            println!("wrote {} and {}", report.csv.display(), report.table.display());
        }
        Command::RelationStats { graph } => {
            let g = MultiRelGraph::load_triplets(&graph)?;
            let stats = relation_stats(&g);
            let total = g.triplet_count().max(1) as f64;
            let width = stats.iter().map(|(r, _)| r.len()).max().unwrap_or(0).max("relation".len());
            println!("{:<width$}  {:>8}  {:>7}", "relation", "triplets", "percent");
            for (rel, count) in &stats {
                println!("{rel:<width$}  {count:>8}  {:>7.2}", 100.0 * *count as f64 / total);
            }
        }
        Command::DumpSubgraph { data, graph, docs } => {
            let corpus = data.load()?;
            let g = MultiRelGraph::load_triplets(&graph)?;
            let all = corpus.all_documents();
            for id in &docs {
                let doc = all
                    .iter()
                    .find(|d| &d.id == id)
                    .with_context(|| format!("no document {id:?}"))?;
                let words = content_words(doc, &corpus.tagger);
                let sub = document_subgraph(&g, &SeedSet::new(words.iter().cloned()));
                println!(
                    "# {id}: {} content words, {} nodes, {} triplets",
                    words.len(),
                    sub.node_count(),
                    sub.triplet_count()
                );
                print!("{}", sub.to_triplet_text());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match merge_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::try_parse_from(argv).unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
