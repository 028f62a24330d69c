//! Domain-adversarial sentiment classifier with optional knowledge features.
//!
//! A document encoder `M` maps bag-of-words vectors to `z_dann`; variants
//! that use graph features add an encoder `M'` from the pooled graph feature
//! to `z_grp` and a decoder `D_recon` that reconstructs the feature from
//! `z_grp`. The task classifier `C` and the domain discriminator `D` read
//! `z_dann` or `[z_dann; z_grp]` depending on the variant.
//!
//! One optimiser step minimises
//!
//! ```text
//! L_cls + L_adv(GRL(z)) + gamma * L_recon
//! ```
//!
//! where `GRL` is identity forward and multiplies gradients by `-lambda`
//! backward. The discriminator therefore descends `L_adv` while everything
//! below the reversal ascends `lambda * L_adv`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::rc::Rc;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::corpus::{dense_batch, BowVector, BowVocab, Document, Label};
use crate::docfeat::FeatureTable;
use crate::error::{Error, Result};
use crate::numkit::{Adam, AdamConfig, Matrix, Optimizer, ParamId, ParamStore, Sgd, Tape, Var};

const CHECKPOINT_KIND: &str = "adversary";
const NUM_CLASSES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Dann,
    DannPlus,
    KingdomFull,
    /// Separate reconstruction decoders for source and target.
    V1,
    /// Discriminator sees `z_dann` only.
    V2,
    /// Classifier sees `z_dann` only.
    V3,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Dann,
        Variant::DannPlus,
        Variant::KingdomFull,
        Variant::V1,
        Variant::V2,
        Variant::V3,
    ];

    pub fn uses_graph(self) -> bool {
        !matches!(self, Variant::Dann | Variant::DannPlus)
    }

    pub fn classifier_uses_graph(self) -> bool {
        matches!(self, Variant::KingdomFull | Variant::V1 | Variant::V2)
    }

    pub fn discriminator_uses_graph(self) -> bool {
        matches!(self, Variant::KingdomFull | Variant::V1 | Variant::V3)
    }

    pub fn separate_decoders(self) -> bool {
        self == Variant::V1
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Dann => "dann",
            Variant::DannPlus => "dann_plus",
            Variant::KingdomFull => "kingdom_full",
            Variant::V1 => "v1",
            Variant::V2 => "v2",
            Variant::V3 => "v3",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Adam,
    Sgd { momentum: f64 },
}

/// How training progress feeds [`lambda_at`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LambdaSchedule {
    /// Progress over the whole run.
    #[default]
    Monotone,
    /// Progress restarts at every epoch.
    PerEpoch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantConfig {
    pub variant: Variant,
    pub hidden: usize,
    pub gamma: f64,
    pub dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Examples per domain per step.
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub schedule: LambdaSchedule,
    /// Replaces the schedule with a constant.
    pub fixed_lambda: Option<f64>,
    /// Decays the step size as `lr / (1 + 10 p)^0.75` over training
    /// progress `p`.
    pub anneal_lr: bool,
    pub seed: u64,
}

impl Default for VariantConfig {
    fn default() -> Self {
        VariantConfig {
            variant: Variant::KingdomFull,
            hidden: 100,
            gamma: 1.0,
            dropout: 0.25,
            lr: 1e-3,
            epochs: 50,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            schedule: LambdaSchedule::Monotone,
            fixed_lambda: None,
            anneal_lr: true,
            seed: 0,
        }
    }
}

impl VariantConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::config("hidden width and batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma {} must be finite and non-negative", self.gamma)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }

    /// `dann_plus` always uses Adam.
    pub fn effective_optimizer(&self) -> OptimizerKind {
        match self.variant {
            Variant::DannPlus => OptimizerKind::Adam,
            _ => self.optimizer,
        }
    }
}

/// `2 / (1 + exp(-10 p)) - 1`. Progress outside `[0, 1]` is clamped.
pub fn lambda_at(p: f64) -> f64 {
    let q = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
    if q != p {
        log::warn!("lambda progress {p} clamped to {q}");
    }
    2.0 / (1.0 + (-10.0 * q).exp()) - 1.0
}

pub fn annealed_lr(lr: f64, p: f64) -> f64 {
    lr / (1.0 + 10.0 * p.clamp(0.0, 1.0)).powf(0.75)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

/// Trainable parameters of every network of one variant.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversaryParams {
    variant: Variant,
    bow_dim: usize,
    graph_dim: usize,
    hidden: usize,
    store: ParamStore,
    m: Linear,
    g: Option<Linear>,
    c: Linear,
    d_hidden: Linear,
    d_out: Linear,
    r_src: Option<Linear>,
    r_tgt: Option<Linear>,
}

fn add_linear<R: Rng + ?Sized>(
    store: &mut ParamStore,
    name: &str,
    d_in: usize,
    d_out: usize,
    rng: &mut R,
) -> Result<Linear> {
    Ok(Linear {
        w: store.add(format!("{name}.w"), Matrix::glorot(d_in, d_out, rng))?,
        b: store.add(format!("{name}.b"), Matrix::zeros(1, d_out))?,
    })
}

fn find_linear(store: &ParamStore, name: &str, d_in: usize, d_out: usize) -> Result<Linear> {
    let w = store.require(&format!("{name}.w"))?;
    let b = store.require(&format!("{name}.b"))?;
    if store.get(w).shape() != (d_in, d_out) || store.get(b).shape() != (1, d_out) {
        return Err(Error::shape(format!("layer {name} does not match {d_in} -> {d_out}")));
    }
    Ok(Linear { w, b })
}

impl AdversaryParams {
    /// `graph_dim` may be zero only for variants without graph features;
    /// when non-zero the graph networks exist even if the variant ignores
    /// them.
    pub fn init<R: Rng + ?Sized>(
        variant: Variant,
        bow_dim: usize,
        graph_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::check_dims(variant, bow_dim, graph_dim, hidden)?;
        let mut store = ParamStore::new();
        let (cls_in, disc_in) = Self::widths(variant, hidden);
        add_linear(&mut store, "m", bow_dim, hidden, rng)?;
        if graph_dim > 0 {
            add_linear(&mut store, "g", graph_dim, hidden, rng)?;
        }
        add_linear(&mut store, "c", cls_in, NUM_CLASSES, rng)?;
        add_linear(&mut store, "d1", disc_in, hidden, rng)?;
        add_linear(&mut store, "d2", hidden, 1, rng)?;
        if graph_dim > 0 {
            if variant.separate_decoders() {
                add_linear(&mut store, "r_src", hidden, graph_dim, rng)?;
                add_linear(&mut store, "r_tgt", hidden, graph_dim, rng)?;
            } else {
                add_linear(&mut store, "r", hidden, graph_dim, rng)?;
            }
        }
        Self::assemble(variant, bow_dim, graph_dim, hidden, store)
    }

    fn check_dims(variant: Variant, bow_dim: usize, graph_dim: usize, hidden: usize) -> Result<()> {
        if bow_dim == 0 || hidden == 0 {
            return Err(Error::config("bag-of-words and hidden widths must be positive"));
        }
        if variant.uses_graph() && graph_dim == 0 {
            return Err(Error::config(format!("variant {variant} needs graph features")));
        }
        Ok(())
    }

    fn widths(variant: Variant, hidden: usize) -> (usize, usize) {
        let w = |graph: bool| if graph { 2 * hidden } else { hidden };
        (w(variant.classifier_uses_graph()), w(variant.discriminator_uses_graph()))
    }

    fn assemble(variant: Variant, bow_dim: usize, graph_dim: usize, hidden: usize, store: ParamStore) -> Result<Self> {
        let (cls_in, disc_in) = Self::widths(variant, hidden);
        let graph = graph_dim > 0;
        let (r_src, r_tgt) = match (graph, variant.separate_decoders()) {
            (false, _) => (None, None),
            (true, true) => (
                Some(find_linear(&store, "r_src", hidden, graph_dim)?),
                Some(find_linear(&store, "r_tgt", hidden, graph_dim)?),
            ),
            (true, false) => {
                let r = find_linear(&store, "r", hidden, graph_dim)?;
                (Some(r), Some(r))
            }
        };
        Ok(AdversaryParams {
            variant,
            bow_dim,
            graph_dim,
            hidden,
            m: find_linear(&store, "m", bow_dim, hidden)?,
            g: graph.then(|| find_linear(&store, "g", graph_dim, hidden)).transpose()?,
            c: find_linear(&store, "c", cls_in, NUM_CLASSES)?,
            d_hidden: find_linear(&store, "d1", disc_in, hidden)?,
            d_out: find_linear(&store, "d2", hidden, 1)?,
            r_src,
            r_tgt,
            store,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn bow_dim(&self) -> usize {
        self.bow_dim
    }

    pub fn graph_dim(&self) -> usize {
        self.graph_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Parameter ids of a network: `"m"`, `"g"`, `"c"`, `"d"`, `"r_src"`
    /// or `"r_tgt"` (the last two coincide unless the variant has separate
    /// decoders).
    pub fn network_ids(&self, net: &str) -> Vec<ParamId> {
        let lin = |l: &Linear| vec![l.w, l.b];
        match net {
            "m" => lin(&self.m),
            "g" => self.g.as_ref().map(lin).unwrap_or_default(),
            "c" => lin(&self.c),
            "d" => [lin(&self.d_hidden), lin(&self.d_out)].concat(),
            "r_src" => self.r_src.as_ref().map(lin).unwrap_or_default(),
            "r_tgt" => self.r_tgt.as_ref().map(lin).unwrap_or_default(),
            _ => Vec::new(),
        }
    }
}

/// Trained classifier plus the vocabulary its inputs were built with.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub params: AdversaryParams,
    pub vocab: BowVocab,
}

impl ModelBundle {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let p = &self.params;
        Checkpoint::new(CHECKPOINT_KIND, p.store.clone())
            .with_meta("variant", p.variant)
            .with_meta("bow_dim", p.bow_dim)
            .with_meta("graph_dim", p.graph_dim)
            .with_meta("hidden", p.hidden)
            .with_meta("vocab", self.vocab.to_text())
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let variant: Variant = ck.meta("variant")?.parse()?;
        let bow_dim = ck.meta_parse("bow_dim")?;
        let graph_dim = ck.meta_parse("graph_dim")?;
        let hidden = ck.meta_parse("hidden")?;
        let vocab = BowVocab::from_text(ck.meta("vocab")?, Path::new("<checkpoint vocab>"))?;
        let params = AdversaryParams::assemble(variant, bow_dim, graph_dim, hidden, ck.params)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if vocab.len() != bow_dim {
            return Err(Error::Checkpoint(format!(
                "vocabulary has {} terms but the encoder expects {bow_dim}",
                vocab.len()
            )));
        }
        Ok(ModelBundle { params, vocab })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

/// Featurised documents of one domain and split.
#[derive(Clone, Debug, PartialEq)]
pub struct Examples {
    pub ids: Vec<String>,
    pub bow: Vec<BowVector>,
    /// `n x d` pooled graph features, when available.
    pub graph: Option<Matrix>,
    pub labels: Vec<Option<Label>>,
}

impl Examples {
    pub fn build(docs: &[Document], vocab: &BowVocab, features: Option<&FeatureTable>) -> Result<Self> {
        let refs: Vec<&Document> = docs.iter().collect();
        Ok(Examples {
            ids: docs.iter().map(|d| d.id.clone()).collect(),
            bow: docs.iter().map(|d| vocab.featurize(d)).collect(),
            graph: features.map(|f| f.matrix(&refs)).transpose()?,
            labels: docs.iter().map(|d| d.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.bow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bow.is_empty()
    }

    fn label_indices(&self, rows: &[usize]) -> Result<Vec<usize>> {
        rows.iter()
            .map(|&r| {
                self.labels[r]
                    .map(Label::index)
                    .ok_or_else(|| Error::domain(format!("document {:?} has no label", self.ids[r])))
            })
            .collect()
    }
}

/// One step's inputs: source rows first, then target rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub bow: Matrix,
    pub graph: Option<Matrix>,
    pub n_source: usize,
    /// Class indices of the source rows.
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn assemble(source: &Examples, src_rows: &[usize], target: &Examples, tgt_rows: &[usize]) -> Result<Batch> {
        let vectors: Vec<&BowVector> = src_rows
            .iter()
            .map(|&r| &source.bow[r])
            .chain(tgt_rows.iter().map(|&r| &target.bow[r]))
            .collect();
        let dim = vectors.first().map_or(0, |v| v.dim());
        let bow = dense_batch(&vectors, dim)?;
        let graph = match (&source.graph, &target.graph) {
            (Some(s), Some(t)) => Some(s.gather_rows(src_rows)?.concat_rows(&t.gather_rows(tgt_rows)?)?),
            _ => None,
        };
        Ok(Batch {
            bow,
            graph,
            n_source: src_rows.len(),
            labels: source.label_indices(src_rows)?,
        })
    }

    pub fn len(&self) -> usize {
        self.bow.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.bow.rows() == 0
    }

    fn domain_targets(&self) -> Matrix {
        let v: Vec<f64> = (0..self.len()).map(|i| if i < self.n_source { 1.0 } else { 0.0 }).collect();
        Matrix::column_vector(&v)
    }
}

/// Training mode carries the dropout randomness.
pub enum Mode<'a> {
    Train(&'a mut dyn rand::RngCore),
    Eval,
}

/// Output nodes of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub class_logits: Var,
    pub domain_logits: Var,
    /// Source and target reconstructions.
    pub recon: Option<(Var, Var)>,
}

fn linear(tape: &mut Tape, store: &ParamStore, l: &Linear, x: Var) -> Result<Var> {
    let w = tape.param(store, l.w);
    let b = tape.param(store, l.b);
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

fn hidden_layer(tape: &mut Tape, store: &ParamStore, l: &Linear, x: Var, p: f64, mode: &mut Mode) -> Result<Var> {
    let h = linear(tape, store, l, x)?;
    let h = tape.relu(h);
    match mode {
        Mode::Train(rng) => tape.dropout(h, p, true, rng),
        Mode::Eval => Ok(h),
    }
}

/// Records the networks on `tape`. `grl_multiplier` scales gradients
/// crossing into the discriminator (`-lambda` during training).
pub fn forward_on_tape(
    tape: &mut Tape,
    params: &AdversaryParams,
    bow: &Matrix,
    graph: Option<&Matrix>,
    n_source: usize,
    dropout: f64,
    grl_multiplier: f64,
    mut mode: Mode,
) -> Result<Forward> {
    if bow.cols() != params.bow_dim {
        return Err(Error::shape(format!(
            "bag-of-words width {} but the encoder expects {}",
            bow.cols(),
            params.bow_dim
        )));
    }
    let s = &params.store;
    let x = tape.constant(bow.clone());
    let z_dann = hidden_layer(tape, s, &params.m, x, dropout, &mut mode)?;
    let v = params.variant;
    let z_grp = if v.uses_graph() {
        let g = graph.ok_or_else(|| Error::config(format!("variant {v} needs graph features")))?;
        if g.cols() != params.graph_dim || g.rows() != bow.rows() {
            return Err(Error::shape(format!(
                "graph features {:?} for {} documents of width {}",
                g.shape(),
                bow.rows(),
                params.graph_dim
            )));
        }
        let xg = tape.constant(g.clone());
        let enc = params.g.as_ref().expect("graph variants have M'");
        Some(hidden_layer(tape, s, enc, xg, dropout, &mut mode)?)
    } else {
        None
    };
    let joint = match z_grp {
        Some(zg) => Some(tape.concat_cols(z_dann, zg)?),
        None => None,
    };
    let cls_in = if v.classifier_uses_graph() { joint.expect("graph variant") } else { z_dann };
    let disc_in = if v.discriminator_uses_graph() { joint.expect("graph variant") } else { z_dann };
    let class_logits = linear(tape, s, &params.c, cls_in)?;
    let reversed = tape.reverse_gradient(disc_in, grl_multiplier);
    let dh = hidden_layer(tape, s, &params.d_hidden, reversed, dropout, &mut mode)?;
    let domain_logits = linear(tape, s, &params.d_out, dh)?;
    let recon = match z_grp {
        Some(zg) => {
            let n = bow.rows();
            let src = tape.gather_rows(zg, Rc::new((0..n_source).collect()))?;
            let tgt = tape.gather_rows(zg, Rc::new((n_source..n).collect()))?;
            let rs = linear(tape, s, params.r_src.as_ref().expect("decoder"), src)?;
            let rt = linear(tape, s, params.r_tgt.as_ref().expect("decoder"), tgt)?;
            Some((rs, rt))
        }
        None => None,
    };
    Ok(Forward {
        class_logits,
        domain_logits,
        recon,
    })
}

/// Mean softmax cross-entropy of the source rows.
pub fn loss_cls(tape: &mut Tape, class_logits: Var, n_source: usize, labels: &[usize]) -> Result<Var> {
    if labels.len() != n_source {
        return Err(Error::domain(format!("{} labels for {n_source} source rows", labels.len())));
    }
    let src = tape.gather_rows(class_logits, Rc::new((0..n_source).collect()))?;
    tape.softmax_ce(src, Rc::new(labels.to_vec()))
}

/// Mean binary cross-entropy with source labelled 1 and target 0.
pub fn loss_adv(tape: &mut Tape, domain_logits: Var, domain_targets: Matrix) -> Result<Var> {
    tape.bce_with_logits(domain_logits, Rc::new(domain_targets))
}

/// Squared reconstruction error per row averaged within each domain, then
/// summed over the two domains. Empty halves contribute nothing.
pub fn loss_recon(tape: &mut Tape, recon: (Var, Var), graph: &Matrix, n_source: usize) -> Result<Var> {
    let n = graph.rows();
    let mut parts = Vec::new();
    for (var, rows) in [(recon.0, 0..n_source), (recon.1, n_source..n)] {
        if rows.is_empty() {
            continue;
        }
        let rows: Vec<usize> = rows.collect();
        let target = graph.gather_rows(&rows)?;
        parts.push(tape.mse(var, Rc::new(target))?);
    }
    let mut total = tape.constant(Matrix::zeros(1, 1));
    for p in parts {
        total = tape.add(total, p)?;
    }
    Ok(total)
}

/// Scalar nodes of the training objective.
#[derive(Clone, Copy, Debug)]
pub struct Objective {
    pub total: Var,
    pub cls: Var,
    pub adv: Var,
    pub recon: Option<Var>,
}

/// Forward pass and combined objective for one batch. `gamma == 0` keeps
/// the reconstruction loss out of the total while still reporting it.
pub fn objective_on_tape(
    tape: &mut Tape,
    params: &AdversaryParams,
    batch: &Batch,
    cfg: &VariantConfig,
    grl_multiplier: f64,
    mode: Mode,
) -> Result<Objective> {
    let fwd = forward_on_tape(
        tape,
        params,
        &batch.bow,
        batch.graph.as_ref(),
        batch.n_source,
        cfg.dropout,
        grl_multiplier,
        mode,
    )?;
    let cls = loss_cls(tape, fwd.class_logits, batch.n_source, &batch.labels)?;
    let adv = loss_adv(tape, fwd.domain_logits, batch.domain_targets())?;
    let mut total = tape.add(cls, adv)?;
    let recon = match (fwd.recon, &batch.graph) {
        (Some(r), Some(g)) => {
            let l = loss_recon(tape, r, g, batch.n_source)?;
            if cfg.gamma != 0.0 {
                let scaled = tape.scale(l, cfg.gamma);
                total = tape.add(total, scaled)?;
            }
            Some(l)
        }
        _ => None,
    };
    Ok(Objective {
        total,
        cls,
        adv,
        recon,
    })
}

/// Per-epoch training record.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss_cls: f64,
    pub loss_adv: f64,
    pub loss_recon: Option<f64>,
    /// Lambda at the last step of the epoch.
    pub lambda: f64,
    pub source_train_accuracy: f64,
    pub target_test_accuracy: Option<f64>,
    pub discriminator_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub epochs: Vec<EpochMetrics>,
}

impl RunMetrics {
    pub const CSV_HEADER: &'static str =
        "epoch,loss_cls,loss_adv,loss_recon,lambda,source_train_accuracy,target_test_accuracy,discriminator_accuracy";

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for m in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                m.epoch,
                m.loss_cls,
                m.loss_adv,
                opt(m.loss_recon),
                m.lambda,
                m.source_train_accuracy,
                opt(m.target_test_accuracy),
                m.discriminator_accuracy
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Held-out data watched during training. Labels of `target_test` are only
/// read for reporting.
#[derive(Clone, Copy, Debug, Default)]
pub struct Monitor<'a> {
    pub source_heldout: Option<&'a Examples>,
    pub target_test: Option<&'a Examples>,
}

#[derive(Clone, Debug)]
pub struct TrainedAdversary {
    pub params: AdversaryParams,
    pub metrics: RunMetrics,
}

fn all_rows(e: &Examples) -> Vec<usize> {
    (0..e.len()).collect()
}

/// Logits of `examples` in evaluation mode, as `(class, domain)`.
fn eval_logits(params: &AdversaryParams, examples: &Examples) -> Result<(Matrix, Matrix)> {
    let rows = all_rows(examples);
    let vectors: Vec<&BowVector> = examples.bow.iter().collect();
    let bow = dense_batch(&vectors, params.bow_dim)?;
    let graph = match &examples.graph {
        Some(g) => Some(g.gather_rows(&rows)?),
        None => None,
    };
    let mut tape = Tape::new();
    let fwd = forward_on_tape(&mut tape, params, &bow, graph.as_ref(), rows.len(), 0.0, 1.0, Mode::Eval)?;
    Ok((tape.value(fwd.class_logits).clone(), tape.value(fwd.domain_logits).clone()))
}

pub fn predict(params: &AdversaryParams, examples: &Examples) -> Result<Vec<Label>> {
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    let (logits, _) = eval_logits(params, examples)?;
    logits.argmax_rows().into_iter().map(Label::from_index).collect()
}

/// Fraction of correct argmax predictions, dropout disabled.
pub fn evaluate(params: &AdversaryParams, examples: &Examples) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::domain("cannot evaluate on an empty document set"));
    }
    let truth = examples.label_indices(&all_rows(examples))?;
    let pred = predict(params, examples)?;
    let correct = pred.iter().zip(&truth).filter(|(p, t)| p.index() == **t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Accuracy of the discriminator at telling `source` (1) from `target` (0).
pub fn discriminator_accuracy(params: &AdversaryParams, source: &Examples, target: &Examples) -> Result<f64> {
    let mut correct = 0;
    let mut total = 0;
    for (set, is_source) in [(source, true), (target, false)] {
        if set.is_empty() {
            continue;
        }
        let (_, dom) = eval_logits(params, set)?;
        correct += dom.as_slice().iter().filter(|&&z| (z > 0.0) == is_source).count();
        total += set.len();
    }
    if total == 0 {
        return Err(Error::domain("cannot score the discriminator on no documents"));
    }
    Ok(correct as f64 / total as f64)
}

/// Trains a fresh model. Target labels are never read.
pub fn train(source: &Examples, target: &Examples, cfg: &VariantConfig, monitor: Monitor) -> Result<TrainedAdversary> {
    cfg.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::config("training needs source and target documents"));
    }
    let bow_dim = source.bow[0].dim();
    if target.bow.iter().chain(&source.bow).any(|b| b.dim() != bow_dim) {
        return Err(Error::shape("source and target bag-of-words widths differ"));
    }
    let graph_dim = if cfg.variant.uses_graph() {
        match (&source.graph, &target.graph) {
            (Some(s), Some(t)) if s.cols() == t.cols() => s.cols(),
            _ => return Err(Error::config(format!("variant {} needs graph features for both domains", cfg.variant))),
        }
    } else {
        0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = AdversaryParams::init(cfg.variant, bow_dim, graph_dim, cfg.hidden, &mut rng)?;
    let mut opt = match cfg.effective_optimizer() {
        OptimizerKind::Adam => Optimizer::Adam(Adam::new(AdamConfig::with_lr(cfg.lr), &params.store)),
        OptimizerKind::Sgd { momentum } => Optimizer::Sgd(Sgd::new(cfg.lr, momentum, &params.store)),
    };
    // Strip target labels so nothing downstream can read them.
    let target = Examples {
        labels: vec![None; target.len()],
        ..target.clone()
    };
    let steps_per_epoch = source.len().div_ceil(cfg.batch_size);
    let total_steps = (cfg.epochs * steps_per_epoch).max(1);
    let mut src_order = all_rows(source);
    let mut tgt_order = all_rows(&target);
    tgt_order.shuffle(&mut rng);
    let mut tgt_pos = 0;
    let mut metrics = RunMetrics::default();
    for epoch in 0..cfg.epochs {
        src_order.shuffle(&mut rng);
        let (mut sum_cls, mut sum_adv, mut sum_rec) = (0.0, 0.0, 0.0);
        let mut lambda = 0.0;
        for (step, src_rows) in src_order.chunks(cfg.batch_size).enumerate() {
            let mut tgt_rows = Vec::with_capacity(src_rows.len());
            while tgt_rows.len() < src_rows.len() {
                if tgt_pos == tgt_order.len() {
                    tgt_order.shuffle(&mut rng);
                    tgt_pos = 0;
                }
                tgt_rows.push(tgt_order[tgt_pos]);
                tgt_pos += 1;
            }
            let progress = match cfg.schedule {
                LambdaSchedule::Monotone => (epoch * steps_per_epoch + step) as f64 / total_steps as f64,
                LambdaSchedule::PerEpoch => step as f64 / steps_per_epoch as f64,
            };
            lambda = cfg.fixed_lambda.unwrap_or_else(|| lambda_at(progress));
            if cfg.anneal_lr {
                let p = (epoch * steps_per_epoch + step) as f64 / total_steps as f64;
                opt.set_lr(annealed_lr(cfg.lr, p));
            }
            let batch = Batch::assemble(source, src_rows, &target, &tgt_rows)?;
            let mut tape = Tape::new();
            let obj = objective_on_tape(&mut tape, &params, &batch, cfg, -lambda, Mode::Train(&mut rng))?;
            let total = tape.scalar(obj.total);
            if !total.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("objective is {total}"),
                });
            }
            let grads = tape.backward(obj.total, &params.store)?;
            opt.step_except(&mut params.store, &grads, &[])?;
            if !params.store.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "parameters became non-finite".into(),
                });
            }
            sum_cls += tape.scalar(obj.cls);
            sum_adv += tape.scalar(obj.adv);
            sum_rec += obj.recon.map_or(0.0, |r| tape.scalar(r));
        }
        let n = steps_per_epoch as f64;
        let (dsrc, dtgt) = match (monitor.source_heldout, monitor.target_test) {
            (Some(s), Some(t)) => (s, t),
            _ => (source, &target),
        };
        let m = EpochMetrics {
            epoch,
            loss_cls: sum_cls / n,
            loss_adv: sum_adv / n,
            loss_recon: cfg.variant.uses_graph().then_some(sum_rec / n),
            lambda,
            source_train_accuracy: evaluate(&params, source)?,
            target_test_accuracy: monitor.target_test.map(|t| evaluate(&params, t)).transpose()?,
            discriminator_accuracy: discriminator_accuracy(&params, dsrc, dtgt)?,
        };
        log::debug!(
            "{} epoch {epoch}: cls {:.4} adv {:.4} src {:.3} tgt {:?} disc {:.3}",
            cfg.variant,
            m.loss_cls,
            m.loss_adv,
            m.source_train_accuracy,
            m.target_test_accuracy,
            m.discriminator_accuracy
        );
        metrics.epochs.push(m);
    }
    Ok(TrainedAdversary { params, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_schedule_values() {
        assert_eq!(lambda_at(0.0), 0.0);
        assert!((lambda_at(1.0) - (2.0 / (1.0 + (-10.0f64).exp()) - 1.0)).abs() < 1e-15);
        assert!((lambda_at(1.0) - 0.99991).abs() < 1e-5);
        assert!((lambda_at(0.5) - 0.98661).abs() < 1e-5);
        assert_eq!(lambda_at(-3.0), 0.0);
        assert_eq!(lambda_at(7.0), lambda_at(1.0));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("v4".parse::<Variant>().is_err());
    }

    #[test]
    fn wiring_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = AdversaryParams::init(Variant::V3, 7, 4, 5, &mut rng).unwrap();
        assert_eq!(p.store().get(p.c.w).shape(), (5, 2));
        assert_eq!(p.store().get(p.d_hidden.w).shape(), (10, 5));
        let p = AdversaryParams::init(Variant::V2, 7, 4, 5, &mut rng).unwrap();
        assert_eq!(p.store().get(p.c.w).shape(), (10, 2));
        assert_eq!(p.store().get(p.d_hidden.w).shape(), (5, 5));
        let p = AdversaryParams::init(Variant::V1, 7, 4, 5, &mut rng).unwrap();
        assert_ne!(p.network_ids("r_src"), p.network_ids("r_tgt"));
        let p = AdversaryParams::init(Variant::KingdomFull, 7, 4, 5, &mut rng).unwrap();
        assert_eq!(p.network_ids("r_src"), p.network_ids("r_tgt"));
        assert!(AdversaryParams::init(Variant::KingdomFull, 7, 0, 5, &mut rng).is_err());
        let p = AdversaryParams::init(Variant::Dann, 7, 0, 5, &mut rng).unwrap();
        assert!(p.network_ids("g").is_empty());
    }
}
