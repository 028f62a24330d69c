//! Two-layer relational graph convolutional encoder with a DistMult
//! decoder, trained by link prediction against corrupted triplets.
//!
//! Layer `l` computes, for every node `i`,
//!
//! ```text
//! f(x_i, l) = sigma( sum_r sum_{j in N_i^r} (1 / c_ir) x_j W_r + x_i W_0 )
//! ```
//!
//! with `c_ir = |N_i^r|` counted with multiplicity. Every stored relation `r`
//! contributes two message slots: `r` itself (head to tail) and an implicit
//! inverse (tail to head). Layer 1 uses ReLU, layer 2 is linear. Weights are
//! stored `d_in x d_out` and applied to row vectors.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::kgraph::{MultiRelGraph, NodeId, RelId, Triplet};
use crate::numkit::{sigmoid, Adam, AdamConfig, Matrix, ParamId, ParamStore, SparseMatrix, Tape, Var};

const CHECKPOINT_KIND: &str = "rgcn-autoencoder";
const MAX_CORRUPTION_RETRIES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RgcnDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Default for RgcnDims {
    fn default() -> Self {
        RgcnDims {
            input: 100,
            hidden: 100,
            output: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RgcnConfig {
    pub dims: RgcnDims,
    pub epochs: usize,
    /// Positive triplets per minibatch.
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs without relative improvement of `min_delta` before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub freeze_node_features: bool,
    pub seed: u64,
}

impl Default for RgcnConfig {
    fn default() -> Self {
        RgcnConfig {
            dims: RgcnDims::default(),
            epochs: 200,
            batch_size: 512,
            lr: 0.001,
            patience: 20,
            min_delta: 1e-4,
            freeze_node_features: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct LayerIds {
    self_weight: ParamId,
    /// `2R` slots: forward relations then their inverses.
    relation: Vec<ParamId>,
}

/// All trainable parameters of the graph autoencoder together with the node
/// and relation tables they are indexed by.
#[derive(Clone, Debug, PartialEq)]
pub struct RgcnAutoencoderParams {
    dims: RgcnDims,
    node_names: Vec<String>,
    node_index: HashMap<String, usize>,
    relation_names: Vec<String>,
    relation_index: HashMap<String, usize>,
    store: ParamStore,
    node_init: ParamId,
    layer1: LayerIds,
    layer2: LayerIds,
    diag: ParamId,
}

fn index_of(names: &[String]) -> HashMap<String, usize> {
    names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect()
}

fn layer_names(layer: usize, relations: usize) -> (String, Vec<String>) {
    let rel = (0..2 * relations).map(|k| format!("l{layer}.rel{k}")).collect();
    (format!("l{layer}.self"), rel)
}

impl RgcnAutoencoderParams {
    /// Random initialisation covering every node and relation of `g`, in
    /// the graph's id order.
    pub fn init<R: Rng + ?Sized>(g: &MultiRelGraph, dims: RgcnDims, rng: &mut R) -> Result<Self> {
        Self::init_named(g.node_names().to_vec(), g.relation_names().to_vec(), dims, rng)
    }

    pub fn init_named<R: Rng + ?Sized>(
        node_names: Vec<String>,
        relation_names: Vec<String>,
        dims: RgcnDims,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.input == 0 || dims.hidden == 0 || dims.output == 0 {
            return Err(Error::config("embedding dimensions must be positive"));
        }
        let mut store = ParamStore::new();
        let bound = (6.0 / dims.input as f64).sqrt();
        store.add("node_init", Matrix::uniform(node_names.len(), dims.input, bound, rng))?;
        let r = relation_names.len();
        for (layer, d_in, d_out) in [(1, dims.input, dims.hidden), (2, dims.hidden, dims.output)] {
            let (self_name, rel_names) = layer_names(layer, r);
            store.add(self_name, Matrix::glorot(d_in, d_out, rng))?;
            for name in rel_names {
                store.add(name, Matrix::glorot(d_in, d_out, rng))?;
            }
        }
        store.add("distmult", Matrix::uniform(r, dims.output, 1.0, rng))?;
        Self::assemble(dims, node_names, relation_names, store)
    }

    fn assemble(
        dims: RgcnDims,
        node_names: Vec<String>,
        relation_names: Vec<String>,
        store: ParamStore,
    ) -> Result<Self> {
        let r = relation_names.len();
        let expect = |store: &ParamStore, name: &str, rows: usize, cols: usize| -> Result<ParamId> {
            let id = store.require(name)?;
            if store.get(id).shape() != (rows, cols) {
                return Err(Error::shape(format!(
                    "parameter {name} is {:?}, expected {rows}x{cols}",
                    store.get(id).shape()
                )));
            }
            Ok(id)
        };
        let node_init = expect(&store, "node_init", node_names.len(), dims.input)?;
        let mut layers = Vec::new();
        for (layer, d_in, d_out) in [(1, dims.input, dims.hidden), (2, dims.hidden, dims.output)] {
            let (self_name, rel_names) = layer_names(layer, r);
            layers.push(LayerIds {
                self_weight: expect(&store, &self_name, d_in, d_out)?,
                relation: rel_names
                    .iter()
                    .map(|n| expect(&store, n, d_in, d_out))
                    .collect::<Result<_>>()?,
            });
        }
        let diag = expect(&store, "distmult", r, dims.output)?;
        let layer2 = layers.pop().expect("two layers");
        let layer1 = layers.pop().expect("two layers");
        Ok(RgcnAutoencoderParams {
            dims,
            node_index: index_of(&node_names),
            node_names,
            relation_index: index_of(&relation_names),
            relation_names,
            store,
            node_init,
            layer1,
            layer2,
            diag,
        })
    }

    pub fn dims(&self) -> RgcnDims {
        self.dims
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn node_row(&self, name: &str) -> Option<usize> {
        self.node_index.get(name).copied()
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relation_index.get(name).copied()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn node_init_id(&self) -> ParamId {
        self.node_init
    }

    pub fn distmult_id(&self) -> ParamId {
        self.diag
    }

    /// `(self, per-slot)` weight ids of layer 1 or 2.
    pub fn layer_ids(&self, layer: usize) -> (ParamId, &[ParamId]) {
        let l = if layer == 1 { &self.layer1 } else { &self.layer2 };
        (l.self_weight, &l.relation)
    }

    /// Diagonal of `R_r`.
    pub fn relation_diag(&self, rel: usize) -> &[f64] {
        self.store.get(self.diag).row(rel)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(CHECKPOINT_KIND, self.store.clone())
            .with_meta("dims", format!("{},{},{}", self.dims.input, self.dims.hidden, self.dims.output))
            .with_meta("nodes", self.node_names.join("\n"))
            .with_meta("relations", self.relation_names.join("\n"))
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let dims: Vec<usize> = ck
            .meta("dims")?
            .split(',')
            .map(|d| d.parse().map_err(|_| Error::Checkpoint(format!("bad dims {d:?}"))))
            .collect::<Result<_>>()?;
        let [input, hidden, output] = dims[..] else {
            return Err(Error::Checkpoint("dims must have three entries".into()));
        };
        let split = |s: &str| -> Vec<String> {
            if s.is_empty() {
                Vec::new()
            } else {
                s.split('\n').map(str::to_string).collect()
            }
        };
        let nodes = split(ck.meta("nodes")?);
        let relations = split(ck.meta("relations")?);
        Self::assemble(RgcnDims { input, hidden, output }, nodes, relations, ck.params)
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    /// Hex SHA-256 of the checkpoint bytes.
    pub fn checksum(&self) -> String {
        self.to_checkpoint().checksum()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

/// Mean-normalised message matrices, one per relation slot.
#[derive(Clone, Debug)]
pub struct RelationalAdjacency {
    num_nodes: usize,
    slots: Vec<Option<Rc<SparseMatrix>>>,
}

impl RelationalAdjacency {
    /// Builds the `2R` slot matrices from `(head, relation, tail)` edges over
    /// local node indices. Repeated edges are kept and count towards `c_ir`.
    pub fn from_edges(num_nodes: usize, num_relations: usize, edges: &[(usize, usize, usize)]) -> Result<Self> {
        let mut entries: Vec<Vec<(usize, usize)>> = vec![Vec::new(); 2 * num_relations];
        for &(h, r, t) in edges {
            if h >= num_nodes || t >= num_nodes || r >= num_relations {
                return Err(Error::shape(format!("edge ({h}, {r}, {t}) out of range")));
            }
            entries[r].push((t, h));
            entries[num_relations + r].push((h, t));
        }
        let slots = entries
            .into_iter()
            .map(|pairs| {
                if pairs.is_empty() {
                    return Ok(None);
                }
                let mut counts = vec![0usize; num_nodes];
                for &(row, _) in &pairs {
                    counts[row] += 1;
                }
                let triples: Vec<(usize, usize, f64)> = pairs
                    .iter()
                    .map(|&(row, col)| (row, col, 1.0 / counts[row] as f64))
                    .collect();
                SparseMatrix::from_triples(num_nodes, num_nodes, &triples).map(|m| Some(Rc::new(m)))
            })
            .collect::<Result<_>>()?;
        Ok(RelationalAdjacency { num_nodes, slots })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }
}

/// Maps a graph onto parameter rows: node rows, relation indices and the
/// slot adjacency over the graph's own node ids.
fn bind_graph(g: &MultiRelGraph, params: &RgcnAutoencoderParams) -> Result<(Vec<usize>, RelationalAdjacency)> {
    let rows = g
        .node_names()
        .iter()
        .map(|n| {
            params
                .node_row(n)
                .ok_or_else(|| Error::config(format!("node {n:?} has no initial feature")))
        })
        .collect::<Result<Vec<_>>>()?;
    let rel_map = g
        .relation_names()
        .iter()
        .map(|r| {
            params
                .relation_index(r)
                .ok_or_else(|| Error::config(format!("relation {r:?} is not covered by the parameters")))
        })
        .collect::<Result<Vec<_>>>()?;
    let edges: Vec<(usize, usize, usize)> = g
        .triplets()
        .iter()
        .map(|t| (t.head.index(), rel_map[t.rel.index()], t.tail.index()))
        .collect();
    let adj = RelationalAdjacency::from_edges(rows.len(), params.relation_names.len(), &edges)?;
    Ok((rows, adj))
}

fn layer(tape: &mut Tape, x: Var, self_w: Var, rel_w: &[Var], adj: &RelationalAdjacency) -> Result<Var> {
    let mut out = tape.matmul(x, self_w)?;
    for (slot, a) in adj.slots.iter().enumerate() {
        if let Some(a) = a {
            let msg = tape.sparse_mul(a.clone(), x)?;
            let term = tape.matmul(msg, rel_w[slot])?;
            out = tape.add(out, term)?;
        }
    }
    Ok(out)
}

/// Records the encoder on `tape`; returns the `n x d` embedding node where
/// row `k` belongs to local node `k` whose initial feature is
/// `node_init[node_rows[k]]`.
pub fn encode_on_tape(
    tape: &mut Tape,
    params: &RgcnAutoencoderParams,
    node_rows: &[usize],
    adj: &RelationalAdjacency,
) -> Result<Var> {
    if node_rows.len() != adj.num_nodes {
        return Err(Error::shape(format!(
            "{} node rows for an adjacency over {} nodes",
            node_rows.len(),
            adj.num_nodes
        )));
    }
    if adj.slots.len() != params.layer1.relation.len() {
        return Err(Error::shape("adjacency relation count differs from the parameters"));
    }
    let s = &params.store;
    let g = tape.param(s, params.node_init);
    let x0 = tape.gather_rows(g, Rc::new(node_rows.to_vec()))?;
    let w0 = tape.param(s, params.layer1.self_weight);
    let wr: Vec<Var> = params.layer1.relation.iter().map(|&id| tape.param(s, id)).collect();
    let h1 = layer(tape, x0, w0, &wr, adj)?;
    let h1 = tape.relu(h1);
    let w0 = tape.param(s, params.layer2.self_weight);
    let wr: Vec<Var> = params.layer2.relation.iter().map(|&id| tape.param(s, id)).collect();
    layer(tape, h1, w0, &wr, adj)
}

/// Embeddings of every node of `g`, row `k` for `NodeId(k)`.
pub fn encode_graph(g: &MultiRelGraph, params: &RgcnAutoencoderParams) -> Result<Matrix> {
    let (rows, adj) = bind_graph(g, params)?;
    let mut tape = Tape::new();
    let h = encode_on_tape(&mut tape, params, &rows, &adj)?;
    Ok(tape.value(h).clone())
}

/// Forward pass over all of `g`, reporting the requested nodes.
pub fn rgcn_forward(
    g: &MultiRelGraph,
    params: &RgcnAutoencoderParams,
    nodes: &[NodeId],
) -> Result<BTreeMap<NodeId, Vec<f64>>> {
    let h = encode_graph(g, params)?;
    nodes
        .iter()
        .map(|&n| {
            if n.index() >= h.rows() {
                return Err(Error::config(format!("node {} is not in the graph", n.0)));
            }
            Ok((n, h.row(n.index()).to_vec()))
        })
        .collect()
}

/// Encodes a subgraph with message passing restricted to its own edges.
/// Keyed by concept name.
pub fn encode_nodes(subgraph: &MultiRelGraph, params: &RgcnAutoencoderParams) -> Result<BTreeMap<String, Vec<f64>>> {
    let h = encode_graph(subgraph, params)?;
    Ok(subgraph
        .node_names()
        .iter()
        .enumerate()
        .map(|(k, n)| (n.clone(), h.row(k).to_vec()))
        .collect())
}

pub fn distmult_logit(h_i: &[f64], rel: usize, h_j: &[f64], params: &RgcnAutoencoderParams) -> f64 {
    let r = params.relation_diag(rel);
    h_i.iter().zip(r).zip(h_j).map(|((a, b), c)| a * b * c).sum()
}

/// `sigma(h_i^T diag(R_r) h_j)`.
pub fn distmult_score(h_i: &[f64], rel: usize, h_j: &[f64], params: &RgcnAutoencoderParams) -> f64 {
    sigmoid(distmult_logit(h_i, rel, h_j, params))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TripletSample {
    pub head: NodeId,
    pub rel: RelId,
    pub tail: NodeId,
    pub positive: bool,
}

impl TripletSample {
    pub fn positive(t: Triplet) -> Self {
        TripletSample {
            head: t.head,
            rel: t.rel,
            tail: t.tail,
            positive: true,
        }
    }

    pub fn triplet(&self) -> Triplet {
        Triplet {
            head: self.head,
            rel: self.rel,
            tail: self.tail,
        }
    }
}

fn other_than<R: Rng + ?Sized>(n: usize, current: usize, rng: &mut R) -> usize {
    let v = rng.gen_range(0..n - 1);
    if v >= current {
        v + 1
    } else {
        v
    }
}

/// One corrupted negative per positive. The slot to corrupt (head, relation
/// or tail) is chosen uniformly, the replacement uniformly among the other
/// values; draws that hit a triplet of `graph` are retried.
pub fn sample_negatives<R: Rng + ?Sized>(
    positives: &[Triplet],
    graph: &MultiRelGraph,
    rng: &mut R,
) -> Result<Vec<TripletSample>> {
    let n = graph.node_count();
    let r = graph.relation_count();
    if positives.is_empty() {
        return Err(Error::Sampling("no positive triplets to corrupt".into()));
    }
    if n < 2 || r < 1 {
        return Err(Error::Sampling(format!(
            "need at least 2 nodes and 1 relation, graph has {n} and {r}"
        )));
    }
    positives
        .iter()
        .map(|&p| {
            for _ in 0..MAX_CORRUPTION_RETRIES {
                let mut c = p;
                match rng.gen_range(0..3) {
                    0 => c.head = NodeId(other_than(n, p.head.index(), rng) as u32),
                    1 if r > 1 => c.rel = RelId(other_than(r, p.rel.index(), rng) as u32),
                    1 => continue,
                    _ => c.tail = NodeId(other_than(n, p.tail.index(), rng) as u32),
                }
                if !graph.contains(&c) {
                    return Ok(TripletSample {
                        head: c.head,
                        rel: c.rel,
                        tail: c.tail,
                        positive: false,
                    });
                }
            }
            Err(Error::Sampling(format!(
                "no non-positive corruption of ({}, {}, {}) after {MAX_CORRUPTION_RETRIES} draws",
                p.head.0, p.rel.0, p.tail.0
            )))
        })
        .collect()
}

fn bce_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn positive_count(samples: &[TripletSample]) -> Result<usize> {
    match samples.iter().filter(|s| s.positive).count() {
        0 => Err(Error::domain("link-prediction batch has no positive samples")),
        k => Ok(k),
    }
}

/// `-(1 / 2|E|) sum (y log s + (1 - y) log(1 - s))` with `|E|` the number
/// of positives in `samples`. `embeddings` row `k` belongs to `NodeId(k)`;
/// relation ids index the parameters' relation table.
pub fn link_prediction_loss(
    samples: &[TripletSample],
    embeddings: &Matrix,
    params: &RgcnAutoencoderParams,
) -> Result<f64> {
    let npos = positive_count(samples)?;
    let mut total = 0.0;
    for s in samples {
        let z = distmult_logit(
            embeddings.row(s.head.index()),
            s.rel.index(),
            embeddings.row(s.tail.index()),
            params,
        );
        total += bce_logit(z, if s.positive { 1.0 } else { 0.0 });
    }
    Ok(total / (2.0 * npos as f64))
}

/// Records the link-prediction loss on `tape` given the embedding node `h`.
pub fn link_loss_on_tape(
    tape: &mut Tape,
    params: &RgcnAutoencoderParams,
    h: Var,
    samples: &[TripletSample],
) -> Result<Var> {
    let npos = positive_count(samples)?;
    let idx = |f: fn(&TripletSample) -> usize| Rc::new(samples.iter().map(f).collect::<Vec<_>>());
    let diag = tape.param(&params.store, params.diag);
    let hh = tape.gather_rows(h, idx(|s| s.head.index()))?;
    let rr = tape.gather_rows(diag, idx(|s| s.rel.index()))?;
    let ht = tape.gather_rows(h, idx(|s| s.tail.index()))?;
    let prod = tape.hadamard(hh, rr)?;
    let prod = tape.hadamard(prod, ht)?;
    let logits = tape.row_sum(prod);
    let targets: Vec<f64> = samples.iter().map(|s| if s.positive { 1.0 } else { 0.0 }).collect();
    let mean = tape.bce_with_logits(logits, Rc::new(Matrix::column_vector(&targets)))?;
    Ok(tape.scale(mean, samples.len() as f64 / (2.0 * npos as f64)))
}

/// Full forward pass of encoder and loss over `g`, for gradient checks.
pub fn link_loss_tape(
    g: &MultiRelGraph,
    params: &RgcnAutoencoderParams,
    samples: &[TripletSample],
) -> Result<(Tape, Var)> {
    let (rows, adj) = bind_graph(g, params)?;
    let mut tape = Tape::new();
    let h = encode_on_tape(&mut tape, params, &rows, &adj)?;
    let loss = link_loss_on_tape(&mut tape, params, h, samples)?;
    Ok((tape, loss))
}

#[derive(Clone, Debug)]
pub struct TrainedAutoencoder {
    pub params: RgcnAutoencoderParams,
    /// Mean minibatch loss per completed epoch.
    pub losses: Vec<f64>,
}

/// Trains from a fresh initialisation seeded by `cfg.seed`.
pub fn train_autoencoder(g_prime: &MultiRelGraph, cfg: &RgcnConfig) -> Result<TrainedAutoencoder> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = RgcnAutoencoderParams::init(g_prime, cfg.dims, &mut rng)?;
    train_from(g_prime, params, cfg, &mut rng)
}

/// Continues training `params` on `g_prime`, whose relation ids must match
/// the parameters' relation table.
pub fn train_from<R: Rng + ?Sized>(
    g_prime: &MultiRelGraph,
    mut params: RgcnAutoencoderParams,
    cfg: &RgcnConfig,
    rng: &mut R,
) -> Result<TrainedAutoencoder> {
    if g_prime.triplet_count() == 0 {
        return Err(Error::config("cannot train on a graph without triplets"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    if g_prime.relation_names() != params.relation_names() {
        return Err(Error::config("graph relation table differs from the parameters"));
    }
    let (rows, adj) = bind_graph(g_prime, &params)?;
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), &params.store);
    let frozen = if cfg.freeze_node_features {
        vec![params.node_init]
    } else {
        Vec::new()
    };
    let mut positives = g_prime.triplets().to_vec();
    let mut losses = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        positives.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in positives.chunks(cfg.batch_size) {
            let mut samples: Vec<TripletSample> = batch.iter().copied().map(TripletSample::positive).collect();
            samples.extend(sample_negatives(batch, g_prime, rng)?);
            let mut tape = Tape::new();
            let h = encode_on_tape(&mut tape, &params, &rows, &adj)?;
            let loss = link_loss_on_tape(&mut tape, &params, h, &samples)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("link-prediction loss is {value}"),
                });
            }
            let grads = tape.backward(loss, &params.store)?;
            adam.step_except(&mut params.store, &grads, &frozen)?;
            if !params.store.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "parameters became non-finite".into(),
                });
            }
            total += value;
            batches += 1;
        }
        let epoch_loss = total / batches as f64;
        log::debug!("rgcn epoch {epoch}: loss {epoch_loss:.6}");
        losses.push(epoch_loss);
        if !best.is_finite() || epoch_loss < best - cfg.min_delta * best.abs() {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log::info!("rgcn: loss plateaued, stopping after epoch {epoch}");
                break;
            }
        }
    }
    Ok(TrainedAutoencoder { params, losses })
}

/// Removes a `fraction` of triplets from `g`. The returned graph keeps every
/// node and relation at its original id; the held-out triplets use the same
/// ids.
pub fn split_edges<R: Rng + ?Sized>(
    g: &MultiRelGraph,
    fraction: f64,
    rng: &mut R,
) -> Result<(MultiRelGraph, Vec<Triplet>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config(format!("held-out fraction {fraction} outside [0, 1)")));
    }
    let mut order: Vec<usize> = (0..g.triplet_count()).collect();
    order.shuffle(rng);
    let k = (fraction * order.len() as f64).round() as usize;
    let mut held = vec![false; order.len()];
    for &i in &order[..k] {
        held[i] = true;
    }
    let mut train = MultiRelGraph::new();
    for n in g.node_names() {
        train.add_node(n);
    }
    for r in g.relation_names() {
        train.add_relation(r);
    }
    let mut heldout = Vec::with_capacity(k);
    for (i, t) in g.triplets().iter().enumerate() {
        if held[i] {
            heldout.push(*t);
        } else {
            train.add_triplet(g.node_name(t.head), g.relation_name(t.rel), g.node_name(t.tail));
        }
    }
    Ok((train, heldout))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::domain("AUC needs at least one positive and one negative score"));
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += all[i..=j].iter().filter(|e| e.1).count() as f64 * avg_rank;
        i = j + 1;
    }
    let np = positive.len() as f64;
    let nn = negative.len() as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// AUC of DistMult logits for `samples`, embedding with message passing
/// over `message_graph` only.
pub fn link_prediction_auc(
    params: &RgcnAutoencoderParams,
    message_graph: &MultiRelGraph,
    samples: &[TripletSample],
) -> Result<f64> {
    let h = encode_graph(message_graph, params)?;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for s in samples {
        let z = distmult_logit(h.row(s.head.index()), s.rel.index(), h.row(s.tail.index()), params);
        if s.positive {
            pos.push(z);
        } else {
            neg.push(z);
        }
    }
    auc(&pos, &neg)
}
