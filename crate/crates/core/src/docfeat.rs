//! Per-document knowledge features: the mean embedding of the unique nodes
//! of a document's subgraph, with an on-disk cache.
//!
//! Cache layout (text, version 1):
//!
//! ```text
//! # kgda-features v1
//! dim=<d>
//! params=<hex sha256 of the autoencoder checkpoint>
//! scope=<subgraph|full>
//! <doc id>\t<node count>\t<d space-separated values>
//! ```
//!
//! Values are written in Rust's shortest round-trip form, so a reloaded
//! feature is bitwise equal to the computed one.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::checkpoint::write_atomic;
use crate::corpus::{content_words, ContentTagger, Document};
use crate::error::{Error, Result};
use crate::kgraph::{document_subgraph, MultiRelGraph, SeedSet};
use crate::numkit::Matrix;
use crate::rgcn::{encode_graph, encode_nodes, RgcnAutoencoderParams};

const CACHE_HEADER: &str = "# kgda-features v1";

#[derive(Clone, Debug, PartialEq)]
pub struct GraphFeature {
    pub doc_id: String,
    pub vector: Vec<f64>,
    /// Nodes averaged; zero exactly when the vector is the zero fallback.
    pub node_count: usize,
}

/// Which edges the encoder passes messages over during extraction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PassScope {
    /// Only the document subgraph's own edges.
    #[default]
    Subgraph,
    /// The whole aggregated graph; document nodes are then read out.
    Full,
}

impl fmt::Display for PassScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PassScope::Subgraph => "subgraph",
            PassScope::Full => "full",
        })
    }
}

impl FromStr for PassScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subgraph" => Ok(PassScope::Subgraph),
            "full" => Ok(PassScope::Full),
            other => Err(Error::config(format!("unknown pass scope {other:?}"))),
        }
    }
}

fn mean_rows<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> (Vec<f64>, usize) {
    let mut sum = vec![0.0; dim];
    let mut n = 0;
    for row in rows {
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
        n += 1;
    }
    if n > 0 {
        sum.iter_mut().for_each(|s| *s /= n as f64);
    }
    (sum, n)
}

/// Mean embedding of the nodes of the subgraph of `g_prime` around `words`.
pub fn feature_for_words(
    words: &SeedSet,
    g_prime: &MultiRelGraph,
    params: &RgcnAutoencoderParams,
) -> Result<(Vec<f64>, usize)> {
    let sub = document_subgraph(g_prime, words);
    let dim = params.dims().output;
    if sub.node_count() == 0 {
        return Ok((vec![0.0; dim], 0));
    }
    let emb = encode_nodes(&sub, params)?;
    Ok(mean_rows(emb.values().map(Vec::as_slice), dim))
}

pub fn extract(
    doc: &Document,
    g_prime: &MultiRelGraph,
    params: &RgcnAutoencoderParams,
    tagger: &dyn ContentTagger,
) -> Result<GraphFeature> {
    let words = SeedSet::new(content_words(doc, tagger));
    let (vector, node_count) = feature_for_words(&words, g_prime, params)?;
    Ok(GraphFeature {
        doc_id: doc.id.clone(),
        vector,
        node_count,
    })
}

/// Features of many documents plus what the cache saved.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub dim: usize,
    pub features: BTreeMap<String, GraphFeature>,
    pub computed: usize,
    pub reused: usize,
}

impl FeatureTable {
    /// Reads a cache file written by [`extract_all`].
    pub fn load(path: impl AsRef<Path>) -> Result<FeatureTable> {
        let c = read_cache(path.as_ref())?;
        Ok(FeatureTable {
            dim: c.dim,
            computed: 0,
            reused: c.features.len(),
            features: c.features,
        })
    }

    pub fn get(&self, doc_id: &str) -> Result<&GraphFeature> {
        self.features
            .get(doc_id)
            .ok_or_else(|| Error::config(format!("no graph feature for document {doc_id:?}")))
    }

    /// Stacks the features of `docs` into a `n x dim` matrix.
    pub fn matrix(&self, docs: &[&Document]) -> Result<Matrix> {
        let mut m = Matrix::zeros(docs.len(), self.dim);
        for (r, d) in docs.iter().enumerate() {
            m.row_mut(r).copy_from_slice(&self.get(&d.id)?.vector);
        }
        Ok(m)
    }

    /// Fraction of documents whose subgraph was non-empty.
    pub fn coverage(&self) -> f64 {
        if self.features.is_empty() {
            return 0.0;
        }
        let hit = self.features.values().filter(|f| f.node_count > 0).count();
        hit as f64 / self.features.len() as f64
    }
}

struct CacheContents {
    dim: usize,
    checksum: String,
    scope: String,
    features: BTreeMap<String, GraphFeature>,
}

fn read_cache(path: &Path) -> Result<CacheContents> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = raw.lines().enumerate();
    let mut header = |key: &str| -> Result<String> {
        let (n, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, "truncated feature cache header"))?;
        match key {
            "" if line == CACHE_HEADER => Ok(String::new()),
            "" => Err(Error::parse(path, n + 1, "not a feature cache")),
            _ => line
                .strip_prefix(key)
                .and_then(|l| l.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| Error::parse(path, n + 1, format!("expected {key}=..."))),
        }
    };
    header("")?;
    let dim: usize = header("dim")?
        .parse()
        .map_err(|_| Error::parse(path, 2, "bad dim"))?;
    let checksum = header("params")?;
    let scope = header("scope")?;
    let mut features = BTreeMap::new();
    for (n, line) in lines {
        let bad = |m: &str| Error::parse(path, n + 1, m.to_string());
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(count), Some(values)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad("expected id<TAB>count<TAB>values"));
        };
        let node_count: usize = count.parse().map_err(|_| bad("bad node count"))?;
        let vector: Vec<f64> = values
            .split(' ')
            .filter(|v| !v.is_empty())
            .map(|v| v.parse().map_err(|_| bad("bad value")))
            .collect::<Result<_>>()?;
        if vector.len() != dim {
            return Err(bad("vector length differs from header dim"));
        }
        features.insert(
            id.to_string(),
            GraphFeature {
                doc_id: id.to_string(),
                vector,
                node_count,
            },
        );
    }
    Ok(CacheContents {
        dim,
        checksum,
        scope,
        features,
    })
}

fn write_cache(path: &Path, dim: usize, checksum: &str, scope: PassScope, table: &BTreeMap<String, GraphFeature>) -> Result<()> {
    let mut out = format!("{CACHE_HEADER}\ndim={dim}\nparams={checksum}\nscope={scope}\n");
    for f in table.values() {
        let values: Vec<String> = f.vector.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{}\t{}\t{}\n", f.doc_id, f.node_count, values.join(" ")));
    }
    write_atomic(path, out.as_bytes())
}

/// Features for every document, computed in parallel. With a cache path,
/// entries recorded for the same parameters and scope are reused and the
/// merged table is written back.
pub fn extract_all(
    docs: &[Document],
    g_prime: &MultiRelGraph,
    params: &RgcnAutoencoderParams,
    tagger: &(dyn ContentTagger + Sync),
    cache_path: Option<&Path>,
    scope: PassScope,
) -> Result<FeatureTable> {
    let dim = params.dims().output;
    let checksum = params.checksum();
    let mut cached = BTreeMap::new();
    if let Some(path) = cache_path.filter(|p| p.exists()) {
        match read_cache(path) {
            Ok(c) if c.checksum == checksum && c.dim == dim && c.scope == scope.to_string() => {
                cached = c.features;
            }
            Ok(_) => log::warn!(
                "{}: feature cache was built for other parameters; recomputing",
                path.display()
            ),
            Err(e) => log::warn!("unreadable feature cache, recomputing: {e}"),
        }
    }
    let full = match scope {
        PassScope::Full => Some(encode_graph(g_prime, params)?),
        PassScope::Subgraph => None,
    };
    let todo: Vec<&Document> = docs.iter().filter(|d| !cached.contains_key(&d.id)).collect();
    let fresh: Vec<GraphFeature> = todo
        .par_iter()
        .map(|doc| match &full {
            None => extract(doc, g_prime, params, tagger),
            Some(h) => {
                let words = SeedSet::new(content_words(doc, tagger));
                let sub = document_subgraph(g_prime, &words);
                let rows = sub.node_names().iter().filter_map(|n| g_prime.node_id(n));
                let (vector, node_count) = mean_rows(rows.map(|n| h.row(n.index())), dim);
                Ok(GraphFeature {
                    doc_id: doc.id.clone(),
                    vector,
                    node_count,
                })
            }
        })
        .collect::<Result<_>>()?;
    let computed = fresh.len();
    let reused = docs.len() - todo.len();
    let mut all = cached;
    for f in fresh {
        all.insert(f.doc_id.clone(), f);
    }
    if let Some(path) = cache_path {
        write_cache(path, dim, &checksum, scope, &all)?;
    }
    let wanted: BTreeMap<String, GraphFeature> = docs
        .iter()
        .filter_map(|d| all.get(&d.id).map(|f| (d.id.clone(), f.clone())))
        .collect();
    Ok(FeatureTable {
        dim,
        features: wanted,
        computed,
        reused,
    })
}
