//! Multi-relational directed graph with interned concept and relation
//! names, plus the seed-driven subgraph extractions.
//!
//! Distances used for subgraph extraction ignore edge direction; stored
//! triplets keep it.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub head: NodeId,
    pub rel: RelId,
    pub tail: NodeId,
}

/// Lowercases a concept and joins whitespace-separated words with `_`, so
/// `"Baking Oven"` and `"baking_oven"` intern to the same node.
pub fn normalize_concept(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Clone, Debug, Default)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }
}

/// Concept set used to seed subgraph extraction. Entries are normalised
/// with [`normalize_concept`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeedSet(BTreeSet<String>);

impl SeedSet {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        SeedSet(
            words
                .into_iter()
                .map(|w| normalize_concept(w.as_ref()))
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, w: &str) -> bool {
        self.0.contains(w)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn extend(&mut self, other: &SeedSet) {
        self.0.extend(other.0.iter().cloned());
    }
}

/// Directed labelled graph without duplicate triplets.
#[derive(Clone, Debug, Default)]
pub struct MultiRelGraph {
    nodes: Interner,
    relations: Interner,
    triplets: Vec<Triplet>,
    present: HashSet<Triplet>,
    out_adj: Vec<Vec<(RelId, NodeId)>>,
    in_adj: Vec<Vec<(RelId, NodeId)>>,
}

impl MultiRelGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns a node (normalised) and returns its id.
    pub fn add_node(&mut self, name: &str) -> NodeId {
        let id = self.nodes.intern(&normalize_concept(name));
        if id as usize == self.out_adj.len() {
            self.out_adj.push(Vec::new());
            self.in_adj.push(Vec::new());
        }
        NodeId(id)
    }

    pub fn add_relation(&mut self, name: &str) -> RelId {
        RelId(self.relations.intern(name.trim()))
    }

    /// Adds a triplet by name. Returns false when it was already present.
    pub fn add_triplet(&mut self, head: &str, relation: &str, tail: &str) -> bool {
        let h = self.add_node(head);
        let r = self.add_relation(relation);
        let t = self.add_node(tail);
        self.insert(Triplet { head: h, rel: r, tail: t })
    }

    fn insert(&mut self, t: Triplet) -> bool {
        if !self.present.insert(t) {
            return false;
        }
        self.triplets.push(t);
        self.out_adj[t.head.index()].push((t.rel, t.tail));
        self.in_adj[t.tail.index()].push((t.rel, t.head));
        true
    }

    pub fn node_count(&self) -> usize {
        self.nodes.names.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.names.len()
    }

    pub fn triplet_count(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty() && self.nodes.names.is_empty()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes.names[id.index()]
    }

    pub fn relation_name(&self, id: RelId) -> &str {
        &self.relations.names[id.index()]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes.get(&normalize_concept(name)).map(NodeId)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelId> {
        self.relations.get(name.trim()).map(RelId)
    }

    pub fn node_names(&self) -> &[String] {
        &self.nodes.names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relations.names
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count() as u32).map(NodeId)
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn contains(&self, t: &Triplet) -> bool {
        self.present.contains(t)
    }

    pub fn out_edges(&self, n: NodeId) -> &[(RelId, NodeId)] {
        &self.out_adj[n.index()]
    }

    pub fn in_edges(&self, n: NodeId) -> &[(RelId, NodeId)] {
        &self.in_adj[n.index()]
    }

    /// Nodes joined to `n` by an edge in either direction.
    pub fn undirected_neighbors(&self, n: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.out_adj[n.index()]
            .iter()
            .chain(&self.in_adj[n.index()])
            .map(|&(_, m)| m)
    }

    /// Triplets as name tuples.
    pub fn named_triplets(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.triplets.iter().map(|t| {
            (
                self.node_name(t.head),
                self.relation_name(t.rel),
                self.node_name(t.tail),
            )
        })
    }

    /// Triplet set by name, for comparing graphs with different id spaces.
    pub fn triplet_names(&self) -> BTreeSet<(String, String, String)> {
        self.named_triplets()
            .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
            .collect()
    }

    /// Builds a graph from a subset of this graph's triplets, interning in
    /// the order given.
    fn induced(&self, triplets: impl IntoIterator<Item = Triplet>) -> MultiRelGraph {
        let mut g = MultiRelGraph::new();
        for t in triplets {
            g.add_triplet(
                self.node_name(t.head),
                self.relation_name(t.rel),
                self.node_name(t.tail),
            );
        }
        g
    }

    /// Parses `head<TAB>relation<TAB>tail` lines. Blank lines are skipped and
    /// duplicates collapse.
    pub fn parse_triplets(raw: &str, origin: &Path) -> Result<MultiRelGraph> {
        let mut g = MultiRelGraph::new();
        for (n, line) in raw.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    origin,
                    n + 1,
                    format!("expected head<TAB>relation<TAB>tail, found {} fields", fields.len()),
                ));
            }
            if fields.iter().any(|f| f.trim().is_empty()) {
                return Err(Error::parse(origin, n + 1, "empty triplet field"));
            }
            g.add_triplet(fields[0], fields[1], fields[2]);
        }
        Ok(g)
    }

    pub fn load_triplets(path: impl AsRef<Path>) -> Result<MultiRelGraph> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_triplets(&raw, path)
    }

    pub fn to_triplet_text(&self) -> String {
        let mut out = String::new();
        for (h, r, t) in self.named_triplets() {
            out.push_str(h);
            out.push('\t');
            out.push_str(r);
            out.push('\t');
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn write_triplets(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_triplet_text()).map_err(|e| Error::io(path, e))
    }

    fn seed_ids(&self, seeds: &SeedSet) -> Vec<NodeId> {
        seeds.iter().filter_map(|s| self.nodes.get(s).map(NodeId)).collect()
    }
}

/// Every triplet with at least one endpoint in `seeds`. Seeds missing from
/// the graph are ignored.
pub fn aggregate_subgraph(g: &MultiRelGraph, seeds: &SeedSet) -> MultiRelGraph {
    let mut is_seed = vec![false; g.node_count()];
    for id in g.seed_ids(seeds) {
        is_seed[id.index()] = true;
    }
    g.induced(
        g.triplets
            .iter()
            .copied()
            .filter(|t| is_seed[t.head.index()] || is_seed[t.tail.index()]),
    )
}

/// Nodes of `g` within undirected distance 1 of any word in `w`.
pub fn vicinity(g: &MultiRelGraph, w: &SeedSet) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for id in g.seed_ids(w) {
        out.insert(id);
        out.extend(g.undirected_neighbors(id));
    }
    out
}

/// Triplets whose two endpoints both lie within undirected distance 1 of
/// `w`.
pub fn document_subgraph(g_prime: &MultiRelGraph, w: &SeedSet) -> MultiRelGraph {
    let near = vicinity(g_prime, w);
    let mut keep = Vec::new();
    for &u in &near {
        for &(rel, v) in g_prime.out_edges(u) {
            if near.contains(&v) {
                keep.push(Triplet { head: u, rel, tail: v });
            }
        }
    }
    g_prime.induced(keep)
}

/// Relations by descending triplet count, ties in name order.
pub fn relation_stats(g: &MultiRelGraph) -> Vec<(String, usize)> {
    let mut counts = vec![0usize; g.relation_count()];
    for t in g.triplets() {
        counts[t.rel.index()] += 1;
    }
    let mut stats: Vec<(String, usize)> = g
        .relation_names()
        .iter()
        .cloned()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .collect();
    stats.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn graph(edges: &[(&str, &str, &str)]) -> MultiRelGraph {
        let mut g = MultiRelGraph::new();
        for (h, r, t) in edges {
            g.add_triplet(h, r, t);
        }
        g
    }

    fn names(edges: &[(&str, &str, &str)]) -> BTreeSet<(String, String, String)> {
        edges
            .iter()
            .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
            .collect()
    }

    #[test]
    fn load_single_line() {
        let g = MultiRelGraph::parse_triplets("baking_oven\tAtLocation\tkitchen\n", Path::new("t")).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.relation_count(), 1);
        assert_eq!(g.triplet_count(), 1);
    }

    #[test]
    fn duplicates_and_empty_files() {
        let g = MultiRelGraph::parse_triplets("a\tR\tb\na\tR\tb\n", Path::new("t")).unwrap();
        assert_eq!(g.triplet_count(), 1);
        let g = MultiRelGraph::parse_triplets("", Path::new("t")).unwrap();
        assert!(g.is_empty());
        let err = MultiRelGraph::parse_triplets("a\tR\tb\na R b\n", Path::new("t")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn concepts_are_normalised() {
        let mut g = MultiRelGraph::new();
        g.add_triplet("Baking Oven", "AtLocation", "kitchen");
        assert!(g.node_id("baking_oven").is_some());
        assert!(!g.add_triplet("baking_oven", "AtLocation", "Kitchen"));
    }

    #[test]
    fn aggregate_chain() {
        let g = graph(&[("a", "R", "b"), ("b", "R", "c")]);
        assert_eq!(aggregate_subgraph(&g, &SeedSet::new(["b"])).triplet_count(), 2);
        let only_a = aggregate_subgraph(&g, &SeedSet::new(["a"]));
        assert_eq!(only_a.triplet_names(), names(&[("a", "R", "b")]));
        assert!(aggregate_subgraph(&g, &SeedSet::new(["zzz"])).is_empty());
    }

    #[test]
    fn aggregate_star() {
        let edges: Vec<(String, String)> = (1..=5).map(|i| ("h".into(), format!("l{i}"))).collect();
        let mut g = MultiRelGraph::new();
        for (h, l) in &edges {
            g.add_triplet(h, "RelatedTo", l);
        }
        assert_eq!(aggregate_subgraph(&g, &SeedSet::new(["h"])).triplet_count(), 5);
        assert_eq!(aggregate_subgraph(&g, &SeedSet::new(["l1"])).triplet_count(), 1);
    }

    #[test]
    fn document_subgraph_on_path() {
        let g = graph(&[("a", "R", "b"), ("b", "R", "c"), ("c", "R", "d")]);
        let one = document_subgraph(&g, &SeedSet::new(["a"]));
        assert_eq!(one.triplet_names(), names(&[("a", "R", "b")]));
        let both = document_subgraph(&g, &SeedSet::new(["a", "d"]));
        assert_eq!(both.triplet_names(), g.triplet_names());
        assert!(document_subgraph(&g, &SeedSet::new(["x", "y"])).is_empty());
    }

    #[test]
    fn relation_statistics() {
        let g = graph(&[
            ("a", "RelatedTo", "b"),
            ("b", "RelatedTo", "c"),
            ("c", "RelatedTo", "d"),
            ("a", "IsA", "d"),
        ]);
        assert_eq!(
            relation_stats(&g),
            vec![("RelatedTo".to_string(), 3), ("IsA".to_string(), 1)]
        );
        assert!(relation_stats(&MultiRelGraph::new()).is_empty());
    }

    #[test]
    fn adjacency_mirrors_triplets() {
        let g = graph(&[("a", "R", "b"), ("a", "S", "b"), ("b", "R", "a")]);
        let a = g.node_id("a").unwrap();
        assert_eq!(g.out_edges(a).len(), 2);
        assert_eq!(g.in_edges(a).len(), 1);
        let total_out: usize = g.nodes().map(|n| g.out_edges(n).len()).sum();
        assert_eq!(total_out, g.triplet_count());
    }

    fn arb_graph() -> impl Strategy<Value = MultiRelGraph> {
        proptest::collection::vec((0u8..12, 0u8..3, 0u8..12), 0..40).prop_map(|edges| {
            let mut g = MultiRelGraph::new();
            for (h, r, t) in edges {
                g.add_triplet(&format!("n{h}"), &format!("r{r}"), &format!("n{t}"));
            }
            g
        })
    }

    fn arb_seeds() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec((0u8..14).prop_map(|i| format!("n{i}")), 0..6)
    }

    proptest! {
        #[test]
        fn document_subgraph_is_monotone(g in arb_graph(), a in arb_seeds(), b in arb_seeds()) {
            let small = SeedSet::new(&a);
            let big = SeedSet::new(a.iter().chain(&b));
            let s1 = document_subgraph(&g, &small).triplet_names();
            let s2 = document_subgraph(&g, &big).triplet_names();
            prop_assert!(s1.is_subset(&s2));
            prop_assert!(s2.is_subset(&g.triplet_names()));
        }

        #[test]
        fn retained_nodes_are_near_seeds(g in arb_graph(), w in arb_seeds()) {
            let seeds = SeedSet::new(&w);
            let near: BTreeSet<String> = vicinity(&g, &seeds)
                .into_iter()
                .map(|n| g.node_name(n).to_string())
                .collect();
            let sub = document_subgraph(&g, &seeds);
            for name in sub.node_names() {
                prop_assert!(near.contains(name));
            }
        }

        #[test]
        fn aggregate_with_all_nodes_is_identity(g in arb_graph()) {
            let all = SeedSet::new(g.node_names());
            let sub = aggregate_subgraph(&g, &all);
            prop_assert_eq!(sub.triplets(), g.triplets());
            prop_assert_eq!(sub.node_names(), g.node_names());
        }
    }
}
