//! Oracles shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use std::collections::BTreeSet;

use kgda_core::kgraph::MultiRelGraph;
use kgda_core::numkit::{Matrix, ParamStore, Tape, Var};
use kgda_core::Result;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_RTOL: f64 = 1e-4;
/// Denominator floor for the relative error, so that gradients which are
/// zero up to rounding compare by absolute difference.
pub const FD_FLOOR: f64 = 1e-5;

#[derive(Debug, Default)]
pub struct FdReport {
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

/// Central differences over every scalar of every parameter, compared with
/// the tape's gradients scaled by `analytic_scale`. Coordinates whose
/// perturbation changes any ReLU sign are skipped.
pub fn fd_check<F>(store: &ParamStore, f: F) -> FdReport
where
    F: Fn(&ParamStore) -> Result<(Tape, Var)>,
{
    let (tape, loss) = f(store).expect("forward");
    let pattern = tape.relu_pattern();
    let grads = tape.backward(loss, store).expect("backward");
    let mut report = FdReport::default();
    let ids: Vec<_> = store.iter().map(|(id, name, _)| (id, name.to_string())).collect();
    for (id, name) in ids {
        let n = store.get(id).len();
        for k in 0..n {
            let eval = |delta: f64| {
                let mut s = store.clone();
                s.get_mut(id).as_mut_slice()[k] += delta;
                let (t, l) = f(&s).expect("forward");
                (t.scalar(l), t.relu_pattern())
            };
            let (up, p_up) = eval(FD_STEP);
            let (down, p_down) = eval(-FD_STEP);
            if p_up != pattern || p_down != pattern {
                report.skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = grads.get(id).as_slice()[k];
            let e = rel_err(analytic, numeric);
            report.checked += 1;
            report.worst = report.worst.max(e);
            if e > FD_RTOL {
                report.failures.push(format!("{name}[{k}]: analytic {analytic} numeric {numeric}"));
            }
        }
    }
    report
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::uniform(rows, cols, 1.0, rng)
}

/// Triplets of `g` as name tuples.
pub fn names(g: &MultiRelGraph) -> BTreeSet<(String, String, String)> {
    g.triplet_names()
}

/// Undirected adjacency over node names, built from scratch.
fn neighbours(g: &MultiRelGraph, n: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (h, _, t) in g.named_triplets() {
        if h == n {
            out.insert(t.to_string());
        }
        if t == n {
            out.insert(h.to_string());
        }
    }
    out
}

/// Every triplet with an endpoint in `seeds`.
pub fn oracle_aggregate(g: &MultiRelGraph, seeds: &BTreeSet<String>) -> BTreeSet<(String, String, String)> {
    g.named_triplets()
        .filter(|(h, _, t)| seeds.contains(*h) || seeds.contains(*t))
        .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
        .collect()
}

/// Breadth-first search to depth 1 from the seeds present in `g`, then all
/// triplets with both endpoints inside the visited set.
pub fn oracle_document_subgraph(g: &MultiRelGraph, seeds: &BTreeSet<String>) -> BTreeSet<(String, String, String)> {
    let present: BTreeSet<String> = g.node_names().iter().cloned().collect();
    let mut visited: BTreeSet<String> = BTreeSet::new();
    let mut frontier: Vec<(String, usize)> = seeds
        .iter()
        .filter(|s| present.contains(*s))
        .map(|s| (s.clone(), 0))
        .collect();
    while let Some((n, depth)) = frontier.pop() {
        if !visited.insert(n.clone()) && depth > 0 {
            continue;
        }
        if depth < 1 {
            for m in neighbours(g, &n) {
                frontier.push((m, depth + 1));
            }
        }
    }
    g.named_triplets()
        .filter(|(h, _, t)| visited.contains(*h) && visited.contains(*t))
        .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
        .collect()
}

/// At most 50 nodes and 5 relations.
pub fn random_graph<R: Rng>(rng: &mut R) -> MultiRelGraph {
    let n = rng.gen_range(1..=50);
    let r = rng.gen_range(1..=5);
    let edges = rng.gen_range(0..=3 * n);
    let mut g = MultiRelGraph::new();
    for _ in 0..edges {
        let h = rng.gen_range(0..n);
        let t = rng.gen_range(0..n);
        g.add_triplet(&format!("c{h}"), &format!("r{}", rng.gen_range(0..r)), &format!("c{t}"));
    }
    g
}

pub fn random_seeds<R: Rng>(rng: &mut R) -> BTreeSet<String> {
    // Indices up to 60 so some seeds miss the graph.
    (0..rng.gen_range(0..8)).map(|_| format!("c{}", rng.gen_range(0..60))).collect()
}
