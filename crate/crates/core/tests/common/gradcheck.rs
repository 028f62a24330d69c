//! Finite-difference suites for every tape operation, every variant
//! objective and the link-prediction loss.

use std::rc::Rc;

use super::{fd_check, random_matrix, FdReport, FD_RTOL};
use kgda_core::adversary::{objective_on_tape, AdversaryParams, Batch, Examples, Mode, Variant, VariantConfig};
use kgda_core::corpus::{BowVector, Label};
use kgda_core::kgraph::MultiRelGraph;
use kgda_core::numkit::{Matrix, ParamId, ParamStore, SparseMatrix, Tape, Var};
use kgda_core::rgcn::{link_loss_tape, sample_negatives, RgcnAutoencoderParams, RgcnDims, TripletSample};
use kgda_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: u64 = 20;

/// `Ok` with a one-line summary, or `Err` describing the first problem.
pub fn verdict(what: &str, reports: &[FdReport]) -> Result<String, String> {
    let checked: usize = reports.iter().map(|r| r.checked).sum();
    let skipped: usize = reports.iter().map(|r| r.skipped).sum();
    let failures: Vec<&String> = reports.iter().flat_map(|r| &r.failures).collect();
    let worst = reports.iter().map(|r| r.worst).fold(0.0, f64::max);
    let usable = reports.iter().filter(|r| r.checked > 0).count();
    if let Some(first) = failures.first() {
        return Err(format!(
            "{what}: {} mismatches (worst rel err {worst:e}), first: {first}",
            failures.len()
        ));
    }
    if (usable as u64) < INSTANCES || worst > FD_RTOL {
        return Err(format!("{what}: only {usable} instances had checkable coordinates"));
    }
    Ok(format!(
        "{what}: {usable} instances, {checked} coordinates, {skipped} skipped at ReLU kinks, worst rel err {worst:.1e}"
    ))
}

fn dims<R: Rng>(rng: &mut R) -> (usize, usize) {
    (rng.gen_range(1..5), rng.gen_range(1..5))
}

/// Runs `build` on `INSTANCES` random stores. `build` adds parameters to
/// the store and returns the scalar function under test.
fn check_op<B, F>(build: B) -> Vec<FdReport>
where
    B: Fn(&mut ChaCha8Rng, &mut ParamStore) -> F,
    F: Fn(&ParamStore) -> Result<(Tape, Var)>,
{
    (0..INSTANCES)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParamStore::new();
            let f = build(&mut rng, &mut store);
            fd_check(&store, f)
        })
        .collect()
}

/// Projects a matrix-valued node onto a fixed random direction.
fn project(tape: &mut Tape, x: Var, weights: &Matrix) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let h = tape.hadamard(x, w)?;
    Ok(tape.sum(h))
}

fn add_random<R: Rng>(store: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut R) -> ParamId {
    store.add(name, random_matrix(rows, cols, rng)).unwrap()
}

macro_rules! unary_op {
    ($name:ident, |$tape:ident, $x:ident| $body:expr) => {
        pub fn $name() -> Vec<FdReport> {
            check_op(|rng, store| {
                let (r, c) = dims(rng);
                let id = add_random(store, "x", r, c, rng);
                let proj = random_matrix(r, c, rng);
                move |s: &ParamStore| {
                    let mut $tape = Tape::new();
                    let $x = $tape.param(s, id);
                    let y = $body?;
                    let out = project(&mut $tape, y, &proj)?;
                    Ok(($tape, out))
                }
            })
        }
    };
}

unary_op!(grad_scale, |t, x| Ok::<_, kgda_core::Error>(t.scale(x, -1.7)));
unary_op!(grad_relu, |t, x| Ok::<_, kgda_core::Error>(t.relu(x)));
unary_op!(grad_sigmoid, |t, x| Ok::<_, kgda_core::Error>(t.sigmoid(x)));
unary_op!(grad_row_sum, |t, x| {
    let s = t.row_sum(x);
    let ones = t.constant(Matrix::filled(1, t.value(x).cols(), 1.0));
    t.matmul(s, ones)
});
unary_op!(grad_reverse_identity, |t, x| Ok::<_, kgda_core::Error>(t.reverse_gradient(x, 1.0)));
unary_op!(grad_dropout, |t, x| {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    t.dropout(x, 0.4, true, &mut rng)
});
unary_op!(grad_gather_rows, |t, x| {
    let r = t.value(x).rows();
    let idx: Vec<usize> = (0..r).rev().chain(0..r).collect();
    let g = t.gather_rows(x, Rc::new(idx))?;
    let top: Vec<usize> = (0..r).collect();
    t.gather_rows(g, Rc::new(top))
});

pub fn grad_sum() -> Vec<FdReport> {
    check_op(|rng, store| {
        let (r, c) = dims(rng);
        let x = add_random(store, "x", r, c, rng);
        move |s: &ParamStore| {
            let mut t = Tape::new();
            let x = t.param(s, x);
            let sq = t.hadamard(x, x)?;
            let out = t.sum(sq);
            Ok((t, out))
        }
    })
}

pub fn grad_matmul() -> Vec<FdReport> {
    check_op(|rng, store| {
        let (r, k) = dims(rng);
        let c = rng.gen_range(1..5);
        let a = add_random(store, "a", r, k, rng);
        let b = add_random(store, "b", k, c, rng);
        let proj = random_matrix(r, c, rng);
        move |s: &ParamStore| {
            let mut t = Tape::new();
            let (a, b) = (t.param(s, a), t.param(s, b));
            let y = t.matmul(a, b)?;
            let out = project(&mut t, y, &proj)?;
            Ok((t, out))
        }
    })
}

macro_rules! binary_op {
    ($name:ident, $method:ident) => {
        pub fn $name() -> Vec<FdReport> {
            check_op(|rng, store| {
                let (r, c) = dims(rng);
                let a = add_random(store, "a", r, c, rng);
                let b = add_random(store, "b", r, c, rng);
                let proj = random_matrix(r, c, rng);
                move |s: &ParamStore| {
                    let mut t = Tape::new();
                    let (a, b) = (t.param(s, a), t.param(s, b));
                    let y = t.$method(a, b)?;
                    let out = project(&mut t, y, &proj)?;
                    Ok((t, out))
                }
            })
        }
    };
}

binary_op!(grad_add, add);
binary_op!(grad_sub, sub);
binary_op!(grad_hadamard, hadamard);

pub fn grad_add_row() -> Vec<FdReport> {
    check_op(|rng, store| {
        let (r, c) = dims(rng);
        let x = add_random(store, "x", r, c, rng);
        let b = add_random(store, "b", 1, c, rng);
        let proj = random_matrix(r, c, rng);
        move |s: &ParamStore| {
            let mut t = Tape::new();
            let (x, b) = (t.param(s, x), t.param(s, b));
            let y = t.add_row(x, b)?;
            let out = project(&mut t, y, &proj)?;
            Ok((t, out))
        }
    })
}

pub fn grad_concat_cols() -> Vec<FdReport> {
    check_op(|rng, store| {
        let (r, c) = dims(rng);
        let c2 = rng.gen_range(1..4);
        let a = add_random(store, "a", r, c, rng);
        let b = add_random(store, "b", r, c2, rng);
        let proj = random_matrix(r, c + c2, rng);
        move |s: &ParamStore| {
            let mut t = Tape::new();
            let (a, b) = (t.param(s, a), t.param(s, b));
            let y = t.concat_cols(a, b)?;
            let out = project(&mut t, y, &proj)?;
            Ok((t, out))
        }
    })
}

pub fn grad_sparse_mul() -> Vec<FdReport> {
    check_op(|rng, store| {
        let (n, c) = dims(rng);
        let m = rng.gen_range(1..5);
        let mut entries = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if rng.gen_bool(0.5) {
                    entries.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        let a = Rc::new(SparseMatrix::from_triples(m, n, &entries).unwrap());
        let x = add_random(store, "x", n, c, rng);
        let proj = random_matrix(m, c, rng);
        move |s: &ParamStore| {
            let mut t = Tape::new();
            let x = t.param(s, x);
            let y = t.sparse_mul(a.clone(), x)?;
            let out = project(&mut t, y, &proj)?;
            Ok((t, out))
        }
    })
}

pub fn grad_softmax_ce() -> Vec<FdReport> {
    check_op(|rng, store| {
        let (r, _) = dims(rng);
        let k = rng.gen_range(2..5);
        let x = store.add("x", Matrix::uniform(r, k, 3.0, rng)).unwrap();
        let labels = Rc::new((0..r).map(|_| rng.gen_range(0..k)).collect::<Vec<_>>());
        move |s: &ParamStore| {
            let mut t = Tape::new();
            let x = t.param(s, x);
            let out = t.softmax_ce(x, labels.clone())?;
            Ok((t, out))
        }
    })
}

pub fn grad_bce_with_logits() -> Vec<FdReport> {
    check_op(|rng, store| {
        let (r, _) = dims(rng);
        let x = store.add("x", Matrix::uniform(r, 1, 4.0, rng)).unwrap();
        let y: Vec<f64> = (0..r).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let y = Rc::new(Matrix::column_vector(&y));
        move |s: &ParamStore| {
            let mut t = Tape::new();
            let x = t.param(s, x);
            let out = t.bce_with_logits(x, y.clone())?;
            Ok((t, out))
        }
    })
}

pub fn grad_mse() -> Vec<FdReport> {
    check_op(|rng, store| {
        let (r, c) = dims(rng);
        let x = add_random(store, "x", r, c, rng);
        let target = Rc::new(random_matrix(r, c, rng));
        move |s: &ParamStore| {
            let mut t = Tape::new();
            let x = t.param(s, x);
            let out = t.mse(x, target.clone())?;
            Ok((t, out))
        }
    })
}

/// Four-example batch (two per domain) with graph features.
pub fn toy_batch(rng: &mut ChaCha8Rng, bow_dim: usize, graph_dim: usize) -> (Examples, Examples) {
    let make = |rng: &mut ChaCha8Rng, labelled: bool| {
        let bow = (0..2)
            .map(|_| {
                let v: Vec<f64> = (0..bow_dim).map(|_| rng.gen_range(0.0..1.0)).collect();
                BowVector::from_dense(&v).unwrap()
            })
            .collect();
        Examples {
            ids: vec!["a".into(), "b".into()],
            bow,
            graph: Some(Matrix::uniform(2, graph_dim, 1.0, rng)),
            labels: if labelled {
                vec![Some(Label::Positive), Some(Label::Negative)]
            } else {
                vec![None, None]
            },
        }
    };
    (make(rng, true), make(rng, false))
}

pub fn check_variant(variant: Variant) -> Vec<FdReport> {
    let (bow_dim, graph_dim, hidden) = (5, 4, 3);
    (0..INSTANCES)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let (src, tgt) = toy_batch(&mut rng, bow_dim, graph_dim);
            let batch = Batch::assemble(&src, &[0, 1], &tgt, &[0, 1]).unwrap();
            let params = AdversaryParams::init(variant, bow_dim, graph_dim, hidden, &mut rng).unwrap();
            let cfg = VariantConfig {
                variant,
                gamma: 0.7,
                hidden,
                ..Default::default()
            };
            fd_check(params.store(), |s| {
                let mut p = params.clone();
                *p.store_mut() = s.clone();
                let mut tape = Tape::new();
                let mut drop_rng = ChaCha8Rng::seed_from_u64(seed);
                // Multiplier 1 makes the reversal edge an identity, so the
                // tape gradient must equal the numerical one.
                let obj = objective_on_tape(&mut tape, &p, &batch, &cfg, 1.0, Mode::Train(&mut drop_rng))?;
                Ok((tape, obj.total))
            })
        })
        .collect()
}

fn random_graph(rng: &mut ChaCha8Rng) -> MultiRelGraph {
    let mut g = MultiRelGraph::new();
    let n = rng.gen_range(3..7);
    let r = rng.gen_range(1..3);
    for i in 0..n {
        g.add_node(&format!("n{i}"));
    }
    for _ in 0..rng.gen_range(3..9) {
        let h = rng.gen_range(0..n);
        let t = rng.gen_range(0..n);
        let rel = rng.gen_range(0..r);
        g.add_triplet(&format!("n{h}"), &format!("r{rel}"), &format!("n{t}"));
    }
    g
}

pub fn grad_link_prediction_loss() -> Vec<FdReport> {
    (0..INSTANCES)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
            let g = random_graph(&mut rng);
            let dims = RgcnDims {
                input: 3,
                hidden: 4,
                output: 3,
            };
            let params = RgcnAutoencoderParams::init(&g, dims, &mut rng).unwrap();
            let pos: Vec<_> = g.triplets().to_vec();
            let mut samples: Vec<TripletSample> = pos.iter().copied().map(TripletSample::positive).collect();
            if let Ok(neg) = sample_negatives(&pos, &g, &mut rng) {
                samples.extend(neg);
            }
            fd_check(params.store(), |s| {
                let mut p = params.clone();
                *p.store_mut() = s.clone();
                link_loss_tape(&g, &p, &samples)
            })
        })
        .collect()
}

pub type Suite = (&'static str, fn() -> Vec<FdReport>);

pub fn suites() -> Vec<Suite> {
    vec![
        ("matmul", grad_matmul),
        ("add", grad_add),
        ("sub", grad_sub),
        ("add_row", grad_add_row),
        ("hadamard", grad_hadamard),
        ("scale", grad_scale),
        ("relu", grad_relu),
        ("sigmoid", grad_sigmoid),
        ("dropout", grad_dropout),
        ("concat_cols", grad_concat_cols),
        ("gather_rows", grad_gather_rows),
        ("sparse_mul", grad_sparse_mul),
        ("row_sum", grad_row_sum),
        ("sum", grad_sum),
        ("reverse_gradient", grad_reverse_identity),
        ("softmax_ce", grad_softmax_ce),
        ("bce_with_logits", grad_bce_with_logits),
        ("mse", grad_mse),
        ("objective dann", || check_variant(Variant::Dann)),
        ("objective dann_plus", || check_variant(Variant::DannPlus)),
        ("objective kingdom_full", || check_variant(Variant::KingdomFull)),
        ("objective v1", || check_variant(Variant::V1)),
        ("objective v2", || check_variant(Variant::V2)),
        ("objective v3", || check_variant(Variant::V3)),
        ("link prediction loss", grad_link_prediction_loss),
    ]
}
