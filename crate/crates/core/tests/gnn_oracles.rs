//! Brute-force dense oracles for the three encoder layers, plus structural
//! properties: permutation equivariance, two-layer locality, and an
//! end-to-end gradient check through encode -> predict -> loss.

use std::rc::Rc;

use asbench_core::gnn::{
    encode, gat_layer, gat_support, gcn_layer, gcn_normalized_adjacency, mean_adjacency,
    pair_inputs, predict, sage_layer, EncoderKind, EncoderSupport, GnnEncoder, MlpHead,
    GAT_LEAKY_SLOPE,
};
use asbench_core::graph::AsGraph;
use asbench_core::numerics::{Activation, Matrix, Tape};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_graph(rng: &mut ChaCha8Rng, n: u32, p: f64) -> AsGraph {
    loop {
        let mut edges = Vec::new();
        for a in 1..=n {
            for b in (a + 1)..=n {
                if rng.random_range(0.0..1.0) < p {
                    edges.push((a, b));
                }
            }
        }
        // keep every node present by chaining stragglers
        let mut present = vec![false; n as usize + 1];
        for &(a, b) in &edges {
            present[a as usize] = true;
            present[b as usize] = true;
        }
        for v in 1..=n {
            if !present[v as usize] {
                let other = if v == 1 { 2 } else { v - 1 };
                edges.push((other.min(v), other.max(v)));
            }
        }
        if !edges.is_empty() {
            return AsGraph::from_edges(edges).unwrap();
        }
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn dense_gcn(g: &AsGraph, h: &Matrix, w: &Matrix) -> Matrix {
    let n = g.node_count();
    // A + I, then symmetric normalization by the self-loop degrees
    let mut a_hat = Matrix::zeros(n, n);
    for i in 0..n {
        let di = (g.degree(i) + 1) as f64;
        for &j in g.neighbors(i) {
            let dj = (g.degree(j) + 1) as f64;
            a_hat.set(i, j, 1.0 / (di * dj).sqrt());
        }
        a_hat.set(i, i, 1.0 / di);
    }
    a_hat.matmul(h).matmul(w).map(relu)
}

fn dense_sage(g: &AsGraph, h: &Matrix, w: &Matrix) -> Matrix {
    let n = g.node_count();
    let f = h.cols();
    let mut cat = Matrix::zeros(n, 2 * f);
    for i in 0..n {
        for c in 0..f {
            cat.set(i, c, h.get(i, c));
        }
        let hood = g.neighbors(i);
        if !hood.is_empty() {
            for c in 0..f {
                let mean: f64 =
                    hood.iter().map(|&j| h.get(j, c)).sum::<f64>() / hood.len() as f64;
                cat.set(i, f + c, mean);
            }
        }
    }
    cat.matmul(w).map(relu)
}

fn dense_gat(g: &AsGraph, h: &Matrix, w: &Matrix, a: &Matrix) -> Matrix {
    let n = g.node_count();
    let f = w.cols();
    let wh = h.matmul(w);
    let score = |i: usize, j: usize| {
        let mut e = 0.0;
        for c in 0..f {
            e += a.get(c, 0) * wh.get(i, c) + a.get(f + c, 0) * wh.get(j, c);
        }
        if e > 0.0 {
            e
        } else {
            GAT_LEAKY_SLOPE * e
        }
    };
    let mut out = Matrix::zeros(n, f);
    for i in 0..n {
        let mut hood: Vec<usize> = g.neighbors(i).to_vec();
        hood.push(i);
        hood.sort_unstable();
        let scores: Vec<f64> = hood.iter().map(|&j| score(i, j)).collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (&j, &e) in hood.iter().zip(&exps) {
            let alpha = e / total;
            for c in 0..f {
                let v = out.get(i, c) + alpha * wh.get(j, c);
                out.set(i, c, v);
            }
        }
    }
    out.map(relu)
}

#[test]
fn layers_match_dense_oracles_on_random_graphs() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 10, 0.35);
        let n = g.node_count();
        let h = random_matrix(&mut rng, n, 4);
        let w = random_matrix(&mut rng, 4, 3);
        let w_sage = random_matrix(&mut rng, 8, 3);
        let a = random_matrix(&mut rng, 6, 1);

        let mut tape = Tape::new();
        let hid = tape.leaf(h.clone());

        let wid = tape.leaf(w.clone());
        let gcn = gcn_layer(
            &mut tape,
            &gcn_normalized_adjacency(&g),
            hid,
            wid,
            Activation::Relu,
        )
        .unwrap();
        assert!(
            tape.value(gcn).max_abs_diff(&dense_gcn(&g, &h, &w)) < 1e-10,
            "gcn mismatch on seed {seed}"
        );

        let wsid = tape.leaf(w_sage.clone());
        let sage = sage_layer(&mut tape, &mean_adjacency(&g), hid, wsid, Activation::Relu).unwrap();
        assert!(
            tape.value(sage).max_abs_diff(&dense_sage(&g, &h, &w_sage)) < 1e-10,
            "sage mismatch on seed {seed}"
        );

        let aid = tape.leaf(a.clone());
        let gat = gat_layer(&mut tape, &gat_support(&g), hid, wid, aid, Activation::Relu).unwrap();
        assert!(
            tape.value(gat.output).max_abs_diff(&dense_gat(&g, &h, &w, &a)) < 1e-10,
            "gat mismatch on seed {seed}"
        );
    }
}

/// encode(pi(g), pi(X)) == pi(encode(g, X)) for a random node relabeling.
#[test]
fn encoders_are_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    // Original graph over ASNs 1..=8; relabeled copy over shuffled ASNs.
    let base_edges: Vec<(u32, u32)> = vec![
        (1, 2),
        (2, 3),
        (3, 4),
        (4, 1),
        (4, 5),
        (5, 6),
        (6, 7),
        (7, 8),
        (8, 5),
        (2, 7),
    ];
    let relabel: Vec<u32> = vec![50, 13, 42, 7, 29, 91, 3, 64]; // new ASN of node asn-1
    let g = AsGraph::from_edges(base_edges.clone()).unwrap();
    let permuted_edges: Vec<(u32, u32)> = base_edges
        .iter()
        .map(|&(a, b)| (relabel[(a - 1) as usize], relabel[(b - 1) as usize]))
        .collect();
    let pg = AsGraph::from_edges(permuted_edges).unwrap();

    let x = random_matrix(&mut rng, 8, 5);
    // row of node i in the permuted graph
    let mut px = Matrix::zeros(8, 5);
    for i in 0..8 {
        let new_index = pg.index_of(relabel[i]).unwrap();
        px.row_mut(new_index).copy_from_slice(x.row(i));
    }

    for kind in [EncoderKind::Gcn, EncoderKind::GraphSage, EncoderKind::Gat] {
        let encoder = GnnEncoder::init(kind, 5, 6, 6, 123);
        let run = |graph: &AsGraph, features: &Matrix| {
            let mut tape = Tape::new();
            let bound = encoder.bind(&mut tape);
            let xid = tape.leaf(features.clone());
            let support = EncoderSupport::build(kind, graph);
            let out = encode(&mut tape, &bound, &support, xid, 8).unwrap();
            tape.value(out).clone()
        };
        let original = run(&g, &x);
        let permuted = run(&pg, &px);
        for i in 0..8 {
            let pi = pg.index_of(relabel[i]).unwrap();
            for c in 0..6 {
                assert!(
                    (original.get(i, c) - permuted.get(pi, c)).abs() < 1e-9,
                    "{kind:?}: node {i} col {c}"
                );
            }
        }
    }
}

/// Changing an isolated node's features must not move any other embedding
/// (two layers cannot reach across a missing path).
#[test]
fn isolated_node_features_stay_local() {
    let g = AsGraph::from_edges([(1u32, 2), (2, 3), (3, 1), (4, 5)]).unwrap();
    // Disconnect 4-5 so nodes 4 and 5 keep no path to the triangle; node
    // indices stay because the node set is preserved.
    let g = g.without_edges(&[(3usize, 4usize)].into_iter().collect());
    assert_eq!(g.degree(3), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_matrix(&mut rng, 5, 4);
    let mut x_changed = x.clone();
    for c in 0..4 {
        x_changed.set(3, c, 9.0 + c as f64);
    }
    for kind in [EncoderKind::Gcn, EncoderKind::GraphSage, EncoderKind::Gat] {
        let encoder = GnnEncoder::init(kind, 4, 6, 6, 55);
        let support = EncoderSupport::build(kind, &g);
        let run = |features: &Matrix| {
            let mut tape = Tape::new();
            let bound = encoder.bind(&mut tape);
            let xid = tape.leaf(features.clone());
            let out = encode(&mut tape, &bound, &support, xid, 5).unwrap();
            tape.value(out).clone()
        };
        let base = run(&x);
        let changed = run(&x_changed);
        for i in [0usize, 1, 2, 4] {
            for c in 0..6 {
                assert_eq!(
                    base.get(i, c),
                    changed.get(i, c),
                    "{kind:?}: node {i} must not see node 3's features"
                );
            }
        }
        assert!(base.row(3) != changed.row(3) || base.row(3).iter().all(|&v| v == 0.0));
    }
}

/// End-to-end analytic gradients vs central finite differences through
/// encode -> pair head -> BCE on a 10-node graph, at 1e-4 relative.
#[test]
fn end_to_end_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let g = random_graph(&mut rng, 10, 0.3);
    let n = g.node_count();
    let x = random_matrix(&mut rng, n, 4);
    let pairs: Vec<(usize, usize)> = vec![(0, 1), (2, 5), (3, 7), (4, 9), (6, 8)];
    let targets = Rc::new(vec![1.0, 0.0, 1.0, 0.0, 1.0]);

    for kind in [EncoderKind::Gcn, EncoderKind::GraphSage, EncoderKind::Gat] {
        let encoder = GnnEncoder::init(kind, 4, 3, 3, 1234);
        let head = MlpHead::init(6, 4, 1, 4321);
        let support = EncoderSupport::build(kind, &g);

        let loss_of = |encoder: &GnnEncoder, head: &MlpHead| -> f64 {
            let mut tape = Tape::new();
            let bound = encoder.bind(&mut tape);
            let bound_head = head.bind(&mut tape);
            let xid = tape.leaf(x.clone());
            let emb = encode(&mut tape, &bound, &support, xid, n).unwrap();
            let inputs = pair_inputs(&mut tape, emb, &pairs).unwrap();
            let logits = predict(&mut tape, &bound_head, inputs).unwrap();
            let loss = tape.bce_with_logits(logits, &targets).unwrap();
            tape.value(loss).get(0, 0)
        };

        // analytic
        let mut tape = Tape::new();
        let bound = encoder.bind(&mut tape);
        let bound_head = head.bind(&mut tape);
        let xid = tape.leaf(x.clone());
        let emb = encode(&mut tape, &bound, &support, xid, n).unwrap();
        let inputs = pair_inputs(&mut tape, emb, &pairs).unwrap();
        let logits = predict(&mut tape, &bound_head, inputs).unwrap();
        let loss = tape.bce_with_logits(logits, &targets).unwrap();
        tape.backward(loss).unwrap();
        let ids: Vec<_> = bound.ids().into_iter().chain(bound_head.ids()).collect();
        let analytic: Vec<Matrix> = ids.iter().map(|&id| tape.grad_or_zeros(id)).collect();

        // finite differences over every parameter of both modules
        let h = 1e-6;
        let mut workspace = (encoder.clone(), head.clone());
        let mut param_cursor = 0;
        for module in 0..2 {
            let count = if module == 0 {
                workspace.0.params_mut().len()
            } else {
                workspace.1.params_mut().len()
            };
            for p in 0..count {
                let elements = {
                    let params = if module == 0 {
                        workspace.0.params_mut()
                    } else {
                        workspace.1.params_mut()
                    };
                    params[p].data().len()
                };
                for e in 0..elements {
                    let set = |ws: &mut (GnnEncoder, MlpHead), v: f64| {
                        let mut params = if module == 0 {
                            ws.0.params_mut()
                        } else {
                            ws.1.params_mut()
                        };
                        params[p].data_mut()[e] = v;
                    };
                    let orig = {
                        let params = if module == 0 {
                            workspace.0.params_mut()
                        } else {
                            workspace.1.params_mut()
                        };
                        params[p].data()[e]
                    };
                    set(&mut workspace, orig + h);
                    let up = loss_of(&workspace.0, &workspace.1);
                    set(&mut workspace, orig - h);
                    let down = loss_of(&workspace.0, &workspace.1);
                    set(&mut workspace, orig);
                    let fd = (up - down) / (2.0 * h);
                    let a = analytic[param_cursor].data()[e];
                    let denom = a.abs().max(fd.abs()).max(1.0);
                    assert!(
                        (a - fd).abs() / denom < 1e-4,
                        "{kind:?} param {param_cursor} elem {e}: {a} vs {fd}"
                    );
                }
                param_cursor += 1;
            }
        }
    }
}
