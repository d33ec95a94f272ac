//! Central finite-difference oracle for the autodiff engine.
//!
//! Every differentiable op appears in at least one composition below; each
//! composition is checked for 100 random seeds against central differences
//! with h = 1e-6 at 1e-5 relative tolerance.

use std::rc::Rc;

use asbench_core::numerics::{Adam, CsrStructure, Matrix, SparseMatrix, Tape, TensorId};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

type LossBuilder<'a> = dyn Fn(&mut Tape, &[TensorId]) -> TensorId + 'a;

fn eval_loss(params: &[Matrix], build: &LossBuilder) -> f64 {
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = build(&mut tape, &ids);
    tape.value(loss).get(0, 0)
}

fn check_grads(label: &str, params: &[Matrix], build: &LossBuilder) {
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = build(&mut tape, &ids);
    tape.backward(loss).expect("backward");
    let analytic: Vec<Matrix> = ids.iter().map(|&id| tape.grad_or_zeros(id)).collect();

    let mut work = params.to_vec();
    for (pi, grad) in analytic.iter().enumerate() {
        for e in 0..grad.data().len() {
            let orig = work[pi].data()[e];
            work[pi].data_mut()[e] = orig + H;
            let up = eval_loss(&work, build);
            work[pi].data_mut()[e] = orig - H;
            let down = eval_loss(&work, build);
            work[pi].data_mut()[e] = orig;
            let fd = (up - down) / (2.0 * H);
            let a = grad.data()[e];
            let denom = a.abs().max(fd.abs()).max(1.0);
            assert!(
                (a - fd).abs() / denom < TOL,
                "{label}: param {pi} element {e}: analytic {a} vs finite-diff {fd}"
            );
        }
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Random symmetric adjacency with self-loops over `n` nodes, as both a
/// weighted CSR matrix and a bare structure.
fn random_adjacency(rng: &mut ChaCha8Rng, n: usize) -> (Rc<SparseMatrix>, Rc<CsrStructure>) {
    let mut neighbor_sets: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_range(0.0..1.0) < 0.4 {
                neighbor_sets[i].push(j);
                neighbor_sets[j].push(i);
            }
        }
    }
    let mut offsets = vec![0usize];
    let mut cols = Vec::new();
    let mut values = Vec::new();
    for set in &mut neighbor_sets {
        set.sort_unstable();
        for &j in set.iter() {
            cols.push(j);
            values.push(rng.random_range(0.1..1.0));
        }
        offsets.push(cols.len());
    }
    (
        Rc::new(SparseMatrix::new(n, n, offsets.clone(), cols.clone(), values)),
        Rc::new(CsrStructure::new(n, offsets, cols)),
    )
}

#[test]
fn mlp_with_bce_matches_finite_differences() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = vec![
            random_matrix(&mut rng, 4, 3), // inputs
            random_matrix(&mut rng, 3, 5), // W1
            random_matrix(&mut rng, 1, 5), // b1
            random_matrix(&mut rng, 5, 1), // W2
        ];
        let targets = Rc::new((0..4).map(|_| f64::from(rng.random_range(0..2u32))).collect::<Vec<_>>());
        check_grads("mlp_bce", &params, &move |tape, ids| {
            let h = tape.matmul(ids[0], ids[1]).unwrap();
            let h = tape.add(h, ids[2]).unwrap();
            let h = tape.relu(h).unwrap();
            let z = tape.matmul(h, ids[3]).unwrap();
            tape.bce_with_logits(z, &targets).unwrap()
        });
    }
}

#[test]
fn gather_concat_softmax_ce_matches_finite_differences() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let params = vec![
            random_matrix(&mut rng, 5, 3),
            random_matrix(&mut rng, 6, 4),
        ];
        let indices = Rc::new(vec![0usize, 2, 2, 4]);
        let classes = Rc::new(vec![0usize, 3, 1, 6]);
        check_grads("gather_ce", &params, &move |tape, ids| {
            let left = tape.gather_rows(ids[0], &indices).unwrap();
            let right = tape.gather_rows(ids[1], &Rc::new(vec![1, 1, 3, 5])).unwrap();
            let cat = tape.concat_cols(left, right).unwrap();
            let sm = tape.row_softmax(cat).unwrap();
            // keep the graph deep: softmax output feeds cross entropy
            tape.cross_entropy(sm, &classes).unwrap()
        });
    }
}

#[test]
fn attention_blocks_match_finite_differences() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let n = 6;
        let (_, adj) = random_adjacency(&mut rng, n);
        let src = Rc::new(adj.expanded_rows());
        let dst = Rc::new(adj.cols().to_vec());
        let offsets = Rc::new(adj.offsets().to_vec());
        let params = vec![
            random_matrix(&mut rng, n, 3), // node features
            random_matrix(&mut rng, 3, 2), // projection
            random_matrix(&mut rng, 2, 1), // attention (source half)
            random_matrix(&mut rng, 2, 1), // attention (target half)
        ];
        let adj = Rc::clone(&adj);
        check_grads("attention", &params, &move |tape, ids| {
            let wh = tape.matmul(ids[0], ids[1]).unwrap();
            let s = tape.matmul(wh, ids[2]).unwrap();
            let t = tape.matmul(wh, ids[3]).unwrap();
            let es = tape.gather_rows(s, &src).unwrap();
            let et = tape.gather_rows(t, &dst).unwrap();
            let e = tape.add(es, et).unwrap();
            let e = tape.leaky_relu(e, 0.2).unwrap();
            let alpha = tape.segment_softmax(e, &offsets).unwrap();
            let agg = tape.edge_weighted_spmm(&adj, alpha, wh).unwrap();
            let act = tape.relu(agg).unwrap();
            let pooled = tape.mean_rows(act).unwrap();
            let sq = tape.mul(pooled, pooled).unwrap();
            tape.sum_all(sq).unwrap()
        });
    }
}

#[test]
fn spmm_sigmoid_mul_matches_finite_differences() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let n = 5;
        let (sparse, _) = random_adjacency(&mut rng, n);
        let params = vec![random_matrix(&mut rng, n, 3), random_matrix(&mut rng, n, 3)];
        let sparse = Rc::clone(&sparse);
        check_grads("spmm", &params, &move |tape, ids| {
            let agg = tape.spmm(&sparse, ids[0]).unwrap();
            let gated = tape.sigmoid(agg).unwrap();
            let mixed = tape.mul(gated, ids[1]).unwrap();
            tape.sum_all(mixed).unwrap()
        });
    }
}

#[test]
fn adam_training_is_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut w = random_matrix(&mut rng, 3, 1);
        let x = random_matrix(&mut rng, 8, 3);
        let targets = Rc::new(vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        let mut adam = Adam::new(0.01);
        for _ in 0..50 {
            let mut tape = Tape::new();
            let wid = tape.param(w.clone());
            let xid = tape.leaf(x.clone());
            let z = tape.matmul(xid, wid).unwrap();
            let loss = tape.bce_with_logits(z, &targets).unwrap();
            tape.backward(loss).unwrap();
            let grad = tape.grad_or_zeros(wid);
            adam.step(&mut [&mut w], &[grad]).unwrap();
        }
        w
    };
    let a = run();
    let b = run();
    assert!(a
        .data()
        .iter()
        .zip(b.data())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}
