//! Graph encoders (GraphSAGE, GCN, GAT; two layers, 32-dim output) and the
//! MLP prediction head.
//!
//! Layers are functions over a [`Tape`]: parameters live in plain matrices
//! ([`GnnEncoder`], [`MlpHead`]) and are bound onto a fresh tape every step.

use std::rc::Rc;
use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::AsGraph;
use crate::numerics::{
    glorot_uniform, Activation, Checkpoint, CsrStructure, Matrix, NumericsError, SparseMatrix,
    Tape, TensorId,
};

/// Negative slope of the attention nonlinearity.
pub const GAT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("unknown encoder kind {0:?} (expected graphsage, gcn or gat)")]
    UnknownKind(String),
    #[error("feature matrix has {got} rows but the graph has {want} nodes")]
    RowMismatch { got: usize, want: usize },
    #[error("checkpoint does not describe a {0} encoder")]
    BadCheckpoint(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderKind {
    GraphSage,
    Gcn,
    Gat,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::GraphSage => "graphsage",
            Self::Gcn => "gcn",
            Self::Gat => "gat",
        }
    }
}

impl FromStr for EncoderKind {
    type Err = GnnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "graphsage" | "sage" => Ok(Self::GraphSage),
            "gcn" => Ok(Self::Gcn),
            "gat" => Ok(Self::Gat),
            other => Err(GnnError::UnknownKind(other.to_string())),
        }
    }
}

// ----------------------------------------------------------------------
// adjacency operators
// ----------------------------------------------------------------------

/// Symmetrically normalized adjacency with self-loops:
/// entry (i,j) = 1 / sqrt((deg_i + 1) * (deg_j + 1)) for j in N(i) or j = i.
pub fn gcn_normalized_adjacency(graph: &AsGraph) -> Rc<SparseMatrix> {
    let n = graph.node_count();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut values = Vec::new();
    offsets.push(0);
    for i in 0..n {
        let di = (graph.degree(i) + 1) as f64;
        let mut row: Vec<usize> = graph.neighbors(i).to_vec();
        row.push(i);
        row.sort_unstable();
        for j in row {
            let dj = (graph.degree(j) + 1) as f64;
            cols.push(j);
            values.push(1.0 / (di * dj).sqrt());
        }
        offsets.push(cols.len());
    }
    Rc::new(SparseMatrix::new(n, n, offsets, cols, values))
}

/// Row-normalized adjacency without self-loops: multiplying by it takes the
/// neighborhood mean. An isolated node's row is empty, so its mean is zero.
pub fn mean_adjacency(graph: &AsGraph) -> Rc<SparseMatrix> {
    let n = graph.node_count();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut values = Vec::new();
    offsets.push(0);
    for i in 0..n {
        let degree = graph.degree(i);
        for &j in graph.neighbors(i) {
            cols.push(j);
            values.push(1.0 / degree as f64);
        }
        offsets.push(cols.len());
    }
    Rc::new(SparseMatrix::new(n, n, offsets, cols, values))
}

/// Attention neighborhoods: adjacency with self-loops plus the per-entry
/// source/target index lists the GAT layer gathers with.
#[derive(Clone, Debug)]
pub struct GatSupport {
    pub adj: Rc<CsrStructure>,
    pub src: Rc<Vec<usize>>,
    pub dst: Rc<Vec<usize>>,
    pub offsets: Rc<Vec<usize>>,
}

pub fn gat_support(graph: &AsGraph) -> GatSupport {
    let n = graph.node_count();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    offsets.push(0);
    for i in 0..n {
        let mut row: Vec<usize> = graph.neighbors(i).to_vec();
        row.push(i);
        row.sort_unstable();
        cols.extend_from_slice(&row);
        offsets.push(cols.len());
    }
    let adj = Rc::new(CsrStructure::new(n, offsets.clone(), cols.clone()));
    GatSupport {
        src: Rc::new(adj.expanded_rows()),
        dst: Rc::new(cols),
        offsets: Rc::new(offsets),
        adj,
    }
}

/// Precomputed graph operator for one encoder kind.
#[derive(Clone, Debug)]
pub enum EncoderSupport {
    Gcn(Rc<SparseMatrix>),
    Sage(Rc<SparseMatrix>),
    Gat(GatSupport),
}

impl EncoderSupport {
    pub fn build(kind: EncoderKind, graph: &AsGraph) -> Self {
        match kind {
            EncoderKind::Gcn => Self::Gcn(gcn_normalized_adjacency(graph)),
            EncoderKind::GraphSage => Self::Sage(mean_adjacency(graph)),
            EncoderKind::Gat => Self::Gat(gat_support(graph)),
        }
    }
}

// ----------------------------------------------------------------------
// layers
// ----------------------------------------------------------------------

/// GCN layer: activation(A_norm * H * W).
pub fn gcn_layer(
    tape: &mut Tape,
    adj: &Rc<SparseMatrix>,
    h: TensorId,
    w: TensorId,
    act: Activation,
) -> Result<TensorId, NumericsError> {
    let agg = tape.spmm(adj, h)?;
    let lin = tape.matmul(agg, w)?;
    tape.activation(lin, act)
}

/// GraphSAGE layer with mean aggregation:
/// activation([H || mean-of-neighbors(H)] * W). W is (2*in) x out.
pub fn sage_layer(
    tape: &mut Tape,
    mean_adj: &Rc<SparseMatrix>,
    h: TensorId,
    w: TensorId,
    act: Activation,
) -> Result<TensorId, NumericsError> {
    let mean = tape.spmm(mean_adj, h)?;
    let cat = tape.concat_cols(h, mean)?;
    let lin = tape.matmul(cat, w)?;
    tape.activation(lin, act)
}

/// GAT layer output: the node representations plus the attention
/// coefficients (one per adjacency entry, row-stochastic per neighborhood).
pub struct GatLayerOutput {
    pub output: TensorId,
    pub attention: TensorId,
}

/// Single-head GAT layer. `a` is the (2*out) x 1 attention vector; its top
/// half scores the aggregating node, the bottom half the neighbor:
/// e_ij = leaky_relu(a^T [W h_i || W h_j]), alpha = softmax over N(i) u {i},
/// output_i = activation(sum_j alpha_ij * W h_j).
pub fn gat_layer(
    tape: &mut Tape,
    support: &GatSupport,
    h: TensorId,
    w: TensorId,
    a: TensorId,
    act: Activation,
) -> Result<GatLayerOutput, NumericsError> {
    let wh = tape.matmul(h, w)?;
    let out_dim = tape.shape(wh).1;
    let a_src = tape.gather_rows(a, &Rc::new((0..out_dim).collect()))?;
    let a_dst = tape.gather_rows(a, &Rc::new((out_dim..2 * out_dim).collect()))?;
    let s = tape.matmul(wh, a_src)?;
    let t = tape.matmul(wh, a_dst)?;
    let es = tape.gather_rows(s, &support.src)?;
    let et = tape.gather_rows(t, &support.dst)?;
    let e = tape.add(es, et)?;
    let e = tape.leaky_relu(e, GAT_LEAKY_SLOPE)?;
    let attention = tape.segment_softmax(e, &support.offsets)?;
    let agg = tape.edge_weighted_spmm(&support.adj, attention, wh)?;
    let output = tape.activation(agg, act)?;
    Ok(GatLayerOutput { output, attention })
}

// ----------------------------------------------------------------------
// encoder and head parameters
// ----------------------------------------------------------------------

/// Two-layer encoder parameters. ReLU between the layers, linear output.
#[derive(Clone, Debug)]
pub struct GnnEncoder {
    pub kind: EncoderKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub w1: Matrix,
    pub a1: Option<Matrix>,
    pub w2: Matrix,
    pub a2: Option<Matrix>,
}

impl GnnEncoder {
    /// Glorot-initialized encoder. SAGE weights are (2*in) x out because the
    /// layer concatenates self and neighborhood-mean features.
    pub fn init(
        kind: EncoderKind,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight = |rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize| {
            let rows = match kind {
                EncoderKind::GraphSage => 2 * fan_in,
                _ => fan_in,
            };
            glorot_uniform(rows, fan_out, fan_in, fan_out, rng)
        };
        let attention = |rng: &mut ChaCha8Rng, dim: usize| match kind {
            EncoderKind::Gat => Some(glorot_uniform(2 * dim, 1, 2 * dim, 1, rng)),
            _ => None,
        };
        let w1 = weight(&mut rng, input_dim, hidden_dim);
        let a1 = attention(&mut rng, hidden_dim);
        let w2 = weight(&mut rng, hidden_dim, output_dim);
        let a2 = attention(&mut rng, output_dim);
        Self {
            kind,
            input_dim,
            hidden_dim,
            output_dim,
            w1,
            a1,
            w2,
            a2,
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.w1];
        if let Some(a) = &mut self.a1 {
            out.push(a);
        }
        out.push(&mut self.w2);
        if let Some(a) = &mut self.a2 {
            out.push(a);
        }
        out
    }

    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![("layer1.weight".to_string(), &self.w1)];
        if let Some(a) = &self.a1 {
            out.push(("layer1.attention".to_string(), a));
        }
        out.push(("layer2.weight".to_string(), &self.w2));
        if let Some(a) = &self.a2 {
            out.push(("layer2.attention".to_string(), a));
        }
        out
    }

    /// Bind parameters onto a tape for one forward/backward pass.
    pub fn bind(&self, tape: &mut Tape) -> BoundEncoder {
        BoundEncoder {
            kind: self.kind,
            w1: tape.param(self.w1.clone()),
            a1: self.a1.as_ref().map(|a| tape.param(a.clone())),
            w2: tape.param(self.w2.clone()),
            a2: self.a2.as_ref().map(|a| tape.param(a.clone())),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            meta: vec![
                ("model".into(), "gnn-encoder".into()),
                ("kind".into(), self.kind.name().into()),
                ("input_dim".into(), self.input_dim.to_string()),
                ("hidden_dim".into(), self.hidden_dim.to_string()),
                ("output_dim".into(), self.output_dim.to_string()),
            ],
            tensors: self
                .named_params()
                .into_iter()
                .map(|(name, m)| (name, m.clone()))
                .collect(),
        }
    }

    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self, GnnError> {
        let meta = |key: &str| {
            checkpoint
                .meta
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or(GnnError::BadCheckpoint("gnn"))
        };
        if meta("model")? != "gnn-encoder" {
            return Err(GnnError::BadCheckpoint("gnn"));
        }
        let kind: EncoderKind = meta("kind")?.parse()?;
        let dim = |key: &str| -> Result<usize, GnnError> {
            meta(key)?.parse().map_err(|_| GnnError::BadCheckpoint("gnn"))
        };
        let tensor = |name: &str| {
            checkpoint
                .tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, m)| m.clone())
                .ok_or(GnnError::BadCheckpoint("gnn"))
        };
        Ok(Self {
            kind,
            input_dim: dim("input_dim")?,
            hidden_dim: dim("hidden_dim")?,
            output_dim: dim("output_dim")?,
            w1: tensor("layer1.weight")?,
            a1: tensor("layer1.attention").ok(),
            w2: tensor("layer2.weight")?,
            a2: tensor("layer2.attention").ok(),
        })
    }
}

/// Tape-bound encoder parameters.
pub struct BoundEncoder {
    kind: EncoderKind,
    w1: TensorId,
    a1: Option<TensorId>,
    w2: TensorId,
    a2: Option<TensorId>,
}

impl BoundEncoder {
    /// Parameter ids in the same order as [`GnnEncoder::params_mut`].
    pub fn ids(&self) -> Vec<TensorId> {
        let mut out = vec![self.w1];
        if let Some(a) = self.a1 {
            out.push(a);
        }
        out.push(self.w2);
        if let Some(a) = self.a2 {
            out.push(a);
        }
        out
    }
}

/// Run the two-layer encoder over X (one row per graph node).
pub fn encode(
    tape: &mut Tape,
    bound: &BoundEncoder,
    support: &EncoderSupport,
    x: TensorId,
    node_count: usize,
) -> Result<TensorId, GnnError> {
    let rows = tape.shape(x).0;
    if rows != node_count {
        return Err(GnnError::RowMismatch {
            got: rows,
            want: node_count,
        });
    }
    let layer = |tape: &mut Tape,
                 h: TensorId,
                 w: TensorId,
                 a: Option<TensorId>,
                 act: Activation|
     -> Result<TensorId, NumericsError> {
        match (bound.kind, support) {
            (EncoderKind::Gcn, EncoderSupport::Gcn(adj)) => gcn_layer(tape, adj, h, w, act),
            (EncoderKind::GraphSage, EncoderSupport::Sage(adj)) => {
                sage_layer(tape, adj, h, w, act)
            }
            (EncoderKind::Gat, EncoderSupport::Gat(sup)) => {
                Ok(gat_layer(tape, sup, h, w, a.expect("gat attention"), act)?.output)
            }
            _ => unreachable!("encoder kind and support built together"),
        }
    };
    let h1 = layer(tape, x, bound.w1, bound.a1, Activation::Relu)?;
    let h2 = layer(tape, h1, bound.w2, bound.a2, Activation::None)?;
    Ok(h2)
}

/// MLP prediction head: one hidden layer (width 32, ReLU) plus linear
/// logits (1 for links, C for classes).
#[derive(Clone, Debug)]
pub struct MlpHead {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl MlpHead {
    pub fn init(input_dim: usize, hidden_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            w1: glorot_uniform(input_dim, hidden_dim, input_dim, hidden_dim, &mut rng),
            b1: Matrix::zeros(1, hidden_dim),
            w2: glorot_uniform(hidden_dim, output_dim, hidden_dim, output_dim, &mut rng),
            b2: Matrix::zeros(1, output_dim),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundHead {
        BoundHead {
            w1: tape.param(self.w1.clone()),
            b1: tape.param(self.b1.clone()),
            w2: tape.param(self.w2.clone()),
            b2: tape.param(self.b2.clone()),
        }
    }
}

pub struct BoundHead {
    w1: TensorId,
    b1: TensorId,
    w2: TensorId,
    b2: TensorId,
}

impl BoundHead {
    pub fn ids(&self) -> Vec<TensorId> {
        vec![self.w1, self.b1, self.w2, self.b2]
    }
}

/// Raw logits for a batch of input rows.
pub fn predict(tape: &mut Tape, head: &BoundHead, input: TensorId) -> Result<TensorId, NumericsError> {
    let h = tape.matmul(input, head.w1)?;
    let h = tape.add(h, head.b1)?;
    let h = tape.relu(h)?;
    let z = tape.matmul(h, head.w2)?;
    tape.add(z, head.b2)
}

/// Pair inputs for the link scorer: row k = [emb(u_k) || emb(v_k)] with the
/// lower index first (the node indexing is ascending-ASN, so this is the
/// canonical ASN order).
pub fn pair_inputs(
    tape: &mut Tape,
    embeddings: TensorId,
    pairs: &[(usize, usize)],
) -> Result<TensorId, NumericsError> {
    let left = Rc::new(pairs.iter().map(|&(u, v)| u.min(v)).collect::<Vec<_>>());
    let right = Rc::new(pairs.iter().map(|&(u, v)| u.max(v)).collect::<Vec<_>>());
    let lhs = tape.gather_rows(embeddings, &left)?;
    let rhs = tape.gather_rows(embeddings, &right)?;
    tape.concat_cols(lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AsGraph;

    fn path_graph() -> AsGraph {
        AsGraph::from_edges([(1u32, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn gcn_single_node_self_loop_only() {
        // One isolated pair: a node with degree 1; check the normalized
        // adjacency diagonal is 1/(deg+1).
        let g = AsGraph::from_edges([(1u32, 2)]).unwrap();
        let adj = gcn_normalized_adjacency(&g);
        let x = Matrix::identity(2);
        let out = adj.mul_dense(&x);
        assert!((out.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((out.get(0, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sage_isolated_node_mean_is_zero() {
        let g = path_graph();
        let pruned = g.without_edges(&[(0usize, 1usize), (1, 2)].into_iter().collect());
        let adj = mean_adjacency(&pruned);
        let x = Matrix::filled(3, 2, 5.0);
        let out = adj.mul_dense(&x);
        assert_eq!(out.data(), &[0.0; 6]);
    }

    #[test]
    fn sage_layer_concatenates_self_and_mean() {
        // Node whose neighbors carry its own features: concat = [h || h].
        let g = AsGraph::from_edges([(1u32, 2), (1, 3)]).unwrap();
        let x = Matrix::filled(3, 2, 0.7);
        let mut tape = Tape::new();
        let xid = tape.leaf(x);
        let w = tape.leaf(Matrix::identity(4));
        let out = sage_layer(&mut tape, &mean_adjacency(&g), xid, w, Activation::None).unwrap();
        for c in 0..4 {
            assert!((tape.value(out).get(0, c) - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn gat_zero_attention_reduces_to_neighborhood_mean() {
        let g = AsGraph::from_edges([(1u32, 2), (2, 3), (1, 3), (3, 4)]).unwrap();
        let support = gat_support(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = glorot_uniform(4, 3, 4, 3, &mut rng);
        let mut tape = Tape::new();
        let xid = tape.leaf(x.clone());
        let w = tape.leaf(Matrix::identity(3));
        let a = tape.leaf(Matrix::zeros(6, 1));
        let out = gat_layer(&mut tape, &support, xid, w, a, Activation::None).unwrap();
        // uniform attention over N(i) u {i}
        for i in 0..4 {
            let mut hood: Vec<usize> = g.neighbors(i).to_vec();
            hood.push(i);
            for c in 0..3 {
                let mean: f64 =
                    hood.iter().map(|&j| x.get(j, c)).sum::<f64>() / hood.len() as f64;
                assert!((tape.value(out.output).get(i, c) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gat_attention_rows_sum_to_one() {
        let g = AsGraph::from_edges([(1u32, 2), (2, 3), (1, 3), (3, 4), (4, 5)]).unwrap();
        let support = gat_support(&g);
        let encoder = GnnEncoder::init(EncoderKind::Gat, 3, 4, 4, 11);
        let mut tape = Tape::new();
        let bound = encoder.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = tape.leaf(glorot_uniform(5, 3, 5, 3, &mut rng));
        let out = gat_layer(&mut tape, &support, x, bound.w1, bound.a1.unwrap(), Activation::Relu)
            .unwrap();
        let alpha = tape.value(out.attention);
        for seg in support.offsets.windows(2) {
            let sum: f64 = (seg[0]..seg[1]).map(|k| alpha.get(k, 0)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_output_shape_and_determinism() {
        let g = path_graph();
        for kind in [EncoderKind::Gcn, EncoderKind::GraphSage, EncoderKind::Gat] {
            let support = EncoderSupport::build(kind, &g);
            let encoder = GnnEncoder::init(kind, 5, 32, 32, 21);
            let run = || {
                let mut tape = Tape::new();
                let bound = encoder.bind(&mut tape);
                let x = tape.leaf(Matrix::filled(3, 5, 0.3));
                let out = encode(&mut tape, &bound, &support, x, 3).unwrap();
                tape.value(out).clone()
            };
            let out = run();
            assert_eq!(out.shape(), (3, 32));
            assert_eq!(out, run(), "{kind:?} encode must be deterministic");
        }
    }

    #[test]
    fn encode_row_mismatch_rejected() {
        let g = path_graph();
        let support = EncoderSupport::build(EncoderKind::Gcn, &g);
        let encoder = GnnEncoder::init(EncoderKind::Gcn, 5, 8, 8, 3);
        let mut tape = Tape::new();
        let bound = encoder.bind(&mut tape);
        let x = tape.leaf(Matrix::zeros(2, 5));
        assert!(matches!(
            encode(&mut tape, &bound, &support, x, 3),
            Err(GnnError::RowMismatch { got: 2, want: 3 })
        ));
    }

    #[test]
    fn encoders_finite_on_constant_features() {
        let g = AsGraph::from_edges([(1u32, 2), (2, 3), (3, 1), (3, 4)]).unwrap();
        for kind in [EncoderKind::Gcn, EncoderKind::GraphSage, EncoderKind::Gat] {
            let support = EncoderSupport::build(kind, &g);
            let encoder = GnnEncoder::init(kind, 4, 8, 8, 31);
            for fill in [0.0, 1.0] {
                let mut tape = Tape::new();
                let bound = encoder.bind(&mut tape);
                let x = tape.leaf(Matrix::filled(4, 4, fill));
                let out = encode(&mut tape, &bound, &support, x, 4).unwrap();
                assert!(tape.value(out).is_finite(), "{kind:?} with fill {fill}");
            }
        }
    }

    #[test]
    fn predict_widths_and_zero_weights() {
        let mut head = MlpHead::init(64, 32, 1, 9);
        let mut tape = Tape::new();
        let bound = head.bind(&mut tape);
        let input = tape.leaf(Matrix::zeros(7, 64));
        let logits = predict(&mut tape, &bound, input).unwrap();
        assert_eq!(tape.shape(logits), (7, 1));

        // zero weights -> zero logits
        for p in head.params_mut() {
            *p = Matrix::zeros(p.rows(), p.cols());
        }
        let mut tape = Tape::new();
        let bound = head.bind(&mut tape);
        let input = tape.leaf(Matrix::filled(4, 64, 2.0));
        let logits = predict(&mut tape, &bound, input).unwrap();
        assert_eq!(tape.value(logits).data(), &[0.0, 0.0, 0.0, 0.0]);

        let class_head = MlpHead::init(32, 32, 6, 9);
        let mut tape = Tape::new();
        let bound = class_head.bind(&mut tape);
        let input = tape.leaf(Matrix::zeros(3, 32));
        let logits = predict(&mut tape, &bound, input).unwrap();
        assert_eq!(tape.shape(logits), (3, 6));
    }

    #[test]
    fn pair_inputs_orders_and_concatenates() {
        let mut tape = Tape::new();
        let emb = tape.leaf(Matrix::from_rows(&[
            vec![1.0, 10.0],
            vec![2.0, 20.0],
            vec![3.0, 30.0],
        ]));
        let pairs = vec![(2usize, 0usize), (1, 2)];
        let out = pair_inputs(&mut tape, emb, &pairs).unwrap();
        // (2,0) reorders to (0,2)
        assert_eq!(tape.value(out).row(0), &[1.0, 10.0, 3.0, 30.0]);
        assert_eq!(tape.value(out).row(1), &[2.0, 20.0, 3.0, 30.0]);
    }

    #[test]
    fn checkpoint_round_trip_keeps_kind_and_params() {
        let encoder = GnnEncoder::init(EncoderKind::Gat, 7, 16, 16, 77);
        let text = crate::numerics::write_checkpoint(&encoder.to_checkpoint());
        let back =
            GnnEncoder::from_checkpoint(&crate::numerics::read_checkpoint(&text).unwrap()).unwrap();
        assert_eq!(back.kind, EncoderKind::Gat);
        assert_eq!(back.input_dim, 7);
        assert_eq!(back.w1, encoder.w1);
        assert_eq!(back.a2, encoder.a2);
    }
}
