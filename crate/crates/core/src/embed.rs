//! Structure-only node embeddings: random-walk corpora and a skip-gram
//! model with negative sampling. One trainer serves both the walk-based
//! variant and the AS-path-corpus variant; they differ only in corpus and
//! constants.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::AsGraph;
use crate::numerics::Matrix;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid walk config: {0}")]
    InvalidWalkConfig(String),
    #[error("invalid skip-gram config: {0}")]
    InvalidSkipGramConfig(String),
    #[error("corpus vocabulary has {0} tokens, need at least 2")]
    VocabularyTooSmall(usize),
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// Random-walk generation parameters. p = q = 1 gives uniform first-order
/// walks, which is the default path; other values bias the second-order
/// choice toward returning (1/p) or exploring (1/q).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkConfig {
    pub num_walks_per_node: usize,
    pub walk_length: usize,
    pub p: f64,
    pub q: f64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            num_walks_per_node: 20,
            walk_length: 4,
            p: 1.0,
            q: 1.0,
        }
    }
}

/// Skip-gram trainer parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Learning rate decays linearly from `lr` to this floor over all pairs.
    pub min_lr: f64,
    /// Reshuffle sentence order every epoch (seeded). False keeps file or
    /// generation order.
    pub shuffle: bool,
}

/// Walk-based embedding defaults: 20 walks of length 4 per node, window 5,
/// one epoch at lr 0.05.
pub fn node2vec_defaults() -> (WalkConfig, SkipGramConfig) {
    (
        WalkConfig::default(),
        SkipGramConfig {
            dim: 16,
            window: 5,
            negatives: 5,
            epochs: 1,
            lr: 0.05,
            min_lr: 1e-4,
            shuffle: false,
        },
    )
}

/// AS-path-corpus embedding defaults: window 2, 5 negatives, 3 epochs,
/// no shuffling.
pub fn bgp2vec_defaults() -> SkipGramConfig {
    SkipGramConfig {
        dim: 16,
        window: 2,
        negatives: 5,
        epochs: 3,
        lr: 0.025,
        min_lr: 1e-4,
        shuffle: false,
    }
}

/// Generate `num_walks_per_node` walks from every node. Lengths are counted
/// in nodes; a walk truncates at a dead end (isolated node).
pub fn generate_walks(
    graph: &AsGraph,
    cfg: &WalkConfig,
    seed: u64,
) -> Result<Vec<Vec<u32>>, EmbedError> {
    if cfg.num_walks_per_node == 0 || cfg.walk_length == 0 {
        return Err(EmbedError::InvalidWalkConfig(
            "walk count and length must be positive".into(),
        ));
    }
    if cfg.p <= 0.0 || cfg.q <= 0.0 {
        return Err(EmbedError::InvalidWalkConfig("p and q must be positive".into()));
    }
    let uniform = cfg.p == 1.0 && cfg.q == 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::with_capacity(graph.node_count() * cfg.num_walks_per_node);
    for start in 0..graph.node_count() {
        for _ in 0..cfg.num_walks_per_node {
            let mut walk_indices = Vec::with_capacity(cfg.walk_length);
            walk_indices.push(start);
            while walk_indices.len() < cfg.walk_length {
                let current = *walk_indices.last().unwrap();
                let neighbors = graph.neighbors(current);
                if neighbors.is_empty() {
                    break;
                }
                let next = if uniform || walk_indices.len() < 2 {
                    neighbors[rng.random_range(0..neighbors.len())]
                } else {
                    let prev = walk_indices[walk_indices.len() - 2];
                    biased_step(graph, prev, neighbors, cfg, &mut rng)
                };
                walk_indices.push(next);
            }
            corpus.push(walk_indices.iter().map(|&i| graph.asn_of(i)).collect());
        }
    }
    Ok(corpus)
}

fn biased_step(
    graph: &AsGraph,
    prev: usize,
    neighbors: &[usize],
    cfg: &WalkConfig,
    rng: &mut ChaCha8Rng,
) -> usize {
    let weights: Vec<f64> = neighbors
        .iter()
        .map(|&x| {
            if x == prev {
                1.0 / cfg.p
            } else if graph.has_edge(prev, x) {
                1.0
            } else {
                1.0 / cfg.q
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut draw = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if draw < *w {
            return neighbors[i];
        }
        draw -= w;
    }
    *neighbors.last().unwrap()
}

/// All (center, context) pairs within `window` positions of each other.
pub fn extract_training_pairs(corpus: &[Vec<u32>], window: usize) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for path in corpus {
        collect_pairs(path, window, |c, ctx| pairs.push((c, ctx)));
    }
    pairs
}

fn collect_pairs(path: &[u32], window: usize, mut emit: impl FnMut(u32, u32)) {
    for t in 0..path.len() {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(path.len() - 1);
        for j in lo..=hi {
            if j != t {
                emit(path[t], path[j]);
            }
        }
    }
}

/// Trained skip-gram embeddings: the input table is the node embedding.
#[derive(Clone, Debug)]
pub struct SkipGramModel {
    /// Sorted ASN vocabulary; row i of the tables belongs to vocab[i].
    pub vocab: Vec<u32>,
    pub input: Matrix,
    pub output: Matrix,
    /// Mean per-pair loss of each epoch, for convergence monitoring.
    pub epoch_mean_losses: Vec<f64>,
}

impl SkipGramModel {
    pub fn index_of(&self, asn: u32) -> Option<usize> {
        self.vocab.binary_search(&asn).ok()
    }

    pub fn vector(&self, asn: u32) -> Option<&[f64]> {
        self.index_of(asn).map(|i| self.input.row(i))
    }

    /// Embedding rows aligned to `nodes`. Nodes absent from the corpus get
    /// zero vectors and are returned in the missing list.
    pub fn embedding_for_nodes(&self, nodes: &[u32]) -> (Matrix, Vec<u32>) {
        let mut out = Matrix::zeros(nodes.len(), self.input.cols());
        let mut missing = Vec::new();
        for (row, &asn) in nodes.iter().enumerate() {
            match self.index_of(asn) {
                Some(i) => out.row_mut(row).copy_from_slice(self.input.row(i)),
                None => missing.push(asn),
            }
        }
        (out, missing)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Train skip-gram with negative sampling over the corpus. Negatives come
/// from the unigram distribution raised to 3/4; the input table is returned
/// as the embedding.
pub fn train_skipgram(
    corpus: &[Vec<u32>],
    cfg: &SkipGramConfig,
    seed: u64,
) -> Result<SkipGramModel, EmbedError> {
    if cfg.dim == 0 || cfg.window == 0 || cfg.epochs == 0 {
        return Err(EmbedError::InvalidSkipGramConfig(
            "dim, window and epochs must be positive".into(),
        ));
    }
    if corpus.iter().all(|p| p.is_empty()) {
        return Err(EmbedError::EmptyCorpus);
    }
    let mut vocab: Vec<u32> = corpus.iter().flatten().copied().collect();
    vocab.sort_unstable();
    vocab.dedup();
    if vocab.len() < 2 {
        return Err(EmbedError::VocabularyTooSmall(vocab.len()));
    }
    let index_of = |asn: u32| vocab.binary_search(&asn).unwrap();

    // negative-sampling table: cumulative unigram^0.75 by vocab index
    let mut counts = vec![0u64; vocab.len()];
    for &asn in corpus.iter().flatten() {
        counts[index_of(asn)] += 1;
    }
    let mut cumulative = Vec::with_capacity(vocab.len());
    let mut acc = 0.0;
    for &c in &counts {
        acc += (c as f64).powf(0.75);
        cumulative.push(acc);
    }
    let table_total = acc;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input = Matrix::from_vec(
        vocab.len(),
        cfg.dim,
        (0..vocab.len() * cfg.dim)
            .map(|_| rng.random_range(-0.5 / cfg.dim as f64..0.5 / cfg.dim as f64))
            .collect(),
    );
    let mut output = Matrix::zeros(vocab.len(), cfg.dim);

    let pairs_per_epoch: usize = corpus
        .iter()
        .map(|path| {
            let mut n = 0;
            collect_pairs(path, cfg.window, |_, _| n += 1);
            n
        })
        .sum();
    let total_pairs = (pairs_per_epoch * cfg.epochs).max(1);

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut processed = 0usize;
    let mut epoch_mean_losses = Vec::with_capacity(cfg.epochs);
    let mut grad_accum = vec![0.0; cfg.dim];
    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        let mut epoch_pairs = 0usize;
        for &sentence in &order {
            let path = &corpus[sentence];
            let mut pair_batch = Vec::new();
            collect_pairs(path, cfg.window, |c, ctx| pair_batch.push((c, ctx)));
            for (center, context) in pair_batch {
                let progress = processed as f64 / total_pairs as f64;
                let lr = cfg.lr + (cfg.min_lr - cfg.lr) * progress;
                processed += 1;
                epoch_pairs += 1;

                let center_row = index_of(center);
                let context_row = index_of(context);
                grad_accum.fill(0.0);
                // positive target then `negatives` sampled fakes
                for k in 0..=cfg.negatives {
                    let (target_row, label) = if k == 0 {
                        (context_row, 1.0)
                    } else {
                        let draw = rng.random_range(0.0..table_total);
                        let idx = cumulative.partition_point(|&c| c <= draw);
                        if idx == context_row {
                            continue;
                        }
                        (idx.min(vocab.len() - 1), 0.0)
                    };
                    let dot: f64 = input
                        .row(center_row)
                        .iter()
                        .zip(output.row(target_row))
                        .map(|(a, b)| a * b)
                        .sum();
                    let p = sigmoid(dot);
                    epoch_loss -= if label == 1.0 {
                        p.max(1e-300).ln()
                    } else {
                        (1.0 - p).max(1e-300).ln()
                    };
                    let g = (label - p) * lr;
                    for d in 0..cfg.dim {
                        grad_accum[d] += g * output.get(target_row, d);
                    }
                    for d in 0..cfg.dim {
                        let v = output.get(target_row, d) + g * input.get(center_row, d);
                        output.set(target_row, d, v);
                    }
                }
                for d in 0..cfg.dim {
                    let v = input.get(center_row, d) + grad_accum[d];
                    input.set(center_row, d, v);
                }
            }
        }
        epoch_mean_losses.push(epoch_loss / epoch_pairs.max(1) as f64);
    }

    Ok(SkipGramModel {
        vocab,
        input,
        output,
        epoch_mean_losses,
    })
}
