//! Undirected AS-graph in compressed adjacency form, leaf pruning, degree
//! queries and degree buckets.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::ingest::{RawEdge, Relationship};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph construction needs at least one edge")]
    EmptyEdgeSet,
    #[error("self-loop on ASN {0}")]
    SelfLoop(u32),
    #[error("unknown node: ASN {0}")]
    UnknownNode(u32),
    #[error("pruning needs at least one pass")]
    ZeroPasses,
    #[error("graph file line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Degree class used by the link-prediction breakdown.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DegreeBucket {
    Low,
    Medium,
    High,
}

impl DegreeBucket {
    pub fn of_degree(degree: usize) -> Self {
        if degree < 10 {
            Self::Low
        } else if degree < 20 {
            Self::Medium
        } else {
            Self::High
        }
    }

    pub const ALL: [Self; 3] = [Self::Low, Self::Medium, Self::High];

    pub fn label(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
        }
    }
}

/// Undirected simple graph over ASNs.
///
/// Node indices are positions in the sorted ASN list, adjacency is CSR with
/// sorted neighbor lists, and the structure is immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct AsGraph {
    node_asns: Vec<u32>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl AsGraph {
    /// Build from ASN pairs. Reversed and repeated pairs collapse to one
    /// undirected edge; self-loops are rejected.
    pub fn from_edges(pairs: impl IntoIterator<Item = (u32, u32)>) -> Result<Self, GraphError> {
        let mut edge_set: BTreeSet<(u32, u32)> = BTreeSet::new();
        for (a, b) in pairs {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            edge_set.insert((a.min(b), a.max(b)));
        }
        if edge_set.is_empty() {
            return Err(GraphError::EmptyEdgeSet);
        }
        let node_asns: Vec<u32> = edge_set
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .collect::<BTreeSet<u32>>()
            .into_iter()
            .collect();
        Ok(Self::from_parts(node_asns, &edge_set))
    }

    pub fn from_raw_edges(edges: &[RawEdge]) -> Result<Self, GraphError> {
        Self::from_edges(edges.iter().map(|e| (e.asn_a, e.asn_b)))
    }

    /// Assemble from an explicit node universe and index-free edge set.
    /// Keeps nodes that end up with no incident edge.
    fn from_parts(node_asns: Vec<u32>, edge_set: &BTreeSet<(u32, u32)>) -> Self {
        let index_of = |asn: u32| node_asns.binary_search(&asn).expect("edge ASN in node set");
        let n = node_asns.len();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in edge_set {
            let (i, j) = (index_of(a), index_of(b));
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adjacency {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(&list);
            offsets.push(neighbors.len());
        }
        Self {
            node_asns,
            offsets,
            neighbors,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_asns.len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn node_asns(&self) -> &[u32] {
        &self.node_asns
    }

    pub fn asn_of(&self, index: usize) -> u32 {
        self.node_asns[index]
    }

    pub fn index_of(&self, asn: u32) -> Option<usize> {
        self.node_asns.binary_search(&asn).ok()
    }

    pub fn neighbors(&self, index: usize) -> &[usize] {
        &self.neighbors[self.offsets[index]..self.offsets[index + 1]]
    }

    pub fn degree(&self, index: usize) -> usize {
        self.offsets[index + 1] - self.offsets[index]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Edges as index pairs (i < j), in canonical order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.node_count() {
            for &j in self.neighbors(i) {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn degree_bucket(&self, asn: u32) -> Result<DegreeBucket, GraphError> {
        let index = self.index_of(asn).ok_or(GraphError::UnknownNode(asn))?;
        Ok(DegreeBucket::of_degree(self.degree(index)))
    }

    pub fn degree_bucket_of_index(&self, index: usize) -> DegreeBucket {
        DegreeBucket::of_degree(self.degree(index))
    }

    /// Copy of the graph with the given index edges removed; the node set is
    /// preserved (nodes may end up isolated). Used for link-split training
    /// graphs, which must stay row-aligned with the feature matrix.
    pub fn without_edges(&self, removed: &BTreeSet<(usize, usize)>) -> Self {
        let edge_set: BTreeSet<(u32, u32)> = self
            .edges()
            .into_iter()
            .filter(|&(i, j)| !removed.contains(&(i, j)))
            .map(|(i, j)| (self.node_asns[i], self.node_asns[j]))
            .collect();
        Self::from_parts(self.node_asns.clone(), &edge_set)
    }
}

/// Result of the leaf-pruning procedure.
#[derive(Clone, Debug)]
pub struct PruneOutcome {
    pub graph: AsGraph,
    /// ASNs removed by each sweep, in sweep order.
    pub removed_per_pass: Vec<Vec<u32>>,
    pub passes_run: usize,
}

impl PruneOutcome {
    pub fn removed_total(&self) -> usize {
        self.removed_per_pass.iter().map(Vec::len).sum()
    }
}

/// Run `passes` pruning sweeps. Each sweep removes every node whose degree
/// in the snapshot at sweep start is <= 1 (leaves, plus isolated leftovers
/// from earlier sweeps), simultaneously, then rebuilds adjacency. May return
/// an empty graph.
pub fn prune_leaves(graph: &AsGraph, passes: usize) -> Result<PruneOutcome, GraphError> {
    if passes == 0 {
        return Err(GraphError::ZeroPasses);
    }
    prune_impl(graph, PruneStop::FixedPasses(passes))
}

/// Sweep until no node of degree <= 1 remains (guaranteed min degree >= 2,
/// unless the graph empties first).
pub fn prune_to_fixpoint(graph: &AsGraph) -> Result<PruneOutcome, GraphError> {
    prune_impl(graph, PruneStop::Fixpoint)
}

enum PruneStop {
    FixedPasses(usize),
    Fixpoint,
}

fn prune_impl(graph: &AsGraph, stop: PruneStop) -> Result<PruneOutcome, GraphError> {
    let mut alive: Vec<bool> = vec![true; graph.node_count()];
    let mut removed_per_pass = Vec::new();
    let mut pass = 0;
    loop {
        match stop {
            PruneStop::FixedPasses(p) if pass == p => break,
            PruneStop::FixedPasses(_) | PruneStop::Fixpoint => {}
        }
        // Degrees against the snapshot at sweep start: removal within a
        // sweep is simultaneous and therefore order-independent.
        let mut removed = Vec::new();
        for i in 0..graph.node_count() {
            if !alive[i] {
                continue;
            }
            let degree = graph.neighbors(i).iter().filter(|&&j| alive[j]).count();
            if degree <= 1 {
                removed.push(i);
            }
        }
        if removed.is_empty() {
            if matches!(stop, PruneStop::Fixpoint) {
                break;
            }
            pass += 1;
            removed_per_pass.push(Vec::new());
            continue;
        }
        for &i in &removed {
            alive[i] = false;
        }
        removed_per_pass.push(removed.iter().map(|&i| graph.asn_of(i)).collect());
        pass += 1;
    }

    let surviving: Vec<u32> = (0..graph.node_count())
        .filter(|&i| alive[i])
        .map(|i| graph.asn_of(i))
        .collect();
    let edge_set: BTreeSet<(u32, u32)> = graph
        .edges()
        .into_iter()
        .filter(|&(i, j)| alive[i] && alive[j])
        .map(|(i, j)| (graph.asn_of(i), graph.asn_of(j)))
        .collect();
    Ok(PruneOutcome {
        graph: AsGraph::from_parts(surviving, &edge_set),
        removed_per_pass,
        passes_run: pass,
    })
}

/// Serialize to the `A|B|r` pipe format. The relationship per edge comes
/// from `relationship_of`; structure-only graphs can pass `|_, _| Relationship::PeerPeer`.
pub fn to_pipe_format(
    graph: &AsGraph,
    mut relationship_of: impl FnMut(u32, u32) -> Relationship,
) -> String {
    let mut out = String::new();
    for (i, j) in graph.edges() {
        let (a, b) = (graph.asn_of(i), graph.asn_of(j));
        let _ = writeln!(out, "{a}|{b}|{}", relationship_of(a, b).code());
    }
    out
}

/// Sidecar node-index file: `index,asn` CSV with a header.
pub fn to_index_csv(graph: &AsGraph) -> String {
    let mut out = String::from("index,asn\n");
    for (i, asn) in graph.node_asns().iter().enumerate() {
        let _ = writeln!(out, "{i},{asn}");
    }
    out
}

/// Parse a pipe-format graph file (comments and blank lines allowed).
pub fn from_pipe_format(text: &str) -> Result<AsGraph, GraphError> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 3 {
            return Err(GraphError::Format {
                line: n + 1,
                message: format!("expected 3 pipe-separated fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str| {
            s.parse::<u32>().map_err(|_| GraphError::Format {
                line: n + 1,
                message: format!("bad ASN {s:?}"),
            })
        };
        pairs.push((parse(fields[0])?, parse(fields[1])?));
    }
    AsGraph::from_edges(pairs)
}
