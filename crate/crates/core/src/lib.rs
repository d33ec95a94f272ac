//! Benchmark toolkit for machine learning on AS-level Internet topology.
//!
//! The pipeline: parse source snapshots ([`ingest`]), build and prune the
//! AS-graph ([`graph`]), normalize node attributes into a feature matrix
//! ([`features`]), then train and evaluate GNN encoders ([`gnn`]),
//! structure-only embeddings ([`embed`]) and a random-forest baseline
//! ([`forest`]) on link prediction and node classification ([`tasks`]).
//! Everything numeric runs on the small autodiff engine in [`numerics`].

pub mod embed;
pub mod features;
pub mod forest;
pub mod gnn;
pub mod graph;
pub mod ingest;
pub mod numerics;
pub mod seeds;
pub mod synthetic;
pub mod tasks;
