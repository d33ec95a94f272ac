//! Deterministic seed derivation.
//!
//! All randomness in the pipeline flows from one master seed. Each component
//! derives its own seed from the master seed and a label, so adding or
//! reordering components never perturbs the seeds of the others.

/// Derive a component seed from the master seed and a label.
///
/// FNV-1a over the little-endian master seed followed by the label bytes.
/// Hand-rolled so the derivation is stable across compiler and std releases.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut hash = OFFSET;
    for byte in master.to_le_bytes().iter().chain(label.as_bytes()) {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// Seeds for the `n` runs of one (task, model) combination.
pub fn run_seeds(master: u64, label: &str, n: usize) -> Vec<u64> {
    (0..n)
        .map(|i| derive_seed(master, &format!("{label}/run-{i}")))
        .collect()
}
