//! Seeded synthetic data: planted-community graphs, Gaussian blobs and
//! full-coverage attribute records. Used by benchmarks, fixtures and tests.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::AsGraph;
use crate::ingest::RawAsRecord;
use crate::numerics::Matrix;

/// Undirected planted-partition graph: `communities` equal groups over
/// `nodes` nodes (ASNs 1..=nodes), intra-community edges with probability
/// `p_in`, inter-community with `p_out`. Returns the graph and each node's
/// community, indexed like the graph (ascending ASN).
pub fn planted_partition(
    nodes: u32,
    communities: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> (AsGraph, Vec<usize>) {
    assert!(communities > 0 && nodes as usize >= communities);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let community_of = |asn: u32| ((asn - 1) as usize) % communities;
    let mut edges = Vec::new();
    for a in 1..=nodes {
        for b in (a + 1)..=nodes {
            let p = if community_of(a) == community_of(b) {
                p_in
            } else {
                p_out
            };
            if rng.random_range(0.0..1.0) < p {
                edges.push((a, b));
            }
        }
    }
    // ensure no node drops out of the graph
    for a in 1..=nodes {
        let degree_zero = !edges.iter().any(|&(x, y)| x == a || y == a);
        if degree_zero {
            let partner = if a == 1 { 2 } else { a - 1 };
            edges.push((partner.min(a), partner.max(a)));
        }
    }
    let graph = AsGraph::from_edges(edges).expect("non-empty synthetic graph");
    let assignment = graph
        .node_asns()
        .iter()
        .map(|&asn| community_of(asn))
        .collect();
    (graph, assignment)
}

/// One-hot community indicator features for a planted-partition graph.
pub fn community_features(assignment: &[usize], communities: usize) -> Matrix {
    let mut x = Matrix::zeros(assignment.len(), communities);
    for (row, &c) in assignment.iter().enumerate() {
        x.set(row, c, 1.0);
    }
    x
}

/// Two 10-cliques joined by one bridge edge; ASNs 1..=10 and 11..=20, bridge
/// 1-11. The classic community-separation fixture for embeddings.
pub fn two_clique_bridge() -> (AsGraph, Vec<usize>) {
    let mut edges = Vec::new();
    for base in [0u32, 10] {
        for a in 1..=10 {
            for b in (a + 1)..=10 {
                edges.push((base + a, base + b));
            }
        }
    }
    edges.push((1, 11));
    let graph = AsGraph::from_edges(edges).expect("two cliques");
    let assignment = graph
        .node_asns()
        .iter()
        .map(|&asn| usize::from(asn > 10))
        .collect();
    (graph, assignment)
}

/// Two Gaussian blobs in `dims` dimensions, `separation` standard deviations
/// apart per coordinate. Returns (features, labels).
pub fn gaussian_blobs(
    samples: usize,
    dims: usize,
    separation: f64,
    seed: u64,
) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::zeros(samples, dims);
    let mut y = Vec::with_capacity(samples);
    for row in 0..samples {
        let class = row % 2;
        let offset = if class == 0 { 0.0 } else { separation };
        for c in 0..dims {
            x.set(row, c, offset + standard_normal(&mut rng));
        }
        y.push(class);
    }
    (x, y)
}

/// Box-Muller standard normal draw.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

const RIR_REGIONS: [&str; 6] = ["AFRINIC", "APNIC", "ARIN", "LACNIC", "RIPE NCC", "Unknown"];
const CONTINENTS: [&str; 6] = [
    "Africa",
    "Asia",
    "Europe",
    "North America",
    "Oceania",
    "South America",
];
const TRAFFIC_RATIOS: [&str; 6] = [
    "Balanced",
    "Heavy Inbound",
    "Heavy Outbound",
    "Mostly Inbound",
    "Mostly Outbound",
    "Not Disclosed",
];
const SCOPES: [&str; 10] = [
    "Africa",
    "Asia Pacific",
    "Australia",
    "Europe",
    "Global",
    "Middle East",
    "North America",
    "Not Disclosed",
    "Regional",
    "South America",
];
const NETWORK_TYPES: [&str; 11] = [
    "Cable/DSL/ISP",
    "Content",
    "Educational/Research",
    "Enterprise",
    "Government",
    "NSP",
    "Network Services",
    "Non-Profit",
    "Not Disclosed",
    "Route Collector",
    "Route Server",
];
const PEERING_POLICIES: [&str; 4] = ["No", "Open", "Restrictive", "Selective"];
const ASDB_CATEGORIES: [&str; 17] = [
    "Agriculture and Mining",
    "Community Groups and Nonprofits",
    "Computer and Information Technology",
    "Construction and Real Estate",
    "Education and Research",
    "Finance and Insurance",
    "Freight Shipment and Postal Services",
    "Government and Public Administration",
    "Health Care Services",
    "Manufacturing",
    "Media Publishing and Broadcasting",
    "Museums Libraries and Entertainment",
    "Other",
    "Retail Stores Wholesale and E-commerce Sites",
    "Service",
    "Travel and Accommodation",
    "Utilities",
];

/// Category domains per categorical feature (6+6+6+10+11+4+17 = 60 values).
pub fn category_domain(feature: &str) -> &'static [&'static str] {
    match feature {
        "rir_region" => &RIR_REGIONS,
        "location_continent" => &CONTINENTS,
        "pdb_traffic_ratio" => &TRAFFIC_RATIOS,
        "pdb_scope" => &SCOPES,
        "pdb_network_type" => &NETWORK_TYPES,
        "pdb_peering_policy" => &PEERING_POLICIES,
        "asdb_category" => &ASDB_CATEGORIES,
        _ => &[],
    }
}

/// Records for ASNs 1..=n covering every category of every categorical
/// feature and the documented extremes of every numerical feature (so every
/// non-constant column attains both ends of its range). Requires n >= 17 to
/// cover the largest category domain.
pub fn full_coverage_records(n: u32, seed: u64) -> Vec<RawAsRecord> {
    assert!(n >= 17, "need at least 17 records to cover every category");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n as usize);
    for asn in 1..=n {
        let i = (asn - 1) as usize;
        let mut r = RawAsRecord::new(asn);
        r.rir_region = Some(RIR_REGIONS[i % 6].to_string());
        r.location_continent = Some(CONTINENTS[(i / 2) % 6].to_string());
        r.pdb_traffic_ratio = Some(TRAFFIC_RATIOS[(i / 3) % 6].to_string());
        r.pdb_scope = Some(SCOPES[i % 10].to_string());
        r.pdb_network_type = Some(NETWORK_TYPES[i % 11].to_string());
        r.pdb_peering_policy = Some(PEERING_POLICIES[i % 4].to_string());
        r.asdb_category = Some(ASDB_CATEGORIES[i % 17].to_string());
        // pin the documented extremes on the first two records, draw the rest
        let draw = |rng: &mut ChaCha8Rng, lo: u64, hi: u64| match i {
            0 => lo,
            1 => hi,
            _ => rng.random_range(lo..=hi),
        };
        r.customer_cone_asns = Some(draw(&mut rng, 1, 48_790));
        r.customer_cone_prefixes = Some(draw(&mut rng, 0, 737_792));
        r.customer_cone_addresses = Some(draw(&mut rng, 0, 2_090_939_967));
        r.num_neighbors = Some(draw(&mut rng, 0, 9_547));
        r.num_customers = Some(draw(&mut rng, 0, 6_505));
        r.num_peers = Some(draw(&mut rng, 0, 7_516));
        r.num_providers = Some(draw(&mut rng, 0, 133));
        r.pdb_num_ixps = Some(draw(&mut rng, 0, 288));
        r.pdb_num_facilities = Some(draw(&mut rng, 0, 768));
        let draw_real = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| match i {
            0 => lo,
            1 => hi,
            _ => rng.random_range(lo..hi),
        };
        r.as_hegemony = Some(draw_real(&mut rng, 0.0, 0.2));
        r.cti_top = Some(draw_real(&mut rng, 0.0, 0.95));
        r.cti_origin = Some(draw_real(&mut rng, 0.0, 97.39));
        records.push(r);
    }
    records
}
