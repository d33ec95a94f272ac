//! Snapshot parsers for the six data sources and the merge step producing
//! one AS-keyed record set plus the raw edge list.
//!
//! Formats (all UTF-8, LF):
//! - AS relationships: `A|B|r` with `r` -1 (provider-customer) or 0 (peer),
//!   `#` comments.
//! - AS-rank / PeeringDB: one record per line of `key=value` pairs joined by
//!   `|`, keyed by `asn` (values may contain spaces, not `|`).
//! - Hegemony CSV `asn,hegemony`, CTI CSV `asn,cti_top,cti_origin`, ASDB CSV
//!   `asn,category`; each with a header line.
//! - AS-path corpus: space-separated ASNs, one path per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("unknown source kind {0:?} (expected as-rank, peeringdb, hegemony, cti or asdb)")]
    UnknownSource(String),
    #[error("merge requires a non-empty edge set")]
    EmptyEdgeSet,
}

/// Parser behaviour on malformed input lines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseMode {
    /// Abort on the first malformed line. For fixtures and tests.
    Strict,
    /// Skip malformed lines, recording one issue each. Real dumps contain
    /// irregularities; this is the default.
    Lenient,
}

/// A skipped line (lenient mode) or warning, with its 1-based line number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineIssue {
    pub line: usize,
    pub message: String,
}

/// Parse output plus the issues tolerated along the way.
#[derive(Clone, Debug)]
pub struct Parsed<T> {
    pub value: T,
    pub issues: Vec<LineIssue>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relationship {
    ProviderCustomer,
    PeerPeer,
}

impl Relationship {
    pub fn code(self) -> i8 {
        match self {
            Self::ProviderCustomer => -1,
            Self::PeerPeer => 0,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            -1 => Some(Self::ProviderCustomer),
            0 => Some(Self::PeerPeer),
            _ => None,
        }
    }
}

/// One observed AS link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawEdge {
    pub asn_a: u32,
    pub asn_b: u32,
    pub relationship: Relationship,
}

/// One AS's attributes merged from all sources. `None` marks a value the
/// sources did not provide.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawAsRecord {
    pub asn: u32,
    pub rir_region: Option<String>,
    pub customer_cone_asns: Option<u64>,
    pub customer_cone_prefixes: Option<u64>,
    pub customer_cone_addresses: Option<u64>,
    pub num_neighbors: Option<u64>,
    pub num_customers: Option<u64>,
    pub num_peers: Option<u64>,
    pub num_providers: Option<u64>,
    pub location_continent: Option<String>,
    pub pdb_traffic_ratio: Option<String>,
    pub pdb_scope: Option<String>,
    pub pdb_network_type: Option<String>,
    pub pdb_peering_policy: Option<String>,
    pub pdb_num_ixps: Option<u64>,
    pub pdb_num_facilities: Option<u64>,
    pub as_hegemony: Option<f64>,
    pub cti_top: Option<f64>,
    pub cti_origin: Option<f64>,
    pub asdb_category: Option<String>,
}

macro_rules! for_each_field {
    ($macro:ident) => {
        $macro!(
            (rir_region, Category),
            (customer_cone_asns, Count),
            (customer_cone_prefixes, Count),
            (customer_cone_addresses, Count),
            (num_neighbors, Count),
            (num_customers, Count),
            (num_peers, Count),
            (num_providers, Count),
            (location_continent, Category),
            (pdb_traffic_ratio, Category),
            (pdb_scope, Category),
            (pdb_network_type, Category),
            (pdb_peering_policy, Category),
            (pdb_num_ixps, Count),
            (pdb_num_facilities, Count),
            (as_hegemony, Real),
            (cti_top, Real),
            (cti_origin, Real),
            (asdb_category, Category)
        )
    };
}

impl RawAsRecord {
    pub fn new(asn: u32) -> Self {
        Self {
            asn,
            ..Self::default()
        }
    }

    /// Copy every present field of `other` into `self`, keeping existing
    /// values (keep-first). Returns the number of already-set fields skipped.
    fn merge_from(&mut self, other: &RawAsRecord) -> usize {
        let mut conflicts = 0;
        macro_rules! merge {
            ($(($field:ident, $kind:ident)),+) => {
                $(
                    if let Some(v) = &other.$field {
                        if self.$field.is_none() {
                            self.$field = Some(v.clone());
                        } else {
                            conflicts += 1;
                        }
                    }
                )+
            };
        }
        for_each_field!(merge);
        conflicts
    }

    /// Serialize present fields as `key=value` pairs joined by `|`.
    pub fn to_kv_line(&self) -> String {
        let mut parts = vec![format!("asn={}", self.asn)];
        macro_rules! emit {
            ($(($field:ident, $kind:ident)),+) => {
                $(
                    if let Some(v) = &self.$field {
                        parts.push(format!(concat!(stringify!($field), "={}"), v));
                    }
                )+
            };
        }
        for_each_field!(emit);
        parts.join("|")
    }

    fn set_field(&mut self, key: &str, value: &str) -> Result<(), String> {
        macro_rules! parse_field_value {
            (Category, $field:ident, $value:ident) => {{
                if $value.is_empty() {
                    Err(format!(concat!(stringify!($field), " is empty")))
                } else {
                    Ok::<String, String>($value.to_string())
                }
            }};
            (Count, $field:ident, $value:ident) => {
                $value
                    .parse::<u64>()
                    .map_err(|_| format!(concat!("bad ", stringify!($field), " {:?}"), $value))
            };
            (Real, $field:ident, $value:ident) => {
                $value
                    .parse::<f64>()
                    .map_err(|_| format!(concat!("bad ", stringify!($field), " {:?}"), $value))
                    .and_then(|x| {
                        if x.is_finite() {
                            Ok(x)
                        } else {
                            Err(format!(concat!(stringify!($field), " is not finite")))
                        }
                    })
            };
        }
        macro_rules! setter {
            ($(($field:ident, $kind:ident)),+) => {
                match key {
                    $(stringify!($field) => {
                        let parsed = parse_field_value!($kind, $field, value)?;
                        self.$field = Some(parsed);
                        Ok(())
                    })+
                    _ => Err(format!("unknown key {key:?}")),
                }
            };
        }
        for_each_field!(setter)
    }

    /// Hard invariants that hold in every mode: share metrics live in [0,1),
    /// CTI origin is a non-negative percentage.
    fn validate_basic(&self) -> Result<(), String> {
        if self.asn == 0 {
            return Err("asn must be positive".into());
        }
        for (name, value) in [("as_hegemony", self.as_hegemony), ("cti_top", self.cti_top)] {
            if let Some(x) = value {
                if !(0.0..1.0).contains(&x) {
                    return Err(format!("{name} {x} outside [0,1)"));
                }
            }
        }
        if let Some(x) = self.cti_origin {
            if x < 0.0 {
                return Err(format!("cti_origin {x} is negative"));
            }
        }
        Ok(())
    }

    /// Documented source ranges (sanity bounds for fixtures); enforced only
    /// under [`ParseMode::Strict`] since live data may exceed them.
    fn validate_source_ranges(&self) -> Result<(), String> {
        let count_ranges: [(&str, Option<u64>, u64, u64); 9] = [
            ("customer_cone_asns", self.customer_cone_asns, 1, 48_790),
            ("customer_cone_prefixes", self.customer_cone_prefixes, 0, 737_792),
            (
                "customer_cone_addresses",
                self.customer_cone_addresses,
                0,
                2_090_939_967,
            ),
            ("num_neighbors", self.num_neighbors, 0, 9_547),
            ("num_customers", self.num_customers, 0, 6_505),
            ("num_peers", self.num_peers, 0, 7_516),
            ("num_providers", self.num_providers, 0, 133),
            ("pdb_num_ixps", self.pdb_num_ixps, 0, 288),
            ("pdb_num_facilities", self.pdb_num_facilities, 0, 768),
        ];
        for (name, value, lo, hi) in count_ranges {
            if let Some(x) = value {
                if x < lo || x > hi {
                    return Err(format!("{name} {x} outside [{lo},{hi}]"));
                }
            }
        }
        let real_ranges: [(&str, Option<f64>, f64, f64); 3] = [
            ("as_hegemony", self.as_hegemony, 0.0, 0.2),
            ("cti_top", self.cti_top, 0.0, 0.95),
            ("cti_origin", self.cti_origin, 0.0, 97.39),
        ];
        for (name, value, lo, hi) in real_ranges {
            if let Some(x) = value {
                if x < lo || x > hi {
                    return Err(format!("{name} {x} outside [{lo},{hi}]"));
                }
            }
        }
        Ok(())
    }
}

/// Sequences of ASNs extracted from BGP announcements (or generated walks).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AsPathCorpus {
    pub paths: Vec<Vec<u32>>,
}

/// The five attribute snapshot sources.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceKind {
    AsRank,
    PeeringDb,
    Hegemony,
    Cti,
    Asdb,
}

impl SourceKind {
    pub const ALL: [Self; 5] = [
        Self::AsRank,
        Self::PeeringDb,
        Self::Hegemony,
        Self::Cti,
        Self::Asdb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::AsRank => "as-rank",
            Self::PeeringDb => "peeringdb",
            Self::Hegemony => "hegemony",
            Self::Cti => "cti",
            Self::Asdb => "asdb",
        }
    }

    /// kv keys this source is allowed to provide (kv-format sources only).
    fn allowed_keys(self) -> &'static [&'static str] {
        match self {
            Self::AsRank => &[
                "rir_region",
                "customer_cone_asns",
                "customer_cone_prefixes",
                "customer_cone_addresses",
                "num_neighbors",
                "num_customers",
                "num_peers",
                "num_providers",
                "location_continent",
            ],
            Self::PeeringDb => &[
                "pdb_traffic_ratio",
                "pdb_scope",
                "pdb_network_type",
                "pdb_peering_policy",
                "pdb_num_ixps",
                "pdb_num_facilities",
            ],
            _ => &[],
        }
    }
}

impl FromStr for SourceKind {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "as-rank" => Ok(Self::AsRank),
            "peeringdb" => Ok(Self::PeeringDb),
            "hegemony" => Ok(Self::Hegemony),
            "cti" => Ok(Self::Cti),
            "asdb" => Ok(Self::Asdb),
            other => Err(IngestError::UnknownSource(other.to_string())),
        }
    }
}

fn note_or_fail(
    mode: ParseMode,
    issues: &mut Vec<LineIssue>,
    line: usize,
    message: String,
) -> Result<(), IngestError> {
    match mode {
        ParseMode::Strict => Err(IngestError::Line { line, message }),
        ParseMode::Lenient => {
            issues.push(LineIssue { line, message });
            Ok(())
        }
    }
}

fn parse_asn(token: &str) -> Result<u32, String> {
    match token.parse::<u32>() {
        Ok(0) => Err("asn must be positive".into()),
        Ok(asn) => Ok(asn),
        Err(_) => Err(format!("bad ASN {token:?}")),
    }
}

/// Parse the `A|B|r` relationship dump into raw edges.
pub fn parse_as_rel(text: &str, mode: ParseMode) -> Result<Parsed<Vec<RawEdge>>, IngestError> {
    let mut edges = Vec::new();
    let mut issues = Vec::new();
    for (n, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_rel_line(line) {
            Ok(edge) => edges.push(edge),
            Err(message) => note_or_fail(mode, &mut issues, n + 1, message)?,
        }
    }
    Ok(Parsed { value: edges, issues })
}

fn parse_rel_line(line: &str) -> Result<RawEdge, String> {
    let fields: Vec<&str> = line.split('|').collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 fields, got {}", fields.len()));
    }
    let asn_a = parse_asn(fields[0])?;
    let asn_b = parse_asn(fields[1])?;
    if asn_a == asn_b {
        return Err(format!("self-loop on ASN {asn_a}"));
    }
    let code: i64 = fields[2]
        .parse()
        .map_err(|_| format!("bad relationship code {:?}", fields[2]))?;
    let relationship =
        Relationship::from_code(code).ok_or(format!("unknown relationship code {code}"))?;
    Ok(RawEdge {
        asn_a,
        asn_b,
        relationship,
    })
}

/// Serialize edges back to the pipe format (used by `ingest` output and the
/// round-trip property).
pub fn edges_to_pipe(edges: &[RawEdge]) -> String {
    let mut out = String::new();
    for e in edges {
        let _ = writeln!(out, "{}|{}|{}", e.asn_a, e.asn_b, e.relationship.code());
    }
    out
}

/// Parse one attribute snapshot into a partial record per ASN. Fields the
/// source does not carry stay missing. Duplicate ASNs keep the first record
/// and are reported as issues in both modes.
pub fn parse_attribute_file(
    source: SourceKind,
    text: &str,
    mode: ParseMode,
) -> Result<Parsed<BTreeMap<u32, RawAsRecord>>, IngestError> {
    match source {
        SourceKind::AsRank | SourceKind::PeeringDb => parse_kv_source(source, text, mode),
        SourceKind::Hegemony => parse_csv_source(
            text,
            mode,
            "asn,hegemony",
            2,
            |record, fields| {
                record.set_field("as_hegemony", fields[1])?;
                Ok(())
            },
        ),
        SourceKind::Cti => parse_csv_source(
            text,
            mode,
            "asn,cti_top,cti_origin",
            3,
            |record, fields| {
                record.set_field("cti_top", fields[1])?;
                record.set_field("cti_origin", fields[2])?;
                Ok(())
            },
        ),
        SourceKind::Asdb => parse_csv_source(text, mode, "asn,category", 2, |record, fields| {
            record.set_field("asdb_category", fields[1])?;
            Ok(())
        }),
    }
}

fn parse_kv_source(
    source: SourceKind,
    text: &str,
    mode: ParseMode,
) -> Result<Parsed<BTreeMap<u32, RawAsRecord>>, IngestError> {
    let allowed = source.allowed_keys();
    parse_kv_lines(text, mode, Some(allowed))
}

/// kv record parser. `allowed`: restrict non-asn keys to this set (None
/// accepts every known field — the merged records.kv file).
fn parse_kv_lines(
    text: &str,
    mode: ParseMode,
    allowed: Option<&[&str]>,
) -> Result<Parsed<BTreeMap<u32, RawAsRecord>>, IngestError> {
    let mut records: BTreeMap<u32, RawAsRecord> = BTreeMap::new();
    let mut issues = Vec::new();
    'lines: for (n, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut record = RawAsRecord::default();
        let mut saw_asn = false;
        for pair in line.split('|') {
            let Some((key, value)) = pair.split_once('=') else {
                note_or_fail(mode, &mut issues, n + 1, format!("malformed pair {pair:?}"))?;
                continue 'lines;
            };
            if key == "asn" {
                match parse_asn(value) {
                    Ok(asn) => {
                        record.asn = asn;
                        saw_asn = true;
                    }
                    Err(message) => {
                        note_or_fail(mode, &mut issues, n + 1, message)?;
                        continue 'lines;
                    }
                }
                continue;
            }
            if let Some(allowed) = allowed {
                if !allowed.contains(&key) {
                    note_or_fail(
                        mode,
                        &mut issues,
                        n + 1,
                        format!("key {key:?} not provided by this source"),
                    )?;
                    continue 'lines;
                }
            }
            if let Err(message) = record.set_field(key, value) {
                note_or_fail(mode, &mut issues, n + 1, message)?;
                continue 'lines;
            }
        }
        if !saw_asn {
            note_or_fail(mode, &mut issues, n + 1, "record without asn".into())?;
            continue;
        }
        if let Err(message) = finish_record(&record, mode) {
            note_or_fail(mode, &mut issues, n + 1, message)?;
            continue;
        }
        insert_keep_first(&mut records, record, n + 1, &mut issues);
    }
    Ok(Parsed {
        value: records,
        issues,
    })
}

fn parse_csv_source(
    text: &str,
    mode: ParseMode,
    header: &str,
    field_count: usize,
    fill: impl Fn(&mut RawAsRecord, &[&str]) -> Result<(), String>,
) -> Result<Parsed<BTreeMap<u32, RawAsRecord>>, IngestError> {
    let mut records: BTreeMap<u32, RawAsRecord> = BTreeMap::new();
    let mut issues = Vec::new();
    let mut seen_data_or_header = false;
    for (n, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_data_or_header && line == header {
            seen_data_or_header = true;
            continue;
        }
        seen_data_or_header = true;
        // splitn keeps embedded commas inside the trailing field (e.g. ASDB
        // category names) intact.
        let fields: Vec<&str> = line.splitn(field_count, ',').collect();
        if fields.len() != field_count {
            note_or_fail(
                mode,
                &mut issues,
                n + 1,
                format!("expected {field_count} comma-separated fields"),
            )?;
            continue;
        }
        let result = parse_asn(fields[0]).and_then(|asn| {
            let mut record = RawAsRecord::new(asn);
            fill(&mut record, &fields)?;
            finish_record(&record, mode)?;
            Ok(record)
        });
        match result {
            Ok(record) => insert_keep_first(&mut records, record, n + 1, &mut issues),
            Err(message) => note_or_fail(mode, &mut issues, n + 1, message)?,
        }
    }
    Ok(Parsed {
        value: records,
        issues,
    })
}

fn finish_record(record: &RawAsRecord, mode: ParseMode) -> Result<(), String> {
    record.validate_basic()?;
    if mode == ParseMode::Strict {
        record.validate_source_ranges()?;
    }
    Ok(())
}

fn insert_keep_first(
    records: &mut BTreeMap<u32, RawAsRecord>,
    record: RawAsRecord,
    line: usize,
    issues: &mut Vec<LineIssue>,
) {
    let asn = record.asn;
    if records.contains_key(&asn) {
        issues.push(LineIssue {
            line,
            message: format!("duplicate ASN {asn}, keeping first"),
        });
    } else {
        records.insert(asn, record);
    }
}

/// Parse the merged records.kv format (all fields allowed).
pub fn parse_records_kv(
    text: &str,
    mode: ParseMode,
) -> Result<Parsed<BTreeMap<u32, RawAsRecord>>, IngestError> {
    parse_kv_lines(text, mode, None)
}

pub fn records_to_kv(records: &[RawAsRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_kv_line());
        out.push('\n');
    }
    out
}

/// Parse an AS-path corpus: one path per line, prepending collapsed.
pub fn parse_as_paths(text: &str, mode: ParseMode) -> Result<Parsed<AsPathCorpus>, IngestError> {
    let mut corpus = AsPathCorpus::default();
    let mut issues = Vec::new();
    'lines: for (n, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut path: Vec<u32> = Vec::new();
        for token in line.split_whitespace() {
            match parse_asn(token) {
                Ok(asn) => {
                    if path.last() != Some(&asn) {
                        path.push(asn);
                    }
                }
                Err(message) => {
                    note_or_fail(mode, &mut issues, n + 1, message)?;
                    continue 'lines;
                }
            }
        }
        corpus.paths.push(path);
    }
    Ok(Parsed {
        value: corpus,
        issues,
    })
}

/// Merge report: how much was joined and dropped.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MergeReport {
    /// ASNs present only in attribute files (not in the edge list).
    pub dropped_attribute_asns: usize,
    /// Fields already set by an earlier source (keep-first applied).
    pub duplicate_fields: usize,
}

/// Join attribute maps onto the node universe defined by the edge list.
/// Record universe = all ASNs appearing in edges; attribute-only ASNs are
/// dropped and counted.
pub fn merge_sources(
    edges: Vec<RawEdge>,
    attribute_maps: &[BTreeMap<u32, RawAsRecord>],
) -> Result<(Vec<RawAsRecord>, Vec<RawEdge>, MergeReport), IngestError> {
    if edges.is_empty() {
        return Err(IngestError::EmptyEdgeSet);
    }
    let mut universe: BTreeMap<u32, RawAsRecord> = BTreeMap::new();
    for e in &edges {
        universe.entry(e.asn_a).or_insert_with(|| RawAsRecord::new(e.asn_a));
        universe.entry(e.asn_b).or_insert_with(|| RawAsRecord::new(e.asn_b));
    }
    let mut report = MergeReport::default();
    for map in attribute_maps {
        for (asn, partial) in map {
            match universe.get_mut(asn) {
                Some(record) => report.duplicate_fields += record.merge_from(partial),
                None => report.dropped_attribute_asns += 1,
            }
        }
    }
    Ok((universe.into_values().collect(), edges, report))
}
