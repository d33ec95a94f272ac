//! Node attributes to normalized feature columns: one-hot encoding,
//! log + min-max scaling, classification label sets, rare-class grouping and
//! training-set balancing.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::RawAsRecord;
use crate::numerics::Matrix;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("feature {0:?} is not categorical")]
    NotCategorical(String),
    #[error("feature {0:?} is not numerical")]
    NotNumerical(String),
    #[error("feature {0:?} has no values at all")]
    AllMissing(String),
    #[error("label set is empty")]
    EmptyLabels,
    #[error("balancing needs at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("class {0:?} has zero training samples")]
    EmptyClass(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Numerical,
    Categorical,
}

/// One of the 19 source attributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureDef {
    pub name: &'static str,
    pub kind: FeatureKind,
    /// log(x+1) before min-max scaling. False exactly for the two share
    /// metrics that already live below 1.
    pub log_transform: bool,
}

/// All attributes in canonical order: 12 numerical, 7 categorical.
pub const FEATURES: [FeatureDef; 19] = [
    FeatureDef { name: "rir_region", kind: FeatureKind::Categorical, log_transform: false },
    FeatureDef { name: "customer_cone_asns", kind: FeatureKind::Numerical, log_transform: true },
    FeatureDef { name: "customer_cone_prefixes", kind: FeatureKind::Numerical, log_transform: true },
    FeatureDef { name: "customer_cone_addresses", kind: FeatureKind::Numerical, log_transform: true },
    FeatureDef { name: "num_neighbors", kind: FeatureKind::Numerical, log_transform: true },
    FeatureDef { name: "num_customers", kind: FeatureKind::Numerical, log_transform: true },
    FeatureDef { name: "num_peers", kind: FeatureKind::Numerical, log_transform: true },
    FeatureDef { name: "num_providers", kind: FeatureKind::Numerical, log_transform: true },
    FeatureDef { name: "location_continent", kind: FeatureKind::Categorical, log_transform: false },
    FeatureDef { name: "pdb_traffic_ratio", kind: FeatureKind::Categorical, log_transform: false },
    FeatureDef { name: "pdb_scope", kind: FeatureKind::Categorical, log_transform: false },
    FeatureDef { name: "pdb_network_type", kind: FeatureKind::Categorical, log_transform: false },
    FeatureDef { name: "pdb_peering_policy", kind: FeatureKind::Categorical, log_transform: false },
    FeatureDef { name: "pdb_num_ixps", kind: FeatureKind::Numerical, log_transform: true },
    FeatureDef { name: "pdb_num_facilities", kind: FeatureKind::Numerical, log_transform: true },
    FeatureDef { name: "as_hegemony", kind: FeatureKind::Numerical, log_transform: false },
    FeatureDef { name: "cti_top", kind: FeatureKind::Numerical, log_transform: false },
    FeatureDef { name: "cti_origin", kind: FeatureKind::Numerical, log_transform: true },
    FeatureDef { name: "asdb_category", kind: FeatureKind::Categorical, log_transform: false },
];

pub fn feature_by_name(name: &str) -> Option<&'static FeatureDef> {
    FEATURES.iter().find(|f| f.name == name)
}

/// Raw numeric value of a record, if the feature is numerical and present.
pub fn numeric_value(record: &RawAsRecord, name: &str) -> Option<f64> {
    match name {
        "customer_cone_asns" => record.customer_cone_asns.map(|v| v as f64),
        "customer_cone_prefixes" => record.customer_cone_prefixes.map(|v| v as f64),
        "customer_cone_addresses" => record.customer_cone_addresses.map(|v| v as f64),
        "num_neighbors" => record.num_neighbors.map(|v| v as f64),
        "num_customers" => record.num_customers.map(|v| v as f64),
        "num_peers" => record.num_peers.map(|v| v as f64),
        "num_providers" => record.num_providers.map(|v| v as f64),
        "pdb_num_ixps" => record.pdb_num_ixps.map(|v| v as f64),
        "pdb_num_facilities" => record.pdb_num_facilities.map(|v| v as f64),
        "as_hegemony" => record.as_hegemony,
        "cti_top" => record.cti_top,
        "cti_origin" => record.cti_origin,
        _ => None,
    }
}

/// Raw category value of a record, if the feature is categorical and present.
pub fn category_value<'r>(record: &'r RawAsRecord, name: &str) -> Option<&'r str> {
    let field = match name {
        "rir_region" => &record.rir_region,
        "location_continent" => &record.location_continent,
        "pdb_traffic_ratio" => &record.pdb_traffic_ratio,
        "pdb_scope" => &record.pdb_scope,
        "pdb_network_type" => &record.pdb_network_type,
        "pdb_peering_policy" => &record.pdb_peering_policy,
        "asdb_category" => &record.asdb_category,
        _ => &None,
    };
    field.as_deref()
}

/// One column of the assembled matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnDef {
    /// `source` for numerical columns, `source=Category` for one-hot columns.
    pub name: String,
    pub kind: FeatureKind,
    pub source: &'static str,
    pub category: Option<String>,
    pub log_transformed: bool,
    /// Min-max statistics applied at scaling time (after the log transform
    /// for log-transformed columns; 0/1 for one-hot columns).
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureSchema {
    pub columns: Vec<ColumnDef>,
}

impl FeatureSchema {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Column range of one source feature's block.
    pub fn block_of(&self, source: &str) -> std::ops::Range<usize> {
        let start = self
            .columns
            .iter()
            .position(|c| c.source == source)
            .unwrap_or(self.columns.len());
        let end = self
            .columns
            .iter()
            .rposition(|c| c.source == source)
            .map_or(start, |i| i + 1);
        start..end
    }
}

/// N x D normalized matrix over a node set, every entry in [0,1].
#[derive(Clone, Debug)]
pub struct FeatureMatrix {
    pub values: Matrix,
    pub schema: FeatureSchema,
    /// ASN -> row. Rows follow ascending-ASN order, matching the graph's
    /// node indexing.
    pub node_index: BTreeMap<u32, usize>,
}

/// One-hot block for a categorical feature. Category order is lexicographic
/// over the observed values; a record missing the source gets an all-zero
/// row.
pub fn encode_categorical(
    records: &[RawAsRecord],
    feature: &str,
) -> Result<(Vec<ColumnDef>, Matrix), FeatureError> {
    let def = feature_by_name(feature)
        .ok_or_else(|| FeatureError::UnknownFeature(feature.to_string()))?;
    if def.kind != FeatureKind::Categorical {
        return Err(FeatureError::NotCategorical(feature.to_string()));
    }
    let mut categories: Vec<String> = records
        .iter()
        .filter_map(|r| category_value(r, feature).map(str::to_string))
        .collect();
    categories.sort();
    categories.dedup();
    let mut values = Matrix::zeros(records.len(), categories.len());
    for (row, record) in records.iter().enumerate() {
        if let Some(v) = category_value(record, feature) {
            let col = categories.binary_search_by(|c| c.as_str().cmp(v)).unwrap();
            values.set(row, col, 1.0);
        }
    }
    let columns = categories
        .into_iter()
        .map(|category| ColumnDef {
            name: format!("{feature}={category}"),
            kind: FeatureKind::Categorical,
            source: def.name,
            category: Some(category),
            log_transformed: false,
            min: 0.0,
            max: 1.0,
        })
        .collect();
    Ok((columns, values))
}

/// Normalized numerical column: missing -> 0, then log(x+1) unless exempt,
/// then min-max over all rows. A constant column maps to all zeros.
pub fn transform_numerical(
    records: &[RawAsRecord],
    feature: &str,
) -> Result<(ColumnDef, Vec<f64>), FeatureError> {
    let def = feature_by_name(feature)
        .ok_or_else(|| FeatureError::UnknownFeature(feature.to_string()))?;
    if def.kind != FeatureKind::Numerical {
        return Err(FeatureError::NotNumerical(feature.to_string()));
    }
    if records.iter().all(|r| numeric_value(r, feature).is_none()) {
        return Err(FeatureError::AllMissing(feature.to_string()));
    }
    let mut column: Vec<f64> = records
        .iter()
        .map(|r| {
            let raw = numeric_value(r, feature).unwrap_or(0.0);
            if def.log_transform {
                (raw + 1.0).ln()
            } else {
                raw
            }
        })
        .collect();
    let min = column.iter().copied().fold(f64::INFINITY, f64::min);
    let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        for v in &mut column {
            *v = (*v - min) / (max - min);
        }
    } else {
        column.fill(0.0);
    }
    Ok((
        ColumnDef {
            name: def.name.to_string(),
            kind: FeatureKind::Numerical,
            source: def.name,
            category: None,
            log_transformed: def.log_transform,
            min,
            max,
        },
        column,
    ))
}

/// Assemble the full matrix over `records` (which must already be filtered
/// to the pruned graph's node set, in ascending ASN order). `exclude` drops
/// one feature's whole block — used to keep a classification target out of
/// its own inputs.
pub fn assemble_matrix(
    records: &[RawAsRecord],
    enabled_features: &[&str],
    exclude: Option<&str>,
) -> Result<FeatureMatrix, FeatureError> {
    if let Some(name) = exclude {
        if feature_by_name(name).is_none() {
            return Err(FeatureError::UnknownFeature(name.to_string()));
        }
    }
    for name in enabled_features {
        if feature_by_name(name).is_none() {
            return Err(FeatureError::UnknownFeature(name.to_string()));
        }
    }
    let mut schema = FeatureSchema::default();
    let mut blocks: Vec<Matrix> = Vec::new();
    for def in FEATURES {
        if !enabled_features.contains(&def.name) || exclude == Some(def.name) {
            continue;
        }
        match def.kind {
            FeatureKind::Categorical => {
                let (columns, block) = encode_categorical(records, def.name)?;
                schema.columns.extend(columns);
                blocks.push(block);
            }
            FeatureKind::Numerical => {
                let (column, data) = transform_numerical(records, def.name)?;
                schema.columns.push(column);
                blocks.push(Matrix::from_vec(records.len(), 1, data));
            }
        }
    }
    let width = schema.width();
    let mut values = Matrix::zeros(records.len(), width);
    let mut offset = 0;
    for block in blocks {
        for r in 0..records.len() {
            values.row_mut(r)[offset..offset + block.cols()].copy_from_slice(block.row(r));
        }
        offset += block.cols();
    }
    let node_index = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.asn, i))
        .collect();
    Ok(FeatureMatrix {
        values,
        schema,
        node_index,
    })
}

/// All feature names, for the common "everything enabled" case.
pub fn all_feature_names() -> Vec<&'static str> {
    FEATURES.iter().map(|f| f.name).collect()
}

/// Classification labels over a node subset after rare-class grouping.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSet {
    pub target_feature: String,
    /// Grouped class labels; the merged class (if any) is last.
    pub classes: Vec<String>,
    /// ASN -> class index; nodes without the attribute are absent (masked).
    pub labels: BTreeMap<u32, usize>,
    pub class_counts: Vec<usize>,
}

pub const OTHER_CLASS: &str = "Other";

/// Default per-target groups kept below the sample threshold. These defaults
/// make the grouped class sets match the published reference tables.
pub fn default_keep_list(target_feature: &str) -> &'static [&'static str] {
    match target_feature {
        "pdb_traffic_ratio" => &["Heavy Inbound", "Heavy Outbound"],
        "pdb_scope" => &["North America"],
        "pdb_network_type" => &["Enterprise"],
        _ => &[],
    }
}

/// Merge classes with fewer than `threshold` samples (and not in
/// `keep_list`) into one class named "Other". Kept classes sort
/// lexicographically; "Other" (raw plus merged) goes last and is omitted if
/// empty.
pub fn group_rare_classes(
    target_feature: &str,
    raw_labels: &BTreeMap<u32, String>,
    threshold: usize,
    keep_list: &[String],
) -> Result<LabelSet, FeatureError> {
    if raw_labels.is_empty() {
        return Err(FeatureError::EmptyLabels);
    }
    let mut raw_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for value in raw_labels.values() {
        *raw_counts.entry(value.as_str()).or_insert(0) += 1;
    }
    let mut kept: Vec<&str> = Vec::new();
    let mut other_count = 0;
    for (&class, &count) in &raw_counts {
        if class == OTHER_CLASS {
            other_count += count;
        } else if count >= threshold || keep_list.iter().any(|k| k == class) {
            kept.push(class);
        } else {
            other_count += count;
        }
    }
    // BTreeMap iteration already gave us lexicographic order.
    let mut classes: Vec<String> = kept.iter().map(|s| s.to_string()).collect();
    if other_count > 0 {
        classes.push(OTHER_CLASS.to_string());
    }
    let mut class_counts = vec![0usize; classes.len()];
    let mut labels = BTreeMap::new();
    for (&asn, value) in raw_labels {
        let idx = match kept.iter().position(|k| k == value) {
            Some(i) => i,
            None => classes.len() - 1, // merged or raw "Other"
        };
        labels.insert(asn, idx);
        class_counts[idx] += 1;
    }
    Ok(LabelSet {
        target_feature: target_feature.to_string(),
        classes,
        labels,
        class_counts,
    })
}

/// Extract raw label strings for a categorical target from records.
pub fn raw_labels(
    records: &[RawAsRecord],
    target_feature: &str,
) -> Result<BTreeMap<u32, String>, FeatureError> {
    let def = feature_by_name(target_feature)
        .ok_or_else(|| FeatureError::UnknownFeature(target_feature.to_string()))?;
    if def.kind != FeatureKind::Categorical {
        return Err(FeatureError::NotCategorical(target_feature.to_string()));
    }
    Ok(records
        .iter()
        .filter_map(|r| category_value(r, target_feature).map(|v| (r.asn, v.to_string())))
        .collect())
}

/// Downsample every class of a labeled training set to the size of its
/// smallest class, uniformly at random under `seed`. Sample identity is
/// whatever the caller uses (ASN or row index).
pub fn balance_training_samples(
    train: &[(usize, usize)],
    class_count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>, FeatureError> {
    if class_count < 2 {
        return Err(FeatureError::TooFewClasses(class_count));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for &(sample, class) in train {
        per_class[class].push(sample);
    }
    if let Some(empty) = per_class.iter().position(Vec::is_empty) {
        return Err(FeatureError::EmptyClass(format!("class index {empty}")));
    }
    let target = per_class.iter().map(Vec::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut balanced = Vec::with_capacity(target * class_count);
    for (class, mut samples) in per_class.into_iter().enumerate() {
        samples.shuffle(&mut rng);
        samples.truncate(target);
        samples.sort_unstable();
        balanced.extend(samples.into_iter().map(|s| (s, class)));
    }
    Ok(balanced)
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Dense CSV of the matrix: `asn` column plus one column per schema entry.
pub fn features_to_csv(matrix: &FeatureMatrix) -> String {
    let mut out = String::from("asn");
    for column in &matrix.schema.columns {
        out.push(',');
        out.push_str(&csv_escape(&column.name));
    }
    out.push('\n');
    for (&asn, &row) in &matrix.node_index {
        let _ = write!(out, "{asn}");
        for c in 0..matrix.values.cols() {
            let _ = write!(out, ",{:.6}", matrix.values.get(row, c));
        }
        out.push('\n');
    }
    out
}

/// Schema description CSV (one row per column).
pub fn schema_to_csv(schema: &FeatureSchema) -> String {
    let mut out = String::from("column,kind,source,category,log_transformed,min,max\n");
    for c in &schema.columns {
        let kind = match c.kind {
            FeatureKind::Numerical => "numerical",
            FeatureKind::Categorical => "one-hot",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_escape(&c.name),
            kind,
            c.source,
            csv_escape(c.category.as_deref().unwrap_or("")),
            c.log_transformed,
            c.min,
            c.max
        );
    }
    out
}

/// `asn,class` CSV of a label set.
pub fn labels_to_csv(labels: &LabelSet) -> String {
    let mut out = String::from("asn,class\n");
    for (&asn, &class) in &labels.labels {
        let _ = writeln!(out, "{asn},{}", csv_escape(&labels.classes[class]));
    }
    out
}
