use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, FeaturePartition};
use crate::error::{Error, Result};

/// How the group attribute is obtained from a CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupSource {
    /// Integer group index stored directly in a column.
    Column(String),
    /// `z = 1{value >= threshold}` on a numeric column, which stays available as a feature.
    Threshold { column: String, threshold: f64 },
}

/// Column roles for [`load_csv`], read from a small TOML document:
///
/// ```toml
/// label_column = "label"
/// improvable_columns = ["occupation"]
/// group = { threshold = { column = "age", threshold = 30.0 } }
///
/// [categorical]
/// occupation = ["unemployed", "unskilled", "skilled", "highly_qualified"]
/// ```
///
/// Columns not listed as improvable or manipulable are immutable. `feature_columns`
/// restricts and orders the feature set; by default every column other than the label
/// and a direct group column is a feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub label_column: String,
    pub group: GroupSource,
    pub improvable_columns: Vec<String>,
    #[serde(default)]
    pub manipulable_columns: Vec<String>,
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
    /// Ordered levels per categorical column; encoded as 1..=k.
    #[serde(default)]
    pub categorical: BTreeMap<String, Vec<String>>,
    /// Columns rescaled to [0, 1] by their observed min and max.
    #[serde(default)]
    pub minmax_scale: Vec<String>,
    /// Group count; defaults to `max(2, largest index + 1)`.
    #[serde(default)]
    pub n_groups: Option<usize>,
}

impl SchemaConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("invalid schema: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize schema: {e}")))
    }
}

fn ingestion(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Ingestion {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn parse_cell(
    raw: &str,
    row: usize,
    column: &str,
    levels: Option<&Vec<String>>,
) -> Result<f64> {
    let cell = raw.trim();
    if let Some(levels) = levels {
        return levels
            .iter()
            .position(|l| l == cell)
            .map(|k| (k + 1) as f64)
            .ok_or_else(|| ingestion(row, column, format!("unknown category `{cell}`")));
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| ingestion(row, column, format!("non-numeric cell `{cell}`")))?;
    if !v.is_finite() {
        return Err(ingestion(row, column, "non-finite value"));
    }
    Ok(v)
}

/// Reads a headed, comma-separated UTF-8 file. Rows are numbered from 1 in errors; row 0
/// is the header.
pub fn load_csv(path: &Path, schema: &SchemaConfig) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Data(format!("{other:?}")),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| ingestion(0, "", e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ingestion(0, name, "column not found in header"))
    };

    let label_idx = find(&schema.label_column)?;
    let (group_idx, group_threshold) = match &schema.group {
        GroupSource::Column(c) => (find(c)?, None),
        GroupSource::Threshold { column, threshold } => (find(column)?, Some(*threshold)),
    };
    let feature_names: Vec<String> = match &schema.feature_columns {
        Some(cols) => cols.clone(),
        None => header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_idx && (group_threshold.is_some() || *i != group_idx))
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let feature_idx: Vec<usize> = feature_names.iter().map(|n| find(n)).collect::<Result<_>>()?;
    let position = |name: &String, role: &str| {
        feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::config(format!("{role} column `{name}` is not a feature column")))
    };
    let improvable: Vec<usize> = schema
        .improvable_columns
        .iter()
        .map(|c| position(c, "improvable"))
        .collect::<Result<_>>()?;
    let manipulable: Vec<usize> = schema
        .manipulable_columns
        .iter()
        .map(|c| position(c, "manipulable"))
        .collect::<Result<_>>()?;
    let immutable: Vec<usize> = (0..feature_names.len())
        .filter(|i| !improvable.contains(i) && !manipulable.contains(i))
        .collect();
    for c in schema.categorical.keys().chain(&schema.minmax_scale) {
        if !header.contains(c) {
            return Err(ingestion(0, c, "column not found in header"));
        }
    }

    let d = feature_names.len();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| ingestion(row, "", e.to_string()))?;
        if record.len() != header.len() {
            return Err(ingestion(
                row,
                "",
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for (&j, name) in feature_idx.iter().zip(&feature_names) {
            features.push(parse_cell(&record[j], row, name, schema.categorical.get(name))?);
        }
        let y = parse_cell(
            &record[label_idx],
            row,
            &schema.label_column,
            schema.categorical.get(&schema.label_column),
        )?;
        if y != 0.0 && y != 1.0 {
            return Err(ingestion(row, &schema.label_column, format!("label {y} is not 0 or 1")));
        }
        labels.push(y as u8);
        let gname = &header[group_idx];
        let g = parse_cell(&record[group_idx], row, gname, schema.categorical.get(gname))?;
        let z = match group_threshold {
            Some(t) => usize::from(g >= t),
            None => {
                if g < 0.0 || g.fract() != 0.0 {
                    return Err(ingestion(row, gname, format!("group value {g} is not a non-negative integer")));
                }
                g as usize
            }
        };
        groups.push(z);
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{} contains no data rows", path.display())));
    }

    for name in &schema.minmax_scale {
        let Some(j) = feature_names.iter().position(|f| f == name) else {
            continue;
        };
        let col = features.iter().skip(j).step_by(d);
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
        let span = hi - lo;
        for v in features.iter_mut().skip(j).step_by(d) {
            *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
        }
    }

    let observed = groups.iter().copied().max().unwrap_or(0) + 1;
    let n_groups = schema.n_groups.unwrap_or(observed.max(2));
    Dataset::new(
        features,
        d,
        labels,
        groups,
        n_groups,
        FeaturePartition::new(improvable, manipulable, immutable),
        feature_names,
    )
}

/// Writes the numeric matrix with trailing `label` and `group` columns, and returns a schema
/// that loads it back unchanged.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<SchemaConfig> {
    let names = dataset.column_names();
    for reserved in ["label", "group"] {
        if names.iter().any(|n| n == reserved) {
            return Err(Error::config(format!("feature column named `{reserved}` is reserved")));
        }
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    let mut header: Vec<String> = names.to_vec();
    header.push("label".into());
    header.push("group".into());
    writer.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for i in 0..dataset.len() {
        let mut rec: Vec<String> = dataset.row(i).iter().map(|v| format!("{v:?}")).collect();
        rec.push(dataset.label(i).to_string());
        rec.push(dataset.group(i).to_string());
        writer.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
    }
    writer.flush()?;
    let p = dataset.partition();
    let pick = |idx: &[usize]| idx.iter().map(|&i| names[i].clone()).collect::<Vec<_>>();
    Ok(SchemaConfig {
        label_column: "label".into(),
        group: GroupSource::Column("group".into()),
        improvable_columns: pick(&p.improvable),
        manipulable_columns: pick(&p.manipulable),
        feature_columns: Some(names.to_vec()),
        categorical: BTreeMap::new(),
        minmax_scale: vec![],
        n_groups: Some(dataset.n_groups()),
    })
}
