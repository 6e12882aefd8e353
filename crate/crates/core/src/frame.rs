//! Numeric feature matrix with an explicit schema.
//!
//! Categorical cells hold level indices; missingness is always the explicit
//! code `-1`, never NaN.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Code used for "no data" in every encoded column.
pub const MISSING: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Value that marks a missing cell. Categoricals always use `-1`.
    pub missing_code: Option<f64>,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
            missing_code: None,
        }
    }

    pub fn numeric_with_missing(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
            missing_code: Some(MISSING),
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical { levels },
            missing_code: Some(MISSING),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { levels } => Some(levels),
            FeatureKind::Numeric => None,
        }
    }

    pub fn is_missing(&self, value: f64) -> bool {
        value.is_nan() || self.missing_code == Some(value)
    }

    /// Encoded index for a raw categorical label, or `-1` when unknown.
    pub fn encode_level(&self, raw: &str) -> f64 {
        match self.levels() {
            Some(levels) => levels
                .iter()
                .position(|l| l == raw)
                .map_or(MISSING, |p| p as f64),
            None => MISSING,
        }
    }

    /// Human-readable value for an encoded cell.
    pub fn display_value(&self, value: f64) -> String {
        if self.is_missing(value) {
            return "missing".to_string();
        }
        match self.levels() {
            Some(levels) => levels
                .get(value as usize)
                .cloned()
                .unwrap_or_else(|| format!("{value}")),
            None => format!("{value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification { classes: Vec<String> },
}

impl Task {
    pub fn n_classes(&self) -> Option<usize> {
        match self {
            Task::Regression => None,
            Task::Classification { classes } => Some(classes.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    pub target: String,
    pub task: Task,
}

impl Schema {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Stable hash over the feature descriptors (names, kinds, levels,
    /// missing codes). Target and task do not participate.
    pub fn feature_hash(&self) -> String {
        let canonical =
            serde_json::to_vec(&self.features).expect("feature specs serialize infallibly");
        let digest = Sha256::digest(&canonical);
        digest.iter().take(12).map(|b| format!("{b:02x}")).collect()
    }

    /// Compares feature descriptors against another schema and names the
    /// first offending feature.
    pub fn check_compatible(&self, other: &Schema) -> Result<()> {
        for (i, mine) in self.features.iter().enumerate() {
            match other.features.get(i) {
                None => {
                    return Err(Error::SchemaMismatch {
                        feature: mine.name.clone(),
                        detail: "absent from the other schema".into(),
                    })
                }
                Some(theirs) if theirs != mine => {
                    let detail = if theirs.name != mine.name {
                        format!("position {i} holds `{}`", theirs.name)
                    } else {
                        "kind, levels or missing code differ".into()
                    };
                    return Err(Error::SchemaMismatch {
                        feature: mine.name.clone(),
                        detail,
                    });
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = other.features.get(self.features.len()) {
            return Err(Error::SchemaMismatch {
                feature: extra.name.clone(),
                detail: "not present in the reference schema".into(),
            });
        }
        Ok(())
    }
}

/// Immutable row-major feature matrix plus target.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    schema: Schema,
    data: Vec<f64>,
    target: Vec<f64>,
    row_ids: Vec<String>,
}

impl Frame {
    pub fn new(
        schema: Schema,
        data: Vec<f64>,
        target: Vec<f64>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        let frame = Self {
            schema,
            data,
            target,
            row_ids,
        };
        frame.validate()?;
        Ok(frame)
    }

    /// Convenience constructor for all-numeric regression data.
    pub fn from_rows(names: &[&str], rows: &[Vec<f64>], target: Vec<f64>) -> Result<Self> {
        let schema = Schema {
            features: names.iter().map(|n| FeatureSpec::numeric(*n)).collect(),
            target: "target".into(),
            task: Task::Regression,
        };
        let data = rows.iter().flatten().copied().collect();
        let row_ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(schema, data, target, row_ids)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.schema.len();
        let n = self.target.len();
        if self.data.len() != n * p {
            return Err(Error::Invariant(format!(
                "matrix has {} cells, expected {n} rows x {p} features",
                self.data.len()
            )));
        }
        if self.row_ids.len() != n {
            return Err(Error::Invariant("row id count differs from row count".into()));
        }
        for (j, spec) in self.schema.features.iter().enumerate() {
            for i in 0..n {
                let v = self.data[i * p + j];
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "row {} feature `{}` is not finite",
                        self.row_ids[i], spec.name
                    )));
                }
                if let Some(levels) = spec.levels() {
                    let ok = v == MISSING
                        || (v >= 0.0 && v.fract() == 0.0 && (v as usize) < levels.len());
                    if !ok {
                        return Err(Error::Data(format!(
                            "row {} feature `{}` holds invalid level code {v}",
                            self.row_ids[i], spec.name
                        )));
                    }
                }
            }
        }
        if let Task::Classification { classes } = &self.schema.task {
            for (i, &t) in self.target.iter().enumerate() {
                if t < 0.0 || t.fract() != 0.0 || t as usize >= classes.len() {
                    return Err(Error::Data(format!(
                        "row {} target {t} is not a class index",
                        self.row_ids[i]
                    )));
                }
            }
        } else if let Some(t) = self.target.iter().find(|t| !t.is_finite()) {
            return Err(Error::Data(format!("non-finite target {t}")));
        }
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so special-case empty schemas.
        let p = self.n_features().max(1);
        let data = if self.n_features() == 0 {
            &[][..]
        } else {
            &self.data[..]
        };
        data.chunks_exact(p)
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.data[row * self.n_features() + feature]
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.value(i, feature)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn feature_hash(&self) -> String {
        self.schema.feature_hash()
    }

    /// New frame with the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Frame {
        let mut data = Vec::with_capacity(indices.len() * self.n_features());
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Frame {
            schema: self.schema.clone(),
            data,
            target: indices.iter().map(|&i| self.target[i]).collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    /// Frame without the named features.
    pub fn drop_features(&self, names: &[&str]) -> Frame {
        let keep: Vec<usize> = (0..self.n_features())
            .filter(|&j| !names.contains(&self.schema.features[j].name.as_str()))
            .collect();
        let mut data = Vec::with_capacity(self.n_rows() * keep.len());
        for row in self.rows() {
            data.extend(keep.iter().map(|&j| row[j]));
        }
        let schema = Schema {
            features: keep.iter().map(|&j| self.schema.features[j].clone()).collect(),
            ..self.schema.clone()
        };
        Frame {
            schema,
            data,
            target: self.target.clone(),
            row_ids: self.row_ids.clone(),
        }
    }

    /// Writes `<stem>.csv` and `<stem>.schema.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let schema_path = dir.join(format!("{stem}.schema.json"));
        let mut wtr = csv::Writer::from_path(&csv_path)?;
        let mut header = vec!["row_id".to_string()];
        header.extend(self.schema.features.iter().map(|f| f.name.clone()));
        header.push(self.schema.target.clone());
        wtr.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.row_ids[i].clone()];
            rec.extend(self.row(i).iter().map(|v| format_number(*v)));
            rec.push(format_number(self.target[i]));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        let mut out = BufWriter::new(File::create(&schema_path)?);
        serde_json::to_writer_pretty(&mut out, &self.schema)?;
        out.write_all(b"\n")?;
        Ok((csv_path, schema_path))
    }

    /// Reads a frame from its CSV file; the schema sidecar is located next to it.
    pub fn read(csv_path: &Path) -> Result<Frame> {
        let schema_path = sidecar_path(csv_path);
        if !csv_path.exists() {
            return Err(Error::MissingFile {
                path: csv_path.to_path_buf(),
            });
        }
        if !schema_path.exists() {
            return Err(Error::MissingFile { path: schema_path });
        }
        let schema: Schema = serde_json::from_reader(File::open(&schema_path)?)?;
        let mut rdr = csv::Reader::from_path(csv_path)?;
        let p = schema.len();
        let expected = p + 2;
        let headers = rdr.headers()?.clone();
        if headers.len() != expected {
            return Err(Error::BadHeader {
                file: csv_path.display().to_string(),
                expected: format!("{expected} columns"),
                found: format!("{} columns", headers.len()),
            });
        }
        let mut data = Vec::new();
        let mut target = Vec::new();
        let mut row_ids = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = n as u64 + 2;
            row_ids.push(rec[0].to_string());
            for j in 0..=p {
                let v: f64 = rec[j + 1].parse().map_err(|_| Error::MalformedRow {
                    file: csv_path.display().to_string(),
                    line,
                    message: format!("cannot parse `{}` as a number", &rec[j + 1]),
                })?;
                if j < p {
                    data.push(v);
                } else {
                    target.push(v);
                }
            }
        }
        Frame::new(schema, data, target, row_ids)
    }
}

/// `foo.csv` -> `foo.schema.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.schema.json"))
}

/// Shortest representation that round-trips, without a trailing `.0` on integers.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
