//! Plot-ready data products: a CSV table plus a JSON sidecar describing
//! axes, plot type and provenance metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::write_json;
use crate::error::{Error, Result};
use crate::frame::format_number;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Horizontal bars: `x` holds labels, `y` values.
    Bar,
    /// Points at (`x`, `y`), optionally colored by a `[0, 1]` column.
    Scatter,
    /// Polylines through (`x`, `y`), one per distinct `series` value.
    Line,
    /// `x` holds row labels; every other column is a cell value.
    Heatmap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub x: String,
    pub y: String,
    #[serde(default)]
    pub color: Option<String>,
    #[serde(default)]
    pub series: Option<String>,
    #[serde(default)]
    pub log_x: bool,
}

impl PlotSpec {
    pub fn new(kind: PlotKind, x: &str, y: &str) -> Self {
        Self {
            kind,
            x: x.into(),
            y: y.into(),
            color: None,
            series: None,
            log_x: false,
        }
    }

    pub fn color(mut self, column: &str) -> Self {
        self.color = Some(column.into());
        self
    }

    pub fn series(mut self, column: &str) -> Self {
        self.series = Some(column.into());
        self
    }

    pub fn log_x(mut self) -> Self {
        self.log_x = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductMeta {
    pub product: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub plot: PlotSpec,
    #[serde(default)]
    pub metadata: Value,
}

/// String table with a header row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("product has no column `{name}`")))
    }

    /// Numeric column; empty cells become `None`.
    pub fn numbers(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let j = self.column(name)?;
        self.rows
            .iter()
            .map(|r| {
                let cell = r[j].trim();
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse()
                        .map(Some)
                        .map_err(|_| Error::Data(format!("column `{name}`: `{cell}` is not a number")))
                }
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile { path: path.to_path_buf() });
        }
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { header, rows })
    }
}

pub fn num(v: f64) -> String {
    format_number(v)
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

/// `foo.csv` -> `foo.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `<stem>.csv` and its `<stem>.json` sidecar.
pub fn write_product(dir: &Path, stem: &str, table: &Table, meta: &ProductMeta) -> Result<PathBuf> {
    let csv_path = dir.join(format!("{stem}.csv"));
    table.write_csv(&csv_path)?;
    write_json(&meta_path(&csv_path), meta)?;
    Ok(csv_path)
}

pub fn read_product(csv_path: &Path) -> Result<(Table, ProductMeta)> {
    let table = Table::read_csv(csv_path)?;
    let mp = meta_path(csv_path);
    if !mp.exists() {
        return Err(Error::MissingFile { path: mp });
    }
    let meta: ProductMeta = serde_json::from_reader(std::fs::File::open(&mp)?)
        .map_err(|e| Error::Data(format!("{}: {e}", mp.display())))?;
    Ok((table, meta))
}
