//! Raw transaction tables and their CSV layout.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const USERS_FILE: &str = "users.csv";
pub const CLICKS_FILE: &str = "clicks.csv";
pub const ORDERS_FILE: &str = "orders.csv";
pub const SKUS_FILE: &str = "skus.csv";

pub const USER_COLUMNS: &[&str] = &[
    "user_id",
    "age_band",
    "gender",
    "education",
    "marital_status",
    "plus_status",
    "user_level",
    "city_level",
    "purchase_power",
    "first_order_month",
];
pub const CLICK_COLUMNS: &[&str] = &["user_id", "sku_id", "timestamp", "channel"];
pub const ORDER_COLUMNS: &[&str] = &[
    "order_id",
    "user_id",
    "sku_id",
    "timestamp",
    "quantity",
    "original_unit_price",
    "final_unit_price",
    "direct_discount",
    "quantity_discount",
    "bundle_discount",
    "coupon_discount",
    "gift_flag",
    "promise_days",
    "product_type",
];
pub const SKU_COLUMNS: &[&str] = &["sku_id", "attribute1", "attribute2"];

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub user_id: String,
    pub age_band: String,
    pub gender: String,
    pub education: String,
    pub marital_status: String,
    pub plus_status: String,
    pub user_level: String,
    pub city_level: i32,
    pub purchase_power: i32,
    pub first_order_month: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Click {
    pub user_id: String,
    pub sku_id: String,
    #[serde(with = "timestamp")]
    pub timestamp: NaiveDateTime,
    pub channel: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: String,
    pub user_id: String,
    pub sku_id: String,
    #[serde(with = "timestamp")]
    pub timestamp: NaiveDateTime,
    pub quantity: u32,
    pub original_unit_price: f64,
    pub final_unit_price: f64,
    pub direct_discount: f64,
    pub quantity_discount: f64,
    pub bundle_discount: f64,
    pub coupon_discount: f64,
    #[serde(deserialize_with = "flag", serialize_with = "write_flag")]
    pub gift_flag: bool,
    /// Promised delivery days; `None` when the source says "N/A".
    #[serde(deserialize_with = "promise", serialize_with = "write_promise")]
    pub promise_days: Option<u8>,
    pub product_type: u8,
    /// Gift units attached to this paid line by the gift-counting pass.
    #[serde(default)]
    pub num_gifts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sku {
    pub sku_id: String,
    pub attribute1: Option<f64>,
    pub attribute2: Option<f64>,
}

impl Sku {
    pub fn attributes(&self) -> Option<[f64; 2]> {
        Some([self.attribute1?, self.attribute2?])
    }
}

/// Row-level problem found while parsing or transforming tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub table: String,
    pub line: Option<u64>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(table: &str, line: Option<u64>, message: impl Into<String>) -> Self {
        Self {
            table: table.to_string(),
            line,
            message: message.into(),
        }
    }
}

/// Half-open timestamp range `[start, end)` every record must fall in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthWindow {
    #[serde(with = "timestamp")]
    pub start: NaiveDateTime,
    #[serde(with = "timestamp")]
    pub end: NaiveDateTime,
}

impl MonthWindow {
    pub fn month(year: i32, month: u32) -> Self {
        let start = NaiveDate::from_ymd_opt(year, month, 1)
            .expect("valid month")
            .and_hms_opt(0, 0, 0)
            .expect("midnight");
        let (ny, nm) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
        let end = NaiveDate::from_ymd_opt(ny, nm, 1)
            .expect("valid month")
            .and_hms_opt(0, 0, 0)
            .expect("midnight");
        Self { start, end }
    }

    pub fn contains(&self, ts: &NaiveDateTime) -> bool {
        *ts >= self.start && *ts < self.end
    }
}

impl Default for MonthWindow {
    fn default() -> Self {
        Self::month(2018, 3)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableCounts {
    pub users: usize,
    pub clicks: usize,
    pub orders: usize,
    pub skus: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTables {
    pub users: Vec<User>,
    pub clicks: Vec<Click>,
    pub orders: Vec<Order>,
    pub skus: Vec<Sku>,
    /// Order rows whose user is absent from `users`.
    pub foreign_orders: Vec<usize>,
    pub diagnostics: Vec<Diagnostic>,
}

impl RawTables {
    pub fn counts(&self) -> TableCounts {
        TableCounts {
            users: self.users.len(),
            clicks: self.clicks.len(),
            orders: self.orders.len(),
            skus: self.skus.len(),
        }
    }

    /// Recomputes which order rows reference unknown users.
    pub fn flag_foreign(&mut self) {
        let known: HashSet<&str> = self.users.iter().map(|u| u.user_id.as_str()).collect();
        self.foreign_orders = self
            .orders
            .iter()
            .enumerate()
            .filter(|(_, o)| !known.contains(o.user_id.as_str()))
            .map(|(i, _)| i)
            .collect();
    }

    /// Writes the four tables in their documented CSV layout.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_table(&dir.join(USERS_FILE), &self.users)?;
        write_table(&dir.join(CLICKS_FILE), &self.clicks)?;
        write_orders(&dir.join(ORDERS_FILE), &self.orders)?;
        write_table(&dir.join(SKUS_FILE), &self.skus)?;
        Ok(())
    }
}

fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Orders omit the derived `num_gifts` column unless some line carries gifts.
fn write_orders(path: &Path, orders: &[Order]) -> Result<()> {
    let with_gifts = orders.iter().any(|o| o.num_gifts > 0);
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = ORDER_COLUMNS.to_vec();
    if with_gifts {
        header.push("num_gifts");
    }
    wtr.write_record(&header)?;
    for o in orders {
        let mut rec = vec![
            o.order_id.clone(),
            o.user_id.clone(),
            o.sku_id.clone(),
            o.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            o.quantity.to_string(),
            o.original_unit_price.to_string(),
            o.final_unit_price.to_string(),
            o.direct_discount.to_string(),
            o.quantity_discount.to_string(),
            o.bundle_discount.to_string(),
            o.coupon_discount.to_string(),
            if o.gift_flag { "1" } else { "0" }.to_string(),
            o.promise_days
                .map_or_else(|| "N/A".to_string(), |d| d.to_string()),
            o.product_type.to_string(),
        ];
        if with_gifts {
            rec.push(o.num_gifts.to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TablePaths {
    pub users: PathBuf,
    pub clicks: PathBuf,
    pub orders: PathBuf,
    pub skus: PathBuf,
}

impl TablePaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            users: dir.join(USERS_FILE),
            clicks: dir.join(CLICKS_FILE),
            orders: dir.join(ORDERS_FILE),
            skus: dir.join(SKUS_FILE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParseOptions {
    /// Skip malformed rows (with a diagnostic) instead of failing.
    pub lenient: bool,
}

/// Parses the four CSV tables. Malformed rows are fatal unless
/// `options.lenient`, in which case they are skipped and reported.
pub fn parse_tables(
    paths: &TablePaths,
    window: MonthWindow,
    options: ParseOptions,
) -> Result<RawTables> {
    let mut diagnostics = Vec::new();
    let users: Vec<User> = read_table(&paths.users, USER_COLUMNS, options, &mut diagnostics, |_| {
        Ok(())
    })?;
    let clicks: Vec<Click> =
        read_table(&paths.clicks, CLICK_COLUMNS, options, &mut diagnostics, |c: &Click| {
            check_window(&window, &c.timestamp)
        })?;
    let orders: Vec<Order> =
        read_table(&paths.orders, ORDER_COLUMNS, options, &mut diagnostics, |o: &Order| {
            check_window(&window, &o.timestamp)?;
            if !o.gift_flag && o.quantity < 1 {
                return Err("quantity must be at least 1 on a paid row".into());
            }
            let prices = [
                o.original_unit_price,
                o.final_unit_price,
                o.direct_discount,
                o.quantity_discount,
                o.bundle_discount,
                o.coupon_discount,
            ];
            if prices.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err("prices and discounts must be finite and non-negative".into());
            }
            Ok(())
        })?;
    let skus: Vec<Sku> = read_table(&paths.skus, SKU_COLUMNS, options, &mut diagnostics, |_| Ok(()))?;
    let mut tables = RawTables {
        users,
        clicks,
        orders,
        skus,
        foreign_orders: Vec::new(),
        diagnostics,
    };
    tables.flag_foreign();
    if !tables.foreign_orders.is_empty() {
        tables.diagnostics.push(Diagnostic::new(
            "orders",
            None,
            format!(
                "{} order rows reference users absent from users.csv",
                tables.foreign_orders.len()
            ),
        ));
    }
    Ok(tables)
}

fn check_window(window: &MonthWindow, ts: &NaiveDateTime) -> std::result::Result<(), String> {
    if window.contains(ts) {
        Ok(())
    } else {
        Err(format!("timestamp {ts} outside the configured window"))
    }
}

fn read_table<T, F>(
    path: &Path,
    columns: &[&str],
    options: ParseOptions,
    diagnostics: &mut Vec<Diagnostic>,
    check: F,
) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    F: Fn(&T) -> std::result::Result<(), String>,
{
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let table = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file_label = path.display().to_string();
    // An empty file carries no header; treat as zero rows.
    if std::fs::metadata(path)?.len() == 0 {
        return Ok(Vec::new());
    }
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let found: Vec<&str> = headers.iter().collect();
    if columns.iter().any(|c| !found.contains(c)) {
        return Err(Error::BadHeader {
            file: file_label,
            expected: columns.join(","),
            found: found.join(","),
        });
    }
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n as u64 + 2;
        let parsed = rec
            .map_err(|e| e.to_string())
            .and_then(|r| {
                if r.len() != headers.len() {
                    return Err(format!(
                        "expected {} fields, found {}",
                        headers.len(),
                        r.len()
                    ));
                }
                r.deserialize::<T>(Some(&headers)).map_err(|e| e.to_string())
            })
            .and_then(|row| check(&row).map(|_| row));
        match parsed {
            Ok(row) => rows.push(row),
            Err(message) if options.lenient => {
                diagnostics.push(Diagnostic::new(&table, Some(line), message));
            }
            Err(message) => {
                return Err(Error::MalformedRow {
                    file: file_label,
                    line,
                    message,
                })
            }
        }
    }
    Ok(rows)
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f"))
        .ok()
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

mod timestamp {
    use super::*;

    pub fn serialize<S: Serializer>(ts: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_timestamp(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        parse_timestamp(&raw)
            .ok_or_else(|| de::Error::custom(format!("invalid ISO-8601 timestamp `{raw}`")))
    }
}

fn flag<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let raw = String::deserialize(d)?;
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" | "" => Ok(false),
        other => Err(de::Error::custom(format!("invalid gift flag `{other}`"))),
    }
}

fn write_flag<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(if *v { "1" } else { "0" })
}

fn promise<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u8>, D::Error> {
    let raw = String::deserialize(d)?;
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("n/a") || t.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    t.parse::<u8>()
        .map(Some)
        .map_err(|_| de::Error::custom(format!("invalid promise `{t}`")))
}

fn write_promise<S: Serializer>(v: &Option<u8>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(d) => s.serialize_str(&d.to_string()),
        None => s.serialize_str("N/A"),
    }
}
