//! Gift counting, discount ratios and model-ready frames.

use std::collections::{BTreeSet, HashMap};

use chrono::{Datelike, Timelike};
use serde::{Deserialize, Serialize};

use super::clicks::{ClickHistory, UNKNOWN_CHANNEL};
use super::tables::{Diagnostic, Order, RawTables, User};
use crate::cluster::ClusterModel;
use crate::error::{Error, Result};
use crate::frame::{FeatureSpec, Frame, Schema, Task, MISSING};

/// Feature columns of the sales frame, in order.
pub const SALES_FEATURES: [&str; 20] = [
    "gender",
    "marital_status",
    "education",
    "user_level",
    "plus_status",
    "city_level",
    "purchase_power",
    "attribute1",
    "attribute2",
    "product_type",
    "original_price",
    "promise",
    "num_gifts",
    "direct_discount_ratio",
    "quantity_discount_ratio",
    "bundle_discount_ratio",
    "coupon_discount_ratio",
    "channel",
    "day_of_week",
    "hour_of_day",
];

/// Attribute columns removed from the product-choice frame.
pub const CLUSTER_ATTRIBUTES: [&str; 2] = ["attribute1", "attribute2"];

const DAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// Raw category labels that mean "no data".
pub fn is_missing_label(raw: &str) -> bool {
    let t = raw.trim();
    t.is_empty() || t.eq_ignore_ascii_case("unknown") || t.eq_ignore_ascii_case("n/a")
}

/// Drops all-gift orders and folds gift units into the paid line of each
/// remaining order. With more than one paid line, gifts go to the
/// highest-priced one and a diagnostic is recorded.
pub fn count_gifts(mut tables: RawTables) -> RawTables {
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut first_seen: Vec<&str> = Vec::new();
    for (i, o) in tables.orders.iter().enumerate() {
        let g = groups.entry(o.order_id.as_str()).or_default();
        if g.is_empty() {
            first_seen.push(o.order_id.as_str());
        }
        g.push(i);
    }
    let mut gifts_for: HashMap<usize, u32> = HashMap::new();
    let mut diagnostics = Vec::new();
    for oid in &first_seen {
        let lines = &groups[oid];
        let paid: Vec<usize> = lines
            .iter()
            .copied()
            .filter(|&i| !tables.orders[i].gift_flag)
            .collect();
        let gift_units: u32 = lines
            .iter()
            .filter(|&&i| tables.orders[i].gift_flag)
            .map(|&i| tables.orders[i].quantity)
            .sum();
        if paid.is_empty() || gift_units == 0 {
            continue;
        }
        let target = if paid.len() == 1 {
            paid[0]
        } else {
            diagnostics.push(Diagnostic::new(
                "orders",
                None,
                format!(
                    "order {oid} has {} paid lines and gifts; gifts attached to the highest-priced line",
                    paid.len()
                ),
            ));
            // max_by returns the last maximum; fold keeps the first.
            paid.iter().copied().fold(paid[0], |best, i| {
                if tables.orders[i].original_unit_price > tables.orders[best].original_unit_price {
                    i
                } else {
                    best
                }
            })
        };
        gifts_for.insert(target, gift_units);
    }
    let orders = std::mem::take(&mut tables.orders);
    tables.orders = orders
        .into_iter()
        .enumerate()
        .filter(|(_, o)| !o.gift_flag)
        .map(|(i, mut o)| {
            o.num_gifts += gifts_for.get(&i).copied().unwrap_or(0);
            o
        })
        .collect();
    tables.diagnostics.extend(diagnostics);
    tables.flag_foreign();
    tables
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountRatios {
    pub direct: f64,
    pub quantity: f64,
    pub bundle: f64,
    pub coupon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RatioError {
    NonPositivePrice(f64),
    OutOfRange { kind: &'static str, value: f64 },
}

impl std::fmt::Display for RatioError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RatioError::NonPositivePrice(p) => {
                write!(f, "original unit price {p} is not positive; ratios undefined")
            }
            RatioError::OutOfRange { kind, value } => {
                write!(f, "{kind} discount ratio {value} outside [0, 1]")
            }
        }
    }
}

/// Per-unit discounts as fractions of the original unit price.
pub fn discount_ratios(order: &Order) -> std::result::Result<DiscountRatios, RatioError> {
    let price = order.original_unit_price;
    if !(price > 0.0) {
        return Err(RatioError::NonPositivePrice(price));
    }
    let ratio = |kind: &'static str, d: f64| {
        let r = d / price;
        if (0.0..=1.0).contains(&r) {
            Ok(r)
        } else {
            Err(RatioError::OutOfRange { kind, value: r })
        }
    };
    Ok(DiscountRatios {
        direct: ratio("direct", order.direct_discount)?,
        quantity: ratio("quantity", order.quantity_discount)?,
        bundle: ratio("bundle", order.bundle_discount)?,
        coupon: ratio("coupon", order.coupon_discount)?,
    })
}

/// Frame plus the rows that were excluded while building it.
#[derive(Debug, Clone)]
pub struct FrameBuild {
    pub frame: Frame,
    pub diagnostics: Vec<Diagnostic>,
}

struct SalesRow {
    row_id: String,
    sku_id: String,
    cells: Vec<Cell>,
    target: f64,
}

enum Cell {
    Num(f64),
    Cat(String),
}

fn numeric_or_missing(v: Option<f64>) -> Cell {
    Cell::Num(v.unwrap_or(MISSING))
}

fn label(raw: &str) -> Cell {
    Cell::Cat(raw.trim().to_string())
}

fn sales_rows(tables: &RawTables, history: &ClickHistory) -> (Vec<SalesRow>, Vec<Diagnostic>) {
    let users: HashMap<&str, &User> =
        tables.users.iter().map(|u| (u.user_id.as_str(), u)).collect();
    let skus: HashMap<&str, _> = tables.skus.iter().map(|s| (s.sku_id.as_str(), s)).collect();
    let channels = history.order_channels();
    let mut diagnostics = Vec::new();
    let mut rows = Vec::new();
    for o in tables.orders.iter().filter(|o| !o.gift_flag) {
        let ratios = match discount_ratios(o) {
            Ok(r) => r,
            Err(e) => {
                diagnostics.push(Diagnostic::new(
                    "orders",
                    None,
                    format!("order {} sku {} excluded: {e}", o.order_id, o.sku_id),
                ));
                continue;
            }
        };
        if o.final_unit_price == 0.0 {
            diagnostics.push(Diagnostic::new(
                "orders",
                None,
                format!("order {} sku {} is paid but has final price 0", o.order_id, o.sku_id),
            ));
        }
        let user = users.get(o.user_id.as_str());
        let cat = |f: fn(&User) -> &str| user.map_or(Cell::Cat(String::new()), |u| label(f(u)));
        let sku = skus.get(o.sku_id.as_str());
        let channel = channels
            .get(&(o.order_id.clone(), o.sku_id.clone()))
            .cloned()
            .unwrap_or_else(|| UNKNOWN_CHANNEL.to_string());
        let cells = vec![
            cat(|u| &u.gender),
            cat(|u| &u.marital_status),
            cat(|u| &u.education),
            cat(|u| &u.user_level),
            cat(|u| &u.plus_status),
            Cell::Num(user.map_or(MISSING, |u| f64::from(u.city_level))),
            Cell::Num(user.map_or(MISSING, |u| f64::from(u.purchase_power))),
            numeric_or_missing(sku.and_then(|s| s.attribute1)),
            numeric_or_missing(sku.and_then(|s| s.attribute2)),
            Cell::Cat(o.product_type.to_string()),
            Cell::Num(o.original_unit_price),
            Cell::Num(o.promise_days.map_or(MISSING, f64::from)),
            Cell::Num(f64::from(o.num_gifts)),
            Cell::Num(ratios.direct),
            Cell::Num(ratios.quantity),
            Cell::Num(ratios.bundle),
            Cell::Num(ratios.coupon),
            Cell::Cat(channel),
            Cell::Cat(DAYS[o.timestamp.weekday().num_days_from_monday() as usize].to_string()),
            Cell::Cat(o.timestamp.hour().to_string()),
        ];
        rows.push(SalesRow {
            row_id: format!("{}:{}", o.order_id, o.sku_id),
            sku_id: o.sku_id.clone(),
            cells,
            target: f64::from(o.quantity),
        });
    }
    (rows, diagnostics)
}

/// Sorts labels numerically when they all parse as integers, else lexically.
fn sort_levels(levels: BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = levels.into_iter().collect();
    if v.iter().all(|l| l.parse::<i64>().is_ok()) {
        v.sort_by_key(|l| l.parse::<i64>().unwrap_or(0));
    }
    v
}

fn sales_schema_from_rows(rows: &[SalesRow]) -> Schema {
    let features = SALES_FEATURES
        .iter()
        .enumerate()
        .map(|(j, name)| match *name {
            "day_of_week" => {
                FeatureSpec::categorical(*name, DAYS.iter().map(|d| d.to_string()).collect())
            }
            "hour_of_day" => FeatureSpec::categorical(*name, (0..24).map(|h| h.to_string()).collect()),
            "original_price" | "num_gifts" | "direct_discount_ratio"
            | "quantity_discount_ratio" | "bundle_discount_ratio" | "coupon_discount_ratio" => {
                FeatureSpec::numeric(*name)
            }
            "city_level" | "purchase_power" | "attribute1" | "attribute2" | "promise" => {
                FeatureSpec::numeric_with_missing(*name)
            }
            _ => {
                let levels: BTreeSet<String> = rows
                    .iter()
                    .filter_map(|r| match &r.cells[j] {
                        Cell::Cat(s) if !is_missing_label(s) => Some(s.clone()),
                        _ => None,
                    })
                    .collect();
                FeatureSpec::categorical(*name, sort_levels(levels))
            }
        })
        .collect();
    Schema {
        features,
        target: "quantity".into(),
        task: Task::Regression,
    }
}

fn encode(rows: &[SalesRow], schema: &Schema) -> (Vec<f64>, Vec<f64>, Vec<String>) {
    let mut data = Vec::with_capacity(rows.len() * schema.len());
    for r in rows {
        for (spec, cell) in schema.features.iter().zip(&r.cells) {
            data.push(match cell {
                Cell::Num(v) => *v,
                Cell::Cat(s) if is_missing_label(s) => MISSING,
                Cell::Cat(s) => spec.encode_level(s),
            });
        }
    }
    let target = rows.iter().map(|r| r.target).collect();
    let ids = rows.iter().map(|r| r.row_id.clone()).collect();
    (data, target, ids)
}

/// One row per paid order line; target is the ordered quantity. Level
/// dictionaries come from the data.
pub fn build_sales_frame(tables: &RawTables, history: &ClickHistory) -> Result<FrameBuild> {
    let (rows, diagnostics) = sales_rows(tables, history);
    let schema = sales_schema_from_rows(&rows);
    let (data, target, ids) = encode(&rows, &schema);
    Ok(FrameBuild {
        frame: Frame::new(schema, data, target, ids)?,
        diagnostics,
    })
}

/// Same as [`build_sales_frame`] but encodes against an existing schema so
/// that train and predict frames agree. Unseen levels become `-1`.
pub fn build_sales_frame_with_schema(
    tables: &RawTables,
    history: &ClickHistory,
    schema: &Schema,
) -> Result<FrameBuild> {
    let names = schema.names();
    if names != SALES_FEATURES {
        return Err(Error::SchemaMismatch {
            feature: names
                .iter()
                .zip(SALES_FEATURES.iter())
                .find(|(a, b)| a != b)
                .map_or_else(|| "<length>".to_string(), |(a, _)| a.to_string()),
            detail: "not a sales-frame schema".into(),
        });
    }
    let (rows, diagnostics) = sales_rows(tables, history);
    let (data, target, ids) = encode(&rows, schema);
    Ok(FrameBuild {
        frame: Frame::new(schema.clone(), data, target, ids)?,
        diagnostics,
    })
}

/// SKUs with both attributes recorded, as `(ids, points)`.
pub fn sku_points(tables: &RawTables) -> (Vec<String>, Vec<Vec<f64>>) {
    tables
        .skus
        .iter()
        .filter_map(|s| s.attributes().map(|a| (s.sku_id.clone(), a.to_vec())))
        .unzip()
}

/// Product-choice frame: paid lines on clustered SKUs, target = cluster
/// label, attributes removed from the features. Lines on SKUs missing either
/// attribute are dropped.
pub fn build_choice_frame(
    tables: &RawTables,
    history: &ClickHistory,
    clusters: &ClusterModel,
) -> Result<FrameBuild> {
    let labels = clusters.labels_by_id();
    if labels.is_empty() {
        return Err(Error::InvalidArgument(
            "cluster model carries no SKU ids".into(),
        ));
    }
    let attrs: HashMap<&str, bool> = tables
        .skus
        .iter()
        .map(|s| (s.sku_id.as_str(), s.attributes().is_some()))
        .collect();
    let (rows, mut diagnostics) = sales_rows(tables, history);
    let schema = sales_schema_from_rows(&rows);
    let mut kept = Vec::new();
    let mut classes = Vec::new();
    let mut dropped = 0usize;
    for r in rows {
        let complete = attrs.get(r.sku_id.as_str()).copied().unwrap_or(false);
        match labels.get(&r.sku_id) {
            Some(&label) if complete => {
                classes.push(label as f64);
                kept.push(r);
            }
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        diagnostics.push(Diagnostic::new(
            "orders",
            None,
            format!("{dropped} order lines dropped: SKU lacks attributes or cluster label"),
        ));
    }
    let (data, _, ids) = encode(&kept, &schema);
    let full = Frame::new(schema, data, classes.clone(), ids)?;
    let mut frame = full.drop_features(&CLUSTER_ATTRIBUTES);
    let mut schema = frame.schema().clone();
    schema.target = "cluster".into();
    schema.task = Task::Classification {
        classes: (0..clusters.k()).map(|c| c.to_string()).collect(),
    };
    frame = Frame::new(
        schema,
        frame.data().to_vec(),
        classes,
        frame.row_ids().to_vec(),
    )?;
    Ok(FrameBuild { frame, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::clicks::dedup_clicks;
    use crate::ingest::tables::{Click, Sku};
    use chrono::NaiveDate;

    fn ts(day: u32, hour: u32) -> chrono::NaiveDateTime {
        NaiveDate::from_ymd_opt(2018, 3, day)
            .unwrap()
            .and_hms_opt(hour, 0, 0)
            .unwrap()
    }

    fn line(order: &str, sku: &str, qty: u32, price: f64, gift: bool) -> Order {
        Order {
            order_id: order.into(),
            user_id: "u1".into(),
            sku_id: sku.into(),
            timestamp: ts(1, 21),
            quantity: qty,
            original_unit_price: if gift { 0.0 } else { price },
            final_unit_price: if gift { 0.0 } else { price },
            direct_discount: 0.0,
            quantity_discount: 0.0,
            bundle_discount: 0.0,
            coupon_discount: 0.0,
            gift_flag: gift,
            promise_days: Some(1),
            product_type: 1,
            num_gifts: 0,
        }
    }

    fn user() -> User {
        User {
            user_id: "u1".into(),
            age_band: "26-35".into(),
            gender: "F".into(),
            education: "3".into(),
            marital_status: "married".into(),
            plus_status: "0".into(),
            user_level: "3".into(),
            city_level: 1,
            purchase_power: 2,
            first_order_month: "2016-01".into(),
        }
    }

    fn tables(orders: Vec<Order>) -> RawTables {
        let mut t = RawTables {
            users: vec![user()],
            orders,
            skus: vec![
                Sku { sku_id: "S1".into(), attribute1: Some(3.0), attribute2: Some(80.0) },
                Sku { sku_id: "S2".into(), attribute1: Some(1.0), attribute2: None },
            ],
            ..Default::default()
        };
        t.flag_foreign();
        t
    }

    #[test]
    fn gifts_are_counted_onto_paid_line() {
        let t = tables(vec![
            line("o1", "S1", 1, 191.0, false),
            line("o1", "S2", 2, 0.0, true),
            line("o1", "S3", 2, 0.0, true),
        ]);
        let out = count_gifts(t);
        assert_eq!(out.orders.len(), 1);
        assert_eq!(out.orders[0].sku_id, "S1");
        assert_eq!(out.orders[0].num_gifts, 4);
    }

    #[test]
    fn all_gift_order_is_removed() {
        let t = tables(vec![line("o1", "S2", 1, 0.0, true), line("o2", "S1", 1, 10.0, false)]);
        let out = count_gifts(t);
        assert_eq!(out.orders.len(), 1);
        assert_eq!(out.orders[0].order_id, "o2");
        assert_eq!(out.orders[0].num_gifts, 0);
    }

    #[test]
    fn multiple_paid_lines_attach_to_highest_price() {
        let t = tables(vec![
            line("o1", "S1", 1, 50.0, false),
            line("o1", "S2", 1, 80.0, false),
            line("o1", "S3", 3, 0.0, true),
        ]);
        let out = count_gifts(t);
        assert_eq!(out.orders.len(), 2);
        assert_eq!(out.orders[0].num_gifts, 0);
        assert_eq!(out.orders[1].num_gifts, 3);
        assert_eq!(out.diagnostics.len(), 1);
    }

    #[test]
    fn ratio_examples() {
        let mut o = line("o", "S1", 1, 100.0, false);
        o.direct_discount = 5.0;
        let r = discount_ratios(&o).unwrap();
        assert_eq!((r.direct, r.quantity, r.bundle, r.coupon), (0.05, 0.0, 0.0, 0.0));

        let o = line("o", "S1", 1, 200.0, false);
        let r = discount_ratios(&o).unwrap();
        assert_eq!((r.direct, r.quantity, r.bundle, r.coupon), (0.0, 0.0, 0.0, 0.0));

        let mut o = line("o", "S1", 1, 80.0, false);
        o.quantity_discount = 20.0;
        o.coupon_discount = 8.0;
        let r = discount_ratios(&o).unwrap();
        assert_eq!((r.direct, r.quantity, r.bundle, r.coupon), (0.0, 0.25, 0.0, 0.10));
    }

    #[test]
    fn ratio_errors() {
        let o = line("o", "S1", 1, 0.0, false);
        assert!(matches!(discount_ratios(&o), Err(RatioError::NonPositivePrice(_))));
        let mut o = line("o", "S1", 1, 10.0, false);
        o.coupon_discount = 12.0;
        assert!(matches!(discount_ratios(&o), Err(RatioError::OutOfRange { .. })));
    }

    #[test]
    fn single_order_sales_frame() {
        let mut o = line("o1", "S1", 3, 191.0, false);
        o.promise_days = None;
        let mut t = tables(vec![o]);
        t.clicks.push(Click {
            user_id: "u1".into(),
            sku_id: "S1".into(),
            timestamp: ts(1, 20),
            channel: "pc".into(),
        });
        let t = count_gifts(t);
        let h = dedup_clicks(&t);
        let built = build_sales_frame(&t, &h).unwrap();
        let f = built.frame;
        assert_eq!(f.n_rows(), 1);
        assert_eq!(f.n_features(), SALES_FEATURES.len());
        assert_eq!(f.target(), &[3.0]);
        let promise = f.schema().index_of("promise").unwrap();
        assert_eq!(f.value(0, promise), MISSING);
        let ch = f.schema().index_of("channel").unwrap();
        assert_eq!(f.schema().features[ch].display_value(f.value(0, ch)), "pc");
        let dow = f.schema().index_of("day_of_week").unwrap();
        // 2018-03-01 was a Thursday
        assert_eq!(f.schema().features[dow].display_value(f.value(0, dow)), "Thu");
    }

    #[test]
    fn paid_zero_price_emits_diagnostic() {
        let mut o = line("o1", "S1", 1, 100.0, false);
        o.final_unit_price = 0.0;
        o.direct_discount = 100.0;
        let t = tables(vec![o]);
        let built = build_sales_frame(&t, &dedup_clicks(&t)).unwrap();
        assert_eq!(built.frame.n_rows(), 1);
        assert_eq!(built.diagnostics.len(), 1);
    }

    #[test]
    fn choice_frame_drops_incomplete_skus() {
        let t = tables(vec![line("o1", "S1", 1, 10.0, false), line("o2", "S2", 1, 10.0, false)]);
        let h = dedup_clicks(&t);
        let model = ClusterModel::from_labels(vec!["S1".into()], vec![2], 3);
        let built = build_choice_frame(&t, &h, &model).unwrap();
        assert_eq!(built.frame.n_rows(), 1);
        assert_eq!(built.frame.target(), &[2.0]);
        assert_eq!(built.frame.n_features(), SALES_FEATURES.len() - 2);
        assert!(built.frame.schema().index_of("attribute1").is_none());
    }
}
