//! Descriptive statistics over raw transaction tables.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{is_missing_label, ClickHistory, RawTables, User};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Count,
    Probability,
}

/// Fixed-width bins starting at `start`; the last bin optionally absorbs
/// everything beyond its lower edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub start: f64,
    pub width: f64,
    pub n_bins: usize,
    pub last_open: bool,
}

impl BinSpec {
    /// 0..500 in steps of `width`, plus an overflow bin for values >= 500.
    pub fn currency(width: f64) -> Self {
        Self {
            start: 0.0,
            width,
            n_bins: (500.0 / width).round() as usize + 1,
            last_open: true,
        }
    }

    /// 1..10 units; the last bin holds 10 or more.
    pub fn units() -> Self {
        Self {
            start: 1.0,
            width: 1.0,
            n_bins: 10,
            last_open: true,
        }
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_bins)
            .map(|i| self.start + self.width * i as f64)
            .collect()
    }

    /// Bin of `v`; values below `start` fall in the first bin, values beyond
    /// the range in the last (open) bin. `None` past a closed last bin.
    pub fn index(&self, v: f64) -> Option<usize> {
        let raw = ((v - self.start) / self.width).floor();
        if raw < 0.0 {
            return Some(0);
        }
        let i = raw as usize;
        if i < self.n_bins {
            Some(i)
        } else if self.last_open {
            Some(self.n_bins - 1)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram1D {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<f64>,
    pub normalization: Normalization,
    /// The last bin extends to +infinity.
    pub last_bin_open: bool,
    /// Presentation hint: plot the x axis on a log scale.
    pub log_x: bool,
}

impl Histogram1D {
    pub fn from_values(values: &[f64], bins: BinSpec, normalization: Normalization) -> Self {
        let mut counts = vec![0.0; bins.n_bins];
        let mut n = 0usize;
        for &v in values {
            if let Some(i) = bins.index(v) {
                counts[i] += 1.0;
                n += 1;
            }
        }
        if normalization == Normalization::Probability && n > 0 {
            counts.iter_mut().for_each(|c| *c /= n as f64);
        }
        Self {
            bin_edges: bins.edges(),
            counts,
            normalization,
            last_bin_open: bins.last_open,
            log_x: false,
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Empirical distribution of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// P(X <= x).
    pub fn eval(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.sorted.partition_point(|v| *v <= x) as f64 / self.sorted.len() as f64
    }

    /// P(X < x).
    pub fn eval_below(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.sorted.partition_point(|v| *v < x) as f64 / self.sorted.len() as f64
    }

    /// Linear-interpolation quantile; `None` for an empty sample.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        let n = self.sorted.len();
        if n == 0 {
            return None;
        }
        let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        Some(self.sorted[lo] + (self.sorted[hi] - self.sorted[lo]) * frac)
    }

    /// `(x, P(X <= x))` at each distinct sample value.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.sorted.iter().enumerate() {
            let p = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = p,
                _ => out.push((v, p)),
            }
        }
        out
    }
}

pub const ORDER_BUCKET_LABELS: [&str; 10] = ["1", "2", "3", "4", "5", "6", "7", "8", "9", "10+"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderCountTable {
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
    /// Shares in percent, rounded to two decimals.
    pub percentages: Vec<f64>,
    pub total_buyers: u64,
}

/// Paid units per buyer (users with at least one non-gift order line).
pub fn units_per_buyer(tables: &RawTables) -> BTreeMap<String, u64> {
    let mut units: BTreeMap<String, u64> = BTreeMap::new();
    for o in tables.orders.iter().filter(|o| !o.gift_flag) {
        *units.entry(o.user_id.clone()).or_default() += u64::from(o.quantity);
    }
    units
}

/// Buyers bucketed by their total ordered units (1..9 and 10+).
pub fn order_count_table(tables: &RawTables) -> OrderCountTable {
    let mut counts = vec![0u64; 10];
    for &u in units_per_buyer(tables).values() {
        let b = (u.clamp(1, 10) - 1) as usize;
        counts[b] += 1;
    }
    let total: u64 = counts.iter().sum();
    let percentages = counts
        .iter()
        .map(|&c| {
            if total == 0 {
                0.0
            } else {
                (10000.0 * c as f64 / total as f64).round() / 100.0
            }
        })
        .collect();
    OrderCountTable {
        labels: ORDER_BUCKET_LABELS.iter().map(|s| s.to_string()).collect(),
        counts,
        percentages,
        total_buyers: total,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpendDistribution {
    pub histogram: Histogram1D,
    pub cdf: EmpiricalCdf,
    pub median: Option<f64>,
    pub p90: Option<f64>,
    pub buyers: usize,
}

/// Total spend (final unit price x quantity over paid lines) per buyer.
pub fn spend_per_buyer(tables: &RawTables) -> BTreeMap<String, f64> {
    let mut spend: BTreeMap<String, f64> = BTreeMap::new();
    for o in tables.orders.iter().filter(|o| !o.gift_flag) {
        *spend.entry(o.user_id.clone()).or_default() += o.final_unit_price * f64::from(o.quantity);
    }
    spend
}

pub fn spend_distribution(tables: &RawTables, bin_width: f64) -> Result<SpendDistribution> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidArgument("bin width must be positive".into()));
    }
    let values: Vec<f64> = spend_per_buyer(tables).into_values().collect();
    let cdf = EmpiricalCdf::new(&values);
    Ok(SpendDistribution {
        histogram: Histogram1D::from_values(
            &values,
            BinSpec::currency(bin_width),
            Normalization::Probability,
        ),
        median: cdf.quantile(0.5),
        p90: cdf.quantile(0.9),
        buyers: values.len(),
        cdf,
    })
}

/// Thresholds (in minutes) at which interaction-time CDFs are reported.
pub const SPAN_CHECKPOINTS: [(&str, f64); 3] = [("1h", 60.0), ("1d", 1440.0), ("1w", 10080.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpans {
    pub cohort: String,
    pub users: usize,
    pub pdf: Histogram1D,
    pub cdf: EmpiricalCdf,
    /// `(label, minutes, P(span < minutes))`.
    pub checkpoints: Vec<(String, f64, f64)>,
}

/// First-to-last event span per user, split into buyer and non-buyer cohorts.
pub fn interaction_time_distribution(
    histories: &ClickHistory,
    bin_minutes: u32,
) -> Result<Vec<CohortSpans>> {
    if bin_minutes == 0 {
        return Err(Error::InvalidArgument("bin width must be positive".into()));
    }
    let spans = histories.spans();
    let mut cohorts: [(String, Vec<f64>); 2] =
        [("buyer".into(), Vec::new()), ("non_buyer".into(), Vec::new())];
    for (user, secs) in &spans {
        let slot = usize::from(!histories.is_buyer(user));
        cohorts[slot].1.push(*secs as f64 / 60.0);
    }
    let longest = spans.values().copied().max().unwrap_or(0) as f64 / 60.0;
    let width = f64::from(bin_minutes);
    let bins = BinSpec {
        start: 0.0,
        width,
        n_bins: ((longest / width).floor() as usize + 1).max(1),
        last_open: false,
    };
    Ok(cohorts
        .into_iter()
        .map(|(cohort, minutes)| {
            let mut pdf = Histogram1D::from_values(&minutes, bins, Normalization::Probability);
            pdf.log_x = true;
            let cdf = EmpiricalCdf::new(&minutes);
            let checkpoints = SPAN_CHECKPOINTS
                .iter()
                .map(|(l, m)| (l.to_string(), *m, cdf.eval_below(*m)))
                .collect();
            CohortSpans {
                cohort,
                users: minutes.len(),
                pdf,
                cdf,
                checkpoints,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Demographic {
    Age,
    Gender,
    Education,
    MaritalStatus,
    PlusStatus,
    UserLevel,
}

impl Demographic {
    pub const ALL: [Demographic; 6] = [
        Demographic::Age,
        Demographic::Gender,
        Demographic::Education,
        Demographic::MaritalStatus,
        Demographic::PlusStatus,
        Demographic::UserLevel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Demographic::Age => "age",
            Demographic::Gender => "gender",
            Demographic::Education => "education",
            Demographic::MaritalStatus => "marital_status",
            Demographic::PlusStatus => "plus_status",
            Demographic::UserLevel => "user_level",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown demographic feature `{name}`")))
    }

    fn value(self, u: &User) -> &str {
        match self {
            Demographic::Age => &u.age_band,
            Demographic::Gender => &u.gender,
            Demographic::Education => &u.education,
            Demographic::MaritalStatus => &u.marital_status,
            Demographic::PlusStatus => &u.plus_status,
            Demographic::UserLevel => &u.user_level,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TotalSpend,
    TotalDiscount,
    UnitsPerOrder,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::TotalSpend, Metric::TotalDiscount, Metric::UnitsPerOrder];

    pub fn name(self) -> &'static str {
        match self {
            Metric::TotalSpend => "total_spend",
            Metric::TotalDiscount => "total_discount",
            Metric::UnitsPerOrder => "units_per_order",
        }
    }

    pub fn default_bins(self) -> BinSpec {
        match self {
            Metric::TotalSpend | Metric::TotalDiscount => BinSpec::currency(10.0),
            Metric::UnitsPerOrder => BinSpec::units(),
        }
    }
}

pub const UNKNOWN_LEVEL: &str = "Unknown";

/// Row-normalized 2-D histogram: one row per level of a categorical feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramGrid {
    pub feature: String,
    pub metric: String,
    pub row_labels: Vec<String>,
    pub col_edges: Vec<f64>,
    pub last_bin_open: bool,
    pub values: Vec<Vec<f64>>,
    pub row_counts: Vec<u64>,
    /// Rows with no observations (left all-zero).
    pub empty_rows: Vec<bool>,
}

/// Conditional distribution of `metric` for each level of `feature` among
/// buyers. Spend and discount are per buyer; units are per order.
pub fn conditional_2d_histogram(
    tables: &RawTables,
    feature: Demographic,
    metric: Metric,
    bins: BinSpec,
) -> Result<HistogramGrid> {
    if bins.n_bins == 0 || !(bins.width > 0.0) {
        return Err(Error::InvalidArgument("bins must be non-empty with positive width".into()));
    }
    let level_of = |u: &User| {
        let raw = feature.value(u).trim();
        if is_missing_label(raw) {
            UNKNOWN_LEVEL.to_string()
        } else {
            raw.to_string()
        }
    };
    let users: BTreeMap<&str, &User> =
        tables.users.iter().map(|u| (u.user_id.as_str(), u)).collect();
    let mut levels: BTreeSet<String> = tables
        .users
        .iter()
        .map(level_of)
        .filter(|l| l != UNKNOWN_LEVEL)
        .collect();
    if levels.is_empty() && tables.users.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "feature `{}` has no levels",
            feature.name()
        )));
    }
    let mut row_labels: Vec<String> = std::mem::take(&mut levels).into_iter().collect();
    if row_labels.iter().all(|l| l.parse::<i64>().is_ok()) {
        row_labels.sort_by_key(|l| l.parse::<i64>().unwrap_or(0));
    }
    row_labels.push(UNKNOWN_LEVEL.to_string());

    // (user, value) observations
    let observations: Vec<(String, f64)> = match metric {
        Metric::TotalSpend => spend_per_buyer(tables).into_iter().collect(),
        Metric::TotalDiscount => {
            let mut acc: BTreeMap<String, f64> = BTreeMap::new();
            for o in tables.orders.iter().filter(|o| !o.gift_flag) {
                let per_unit =
                    o.direct_discount + o.quantity_discount + o.bundle_discount + o.coupon_discount;
                *acc.entry(o.user_id.clone()).or_default() += per_unit * f64::from(o.quantity);
            }
            acc.into_iter().collect()
        }
        Metric::UnitsPerOrder => {
            let mut acc: BTreeMap<(String, String), f64> = BTreeMap::new();
            for o in tables.orders.iter().filter(|o| !o.gift_flag) {
                *acc.entry((o.order_id.clone(), o.user_id.clone())).or_default() +=
                    f64::from(o.quantity);
            }
            acc.into_iter().map(|((_, u), v)| (u, v)).collect()
        }
    };

    let mut values = vec![vec![0.0; bins.n_bins]; row_labels.len()];
    let mut row_counts = vec![0u64; row_labels.len()];
    let unknown_row = row_labels.len() - 1;
    for (user, v) in observations {
        let row = users
            .get(user.as_str())
            .map(|u| level_of(u))
            .and_then(|l| row_labels.iter().position(|r| *r == l))
            .unwrap_or(unknown_row);
        if let Some(b) = bins.index(v) {
            values[row][b] += 1.0;
            row_counts[row] += 1;
        }
    }
    for (row, &n) in values.iter_mut().zip(&row_counts) {
        if n > 0 {
            row.iter_mut().for_each(|c| *c /= n as f64);
        }
    }
    Ok(HistogramGrid {
        feature: feature.name().into(),
        metric: metric.name().into(),
        empty_rows: row_counts.iter().map(|&n| n == 0).collect(),
        row_labels,
        col_edges: bins.edges(),
        last_bin_open: bins.last_open,
        values,
        row_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Order;
    use chrono::NaiveDate;

    fn order(user: &str, id: &str, qty: u32, price: f64) -> Order {
        Order {
            order_id: id.into(),
            user_id: user.into(),
            sku_id: "s".into(),
            timestamp: NaiveDate::from_ymd_opt(2018, 3, 2).unwrap().and_hms_opt(1, 0, 0).unwrap(),
            quantity: qty,
            original_unit_price: price,
            final_unit_price: price,
            direct_discount: 0.0,
            quantity_discount: 0.0,
            bundle_discount: 0.0,
            coupon_discount: 0.0,
            gift_flag: false,
            promise_days: Some(1),
            product_type: 1,
            num_gifts: 0,
        }
    }

    fn user(id: &str, gender: &str) -> User {
        User {
            user_id: id.into(),
            age_band: "26-35".into(),
            gender: gender.into(),
            education: "3".into(),
            marital_status: "single".into(),
            plus_status: "0".into(),
            user_level: "1".into(),
            city_level: 1,
            purchase_power: 1,
            first_order_month: "2017-01".into(),
        }
    }

    #[test]
    fn order_counts_by_units() {
        let t = RawTables {
            orders: vec![order("a", "1", 1, 10.0), order("b", "2", 2, 10.0)],
            ..Default::default()
        };
        let table = order_count_table(&t);
        assert_eq!(table.counts, vec![1, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(table.percentages[0], 50.0);
    }

    #[test]
    fn large_buyer_goes_to_ten_plus() {
        let t = RawTables {
            orders: vec![order("a", "1", 521, 1.0)],
            ..Default::default()
        };
        assert_eq!(order_count_table(&t).counts[9], 1);
    }

    #[test]
    fn spend_median_and_cdf() {
        let t = RawTables {
            orders: vec![order("a", "1", 1, 80.0), order("b", "2", 1, 80.0), order("c", "3", 1, 80.0)],
            ..Default::default()
        };
        let s = spend_distribution(&t, 10.0).unwrap();
        assert_eq!(s.median, Some(80.0));
        assert_eq!(s.cdf.eval(80.0), 1.0);
        assert!((s.histogram.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_spend_in_first_bin_and_empty_is_null() {
        let t = RawTables {
            orders: vec![order("a", "1", 1, 0.0)],
            ..Default::default()
        };
        let s = spend_distribution(&t, 10.0).unwrap();
        assert_eq!(s.histogram.counts[0], 1.0);
        let empty = spend_distribution(&RawTables::default(), 10.0).unwrap();
        assert_eq!(empty.median, None);
        assert_eq!(empty.p90, None);
        assert_eq!(empty.histogram.total(), 0.0);
    }

    #[test]
    fn grid_rows_normalize() {
        let t = RawTables {
            users: vec![user("a", "F"), user("b", "F"), user("c", "M")],
            orders: vec![order("a", "1", 1, 5.0), order("b", "2", 1, 15.0)],
            ..Default::default()
        };
        let g = conditional_2d_histogram(&t, Demographic::Gender, Metric::TotalSpend, BinSpec::currency(10.0))
            .unwrap();
        assert_eq!(g.row_labels, vec!["F", "M", "Unknown"]);
        assert_eq!(&g.values[0][..3], &[0.5, 0.5, 0.0]);
        assert!(g.empty_rows[1] && g.empty_rows[2]);
        assert_eq!(g.values[1].iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn units_overflow_to_last_bin() {
        let t = RawTables {
            users: vec![user("a", "F")],
            orders: vec![order("a", "1", 12, 5.0)],
            ..Default::default()
        };
        let g = conditional_2d_histogram(&t, Demographic::Gender, Metric::UnitsPerOrder, BinSpec::units())
            .unwrap();
        assert_eq!(g.values[0][9], 1.0);
    }

    #[test]
    fn spans_bin_into_ten_minute_slots() {
        use crate::ingest::{Event, ClickHistory};
        let t0 = NaiveDate::from_ymd_opt(2018, 3, 2).unwrap().and_hms_opt(1, 0, 0).unwrap();
        let ev = |m: i64| Event {
            timestamp: t0 + chrono::Duration::minutes(m),
            sku_id: "s".into(),
            channel: "app".into(),
            is_order: false,
            order_id: None,
            is_gift: false,
        };
        let mut h = ClickHistory::default();
        h.users.insert("a".into(), vec![ev(0), ev(25)]);
        h.users.insert("b".into(), vec![ev(0)]);
        let out = interaction_time_distribution(&h, 10).unwrap();
        let non_buyers = &out[1];
        assert_eq!(non_buyers.users, 2);
        assert_eq!(non_buyers.pdf.counts[0], 0.5);
        assert_eq!(non_buyers.pdf.counts[2], 0.5);
        assert!(non_buyers.pdf.log_x);
    }
}
