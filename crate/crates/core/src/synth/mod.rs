//! Seeded synthetic transaction month.
//!
//! Users, SKUs, clicks and orders are drawn so that the published marginal
//! shapes hold by construction: units per buyer follow the configured bucket
//! mass (buyers are ranked by a planted sales score and the ranks are cut at
//! the bucket quantiles), spend per buyer is log-normal, and first-to-last
//! event spans follow the per-cohort CDF targets with a daily revisit
//! component. SKUs belong to planted attribute clusters, and the platform
//! features of each order line encode the cluster through a rule that
//! mixes an exclusive-or of product type and promise with the presence of a
//! direct discount.
//!
//! Every user draws from its own ChaCha stream, so output does not depend
//! on the thread count.

mod config;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{DemographicPriors, DiscountRegime, LevelPrior, SalesResponse, SynthConfig};

use crate::error::Result;
use crate::ingest::{Click, Order, RawTables, Sku, TableCounts, User};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Span segments in seconds: below 1h, 1h to 1d, 1d to 1w, beyond.
const HOUR: i64 = 3_600;
const DAY: i64 = 86_400;
const WEEK: i64 = 7 * DAY;
const DAILY_JITTER_SECONDS: f64 = 1_800.0;
const PROMISE_MISSING_PROBABILITY: f64 = 0.1;

const STREAM_SKUS: u64 = 0x5b5;
const STREAM_USERS: u64 = 0x05e;
const STREAM_BUYERS: u64 = 0xb0b;

fn rng_for(seed: u64, purpose: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(stream);
    rng
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Planted generating parameters, for use as test oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub counts: TableCounts,
    pub buyers: usize,
    pub paid_lines: usize,
    pub gift_lines: usize,
    /// Buyers per total-units bucket 1..9, 10+.
    pub unit_buckets: Vec<u64>,
    /// Planted cluster of every SKU, including those without attributes.
    pub sku_clusters: BTreeMap<String, usize>,
    pub cluster_centers: Vec<[f64; 2]>,
    /// Paid lines per planted cluster on SKUs with both attributes.
    pub cluster_order_lines: Vec<usize>,
    pub spend_log_mu: f64,
    pub spend_log_sigma: f64,
    pub response: SalesResponse,
    pub interaction_pair: [String; 2],
    pub choice_rule: String,
}

impl GroundTruth {
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub tables: RawTables,
    pub truth: GroundTruth,
}

impl Synthetic {
    /// Writes the four CSV tables and `ground_truth.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        self.tables.write_dir(dir)?;
        self.truth.write(&dir.join(GROUND_TRUTH_FILE))
    }
}

struct Catalog {
    clusters: Vec<usize>,
    product_types: Vec<u8>,
    /// `by_cluster[c][attributed]` lists SKU indices.
    by_cluster: Vec<[Vec<usize>; 2]>,
    skus: Vec<Sku>,
}

fn sku_id(i: usize) -> String {
    format!("s{i:05}")
}

fn user_id(i: usize) -> String {
    format!("u{i:07}")
}

fn catalog(config: &SynthConfig, seed: u64) -> Catalog {
    let k = config.cluster_centers.len();
    let mut rng = rng_for(seed, STREAM_SKUS, 0);
    let jitter = Normal::new(0.0, config.attribute2_sd).expect("validated sd");
    let mut out = Catalog {
        clusters: Vec::with_capacity(config.n_skus),
        product_types: Vec::with_capacity(config.n_skus),
        by_cluster: vec![[Vec::new(), Vec::new()]; k],
        skus: Vec::with_capacity(config.n_skus),
    };
    for i in 0..config.n_skus {
        // the first 2k SKUs give every cluster one SKU with and one without attributes
        let (cluster, attributed) = if i < 2 * k {
            (i % k, i < k)
        } else {
            (
                rng.random_range(0..k),
                rng.random::<f64>() >= config.missing_attribute_fraction,
            )
        };
        let product_type = rng.random_range(1..=2u8);
        let center = config.cluster_centers[cluster];
        let attr2 = (center[1] + jitter.sample(&mut rng)).round().clamp(30.0, 100.0);
        out.clusters.push(cluster);
        out.product_types.push(product_type);
        out.by_cluster[cluster][usize::from(attributed)].push(i);
        out.skus.push(Sku {
            sku_id: sku_id(i),
            attribute1: attributed.then_some(center[0]),
            attribute2: attributed.then_some(attr2),
        });
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Gift {
    sku: usize,
    quantity: u32,
    price: f64,
}

#[derive(Debug, Clone)]
struct Purchase {
    cluster: usize,
    sku: usize,
    promise: Option<u8>,
    /// direct, quantity, bundle, coupon
    ratios: [f64; 4],
    gift: Option<Gift>,
    score: f64,
    spend: f64,
    tail_units: u32,
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Click { sku: usize, channel: usize },
    Order,
}

#[derive(Debug, Clone)]
struct Draft {
    user: User,
    purchase: Option<Purchase>,
    /// Seconds from the window start, ascending.
    events: Vec<(i64, EventKind)>,
}

struct Samplers {
    age: WeightedIndex<f64>,
    gender: WeightedIndex<f64>,
    education: WeightedIndex<f64>,
    marital: WeightedIndex<f64>,
    plus: WeightedIndex<f64>,
    level: WeightedIndex<f64>,
    city: WeightedIndex<f64>,
    power: WeightedIndex<f64>,
    channel: WeightedIndex<f64>,
    spend: LogNormal<f64>,
    noise: Normal<f64>,
    extra_clicks: Option<Poisson<f64>>,
    tail: Exp<f64>,
    jitter: Normal<f64>,
}

impl Samplers {
    fn new(config: &SynthConfig) -> Self {
        let d = &config.demographics;
        let (mu, sigma) = config.spend_lognormal();
        Self {
            age: d.age_band.sampler(),
            gender: d.gender.sampler(),
            education: d.education.sampler(),
            marital: d.marital_status.sampler(),
            plus: d.plus_status.sampler(),
            level: d.user_level.sampler(),
            city: d.city_level.sampler(),
            power: d.purchase_power.sampler(),
            channel: config.channels.sampler(),
            spend: LogNormal::new(mu, sigma).expect("validated spend targets"),
            noise: Normal::new(0.0, config.response.noise_sd).expect("validated noise"),
            extra_clicks: (config.mean_clicks > 1.0)
                .then(|| Poisson::new(config.mean_clicks - 1.0).expect("validated click mean")),
            tail: Exp::new(0.2).expect("positive rate"),
            jitter: Normal::new(0.0, DAILY_JITTER_SECONDS).expect("positive sd"),
        }
    }
}

struct Generator<'a> {
    config: &'a SynthConfig,
    seed: u64,
    catalog: Catalog,
    samplers: Samplers,
    months: Vec<String>,
    window_month: String,
}

/// Months from 2003-12 up to the month before the window, oldest first.
fn history_months(config: &SynthConfig) -> (Vec<String>, String) {
    let start = config.window.start.date();
    let mut months = Vec::new();
    let mut d = NaiveDate::from_ymd_opt(2003, 12, 1).expect("valid date");
    while d < start.with_day(1).expect("first of month") {
        months.push(d.format("%Y-%m").to_string());
        d = d.checked_add_months(chrono::Months::new(1)).expect("in range");
    }
    (months, start.format("%Y-%m").to_string())
}

impl Generator<'_> {
    fn random_sku_except(&self, rng: &mut ChaCha8Rng, avoid: Option<usize>) -> usize {
        let n = self.config.n_skus;
        let s = rng.random_range(0..n);
        match avoid {
            Some(a) if a == s => (s + 1) % n,
            _ => s,
        }
    }

    /// Draws a span segment and a span in seconds for the cohort CDF.
    fn draw_span(&self, rng: &mut ChaCha8Rng, cdf: [f64; 3]) -> (usize, i64) {
        let longest = self.config.window_seconds() - DAY;
        let bounds = [(0, HOUR), (HOUR, DAY), (DAY, WEEK), (WEEK, longest)];
        let u: f64 = rng.random();
        let segment = cdf.iter().position(|&c| u < c).unwrap_or(3);
        let (lo, hi) = bounds[segment];
        let log_uniform = |rng: &mut ChaCha8Rng| {
            let x = (lo.max(1) as f64).ln() + rng.random::<f64>() * ((hi as f64).ln() - (lo.max(1) as f64).ln());
            (x.exp() as i64).clamp(lo, hi - 1)
        };
        let span = match segment {
            0 => rng.random_range(0..HOUR),
            1 => log_uniform(rng),
            _ if rng.random::<f64>() < self.config.daily_amplitude => {
                let days = rng.random_range(lo / DAY..=(hi - 1) / DAY).max(1);
                let jitter = self.samplers.jitter.sample(rng).round() as i64;
                (days * DAY + jitter).clamp(lo, hi - 1)
            }
            _ => log_uniform(rng),
        };
        (segment, span)
    }

    fn draw_clicks(&self, rng: &mut ChaCha8Rng) -> usize {
        1 + self.samplers.extra_clicks.as_ref().map_or(0, |p| p.sample(rng) as usize)
    }

    fn draw_user(&self, rng: &mut ChaCha8Rng, i: usize) -> User {
        let d = &self.config.demographics;
        let s = &self.samplers;
        let user_level = d.user_level.levels[s.level.sample(rng)].clone();
        let first_order_month = if user_level.trim() == "-1" || self.months.is_empty() {
            self.window_month.clone()
        } else {
            // linearly increasing density towards recent months
            let n = self.months.len();
            let j = ((n as f64 * rng.random::<f64>().sqrt()) as usize).min(n - 1);
            self.months[j].clone()
        };
        User {
            user_id: user_id(i),
            age_band: d.age_band.levels[s.age.sample(rng)].clone(),
            gender: d.gender.levels[s.gender.sample(rng)].clone(),
            education: d.education.levels[s.education.sample(rng)].clone(),
            marital_status: d.marital_status.levels[s.marital.sample(rng)].clone(),
            plus_status: d.plus_status.levels[s.plus.sample(rng)].clone(),
            user_level,
            city_level: d.city_level.levels[s.city.sample(rng)],
            purchase_power: d.purchase_power.levels[s.power.sample(rng)],
            first_order_month,
        }
    }

    fn draw_purchase(&self, rng: &mut ChaCha8Rng, user: &User) -> Purchase {
        let cfg = self.config;
        let k = cfg.cluster_centers.len();
        let mut weights = cfg.cluster_prior.clone();
        if matches!(user.education.trim(), "1" | "2") {
            weights[k - 1] *= cfg.low_education_tilt;
        }
        let cluster = WeightedIndex::new(&weights).expect("validated prior").sample(rng);
        let pool = &self.catalog.by_cluster[cluster];
        let want = usize::from(rng.random::<f64>() < cfg.attributed_choice_fraction);
        let list = if pool[want].is_empty() { &pool[1 - want] } else { &pool[want] };
        let sku = list[rng.random_range(0..list.len())];
        let product_type = self.catalog.product_types[sku];

        let low_bit = cluster & 1 == 1;
        let high_bit = (cluster >> 1) & 1 == 1;
        let keep_low = rng.random::<f64>() < cfg.choice_fidelity;
        let keep_high = rng.random::<f64>() < cfg.choice_fidelity;
        let promise = if rng.random::<f64>() < PROMISE_MISSING_PROBABILITY {
            None
        } else {
            let long = ((product_type == 2) ^ low_bit) == keep_low;
            Some(if long { rng.random_range(3..=6) } else { rng.random_range(1..=2) })
        };
        let dr = &cfg.discounts;
        let ratio = |rng: &mut ChaCha8Rng, present: bool, max: f64| {
            if present {
                rng.random_range(0.01..=max)
            } else {
                0.0
            }
        };
        let direct = ratio(rng, high_bit == keep_high, dr.direct_max);
        let p_q = rng.random::<f64>() < dr.quantity_probability;
        let quantity = ratio(rng, p_q, dr.quantity_max);
        let p_b = rng.random::<f64>() < dr.bundle_probability;
        let bundle = ratio(rng, p_b, dr.bundle_max);
        let p_c = rng.random::<f64>() < dr.coupon_probability;
        let coupon = ratio(rng, p_c, dr.coupon_max);

        let gift = (rng.random::<f64>() < cfg.gift_probability).then(|| Gift {
            sku: self.random_sku_except(rng, Some(sku)),
            quantity: rng.random_range(1..=2),
            price: round2(rng.random_range(5.0..30.0)),
        });

        let r = &cfg.response;
        let s_l = SalesResponse::user_level_score(&user.user_level);
        let s_p = SalesResponse::promise_score(promise);
        let plus = f64::from(u8::from(user.plus_status.trim() == "plus"));
        let gifts = f64::from(gift.map_or(0, |g| g.quantity));
        let score = r.promise_x_user_level * s_p * s_l
            + r.user_level * s_l
            + r.plus * plus
            + r.num_gifts * gifts
            + r.coupon_ratio * coupon
            + r.quantity_discount_ratio * quantity
            + r.jd_product * f64::from(u8::from(product_type == 1))
            + self.samplers.noise.sample(rng);
        let tail_units = (10 + self.samplers.tail.sample(rng) as u32).min(cfg.max_units);
        Purchase {
            cluster,
            sku,
            promise,
            ratios: [direct, quantity, bundle, coupon],
            gift,
            score,
            spend: self.samplers.spend.sample(rng),
            tail_units,
        }
    }

    /// Event times for one user. Buyers carry exactly one order event.
    fn draw_events(&self, rng: &mut ChaCha8Rng, purchase: Option<&Purchase>) -> Vec<(i64, EventKind)> {
        let cfg = self.config;
        let cdf = if purchase.is_some() { cfg.span_cdf_buyers } else { cfg.span_cdf_non_buyers };
        let (segment, mut span) = self.draw_span(rng, cdf);
        let unknown = purchase.is_some() && rng.random::<f64>() < cfg.unknown_channel_fraction;
        let mut clicks = self.draw_clicks(rng);
        if unknown {
            clicks -= 1;
        }
        if segment > 0 {
            clicks = clicks.max(if purchase.is_some() { 1 } else { 2 });
        }
        let n_events = clicks + usize::from(purchase.is_some());
        if n_events == 1 {
            span = 0;
        }
        let t0 = rng.random_range(0..cfg.window_seconds() - span);
        let mut times = vec![t0];
        if n_events > 1 {
            times.push(t0 + span);
            for _ in 2..n_events {
                times.push(t0 + rng.random_range(0..=span));
            }
            times.sort_unstable();
        }
        let mut events: Vec<(i64, EventKind)> = Vec::with_capacity(n_events);
        let order_at = match purchase {
            None => None,
            Some(_) if unknown => Some(0),
            Some(_) => Some(rng.random_range(1..n_events)),
        };
        for (pos, &t) in times.iter().enumerate() {
            let kind = if Some(pos) == order_at {
                EventKind::Order
            } else {
                let sku = match (purchase, order_at) {
                    // the click right before a known-channel order is on the ordered SKU
                    (Some(p), Some(o)) if !unknown && pos + 1 == o => p.sku,
                    (Some(p), _) if unknown => self.random_sku_except(rng, Some(p.sku)),
                    _ => self.random_sku_except(rng, None),
                };
                EventKind::Click {
                    sku,
                    channel: self.samplers.channel.sample(rng),
                }
            };
            events.push((t, kind));
        }
        events
    }

    fn draft(&self, i: usize, buyer: bool) -> Draft {
        let mut rng = rng_for(self.seed, STREAM_USERS, i as u64);
        let user = self.draw_user(&mut rng, i);
        let purchase = buyer.then(|| self.draw_purchase(&mut rng, &user));
        let events = self.draw_events(&mut rng, purchase.as_ref());
        Draft { user, purchase, events }
    }
}

/// Largest-remainder apportionment of `n` items over `mass`.
fn apportion(mass: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = mass.iter().map(|m| m * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..mass.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let short = n.saturating_sub(counts.iter().sum());
    for &b in order.iter().cycle().take(short) {
        counts[b] += 1;
    }
    counts
}

/// Units per buyer: the highest scores take the largest buckets.
fn assign_units(config: &SynthConfig, drafts: &[Draft]) -> (BTreeMap<usize, u32>, Vec<u64>) {
    let mut buyers: Vec<(usize, f64, u32)> = drafts
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.purchase.as_ref().map(|p| (i, p.score, p.tail_units)))
        .collect();
    buyers.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let counts = apportion(&config.unit_mass, buyers.len());
    let mut units = BTreeMap::new();
    let mut it = buyers.into_iter();
    for bucket in (0..counts.len()).rev() {
        for (i, _, tail) in it.by_ref().take(counts[bucket]) {
            let u = if bucket == 9 { tail } else { bucket as u32 + 1 };
            units.insert(i, u);
        }
    }
    (units, counts.iter().map(|&c| c as u64).collect())
}

const CHOICE_RULE: &str = "cluster bit 0 = [product_type == 2] xor [promise >= 3]; \
cluster bit 1 = [direct discount present]; each bit holds with probability choice_fidelity; \
promise is N/A with probability 0.1";

/// Generates the synthetic month.
pub fn generate(config: &SynthConfig) -> Result<Synthetic> {
    let seed = config.validate()?;
    let (months, window_month) = history_months(config);
    let generator = Generator {
        config,
        seed,
        catalog: catalog(config, seed),
        samplers: Samplers::new(config),
        months,
        window_month,
    };
    let n_buyers = config.n_buyers();
    let mut is_buyer = vec![false; config.n_users];
    for i in sample(&mut rng_for(seed, STREAM_BUYERS, 0), config.n_users, n_buyers) {
        is_buyer[i] = true;
    }
    let drafts: Vec<Draft> = (0..config.n_users)
        .into_par_iter()
        .map(|i| generator.draft(i, is_buyer[i]))
        .collect();
    let (units, unit_buckets) = assign_units(config, &drafts);

    let start = config.window.start;
    let catalog = &generator.catalog;
    let k = config.cluster_centers.len();
    let mut users = Vec::with_capacity(drafts.len());
    let mut clicks = Vec::new();
    let mut orders = Vec::new();
    let mut cluster_order_lines = vec![0usize; k];
    let (mut paid_lines, mut gift_lines) = (0usize, 0usize);
    for (i, d) in drafts.into_iter().enumerate() {
        for &(t, kind) in &d.events {
            let timestamp = start + Duration::seconds(t);
            match kind {
                EventKind::Click { sku, channel } => clicks.push(Click {
                    user_id: d.user.user_id.clone(),
                    sku_id: sku_id(sku),
                    timestamp,
                    channel: config.channels.levels[channel].clone(),
                }),
                EventKind::Order => {
                    let p = d.purchase.as_ref().expect("order events belong to buyers");
                    let order_id = format!("o{:07}", paid_lines + 1);
                    orders.push(paid_line(p, units[&i], &order_id, &d.user, timestamp, catalog));
                    paid_lines += 1;
                    if catalog.skus[p.sku].attributes().is_some() {
                        cluster_order_lines[p.cluster] += 1;
                    }
                    if let Some(g) = p.gift {
                        orders.push(Order {
                            order_id,
                            user_id: d.user.user_id.clone(),
                            sku_id: sku_id(g.sku),
                            timestamp,
                            quantity: g.quantity,
                            original_unit_price: g.price,
                            final_unit_price: 0.0,
                            direct_discount: 0.0,
                            quantity_discount: 0.0,
                            bundle_discount: 0.0,
                            coupon_discount: 0.0,
                            gift_flag: true,
                            promise_days: p.promise,
                            product_type: catalog.product_types[g.sku],
                            num_gifts: 0,
                        });
                        gift_lines += 1;
                    }
                }
            }
        }
        users.push(d.user);
    }
    let (spend_log_mu, spend_log_sigma) = config.spend_lognormal();
    let tables = RawTables {
        users,
        clicks,
        orders,
        skus: catalog.skus.clone(),
        foreign_orders: Vec::new(),
        diagnostics: Vec::new(),
    };
    let truth = GroundTruth {
        seed,
        counts: tables.counts(),
        buyers: n_buyers,
        paid_lines,
        gift_lines,
        unit_buckets,
        sku_clusters: catalog
            .clusters
            .iter()
            .enumerate()
            .map(|(i, &c)| (sku_id(i), c))
            .collect(),
        cluster_centers: config.cluster_centers.clone(),
        cluster_order_lines,
        spend_log_mu,
        spend_log_sigma,
        response: config.response.clone(),
        interaction_pair: ["promise".into(), "user_level".into()],
        choice_rule: CHOICE_RULE.into(),
    };
    Ok(Synthetic { tables, truth })
}

/// The paid line: unit price from the buyer's spend, then discounts from
/// the ratios, all rounded to cents.
fn paid_line(
    p: &Purchase,
    units: u32,
    order_id: &str,
    user: &User,
    timestamp: chrono::NaiveDateTime,
    catalog: &Catalog,
) -> Order {
    let total_ratio: f64 = p.ratios.iter().sum();
    let target_final = p.spend / f64::from(units);
    let original = round2(target_final / (1.0 - total_ratio)).max(0.01);
    let mut discounts = p.ratios.map(|r| round2(r * original));
    let mut final_price = round2(original - discounts.iter().sum::<f64>());
    if final_price < 0.01 {
        discounts = [0.0; 4];
        final_price = original;
    }
    Order {
        order_id: order_id.to_string(),
        user_id: user.user_id.clone(),
        sku_id: sku_id(p.sku),
        timestamp,
        quantity: units,
        original_unit_price: original,
        final_unit_price: final_price,
        direct_discount: discounts[0],
        quantity_discount: discounts[1],
        bundle_discount: discounts[2],
        coupon_discount: discounts[3],
        gift_flag: false,
        promise_days: p.promise,
        product_type: catalog.product_types[p.sku],
        num_gifts: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{
        build_sales_frame, count_gifts, dedup_clicks, parse_tables, ClickHistory, MonthWindow, ParseOptions,
        TablePaths, UNKNOWN_CHANNEL,
    };
    use crate::stats::{interaction_time_distribution, order_count_table, spend_distribution};
    use crate::Error;

    fn small(seed: u64, users: usize) -> SynthConfig {
        SynthConfig {
            n_users: users,
            n_skus: 400,
            ..SynthConfig::with_seed(seed)
        }
    }

    #[test]
    fn validation_rejects_bad_configs() {
        assert!(matches!(generate(&SynthConfig::default()), Err(Error::Config(_))));
        let bad_spend = SynthConfig { spend_p90: 70.0, ..SynthConfig::with_seed(1) };
        assert!(matches!(bad_spend.validate(), Err(Error::Config(_))));
        let mut bad_mass = SynthConfig::with_seed(1);
        bad_mass.unit_mass[0] = 0.5;
        assert!(bad_mass.validate().is_err());
        let mut bad_prior = SynthConfig::with_seed(1);
        bad_prior.demographics.gender.probs[0] = 0.9;
        assert!(bad_prior.validate().is_err());
        assert!(SynthConfig::with_seed(1).validate().is_ok());
    }

    #[test]
    fn lognormal_matches_targets() {
        let (mu, sigma) = SynthConfig::with_seed(0).spend_lognormal();
        assert!((mu.exp() - 80.0).abs() < 1e-9);
        assert!(((mu + config::Z90 * sigma).exp() - 210.0).abs() < 1e-9);
    }

    #[test]
    fn apportion_is_exact() {
        let c = apportion(&[0.5, 0.25, 0.25], 7);
        assert_eq!(c.iter().sum::<usize>(), 7);
        assert_eq!(c, vec![3, 2, 2]);
    }

    #[test]
    fn no_buyers_means_clicks_only() {
        let cfg = SynthConfig { buyer_fraction: 0.0, ..small(3, 500) };
        let s = generate(&cfg).unwrap();
        assert!(s.tables.orders.is_empty());
        assert!(!s.tables.clicks.is_empty());
        assert_eq!(s.tables.users.len(), 500);
    }

    #[test]
    fn deterministic_csv_output() {
        let cfg = small(7, 800);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate(&cfg).unwrap().write_dir(a.path()).unwrap();
        generate(&cfg).unwrap().write_dir(b.path()).unwrap();
        for f in ["users.csv", "clicks.csv", "orders.csv", "skus.csv", GROUND_TRUTH_FILE] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let other = generate(&small(8, 800)).unwrap();
        assert_ne!(other.tables.clicks, generate(&cfg).unwrap().tables.clicks);
    }

    #[test]
    fn tables_round_trip_without_diagnostics() {
        let s = generate(&small(11, 3000)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.write_dir(dir.path()).unwrap();
        let parsed = parse_tables(&TablePaths::in_dir(dir.path()), MonthWindow::default(), ParseOptions::default())
            .unwrap();
        assert!(parsed.diagnostics.is_empty());
        assert_eq!(parsed.counts(), s.truth.counts);
        assert_eq!(parsed.counts().users, 3000);
        let folded = count_gifts(parsed);
        assert!(folded.diagnostics.is_empty());
        assert_eq!(folded.orders.len(), s.truth.paid_lines);
        let history = dedup_clicks(&folded);
        let build = build_sales_frame(&folded, &history).unwrap();
        assert!(build.diagnostics.is_empty(), "{:?}", build.diagnostics);
        assert_eq!(build.frame.n_rows(), s.truth.paid_lines);
        assert_eq!(GroundTruth::read(&dir.path().join(GROUND_TRUTH_FILE)).unwrap(), s.truth);
    }

    #[test]
    fn marginals_match_targets() {
        let s = generate(&small(5, 40_000)).unwrap();
        let table = order_count_table(&s.tables);
        let targets = [94.69, 4.77, 0.40, 0.06, 0.02, 0.01, 0.01, 0.0, 0.0, 0.03];
        for (got, want) in table.percentages.iter().zip(targets) {
            assert!((got - want).abs() <= 1.0, "{got} vs {want}");
        }
        assert_eq!(table.counts, s.truth.unit_buckets);
        let spend = spend_distribution(&s.tables, 10.0).unwrap();
        let (m, p90) = (spend.median.unwrap(), spend.p90.unwrap());
        assert!((m / 80.0 - 1.0).abs() < 0.05, "median {m}");
        assert!((p90 / 210.0 - 1.0).abs() < 0.05, "p90 {p90}");
        let cohorts = interaction_time_distribution(&ClickHistory::raw(&s.tables), 10).unwrap();
        for (c, want) in cohorts.iter().zip([[0.40, 0.54, 0.78], [0.70, 0.77, 0.88]]) {
            for ((_, _, got), w) in c.checkpoints.iter().zip(want) {
                assert!((got - w).abs() < 0.02, "{} {got} vs {w}", c.cohort);
            }
        }
    }

    #[test]
    fn unknown_channel_share_tracks_config() {
        let s = generate(&small(9, 20_000)).unwrap();
        let channels = ClickHistory::raw(&s.tables).order_channels();
        let unknown = s
            .tables
            .orders
            .iter()
            .filter(|o| !o.gift_flag && channels[&(o.order_id.clone(), o.sku_id.clone())] == UNKNOWN_CHANNEL)
            .count() as f64;
        let share = unknown / s.truth.paid_lines as f64;
        assert!((share - 0.1776).abs() < 0.03, "{share}");
    }

    #[test]
    fn planted_clusters_have_distinct_attribute1() {
        let s = generate(&small(2, 100)).unwrap();
        for sku in &s.tables.skus {
            if let Some([a1, a2]) = sku.attributes() {
                let c = s.truth.sku_clusters[&sku.sku_id];
                assert_eq!(a1, s.truth.cluster_centers[c][0]);
                assert!((30.0..=100.0).contains(&a2) && a2.fract() == 0.0);
            }
        }
        let missing = s.tables.skus.iter().filter(|k| k.attributes().is_none()).count() as f64;
        assert!((missing / 400.0 - 0.57).abs() < 0.07);
    }
}
