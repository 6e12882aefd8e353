//! Generator configuration, defaults and validation.

use rand::distr::weighted::WeightedIndex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::MonthWindow;

/// Standard normal 0.9 quantile.
pub(crate) const Z90: f64 = 1.281_551_565_544_600_4;

const PROB_TOL: f64 = 1e-6;

/// Discrete prior over labelled levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPrior<T> {
    pub levels: Vec<T>,
    pub probs: Vec<f64>,
}

impl<T: Clone> LevelPrior<T> {
    pub fn new(pairs: &[(T, f64)]) -> Self {
        Self {
            levels: pairs.iter().map(|(l, _)| l.clone()).collect(),
            probs: pairs.iter().map(|(_, p)| *p).collect(),
        }
    }

    pub(crate) fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.probs).expect("validated prior")
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.levels.is_empty() || self.levels.len() != self.probs.len() {
            return Err(Error::Config(format!("{name}: levels and probs must be non-empty and equally long")));
        }
        check_distribution(name, &self.probs)
    }
}

fn labels(pairs: &[(&str, f64)]) -> LevelPrior<String> {
    LevelPrior {
        levels: pairs.iter().map(|(l, _)| l.to_string()).collect(),
        probs: pairs.iter().map(|(_, p)| *p).collect(),
    }
}

pub(crate) fn check_distribution(name: &str, probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Config(format!("{name}: probabilities must be finite and non-negative")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::Config(format!("{name}: probabilities sum to {total}, expected 1")));
    }
    Ok(())
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemographicPriors {
    pub age_band: LevelPrior<String>,
    pub gender: LevelPrior<String>,
    pub education: LevelPrior<String>,
    pub marital_status: LevelPrior<String>,
    pub plus_status: LevelPrior<String>,
    pub user_level: LevelPrior<String>,
    pub city_level: LevelPrior<i32>,
    pub purchase_power: LevelPrior<i32>,
}

impl Default for DemographicPriors {
    fn default() -> Self {
        Self {
            age_band: labels(&[
                ("<16", 0.01),
                ("16-25", 0.18),
                ("26-35", 0.38),
                ("36-45", 0.20),
                ("46-55", 0.10),
                (">55", 0.03),
                ("unknown", 0.10),
            ]),
            gender: labels(&[("female", 0.45), ("male", 0.45), ("unknown", 0.10)]),
            education: labels(&[("1", 0.15), ("2", 0.35), ("3", 0.30), ("4", 0.08), ("unknown", 0.12)]),
            marital_status: labels(&[("single", 0.35), ("married", 0.45), ("unknown", 0.20)]),
            plus_status: labels(&[("plus", 0.20), ("non-plus", 0.80)]),
            user_level: labels(&[
                ("-1", 0.06),
                ("0", 0.10),
                ("1", 0.22),
                ("2", 0.25),
                ("3", 0.20),
                ("4", 0.15),
                ("10", 0.02),
            ]),
            city_level: LevelPrior::new(&[(-1, 0.05), (1, 0.15), (2, 0.25), (3, 0.25), (4, 0.18), (5, 0.12)]),
            purchase_power: LevelPrior::new(&[(-1, 0.05), (1, 0.10), (2, 0.25), (3, 0.30), (4, 0.20), (5, 0.10)]),
        }
    }
}

impl DemographicPriors {
    fn validate(&self) -> Result<()> {
        self.age_band.validate("age_band")?;
        self.gender.validate("gender")?;
        self.education.validate("education")?;
        self.marital_status.validate("marital_status")?;
        self.plus_status.validate("plus_status")?;
        self.user_level.validate("user_level")?;
        self.city_level.validate("city_level")?;
        self.purchase_power.validate("purchase_power")
    }
}

/// Per-unit discount ratios. The direct discount's presence is set by the
/// planted choice rule; the others appear independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscountRegime {
    pub direct_max: f64,
    pub quantity_probability: f64,
    pub quantity_max: f64,
    pub bundle_probability: f64,
    pub bundle_max: f64,
    pub coupon_probability: f64,
    pub coupon_max: f64,
}

impl Default for DiscountRegime {
    fn default() -> Self {
        Self {
            direct_max: 0.2,
            quantity_probability: 0.15,
            quantity_max: 0.15,
            bundle_probability: 0.10,
            bundle_max: 0.10,
            coupon_probability: 0.30,
            coupon_max: 0.15,
        }
    }
}

impl DiscountRegime {
    fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("quantity_probability", self.quantity_probability),
            ("bundle_probability", self.bundle_probability),
            ("coupon_probability", self.coupon_probability),
        ] {
            check_unit(n, v)?;
        }
        let maxes = [self.direct_max, self.quantity_max, self.bundle_max, self.coupon_max];
        if maxes.iter().any(|m| !(*m >= 0.01)) || maxes.iter().sum::<f64>() >= 0.95 {
            return Err(Error::Config(
                "discount maxima must each be at least 0.01 and sum below 0.95".into(),
            ));
        }
        Ok(())
    }
}

/// Latent sales score. Buyers are ranked by it and the ranks are mapped onto
/// the unit-count buckets, so larger scores mean more units.
///
/// `score = promise_x_user_level * s_p * s_l + user_level * s_l + plus * [plus]
///        + num_gifts * gifts + coupon_ratio * r_coupon
///        + quantity_discount_ratio * r_quantity + jd_product * [type 1] + noise`
///
/// with `s_p = (promise - 3) / 2` (0 when unavailable) and `s_l` the
/// user-level score: -1 for new users, 2 for enterprise users, and
/// `(level - 1.5) / 2.5` for levels 0 to 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SalesResponse {
    pub promise_x_user_level: f64,
    pub user_level: f64,
    pub plus: f64,
    pub num_gifts: f64,
    pub coupon_ratio: f64,
    pub quantity_discount_ratio: f64,
    pub jd_product: f64,
    pub noise_sd: f64,
}

impl Default for SalesResponse {
    fn default() -> Self {
        Self {
            promise_x_user_level: 1.2,
            user_level: 0.4,
            plus: 0.3,
            num_gifts: 0.25,
            coupon_ratio: 3.0,
            quantity_discount_ratio: 4.0,
            jd_product: 0.2,
            noise_sd: 0.5,
        }
    }
}

impl SalesResponse {
    pub fn promise_score(promise: Option<u8>) -> f64 {
        promise.map_or(0.0, |p| (f64::from(p) - 3.0) / 2.0)
    }

    pub fn user_level_score(label: &str) -> f64 {
        match label.trim().parse::<i32>() {
            Ok(-1) => -1.0,
            Ok(10) => 2.0,
            Ok(l) if (0..=4).contains(&l) => (f64::from(l) - 1.5) / 2.5,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Required; generation refuses to run without it.
    pub seed: Option<u64>,
    pub n_users: usize,
    pub buyer_fraction: f64,
    /// Share of buyers per total-units bucket 1..9, 10+.
    pub unit_mass: Vec<f64>,
    /// Cap on units for the 10+ bucket.
    pub max_units: u32,
    pub spend_median: f64,
    pub spend_p90: f64,
    /// P(span < 1h, 1d, 1w) for buyers.
    pub span_cdf_buyers: [f64; 3],
    pub span_cdf_non_buyers: [f64; 3],
    /// Probability that a multi-day span is a whole number of days plus
    /// a small jitter.
    pub daily_amplitude: f64,
    pub mean_clicks: f64,
    /// Buyers whose order has no earlier click on the ordered SKU.
    pub unknown_channel_fraction: f64,
    pub demographics: DemographicPriors,
    pub channels: LevelPrior<String>,
    pub n_skus: usize,
    pub missing_attribute_fraction: f64,
    /// `(attribute1, attribute2)` per planted cluster; attribute1 is used
    /// verbatim, attribute2 gets Gaussian jitter.
    pub cluster_centers: Vec<[f64; 2]>,
    pub attribute2_sd: f64,
    pub cluster_prior: Vec<f64>,
    /// Weight multiplier on the last cluster for education levels 1 and 2.
    pub low_education_tilt: f64,
    /// Probability that the platform features follow the planted rule.
    pub choice_fidelity: f64,
    /// Probability that a buyer's SKU is drawn from those with attributes.
    pub attributed_choice_fraction: f64,
    pub discounts: DiscountRegime,
    pub gift_probability: f64,
    pub response: SalesResponse,
    pub window: MonthWindow,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: None,
            n_users: 100_000,
            buyer_fraction: 0.1778,
            unit_mass: vec![0.9469, 0.0477, 0.0040, 0.0006, 0.0002, 0.0001, 0.0001, 0.00005, 0.00005, 0.0003],
            max_units: 60,
            spend_median: 80.0,
            spend_p90: 210.0,
            span_cdf_buyers: [0.40, 0.54, 0.78],
            span_cdf_non_buyers: [0.70, 0.77, 0.88],
            daily_amplitude: 0.6,
            mean_clicks: 4.0,
            unknown_channel_fraction: 0.1776,
            demographics: DemographicPriors::default(),
            channels: labels(&[("app", 0.45), ("pc", 0.20), ("mobile", 0.20), ("wechat", 0.10), ("others", 0.05)]),
            n_skus: 2000,
            missing_attribute_fraction: 0.57,
            cluster_centers: vec![[1.0, 40.0], [1.0, 85.0], [4.0, 40.0], [4.0, 85.0]],
            attribute2_sd: 4.0,
            cluster_prior: vec![0.30, 0.25, 0.25, 0.20],
            low_education_tilt: 1.5,
            choice_fidelity: 0.9,
            attributed_choice_fraction: 0.75,
            discounts: DiscountRegime::default(),
            gift_probability: 0.08,
            response: SalesResponse::default(),
            window: MonthWindow::default(),
        }
    }
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            ..Self::default()
        }
    }

    pub fn n_buyers(&self) -> usize {
        (self.buyer_fraction * self.n_users as f64).round() as usize
    }

    pub fn window_seconds(&self) -> i64 {
        (self.window.end - self.window.start).num_seconds()
    }

    /// Log-normal `(mu, sigma)` matching the spend median and p90.
    pub fn spend_lognormal(&self) -> (f64, f64) {
        let mu = self.spend_median.ln();
        (mu, (self.spend_p90.ln() - mu) / Z90)
    }

    pub fn validate(&self) -> Result<u64> {
        let seed = self.seed.ok_or_else(|| Error::Config("a seed is required".into()))?;
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be positive".into()));
        }
        check_unit("buyer_fraction", self.buyer_fraction)?;
        if self.unit_mass.len() != 10 {
            return Err(Error::Config("unit_mass needs 10 buckets (1..9 and 10+)".into()));
        }
        check_distribution("unit_mass", &self.unit_mass)?;
        if self.max_units < 10 {
            return Err(Error::Config("max_units must be at least 10".into()));
        }
        if !(self.spend_median > 0.0) || !(self.spend_p90 > self.spend_median) || !self.spend_p90.is_finite() {
            return Err(Error::Config(format!(
                "spend targets need 0 < median < p90, got median {} and p90 {}",
                self.spend_median, self.spend_p90
            )));
        }
        for (name, cdf) in [("span_cdf_buyers", self.span_cdf_buyers), ("span_cdf_non_buyers", self.span_cdf_non_buyers)] {
            if cdf.iter().any(|p| !(0.0..=1.0).contains(p)) || cdf[0] > cdf[1] || cdf[1] > cdf[2] {
                return Err(Error::Config(format!("{name} must be non-decreasing within [0, 1]")));
            }
        }
        check_unit("daily_amplitude", self.daily_amplitude)?;
        if !(self.mean_clicks >= 1.0) || !self.mean_clicks.is_finite() {
            return Err(Error::Config("mean_clicks must be at least 1".into()));
        }
        check_unit("unknown_channel_fraction", self.unknown_channel_fraction)?;
        self.demographics.validate()?;
        self.channels.validate("channels")?;
        let k = self.cluster_centers.len();
        if k == 0 || self.n_skus < 2 * k {
            return Err(Error::Config("need at least one cluster and two SKUs per cluster".into()));
        }
        if self.cluster_prior.len() != k {
            return Err(Error::Config("cluster_prior must have one entry per cluster center".into()));
        }
        check_distribution("cluster_prior", &self.cluster_prior)?;
        for c in &self.cluster_centers {
            if !(1.0..=4.0).contains(&c[0]) || c[0].fract() != 0.0 || !(30.0..=100.0).contains(&c[1]) {
                return Err(Error::Config(format!(
                    "cluster center {c:?}: attribute1 must be an integer in 1..=4, attribute2 in [30, 100]"
                )));
            }
        }
        if !(self.attribute2_sd >= 0.0) || !self.attribute2_sd.is_finite() {
            return Err(Error::Config("attribute2_sd must be non-negative".into()));
        }
        if !(self.low_education_tilt > 0.0) || !self.low_education_tilt.is_finite() {
            return Err(Error::Config("low_education_tilt must be positive".into()));
        }
        check_unit("missing_attribute_fraction", self.missing_attribute_fraction)?;
        check_unit("choice_fidelity", self.choice_fidelity)?;
        check_unit("attributed_choice_fraction", self.attributed_choice_fraction)?;
        check_unit("gift_probability", self.gift_probability)?;
        self.discounts.validate()?;
        if !(self.response.noise_sd >= 0.0) || !self.response.noise_sd.is_finite() {
            return Err(Error::Config("response.noise_sd must be non-negative".into()));
        }
        if self.window_seconds() < 9 * 86_400 {
            return Err(Error::Config("window must span at least nine days".into()));
        }
        Ok(seed)
    }
}
