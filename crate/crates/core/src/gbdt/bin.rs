//! Quantile binning of numeric features and direct binning of categorical
//! codes. Every feature gets one extra bin, the last, for missing cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FeatureKind, Frame};

pub const MAX_BINS_LIMIT: usize = 255;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureBins {
    /// Value bin `b` holds `edges[b-1] < v <= edges[b]`.
    Numeric {
        edges: Vec<f64>,
        missing_code: Option<f64>,
    },
    Categorical {
        n_levels: usize,
        missing_code: Option<f64>,
    },
}

impl FeatureBins {
    /// Number of non-missing bins.
    pub fn n_value_bins(&self) -> usize {
        match self {
            Self::Numeric { edges, .. } => edges.len() + 1,
            Self::Categorical { n_levels, .. } => *n_levels,
        }
    }

    pub fn missing_bin(&self) -> usize {
        self.n_value_bins()
    }

    pub fn n_bins(&self) -> usize {
        self.n_value_bins() + 1
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, Self::Categorical { .. })
    }

    pub fn is_missing(&self, v: f64) -> bool {
        let code = match self {
            Self::Numeric { missing_code, .. } | Self::Categorical { missing_code, .. } => {
                *missing_code
            }
        };
        v.is_nan() || code == Some(v)
    }

    /// Bin of a raw value. Unknown categorical codes share the missing bin.
    pub fn bin(&self, v: f64) -> usize {
        if self.is_missing(v) {
            return self.missing_bin();
        }
        match self {
            Self::Numeric { edges, .. } => edges.partition_point(|e| *e < v),
            Self::Categorical { n_levels, .. } => {
                if v >= 0.0 && v.fract() == 0.0 && (v as usize) < *n_levels {
                    v as usize
                } else {
                    self.missing_bin()
                }
            }
        }
    }
}

/// Midpoint edges giving roughly equal-population bins over `values`.
pub fn quantile_edges(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 || max_bins < 2 {
        return Vec::new();
    }
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
    }
    let mut edges: Vec<f64> = Vec::with_capacity(max_bins - 1);
    for b in 1..max_bins {
        let cut = ((b as f64) * n as f64 / max_bins as f64).round() as usize;
        if cut == 0 || cut >= n {
            continue;
        }
        let (lo, hi) = (sorted[cut - 1], sorted[cut]);
        if lo == hi {
            continue;
        }
        let e = lo + (hi - lo) / 2.0;
        if edges.last().is_none_or(|last| e > *last) {
            edges.push(e);
        }
    }
    edges
}

/// Column-major bin indices for a frame.
#[derive(Debug, Clone)]
pub struct BinnedData {
    pub bins: Vec<Vec<u8>>,
    pub features: Vec<FeatureBins>,
    pub n_rows: usize,
}

pub fn fit_bins(frame: &Frame, max_bins: usize) -> Result<Vec<FeatureBins>> {
    if !(2..=MAX_BINS_LIMIT).contains(&max_bins) {
        return Err(Error::InvalidArgument(format!(
            "max_bins must lie in 2..={MAX_BINS_LIMIT}, got {max_bins}"
        )));
    }
    frame
        .schema()
        .features
        .iter()
        .enumerate()
        .map(|(j, spec)| match &spec.kind {
            FeatureKind::Numeric => {
                let present: Vec<f64> = frame
                    .column(j)
                    .into_iter()
                    .filter(|v| !spec.is_missing(*v))
                    .collect();
                if present.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data(format!("feature `{}` has non-finite values", spec.name)));
                }
                Ok(FeatureBins::Numeric {
                    edges: quantile_edges(&present, max_bins),
                    missing_code: spec.missing_code,
                })
            }
            FeatureKind::Categorical { levels } => {
                if levels.len() > MAX_BINS_LIMIT {
                    return Err(Error::Data(format!(
                        "feature `{}` has {} levels; at most {MAX_BINS_LIMIT} are supported",
                        spec.name,
                        levels.len()
                    )));
                }
                Ok(FeatureBins::Categorical {
                    n_levels: levels.len(),
                    missing_code: spec.missing_code,
                })
            }
        })
        .collect()
}

pub fn apply_bins(frame: &Frame, features: &[FeatureBins]) -> BinnedData {
    let bins = features
        .iter()
        .enumerate()
        .map(|(j, fb)| {
            (0..frame.n_rows())
                .map(|i| fb.bin(frame.value(i, j)) as u8)
                .collect()
        })
        .collect();
    BinnedData {
        bins,
        features: features.to_vec(),
        n_rows: frame.n_rows(),
    }
}

pub fn bin_features(frame: &Frame, max_bins: usize) -> Result<BinnedData> {
    let features = fit_bins(frame, max_bins)?;
    Ok(apply_bins(frame, &features))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_edge() {
        assert_eq!(quantile_edges(&[1.0, 2.0, 3.0, 4.0], 2), vec![2.5]);
    }

    #[test]
    fn uniform_bins_balanced() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let fb = FeatureBins::Numeric { edges: quantile_edges(&v, 255), missing_code: None };
        assert_eq!(fb.n_value_bins(), 255);
        let mut counts = vec![0usize; 255];
        for x in &v {
            counts[fb.bin(*x)] += 1;
        }
        let expected = 1000.0 / 255.0;
        assert!(counts.iter().all(|&c| (c as f64 - expected).abs() <= 2.0));
    }

    #[test]
    fn constant_feature_single_bin() {
        let e = quantile_edges(&[3.0; 10], 255);
        assert!(e.is_empty());
        let fb = FeatureBins::Numeric { edges: e, missing_code: None };
        assert_eq!(fb.n_value_bins(), 1);
    }

    #[test]
    fn bin_lookup_respects_edges() {
        let fb = FeatureBins::Numeric {
            edges: vec![1.5, 2.5],
            missing_code: Some(-1.0),
        };
        assert_eq!(fb.bin(1.0), 0);
        assert_eq!(fb.bin(1.5), 0);
        assert_eq!(fb.bin(2.0), 1);
        assert_eq!(fb.bin(9.0), 2);
        assert_eq!(fb.bin(-1.0), 3);
        assert_eq!(fb.bin(f64::NAN), 3);
    }

    #[test]
    fn max_bins_bounds() {
        let f = Frame::from_rows(&["x"], &[vec![1.0]], vec![0.0]).unwrap();
        assert!(fit_bins(&f, 256).is_err());
        assert!(fit_bins(&f, 1).is_err());
    }
}
