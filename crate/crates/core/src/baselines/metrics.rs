use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
}

impl std::str::FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Self::Macro),
            "micro" => Ok(Self::Micro),
            other => Err(Error::InvalidArgument(format!(
                "unknown averaging {other:?}; expected macro or micro"
            ))),
        }
    }
}

fn check_lengths(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.is_empty() || pred.len() != actual.len() {
        return Err(Error::InvalidArgument(format!(
            "metric needs equal non-empty inputs, got {} predictions and {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub value: f64,
    pub averaging: Averaging,
    /// `(class, precision)` over every class seen in either input.
    pub per_class: Vec<(i64, f64)>,
    /// Classes that occur in `actual` but were never predicted.
    pub never_predicted: Vec<i64>,
}

pub fn precision(pred: &[f64], actual: &[f64], averaging: Averaging) -> Result<PrecisionReport> {
    check_lengths(pred, actual)?;
    let p: Vec<i64> = pred.iter().map(|v| v.round() as i64).collect();
    let a: Vec<i64> = actual.iter().map(|v| v.round() as i64).collect();
    let classes: BTreeSet<i64> = p.iter().chain(&a).copied().collect();
    let mut per_class = Vec::with_capacity(classes.len());
    let mut never_predicted = Vec::new();
    let mut tp_total = 0usize;
    for &c in &classes {
        let predicted = p.iter().filter(|&&x| x == c).count();
        let tp = p.iter().zip(&a).filter(|(x, y)| **x == c && **y == c).count();
        tp_total += tp;
        if predicted == 0 {
            never_predicted.push(c);
            per_class.push((c, 0.0));
        } else {
            per_class.push((c, tp as f64 / predicted as f64));
        }
    }
    let value = match averaging {
        Averaging::Macro => per_class.iter().map(|(_, v)| v).sum::<f64>() / per_class.len() as f64,
        Averaging::Micro => tp_total as f64 / p.len() as f64,
    };
    Ok(PrecisionReport {
        value,
        averaging,
        per_class,
        never_predicted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn macro_precision_three_quarters() {
        let pred = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let act = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0];
        let r = precision(&pred, &act, Averaging::Macro).unwrap();
        assert!((r.value - 0.75).abs() < 1e-12);
        assert!(r.never_predicted.is_empty());
    }

    #[test]
    fn perfect_and_absent_class() {
        let r = precision(&[0.0, 1.0], &[0.0, 1.0], Averaging::Macro).unwrap();
        assert_eq!(r.value, 1.0);
        let r = precision(&[0.0, 0.0], &[0.0, 1.0], Averaging::Macro).unwrap();
        assert_eq!(r.never_predicted, vec![1]);
        assert!((r.value - 0.25).abs() < 1e-12);
        let r = precision(&[0.0, 0.0], &[0.0, 1.0], Averaging::Micro).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
    }
}
