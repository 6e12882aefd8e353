//! Ridge (closed form) and LASSO (cyclic coordinate descent).
//!
//! Both minimize `(1/2n)·||y - Xb - b0||²` plus a penalty on the
//! standardized coefficients: `(λ/2)·||b||²` for ridge, `λ·||b||₁` for
//! LASSO. The intercept is never penalized. Coefficients are reported in
//! the units of the encoded design.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::encode::{Encoder, Matrix, Standardizer};
use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub encoder: Encoder,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub penalty: Penalty,
    pub lambda: f64,
    /// LASSO only: whether the coefficient change fell below `tol`.
    pub converged: bool,
    pub iterations: usize,
    /// Objective value after each coordinate-descent sweep (LASSO only).
    pub objective_trace: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl LinearModel {
    pub fn predict_encoded(&self, x: &[f64]) -> f64 {
        self.intercept
            + x.iter()
                .zip(&self.coefficients)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn predict(&self, frame: &Frame) -> Result<Vec<f64>> {
        let x = self.encoder.encode(frame)?;
        Ok((0..x.rows).map(|i| self.predict_encoded(x.row(i))).collect())
    }
}

/// Raw linear fit on an already-encoded design.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub diagnostics: Vec<String>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("penalty must be a non-negative real, got {lambda}")))
    }
}

fn check_shape(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows == 0 || x.rows != y.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows but target has {}",
            x.rows,
            y.len()
        )));
    }
    Ok(())
}

fn unstandardize(
    beta: &[f64],
    std: &Standardizer,
    y_mean: f64,
) -> (Vec<f64>, f64) {
    let coefs: Vec<f64> = beta
        .iter()
        .zip(&std.scale)
        .zip(&std.constant)
        .map(|((b, s), c)| if *c { 0.0 } else { b / s })
        .collect();
    let intercept = y_mean
        - coefs
            .iter()
            .zip(&std.mean)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    (coefs, intercept)
}

/// Solves `(ZᵀZ/n + λI) β = Zᵀy/n` on the standardized design. A singular
/// system (possible only at λ = 0) falls back to the minimum-norm solution.
pub fn ridge_fit_matrix(x: &Matrix, y: &[f64], lambda: f64) -> Result<LinearFit> {
    check_lambda(lambda)?;
    check_shape(x, y)?;
    let std = Standardizer::fit(x);
    let z = std.transform(x);
    let n = x.rows as f64;
    let p = x.cols;
    let y_mean = y.iter().sum::<f64>() / n;
    let zm = DMatrix::from_row_slice(x.rows, p, &z.data);
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    let mut gram = zm.transpose() * &zm / n;
    for j in 0..p {
        // constant columns are all-zero; pin them to zero
        gram[(j, j)] += if std.constant[j] { 1.0 } else { lambda };
    }
    let rhs = zm.transpose() * yc / n;
    let mut diagnostics = Vec::new();
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            diagnostics.push("normal equations singular; using minimum-norm solution".to_string());
            let svd = gram.svd(true, true);
            svd.solve(&rhs, 1e-12)
                .map_err(|e| Error::Invariant(format!("pseudo-inverse failed: {e}")))?
        }
    };
    let (coefficients, intercept) = unstandardize(beta.as_slice(), &std, y_mean);
    if coefficients.iter().any(|c| !c.is_finite()) || !intercept.is_finite() {
        return Err(Error::Invariant("ridge produced non-finite coefficients".into()));
    }
    Ok(LinearFit {
        coefficients,
        intercept,
        converged: true,
        iterations: 1,
        objective_trace: Vec::new(),
        diagnostics,
    })
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Smallest λ for which every standardized LASSO coefficient is zero.
pub fn lasso_lambda_max(x: &Matrix, y: &[f64]) -> f64 {
    let std = Standardizer::fit(x);
    let z = std.transform(x);
    let n = x.rows as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    (0..z.cols)
        .map(|j| {
            (0..z.rows)
                .map(|i| z.get(i, j) * (y[i] - y_mean))
                .sum::<f64>()
                .abs()
                / n
        })
        .fold(0.0, f64::max)
}

/// Cyclic coordinate descent with soft-thresholding, on standardized
/// columns. Stops when the largest coefficient change in a sweep is below
/// `tol`; otherwise returns the last iterate with `converged = false`.
pub fn lasso_fit_matrix(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LinearFit> {
    check_lambda(lambda)?;
    check_shape(x, y)?;
    let std = Standardizer::fit(x);
    let z = std.transform(x);
    let n = x.rows as f64;
    let p = x.cols;
    let y_mean = y.iter().sum::<f64>() / n;
    // column-major copy for cache-friendly coordinate updates
    let cols: Vec<Vec<f64>> = (0..p).map(|j| z.column(j)).collect();
    let mut beta = vec![0.0; p];
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let objective = |resid: &[f64], beta: &[f64]| {
        resid.iter().map(|r| r * r).sum::<f64>() / (2.0 * n)
            + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    };
    let mut trace = vec![objective(&resid, &beta)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if std.constant[j] {
                continue;
            }
            let col = &cols[j];
            let old = beta[j];
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / n + old;
            let new = soft_threshold(rho, lambda);
            let delta = new - old;
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(col) {
                    *r -= a * delta;
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        trace.push(objective(&resid, &beta));
        if max_delta < tol {
            converged = true;
            break;
        }
    }
    let mut diagnostics = Vec::new();
    if !converged {
        diagnostics.push(format!("coordinate descent stopped at max_iter = {max_iter}"));
    }
    let (coefficients, intercept) = unstandardize(&beta, &std, y_mean);
    Ok(LinearFit {
        coefficients,
        intercept,
        converged,
        iterations,
        objective_trace: trace,
        diagnostics,
    })
}

fn wrap(encoder: Encoder, fit: LinearFit, penalty: Penalty, lambda: f64) -> LinearModel {
    LinearModel {
        encoder,
        coefficients: fit.coefficients,
        intercept: fit.intercept,
        penalty,
        lambda,
        converged: fit.converged,
        iterations: fit.iterations,
        objective_trace: fit.objective_trace,
        diagnostics: fit.diagnostics,
    }
}

pub fn fit_ridge(frame: &Frame, lambda: f64) -> Result<LinearModel> {
    let encoder = Encoder::fit(frame);
    let x = encoder.encode(frame)?;
    let fit = ridge_fit_matrix(&x, frame.target(), lambda)?;
    Ok(wrap(encoder, fit, Penalty::L2, lambda))
}

pub fn fit_lasso(frame: &Frame, lambda: f64, tol: f64, max_iter: usize) -> Result<LinearModel> {
    let encoder = Encoder::fit(frame);
    let x = encoder.encode(frame)?;
    let fit = lasso_fit_matrix(&x, frame.target(), lambda, tol, max_iter)?;
    Ok(wrap(encoder, fit, Penalty::L1, lambda))
}
