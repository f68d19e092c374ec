use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tolerances::RANK_REL;

/// Least-squares Laurent polynomial `Σ a_k s^k` over the requested orders.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaurentFit {
    pub orders: Vec<i32>,
    pub coefficients: Vec<f64>,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

impl LaurentFit {
    pub fn coefficient(&self, order: i32) -> Option<f64> {
        self.orders.iter().position(|&o| o == order).map(|i| self.coefficients[i])
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.orders.iter().zip(&self.coefficients).map(|(&o, a)| a * s.powi(o)).sum()
    }
}

/// Fits `value ≈ Σ a_k s^k` by column-scaled SVD least squares.
pub fn fit_laurent(samples: &[(f64, f64)], orders: &[i32]) -> Result<LaurentFit> {
    if orders.is_empty() {
        return Err(Error::FitFailed("no orders requested".into()));
    }
    let mut distinct: Vec<f64> = samples.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < orders.len().max(4) {
        return Err(Error::FitFailed(format!(
            "{} distinct abscissae for {} orders",
            distinct.len(),
            orders.len()
        )));
    }
    if samples.iter().any(|(s, v)| !s.is_finite() || !v.is_finite() || *s == 0.0) {
        return Err(Error::FitFailed("samples must be finite with s ≠ 0".into()));
    }
    let (n, m) = (samples.len(), orders.len());
    let mut a = DMatrix::from_fn(n, m, |i, j| samples[i].0.powi(orders[j]));
    let y = DVector::from_iterator(n, samples.iter().map(|p| p.1));
    let scale: Vec<f64> = (0..m).map(|j| a.column(j).norm()).collect();
    for (j, sc) in scale.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / sc);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= RANK_REL * smax {
        return Err(Error::FitFailed(format!("design matrix rank deficient ({smin:e}/{smax:e})")));
    }
    let x = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::FitFailed(e.to_string()))?;
    let residual = ((&a * &x - &y).norm_squared() / n as f64).sqrt();
    let coefficients = x.iter().zip(&scale).map(|(c, sc)| c / sc).collect();
    Ok(LaurentFit {
        orders: orders.to_vec(),
        coefficients,
        residual,
    })
}
