use serde::Serialize;

use crate::error::{Error, Result};

/// Observed order of a sequence of errors against step sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderEstimate {
    /// Least-squares slope of `log e` against `log h`.
    pub order: f64,
    /// Orders between consecutive grids.
    pub pairwise: Vec<f64>,
    /// False when the errors do not decrease monotonically.
    pub reliable: bool,
}

/// Fits `e ≈ C h^order` to `(h, e)` pairs from at least three nested grids.
pub fn convergence_order(samples: &[(f64, f64)]) -> Result<OrderEstimate> {
    if samples.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "convergence order needs at least 3 grids, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|&(h, e)| !(h > 0.0) || !(e > 0.0)) {
        return Err(Error::InvalidInput("steps and errors must be positive".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let pairwise: Vec<f64> = sorted
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect();
    let reliable = sorted.windows(2).all(|w| w[1].1 < w[0].1);
    let n = sorted.len() as f64;
    let xs: Vec<f64> = sorted.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = sorted.iter().map(|s| s.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(OrderEstimate {
        order: sxy / sxx,
        pairwise,
        reliable,
    })
}
