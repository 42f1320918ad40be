//! Ordinary least-squares line fits.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

/// Fits `y = slope * x + intercept`. Needs at least two distinct abscissae.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = (0..n)
        .map(|i| {
            let e = y[i] - slope * x[i] - intercept;
            e * e
        })
        .sum();
    Some(LineFit {
        slope,
        intercept,
        residual: (ss / n as f64).sqrt(),
    })
}
