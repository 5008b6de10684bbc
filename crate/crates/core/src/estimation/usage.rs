use crate::prelude::*;
use crate::{Error, Result};

/// Minimum number of common time points per product.
pub const MIN_SERIES_LEN: usize = 10;

/// What the correlation is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriceBasis {
    #[default]
    Levels,
    Logs,
    /// First differences of log prices.
    LogReturns,
}

/// Pearson correlation; `None` when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    // relative threshold so rounding noise on a flat series is not read as
    // variation
    let flat = |s: f64, m: f64| s <= 1e-24 * (n as f64) * m.abs().max(1.0).powi(2);
    if flat(sxx, mx) || flat(syy, my) {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn transform(series: &[f64], basis: PriceBasis) -> Result<Vec<f64>> {
    match basis {
        PriceBasis::Levels => Ok(series.to_vec()),
        PriceBasis::Logs | PriceBasis::LogReturns => {
            if series.iter().any(|&p| !(p > 0.0)) {
                return Err(Error::data("log prices need positive prices"));
            }
            let logs: Vec<f64> = series.iter().map(|p| p.ln()).collect();
            Ok(if basis == PriceBasis::Logs {
                logs
            } else {
                logs.windows(2).map(|w| w[1] - w[0]).collect()
            })
        }
    }
}

/// Share of products whose price series correlates with the mean of the
/// other products' series by at least `threshold`. Products with constant
/// prices are left out. `None` when no product qualifies.
pub fn algo_usage_index(
    prices: &[Vec<f64>],
    threshold: f64,
    basis: PriceBasis,
) -> Result<Option<f64>> {
    let n = prices.len();
    if n < 2 {
        return Err(Error::InsufficientData("need at least two products".into()));
    }
    let len = prices[0].len();
    if let Some(p) = prices.iter().find(|p| p.len() != len) {
        return Err(Error::DimensionMismatch {
            what: "price series length",
            expected: len,
            got: p.len(),
        });
    }
    if len < MIN_SERIES_LEN {
        return Err(Error::InsufficientData(format!(
            "{len} time points, need {MIN_SERIES_LEN}"
        )));
    }
    let series: Vec<Vec<f64>> = prices
        .iter()
        .map(|p| transform(p, basis))
        .collect::<Result<_>>()?;
    let m = series[0].len();
    let mut total = vec![0.0; m];
    for s in &series {
        for (t, v) in s.iter().enumerate() {
            total[t] += v;
        }
    }
    let mut hits = 0usize;
    let mut counted = 0usize;
    let mut others = vec![0.0; m];
    for s in &series {
        for t in 0..m {
            others[t] = (total[t] - s[t]) / (n - 1) as f64;
        }
        if let Some(r) = pearson(s, &others) {
            counted += 1;
            if r >= threshold {
                hits += 1;
            }
        }
    }
    Ok((counted > 0).then(|| hits as f64 / counted as f64))
}
