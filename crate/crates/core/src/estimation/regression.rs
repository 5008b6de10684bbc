use nalgebra::{DMatrix, DVector};

use super::panel::Panel;
use crate::prelude::*;
use crate::{Error, Result};

/// Reciprocal condition number below which a design is treated as rank
/// deficient (after scaling columns to unit norm).
const RCOND_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StdErrors {
    /// Heteroskedasticity-consistent, HC1 small-sample scaling.
    #[default]
    Robust,
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub std_error: Vec<f64>,
    pub residuals: Vec<f64>,
    pub n: usize,
    /// Residual degrees of freedom after absorbed fixed effects.
    pub dof: usize,
}

impl OlsFit {
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| (self.coef[k], self.std_error[k]))
    }

    pub fn t_stat(&self, name: &str) -> Option<f64> {
        self.get(name).map(|(b, se)| b / se)
    }
}

/// Cholesky of `X'X` after a rank check; reused to residualize many
/// outcomes against one design.
#[derive(Debug, Clone)]
pub struct Projector {
    x: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Projector {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let (n, k) = x.shape();
        if n <= k {
            return Err(Error::InsufficientData(format!(
                "{n} observations for {k} regressors"
            )));
        }
        let xtx = x.transpose() * &x;
        let scale: Vec<f64> = (0..k).map(|j| xtx[(j, j)].sqrt()).collect();
        if let Some(j) = scale.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::Singular(format!(
                "regressor {j} is identically zero"
            )));
        }
        let scaled = DMatrix::from_fn(k, k, |i, j| xtx[(i, j)] / (scale[i] * scale[j]));
        let sv = scaled.singular_values();
        let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        });
        if !(lo > RCOND_MIN * hi) {
            return Err(Error::Singular(format!(
                "reciprocal condition {:e}",
                lo / hi
            )));
        }
        let chol = nalgebra::Cholesky::new(xtx)
            .ok_or_else(|| Error::Singular("X'X not positive definite".into()))?;
        Ok(Self { x, chol })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn coefficients(&self, y: &[f64]) -> DVector<f64> {
        let y = DVector::from_column_slice(y);
        self.chol.solve(&(self.x.transpose() * y))
    }

    pub fn residuals(&self, y: &[f64]) -> Vec<f64> {
        let beta = self.coefficients(y);
        let fitted = &self.x * beta;
        y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect()
    }

    fn inverse_xtx(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Least squares of `y` on the columns of `x`. `absorbed` counts fixed
/// effects already removed from `y` and `x`, for the degrees of freedom.
pub fn ols(
    y: &[f64],
    x: DMatrix<f64>,
    names: Vec<String>,
    se: StdErrors,
    absorbed: usize,
) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "outcome length",
            expected: n,
            got: y.len(),
        });
    }
    if names.len() != k {
        return Err(Error::DimensionMismatch {
            what: "regressor names",
            expected: k,
            got: names.len(),
        });
    }
    if n <= k + absorbed {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {} parameters",
            k + absorbed
        )));
    }
    let proj = Projector::new(x)?;
    let beta = proj.coefficients(y);
    let resid: Vec<f64> = {
        let fitted = proj.design() * &beta;
        y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect()
    };
    let dof = n - k - absorbed;
    let inv = proj.inverse_xtx();
    let cov = match se {
        StdErrors::Plain => {
            let s2 = resid.iter().map(|e| e * e).sum::<f64>() / dof as f64;
            inv * s2
        }
        StdErrors::Robust => {
            let x = proj.design();
            let mut meat = DMatrix::<f64>::zeros(k, k);
            for (i, e) in resid.iter().enumerate() {
                let row = x.row(i);
                meat += row.transpose() * row * (e * e);
            }
            (&inv * meat * &inv) * (n as f64 / dof as f64)
        }
    };
    Ok(OlsFit {
        names,
        coef: beta.iter().copied().collect(),
        std_error: (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect(),
        residuals: resid,
        n,
        dof,
    })
}

/// Subtracts group means in place from each column of `cols` and from `y`.
/// Returns the number of groups.
fn within_transform(groups: &[usize], y: &mut [f64], cols: &mut [Vec<f64>]) -> usize {
    let g = groups.iter().copied().max().map_or(0, |m| m + 1);
    let mut count = vec![0.0; g];
    for &k in groups {
        count[k] += 1.0;
    }
    let demean = |v: &mut [f64]| {
        let mut sum = vec![0.0; g];
        for (x, &k) in v.iter().zip(groups) {
            sum[k] += x;
        }
        for (x, &k) in v.iter_mut().zip(groups) {
            *x -= sum[k] / count[k];
        }
    };
    demean(y);
    for c in cols.iter_mut() {
        demean(c);
    }
    g
}

/// Interns labels in first-seen order.
fn group_ids<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<usize> {
    let mut seen: Vec<&str> = Vec::new();
    labels
        .map(|l| match seen.iter().position(|s| *s == l) {
            Some(k) => k,
            None => {
                seen.push(l);
                seen.len() - 1
            }
        })
        .collect()
}

/// One keyword market in the price-interaction regression.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketRow {
    pub price: f64,
    pub search_cost_high: bool,
    pub algo_high: bool,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionFit {
    pub fit: OlsFit,
    pub fixed_effects: bool,
    /// Markets dropped because their category had no other market.
    pub dropped_singletons: usize,
}

pub const INTERACTION_TERMS: [&str; 3] = [
    "search_cost_high",
    "algo_high",
    "search_cost_high_x_algo_high",
];

/// Price on the two dummies and their interaction, with either a constant
/// or category fixed effects.
pub fn interaction_regression(
    rows: &[MarketRow],
    fixed_effects: bool,
    se: StdErrors,
) -> Result<InteractionFit> {
    let mut kept: Vec<&MarketRow> = rows.iter().collect();
    let mut dropped = 0;
    if fixed_effects {
        let ids = group_ids(rows.iter().map(|r| r.category.as_str()));
        let mut count = vec![0usize; ids.iter().copied().max().map_or(0, |m| m + 1)];
        for &k in &ids {
            count[k] += 1;
        }
        kept = rows
            .iter()
            .zip(&ids)
            .filter(|(_, &k)| count[k] >= 2)
            .map(|(r, _)| r)
            .collect();
        dropped = rows.len() - kept.len();
    }
    let dummy = |b: bool| if b { 1.0 } else { 0.0 };
    let mut y: Vec<f64> = kept.iter().map(|r| r.price).collect();
    let mut cols = vec![
        kept.iter()
            .map(|r| dummy(r.search_cost_high))
            .collect::<Vec<_>>(),
        kept.iter().map(|r| dummy(r.algo_high)).collect(),
        kept.iter()
            .map(|r| dummy(r.search_cost_high && r.algo_high))
            .collect(),
    ];
    let mut names: Vec<String> = INTERACTION_TERMS.iter().map(|s| s.to_string()).collect();
    let absorbed = if fixed_effects {
        let ids = group_ids(kept.iter().map(|r| r.category.as_str()));
        within_transform(&ids, &mut y, &mut cols)
    } else {
        cols.push(vec![1.0; y.len()]);
        names.push("constant".into());
        0
    };
    let x = DMatrix::from_fn(y.len(), cols.len(), |i, j| cols[j][i]);
    let fit = ols(&y, x, names, se, absorbed)?;
    Ok(InteractionFit {
        fit,
        fixed_effects,
        dropped_singletons: dropped,
    })
}

/// Product-level observation for the descriptive sales regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SalesObs {
    pub product: usize,
    pub position: f64,
    pub price: f64,
    pub sales: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptiveFit {
    pub fit: OlsFit,
    /// Products with a single observation, which the product effects absorb
    /// entirely.
    pub dropped_products: usize,
}

pub const DESCRIPTIVE_TERMS: [&str; 3] = ["position", "log_price", "position_x_log_price"];

/// Within-product least squares of log sales on position, log price and
/// their product.
pub fn descriptive_sales_regression(obs: &[SalesObs], se: StdErrors) -> Result<DescriptiveFit> {
    if let Some(o) = obs.iter().find(|o| !(o.sales > 0.0) || !(o.price > 0.0)) {
        return Err(Error::data(format!(
            "product {}: sales and price must be positive",
            o.product
        )));
    }
    let n_products = obs.iter().map(|o| o.product + 1).max().unwrap_or(0);
    let mut count = vec![0usize; n_products];
    for o in obs {
        count[o.product] += 1;
    }
    let kept: Vec<&SalesObs> = obs.iter().filter(|o| count[o.product] >= 2).collect();
    let dropped_products = count.iter().filter(|&&c| c == 1).count();
    let mut y: Vec<f64> = kept.iter().map(|o| o.sales.ln()).collect();
    let mut cols = vec![
        kept.iter().map(|o| o.position).collect::<Vec<_>>(),
        kept.iter().map(|o| o.price.ln()).collect(),
        kept.iter().map(|o| o.position * o.price.ln()).collect(),
    ];
    let ids = group_ids_usize(kept.iter().map(|o| o.product), n_products);
    let absorbed = within_transform(&ids, &mut y, &mut cols);
    let x = DMatrix::from_fn(y.len(), cols.len(), |i, j| cols[j][i]);
    let names = DESCRIPTIVE_TERMS.iter().map(|s| s.to_string()).collect();
    let fit = ols(&y, x, names, se, absorbed)?;
    Ok(DescriptiveFit {
        fit,
        dropped_products,
    })
}

fn group_ids_usize(ids: impl Iterator<Item = usize>, bound: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; bound];
    let mut next = 0;
    ids.map(|i| {
        if map[i] == usize::MAX {
            map[i] = next;
            next += 1;
        }
        map[i]
    })
    .collect()
}

/// Observed product-days of a panel as sales observations, positions taken
/// as the day's mean rank. Products are numbered across markets.
pub fn sales_observations(panel: &Panel) -> Vec<SalesObs> {
    let mut out = Vec::new();
    let mut offset = 0;
    for m in &panel.markets {
        for t in 0..m.days {
            for j in 0..m.n_products() {
                let k = m.idx(t, j);
                if m.observed[k] && m.sales[k] > 0.0 {
                    out.push(SalesObs {
                        product: offset + j,
                        position: m.mean_rank(t, j, panel.n_positions),
                        price: m.prices[k],
                        sales: m.sales[k],
                    });
                }
            }
        }
        offset += m.n_products();
    }
    out
}
