//! Structural market parameters, logit demand over consideration sets and
//! consumer surplus.

use crate::numeric::log_sum_exp;
use crate::prelude::*;
use crate::{Error, Result};

/// All structural parameters of the market. Per-seller vectors all have
/// length `n()`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    /// Vertical quality `a_i` (utility units).
    pub quality: Vec<f64>,
    /// Marginal cost `c_i`.
    pub cost: Vec<f64>,
    /// Logit scale `μ`.
    pub mu: f64,
    /// Fraction of consumers who only consider the top (sponsored) slot.
    pub theta: f64,
    /// Platform commission rate on sales.
    pub tau: f64,
    /// Log-scale noise of realized bids.
    pub sigma: Vec<f64>,
    /// Clicks needed per sale (inverse conversion rate).
    pub gamma: Vec<f64>,
    /// Common discount factor.
    pub delta: f64,
}

impl MarketParams {
    /// Outside-option quality; fixed by normalization.
    pub const OUTSIDE_QUALITY: f64 = 0.0;

    /// The symmetric duopoly used throughout: `a = 2`, `c = 1`, `μ = 1/4`,
    /// `σ = 0.5`, `γ = 2`, `δ = 0.95`, no search friction and no commission.
    pub fn baseline() -> Self {
        Self {
            quality: vec![2.0, 2.0],
            cost: vec![1.0, 1.0],
            mu: 0.25,
            theta: 0.0,
            tau: 0.0,
            sigma: vec![0.5, 0.5],
            gamma: vec![2.0, 2.0],
            delta: 0.95,
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn n(&self) -> usize {
        self.quality.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < 2 {
            return Err(Error::domain("a market needs at least two sellers"));
        }
        for (what, v) in [
            ("cost", &self.cost),
            ("sigma", &self.sigma),
            ("gamma", &self.gamma),
        ] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::domain("mu must be positive"));
        }
        if self.sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::domain("sigma must be positive"));
        }
        if self.gamma.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::domain("gamma must be positive"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::domain("theta must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::domain("tau must lie in [0, 1)"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::domain("delta must lie in (0, 1)"));
        }
        if self
            .quality
            .iter()
            .chain(&self.cost)
            .any(|x| !x.is_finite())
        {
            return Err(Error::domain("qualities and costs must be finite"));
        }
        Ok(())
    }

    /// True when every per-seller parameter is identical across sellers.
    pub fn is_symmetric(&self) -> bool {
        let same = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
        same(&self.quality) && same(&self.cost) && same(&self.sigma) && same(&self.gamma)
    }

    /// Mean utility index `(a_i − p_i)/μ` relative to the outside option.
    pub fn utility_index(&self, seller: usize, price: f64) -> f64 {
        (self.quality[seller] - price) / self.mu
    }
}

/// The products a consumer considers, with their prices. Order is kept even
/// though logit demand ignores it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsiderationSet {
    pub members: Vec<usize>,
    pub prices: Vec<f64>,
}

impl ConsiderationSet {
    pub fn new(members: Vec<usize>, prices: Vec<f64>) -> Result<Self> {
        if members.len() != prices.len() {
            return Err(Error::DimensionMismatch {
                what: "consideration-set prices",
                expected: members.len(),
                got: prices.len(),
            });
        }
        for (k, m) in members.iter().enumerate() {
            if members[..k].contains(m) {
                return Err(Error::domain("consideration-set members must be distinct"));
            }
        }
        if prices.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain("prices must be finite"));
        }
        Ok(Self { members, prices })
    }

    pub fn singleton(seller: usize, price: f64) -> Self {
        Self {
            members: vec![seller],
            prices: vec![price],
        }
    }

    pub fn pair(first: usize, second: usize, prices: [f64; 2]) -> Result<Self> {
        Self::new(vec![first, second], prices.to_vec())
    }
}

/// Logit share of seller `i` among the consideration set plus the outside
/// option.
pub fn logit_share(cs: &ConsiderationSet, params: &MarketParams, i: usize) -> Result<f64> {
    let pos = cs
        .members
        .iter()
        .position(|&m| m == i)
        .ok_or_else(|| Error::domain("seller is not in the consideration set"))?;
    let mut indices = Vec::with_capacity(cs.members.len() + 1);
    for (&m, &p) in cs.members.iter().zip(&cs.prices) {
        if m >= params.n() {
            return Err(Error::domain("consideration-set member out of range"));
        }
        indices.push(params.utility_index(m, p));
    }
    indices.push(MarketParams::OUTSIDE_QUALITY);
    Ok((indices[pos] - log_sum_exp(&indices)).exp())
}

/// Share against the outside option only: `e^x / (1 + e^x)` for index `x`.
pub(crate) fn solo_share(index: f64) -> f64 {
    if index >= 0.0 {
        1.0 / (1.0 + (-index).exp())
    } else {
        let e = index.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + Σ e^{x_k})`, stable for large indices.
pub(crate) fn log_one_plus_sum_exp(indices: &[f64]) -> f64 {
    let max = indices.iter().copied().fold(0.0_f64, f64::max);
    let sum: f64 = (-max).exp() + indices.iter().map(|x| (x - max).exp()).sum::<f64>();
    max + sum.ln()
}

/// Expected consumer surplus of one period. `winprob[j]` is the
/// probability that seller `j` holds the top slot.
pub fn consumer_surplus(prices: &[f64], winprob: &[f64], params: &MarketParams) -> Result<f64> {
    let n = params.n();
    if prices.len() != n {
        return Err(Error::DimensionMismatch {
            what: "prices",
            expected: n,
            got: prices.len(),
        });
    }
    if winprob.len() != n {
        return Err(Error::DimensionMismatch {
            what: "winprob",
            expected: n,
            got: winprob.len(),
        });
    }
    if winprob.iter().any(|&w| !(0.0..=1.0).contains(&w))
        || (winprob.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::domain("winprob must be a probability distribution"));
    }
    if prices.iter().any(|p| !p.is_finite()) {
        return Err(Error::domain("prices must be finite"));
    }
    let idx: Vec<f64> = (0..n).map(|j| params.utility_index(j, prices[j])).collect();
    Ok(surplus_from_indices(&idx, winprob, params.theta, params.mu))
}

pub(crate) fn surplus_from_indices(idx: &[f64], top_prob: &[f64], theta: f64, mu: f64) -> f64 {
    let top: f64 = idx
        .iter()
        .zip(top_prob)
        .map(|(&x, &w)| w * mu * log_one_plus_sum_exp(&[x]))
        .sum();
    let all = mu * log_one_plus_sum_exp(idx);
    theta * top + (1.0 - theta) * all
}

/// Fraction of consumers who stop after the top slot, given a search-cost
/// CDF. `transform` maps a utility index to the quantity entering the
/// `log(1 + ·)` continuation values (identity or `exp`).
pub fn theta_from_search_costs(
    cdf: impl Fn(f64) -> f64,
    delta1: f64,
    delta2_cond: f64,
    transform: impl Fn(f64) -> f64,
) -> Result<f64> {
    let g1 = transform(delta1);
    let g2 = transform(delta2_cond);
    let first = (1.0 + g1).ln();
    let second = (1.0 + g1 + g2).ln() - (1.0 + g1).ln();
    if !first.is_finite() || !second.is_finite() {
        return Err(Error::domain("continuation values must be finite"));
    }
    let searches_first = cdf(first);
    if !(0.0..=1.0).contains(&searches_first) {
        return Err(Error::domain("cdf must return probabilities"));
    }
    if searches_first <= 0.0 {
        return Err(Error::DegenerateMarket(
            "no consumer searches the first position".into(),
        ));
    }
    let continues = cdf(second);
    Ok(((searches_first - continues) / searches_first).clamp(0.0, 1.0))
}
