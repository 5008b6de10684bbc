use crate::prelude::*;
use crate::{Error, Result};

/// Searches per keyword per day in the scraped data.
pub const SEARCHES_PER_DAY: usize = 8;

/// Daily searches implied by a monthly search volume.
pub fn daily_market_size(monthly_volume: f64) -> f64 {
    monthly_volume / 30.0
}

/// One keyword's panel: `products × days` observations stored day-major
/// (`day * n_products + product`), plus the rankings seen by each search.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordPanel {
    pub keyword: String,
    pub category: String,
    /// Monthly searches.
    pub volume: f64,
    pub products: Vec<String>,
    pub days: usize,
    pub n_features: usize,
    pub sales: Vec<f64>,
    pub shares: Vec<f64>,
    pub prices: Vec<f64>,
    pub sponsored: Vec<bool>,
    /// `n_features` values per observation.
    pub features: Vec<f64>,
    /// False for product-days without a sales record. They keep their
    /// ranking slot but are left out of inversion and moments.
    pub observed: Vec<bool>,
    /// `rankings[day][search]` lists product indices in position order.
    pub rankings: Vec<Vec<Vec<u32>>>,
}

impl KeywordPanel {
    pub fn n_products(&self) -> usize {
        self.products.len()
    }

    pub fn n_obs(&self) -> usize {
        self.products.len() * self.days
    }

    #[inline]
    pub fn idx(&self, day: usize, product: usize) -> usize {
        day * self.products.len() + product
    }

    pub fn feature(&self, day: usize, product: usize, k: usize) -> f64 {
        self.features[self.idx(day, product) * self.n_features + k]
    }

    /// Average position over the day's searches, counting the first
    /// appearance only. A search that does not show the product counts as
    /// one past the page.
    pub fn mean_rank(&self, day: usize, product: usize, n_positions: usize) -> f64 {
        let searches = &self.rankings[day];
        if searches.is_empty() {
            return (n_positions + 1) as f64;
        }
        let total: usize = searches
            .iter()
            .map(|r| {
                r.iter()
                    .position(|&p| p as usize == product)
                    .map_or(n_positions + 1, |k| k + 1)
            })
            .sum();
        total as f64 / searches.len() as f64
    }

    /// Every day's ranking lists, flattened.
    pub fn n_ranking_lists(&self) -> usize {
        self.rankings.iter().map(Vec::len).sum()
    }

    pub fn validate(&self, n_positions: usize) -> Result<()> {
        let n = self.n_obs();
        let lens = [
            ("sales", self.sales.len()),
            ("shares", self.shares.len()),
            ("prices", self.prices.len()),
            ("sponsored", self.sponsored.len()),
            ("observed", self.observed.len()),
        ];
        for (what, got) in lens {
            if got != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    got,
                });
            }
        }
        if self.features.len() != n * self.n_features {
            return Err(Error::DimensionMismatch {
                what: "features",
                expected: n * self.n_features,
                got: self.features.len(),
            });
        }
        if self.rankings.len() != self.days {
            return Err(Error::DimensionMismatch {
                what: "ranking days",
                expected: self.days,
                got: self.rankings.len(),
            });
        }
        if !(self.volume > 0.0) {
            return Err(Error::data(format!(
                "keyword {}: search volume must be positive",
                self.keyword
            )));
        }
        for (day, searches) in self.rankings.iter().enumerate() {
            for r in searches {
                if r.len() > n_positions {
                    return Err(Error::data(format!(
                        "keyword {} day {day}: ranking longer than the page",
                        self.keyword
                    )));
                }
                if r.iter().any(|&p| p as usize >= self.products.len()) {
                    return Err(Error::data(format!(
                        "keyword {} day {day}: unknown product in ranking",
                        self.keyword
                    )));
                }
            }
        }
        for day in 0..self.days {
            let mut total = 0.0;
            for j in 0..self.n_products() {
                let k = self.idx(day, j);
                if !self.observed[k] {
                    continue;
                }
                let s = self.shares[k];
                if !(s > 0.0 && s < 1.0) {
                    return Err(Error::data(format!(
                        "keyword {} day {day}: share {s} outside (0, 1)",
                        self.keyword
                    )));
                }
                total += s;
            }
            if total >= 1.0 {
                return Err(Error::data(format!(
                    "keyword {} day {day}: shares sum to {total}",
                    self.keyword
                )));
            }
        }
        Ok(())
    }
}

/// Keyword markets sharing one page layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    /// Listings on the first results page (22 or 60).
    pub n_positions: usize,
    pub markets: Vec<KeywordPanel>,
}

impl Panel {
    pub fn validate(&self) -> Result<()> {
        if self.n_positions == 0 {
            return Err(Error::data("page has no positions"));
        }
        if self.markets.is_empty() {
            return Err(Error::InsufficientData("panel has no markets".into()));
        }
        let nf = self.markets[0].n_features;
        for m in &self.markets {
            if m.n_features != nf {
                return Err(Error::DimensionMismatch {
                    what: "feature count",
                    expected: nf,
                    got: m.n_features,
                });
            }
            m.validate(self.n_positions)?;
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.markets.first().map_or(0, |m| m.n_features)
    }

    pub fn n_ranking_lists(&self) -> usize {
        self.markets.iter().map(KeywordPanel::n_ranking_lists).sum()
    }

    /// Single-keyword panel with the same layout.
    pub fn market(&self, k: usize) -> Panel {
        Panel {
            n_positions: self.n_positions,
            markets: vec![self.markets[k].clone()],
        }
    }
}
