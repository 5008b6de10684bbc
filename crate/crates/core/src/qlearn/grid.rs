use crate::auction::AuctionSpec;
use crate::market::MarketParams;
use crate::numeric::linspace;
use crate::prelude::*;
use crate::solvers::solve_benchmarks;
use crate::{Error, Result};

pub const DEFAULT_PRICE_POINTS: usize = 15;
pub const DEFAULT_BID_POINTS: usize = 10;
pub const DEFAULT_XI: f64 = 0.1;

/// Discrete price and bid lattices. An action is a (price, bid) pair packed
/// as `price_index * bids.len() + bid_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    pub prices: Vec<f64>,
    pub bids: Vec<f64>,
    pub xi: f64,
}

/// Range of benchmark outcomes that a grid has to cover.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBounds {
    pub p_min: f64,
    pub p_max: f64,
    pub b_max: f64,
}

impl ActionGrid {
    pub fn from_bounds(bounds: GridBounds, xi: f64) -> Result<Self> {
        Self::with_sizes(bounds, xi, DEFAULT_PRICE_POINTS, DEFAULT_BID_POINTS)
    }

    pub fn with_sizes(bounds: GridBounds, xi: f64, n_prices: usize, n_bids: usize) -> Result<Self> {
        let GridBounds {
            p_min,
            p_max,
            b_max,
        } = bounds;
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::config("xi must be nonnegative"));
        }
        if !(p_max > p_min && p_min.is_finite() && p_max.is_finite()) {
            return Err(Error::config("price bounds must satisfy p_min < p_max"));
        }
        if !(b_max > 0.0 && b_max.is_finite()) {
            return Err(Error::config("b_max must be positive"));
        }
        if n_prices < 2 || n_bids < 2 {
            return Err(Error::config("grids need at least two points"));
        }
        let ext = xi * (p_max - p_min);
        let lo = (p_min - ext).max(0.0);
        Ok(Self {
            prices: linspace(lo, p_max + ext, n_prices),
            bids: linspace(0.0, (1.0 + xi) * b_max, n_bids),
            xi,
        })
    }

    pub fn n_prices(&self) -> usize {
        self.prices.len()
    }

    pub fn n_bids(&self) -> usize {
        self.bids.len()
    }

    pub fn n_actions(&self) -> usize {
        self.prices.len() * self.bids.len()
    }

    pub fn action(&self, price_index: usize, bid_index: usize) -> usize {
        price_index * self.bids.len() + bid_index
    }

    pub fn price_index(&self, action: usize) -> usize {
        action / self.bids.len()
    }

    pub fn bid_index(&self, action: usize) -> usize {
        action % self.bids.len()
    }

    pub fn price(&self, action: usize) -> f64 {
        self.prices[self.price_index(action)]
    }

    pub fn bid(&self, action: usize) -> f64 {
        self.bids[self.bid_index(action)]
    }
}

/// Benchmark range over a set of θ values: the lowest and highest of the
/// pricing-only, Nash and monopoly prices, and the highest Nash bid.
pub fn benchmark_bounds(
    params: &MarketParams,
    spec: &AuctionSpec,
    thetas: &[f64],
) -> Result<GridBounds> {
    if thetas.is_empty() {
        return Err(Error::config("need at least one theta"));
    }
    let mut b = GridBounds {
        p_min: f64::INFINITY,
        p_max: f64::NEG_INFINITY,
        b_max: 0.0,
    };
    for &theta in thetas {
        let eq = solve_benchmarks(&params.clone().with_theta(theta), spec)?;
        for p in [eq.p_on, eq.p_n, eq.p_m] {
            b.p_min = b.p_min.min(p);
            b.p_max = b.p_max.max(p);
        }
        b.b_max = b.b_max.max(eq.b_n);
    }
    Ok(b)
}

/// Grid spanning the benchmarks over `thetas`, extended by `xi`.
pub fn build_action_grid(
    params: &MarketParams,
    spec: &AuctionSpec,
    thetas: &[f64],
    xi: f64,
) -> Result<ActionGrid> {
    ActionGrid::from_bounds(benchmark_bounds(params, spec, thetas)?, xi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> GridBounds {
        GridBounds {
            p_min: 1.47,
            p_max: 2.1,
            b_max: 0.24,
        }
    }

    #[test]
    fn no_extension_hits_bounds() {
        let g = ActionGrid::from_bounds(bounds(), 0.0).unwrap();
        assert_eq!(g.prices[0], 1.47);
        assert_eq!(*g.prices.last().unwrap(), 2.1);
        assert_eq!(*g.bids.last().unwrap(), 0.24);
    }

    #[test]
    fn default_shape() {
        let g = ActionGrid::from_bounds(bounds(), DEFAULT_XI).unwrap();
        assert_eq!(g.n_prices(), 15);
        assert_eq!(g.n_bids(), 10);
        assert_eq!(g.bids[0], 0.0);
        assert!(g.prices.windows(2).all(|w| w[0] < w[1]));
        assert!(g.bids.windows(2).all(|w| w[0] < w[1]));
        assert!((g.prices[0] - (1.47 - 0.063)).abs() < 1e-12);
        assert!((g.bids[9] - 0.264).abs() < 1e-12);
    }

    #[test]
    fn action_packing_roundtrips() {
        let g = ActionGrid::from_bounds(bounds(), DEFAULT_XI).unwrap();
        for a in 0..g.n_actions() {
            assert_eq!(g.action(g.price_index(a), g.bid_index(a)), a);
        }
    }

    #[test]
    fn bad_bounds_rejected() {
        let mut b = bounds();
        b.p_max = 1.0;
        assert!(ActionGrid::from_bounds(b, 0.1).is_err());
    }
}
