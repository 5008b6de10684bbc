use super::grid::ActionGrid;
use crate::economy::{Economy, ProfitBreakdown};
use crate::prelude::*;
use crate::Result;

/// Everything a session needs from one joint action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub profit: [f64; 2],
    pub demand: [f64; 2],
    pub ad_revenue: f64,
    pub commission: f64,
    pub consumer_surplus: f64,
    pub total_surplus: f64,
}

impl From<ProfitBreakdown> for Cell {
    fn from(b: ProfitBreakdown) -> Self {
        Self {
            profit: b.seller_profit,
            demand: b.demand,
            ad_revenue: b.platform_ad_revenue,
            commission: b.platform_commission,
            consumer_surplus: b.consumer_surplus,
            total_surplus: b.total_surplus,
        }
    }
}

/// Expected one-period outcomes for every joint action, row-major in
/// (seller 0 action, seller 1 action).
#[derive(Debug, Clone)]
pub struct PayoffTable {
    n_actions: usize,
    cells: Vec<Cell>,
}

impl PayoffTable {
    pub fn build(eco: &Economy, grid: &ActionGrid) -> Result<Self> {
        let n = grid.n_actions();
        let nb = grid.n_bids();
        // auction outcomes only depend on the bid pair
        let mut outcomes = Vec::with_capacity(nb * nb);
        for &b0 in &grid.bids {
            for &b1 in &grid.bids {
                outcomes.push(eco.outcome([b0, b1])?);
            }
        }
        let mut cells = Vec::with_capacity(n * n);
        for a0 in 0..n {
            for a1 in 0..n {
                let o = &outcomes[grid.bid_index(a0) * nb + grid.bid_index(a1)];
                let p = [grid.price(a0), grid.price(a1)];
                cells.push(Cell::from(eco.breakdown_with(p, o)));
            }
        }
        Ok(Self {
            n_actions: n,
            cells,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn cell(&self, a0: usize, a1: usize) -> &Cell {
        &self.cells[a0 * self.n_actions + a1]
    }

    /// Seller `who`'s profit when it plays `own` against `rival`.
    #[inline]
    pub fn profit(&self, who: usize, own: usize, rival: usize) -> f64 {
        if who == 0 {
            self.cell(own, rival).profit[0]
        } else {
            self.cell(rival, own).profit[1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::AuctionSpec;
    use crate::market::MarketParams;
    use crate::qlearn::grid::GridBounds;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_matches_fresh_evaluation() {
        let params = MarketParams::baseline().with_theta(0.8).with_tau(0.15);
        let eco = Economy::new(params, AuctionSpec::new(0.5).with_reserve(0.1)).unwrap();
        let grid = ActionGrid::from_bounds(
            GridBounds {
                p_min: 1.47,
                p_max: 2.1,
                b_max: 0.24,
            },
            0.1,
        )
        .unwrap();
        let table = PayoffTable::build(&eco, &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a0 = rng.random_range(0..grid.n_actions());
            let a1 = rng.random_range(0..grid.n_actions());
            let fresh = eco
                .breakdown(
                    &[grid.price(a0), grid.price(a1)],
                    &[grid.bid(a0), grid.bid(a1)],
                )
                .unwrap();
            assert_eq!(*table.cell(a0, a1), Cell::from(fresh));
            assert_eq!(table.profit(1, a1, a0), fresh.seller_profit[1]);
        }
    }
}
