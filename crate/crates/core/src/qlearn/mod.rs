//! Two tabular Q-learners repeatedly choosing a price and a bid.
//!
//! Rewards come from a [`PayoffTable`] precomputed from
//! [`Economy`](crate::economy::Economy), so a period costs two table lookups
//! and two Q-cell updates.

mod agent;
mod grid;
mod payoff;
mod session;
mod stats;

pub use agent::{argmax, AgentConfig, QAgent, StateCoder, StateMode};
pub use grid::{
    benchmark_bounds, build_action_grid, ActionGrid, GridBounds, DEFAULT_BID_POINTS,
    DEFAULT_PRICE_POINTS, DEFAULT_XI,
};
pub use payoff::{Cell, PayoffTable};
pub use session::{
    run_session, session_rng, RewardMode, Session, SessionConfig, SessionResult, WindowMetrics,
};
pub use stats::{aggregate, ratio, ratio_statistics, Aggregate, Ratios, RATIO_MIN_DENOMINATOR};

/// Runs `n_sessions` sessions one after another. Session `k` uses stream `k`
/// of the master seed, so parallel drivers reproduce this exactly.
pub fn run_experiment_serial(
    grid: &ActionGrid,
    table: &PayoffTable,
    economy: Option<&crate::economy::Economy>,
    cfg: SessionConfig,
    n_sessions: usize,
    master_seed: u64,
) -> crate::Result<(alloc::vec::Vec<SessionResult>, Aggregate)> {
    let results = (0..n_sessions as u64)
        .map(|k| run_session(grid, table, economy, cfg, session_rng(master_seed, k)))
        .collect::<crate::Result<alloc::vec::Vec<_>>>()?;
    let agg = aggregate(&results)?;
    Ok((results, agg))
}
