use super::agent::{AgentConfig, QAgent, StateCoder};
use super::grid::ActionGrid;
use super::payoff::PayoffTable;
use crate::economy::Economy;
use crate::prelude::*;
use crate::{Error, Result};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Where rewards come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardMode {
    /// The expected one-period profit from the payoff table.
    Expected,
    /// One realized auction draw per period.
    Realized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    pub agents: [AgentConfig; 2],
    /// Periods with unchanged policies that count as convergence; also the
    /// length of the averaging window.
    pub convergence_window: u64,
    pub max_periods: u64,
    pub reward: RewardMode,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            agents: [AgentConfig::default(); 2],
            convergence_window: 25_000,
            max_periods: 50_000_000,
            reward: RewardMode::Expected,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        for a in &self.agents {
            a.validate()?;
        }
        if self.agents[0].state_mode != self.agents[1].state_mode {
            return Err(Error::config("both agents must use the same state mode"));
        }
        if self.convergence_window == 0 || self.max_periods == 0 {
            return Err(Error::config("window and period cap must be positive"));
        }
        Ok(())
    }
}

/// Averages over the greedy play that follows convergence.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowMetrics {
    pub price: [f64; 2],
    /// Average price weighted by units sold.
    pub weighted_price: f64,
    pub bid: [f64; 2],
    pub profit: [f64; 2],
    pub demand: [f64; 2],
    pub consumer_surplus: f64,
    pub ad_revenue: f64,
    pub commission: f64,
    pub total_surplus: f64,
}

impl WindowMetrics {
    pub const FIELDS: [&'static str; 15] = [
        "price",
        "price_0",
        "price_1",
        "weighted_price",
        "bid",
        "bid_0",
        "bid_1",
        "profit",
        "profit_0",
        "profit_1",
        "consumer_surplus",
        "ad_revenue",
        "commission",
        "platform_profit",
        "total_surplus",
    ];

    pub fn mean_price(&self) -> f64 {
        0.5 * (self.price[0] + self.price[1])
    }

    pub fn mean_bid(&self) -> f64 {
        0.5 * (self.bid[0] + self.bid[1])
    }

    pub fn mean_profit(&self) -> f64 {
        0.5 * (self.profit[0] + self.profit[1])
    }

    /// Values in the order of [`Self::FIELDS`].
    pub fn values(&self) -> [f64; 15] {
        [
            self.mean_price(),
            self.price[0],
            self.price[1],
            self.weighted_price,
            self.mean_bid(),
            self.bid[0],
            self.bid[1],
            self.mean_profit(),
            self.profit[0],
            self.profit[1],
            self.consumer_surplus,
            self.ad_revenue,
            self.commission,
            self.ad_revenue + self.commission,
            self.total_surplus,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionResult {
    pub converged: bool,
    pub periods: u64,
    /// Length of the cycle greedy play settles into.
    pub cycle_length: usize,
    pub window: u64,
    pub metrics: WindowMetrics,
}

/// A learning session in progress. Exposed so tests can inspect the agents
/// after a run.
#[derive(Debug, Clone)]
pub struct Session<'a> {
    grid: &'a ActionGrid,
    table: &'a PayoffTable,
    economy: Option<&'a Economy>,
    coder: StateCoder,
    cfg: SessionConfig,
    pub agents: [QAgent; 2],
    pub last: [usize; 2],
    rng: ChaCha8Rng,
}

/// Generator for session `index` of a run seeded with `master`.
pub fn session_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

impl<'a> Session<'a> {
    /// `economy` is only consulted for realized rewards.
    pub fn new(
        grid: &'a ActionGrid,
        table: &'a PayoffTable,
        economy: Option<&'a Economy>,
        cfg: SessionConfig,
        mut rng: ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        if table.n_actions() != grid.n_actions() {
            return Err(Error::DimensionMismatch {
                what: "payoff table actions",
                expected: grid.n_actions(),
                got: table.n_actions(),
            });
        }
        if grid.n_actions() > u16::MAX as usize {
            return Err(Error::config("action grid too large"));
        }
        if cfg.reward == RewardMode::Realized && economy.is_none() {
            return Err(Error::config("realized rewards need the economy"));
        }
        let coder = StateCoder::new(grid, cfg.agents[0].state_mode);
        let n_states = coder.n_states();
        let agents = [
            QAgent::init(0, table, n_states, cfg.agents[0].delta),
            QAgent::init(1, table, n_states, cfg.agents[1].delta),
        ];
        let n = grid.n_actions();
        let last = [rng.random_range(0..n), rng.random_range(0..n)];
        Ok(Self {
            grid,
            table,
            economy,
            coder,
            cfg,
            agents,
            last,
            rng,
        })
    }

    pub fn coder(&self) -> &StateCoder {
        &self.coder
    }

    fn reward(&mut self, a: [usize; 2]) -> [f64; 2] {
        match (self.cfg.reward, self.economy) {
            (RewardMode::Realized, Some(eco)) => {
                let p = [self.grid.price(a[0]), self.grid.price(a[1])];
                let b = [self.grid.bid(a[0]), self.grid.bid(a[1])];
                eco.sample_realized_profit(p, b, &mut self.rng)
            }
            _ => self.table.cell(a[0], a[1]).profit,
        }
    }

    /// One period at time `t`: both agents act on the same prior state,
    /// collect rewards and update. Returns the joint action, the rewards and
    /// whether either greedy policy changed.
    #[inline]
    pub fn step(&mut self, t: u64) -> ([usize; 2], [f64; 2], bool) {
        let n = self.grid.n_actions();
        let [c0, c1] = self.cfg.agents;
        let eps0 = (-c0.beta * t as f64).exp();
        let eps1 = if c1.beta == c0.beta {
            eps0
        } else {
            (-c1.beta * t as f64).exp()
        };
        let s = [
            self.coder.encode(self.last[0], self.last[1]),
            self.coder.encode(self.last[1], self.last[0]),
        ];
        let a0 = if self.rng.random::<f64>() < eps0 {
            self.rng.random_range(0..n)
        } else {
            self.agents[0].greedy(s[0])
        };
        let a1 = if self.rng.random::<f64>() < eps1 {
            self.rng.random_range(0..n)
        } else {
            self.agents[1].greedy(s[1])
        };
        let r = self.reward([a0, a1]);
        let next = [self.coder.encode(a0, a1), self.coder.encode(a1, a0)];
        let v0 = self.agents[0].value(next[0]);
        let v1 = self.agents[1].value(next[1]);
        let ch0 = self.agents[0].update(s[0], a0, r[0], v0, c0.alpha, c0.delta);
        let ch1 = self.agents[1].update(s[1], a1, r[1], v1, c1.alpha, c1.delta);
        self.last = [a0, a1];
        ([a0, a1], r, ch0 || ch1)
    }

    /// Learns until both policies are stable for the window or the period
    /// cap is hit. Returns `(converged, periods)`.
    pub fn learn(&mut self) -> (bool, u64) {
        let window = self.cfg.convergence_window;
        let mut stable: u64 = 0;
        for t in 0..self.cfg.max_periods {
            let (_, _, changed) = self.step(t);
            if changed {
                stable = 0;
            } else {
                stable += 1;
                if stable >= window {
                    return (true, t + 1);
                }
            }
        }
        (false, self.cfg.max_periods)
    }

    /// Greedy play from the current state for `periods` periods.
    pub fn replay(&self, periods: u64) -> (WindowMetrics, usize) {
        let mut acc = WindowMetrics::default();
        let mut weighted_num = 0.0;
        let mut weighted_den = 0.0;
        let n = self.grid.n_actions();
        let mut first_seen = vec![u64::MAX; n * n];
        let mut cycle = 0usize;
        let mut last = self.last;
        for t in 0..periods {
            let a0 = self.agents[0].greedy(self.coder.encode(last[0], last[1]));
            let a1 = self.agents[1].greedy(self.coder.encode(last[1], last[0]));
            let key = a0 * n + a1;
            if cycle == 0 {
                if first_seen[key] == u64::MAX {
                    first_seen[key] = t;
                } else {
                    cycle = (t - first_seen[key]) as usize;
                }
            }
            let c = self.table.cell(a0, a1);
            let p = [self.grid.price(a0), self.grid.price(a1)];
            for i in 0..2 {
                acc.price[i] += p[i];
                acc.profit[i] += c.profit[i];
                acc.demand[i] += c.demand[i];
            }
            acc.bid[0] += self.grid.bid(a0);
            acc.bid[1] += self.grid.bid(a1);
            acc.consumer_surplus += c.consumer_surplus;
            acc.ad_revenue += c.ad_revenue;
            acc.commission += c.commission;
            acc.total_surplus += c.total_surplus;
            weighted_num += p[0] * c.demand[0] + p[1] * c.demand[1];
            weighted_den += c.demand[0] + c.demand[1];
            last = [a0, a1];
        }
        let k = periods.max(1) as f64;
        for i in 0..2 {
            acc.price[i] /= k;
            acc.bid[i] /= k;
            acc.profit[i] /= k;
            acc.demand[i] /= k;
        }
        acc.consumer_surplus /= k;
        acc.ad_revenue /= k;
        acc.commission /= k;
        acc.total_surplus /= k;
        acc.weighted_price = if weighted_den > 0.0 {
            weighted_num / weighted_den
        } else {
            acc.mean_price()
        };
        (acc, cycle)
    }
}

/// One full session: learn, then average greedy play over the window.
pub fn run_session(
    grid: &ActionGrid,
    table: &PayoffTable,
    economy: Option<&Economy>,
    cfg: SessionConfig,
    rng: ChaCha8Rng,
) -> Result<SessionResult> {
    let mut session = Session::new(grid, table, economy, cfg, rng)?;
    let (converged, periods) = session.learn();
    let (metrics, cycle_length) = session.replay(cfg.convergence_window);
    Ok(SessionResult {
        converged,
        periods,
        cycle_length,
        window: cfg.convergence_window,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::AuctionSpec;
    use crate::market::MarketParams;
    use crate::qlearn::agent::StateMode;
    use crate::qlearn::grid::GridBounds;

    fn setup(theta: f64) -> (Economy, ActionGrid, PayoffTable) {
        let eco = Economy::new(
            MarketParams::baseline().with_theta(theta),
            AuctionSpec::new(0.5),
        )
        .unwrap();
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
        (eco, grid, table)
    }

    fn quick() -> SessionConfig {
        let mut cfg = SessionConfig::default();
        for a in cfg.agents.iter_mut() {
            a.beta = 1e-4;
        }
        cfg.convergence_window = 5_000;
        cfg.max_periods = 20_000_000;
        cfg
    }

    #[test]
    fn frozen_learning_converges_after_one_window() {
        let (_, grid, table) = setup(0.5);
        let mut cfg = quick();
        for a in cfg.agents.iter_mut() {
            a.alpha = 0.0;
        }
        let r = run_session(&grid, &table, None, cfg, session_rng(1, 0)).unwrap();
        assert!(r.converged);
        assert_eq!(r.periods, cfg.convergence_window);
    }

    #[test]
    fn sessions_are_deterministic() {
        let (_, grid, table) = setup(0.3);
        let a = run_session(&grid, &table, None, quick(), session_rng(9, 2)).unwrap();
        let b = run_session(&grid, &table, None, quick(), session_rng(9, 2)).unwrap();
        assert_eq!(a, b);
        let c = run_session(&grid, &table, None, quick(), session_rng(9, 3)).unwrap();
        assert_ne!(a.periods, c.periods);
    }

    #[test]
    fn exploration_starts_at_one_and_decays() {
        let beta: f64 = 1e-5;
        assert_eq!((-beta * 0.0).exp(), 1.0);
        let eps: Vec<f64> = (0..1000)
            .map(|t| (-beta * (t * 1000) as f64).exp())
            .collect();
        assert!(eps.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn each_period_touches_one_cell_per_agent() {
        let (_, grid, table) = setup(0.4);
        let mut cfg = quick();
        cfg.max_periods = 1;
        let mut s = Session::new(&grid, &table, None, cfg, session_rng(4, 0)).unwrap();
        let before = s.agents.clone();
        s.learn();
        for k in 0..2 {
            let mut diffs = 0;
            for st in 0..before[k].n_states() {
                for a in 0..150 {
                    if before[k].q(st, a) != s.agents[k].q(st, a) {
                        diffs += 1;
                    }
                }
            }
            assert!(diffs <= 1);
        }
    }

    #[test]
    fn converged_play_is_a_cycle() {
        let (_, grid, table) = setup(0.0);
        for seed in 0..10 {
            let mut s = Session::new(&grid, &table, None, quick(), session_rng(77, seed)).unwrap();
            let (converged, _) = s.learn();
            assert!(converged);
            let (m, cycle) = s.replay(5_000);
            assert!(cycle >= 1);
            // averaging over a whole number of cycles equals the window mean
            let (m2, _) = s.replay(5_000 - 5_000 % cycle as u64 + cycle as u64);
            assert!((m.mean_price() - m2.mean_price()).abs() < 0.02);
        }
    }

    #[test]
    fn full_stateful_only_changes_indexing() {
        let (_, grid, table) = setup(0.6);
        // near-zero decay keeps both runs exploring, so they play the same
        // action sequence
        let mut own = quick();
        for a in own.agents.iter_mut() {
            a.beta = 1e-15;
        }
        let mut full = own;
        for a in full.agents.iter_mut() {
            a.state_mode = StateMode::FullStateful;
        }
        let mut s_own = Session::new(&grid, &table, None, own, session_rng(5, 0)).unwrap();
        let mut s_full = Session::new(&grid, &table, None, full, session_rng(5, 0)).unwrap();
        assert_eq!(s_full.coder().n_states(), 22_500);
        for t in 0..2_000 {
            let (a, r, _) = s_own.step(t);
            let (b, q, _) = s_full.step(t);
            assert_eq!(a, b);
            assert_eq!(r[0].to_bits(), q[0].to_bits());
            assert_eq!(r[1].to_bits(), q[1].to_bits());
        }
    }

    #[test]
    fn realized_rewards_run() {
        let (eco, grid, table) = setup(0.8);
        let mut cfg = quick();
        cfg.reward = RewardMode::Realized;
        cfg.max_periods = 20_000;
        let r = run_session(&grid, &table, Some(&eco), cfg, session_rng(3, 0)).unwrap();
        assert_eq!(r.window, cfg.convergence_window);
        assert!(run_session(&grid, &table, None, cfg, session_rng(3, 0)).is_err());
    }
}
