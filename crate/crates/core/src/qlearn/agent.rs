use super::grid::ActionGrid;
use super::payoff::PayoffTable;
use crate::prelude::*;
use crate::{Error, Result};

/// What an agent remembers about the previous period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateMode {
    /// Both prices and the agent's own bid.
    OwnBid,
    /// Both prices and both bids.
    FullStateful,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub state_mode: StateMode,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            beta: 1e-5,
            delta: 0.95,
            state_mode: StateMode::OwnBid,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        // α = 0 is allowed: it freezes learning, which tests rely on
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::config("alpha must lie in [0, 1)"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta must be positive"));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::config("delta must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Row-major packing of one agent's view of the last joint action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateCoder {
    n_prices: usize,
    n_bids: usize,
    mode: StateMode,
}

impl StateCoder {
    pub fn new(grid: &ActionGrid, mode: StateMode) -> Self {
        Self {
            n_prices: grid.n_prices(),
            n_bids: grid.n_bids(),
            mode,
        }
    }

    pub fn n_states(&self) -> usize {
        let base = self.n_prices * self.n_prices * self.n_bids;
        match self.mode {
            StateMode::OwnBid => base,
            StateMode::FullStateful => base * self.n_bids,
        }
    }

    /// State of the agent that played `own` while its rival played `rival`.
    #[inline]
    pub fn encode(&self, own: usize, rival: usize) -> usize {
        let nb = self.n_bids;
        let (own_p, own_b) = (own / nb, own % nb);
        let (rival_p, rival_b) = (rival / nb, rival % nb);
        let s = (own_p * self.n_prices + rival_p) * nb + own_b;
        match self.mode {
            StateMode::OwnBid => s,
            StateMode::FullStateful => s * nb + rival_b,
        }
    }
}

/// Tabular Q-learner with a cached greedy policy.
#[derive(Debug, Clone)]
pub struct QAgent {
    n_actions: usize,
    q: Vec<f64>,
    greedy: Vec<u16>,
}

impl QAgent {
    /// Q-matrix at time zero: the discounted payoff of each action against
    /// a uniformly randomizing rival, the same in every state.
    pub fn init(who: usize, table: &PayoffTable, n_states: usize, delta: f64) -> Self {
        let n = table.n_actions();
        let row: Vec<f64> = (0..n)
            .map(|a| {
                let sum: f64 = (0..n).map(|r| table.profit(who, a, r)).sum();
                sum / ((1.0 - delta) * n as f64)
            })
            .collect();
        let best = argmax(&row) as u16;
        let mut q = Vec::with_capacity(n_states * n);
        for _ in 0..n_states {
            q.extend_from_slice(&row);
        }
        Self {
            n_actions: n,
            q,
            greedy: vec![best; n_states],
        }
    }

    pub fn n_states(&self) -> usize {
        self.greedy.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn q(&self, state: usize, action: usize) -> f64 {
        self.q[state * self.n_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.q[state * self.n_actions..(state + 1) * self.n_actions]
    }

    #[inline]
    pub fn greedy(&self, state: usize) -> usize {
        self.greedy[state] as usize
    }

    #[inline]
    pub fn value(&self, state: usize) -> f64 {
        self.q(state, self.greedy(state))
    }

    pub fn policy(&self) -> &[u16] {
        &self.greedy
    }

    /// `Q(s,a) ← (1−α)Q(s,a) + α(reward + δ·continuation)`. Returns true when
    /// the greedy action of `state` changed.
    #[inline]
    pub fn update(
        &mut self,
        state: usize,
        action: usize,
        reward: f64,
        continuation: f64,
        alpha: f64,
        delta: f64,
    ) -> bool {
        let n = self.n_actions;
        let idx = state * n + action;
        let old = self.q[idx];
        let new = (1.0 - alpha) * old + alpha * (reward + delta * continuation);
        self.q[idx] = new;
        let best = self.greedy[state] as usize;
        let next = if action == best {
            if new > old {
                best
            } else {
                argmax(&self.q[state * n..(state + 1) * n])
            }
        } else {
            let top = self.q[state * n + best];
            if new > top || (new == top && action < best) {
                action
            } else {
                best
            }
        };
        self.greedy[state] = next as u16;
        next != best
    }
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = k;
        }
    }
    best
}
