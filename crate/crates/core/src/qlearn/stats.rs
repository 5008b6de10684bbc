use super::session::{SessionResult, WindowMetrics};
use crate::solvers::EquilibriumResult;
use crate::{Error, Result};

const N_FIELDS: usize = WindowMetrics::FIELDS.len();

/// Means and standard errors of the window metrics across sessions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub sessions: usize,
    pub convergence_rate: f64,
    pub mean_periods: f64,
    pub mean: [f64; N_FIELDS],
    pub std_error: [f64; N_FIELDS],
}

impl Aggregate {
    pub fn field(&self, name: &str) -> Option<(f64, f64)> {
        WindowMetrics::FIELDS
            .iter()
            .position(|f| *f == name)
            .map(|k| (self.mean[k], self.std_error[k]))
    }

    /// Mean of a field; panics on an unknown name, which is a programming
    /// error.
    pub fn mean_of(&self, name: &str) -> f64 {
        self.field(name).expect("unknown metric").0
    }

    pub fn se_of(&self, name: &str) -> f64 {
        self.field(name).expect("unknown metric").1
    }
}

pub fn aggregate(results: &[SessionResult]) -> Result<Aggregate> {
    if results.is_empty() {
        return Err(Error::config("need at least one session"));
    }
    let n = results.len() as f64;
    let mut mean = [0.0; N_FIELDS];
    for r in results {
        for (m, v) in mean.iter_mut().zip(r.metrics.values()) {
            *m += v / n;
        }
    }
    let mut std_error = [0.0; N_FIELDS];
    if results.len() > 1 {
        for r in results {
            for ((s, v), m) in std_error.iter_mut().zip(r.metrics.values()).zip(mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in std_error.iter_mut() {
            *s = (*s / (n - 1.0) / n).sqrt();
        }
    }
    Ok(Aggregate {
        sessions: results.len(),
        convergence_rate: results.iter().filter(|r| r.converged).count() as f64 / n,
        mean_periods: results.iter().map(|r| r.periods as f64).sum::<f64>() / n,
        mean,
        std_error,
    })
}

/// `(p^Q − p^N)/(p^M − p^N)` and the profit analogue. `None` when the
/// benchmarks are too close for the ratio to mean anything.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratios {
    pub price: Option<f64>,
    pub profit: Option<f64>,
}

pub const RATIO_MIN_DENOMINATOR: f64 = 1e-9;

pub fn ratio(value: f64, competitive: f64, collusive: f64) -> Option<f64> {
    let den = collusive - competitive;
    (den.abs() >= RATIO_MIN_DENOMINATOR).then(|| (value - competitive) / den)
}

/// Ratios for a Q-learning price and per-seller profit against the
/// benchmarks at the same θ.
pub fn ratio_statistics(price: f64, profit: f64, eq: &EquilibriumResult) -> Ratios {
    let pi_n = 0.5 * eq.nash.total_seller_profit();
    let pi_m = 0.5 * eq.monopoly.total_seller_profit();
    Ratios {
        price: ratio(price, eq.p_n, eq.p_m),
        profit: ratio(profit, pi_n, pi_m),
    }
}
