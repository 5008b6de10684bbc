//! Run configuration in a flat `key = value` format.
//!
//! Lines starting with `#` and blank lines are ignored. Every key has a
//! default; unknown and repeated keys are errors. The normalized form lists
//! every key in a fixed order and parses back to the same configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use searchbid_core::qlearn::{RewardMode, StateMode};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    ThetaSweep,
    CommissionSweep,
    ReserveSweep,
    StatefulCompare,
    Asymmetric,
    RankEffect,
    Estimate,
    SyntheticRecovery,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::ThetaSweep,
        Scenario::CommissionSweep,
        Scenario::ReserveSweep,
        Scenario::StatefulCompare,
        Scenario::Asymmetric,
        Scenario::RankEffect,
        Scenario::Estimate,
        Scenario::SyntheticRecovery,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::ThetaSweep => "theta-sweep",
            Scenario::CommissionSweep => "commission-sweep",
            Scenario::ReserveSweep => "reserve-sweep",
            Scenario::StatefulCompare => "stateful-compare",
            Scenario::Asymmetric => "asymmetric",
            Scenario::RankEffect => "rank-effect",
            Scenario::Estimate => "estimate",
            Scenario::SyntheticRecovery => "synthetic-recovery",
        }
    }

    /// The parameter the scenario's grid sweeps, if any.
    pub fn sweep_parameter(self) -> Option<&'static str> {
        match self {
            Scenario::ThetaSweep | Scenario::StatefulCompare | Scenario::Asymmetric => {
                Some("theta")
            }
            Scenario::CommissionSweep => Some("tau"),
            Scenario::ReserveSweep => Some("reserve"),
            Scenario::RankEffect => Some("zeta"),
            Scenario::SyntheticRecovery => Some("lambda"),
            Scenario::Estimate => None,
        }
    }

    pub fn uses_qlearning(self) -> bool {
        !matches!(self, Scenario::Estimate | Scenario::SyntheticRecovery)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

/// `start:stop:step` inclusive of both ends, or a single value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub const fn new(start: f64, stop: f64, step: f64) -> Self {
        Self { start, stop, step }
    }

    pub const fn single(v: f64) -> Self {
        Self {
            start: v,
            stop: v,
            step: 1.0,
        }
    }

    /// Grid points. Points are computed as `start + k·step` and snapped to
    /// 12 decimals so `0:1:0.1` yields exactly 0.3 rather than
    /// 0.30000000000000004.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|k| ((self.start + k as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.start == self.stop {
            write!(f, "{}", self.start)
        } else {
            write!(f, "{}:{}:{}", self.start, self.stop, self.step)
        }
    }
}

impl FromStr for GridSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |p: &str| {
            p.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("`{p}` is not a number"))
        };
        match parts.as_slice() {
            [v] => Ok(GridSpec::single(num(v)?)),
            [a, b, c] => {
                let g = GridSpec::new(num(a)?, num(b)?, num(c)?);
                if g.start == g.stop {
                    return Ok(GridSpec::single(g.start));
                }
                if g.step.is_nan() || g.step <= 0.0 || g.stop < g.start {
                    return Err("need start <= stop and a positive step".into());
                }
                if (g.stop - g.start) / g.step > 1e6 {
                    return Err("grid has more than a million points".into());
                }
                Ok(g)
            }
            _ => Err(format!("`{s}` is neither a value nor start:stop:step")),
        }
    }
}

fn state_mode_name(m: StateMode) -> &'static str {
    match m {
        StateMode::OwnBid => "own-bid",
        StateMode::FullStateful => "full-stateful",
    }
}

fn reward_name(m: RewardMode) -> &'static str {
    match m {
        RewardMode::Expected => "expected",
        RewardMode::Realized => "realized",
    }
}

/// Everything that defines an experiment. Output location and thread count
/// are run options, not part of the configuration, so they do not change
/// the configuration hash.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    // market
    pub quality: f64,
    /// Quality of seller 0 in the asymmetric scenario.
    pub asymmetric_quality: f64,
    pub cost: f64,
    pub mu: f64,
    pub theta: f64,
    pub tau: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub delta: f64,
    pub reserve: f64,
    // learning
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
    pub price_points: usize,
    pub bid_points: usize,
    pub state_mode: StateMode,
    pub reward: RewardMode,
    pub convergence_window: u64,
    pub max_periods: u64,
    pub sessions: usize,
    pub seed: u64,
    // grids
    pub grid: Option<GridSpec>,
    /// θ values whose benchmarks the action grid must cover.
    pub grid_thetas: GridSpec,
    // estimation
    pub input: Option<PathBuf>,
    /// 0 infers the page layout from the data.
    pub n_positions: usize,
    pub replications: usize,
    pub synthetic_rho: f64,
    pub synthetic_markets: usize,
    pub synthetic_products: usize,
    pub synthetic_days: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::ThetaSweep,
            quality: 2.0,
            asymmetric_quality: 3.0,
            cost: 1.0,
            mu: 0.25,
            theta: 0.0,
            tau: 0.0,
            sigma: 0.5,
            gamma: 2.0,
            delta: 0.95,
            reserve: 0.0,
            alpha: 0.15,
            beta: 1e-5,
            xi: 0.1,
            price_points: 15,
            bid_points: 10,
            state_mode: StateMode::OwnBid,
            reward: RewardMode::Expected,
            convergence_window: 100_000,
            max_periods: 1_000_000_000,
            sessions: 1000,
            seed: 0,
            grid: None,
            grid_thetas: GridSpec::new(0.0, 1.0, 0.05),
            input: None,
            n_positions: 0,
            replications: 10,
            synthetic_rho: 0.8,
            synthetic_markets: 10,
            synthetic_products: 20,
            synthetic_days: 60,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> CResult<T>
where
    T::Err: fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| ConfigError::new(key, format!("cannot parse `{v}`: {e}")))
}

/// Integers also accept scientific notation such as `5e7`.
fn parse_count(key: &str, v: &str) -> CResult<u64> {
    if let Ok(n) = v.parse::<u64>() {
        return Ok(n);
    }
    match v.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 1.8e19 => Ok(x as u64),
        _ => Err(ConfigError::new(
            key,
            format!("`{v}` is not a nonnegative integer"),
        )),
    }
}

impl RunConfig {
    /// Defaults for a scenario. The platform-response sweeps sit at
    /// θ = 0.8 with a 15% commission.
    pub fn for_scenario(scenario: Scenario) -> Self {
        let mut c = Self {
            scenario,
            ..Self::default()
        };
        if matches!(scenario, Scenario::CommissionSweep | Scenario::ReserveSweep) {
            c.theta = 0.8;
            c.tau = 0.15;
        }
        c
    }

    /// Grid used when none is configured.
    pub fn default_grid(scenario: Scenario) -> Option<GridSpec> {
        match scenario {
            Scenario::ThetaSweep => Some(GridSpec::new(0.0, 1.0, 0.01)),
            Scenario::StatefulCompare | Scenario::Asymmetric => Some(GridSpec::new(0.0, 1.0, 0.05)),
            Scenario::CommissionSweep => Some(GridSpec::new(0.0, 0.3, 0.05)),
            Scenario::ReserveSweep => Some(GridSpec::new(0.0, 0.3, 0.05)),
            Scenario::RankEffect => Some(GridSpec::new(0.0, 1.0, 0.05)),
            Scenario::SyntheticRecovery => Some(GridSpec::single(0.05)),
            Scenario::Estimate => None,
        }
    }

    pub fn sweep_grid(&self) -> Option<GridSpec> {
        self.grid.or_else(|| Self::default_grid(self.scenario))
    }

    /// Applies one assignment.
    pub fn set(&mut self, key: &str, value: &str) -> CResult<()> {
        let v = value.trim();
        let f = |v: &str| parse_value::<f64>(key, v);
        match key {
            "scenario" => self.scenario = parse_value(key, v)?,
            "quality" => self.quality = f(v)?,
            "asymmetric_quality" => self.asymmetric_quality = f(v)?,
            "cost" => self.cost = f(v)?,
            "mu" => self.mu = f(v)?,
            "theta" => self.theta = f(v)?,
            "tau" => self.tau = f(v)?,
            "sigma" => self.sigma = f(v)?,
            "gamma" => self.gamma = f(v)?,
            "delta" => self.delta = f(v)?,
            "reserve" => self.reserve = f(v)?,
            "alpha" => self.alpha = f(v)?,
            "beta" => self.beta = f(v)?,
            "xi" => self.xi = f(v)?,
            "price_points" => self.price_points = parse_count(key, v)? as usize,
            "bid_points" => self.bid_points = parse_count(key, v)? as usize,
            "state_mode" => {
                self.state_mode = match v {
                    "own-bid" => StateMode::OwnBid,
                    "full-stateful" => StateMode::FullStateful,
                    _ => {
                        return Err(ConfigError::new(
                            key,
                            format!("`{v}` is not own-bid or full-stateful"),
                        ))
                    }
                }
            }
            "reward" => {
                self.reward = match v {
                    "expected" => RewardMode::Expected,
                    "realized" => RewardMode::Realized,
                    _ => {
                        return Err(ConfigError::new(
                            key,
                            format!("`{v}` is not expected or realized"),
                        ))
                    }
                }
            }
            "convergence_window" => self.convergence_window = parse_count(key, v)?,
            "max_periods" => self.max_periods = parse_count(key, v)?,
            "sessions" => self.sessions = parse_count(key, v)? as usize,
            "seed" => self.seed = parse_count(key, v)?,
            "grid" => {
                self.grid = if v.is_empty() {
                    None
                } else {
                    Some(parse_value(key, v)?)
                }
            }
            "grid_thetas" => self.grid_thetas = parse_value(key, v)?,
            "input" => {
                self.input = if v.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(v))
                }
            }
            "n_positions" => self.n_positions = parse_count(key, v)? as usize,
            "replications" => self.replications = parse_count(key, v)? as usize,
            "synthetic_rho" => self.synthetic_rho = f(v)?,
            "synthetic_markets" => self.synthetic_markets = parse_count(key, v)? as usize,
            "synthetic_products" => self.synthetic_products = parse_count(key, v)? as usize,
            "synthetic_days" => self.synthetic_days = parse_count(key, v)? as usize,
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    /// Parses the file format, then applies `overrides` on top. The
    /// scenario is resolved first so its defaults sit under every explicit
    /// value.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> CResult<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ConfigError::new(format!("line {}", n + 1), "expected key = value")
            })?;
            let k = k.trim();
            if pairs.iter().any(|(q, _)| q == k) {
                return Err(ConfigError::new(k, "set twice"));
            }
            pairs.push((k.to_string(), v.trim().to_string()));
        }
        let scenario_text = overrides
            .iter()
            .rev()
            .chain(pairs.iter())
            .find(|(k, _)| k == "scenario")
            .map(|(_, v)| v.clone());
        let scenario = match scenario_text {
            Some(v) => parse_value("scenario", v.trim())?,
            None => Scenario::ThetaSweep,
        };
        let mut c = Self::for_scenario(scenario);
        for (k, v) in pairs.iter().chain(overrides) {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> CResult<()> {
        let check = |ok: bool, key: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::new(key, msg))
            }
        };
        let fin = |x: f64| x.is_finite();
        check(fin(self.quality), "quality", "must be finite")?;
        check(
            fin(self.asymmetric_quality),
            "asymmetric_quality",
            "must be finite",
        )?;
        check(
            fin(self.cost) && self.cost >= 0.0,
            "cost",
            "must be nonnegative",
        )?;
        check(self.mu > 0.0 && fin(self.mu), "mu", "must be positive")?;
        check(
            (0.0..=1.0).contains(&self.theta),
            "theta",
            "must lie in [0, 1]",
        )?;
        check((0.0..1.0).contains(&self.tau), "tau", "must lie in [0, 1)")?;
        check(
            self.sigma > 0.0 && fin(self.sigma),
            "sigma",
            "must be positive",
        )?;
        check(
            self.gamma > 0.0 && fin(self.gamma),
            "gamma",
            "must be positive",
        )?;
        check(
            self.delta > 0.0 && self.delta < 1.0,
            "delta",
            "must lie in (0, 1)",
        )?;
        check(
            self.reserve >= 0.0 && fin(self.reserve),
            "reserve",
            "must be nonnegative",
        )?;
        check(
            (0.0..1.0).contains(&self.alpha),
            "alpha",
            "must lie in [0, 1)",
        )?;
        check(
            self.beta > 0.0 && fin(self.beta),
            "beta",
            "must be positive",
        )?;
        check(self.xi >= 0.0 && fin(self.xi), "xi", "must be nonnegative")?;
        check(
            self.price_points >= 2 && self.price_points <= 255,
            "price_points",
            "must lie in 2..=255",
        )?;
        check(
            self.bid_points >= 2 && self.bid_points <= 255,
            "bid_points",
            "must lie in 2..=255",
        )?;
        check(
            self.convergence_window >= 1,
            "convergence_window",
            "must be positive",
        )?;
        check(self.max_periods >= 1, "max_periods", "must be positive")?;
        check(self.sessions >= 1, "sessions", "must be positive")?;
        check(self.replications >= 1, "replications", "must be positive")?;
        check(
            self.synthetic_rho.abs() < 1.0,
            "synthetic_rho",
            "must lie in (-1, 1)",
        )?;
        check(
            self.synthetic_markets >= 1,
            "synthetic_markets",
            "must be positive",
        )?;
        check(
            self.synthetic_products >= 2,
            "synthetic_products",
            "must be at least 2",
        )?;
        check(
            self.synthetic_days >= 2,
            "synthetic_days",
            "must be at least 2",
        )?;
        check(
            matches!(self.n_positions, 0 | 22 | 60),
            "n_positions",
            "must be 0 (infer), 22 or 60",
        )?;
        let in_unit = |g: &GridSpec| g.values().iter().all(|x| (0.0..=1.0).contains(x));
        check(
            in_unit(&self.grid_thetas),
            "grid_thetas",
            "values must lie in [0, 1]",
        )?;
        if let Some(g) = self.sweep_grid() {
            let vals = g.values();
            let ok = match self.scenario {
                Scenario::ThetaSweep | Scenario::StatefulCompare | Scenario::Asymmetric => {
                    in_unit(&g)
                }
                Scenario::CommissionSweep => vals.iter().all(|x| (0.0..1.0).contains(x)),
                Scenario::ReserveSweep | Scenario::RankEffect => vals.iter().all(|&x| x >= 0.0),
                Scenario::SyntheticRecovery => vals.iter().all(|&x| x > 0.0),
                Scenario::Estimate => true,
            };
            check(ok, "grid", "values outside the swept parameter's range")?;
        }
        if self.scenario == Scenario::Estimate {
            check(
                self.input.is_some(),
                "input",
                "the estimate scenario needs an input directory",
            )?;
        }
        Ok(())
    }

    /// Every key in a fixed order.
    pub fn normalized(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("scenario", self.scenario.to_string());
        put("quality", self.quality.to_string());
        put("asymmetric_quality", self.asymmetric_quality.to_string());
        put("cost", self.cost.to_string());
        put("mu", self.mu.to_string());
        put("theta", self.theta.to_string());
        put("tau", self.tau.to_string());
        put("sigma", self.sigma.to_string());
        put("gamma", self.gamma.to_string());
        put("delta", self.delta.to_string());
        put("reserve", self.reserve.to_string());
        put("alpha", self.alpha.to_string());
        put("beta", self.beta.to_string());
        put("xi", self.xi.to_string());
        put("price_points", self.price_points.to_string());
        put("bid_points", self.bid_points.to_string());
        put("state_mode", state_mode_name(self.state_mode).into());
        put("reward", reward_name(self.reward).into());
        put("convergence_window", self.convergence_window.to_string());
        put("max_periods", self.max_periods.to_string());
        put("sessions", self.sessions.to_string());
        put("seed", self.seed.to_string());
        put(
            "grid",
            self.sweep_grid().map_or(String::new(), |g| g.to_string()),
        );
        put("grid_thetas", self.grid_thetas.to_string());
        put(
            "input",
            self.input
                .as_ref()
                .map_or(String::new(), |p| p.display().to_string()),
        );
        put("n_positions", self.n_positions.to_string());
        put("replications", self.replications.to_string());
        put("synthetic_rho", self.synthetic_rho.to_string());
        put("synthetic_markets", self.synthetic_markets.to_string());
        put("synthetic_products", self.synthetic_products.to_string());
        put("synthetic_days", self.synthetic_days.to_string());
        s
    }

    /// SHA-256 of the normalized form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.normalized().as_bytes()))
    }
}
