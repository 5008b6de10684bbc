use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::panel::{daily_market_size, KeywordPanel, Panel};
use super::shares::{predict_day_into, stop_weights, Scratch};
use crate::prelude::*;
use crate::{Error, Result};

/// How the generator turns mean utilities into shares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticDemand {
    /// Exponential stopping over each search's listing, rate `lambda`.
    Search { lambda: f64 },
    /// Plain logit over all products, with `zeta · rank` added to utility.
    RankEffect { zeta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub markets: usize,
    pub products: usize,
    pub days: usize,
    pub searches: usize,
    pub n_positions: usize,
    pub demand: SyntheticDemand,
    /// AR(1) persistence of the unobserved quality.
    pub rho: f64,
    /// Standard deviation of the quality innovation.
    pub innovation_sd: f64,
    pub intercept: f64,
    pub beta_feature: f64,
    pub alpha_price: f64,
    pub gamma_sponsored: f64,
    /// Products per day placed in the top slots and flagged sponsored.
    pub sponsored_per_day: usize,
    /// Organic score weight on yesterday's log sales. Zero makes rankings
    /// independent of demand.
    pub rank_on_sales: f64,
    pub rank_on_feature: f64,
    /// Spread of a fixed per-product relevance score that the platform uses
    /// for ranking and consumers do not value.
    pub relevance_sd: f64,
    /// Per-search noise in the organic score.
    pub rank_noise: f64,
    /// Log-normal measurement noise on shares; zero gives exact model shares.
    pub share_noise: f64,
    pub volume: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            markets: 10,
            products: 20,
            days: 60,
            searches: 8,
            n_positions: 22,
            demand: SyntheticDemand::Search { lambda: 0.05 },
            rho: 0.8,
            innovation_sd: 0.08,
            intercept: 1.0,
            beta_feature: 0.5,
            alpha_price: 1.0,
            gamma_sponsored: 0.3,
            sponsored_per_day: 3,
            rank_on_sales: 1.0,
            rank_on_feature: 0.5,
            relevance_sd: 1.0,
            rank_noise: 0.5,
            share_noise: 0.0,
            volume: 300_000.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.markets == 0
            || self.products == 0
            || self.days == 0
            || self.searches == 0
            || self.n_positions == 0
        {
            return Err(Error::config("panel dimensions must be positive"));
        }
        if self.products > u32::MAX as usize {
            return Err(Error::config("too many products"));
        }
        if let SyntheticDemand::Search { lambda } = self.demand {
            if !(lambda > 0.0) {
                return Err(Error::config("lambda must be positive"));
            }
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::config("rho must lie in (-1, 1)"));
        }
        if self.innovation_sd < 0.0
            || self.relevance_sd < 0.0
            || self.rank_noise < 0.0
            || self.share_noise < 0.0
        {
            return Err(Error::config("noise scales must be non-negative"));
        }
        if self.sponsored_per_day > self.products.min(self.n_positions) {
            return Err(Error::config("more sponsored products than slots"));
        }
        if !(self.volume > 0.0) {
            return Err(Error::config("volume must be positive"));
        }
        Ok(())
    }
}

/// Simulated panel with known parameters, reproducible from `seed`.
pub fn generate_synthetic_panel(cfg: &SyntheticConfig, seed: u64) -> Result<Panel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let markets = (0..cfg.markets)
        .map(|k| generate_market(cfg, k, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Panel {
        n_positions: cfg.n_positions,
        markets,
    })
}

fn generate_market(cfg: &SyntheticConfig, k: usize, rng: &mut ChaCha8Rng) -> Result<KeywordPanel> {
    let j_n = cfg.products;
    let n_listed = j_n.min(cfg.n_positions);
    let size = daily_market_size(cfg.volume);
    let feature: Vec<f64> = (0..j_n).map(|_| rng.sample(StandardNormal)).collect();
    let base_price: Vec<f64> = (0..j_n).map(|_| rng.random_range(1.0..3.0)).collect();
    let relevance: Vec<f64> = (0..j_n)
        .map(|_| cfg.relevance_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let price_jitter = Normal::new(0.0, 0.05).unwrap();
    let stationary_sd = cfg.innovation_sd / (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut xi: Vec<f64> = (0..j_n)
        .map(|_| stationary_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let weights = match cfg.demand {
        SyntheticDemand::Search { lambda } => stop_weights(lambda, cfg.n_positions)?,
        SyntheticDemand::RankEffect { .. } => Vec::new(),
    };
    let mut scratch = Scratch::default();
    let n_obs = j_n * cfg.days;
    let mut panel = KeywordPanel {
        keyword: format!("kw{k:03}"),
        category: format!("cat{}", k % 3),
        volume: cfg.volume,
        products: (0..j_n).map(|j| format!("p{k:03}-{j:03}")).collect(),
        days: cfg.days,
        n_features: 1,
        sales: vec![0.0; n_obs],
        shares: vec![0.0; n_obs],
        prices: vec![0.0; n_obs],
        sponsored: vec![false; n_obs],
        features: vec![0.0; n_obs],
        observed: vec![true; n_obs],
        rankings: Vec::with_capacity(cfg.days),
    };
    // yesterday's log sales; before the first day, rank on features only
    let mut lag_log_sales: Option<Vec<f64>> = None;
    let mut ids: Vec<u32> = (0..j_n as u32).collect();
    let mut exp_delta = vec![0.0; j_n];
    let mut shares = vec![0.0; j_n];
    let mut score = vec![0.0; j_n];
    for t in 0..cfg.days {
        if t > 0 {
            for x in xi.iter_mut() {
                *x = cfg.rho * *x + cfg.innovation_sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        ids.shuffle(rng);
        let mut is_sponsored = vec![false; j_n];
        for &p in &ids[..cfg.sponsored_per_day] {
            is_sponsored[p as usize] = true;
        }
        let mut day_rankings = Vec::with_capacity(cfg.searches);
        for _ in 0..cfg.searches {
            for j in 0..j_n {
                let mut s = cfg.rank_on_feature * feature[j]
                    + relevance[j]
                    + cfg.rank_noise * rng.sample::<f64, _>(StandardNormal);
                if let Some(lag) = &lag_log_sales {
                    s += cfg.rank_on_sales * lag[j];
                }
                score[j] = s;
            }
            let mut top: Vec<u32> = ids[..cfg.sponsored_per_day].to_vec();
            top.shuffle(rng);
            let mut organic: Vec<u32> = ids[cfg.sponsored_per_day..].to_vec();
            organic.sort_by(|&a, &b| score[b as usize].total_cmp(&score[a as usize]));
            top.extend(organic);
            top.truncate(n_listed);
            day_rankings.push(top);
        }
        panel.rankings.push(day_rankings);
        for j in 0..j_n {
            let i = panel.idx(t, j);
            panel.prices[i] = base_price[j] * price_jitter.sample(rng).exp();
            panel.sponsored[i] = is_sponsored[j];
            panel.features[i] = feature[j];
            let mut delta = cfg.intercept + cfg.beta_feature * feature[j]
                - cfg.alpha_price * panel.prices[i]
                + xi[j];
            if is_sponsored[j] {
                delta += cfg.gamma_sponsored;
            }
            if let SyntheticDemand::RankEffect { zeta } = cfg.demand {
                delta += zeta * panel.mean_rank(t, j, cfg.n_positions);
            }
            exp_delta[j] = delta.exp();
        }
        match cfg.demand {
            SyntheticDemand::Search { .. } => {
                predict_day_into(
                    &exp_delta,
                    &panel.rankings[t],
                    &weights,
                    &mut scratch,
                    &mut shares,
                );
            }
            SyntheticDemand::RankEffect { .. } => {
                let d = 1.0 + exp_delta.iter().sum::<f64>();
                for j in 0..j_n {
                    shares[j] = exp_delta[j] / d;
                }
            }
        }
        let mut log_sales = vec![0.0; j_n];
        for j in 0..j_n {
            let i = panel.idx(t, j);
            let mut s = shares[j];
            if cfg.share_noise > 0.0 {
                s *= (cfg.share_noise * rng.sample::<f64, _>(StandardNormal)).exp();
            }
            if !(s > 0.0) {
                return Err(Error::DegenerateMarket(format!(
                    "product {j} day {t} has no sales"
                )));
            }
            panel.shares[i] = s;
            panel.sales[i] = s * size;
            log_sales[j] = panel.sales[i].ln();
        }
        lag_log_sales = Some(log_sales);
    }
    Ok(panel)
}
