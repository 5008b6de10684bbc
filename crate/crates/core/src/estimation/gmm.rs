use nalgebra::DMatrix;

use super::panel::Panel;
use super::regression::Projector;
use super::shares::{invert_day, stop_cdf, stop_weights, InversionConfig, Scratch};
use crate::numeric::{golden_max, linspace};
use crate::prelude::*;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Log-spaced coarse grid size.
    pub lambda_points: usize,
    pub rho_bound: f64,
    /// Refinement tolerance on `ln λ`.
    pub tol: f64,
    pub inversion: InversionConfig,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            lambda_min: 0.005,
            lambda_max: 1.0,
            lambda_points: 41,
            rho_bound: 0.95,
            tol: 1e-7,
            inversion: InversionConfig::default(),
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min > 0.0 && self.lambda_max > self.lambda_min) {
            return Err(Error::config("need 0 < lambda_min < lambda_max"));
        }
        if self.lambda_points < 3 {
            return Err(Error::config("lambda grid needs at least 3 points"));
        }
        if !(self.rho_bound > 0.0 && self.rho_bound < 1.0) {
            return Err(Error::config("rho bound must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchCostEstimate {
    pub lambda: f64,
    pub rho: f64,
    pub objective: f64,
    /// Mass stopping within the first quarter of the page.
    pub quarter_page_stop: f64,
    /// Product-day pairs with a lag that enter the moments.
    pub moment_obs: usize,
}

/// Sample averages for the two AR(1) moments. With
/// `η = ξ_t − ρ ξ_{t−1}` the moments are `a − ρ b` and `c − ρ d`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentSums {
    /// mean ξ_t ξ_{t−1}
    pub a: f64,
    /// mean ξ_{t−1}²
    pub b: f64,
    /// mean ξ_t r_{t−1}
    pub c: f64,
    /// mean ξ_{t−1} r_{t−1}
    pub d: f64,
}

impl MomentSums {
    pub fn moments(&self, rho: f64) -> [f64; 2] {
        [self.a - rho * self.b, self.c - rho * self.d]
    }

    pub fn objective(&self, rho: f64) -> f64 {
        let [g1, g2] = self.moments(rho);
        g1 * g1 + g2 * g2
    }

    /// Minimizer of the identity-weighted objective over `|ρ| ≤ bound`.
    /// The objective is quadratic in ρ, so the unconstrained minimizer is
    /// exact and clamping it is the constrained one.
    pub fn best_rho(&self, bound: f64) -> f64 {
        let den = self.b * self.b + self.d * self.d;
        if den == 0.0 {
            return 0.0;
        }
        ((self.a * self.b + self.c * self.d) / den).clamp(-bound, bound)
    }
}

/// Precomputed structure shared by every objective evaluation: observation
/// layout, the residualizing design and the lag pairs.
#[derive(Debug, Clone)]
pub struct MomentProblem<'a> {
    panel: &'a Panel,
    /// Flat index of each observed product-day, per market: `offsets[m] + idx`.
    offsets: Vec<usize>,
    /// Row in the regression of each observed flat index.
    rows: Vec<usize>,
    n_rows: usize,
    proj: Projector,
    /// (row t, row t−1, rank at t−1)
    lags: Vec<(usize, usize, f64)>,
    /// Mean rank on each row, for the rank-effect variant.
    rank: Vec<f64>,
}

impl<'a> MomentProblem<'a> {
    pub fn new(panel: &'a Panel) -> Result<Self> {
        panel.validate()?;
        let nf = panel.n_features();
        let n_markets = panel.markets.len();
        let mut offsets = Vec::with_capacity(n_markets);
        let mut rows = Vec::new();
        let mut n_rows = 0;
        let mut design: Vec<Vec<f64>> = Vec::new();
        let mut rank = Vec::new();
        for (mi, m) in panel.markets.iter().enumerate() {
            offsets.push(rows.len());
            for t in 0..m.days {
                for j in 0..m.n_products() {
                    let i = m.idx(t, j);
                    if !m.observed[i] {
                        rows.push(usize::MAX);
                        continue;
                    }
                    rows.push(n_rows);
                    n_rows += 1;
                    // market dummies, features, price, sponsored
                    let mut r = vec![0.0; n_markets + nf + 2];
                    r[mi] = 1.0;
                    for f in 0..nf {
                        r[n_markets + f] = m.feature(t, j, f);
                    }
                    r[n_markets + nf] = m.prices[i];
                    r[n_markets + nf + 1] = if m.sponsored[i] { 1.0 } else { 0.0 };
                    design.push(r);
                    rank.push(m.mean_rank(t, j, panel.n_positions));
                }
            }
        }
        // the rank instrument enters as a deviation from its market mean;
        // E[η] = 0 makes this the same population moment with less noise
        let mut lags = Vec::new();
        for (mi, m) in panel.markets.iter().enumerate() {
            let start = lags.len();
            for t in 1..m.days {
                for j in 0..m.n_products() {
                    let (now, before) = (
                        rows[offsets[mi] + m.idx(t, j)],
                        rows[offsets[mi] + m.idx(t - 1, j)],
                    );
                    if now != usize::MAX && before != usize::MAX {
                        lags.push((now, before, rank[before]));
                    }
                }
            }
            let n = (lags.len() - start) as f64;
            let mean = lags[start..].iter().map(|l| l.2).sum::<f64>() / n.max(1.0);
            for l in &mut lags[start..] {
                l.2 -= mean;
            }
        }
        if lags.is_empty() {
            return Err(Error::InsufficientData(
                "no product observed on two consecutive days".into(),
            ));
        }
        let k = n_markets + nf + 2;
        let x = DMatrix::from_fn(n_rows, k, |i, j| design[i][j]);
        let proj = Projector::new(x)?;
        Ok(Self {
            panel,
            offsets,
            rows,
            n_rows,
            proj,
            lags,
            rank,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_lags(&self) -> usize {
        self.lags.len()
    }

    /// Inverted mean utilities per row. `warm` carries the previous
    /// solution (flat layout) between calls.
    pub fn invert(
        &self,
        lambda: f64,
        cfg: &InversionConfig,
        warm: &mut Vec<f64>,
    ) -> Result<Vec<f64>> {
        let weights = stop_weights(lambda, self.panel.n_positions)?;
        let total: usize = self.panel.markets.iter().map(|m| m.n_obs()).sum();
        if warm.len() != total {
            *warm = vec![f64::NAN; total];
        }
        let mut scratch = Scratch::default();
        let mut out = vec![0.0; self.n_rows];
        for (mi, m) in self.panel.markets.iter().enumerate() {
            let jn = m.n_products();
            for t in 0..m.days {
                let lo = self.offsets[mi] + m.idx(t, 0);
                let range = m.idx(t, 0)..m.idx(t, 0) + jn;
                invert_day(
                    &m.shares[range.clone()],
                    &m.observed[range],
                    &m.rankings[t],
                    &weights,
                    cfg,
                    &mut scratch,
                    &mut warm[lo..lo + jn],
                )?;
                for j in 0..jn {
                    let row = self.rows[lo + j];
                    if row != usize::MAX {
                        out[row] = warm[lo + j];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Plain logit utilities `ln s_j − ln s_0` per row.
    pub fn logit_utilities(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        for (mi, m) in self.panel.markets.iter().enumerate() {
            for t in 0..m.days {
                let inside: f64 = (0..m.n_products())
                    .filter(|&j| m.observed[m.idx(t, j)])
                    .map(|j| m.shares[m.idx(t, j)])
                    .sum();
                let log_s0 = (1.0 - inside).ln();
                for j in 0..m.n_products() {
                    let i = m.idx(t, j);
                    let row = self.rows[self.offsets[mi] + i];
                    if row != usize::MAX {
                        out[row] = m.shares[i].ln() - log_s0;
                    }
                }
            }
        }
        out
    }

    pub fn rank(&self) -> &[f64] {
        &self.rank
    }

    pub fn residuals(&self, y: &[f64]) -> Vec<f64> {
        self.proj.residuals(y)
    }

    pub fn moment_sums(&self, xi: &[f64]) -> MomentSums {
        let mut s = MomentSums::default();
        for &(now, before, r) in &self.lags {
            s.a += xi[now] * xi[before];
            s.b += xi[before] * xi[before];
            s.c += xi[now] * r;
            s.d += xi[before] * r;
        }
        let n = self.lags.len() as f64;
        MomentSums {
            a: s.a / n,
            b: s.b / n,
            c: s.c / n,
            d: s.d / n,
        }
    }

    /// Moment sums at a given stopping rate.
    pub fn search_moments(
        &self,
        lambda: f64,
        cfg: &InversionConfig,
        warm: &mut Vec<f64>,
    ) -> Result<MomentSums> {
        let delta = self.invert(lambda, cfg, warm)?;
        Ok(self.moment_sums(&self.residuals(&delta)))
    }
}

/// Moment vector `(E[η ξ_{t−1}], E[η r_{t−1}])` at `(λ, ρ)`.
pub fn gmm_moments(panel: &Panel, lambda: f64, rho: f64) -> Result<[f64; 2]> {
    let problem = MomentProblem::new(panel)?;
    let sums = problem.search_moments(lambda, &InversionConfig::default(), &mut Vec::new())?;
    Ok(sums.moments(rho))
}

/// Exponential stopping rate and quality persistence by GMM: ρ is profiled
/// out exactly at each λ; λ is searched on a log grid and refined by golden
/// section between the neighbours of the best grid point.
pub fn gmm_estimate(panel: &Panel, cfg: &GmmConfig) -> Result<SearchCostEstimate> {
    cfg.validate()?;
    let problem = MomentProblem::new(panel)?;
    let mut warm = Vec::new();
    let mut profile = |log_lambda: f64| -> Option<(f64, f64)> {
        let sums = problem
            .search_moments(log_lambda.exp(), &cfg.inversion, &mut warm)
            .ok()?;
        let rho = sums.best_rho(cfg.rho_bound);
        Some((rho, sums.objective(rho)))
    };
    let grid = linspace(cfg.lambda_min.ln(), cfg.lambda_max.ln(), cfg.lambda_points);
    let values: Vec<f64> = grid
        .iter()
        .map(|&g| profile(g).map_or(f64::INFINITY, |v| v.1))
        .collect();
    let best = (0..grid.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .filter(|&k| values[k].is_finite())
        .ok_or(Error::Solver {
            iterations: grid.len(),
            residual: f64::INFINITY,
        })?;
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (log_lambda, _) = golden_max(
        |g| profile(g).map_or(f64::NEG_INFINITY, |v| -v.1),
        lo,
        hi,
        cfg.tol,
    );
    let (log_lambda, (rho, objective)) = match profile(log_lambda) {
        Some(v) if v.1 <= values[best] => (log_lambda, v),
        _ => (
            grid[best],
            profile(grid[best]).expect("grid point evaluated before"),
        ),
    };
    let lambda = log_lambda.exp();
    Ok(SearchCostEstimate {
        lambda,
        rho,
        objective,
        quarter_page_stop: stop_cdf(lambda, panel.n_positions as f64 / 4.0),
        moment_obs: problem.n_lags(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankEffectConfig {
    pub zeta_min: f64,
    pub zeta_max: f64,
    pub zeta_points: usize,
    pub rho_bound: f64,
    pub tol: f64,
}

impl Default for RankEffectConfig {
    fn default() -> Self {
        Self {
            zeta_min: -1.0,
            zeta_max: 1.0,
            zeta_points: 81,
            rho_bound: 0.95,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankEffectEstimate {
    pub zeta: f64,
    pub rho: f64,
    pub objective: f64,
    pub moment_obs: usize,
}

/// Utility per position of rank, from plain logit inversion and the same
/// AR(1) moments; ρ profiled out, ζ by grid then golden section.
pub fn estimate_rank_effect(panel: &Panel, cfg: &RankEffectConfig) -> Result<RankEffectEstimate> {
    if !(cfg.zeta_max > cfg.zeta_min) || cfg.zeta_points < 3 {
        return Err(Error::config("bad zeta grid"));
    }
    let problem = MomentProblem::new(panel)?;
    // residualization is linear, so ξ(ζ) = M δ − ζ M r
    let xi0 = problem.residuals(&problem.logit_utilities());
    let xr = problem.residuals(problem.rank());
    let mut xi = vec![0.0; xi0.len()];
    let mut profile = |zeta: f64| -> (f64, f64) {
        for k in 0..xi.len() {
            xi[k] = xi0[k] - zeta * xr[k];
        }
        let sums = problem.moment_sums(&xi);
        let rho = sums.best_rho(cfg.rho_bound);
        (rho, sums.objective(rho))
    };
    let grid = linspace(cfg.zeta_min, cfg.zeta_max, cfg.zeta_points);
    let values: Vec<f64> = grid.iter().map(|&z| profile(z).1).collect();
    let best = (0..grid.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (zeta, _) = golden_max(|z| -profile(z).1, lo, hi, cfg.tol);
    let (rho, objective) = profile(zeta);
    Ok(RankEffectEstimate {
        zeta,
        rho,
        objective,
        moment_obs: problem.n_lags(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::synthetic::{
        generate_synthetic_panel, SyntheticConfig, SyntheticDemand,
    };

    #[test]
    fn best_rho_minimizes_the_quadratic() {
        let s = MomentSums {
            a: 0.3,
            b: 0.5,
            c: 2.0,
            d: 2.4,
        };
        let rho = s.best_rho(0.95);
        for dr in [-1e-3, 1e-3] {
            assert!(s.objective(rho) <= s.objective(rho + dr));
        }
        let clamped = MomentSums {
            a: 5.0,
            b: 1.0,
            c: 0.0,
            d: 0.0,
        };
        assert_eq!(clamped.best_rho(0.95), 0.95);
    }

    #[test]
    fn panel_without_lags_is_rejected() {
        let cfg = SyntheticConfig {
            markets: 2,
            products: 5,
            days: 1,
            ..Default::default()
        };
        let p = generate_synthetic_panel(&cfg, 1).unwrap();
        assert!(matches!(
            MomentProblem::new(&p),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn moments_vanish_at_the_truth_as_the_sample_grows() {
        // exact shares: the only moment noise is finite-sample
        let norm = |markets: usize| {
            let mut total = 0.0;
            for seed in 0..4 {
                let cfg = SyntheticConfig {
                    markets,
                    days: 30,
                    ..Default::default()
                };
                let p = generate_synthetic_panel(&cfg, 100 + seed).unwrap();
                let g = gmm_moments(&p, 0.05, 0.8).unwrap();
                total += (g[0] * g[0] + g[1] * g[1]).sqrt();
            }
            total / 4.0
        };
        let small = norm(4);
        let large = norm(40);
        // √10 ≈ 3.16; allow for seed noise
        assert!(small / large > 1.8, "{small} vs {large}");
    }

    #[test]
    fn recovers_stopping_rate_and_persistence() {
        let p = generate_synthetic_panel(&SyntheticConfig::default(), 7).unwrap();
        let est = gmm_estimate(&p, &GmmConfig::default()).unwrap();
        assert!((est.lambda / 0.05 - 1.0).abs() < 0.1, "{est:?}");
        assert!((est.rho - 0.8).abs() < 0.1, "{est:?}");
        assert!((est.quarter_page_stop - stop_cdf(est.lambda, 5.5)).abs() < 1e-15);
    }

    #[test]
    fn iid_quality_gives_rho_near_zero() {
        let cfg = SyntheticConfig {
            rho: 0.0,
            ..Default::default()
        };
        let p = generate_synthetic_panel(&cfg, 8).unwrap();
        let est = gmm_estimate(&p, &GmmConfig::default()).unwrap();
        assert!(est.rho.abs() < 0.1, "{est:?}");
    }

    #[test]
    fn rank_effect_recovered() {
        let cfg = SyntheticConfig {
            demand: SyntheticDemand::RankEffect { zeta: -0.1 },
            ..Default::default()
        };
        let p = generate_synthetic_panel(&cfg, 9).unwrap();
        let est = estimate_rank_effect(&p, &RankEffectConfig::default()).unwrap();
        assert!((est.zeta / -0.1 - 1.0).abs() < 0.2, "{est:?}");
        let flat = SyntheticConfig {
            demand: SyntheticDemand::RankEffect { zeta: 0.0 },
            ..Default::default()
        };
        let p = generate_synthetic_panel(&flat, 10).unwrap();
        let est = estimate_rank_effect(&p, &RankEffectConfig::default()).unwrap();
        assert!(est.zeta.abs() < 0.02, "{est:?}");
    }
}
