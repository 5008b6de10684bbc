//! Equilibrium benchmarks: the pricing-only Nash price, the Nash-Bertrand
//! equilibrium in prices and bids, joint-profit monopoly, and the search-cost
//! level at which competitive and collusive prices cross.

use crate::auction::AuctionSpec;
use crate::economy::{DemandModel, Economy, ProfitBreakdown};
use crate::market::{solo_share, MarketParams};
use crate::numeric::{bisect, golden_max, grid_then_golden, linspace};
use crate::prelude::*;
use crate::{Error, Result};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop when the largest action change of one iteration is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Highest bid the best response searches.
    pub bid_ceiling: f64,
    pub price_grid: usize,
    pub bid_grid: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 400,
            bid_ceiling: 1.0,
            price_grid: 32,
            bid_grid: 24,
        }
    }
}

/// Nash-Bertrand point in prices and bids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NashPoint {
    pub price: [f64; 2],
    pub bid: [f64; 2],
    /// Set when bids carry no weight and are reported as 0.
    pub bid_degenerate: bool,
    pub converged: bool,
    pub iterations: usize,
    /// Largest gap between an action and its best response.
    pub residual: f64,
}

/// All benchmarks at one θ for a symmetric market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumResult {
    pub theta: f64,
    pub p_on: f64,
    pub p_n: f64,
    pub b_n: f64,
    pub p_m: f64,
    pub b_m: f64,
    pub pricing_only: ProfitBreakdown,
    pub nash: ProfitBreakdown,
    pub monopoly: ProfitBreakdown,
    pub bid_degenerate: bool,
    pub converged: bool,
    pub residual: f64,
}

fn zero_margin_price(params: &MarketParams, i: usize) -> f64 {
    params.cost[i] / (1.0 - params.tau)
}

/// Upper end of price searches: far enough above quality that demand has
/// vanished.
fn price_ceiling(params: &MarketParams, i: usize) -> f64 {
    (params.cost[i] + (params.quality[i] - params.cost[i]).abs() + 12.0 * params.mu)
        / (1.0 - params.tau)
}

fn pair_share(params: &MarketParams, p: [f64; 2], i: usize) -> f64 {
    let x = [params.utility_index(0, p[0]), params.utility_index(1, p[1])];
    let m = x[0].max(x[1]).max(0.0);
    let den = (-m).exp() + (x[0] - m).exp() + (x[1] - m).exp();
    (x[i] - m).exp() / den
}

/// Derivative of the pricing-only profit in the seller's own price.
fn pricing_only_foc(params: &MarketParams, p: [f64; 2], i: usize) -> f64 {
    let th = params.theta;
    let tau = params.tau;
    let m = (1.0 - tau) * p[i] - params.cost[i];
    let s1 = solo_share(params.utility_index(i, p[i]));
    let s2 = pair_share(params, p, i);
    let mu = params.mu;
    0.5 * th * s1 * ((1.0 - tau) - (1.0 - s1) * m / mu)
        + (1.0 - th) * s2 * ((1.0 - tau) - (1.0 - s2) * m / mu)
}

fn pricing_only_best_response(params: &MarketParams, p: [f64; 2], i: usize) -> Result<f64> {
    let lo = zero_margin_price(params, i);
    let hi = price_ceiling(params, i);
    let f = |x: f64| {
        let mut q = p;
        q[i] = x;
        pricing_only_foc(params, q, i)
    };
    bisect(f, lo, hi, 1e-15, 200).ok_or(Error::Solver {
        iterations: 0,
        residual: f(hi),
    })
}

/// Nash price without ads, where each seller shows on top half the time.
/// Returns the common price of a symmetric market.
pub fn solve_pricing_only(params: &MarketParams) -> Result<f64> {
    if !params.is_symmetric() {
        return Err(Error::domain(
            "the pricing-only benchmark needs symmetric sellers",
        ));
    }
    solve_pricing_only_pair(params).map(|p| p[0])
}

/// Pricing-only Nash prices for possibly asymmetric sellers.
pub fn solve_pricing_only_pair(params: &MarketParams) -> Result<[f64; 2]> {
    params.validate()?;
    if params.n() != 2 {
        return Err(Error::DimensionMismatch {
            what: "sellers",
            expected: 2,
            got: params.n(),
        });
    }
    let mut p = [
        zero_margin_price(params, 0) + params.mu,
        zero_margin_price(params, 1) + params.mu,
    ];
    for damping in [1.0, 0.5] {
        for it in 0..2000 {
            let br = [
                pricing_only_best_response(params, p, 0)?,
                pricing_only_best_response(params, p, 1)?,
            ];
            let step = (br[0] - p[0]).abs().max((br[1] - p[1]).abs());
            for i in 0..2 {
                p[i] += damping * (br[i] - p[i]);
            }
            if step < 1e-13 {
                let residual = pricing_only_foc(params, p, 0)
                    .abs()
                    .max(pricing_only_foc(params, p, 1).abs());
                if residual < 1e-9 {
                    return Ok(p);
                }
                return Err(Error::Solver {
                    iterations: it + 1,
                    residual,
                });
            }
        }
    }
    let residual = pricing_only_foc(params, p, 0)
        .abs()
        .max(pricing_only_foc(params, p, 1).abs());
    Err(Error::Solver {
        iterations: 4000,
        residual,
    })
}

fn bid_candidates(cfg: &SolverConfig) -> Vec<f64> {
    let k = cfg.bid_grid.max(2);
    let mut v = vec![0.0];
    v.extend((0..k).map(|j| cfg.bid_ceiling * 10f64.powf(-4.0 + 4.0 * j as f64 / (k - 1) as f64)));
    v
}

/// Best response `(price, bid, profit)` of seller `i` against the rival's
/// action.
pub fn best_response(
    eco: &Economy,
    cfg: &SolverConfig,
    i: usize,
    rival_price: f64,
    rival_bid: f64,
) -> Result<(f64, f64, f64)> {
    let params = eco.params();
    let j = 1 - i;
    let prices = linspace(
        zero_margin_price(params, i),
        price_ceiling(params, i),
        cfg.price_grid.max(3),
    );
    let price_for_bid = |b: f64| -> (f64, f64) {
        let mut bids = [0.0; 2];
        bids[i] = b;
        bids[j] = rival_bid;
        let o = match eco.outcome(bids) {
            Ok(o) => o,
            Err(_) => return (f64::NAN, f64::NEG_INFINITY),
        };
        grid_then_golden(
            |x| {
                let mut p = [0.0; 2];
                p[i] = x;
                p[j] = rival_price;
                eco.profit_of(i, p, &o)
            },
            &prices,
            1e-11,
        )
    };
    if !(rival_bid >= 0.0) || !rival_price.is_finite() {
        return Err(Error::domain(
            "rival action must be finite with a nonnegative bid",
        ));
    }
    if !eco.has_ads() {
        let (p, v) = price_for_bid(0.0);
        return Ok((p, 0.0, v));
    }
    let bids = bid_candidates(cfg);
    let (b, v) = grid_then_golden(|b| price_for_bid(b).1, &bids, 1e-11);
    let (p, v2) = price_for_bid(b);
    Ok((p, b, v.max(v2)))
}

/// Nash-Bertrand equilibrium of an economy. Symmetric markets iterate a
/// shared candidate; asymmetric ones iterate both best responses.
pub fn solve_nash(eco: &Economy, cfg: &SolverConfig) -> Result<NashPoint> {
    let params = eco.params();
    let symmetric = params.is_symmetric();
    let start = |i: usize| zero_margin_price(params, i) + 2.0 * params.mu;
    let mut last_residual = f64::INFINITY;
    for damping in [1.0, 0.5] {
        let mut x = [[start(0), 0.05], [start(1), 0.05]];
        for it in 0..cfg.max_iter {
            let mut br = [[0.0; 2]; 2];
            let (p0, b0, _) = best_response(eco, cfg, 0, x[1][0], x[1][1])?;
            br[0] = [p0, b0];
            if symmetric {
                br[1] = br[0];
            } else {
                let (p1, b1, _) = best_response(eco, cfg, 1, x[0][0], x[0][1])?;
                br[1] = [p1, b1];
            }
            let mut step: f64 = 0.0;
            for s in 0..2 {
                for k in 0..2 {
                    step = step.max((br[s][k] - x[s][k]).abs());
                    x[s][k] += damping * (br[s][k] - x[s][k]);
                }
            }
            last_residual = step;
            if step < cfg.tol {
                let degenerate = !eco.has_ads();
                return Ok(NashPoint {
                    price: [x[0][0], x[1][0]],
                    bid: if degenerate {
                        [0.0, 0.0]
                    } else {
                        [x[0][1], x[1][1]]
                    },
                    bid_degenerate: degenerate,
                    converged: true,
                    iterations: it + 1,
                    residual: step,
                });
            }
        }
    }
    Err(Error::Solver {
        iterations: 2 * cfg.max_iter,
        residual: last_residual,
    })
}

/// Symmetric Nash-Bertrand `(price, bid)`. At θ = 0 the bid is reported as
/// 0 and flagged degenerate.
pub fn solve_nash_bertrand(params: &MarketParams, spec: &AuctionSpec) -> Result<NashPoint> {
    if !params.is_symmetric() {
        return Err(Error::domain(
            "solve_nash_bertrand needs symmetric sellers; use solve_nash",
        ));
    }
    let eco = Economy::new(params.clone(), *spec)?;
    if params.theta == 0.0 {
        let p = solve_pricing_only(params)?;
        return Ok(NashPoint {
            price: [p, p],
            bid: [0.0, 0.0],
            bid_degenerate: true,
            converged: true,
            iterations: 0,
            residual: 0.0,
        });
    }
    solve_nash(&eco, &SolverConfig::default())
}

fn monopoly_foc(params: &MarketParams, p: f64) -> f64 {
    let th = params.theta;
    let tau = params.tau;
    let mu = params.mu;
    let m = (1.0 - tau) * p - params.cost[0];
    let s1 = solo_share(params.utility_index(0, p));
    let s2 = pair_share(params, [p, p], 0);
    th * s1 * ((1.0 - tau) - (1.0 - s1) * m / mu)
        + (1.0 - th) * 2.0 * s2 * ((1.0 - tau) - (1.0 - 2.0 * s2) * m / mu)
}

/// Joint-profit maximizing common price with both bids at zero.
pub fn solve_monopoly(params: &MarketParams) -> Result<(f64, f64)> {
    params.validate()?;
    if !params.is_symmetric() || params.n() != 2 {
        return Err(Error::domain(
            "the monopoly benchmark needs a symmetric duopoly",
        ));
    }
    let th = params.theta;
    let objective = |p: f64| {
        let m = (1.0 - params.tau) * p - params.cost[0];
        (th * solo_share(params.utility_index(0, p))
            + (1.0 - th) * 2.0 * pair_share(params, [p, p], 0))
            * m
    };
    let lo = zero_margin_price(params, 0);
    let hi = price_ceiling(params, 0);
    let (p0, _) = golden_max(objective, lo, hi, 1e-10);
    // polish on the first-order condition
    let width = 1e-4;
    let p = bisect(
        |x| monopoly_foc(params, x),
        (p0 - width).max(lo),
        (p0 + width).min(hi),
        1e-15,
        200,
    )
    .unwrap_or(p0);
    let residual = monopoly_foc(params, p).abs();
    if residual > 1e-9 {
        return Err(Error::Solver {
            iterations: 0,
            residual,
        });
    }
    Ok((p, 0.0))
}

/// Joint-profit optimum of any symmetric economy at zero bids, by golden
/// section on the common price.
pub fn solve_monopoly_in(eco: &Economy) -> Result<(f64, f64)> {
    let params = eco.params();
    if !params.is_symmetric() {
        return Err(Error::domain(
            "the monopoly benchmark needs symmetric sellers",
        ));
    }
    if eco.model() == DemandModel::Search {
        return solve_monopoly(params);
    }
    let o = eco.outcome([0.0, 0.0])?;
    let joint = |p: f64| eco.breakdown_with([p, p], &o).total_seller_profit();
    let prices = linspace(zero_margin_price(params, 0), price_ceiling(params, 0), 64);
    let (p, _) = grid_then_golden(joint, &prices, 1e-12);
    Ok((p, 0.0))
}

/// Every benchmark at the market's θ.
pub fn solve_benchmarks(params: &MarketParams, spec: &AuctionSpec) -> Result<EquilibriumResult> {
    let eco = Economy::new(params.clone(), *spec)?;
    let p_on = solve_pricing_only(params)?;
    let nash = solve_nash_bertrand(params, spec)?;
    let (p_m, b_m) = solve_monopoly(params)?;
    Ok(EquilibriumResult {
        theta: params.theta,
        p_on,
        p_n: nash.price[0],
        b_n: nash.bid[0],
        p_m,
        b_m,
        pricing_only: eco.breakdown(&[p_on, p_on], &[0.0, 0.0])?,
        nash: eco.breakdown(&nash.price, &nash.bid)?,
        monopoly: eco.breakdown(&[p_m, p_m], &[b_m, b_m])?,
        bid_degenerate: nash.bid_degenerate,
        converged: nash.converged,
        residual: nash.residual,
    })
}

/// The θ at which the Nash and monopoly prices coincide.
pub fn find_crossing_theta(params: &MarketParams, spec: &AuctionSpec) -> Result<f64> {
    crossing_of(|theta| {
        let p = params.clone().with_theta(theta);
        Ok(solve_nash_bertrand(&p, spec)?.price[0] - solve_monopoly(&p)?.0)
    })
}

/// Bisection for the sign change of `gap` on `[0, 1]`, which must go from
/// negative to positive.
fn crossing_of(gap: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    let g_lo = gap(lo)?;
    let g_hi = gap(hi)?;
    if !(g_lo < 0.0 && g_hi > 0.0) {
        return Err(Error::ModelViolation(format!(
            "no single crossing: p^N - p^M is {g_lo:.6} at theta 0 and {g_hi:.6} at theta 1"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let g = gap(mid)?;
        if g.abs() < 1e-6 {
            return Ok(mid);
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest profit gain of seller `which` from `draws` random unilateral
/// deviations away from `(price, bid)`.
pub fn deviation_audit(
    eco: &Economy,
    eq: &NashPoint,
    which: usize,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let base_o = eco.outcome(eq.bid)?;
    let base = eco.profit_of(which, eq.price, &base_o);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..draws {
        // half the draws are local, half roam the whole action box
        let scale = if k % 2 == 0 { 0.01 } else { 1.0 };
        let mut p = eq.price;
        let mut b = eq.bid;
        p[which] = (p[which] + scale * (rng.random::<f64>() - 0.5)).max(0.0);
        b[which] = if eco.has_ads() {
            (b[which] + scale * 0.5 * (rng.random::<f64>() - 0.5)).max(0.0)
        } else {
            b[which]
        };
        let o = eco.outcome(b)?;
        worst = worst.max(eco.profit_of(which, p, &o) - base);
    }
    Ok(worst)
}

/// Largest gain over a square grid of `half_width` steps around the point.
pub fn local_grid_audit(
    eco: &Economy,
    eq: &NashPoint,
    which: usize,
    step: f64,
    half_width: usize,
) -> Result<f64> {
    let base = eco.profit_of(which, eq.price, &eco.outcome(eq.bid)?);
    let h = half_width as i64;
    let mut worst = f64::NEG_INFINITY;
    for db in -h..=h {
        let mut b = eq.bid;
        b[which] += db as f64 * step;
        if b[which] < 0.0 || (!eco.has_ads() && db != 0) {
            continue;
        }
        let o = eco.outcome(b)?;
        for dp in -h..=h {
            let mut p = eq.price;
            p[which] += dp as f64 * step;
            worst = worst.max(eco.profit_of(which, p, &o) - base);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::pricing_only_profit;
    use approx::assert_relative_eq;

    fn spec() -> AuctionSpec {
        AuctionSpec::new(0.5)
    }

    #[test]
    fn pricing_only_baseline() {
        let p = solve_pricing_only(&MarketParams::baseline()).unwrap();
        assert!((p - 1.47).abs() < 0.01, "{p}");
    }

    #[test]
    fn pricing_only_full_search_cost_root() {
        // θ = 1: (1−τ) − (1 − s(p))·m/μ = 0, solved independently
        let params = MarketParams::baseline().with_theta(1.0);
        let p = solve_pricing_only(&params).unwrap();
        let g = |x: f64| 1.0 - (1.0 - solo_share((2.0 - x) / 0.25)) * (x - 1.0) / 0.25;
        let mut lo = 1.0;
        let mut hi = 5.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(p, lo, max_relative = 1e-12);
        assert!(p > solve_pricing_only(&MarketParams::baseline()).unwrap());
    }

    #[test]
    fn pricing_only_is_a_best_response() {
        let params = MarketParams::baseline().with_theta(0.4).with_tau(0.1);
        let p = solve_pricing_only(&params).unwrap();
        let base = pricing_only_profit(&[p, p], &params).unwrap()[0];
        for k in -50..=50 {
            let q = p + k as f64 * 1e-3;
            assert!(pricing_only_profit(&[q, p], &params).unwrap()[0] <= base + 1e-15);
        }
    }

    #[test]
    fn commission_rescales_cost() {
        // with c' = c(1−τ'), the margin (1−τ')(p − c) has the τ = 0 argmax
        let base = MarketParams::baseline().with_theta(0.5);
        let p0 = solve_pricing_only(&base).unwrap();
        let mut scaled = base.clone().with_tau(0.3);
        scaled.cost = vec![0.7, 0.7];
        let p1 = solve_pricing_only(&scaled).unwrap();
        assert_relative_eq!(p0, p1, max_relative = 1e-10);
    }

    #[test]
    fn nash_at_theta_zero_is_degenerate() {
        let r = solve_nash_bertrand(&MarketParams::baseline(), &spec()).unwrap();
        assert!(r.bid_degenerate);
        assert_eq!(r.bid, [0.0, 0.0]);
        assert_relative_eq!(
            r.price[0],
            solve_pricing_only(&MarketParams::baseline()).unwrap()
        );
    }

    #[test]
    fn nash_full_search_cost() {
        let params = MarketParams::baseline().with_theta(1.0);
        let r = solve_nash_bertrand(&params, &spec()).unwrap();
        assert!((r.price[0] - 2.1).abs() < 0.02, "{:?}", r);
        assert!((r.bid[0] - 0.24).abs() < 0.02, "{:?}", r);
        let eco = Economy::new(params, spec()).unwrap();
        assert!(deviation_audit(&eco, &r, 0, 200, 9).unwrap() < 1e-6);
        assert!(local_grid_audit(&eco, &r, 0, 1e-4, 5).unwrap() < 1e-7);
    }

    #[test]
    fn monopoly_limits() {
        let full = MarketParams::baseline().with_theta(1.0);
        let (pm, bm) = solve_monopoly(&full).unwrap();
        assert_eq!(bm, 0.0);
        assert_relative_eq!(pm, solve_pricing_only(&full).unwrap(), max_relative = 1e-9);
        let (p0, _) = solve_monopoly(&MarketParams::baseline()).unwrap();
        assert!(p0 > 1.47 && p0 < 2.1, "{p0}");
    }

    #[test]
    fn generic_monopoly_agrees_with_search_model() {
        let params = MarketParams::baseline().with_theta(0.3);
        let eco = Economy::with_model(
            params.clone(),
            spec(),
            DemandModel::RankEffect {
                zeta: 0.0,
                random_display: true,
            },
        )
        .unwrap();
        // ζ = 0 with random display is the θ = 0 market
        let (p, _) = solve_monopoly_in(&eco).unwrap();
        let (q, _) = solve_monopoly(&params.with_theta(0.0)).unwrap();
        assert!((p - q).abs() < 1e-6);
    }

    #[test]
    fn crossing_exists_and_moves_with_commission() {
        let t0 = find_crossing_theta(&MarketParams::baseline(), &spec()).unwrap();
        assert!(t0 > 0.0 && t0 < 1.0);
        let t1 = find_crossing_theta(&MarketParams::baseline().with_tau(0.15), &spec()).unwrap();
        assert!(t1 < t0, "{t1} vs {t0}");
    }

    #[test]
    fn crossing_guard_reports_violation() {
        let flat = crossing_of(|_| Ok(0.3));
        assert!(matches!(flat, Err(Error::ModelViolation(_))));
        let t = crossing_of(|th| Ok(th - 0.25)).unwrap();
        assert!((t - 0.25).abs() < 1e-6);
    }

    #[test]
    fn asymmetric_pricing_only_is_mutual_best_response() {
        let mut params = MarketParams::baseline().with_theta(0.5);
        params.quality = vec![3.0, 2.0];
        let p = solve_pricing_only_pair(&params).unwrap();
        assert!(p[0] > p[1]);
        for i in 0..2 {
            assert!(pricing_only_foc(&params, p, i).abs() < 1e-9);
        }
    }
}
