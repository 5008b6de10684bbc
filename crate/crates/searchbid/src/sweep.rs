//! The experiments behind each scenario: benchmark solves and Q-learning
//! sessions over a parameter grid, and the estimation runs.
//!
//! Grid points run in parallel and so do the sessions inside a point.
//! Session `k` of every point draws from stream `k` of the master seed, so
//! results do not depend on scheduling. A point that fails is written as a
//! row with its error in `status`.

use rayon::prelude::*;
use searchbid_core::auction::AuctionSpec;
use searchbid_core::economy::{DemandModel, Economy, ProfitBreakdown};
use searchbid_core::estimation::{
    estimate_rank_effect, generate_synthetic_panel, gmm_estimate, GmmConfig, RankEffectConfig,
    SyntheticConfig, SyntheticDemand,
};
use searchbid_core::market::MarketParams;
use searchbid_core::qlearn::{
    aggregate, ratio, run_session, session_rng, ActionGrid, AgentConfig, Aggregate, GridBounds,
    PayoffTable, SessionConfig, StateMode, WindowMetrics,
};
use searchbid_core::solvers::{
    solve_benchmarks, solve_monopoly, solve_monopoly_in, solve_nash, solve_pricing_only_pair,
    SolverConfig,
};

use crate::config::{RunConfig, Scenario};
use crate::ingest::{build_panel, load_and_validate, sponsored_position_stats};
use crate::output::{num, opt, Table};
use crate::{Error, Result};

type CoreResult<T> = searchbid_core::Result<T>;

/// One benchmark outcome: actions and the payoffs they produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchPoint {
    pub price: [f64; 2],
    pub bid: [f64; 2],
    pub payoff: ProfitBreakdown,
}

/// Pricing-only, Nash and collusive benchmarks at one grid point. The
/// collusive one is absent for asymmetric sellers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Bench {
    pub on: Option<BenchPoint>,
    pub n: Option<BenchPoint>,
    pub m: Option<BenchPoint>,
}

impl Bench {
    fn prices(&self) -> impl Iterator<Item = f64> + '_ {
        [self.on, self.n, self.m]
            .into_iter()
            .flatten()
            .flat_map(|b| b.price)
    }
}

fn bench_point(eco: &Economy, price: [f64; 2], bid: [f64; 2]) -> CoreResult<BenchPoint> {
    Ok(BenchPoint {
        price,
        bid,
        payoff: eco.breakdown(&price, &bid)?,
    })
}

/// Symmetric market at the configured parameters.
pub fn market_params(cfg: &RunConfig) -> MarketParams {
    MarketParams {
        quality: vec![cfg.quality; 2],
        cost: vec![cfg.cost; 2],
        mu: cfg.mu,
        theta: cfg.theta,
        tau: cfg.tau,
        sigma: vec![cfg.sigma; 2],
        gamma: vec![cfg.gamma; 2],
        delta: cfg.delta,
    }
}

fn auction_spec(cfg: &RunConfig, reserve: f64) -> AuctionSpec {
    let spec = AuctionSpec::new(cfg.sigma);
    if reserve > 0.0 {
        spec.with_reserve(reserve)
    } else {
        spec
    }
}

pub fn session_config(cfg: &RunConfig, mode: StateMode) -> SessionConfig {
    let agent = AgentConfig {
        alpha: cfg.alpha,
        beta: cfg.beta,
        delta: cfg.delta,
        state_mode: mode,
    };
    SessionConfig {
        agents: [agent; 2],
        convergence_window: cfg.convergence_window,
        max_periods: cfg.max_periods,
        reward: cfg.reward,
    }
}

fn symmetric_bench(params: &MarketParams, spec: &AuctionSpec) -> CoreResult<Bench> {
    let eq = solve_benchmarks(params, spec)?;
    Ok(Bench {
        on: Some(BenchPoint {
            price: [eq.p_on; 2],
            bid: [0.0; 2],
            payoff: eq.pricing_only,
        }),
        n: Some(BenchPoint {
            price: [eq.p_n; 2],
            bid: [eq.b_n; 2],
            payoff: eq.nash,
        }),
        m: Some(BenchPoint {
            price: [eq.p_m; 2],
            bid: [eq.b_m; 2],
            payoff: eq.monopoly,
        }),
    })
}

fn asymmetric_bench(eco: &Economy) -> CoreResult<Bench> {
    let p_on = solve_pricing_only_pair(eco.params())?;
    let nash = solve_nash(eco, &SolverConfig::default())?;
    Ok(Bench {
        on: Some(bench_point(eco, p_on, [0.0; 2])?),
        n: Some(bench_point(eco, nash.price, nash.bid)?),
        m: None,
    })
}

fn rank_effect_bench(params: &MarketParams, spec: &AuctionSpec, zeta: f64) -> CoreResult<Bench> {
    let random = Economy::with_model(
        params.clone(),
        *spec,
        DemandModel::RankEffect {
            zeta,
            random_display: true,
        },
    )?;
    let eco = Economy::with_model(
        params.clone(),
        *spec,
        DemandModel::RankEffect {
            zeta,
            random_display: false,
        },
    )?;
    let solver = SolverConfig::default();
    let on = solve_nash(&random, &solver)?;
    let nash = solve_nash(&eco, &solver)?;
    let (p_m, b_m) = solve_monopoly_in(&eco)?;
    Ok(Bench {
        on: Some(bench_point(&random, on.price, [0.0; 2])?),
        n: Some(bench_point(&eco, nash.price, nash.bid)?),
        m: Some(bench_point(&eco, [p_m; 2], [b_m; 2])?),
    })
}

fn bounds_of<'a>(benches: impl IntoIterator<Item = &'a Bench>) -> GridBounds {
    let mut b = GridBounds {
        p_min: f64::INFINITY,
        p_max: f64::NEG_INFINITY,
        b_max: 0.0,
    };
    for bench in benches {
        for p in bench.prices() {
            b.p_min = b.p_min.min(p);
            b.p_max = b.p_max.max(p);
        }
        if let Some(n) = bench.n {
            b.b_max = b.b_max.max(n.bid[0]).max(n.bid[1]);
        }
    }
    b
}

fn grid_from(cfg: &RunConfig, bounds: GridBounds) -> CoreResult<ActionGrid> {
    ActionGrid::with_sizes(bounds, cfg.xi, cfg.price_points, cfg.bid_points)
}

/// Grid covering the symmetric benchmarks over `grid_thetas`.
pub fn symmetric_grid(cfg: &RunConfig, params: &MarketParams) -> CoreResult<ActionGrid> {
    let spec = auction_spec(cfg, 0.0);
    let benches = cfg
        .grid_thetas
        .values()
        .par_iter()
        .map(|&t| symmetric_bench(&params.clone().with_theta(t), &spec))
        .collect::<CoreResult<Vec<_>>>()?;
    grid_from(cfg, bounds_of(&benches))
}

/// Asymmetric sellers have no collusive benchmark, so the top of the price
/// range comes from the joint optimum of a symmetric market at the higher
/// quality.
fn asymmetric_grid(cfg: &RunConfig, params: &MarketParams) -> CoreResult<ActionGrid> {
    let spec = auction_spec(cfg, 0.0);
    let benches = cfg
        .grid_thetas
        .values()
        .par_iter()
        .map(|&t| asymmetric_bench(&Economy::new(params.clone().with_theta(t), spec)?))
        .collect::<CoreResult<Vec<_>>>()?;
    let mut b = bounds_of(&benches);
    let top = params
        .quality
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut hi = params.clone();
    hi.quality = vec![top; 2];
    for t in cfg.grid_thetas.values() {
        b.p_max = b.p_max.max(solve_monopoly(&hi.clone().with_theta(t))?.0);
    }
    grid_from(cfg, b)
}

/// A grid point ready to learn on.
struct Point {
    value: f64,
    variant: &'static str,
    bench: CoreResult<Bench>,
    economy: CoreResult<Economy>,
    grid: std::result::Result<std::sync::Arc<ActionGrid>, String>,
    mode: StateMode,
}

/// Learning outcome at one point.
pub struct PointResult {
    pub value: f64,
    pub variant: &'static str,
    pub bench: Option<Bench>,
    pub learned: Option<Aggregate>,
    pub status: Vec<String>,
}

fn mode_name(m: StateMode) -> &'static str {
    match m {
        StateMode::OwnBid => "own-bid",
        StateMode::FullStateful => "full-stateful",
    }
}

fn build_points(cfg: &RunConfig) -> Vec<Point> {
    let values = cfg.sweep_grid().map(|g| g.values()).unwrap_or_default();
    let base = market_params(cfg);
    let shared = |r: CoreResult<ActionGrid>| {
        r.map(std::sync::Arc::new)
            .map_err(|e| format!("action grid: {e}"))
    };
    match cfg.scenario {
        Scenario::ThetaSweep | Scenario::StatefulCompare => {
            let grid = shared(symmetric_grid(cfg, &base));
            let modes: &[StateMode] = if cfg.scenario == Scenario::StatefulCompare {
                &[StateMode::OwnBid, StateMode::FullStateful]
            } else {
                std::slice::from_ref(&cfg.state_mode)
            };
            let spec = auction_spec(cfg, cfg.reserve);
            let benches: Vec<_> = values
                .par_iter()
                .map(|&t| symmetric_bench(&base.clone().with_theta(t), &spec))
                .collect();
            let mut out = Vec::new();
            for &mode in modes {
                for (&t, bench) in values.iter().zip(&benches) {
                    out.push(Point {
                        value: t,
                        variant: mode_name(mode),
                        bench: bench.clone(),
                        economy: Economy::new(base.clone().with_theta(t), spec),
                        grid: grid.clone(),
                        mode,
                    });
                }
            }
            out
        }
        Scenario::CommissionSweep => values
            .par_iter()
            .map(|&tau| {
                let params = base.clone().with_tau(tau);
                let spec = auction_spec(cfg, cfg.reserve);
                Point {
                    value: tau,
                    variant: mode_name(cfg.state_mode),
                    bench: symmetric_bench(&params, &spec),
                    economy: Economy::new(params.clone(), spec),
                    grid: shared(symmetric_grid(cfg, &params)),
                    mode: cfg.state_mode,
                }
            })
            .collect(),
        Scenario::ReserveSweep => {
            let grid = shared(symmetric_grid(cfg, &base));
            values
                .par_iter()
                .map(|&r| {
                    let spec = auction_spec(cfg, r);
                    Point {
                        value: r,
                        variant: mode_name(cfg.state_mode),
                        bench: symmetric_bench(&base, &spec),
                        economy: Economy::new(base.clone(), spec),
                        grid: grid.clone(),
                        mode: cfg.state_mode,
                    }
                })
                .collect()
        }
        Scenario::Asymmetric => {
            let mut params = base.clone();
            params.quality[0] = cfg.asymmetric_quality;
            let grid = shared(asymmetric_grid(cfg, &params));
            let spec = auction_spec(cfg, cfg.reserve);
            values
                .par_iter()
                .map(|&t| {
                    let eco = Economy::new(params.clone().with_theta(t), spec);
                    Point {
                        value: t,
                        variant: mode_name(cfg.state_mode),
                        bench: eco
                            .as_ref()
                            .map_err(Clone::clone)
                            .and_then(asymmetric_bench),
                        economy: eco,
                        grid: grid.clone(),
                        mode: cfg.state_mode,
                    }
                })
                .collect()
        }
        Scenario::RankEffect => {
            let spec = auction_spec(cfg, cfg.reserve);
            let benches: Vec<_> = values
                .par_iter()
                .map(|&z| rank_effect_bench(&base, &spec, z))
                .collect();
            let ok: Vec<&Bench> = benches.iter().filter_map(|b| b.as_ref().ok()).collect();
            let grid = if ok.is_empty() {
                Err("action grid: no benchmark solved".to_string())
            } else {
                shared(grid_from(cfg, bounds_of(ok)))
            };
            values
                .iter()
                .zip(benches)
                .map(|(&z, bench)| Point {
                    value: z,
                    variant: mode_name(cfg.state_mode),
                    bench,
                    economy: Economy::with_model(
                        base.clone(),
                        spec,
                        DemandModel::RankEffect {
                            zeta: z,
                            random_display: false,
                        },
                    ),
                    grid: grid.clone(),
                    mode: cfg.state_mode,
                })
                .collect()
        }
        Scenario::Estimate | Scenario::SyntheticRecovery => Vec::new(),
    }
}

fn learn(cfg: &RunConfig, p: &Point) -> std::result::Result<Aggregate, String> {
    let grid = p.grid.as_ref().map_err(Clone::clone)?;
    let eco = p.economy.as_ref().map_err(|e| format!("economy: {e}"))?;
    let table = PayoffTable::build(eco, grid).map_err(|e| format!("payoff table: {e}"))?;
    let scfg = session_config(cfg, p.mode);
    let results = (0..cfg.sessions as u64)
        .into_par_iter()
        .map(|k| run_session(grid, &table, Some(eco), scfg, session_rng(cfg.seed, k)))
        .collect::<CoreResult<Vec<_>>>()
        .map_err(|e| format!("qlearning: {e}"))?;
    aggregate(&results).map_err(|e| format!("qlearning: {e}"))
}

/// Benchmarks and learning at every point of a learning scenario.
pub fn run_points(cfg: &RunConfig) -> Vec<PointResult> {
    build_points(cfg)
        .par_iter()
        .map(|p| {
            let mut status = Vec::new();
            let bench = match &p.bench {
                Ok(b) => Some(*b),
                Err(e) => {
                    status.push(format!("benchmark: {e}"));
                    None
                }
            };
            let learned = match learn(cfg, p) {
                Ok(a) => Some(a),
                Err(e) => {
                    status.push(e);
                    None
                }
            };
            PointResult {
                value: p.value,
                variant: p.variant,
                bench,
                learned,
                status,
            }
        })
        .collect()
}

const BENCH_KEYS: [&str; 3] = ["on", "n", "m"];

fn sweep_header() -> Vec<String> {
    let mut h: Vec<String> = ["sweep_parameter", "sweep_value", "variant", "status"]
        .map(String::from)
        .to_vec();
    for k in BENCH_KEYS {
        for f in [
            "p",
            "p_{}_0",
            "p_{}_1",
            "b",
            "b_{}_0",
            "b_{}_1",
            "profit",
            "profit_{}_0",
            "profit_{}_1",
            "cs",
            "ad_revenue",
            "commission",
            "platform",
            "total_surplus",
        ] {
            h.push(if f.contains("{}") {
                f.replace("{}", k)
            } else {
                format!("{f}_{k}")
            });
        }
    }
    for f in WindowMetrics::FIELDS {
        h.push(format!("q_{f}"));
        h.push(format!("q_{f}_se"));
    }
    h.extend(
        [
            "q_price_ratio",
            "q_profit_ratio",
            "convergence_rate",
            "mean_periods",
            "sessions",
            "config_hash",
            "master_seed",
        ]
        .map(String::from),
    );
    h
}

fn bench_cells(b: Option<BenchPoint>) -> Vec<String> {
    let Some(b) = b else {
        return vec![String::new(); 14];
    };
    let o = &b.payoff;
    vec![
        num(0.5 * (b.price[0] + b.price[1])),
        num(b.price[0]),
        num(b.price[1]),
        num(0.5 * (b.bid[0] + b.bid[1])),
        num(b.bid[0]),
        num(b.bid[1]),
        num(0.5 * o.total_seller_profit()),
        num(o.seller_profit[0]),
        num(o.seller_profit[1]),
        num(o.consumer_surplus),
        num(o.platform_ad_revenue),
        num(o.platform_commission),
        num(o.platform_profit()),
        num(o.total_surplus),
    ]
}

/// One CSV row per point.
pub fn sweep_table(cfg: &RunConfig, results: &[PointResult]) -> Table {
    let mut t = Table::new(sweep_header());
    let param = cfg.scenario.sweep_parameter().unwrap_or("");
    let hash = cfg.hash();
    for r in results {
        let mut row = vec![
            param.to_string(),
            num(r.value),
            r.variant.to_string(),
            if r.status.is_empty() {
                "ok".into()
            } else {
                r.status.join("; ")
            },
        ];
        for k in 0..3 {
            let b = r.bench.and_then(|b| [b.on, b.n, b.m][k]);
            row.extend(bench_cells(b));
        }
        match &r.learned {
            Some(a) => {
                for k in 0..WindowMetrics::FIELDS.len() {
                    row.push(num(a.mean[k]));
                    row.push(num(a.std_error[k]));
                }
                let (n, m) = (r.bench.and_then(|b| b.n), r.bench.and_then(|b| b.m));
                let price_ratio = n
                    .zip(m)
                    .and_then(|(n, m)| ratio(a.mean_of("price"), n.price[0], m.price[0]));
                let profit_ratio = n.zip(m).and_then(|(n, m)| {
                    ratio(
                        a.mean_of("profit"),
                        0.5 * n.payoff.total_seller_profit(),
                        0.5 * m.payoff.total_seller_profit(),
                    )
                });
                row.push(opt(price_ratio));
                row.push(opt(profit_ratio));
                row.push(num(a.convergence_rate));
                row.push(num(a.mean_periods));
            }
            None => row.extend(std::iter::repeat_n(
                String::new(),
                2 * WindowMetrics::FIELDS.len() + 4,
            )),
        }
        row.push(cfg.sessions.to_string());
        row.push(hash.clone());
        row.push(cfg.seed.to_string());
        t.push(row);
    }
    t
}

fn estimate_tables(cfg: &RunConfig) -> Result<Vec<(String, Table)>> {
    let dir = cfg
        .input
        .as_deref()
        .ok_or_else(|| Error::Format("estimate needs an input directory".into()))?;
    let tables = load_and_validate(dir)?;
    let n_positions = (cfg.n_positions > 0).then_some(cfg.n_positions);
    let built = build_panel(&tables, n_positions)?;
    let panel = &built.panel;
    let hash = cfg.hash();
    let seed = cfg.seed.to_string();

    let mut jobs: Vec<(String, String, searchbid_core::estimation::Panel)> = panel
        .markets
        .iter()
        .enumerate()
        .map(|(k, m)| (m.keyword.clone(), m.category.clone(), panel.market(k)))
        .collect();
    if panel.markets.len() > 1 {
        jobs.push(("(pooled)".into(), String::new(), panel.clone()));
    }
    let rows: Vec<Vec<String>> = jobs
        .par_iter()
        .map(|(kw, cat, p)| {
            let mut status = Vec::new();
            let s = gmm_estimate(p, &GmmConfig::default())
                .map_err(|e| status.push(format!("search cost: {e}")))
                .ok();
            let z = estimate_rank_effect(p, &RankEffectConfig::default())
                .map_err(|e| status.push(format!("rank effect: {e}")))
                .ok();
            let observed: usize = p
                .markets
                .iter()
                .map(|m| m.observed.iter().filter(|&&o| o).count())
                .sum();
            let days: usize = p.markets.iter().map(|m| m.days).sum();
            let products: usize = p.markets.iter().map(|m| m.n_products()).sum();
            vec![
                kw.clone(),
                cat.clone(),
                products.to_string(),
                days.to_string(),
                p.n_ranking_lists().to_string(),
                observed.to_string(),
                p.n_positions.to_string(),
                opt(s.map(|s| s.lambda)),
                opt(s.map(|s| s.rho)),
                opt(s.map(|s| s.objective)),
                opt(s.map(|s| s.quarter_page_stop)),
                s.map_or(String::new(), |s| s.moment_obs.to_string()),
                opt(z.map(|z| z.zeta)),
                opt(z.map(|z| z.rho)),
                opt(z.map(|z| z.objective)),
                if status.is_empty() {
                    "ok".into()
                } else {
                    status.join("; ")
                },
                hash.clone(),
                seed.clone(),
            ]
        })
        .collect();
    let mut est = Table::new([
        "keyword",
        "category",
        "products",
        "days",
        "ranking_lists",
        "observed",
        "n_positions",
        "lambda",
        "rho",
        "objective",
        "quarter_page_stop",
        "moment_obs",
        "zeta",
        "zeta_rho",
        "zeta_objective",
        "status",
        "config_hash",
        "master_seed",
    ]);
    rows.into_iter().for_each(|r| est.push(r));

    let mut rejects = Table::new(["file", "line", "reason", "detail"]);
    for r in tables.rejects() {
        rejects.push(vec![
            r.file.clone(),
            r.line.to_string(),
            r.reason.code().into(),
            r.detail.clone(),
        ]);
    }
    let mut flags = Table::new(["keyword", "day", "product", "code", "detail"]);
    for f in &built.flags {
        flags.push(vec![
            f.keyword.clone(),
            f.day.map_or(String::new(), |d| d.to_string()),
            f.product.clone().unwrap_or_default(),
            f.code.code().into(),
            f.detail.clone(),
        ]);
    }
    let stats = sponsored_position_stats(
        &tables.snapshots.rows,
        Some(panel.n_positions).filter(|&n| n > 0),
    );
    let (_, cols) = stats.grid_shape();
    let mut pos = Table::new([
        "position",
        "row",
        "column",
        "listings",
        "sponsored",
        "ratio",
    ]);
    for (k, r) in stats.ratio().into_iter().enumerate() {
        pos.push(vec![
            (k + 1).to_string(),
            (k / cols).to_string(),
            (k % cols).to_string(),
            stats.listings[k].to_string(),
            stats.sponsored[k].to_string(),
            opt(r),
        ]);
    }
    Ok(vec![
        ("estimate".into(), est),
        ("estimate-rejects".into(), rejects),
        ("estimate-flags".into(), flags),
        ("estimate-positions".into(), pos),
    ])
}

/// Synthetic configuration used by the recovery scenario.
pub fn synthetic_config(cfg: &RunConfig, lambda: f64) -> SyntheticConfig {
    SyntheticConfig {
        markets: cfg.synthetic_markets,
        products: cfg.synthetic_products,
        days: cfg.synthetic_days,
        demand: SyntheticDemand::Search { lambda },
        rho: cfg.synthetic_rho,
        ..SyntheticConfig::default()
    }
}

fn recovery_table(cfg: &RunConfig) -> Table {
    let lambdas = cfg.sweep_grid().map(|g| g.values()).unwrap_or_default();
    let jobs: Vec<(f64, usize)> = lambdas
        .iter()
        .flat_map(|&l| (0..cfg.replications).map(move |r| (l, r)))
        .collect();
    let hash = cfg.hash();
    let mut t = Table::new([
        "lambda_true",
        "rho_true",
        "replication",
        "seed",
        "lambda",
        "rho",
        "objective",
        "lambda_rel_error",
        "rho_error",
        "status",
        "config_hash",
        "master_seed",
    ]);
    let rows: Vec<Vec<String>> = jobs
        .par_iter()
        .map(|&(lambda, rep)| {
            let seed = cfg.seed.wrapping_add(rep as u64);
            let est = generate_synthetic_panel(&synthetic_config(cfg, lambda), seed)
                .and_then(|p| gmm_estimate(&p, &GmmConfig::default()));
            let (e, status) = match est {
                Ok(e) => (Some(e), "ok".to_string()),
                Err(err) => (None, err.to_string()),
            };
            vec![
                num(lambda),
                num(cfg.synthetic_rho),
                rep.to_string(),
                seed.to_string(),
                opt(e.map(|e| e.lambda)),
                opt(e.map(|e| e.rho)),
                opt(e.map(|e| e.objective)),
                opt(e.map(|e| (e.lambda - lambda) / lambda)),
                opt(e.map(|e| e.rho - cfg.synthetic_rho)),
                status,
                hash.clone(),
                cfg.seed.to_string(),
            ]
        })
        .collect();
    rows.into_iter().for_each(|r| t.push(r));
    t
}

/// Runs the configured scenario and returns the tables to write, keyed by
/// file stem.
pub fn run(cfg: &RunConfig) -> Result<Vec<(String, Table)>> {
    cfg.validate()?;
    let name = cfg.scenario.name().to_string();
    match cfg.scenario {
        Scenario::Estimate => estimate_tables(cfg),
        Scenario::SyntheticRecovery => Ok(vec![(name, recovery_table(cfg))]),
        _ => Ok(vec![(name, sweep_table(cfg, &run_points(cfg)))]),
    }
}
