//! One-period payoffs of the duopoly: seller profit with ads, the
//! pricing-only benchmark, the reserve and rank-effect variants, platform
//! revenue, surplus and the weighted platform objective.
//!
//! Every payoff flows through [`Economy::breakdown`], which is what the
//! Q-learning payoff tables are built from.

use crate::auction::{Auction, AuctionOutcome, AuctionSpec};
use crate::market::{log_one_plus_sum_exp, solo_share, MarketParams};
use crate::{Error, Result};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// How consumers react to the slot order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DemandModel {
    /// A fraction θ only considers the top slot; the rest consider both.
    Search,
    /// Everyone considers both products; the lower slot loses `zeta`
    /// utility units. With `random_display` the top slot is a coin flip
    /// and nobody pays for it.
    RankEffect { zeta: f64, random_display: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitBreakdown {
    pub seller_profit: [f64; 2],
    pub ad_cost: [f64; 2],
    /// Expected units sold.
    pub demand: [f64; 2],
    pub platform_ad_revenue: f64,
    pub platform_commission: f64,
    pub consumer_surplus: f64,
    pub total_surplus: f64,
}

impl ProfitBreakdown {
    pub fn platform_profit(&self) -> f64 {
        self.platform_ad_revenue + self.platform_commission
    }

    pub fn total_seller_profit(&self) -> f64 {
        self.seller_profit[0] + self.seller_profit[1]
    }
}

/// Market, auction and demand model bundled for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Economy {
    params: MarketParams,
    auction: Auction,
    model: DemandModel,
}

impl Economy {
    pub fn new(params: MarketParams, spec: AuctionSpec) -> Result<Self> {
        Self::with_model(params, spec, DemandModel::Search)
    }

    pub fn with_model(params: MarketParams, spec: AuctionSpec, model: DemandModel) -> Result<Self> {
        params.validate()?;
        if params.n() != 2 {
            return Err(Error::DimensionMismatch {
                what: "sellers",
                expected: 2,
                got: params.n(),
            });
        }
        if let DemandModel::RankEffect { zeta, .. } = model {
            if !(zeta >= 0.0) {
                return Err(Error::domain("zeta must be nonnegative"));
            }
        }
        Ok(Self {
            params,
            auction: Auction::new(spec)?,
            model,
        })
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn auction(&self) -> &Auction {
        &self.auction
    }

    pub fn model(&self) -> DemandModel {
        self.model
    }

    /// Whether bids affect anything. False for θ = 0 and for random display.
    pub fn has_ads(&self) -> bool {
        match self.model {
            DemandModel::Search => self.params.theta > 0.0,
            DemandModel::RankEffect { random_display, .. } => !random_display,
        }
    }

    pub fn outcome(&self, b: [f64; 2]) -> Result<AuctionOutcome> {
        self.auction.outcome(b[0], b[1])
    }

    /// Full breakdown at prices `p` and bids `b`.
    pub fn breakdown(&self, p: &[f64], b: &[f64]) -> Result<ProfitBreakdown> {
        let p = pair("prices", p)?;
        let b = pair("bids", b)?;
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::domain("prices must be finite and nonnegative"));
        }
        let o = self.outcome(b)?;
        Ok(self.breakdown_with(p, &o))
    }

    /// Breakdown given a precomputed auction outcome; inputs are trusted.
    pub fn breakdown_with(&self, p: [f64; 2], o: &AuctionOutcome) -> ProfitBreakdown {
        let k = self.kernel(p, o);
        let tau = self.params.tau;
        let c = &self.params.cost;
        let seller_profit = [0, 1].map(|i| k.demand[i] * k.margin[i] - k.ad_cost[i]);
        let platform_commission = tau * (p[0] * k.demand[0] + p[1] * k.demand[1]);
        let gross = (p[0] - c[0]) * k.demand[0] + (p[1] - c[1]) * k.demand[1];
        ProfitBreakdown {
            seller_profit,
            ad_cost: k.ad_cost,
            demand: k.demand,
            platform_ad_revenue: k.ad_cost[0] + k.ad_cost[1],
            platform_commission,
            consumer_surplus: k.surplus,
            total_surplus: gross + k.surplus,
        }
    }

    /// Profit of seller `i` only; the inner loop of the equilibrium solvers.
    pub fn profit_of(&self, i: usize, p: [f64; 2], o: &AuctionOutcome) -> f64 {
        let k = self.kernel(p, o);
        k.demand[i] * k.margin[i] - k.ad_cost[i]
    }

    fn kernel(&self, p: [f64; 2], o: &AuctionOutcome) -> Kernel {
        let pr = &self.params;
        let x = [pr.utility_index(0, p[0]), pr.utility_index(1, p[1])];
        let margin = [0, 1].map(|i| (1.0 - pr.tau) * p[i] - pr.cost[i]);
        let top = [o.top_probability(0), o.top_probability(1)];
        let pay = [o.expected_payment(0), o.expected_payment(1)];
        let mu = pr.mu;
        match self.model {
            DemandModel::Search => {
                let th = pr.theta;
                let solo = [solo_share(x[0]), solo_share(x[1])];
                let pair = pair_shares(x);
                let demand = [0, 1].map(|i| th * top[i] * solo[i] + (1.0 - th) * pair[i]);
                let ad_cost = [0, 1].map(|i| th * solo[i] * pr.gamma[i] * pay[i]);
                let surplus = th
                    * (top[0] * mu * log_one_plus_sum_exp(&[x[0]])
                        + top[1] * mu * log_one_plus_sum_exp(&[x[1]]))
                    + (1.0 - th) * mu * log_one_plus_sum_exp(&x);
                Kernel {
                    demand,
                    margin,
                    ad_cost,
                    surplus,
                }
            }
            DemandModel::RankEffect {
                zeta,
                random_display,
            } => {
                let pen = zeta / mu;
                // ordering with seller 0 on top, then seller 1 on top
                let first = pair_shares([x[0], x[1] - pen]);
                let second = pair_shares([x[0] - pen, x[1]]);
                let cs_first = mu * log_one_plus_sum_exp(&[x[0], x[1] - pen]);
                let cs_second = mu * log_one_plus_sum_exp(&[x[0] - pen, x[1]]);
                let w = if random_display { [0.5, 0.5] } else { top };
                let demand = [
                    w[0] * first[0] + w[1] * second[0],
                    w[0] * first[1] + w[1] * second[1],
                ];
                let ad_cost = if random_display {
                    [0.0, 0.0]
                } else {
                    [
                        pay[0] * first[0] * pr.gamma[0],
                        pay[1] * second[1] * pr.gamma[1],
                    ]
                };
                let surplus = w[0] * cs_first + w[1] * cs_second;
                Kernel {
                    demand,
                    margin,
                    ad_cost,
                    surplus,
                }
            }
        }
    }

    /// One realized period: draws the realized bids, settles the slot and
    /// returns each seller's profit given expected demand at that layout.
    pub fn sample_realized_profit<R: Rng + ?Sized>(
        &self,
        p: [f64; 2],
        b: [f64; 2],
        rng: &mut R,
    ) -> [f64; 2] {
        let sigma = self.auction.spec().sigma;
        let reserve = self.auction.spec().effective_reserve();
        let z: [f64; 2] = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
        let realized = [0, 1].map(|k| {
            if b[k] > 0.0 {
                b[k] * (sigma * z[k]).exp()
            } else {
                0.0
            }
        });
        let winner = if realized[0] > realized[1] {
            0
        } else if realized[1] > realized[0] {
            1
        } else if rng.random::<bool>() {
            0
        } else {
            1
        };
        let cleared = match reserve {
            Some(r) => b[winner] > 0.0 && realized[winner] >= r,
            None => true,
        };
        let (top, paid) = if cleared {
            (winner, realized[winner])
        } else {
            (if rng.random::<bool>() { 0 } else { 1 }, 0.0)
        };
        let mut o = AuctionOutcome {
            p_win: [0.0; 2],
            p_none: 0.0,
            e_cpc: [0.0; 2],
        };
        o.p_win[top] = 1.0;
        o.e_cpc[top] = paid;
        let k = self.kernel(p, &o);
        [0, 1].map(|i| k.demand[i] * k.margin[i] - k.ad_cost[i])
    }
}

struct Kernel {
    demand: [f64; 2],
    margin: [f64; 2],
    ad_cost: [f64; 2],
    surplus: f64,
}

fn pair(what: &'static str, v: &[f64]) -> Result<[f64; 2]> {
    match v {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::DimensionMismatch {
            what,
            expected: 2,
            got: v.len(),
        }),
    }
}

/// Logit shares of two inside goods plus the outside option.
fn pair_shares(x: [f64; 2]) -> [f64; 2] {
    let lse = log_one_plus_sum_exp(&x);
    [(x[0] - lse).exp(), (x[1] - lse).exp()]
}

/// Expected profit breakdown at prices `p` and bids `b`.
pub fn seller_profit(
    p: &[f64],
    b: &[f64],
    params: &MarketParams,
    spec: &AuctionSpec,
) -> Result<ProfitBreakdown> {
    Economy::new(params.clone(), *spec)?.breakdown(p, b)
}

/// Profit without ads: each seller holds the top slot half the time.
pub fn pricing_only_profit(p: &[f64], params: &MarketParams) -> Result<[f64; 2]> {
    params.validate()?;
    let p = pair("prices", p)?;
    if params.n() != 2 {
        return Err(Error::DimensionMismatch {
            what: "sellers",
            expected: 2,
            got: params.n(),
        });
    }
    let x = [params.utility_index(0, p[0]), params.utility_index(1, p[1])];
    let both = pair_shares(x);
    let th = params.theta;
    Ok([0, 1].map(|i| {
        (th * 0.5 * solo_share(x[i]) + (1.0 - th) * both[i])
            * ((1.0 - params.tau) * p[i] - params.cost[i])
    }))
}

/// Rank-effect profits under the auction and under random display.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankEffectProfit {
    pub auction: [f64; 2],
    pub random_display: [f64; 2],
}

pub fn rank_effect_profit(
    p: &[f64],
    b: &[f64],
    params: &MarketParams,
    zeta: f64,
) -> Result<RankEffectProfit> {
    let spec = AuctionSpec::from_params(params)?;
    let run = |random_display| {
        Economy::with_model(
            params.clone(),
            spec,
            DemandModel::RankEffect {
                zeta,
                random_display,
            },
        )?
        .breakdown(p, b)
        .map(|bd| bd.seller_profit)
    };
    Ok(RankEffectProfit {
        auction: run(false)?,
        random_display: run(true)?,
    })
}

/// `ω·π_platform + (1−ω)·(Σ π_j + CS)`.
pub fn weighted_platform_objective(
    p: &[f64],
    b: &[f64],
    params: &MarketParams,
    spec: &AuctionSpec,
    omega: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::domain("omega must lie in [0, 1]"));
    }
    let bd = seller_profit(p, b, params, spec)?;
    Ok(omega * bd.platform_profit()
        + (1.0 - omega) * (bd.total_seller_profit() + bd.consumer_surplus))
}
