//! First-price auction for the sponsored slot with log-normally perturbed
//! realized bids.

use crate::market::MarketParams;
use crate::numeric::{norm_cdf, truncated_normal_integral, GaussHermite, GaussLegendre};
use crate::{Error, Result};

use core::f64::consts::SQRT_2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const DEFAULT_QUAD_ORDER: usize = 64;
pub const MIN_QUAD_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuctionSpec {
    pub sigma: f64,
    pub quad_order: usize,
    /// Minimum realized bid that wins the slot. `Some(0.0)` behaves like
    /// `None`.
    pub reserve: Option<f64>,
}

impl AuctionSpec {
    pub fn new(sigma: f64) -> Self {
        Self {
            sigma,
            quad_order: DEFAULT_QUAD_ORDER,
            reserve: None,
        }
    }

    pub fn with_reserve(mut self, reserve: f64) -> Self {
        self.reserve = Some(reserve);
        self
    }

    /// Spec sharing the market's bid noise. Sellers must have a common σ.
    pub fn from_params(params: &MarketParams) -> Result<Self> {
        let sigma = *params
            .sigma
            .first()
            .ok_or_else(|| Error::config("market has no sellers"))?;
        if params.sigma.iter().any(|&s| s != sigma) {
            return Err(Error::config("the auction needs a common bid-noise sigma"));
        }
        Ok(Self::new(sigma))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain("sigma must be positive"));
        }
        if self.quad_order < MIN_QUAD_ORDER {
            return Err(Error::config("quadrature order must be at least 16"));
        }
        if let Some(r) = self.reserve {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::domain("reserve must be nonnegative"));
            }
        }
        Ok(())
    }

    /// The binding reserve, if any.
    pub fn effective_reserve(&self) -> Option<f64> {
        self.reserve.filter(|&r| r > 0.0)
    }
}

/// Expected auction outcome for seller pair `(i, j)`. Index 0 is `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuctionOutcome {
    pub p_win: [f64; 2],
    pub p_none: f64,
    /// Expected realized bid conditional on winning; 0 when the win event
    /// has probability zero.
    pub e_cpc: [f64; 2],
}

impl AuctionOutcome {
    /// Probability of being displayed on top: winning outright, or the
    /// platform's coin flip when nobody clears the reserve.
    pub fn top_probability(&self, k: usize) -> f64 {
        self.p_win[k] + 0.5 * self.p_none
    }

    /// Unconditional expected payment per click, `Pr(win)·E[CPC | win]`.
    pub fn expected_payment(&self, k: usize) -> f64 {
        self.p_win[k] * self.e_cpc[k]
    }

    pub fn swapped(&self) -> Self {
        Self {
            p_win: [self.p_win[1], self.p_win[0]],
            p_none: self.p_none,
            e_cpc: [self.e_cpc[1], self.e_cpc[0]],
        }
    }
}

fn check_bid(b: f64) -> Result<()> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::domain("bids must be finite and nonnegative"));
    }
    Ok(())
}

/// `log(b_i/b_j)`, infinite when exactly one bid is zero. Both zero is
/// handled by callers.
fn log_ratio(b_i: f64, b_j: f64) -> f64 {
    match (b_i > 0.0, b_j > 0.0) {
        (true, true) => (b_i / b_j).ln(),
        (true, false) => f64::INFINITY,
        (false, true) => f64::NEG_INFINITY,
        (false, false) => 0.0,
    }
}

/// `Pr(b̃_i > b̃_j)`.
pub fn win_probability(b_i: f64, b_j: f64, sigma: f64) -> Result<f64> {
    check_bid(b_i)?;
    check_bid(b_j)?;
    if !(sigma > 0.0) {
        return Err(Error::domain("sigma must be positive"));
    }
    Ok(win_prob_unchecked(b_i, b_j, sigma))
}

fn win_prob_unchecked(b_i: f64, b_j: f64, sigma: f64) -> f64 {
    if b_i == b_j {
        return 0.5;
    }
    norm_cdf(log_ratio(b_i, b_j) / (SQRT_2 * sigma))
}

/// `E[b̃_i | b̃_i > b̃_j]` by Gauss-Hermite quadrature.
pub fn expected_cpc_given_win(b_i: f64, b_j: f64, sigma: f64, quad_order: usize) -> Result<f64> {
    let rule = GaussHermite::new(quad_order)?;
    check_bid(b_i)?;
    check_bid(b_j)?;
    if !(sigma > 0.0) {
        return Err(Error::domain("sigma must be positive"));
    }
    Ok(cpc_hermite(&rule, b_i, b_j, sigma))
}

fn cpc_hermite(rule: &GaussHermite, b_i: f64, b_j: f64, sigma: f64) -> f64 {
    if b_i == 0.0 {
        return 0.0;
    }
    if b_j == 0.0 {
        return b_i * (0.5 * sigma * sigma).exp();
    }
    let p = win_prob_unchecked(b_i, b_j, sigma);
    if p == 0.0 {
        return 0.0;
    }
    let shift = log_ratio(b_i, b_j) / sigma;
    let integral = rule.expect_standard_normal(|u| norm_cdf(shift + u) * (sigma * u).exp());
    b_i * integral / p
}

/// Quadrature engine for one spec. Building the rules once makes repeated
/// outcome evaluations cheap.
#[derive(Debug, Clone)]
pub struct Auction {
    spec: AuctionSpec,
    hermite: GaussHermite,
    legendre: GaussLegendre,
}

impl Auction {
    pub fn new(spec: AuctionSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            hermite: GaussHermite::new(spec.quad_order)?,
            legendre: GaussLegendre::new(spec.quad_order)?,
        })
    }

    pub fn spec(&self) -> &AuctionSpec {
        &self.spec
    }

    pub fn outcome(&self, b_i: f64, b_j: f64) -> Result<AuctionOutcome> {
        check_bid(b_i)?;
        check_bid(b_j)?;
        Ok(match self.spec.effective_reserve() {
            None => self.plain(b_i, b_j),
            Some(r) => self.with_reserve(b_i, b_j, r),
        })
    }

    fn plain(&self, b_i: f64, b_j: f64) -> AuctionOutcome {
        let s = self.spec.sigma;
        let w = win_prob_unchecked(b_i, b_j, s);
        AuctionOutcome {
            p_win: [w, 1.0 - w],
            p_none: 0.0,
            e_cpc: [
                cpc_hermite(&self.hermite, b_i, b_j, s),
                cpc_hermite(&self.hermite, b_j, b_i, s),
            ],
        }
    }

    fn with_reserve(&self, b_i: f64, b_j: f64, r: f64) -> AuctionOutcome {
        let s = self.spec.sigma;
        // a zero bid never clears a positive reserve
        let below = |b: f64| {
            if b > 0.0 {
                norm_cdf((r / b).ln() / s)
            } else {
                1.0
            }
        };
        let (wi, ai) = self.reserve_side(b_i, b_j, r);
        let (wj, aj) = self.reserve_side(b_j, b_i, r);
        let cpc = |w: f64, a: f64| if w > 0.0 { a / w } else { 0.0 };
        AuctionOutcome {
            p_win: [wi, wj],
            p_none: below(b_i) * below(b_j),
            e_cpc: [cpc(wi, ai), cpc(wj, aj)],
        }
    }

    /// `(Pr(win above reserve), E[b̃ · 1{win above reserve}])` for the first
    /// bidder.
    fn reserve_side(&self, b: f64, rival: f64, r: f64) -> (f64, f64) {
        if b == 0.0 {
            return (0.0, 0.0);
        }
        let s = self.spec.sigma;
        let u_star = (r / b).ln() / s;
        let shift = log_ratio(b, rival) / s;
        let win = truncated_normal_integral(&self.legendre, u_star, |u| norm_cdf(shift + u));
        // e^{σu} φ(u) = e^{σ²/2} φ(u − σ)
        let pay = b
            * (0.5 * s * s).exp()
            * truncated_normal_integral(&self.legendre, u_star - s, |w| norm_cdf(shift + s + w));
        (win, pay)
    }
}

/// One-shot evaluation; builds the quadrature rules each call.
pub fn auction_outcome(b_i: f64, b_j: f64, spec: &AuctionSpec) -> Result<AuctionOutcome> {
    Auction::new(*spec)?.outcome(b_i, b_j)
}

/// Monte-Carlo estimate together with its standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOutcome {
    pub estimate: AuctionOutcome,
    pub std_error: AuctionOutcome,
    pub draws: u64,
}

/// Empirical auction outcome from `draws` independent realized-bid pairs.
pub fn monte_carlo_auction(
    b_i: f64,
    b_j: f64,
    spec: &AuctionSpec,
    draws: u64,
    seed: u64,
) -> Result<AuctionOutcome> {
    monte_carlo_auction_with_errors(b_i, b_j, spec, draws, seed).map(|m| m.estimate)
}

pub fn monte_carlo_auction_with_errors(
    b_i: f64,
    b_j: f64,
    spec: &AuctionSpec,
    draws: u64,
    seed: u64,
) -> Result<MonteCarloOutcome> {
    check_bid(b_i)?;
    check_bid(b_j)?;
    spec.validate()?;
    if draws == 0 {
        return Err(Error::domain("draws must be positive"));
    }
    let s = spec.sigma;
    let reserve = spec.effective_reserve();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bids = [b_i, b_j];
    let mut wins = [0u64; 2];
    let mut none = 0u64;
    let mut sum = [0.0f64; 2];
    let mut sum_sq = [0.0f64; 2];
    for _ in 0..draws {
        let zi: f64 = StandardNormal.sample(&mut rng);
        let zj: f64 = StandardNormal.sample(&mut rng);
        let realized = [
            if b_i > 0.0 { b_i * (s * zi).exp() } else { 0.0 },
            if b_j > 0.0 { b_j * (s * zj).exp() } else { 0.0 },
        ];
        let clears = |k: usize| match reserve {
            Some(r) => bids[k] > 0.0 && realized[k] >= r,
            None => true,
        };
        let winner = if realized[0] > realized[1] {
            Some(0)
        } else if realized[1] > realized[0] {
            Some(1)
        } else if rand::Rng::random::<bool>(&mut rng) {
            Some(0)
        } else {
            Some(1)
        };
        match winner.filter(|&k| clears(k)) {
            Some(k) => {
                wins[k] += 1;
                sum[k] += realized[k];
                sum_sq[k] += realized[k] * realized[k];
            }
            None => none += 1,
        }
    }
    let n = draws as f64;
    let prop = |c: u64| c as f64 / n;
    let prop_se = |c: u64| {
        let p = c as f64 / n;
        (p * (1.0 - p) / n).sqrt()
    };
    let mean = |k: usize| {
        if wins[k] > 0 {
            sum[k] / wins[k] as f64
        } else {
            0.0
        }
    };
    let mean_se = |k: usize| {
        if wins[k] < 2 {
            return 0.0;
        }
        let m = wins[k] as f64;
        let mu = sum[k] / m;
        let var = ((sum_sq[k] - m * mu * mu) / (m - 1.0)).max(0.0);
        (var / m).sqrt()
    };
    Ok(MonteCarloOutcome {
        estimate: AuctionOutcome {
            p_win: [prop(wins[0]), prop(wins[1])],
            p_none: prop(none),
            e_cpc: [mean(0), mean(1)],
        },
        std_error: AuctionOutcome {
            p_win: [prop_se(wins[0]), prop_se(wins[1])],
            p_none: prop_se(none),
            e_cpc: [mean_se(0), mean_se(1)],
        },
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn closed_form_payment(b_i: f64, b_j: f64, s: f64) -> f64 {
        // Pr(win)·E[CPC | win] = b_i e^{σ²/2} Φ((L/σ + σ)/√2)
        let l = (b_i / b_j).ln();
        b_i * (0.5 * s * s).exp() * norm_cdf((l / s + s) / SQRT_2)
    }

    #[test]
    fn zero_bid_conventions() {
        assert_eq!(win_probability(0.1, 0.1, 0.5).unwrap(), 0.5);
        assert_eq!(win_probability(0.0, 0.0, 0.5).unwrap(), 0.5);
        assert_eq!(win_probability(0.1, 0.0, 0.5).unwrap(), 1.0);
        assert_eq!(win_probability(0.0, 0.1, 0.5).unwrap(), 0.0);
        assert_eq!(expected_cpc_given_win(0.0, 0.1, 0.5, 64).unwrap(), 0.0);
        assert_eq!(expected_cpc_given_win(0.0, 0.0, 0.5, 64).unwrap(), 0.0);
    }

    #[test]
    fn negative_bid_is_domain_error() {
        assert!(matches!(
            win_probability(-0.1, 0.1, 0.5),
            Err(Error::Domain(_))
        ));
        let spec = AuctionSpec::new(0.5).with_reserve(-1.0);
        assert!(matches!(
            auction_outcome(0.1, 0.1, &spec),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_quadrature_order_is_config_error() {
        assert!(matches!(
            expected_cpc_given_win(0.1, 0.1, 0.5, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn lone_bidder_pays_lognormal_mean() {
        let v = expected_cpc_given_win(0.2, 0.0, 0.5, 64).unwrap();
        assert_relative_eq!(v, 0.2 * (0.125f64).exp(), max_relative = 1e-15);
        // and the quadrature approaches it continuously
        let near = expected_cpc_given_win(0.2, 1e-12, 0.5, 64).unwrap();
        assert_relative_eq!(near, v, max_relative = 1e-10);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for &(bi, bj, s) in &[
            (0.1, 0.1, 0.5),
            (0.2, 0.1, 0.5),
            (0.05, 0.3, 1.0),
            (0.24, 0.02, 0.25),
        ] {
            let p = win_probability(bi, bj, s).unwrap();
            let e = expected_cpc_given_win(bi, bj, s, 64).unwrap();
            assert_relative_eq!(p * e, closed_form_payment(bi, bj, s), max_relative = 1e-10);
        }
    }

    #[test]
    fn reserve_zero_equals_plain() {
        let plain = auction_outcome(0.13, 0.07, &AuctionSpec::new(0.5)).unwrap();
        let zero = auction_outcome(0.13, 0.07, &AuctionSpec::new(0.5).with_reserve(0.0)).unwrap();
        assert_eq!(plain, zero);
    }

    #[test]
    fn tiny_reserve_approaches_plain() {
        let plain = auction_outcome(0.13, 0.07, &AuctionSpec::new(0.5)).unwrap();
        let tiny = auction_outcome(0.13, 0.07, &AuctionSpec::new(0.5).with_reserve(1e-9)).unwrap();
        for k in 0..2 {
            assert!((plain.p_win[k] - tiny.p_win[k]).abs() < 1e-10);
            assert!((plain.e_cpc[k] - tiny.e_cpc[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn prohibitive_reserve_shuts_the_slot() {
        let o = auction_outcome(0.05, 0.05, &AuctionSpec::new(0.5).with_reserve(10.0)).unwrap();
        assert!((o.p_none - 1.0).abs() < 1e-6);
        assert!(o.p_win[0] < 1e-6 && o.p_win[1] < 1e-6);
    }

    #[test]
    fn zero_bids_under_reserve() {
        let o = auction_outcome(0.0, 0.0, &AuctionSpec::new(0.5).with_reserve(0.1)).unwrap();
        assert_eq!(o.p_none, 1.0);
        assert_eq!(o.p_win, [0.0, 0.0]);
        assert_eq!(o.e_cpc, [0.0, 0.0]);
        let o = auction_outcome(0.2, 0.0, &AuctionSpec::new(0.5).with_reserve(0.1)).unwrap();
        assert_relative_eq!(
            o.p_win[0],
            norm_cdf(-(0.5f64).ln() / 0.5),
            max_relative = 1e-10
        );
        assert_relative_eq!(o.p_win[0] + o.p_none, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn reserve_payment_matches_lognormal_partial_mean() {
        // lone bidder: E[b̃ 1{b̃ ≥ r}] = b e^{σ²/2} Φ(σ − u*)
        let (b, r, s) = (0.2, 0.15, 0.5);
        let o = auction_outcome(b, 0.0, &AuctionSpec::new(s).with_reserve(r)).unwrap();
        let u_star = (r / b).ln() / s;
        assert_relative_eq!(
            o.expected_payment(0),
            b * (0.5 * s * s).exp() * norm_cdf(s - u_star),
            max_relative = 1e-10
        );
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let spec = AuctionSpec::new(0.5).with_reserve(0.12);
        let a = monte_carlo_auction(0.1, 0.1, &spec, 10_000, 3).unwrap();
        let b = monte_carlo_auction(0.1, 0.1, &spec, 10_000, 3).unwrap();
        assert_eq!(a, b);
    }

    fn within(mc: &MonteCarloOutcome, q: &AuctionOutcome, k: f64) -> bool {
        let ok = |est: f64, se: f64, truth: f64| (est - truth).abs() <= k * se.max(1e-12);
        ok(mc.estimate.p_win[0], mc.std_error.p_win[0], q.p_win[0])
            && ok(mc.estimate.p_win[1], mc.std_error.p_win[1], q.p_win[1])
            && ok(mc.estimate.p_none, mc.std_error.p_none, q.p_none)
            && ok(mc.estimate.e_cpc[0], mc.std_error.e_cpc[0], q.e_cpc[0])
            && ok(mc.estimate.e_cpc[1], mc.std_error.e_cpc[1], q.e_cpc[1])
    }

    #[test]
    fn reserve_outcome_matches_monte_carlo() {
        let spec = AuctionSpec::new(0.5).with_reserve(0.12);
        let q = auction_outcome(0.1, 0.1, &spec).unwrap();
        let mc = monte_carlo_auction_with_errors(0.1, 0.1, &spec, 10_000_000, 42).unwrap();
        assert!(within(&mc, &q, 3.0), "{q:?} vs {mc:?}");
        assert!((q.p_win[0] + q.p_win[1] + q.p_none - 1.0).abs() < 1e-10);
    }

    #[test]
    fn monte_carlo_error_shrinks_with_draws() {
        let spec = AuctionSpec::new(0.7);
        let q = auction_outcome(0.2, 0.1, &spec).unwrap();
        let small = monte_carlo_auction_with_errors(0.2, 0.1, &spec, 10_000, 1).unwrap();
        let large = monte_carlo_auction_with_errors(0.2, 0.1, &spec, 1_000_000, 1).unwrap();
        assert!(within(&small, &q, 4.0));
        assert!(within(&large, &q, 4.0));
        let ratio = small.std_error.e_cpc[0] / large.std_error.e_cpc[0];
        assert!((ratio - 10.0).abs() < 1.0, "se ratio {ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn win_probabilities_are_complementary(bi in 1e-4f64..1.0, bj in 1e-4f64..1.0, s in 0.05f64..2.0) {
            let a = win_probability(bi, bj, s).unwrap();
            let b = win_probability(bj, bi, s).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-14);
        }

        #[test]
        fn win_probability_is_scale_invariant(bi in 1e-3f64..1.0, bj in 1e-3f64..1.0, s in 0.05f64..2.0, lam in 0.01f64..100.0) {
            let a = win_probability(bi, bj, s).unwrap();
            let b = win_probability(lam * bi, lam * bj, s).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn win_probability_is_monotone(bi in 1e-3f64..1.0, bj in 1e-3f64..1.0, s in 0.1f64..1.0) {
            let base = win_probability(bi, bj, s).unwrap();
            let up = win_probability(bi * 1.1, bj, s).unwrap();
            let down = win_probability(bi, bj * 1.1, s).unwrap();
            // strict only where the normal CDF has not rounded to 0 or 1
            prop_assert!(up >= base && down <= base);
            if base > 1e-12 && base < 1.0 - 1e-12 {
                prop_assert!(up > base && down < base);
            }
        }

        #[test]
        fn reserve_probabilities_sum_to_one(bi in 0.0f64..0.5, bj in 0.0f64..0.5, r in 0.0f64..0.6, s in 0.1f64..1.0) {
            let o = auction_outcome(bi, bj, &AuctionSpec::new(s).with_reserve(r)).unwrap();
            prop_assert!((o.p_win[0] + o.p_win[1] + o.p_none - 1.0).abs() < 1e-10);
            prop_assert!(o.e_cpc[0] >= 0.0 && o.e_cpc[1] >= 0.0);
        }

        #[test]
        fn unconditional_payment_is_bounded(bi in 1e-3f64..1.0, bj in 1e-3f64..1.0, s in 0.1f64..1.0) {
            let o = auction_outcome(bi, bj, &AuctionSpec::new(s)).unwrap();
            prop_assert!(o.expected_payment(0) <= bi * (0.5 * s * s).exp() * (1.0 + 1e-12));
        }
    }
}
