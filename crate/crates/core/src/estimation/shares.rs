use crate::prelude::*;
use crate::{Error, Result};

/// Mass of consumers whose consideration set is the first `n` listings,
/// for `n = 1..=n_positions`.
pub fn stop_weights(lambda: f64, n_positions: usize) -> Result<Vec<f64>> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::domain("stopping rate must be positive"));
    }
    if n_positions == 0 {
        return Err(Error::domain("page needs at least one position"));
    }
    Ok((1..=n_positions)
        .map(|n| (-lambda * (n - 1) as f64).exp() - (-lambda * n as f64).exp())
        .collect())
}

/// Mass that stops at or before position `n`.
pub fn stop_cdf(lambda: f64, n: f64) -> f64 {
    -(-lambda * n).exp_m1()
}

/// Reusable buffers for one market-day.
#[derive(Debug, Default, Clone)]
pub(crate) struct Scratch {
    tail: Vec<f64>,
    seen: Vec<bool>,
}

/// Predicted shares for one market-day. `exp_delta[j] = e^{δ_j}`; zero
/// removes a product without freeing its slot. A product appearing twice
/// in one ranking keeps its first position.
pub(crate) fn predict_day_into(
    exp_delta: &[f64],
    rankings: &[Vec<u32>],
    weights: &[f64],
    scratch: &mut Scratch,
    out: &mut [f64],
) {
    let n_pos = weights.len();
    out.iter_mut().for_each(|s| *s = 0.0);
    if rankings.is_empty() {
        return;
    }
    scratch.tail.resize(n_pos + 1, 0.0);
    scratch.seen.resize(exp_delta.len(), false);
    let inv_s = 1.0 / rankings.len() as f64;
    for r in rankings {
        // denominators 1 + Σ_{J_n} e^δ, stored in `tail` before the suffix sum
        let mut d = 1.0;
        for (k, &p) in r.iter().enumerate() {
            let p = p as usize;
            if !scratch.seen[p] {
                scratch.seen[p] = true;
                d += exp_delta[p];
            }
            scratch.tail[k] = d;
        }
        for k in r.len()..n_pos {
            scratch.tail[k] = d;
        }
        scratch.tail[n_pos] = 0.0;
        for k in (0..n_pos).rev() {
            scratch.tail[k] = weights[k] / scratch.tail[k] + scratch.tail[k + 1];
        }
        for &p in r {
            scratch.seen[p as usize] = false;
        }
        for (k, &p) in r.iter().enumerate() {
            let p = p as usize;
            if !scratch.seen[p] {
                scratch.seen[p] = true;
                out[p] += inv_s * exp_delta[p] * scratch.tail[k];
            }
        }
        for &p in r {
            scratch.seen[p as usize] = false;
        }
    }
}

fn check_rankings(rankings: &[Vec<u32>], n_products: usize, n_positions: usize) -> Result<()> {
    for r in rankings {
        if r.len() > n_positions {
            return Err(Error::data("ranking longer than the page"));
        }
        if let Some(&p) = r.iter().find(|&&p| p as usize >= n_products) {
            return Err(Error::data(format!("ranked product {p} has no utility")));
        }
    }
    Ok(())
}

/// Share of each product on one market-day, averaging the day's searches.
/// `delta[j] = -inf` removes product `j` from every consideration set.
pub fn predict_shares(
    delta: &[f64],
    lambda: f64,
    rankings: &[Vec<u32>],
    n_positions: usize,
) -> Result<Vec<f64>> {
    let weights = stop_weights(lambda, n_positions)?;
    check_rankings(rankings, delta.len(), n_positions)?;
    let exp_delta: Vec<f64> = delta.iter().map(|d| d.exp()).collect();
    let mut out = vec![0.0; delta.len()];
    predict_day_into(
        &exp_delta,
        rankings,
        &weights,
        &mut Scratch::default(),
        &mut out,
    );
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Step used after the undamped contraction fails.
    pub fallback_damping: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            fallback_damping: 0.5,
        }
    }
}

const DELTA_CEILING: f64 = 50.0;

/// Mean utilities reproducing the observed shares of one market-day.
/// Entries with `observed[j] == false` stay at `-inf`. `delta` holds the
/// starting point on entry (non-finite entries are reset) and the solution
/// on success.
pub(crate) fn invert_day(
    shares: &[f64],
    observed: &[bool],
    rankings: &[Vec<u32>],
    weights: &[f64],
    cfg: &InversionConfig,
    scratch: &mut Scratch,
    delta: &mut [f64],
) -> Result<usize> {
    let r = invert_day_inner(shares, observed, rankings, weights, cfg, scratch, delta);
    if r.is_err() {
        // a failed attempt must not seed the next warm start
        delta.iter_mut().for_each(|d| *d = f64::NAN);
    }
    r
}

fn invert_day_inner(
    shares: &[f64],
    observed: &[bool],
    rankings: &[Vec<u32>],
    weights: &[f64],
    cfg: &InversionConfig,
    scratch: &mut Scratch,
    delta: &mut [f64],
) -> Result<usize> {
    let n = shares.len();
    let inside: f64 = shares
        .iter()
        .zip(observed)
        .filter(|(_, &o)| o)
        .map(|(s, _)| s)
        .sum();
    let on_page: f64 = weights.iter().sum();
    if inside >= on_page {
        // more buyers than consumers who stop on the page
        return Err(Error::NonConvergence {
            iterations: 0,
            max_update: f64::INFINITY,
        });
    }
    for j in 0..n {
        if !observed[j] {
            continue;
        }
        if !(shares[j] > 0.0) {
            return Err(Error::data("observed share must be positive"));
        }
        if !delta[j].is_finite() {
            delta[j] = (shares[j] / (1.0 - inside).max(1e-12)).ln();
        }
    }
    let start: Vec<f64> = delta.to_vec();
    let mut exp_delta = vec![0.0; n];
    let mut pred = vec![0.0; n];
    let log_s: Vec<f64> = shares.iter().map(|s| s.ln()).collect();
    let mut last = (0, f64::INFINITY);
    for damping in [1.0, cfg.fallback_damping] {
        delta.copy_from_slice(&start);
        let mut diverged = false;
        for it in 0..cfg.max_iter {
            for j in 0..n {
                exp_delta[j] = if observed[j] { delta[j].exp() } else { 0.0 };
            }
            predict_day_into(&exp_delta, rankings, weights, scratch, &mut pred);
            let mut max_update: f64 = 0.0;
            for j in 0..n {
                if !observed[j] {
                    delta[j] = f64::NEG_INFINITY;
                    continue;
                }
                if pred[j] <= 0.0 {
                    return Err(Error::data(format!(
                        "product {j} has a share but is never ranked"
                    )));
                }
                let step = damping * (log_s[j] - pred[j].ln());
                delta[j] += step;
                max_update = max_update.max(step.abs());
            }
            last = (it + 1, max_update);
            if !max_update.is_finite() || delta.iter().any(|&d| d > DELTA_CEILING) {
                diverged = true;
                break;
            }
            if max_update < cfg.tol {
                return Ok(it + 1);
            }
        }
        if !diverged {
            // slow but stable: damping will not help
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: last.0,
        max_update: last.1,
    })
}

/// Mean utilities whose predicted shares equal `shares` on one market-day.
pub fn invert_shares(
    shares: &[f64],
    lambda: f64,
    rankings: &[Vec<u32>],
    n_positions: usize,
) -> Result<Vec<f64>> {
    invert_shares_with(
        shares,
        lambda,
        rankings,
        n_positions,
        &InversionConfig::default(),
    )
}

pub fn invert_shares_with(
    shares: &[f64],
    lambda: f64,
    rankings: &[Vec<u32>],
    n_positions: usize,
    cfg: &InversionConfig,
) -> Result<Vec<f64>> {
    let weights = stop_weights(lambda, n_positions)?;
    check_rankings(rankings, shares.len(), n_positions)?;
    let total: f64 = shares.iter().sum();
    if total >= 1.0 {
        return Err(Error::data("shares must leave room for the outside option"));
    }
    let observed = vec![true; shares.len()];
    let mut delta = vec![f64::NAN; shares.len()];
    invert_day(
        shares,
        &observed,
        rankings,
        &weights,
        cfg,
        &mut Scratch::default(),
        &mut delta,
    )?;
    Ok(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gumbel};

    #[test]
    fn stop_mass_formulae() {
        assert!((stop_cdf(0.1, 1.0) - 0.0952).abs() < 1e-4);
        let w = stop_weights(0.1, 60).unwrap();
        let total: f64 = w.iter().sum();
        assert!((total - stop_cdf(0.1, 60.0)).abs() < 1e-14);
        assert!(total < 1.0);
        assert!(stop_weights(200.0, 5).unwrap()[0] > 1.0 - 1e-12);
        assert!(stop_weights(0.0, 5).is_err());
        assert!(stop_weights(-1.0, 5).is_err());
    }

    #[test]
    fn one_product_one_slot() {
        let s = predict_shares(&[0.3], 100.0, &[vec![0]], 1).unwrap();
        let w = stop_weights(100.0, 1).unwrap()[0];
        let e = 0.3f64.exp();
        assert!((s[0] - w * e / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn hopeless_products_sell_nothing() {
        let s = predict_shares(&[-800.0, -900.0], 0.2, &[vec![0, 1]], 22).unwrap();
        assert!(s.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unknown_product_is_a_data_error() {
        assert!(matches!(
            predict_shares(&[0.0], 0.2, &[vec![0, 1]], 22),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn duplicate_listing_keeps_first_slot() {
        let a = predict_shares(&[0.1, -0.2], 0.3, &[vec![0, 1, 0]], 5).unwrap();
        let b = predict_shares(&[0.1, -0.2], 0.3, &[vec![0, 1]], 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn singleton_inversion_has_a_closed_form() {
        // one product in the only slot of a full page: s = F·e^δ/(1+e^δ)
        let (lambda, n_pos, s) = (0.2, 10, 0.3);
        let f = stop_cdf(lambda, n_pos as f64);
        let delta = invert_shares(&[s], lambda, &[vec![0]], n_pos).unwrap();
        assert!((delta[0] - (s / (f - s)).ln()).abs() < 1e-9);
    }

    #[test]
    fn unreachable_share_does_not_converge() {
        let f = stop_cdf(0.5, 3.0);
        let err = invert_shares(&[f + 0.01], 0.5, &[vec![0]], 3).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn consumer_simulation_matches_prediction() {
        // consumers pick a search, stop after n listings with the model's
        // probabilities, then choose by Gumbel utilities
        let delta = [0.4, -0.3, 0.1];
        let rankings = vec![vec![0, 1, 2], vec![2, 0, 1], vec![1, 2, 0], vec![0, 2, 1]];
        let (lambda, n_pos) = (0.5, 3);
        let pred = predict_shares(&delta, lambda, &rankings, n_pos).unwrap();
        let w = stop_weights(lambda, n_pos).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gumbel = Gumbel::new(0.0, 1.0).unwrap();
        let draws = 1_000_000;
        let mut counts = [0u64; 3];
        for _ in 0..draws {
            let r = &rankings[rng.random_range(0..rankings.len())];
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut n = None;
            for (k, wk) in w.iter().enumerate() {
                acc += wk;
                if u < acc {
                    n = Some(k + 1);
                    break;
                }
            }
            let Some(n) = n else { continue };
            let mut best = (gumbel.sample(&mut rng), None);
            for &p in &r[..n] {
                let v = delta[p as usize] + gumbel.sample(&mut rng);
                if v > best.0 {
                    best = (v, Some(p as usize));
                }
            }
            if let Some(p) = best.1 {
                counts[p] += 1;
            }
        }
        for j in 0..3 {
            let est = counts[j] as f64 / draws as f64;
            let se = (pred[j] * (1.0 - pred[j]) / draws as f64).sqrt();
            assert!(
                (est - pred[j]).abs() < 3.0 * se,
                "product {j}: {est} vs {}",
                pred[j]
            );
        }
    }

    fn random_day(seed: u64, n_products: usize, n_pos: usize) -> (Vec<f64>, Vec<Vec<u32>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let delta: Vec<f64> = (0..n_products)
            .map(|_| rng.random_range(-3.0..1.0))
            .collect();
        let mut ids: Vec<u32> = (0..n_products as u32).collect();
        let rankings = (0..8)
            .map(|_| {
                ids.shuffle(&mut rng);
                ids[..n_products.min(n_pos)].to_vec()
            })
            .collect();
        (delta, rankings)
    }

    #[test]
    fn roundtrip_over_twenty_seeds() {
        for seed in 0..20 {
            let (delta, rankings) = random_day(seed, 20, 22);
            let s = predict_shares(&delta, 0.05, &rankings, 22).unwrap();
            let back = invert_shares(&s, 0.05, &rankings, 22).unwrap();
            for (a, b) in delta.iter().zip(&back) {
                assert!((a - b).abs() < 1e-8, "seed {seed}: {a} vs {b}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn inside_mass_stays_on_page(seed in 0u64..10_000, lambda in 0.01f64..2.0) {
            let (delta, rankings) = random_day(seed, 12, 22);
            let s = predict_shares(&delta, lambda, &rankings, 22).unwrap();
            let total: f64 = s.iter().sum();
            prop_assert!(total < stop_cdf(lambda, 22.0));
            prop_assert!(s.iter().all(|&x| x > 0.0));
        }

        #[test]
        fn inversion_roundtrips(seed in 0u64..10_000, lambda in 0.01f64..1.0) {
            let (delta, rankings) = random_day(seed, 24, 22);
            let s = predict_shares(&delta, lambda, &rankings, 22).unwrap();
            let back = invert_shares(&s, lambda, &rankings, 22).unwrap();
            let again = predict_shares(&back, lambda, &rankings, 22).unwrap();
            for (a, b) in s.iter().zip(&again) {
                prop_assert!((a - b).abs() <= 1e-8 * a);
            }
        }
    }
}
