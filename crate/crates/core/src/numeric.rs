//! Small numerical toolkit: normal distribution helpers, Gauss-Hermite and
//! Gauss-Legendre rules, log-sum-exp, and bracketing 1-D optimizers.

use crate::prelude::*;
use crate::{Error, Result};

use core::f64::consts::{PI, SQRT_2};

const NEWTON_EPS: f64 = 3.0e-14;

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `ln(Σ exp(x_k))` with the maximum subtracted first.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Gauss-Hermite rule for integrals of the form `∫ e^{-x²} f(x) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes and weights by Newton iteration on the normalized Hermite
    /// recurrence, seeded with the usual asymptotic guesses.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::config("quadrature order must be positive"));
        }
        let n = order;
        let nf = n as f64;
        let pim4 = PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let mut z = 0.0_f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            let mut converged = false;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= NEWTON_EPS {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::config("Gauss-Hermite node iteration failed"));
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ e^{-x²} f(x) dx`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// `E[f(U)]` for `U ~ N(0, 1)`, via the change of variable `u = √2 x`.
    pub fn expect_standard_normal(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.integrate(|x| f(SQRT_2 * x)) / PI.sqrt()
    }
}

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::config("quadrature order must be positive"));
        }
        let n = order;
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 1..=n.div_ceil(2) {
            let mut z = (PI * (i as f64 - 0.25) / (nf + 0.5)).cos();
            let mut pp;
            loop {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= NEWTON_EPS {
                    break;
                }
            }
            nodes[i - 1] = -z;
            nodes[n - i] = z;
            weights[i - 1] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[n - i] = weights[i - 1];
        }
        Ok(Self { nodes, weights })
    }

    /// `∫_a^b f(x) dx` on a single panel.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
    }

    /// Composite rule over `panels` equal sub-intervals.
    pub fn integrate_composite(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        f: impl Fn(f64) -> f64,
    ) -> f64 {
        if b <= a {
            return 0.0;
        }
        let panels = panels.max(1);
        let width = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let lo = a + width * k as f64;
                self.integrate(lo, lo + width, &f)
            })
            .sum()
    }
}

/// Beyond this many standard deviations the normal density is below 1e-19.
pub const NORMAL_TAIL_CUTOFF: f64 = 9.0;

/// `∫_{lower}^{∞} f(u) φ(u) du` by composite Gauss-Legendre over the
/// truncated support, so that an indicator `1{u ≥ lower}` is integrated
/// exactly at its jump.
pub fn truncated_normal_integral(rule: &GaussLegendre, lower: f64, f: impl Fn(f64) -> f64) -> f64 {
    let lo = lower.max(-NORMAL_TAIL_CUTOFF);
    let hi = NORMAL_TAIL_CUTOFF;
    if lo >= hi {
        return 0.0;
    }
    let panels = (hi - lo).ceil() as usize;
    rule.integrate_composite(lo, hi, panels, |u| f(u) * norm_pdf(u))
}

const INV_GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
pub fn golden_max(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_GOLDEN * (hi - lo);
    let mut x2 = lo + INV_GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (hi - lo) > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_GOLDEN * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_GOLDEN * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    // the endpoints of the final bracket can beat the midpoint on a flat
    // or boundary-maximal objective
    [(x, fx), (x1, f1), (x2, f2)]
        .into_iter()
        .fold(
            (x, fx),
            |best, cand| if cand.1 > best.1 { cand } else { best },
        )
}

/// Maximize `f` over `points` (sorted ascending), then refine with
/// golden-section inside the bracket formed by the best point's neighbours.
pub fn grid_then_golden(mut f: impl FnMut(f64) -> f64, points: &[f64], tol: f64) -> (f64, f64) {
    debug_assert!(!points.is_empty());
    let (k, best) = points.iter().enumerate().map(|(k, &x)| (k, f(x))).fold(
        (0, f64::NEG_INFINITY),
        |acc, (k, v)| if v > acc.1 { (k, v) } else { acc },
    );
    let lo = points[k.saturating_sub(1)];
    let hi = points[(k + 1).min(points.len() - 1)];
    let (x, fx) = golden_max(&mut f, lo, hi, tol);
    if fx >= best {
        (x, fx)
    } else {
        (points[k], best)
    }
}

/// `count` equally spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|k| {
                    if k == count - 1 {
                        hi
                    } else {
                        lo + step * k as f64
                    }
                })
                .collect()
        }
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`. Returns `None` when the
/// endpoints do not bracket a root.
pub fn bisect(
    f: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: usize,
) -> Option<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return None;
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 || (hi - lo) < tol {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
