//! The one-dimensional pinned chain with Gaussian increments, solved by
//! renewal theory.
//!
//! Pinned sites form a renewal sequence whose gap law is
//! `eps e^{-lambda k} f(k)`, with `f(k) = (2 pi k)^{-1/2}` the return density
//! of the Gaussian walk and `lambda` fixed by normalization. Between pins the
//! field is a Gaussian bridge, with `E(S_m^2 | S_n = 0) = m (n - m) / n`.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mc::{derive_seed, replica_rng};

/// Residual target of the defining equation.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Relative size of the neglected tail of every sum.
pub const TAIL_TOL: f64 = 1e-12;

/// `f(k) = (2 pi k)^{-1/2}`.
pub fn f_pmf(k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("the return density is defined for k >= 1".into()));
    }
    Ok(1.0 / (2.0 * PI * k as f64).sqrt())
}

#[inline]
fn f(k: u64) -> f64 {
    1.0 / (2.0 * PI * k as f64).sqrt()
}

/// Cut-off with `sum_{k > K} e^{-lambda k} k^q <= TAIL_TOL * scale`, from
/// the integral bound `int_K^inf x^q e^{-lambda x} dx`.
fn cutoff(lambda: f64, q: f64, scale: f64) -> u64 {
    let mut k = (1.0 / lambda).ceil().max(16.0);
    loop {
        // x^q e^{-lambda x} is decreasing past q / lambda, so the tail sum
        // is bounded by the integral from K, itself by K^q e^{-lambda K} / (lambda - q/K).
        let rate = lambda - q.max(0.0) / k;
        if rate > 0.0 {
            let tail = k.powf(q) * (-lambda * k).exp() / rate;
            if tail <= TAIL_TOL * scale {
                return k as u64;
            }
        }
        k *= 1.25;
    }
}

/// `sum_{k=1}^K e^{-lambda k} k^q f(k)`.
fn tilted_sum(lambda: f64, q: i32, kmax: u64) -> f64 {
    // Summed from the tail up for accuracy.
    (1..=kmax).rev().map(|k| (-lambda * k as f64).exp() * (k as f64).powi(q) * f(k)).sum()
}

/// `eps sum_k e^{-lambda k} f(k) - 1`.
pub fn defining_residual(eps: f64, lambda: f64) -> f64 {
    let kmax = cutoff(lambda, -0.5, tilted_sum(lambda, 0, 16));
    eps * tilted_sum(lambda, 0, kmax) - 1.0
}

/// The tilt `lambda(eps) > 0` with `eps sum_k e^{-lambda k} f(k) = 1`, by
/// bisection (the sum decreases in `lambda`).
pub fn solve_lambda(eps: f64, tol: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    // lambda -> 0 makes the sum diverge, lambda -> inf sends it to 0: a
    // positive root always exists.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while defining_residual(eps, hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoConvergence { what: "tilt bracket", residual: defining_residual(eps, hi), iterations: 0 });
        }
    }
    if lo == 0.0 {
        lo = hi;
        while defining_residual(eps, lo) < 0.0 {
            hi = lo;
            lo *= 0.5;
        }
    }
    let mut iterations = 0;
    while iterations < 400 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let r = defining_residual(eps, mid);
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let residual = defining_residual(eps, lambda).abs();
    if residual > tol {
        return Err(Error::NoConvergence { what: "tilt bisection", residual, iterations });
    }
    Ok(lambda)
}

/// Solved renewal structure at one pinning strength.
#[derive(Clone, Debug, PartialEq)]
pub struct RenewalModel {
    pub eps: f64,
    pub lambda: f64,
    /// `|eps sum e^{-lambda k} f(k) - 1|`.
    pub residual: f64,
    /// Table length: `f_lambda(k)` is kept for `k = 1..=k_max`.
    pub k_max: u64,
    /// `f_lambda(k) = e^{-lambda k} f(k)`, index `k - 1`.
    pub f_lambda: Vec<f64>,
}

impl RenewalModel {
    pub fn new(eps: f64) -> Result<Self> {
        let lambda = solve_lambda(eps, RESIDUAL_TOL)?;
        // Enough terms for the second moment, the heaviest sum needed.
        let scale = tilted_sum(lambda, 2, (1.0 / lambda).ceil() as u64 + 16);
        let k_max = cutoff(lambda, 1.5, scale);
        let f_lambda = (1..=k_max).map(|k| (-lambda * k as f64).exp() * f(k)).collect();
        Ok(RenewalModel { eps, lambda, residual: defining_residual(eps, lambda).abs(), k_max, f_lambda })
    }

    /// `eps f_lambda(k)`: the gap law of consecutive pins.
    pub fn gap_pmf(&self, k: u64) -> f64 {
        if k == 0 || k > self.k_max {
            return 0.0;
        }
        self.eps * self.f_lambda[k as usize - 1]
    }
}

/// `M = sum_j j f_lambda(j)`.
pub fn renewal_mean(model: &RenewalModel) -> f64 {
    model.f_lambda.iter().enumerate().rev().map(|(i, v)| (i + 1) as f64 * v).sum()
}

/// `sum_{m=0}^{n-1} m (n - m) / n = (n^2 - 1) / 6`.
pub fn bridge_variance_sum(n: u64) -> f64 {
    let n = n as f64;
    (n * n - 1.0) / 6.0
}

/// Variance of the field at a typical site:
/// `(1/M) sum_n f_lambda(n) sum_{m<n} m (n - m) / n`.
pub fn variance_1d(model: &RenewalModel) -> f64 {
    let s: f64 =
        model.f_lambda.iter().enumerate().rev().map(|(i, v)| v * bridge_variance_sum(i as u64 + 1)).sum();
    s / renewal_mean(model)
}

/// The mass of the one-dimensional chain, `lambda(eps)`.
pub fn mass_1d(eps: f64) -> Result<f64> {
    solve_lambda(eps, RESIDUAL_TOL)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenewalRow {
    pub eps: f64,
    pub lambda: f64,
    pub lambda_over_eps2_half: f64,
    pub mean: f64,
    pub mean_times_eps3: f64,
    pub variance: f64,
    pub variance_times_2eps2: f64,
    pub residual: f64,
}

pub fn renewal_row(eps: f64) -> Result<RenewalRow> {
    let m = RenewalModel::new(eps)?;
    let mean = renewal_mean(&m);
    let variance = variance_1d(&m);
    Ok(RenewalRow {
        eps,
        lambda: m.lambda,
        lambda_over_eps2_half: 2.0 * m.lambda / (eps * eps),
        mean,
        mean_times_eps3: mean * eps.powi(3),
        variance,
        variance_times_2eps2: 2.0 * variance * eps * eps,
        residual: m.residual,
    })
}

/// Gaps drawn from the renewal law, `count` of them, by inversion on the
/// cumulative table.
pub fn sample_gaps(model: &RenewalModel, count: usize, seed: u64) -> Vec<u64> {
    let mut cdf = Vec::with_capacity(model.f_lambda.len());
    let mut acc = 0.0;
    for v in &model.f_lambda {
        acc += model.eps * v;
        cdf.push(acc);
    }
    let total = acc;
    let mut rng = replica_rng(derive_seed(seed, 0x9a95), 0);
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            cdf.partition_point(|&c| c <= u) as u64 + 1
        })
        .collect()
}
