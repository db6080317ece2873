//! Pinned two-point function against independent-pin references.
//!
//! When only the sites of a small window can be pinned, the pinned-set law
//! `nu` is enumerated exactly. Every conditional pin probability lies in
//! `[p_minus, p_plus]`, so `nu` sits between the Bernoulli laws of those
//! densities in the stochastic order. The covariance given the pins
//! decreases as pins are added, which orders the three expectations:
//! `E_{p_plus} <= E_nu <= E_{p_minus}`.

use crate::error::{Error, Result};
use crate::green::Region;
use crate::lattice::Site;
use crate::pinning::{exact_pin_measure_on, ExactPinTable};

#[derive(Clone, Debug, PartialEq)]
pub struct Sandwich {
    pub eps: f64,
    /// `E_nu(phi_x phi_y)`.
    pub exact: f64,
    /// The same with independent pins of density `p_plus` (lower) and
    /// `p_minus` (upper).
    pub lower: f64,
    pub upper: f64,
    pub p_minus: f64,
    pub p_plus: f64,
}

impl Sandwich {
    pub fn holds(&self) -> bool {
        let tol = 1e-12 * self.exact.abs().max(1.0);
        self.lower <= self.exact + tol && self.exact <= self.upper + tol
    }
}

/// Covariance given every pin configuration of the table, indexed by mask.
fn conditional_covariances(t: &ExactPinTable, i: usize, j: usize) -> Vec<f64> {
    (0..1usize << t.len()).map(|a| t.conditional_covariance(i, j, a)).collect()
}

/// `E[h(A)]` for independent pins of density `p`.
pub fn bernoulli_expectation(h: &[f64], n: usize, p: f64) -> f64 {
    debug_assert_eq!(h.len(), 1 << n);
    h.iter()
        .enumerate()
        .map(|(m, v)| {
            let k = m.count_ones() as i32;
            p.powi(k) * (1.0 - p).powi(n as i32 - k) * v
        })
        .sum()
}

/// Exact pinned covariance of `x` and `y` with pins confined to `window`,
/// and the two Bernoulli references with the extreme conditional pin
/// probabilities. Both `x` and `y` must be window sites.
pub fn covariance_sandwich(region: &Region, eps: f64, window: &[Site], x: &Site, y: &Site) -> Result<Sandwich> {
    let t = exact_pin_measure_on(region, eps, window)?;
    let pos = |s: &Site| {
        t.sites
            .iter()
            .position(|w| w == s)
            .ok_or_else(|| Error::InvalidArgument(format!("site {s:?} is not in the pin window")))
    };
    let (i, j) = (pos(x)?, pos(y)?);
    let h = conditional_covariances(&t, i, j);
    let exact: f64 = t.probs.iter().zip(&h).map(|(p, v)| p * v).sum();
    let (p_minus, p_plus) = t.conditional_pin_range();
    Ok(Sandwich {
        eps,
        exact,
        lower: bernoulli_expectation(&h, t.len(), p_plus),
        upper: bernoulli_expectation(&h, t.len(), p_minus),
        p_minus,
        p_plus,
    })
}
