//! Exact enumeration of the pin measure on small sets of pinnable sites.
//!
//! With `C` the pin-free covariance of the box, pinning the set `A` gives
//! the weight
//!
//! ```text
//! nu(A) ∝ eps^|A| (2 pi)^{-|A|/2} det(C_AA)^{-1/2},
//! ```
//!
//! which is `eps^|A| Z_{A^c} / Z_Lambda` rewritten with the complementary
//! minor identity `det(K_{A^c A^c}) = det(K) det(C_AA)` for `K = C^{-1}`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lattice::Site;

/// Largest number of pinnable sites for exhaustive enumeration.
pub const MAX_EXACT_SITES: usize = 16;

/// `log det(C_AA)` for every subset `A` of the indices of `cov`.
pub(crate) fn subset_logdets(cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = cov.nrows();
    let mut out = vec![0.0; 1 << n];
    for mask in 1usize..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| cov[(idx[a], idx[b])]);
        let chol = sub.cholesky().ok_or(Error::Singular("pin covariance submatrix"))?;
        out[mask] = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    }
    Ok(out)
}

/// The law of the pinned set restricted to a list of at most 16 pinnable
/// sites. Bit `i` of a mask refers to `sites[i]`.
#[derive(Clone, Debug)]
pub struct ExactPinTable {
    pub sites: Vec<Site>,
    pub eps: f64,
    /// `nu(mask)` indexed by mask.
    pub probs: Vec<f64>,
    /// `log(Z^eps / Z)`: the pinned partition function relative to the
    /// pin-free one.
    pub log_partition: f64,
    /// `log nu(mask)`, kept separately so that tiny weights keep their precision.
    pub log_probs: Vec<f64>,
    /// `log det(C_AA)` indexed by mask.
    pub(crate) logdets: Vec<f64>,
    /// Covariance among `sites`.
    pub(crate) cov: DMatrix<f64>,
}

impl ExactPinTable {
    /// `cov` is the pin-free covariance among `sites`.
    pub(crate) fn build(sites: Vec<Site>, cov: DMatrix<f64>, eps: f64) -> Result<Self> {
        if sites.len() > MAX_EXACT_SITES {
            return Err(Error::TooLarge(format!(
                "exact enumeration over {} sites (limit {MAX_EXACT_SITES})",
                sites.len()
            )));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
        }
        let logdets = subset_logdets(&cov)?;
        let log_w = |mask: usize| {
            let k = mask.count_ones() as f64;
            k * (eps.ln() - 0.5 * (2.0 * PI).ln()) - 0.5 * logdets[mask]
        };
        let logs: Vec<f64> = (0..logdets.len()).map(log_w).collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = unnorm.iter().sum();
        let probs = unnorm.iter().map(|w| w / z).collect();
        let log_partition = top + z.ln();
        let log_probs = logs.iter().map(|l| l - log_partition).collect();
        Ok(ExactPinTable { sites, eps, probs, log_partition, log_probs, logdets, cov })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn prob(&self, mask: usize) -> f64 {
        self.probs[mask]
    }

    /// `nu(site i pinned)`.
    pub fn marginal(&self, i: usize) -> f64 {
        self.probs.iter().enumerate().filter(|(m, _)| m >> i & 1 == 1).map(|(_, p)| p).sum()
    }

    pub fn expectation<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        self.probs.iter().enumerate().map(|(m, p)| p * f(m)).sum()
    }

    /// `nu(A ∩ B = ∅)` for `B` given as a mask.
    pub fn empty_prob(&self, b: usize) -> f64 {
        self.expectation(|m| if m & b == 0 { 1.0 } else { 0.0 })
    }

    /// Mask of a list of sites; sites not in the table are an error.
    pub fn mask_of(&self, set: &[Site]) -> Result<usize> {
        set.iter().try_fold(0usize, |m, s| {
            let i = self
                .sites
                .iter()
                .position(|t| t == s)
                .ok_or_else(|| Error::InvalidArgument(format!("site {:?} is not pinnable", s.0)))?;
            Ok(m | 1 << i)
        })
    }

    /// `Var(phi_i | phi = 0 on A)` with `i` not in `A`, from the determinant table.
    pub fn conditional_variance(&self, i: usize, a: usize) -> f64 {
        debug_assert!(a >> i & 1 == 0);
        (self.logdets[a | 1 << i] - self.logdets[a]).exp()
    }

    /// Probability that site `i` is pinned given the pins `a` elsewhere.
    pub fn conditional_pin_prob(&self, i: usize, a: usize) -> f64 {
        let a = a & !(1 << i);
        pin_prob(self.eps, self.conditional_variance(i, a))
    }

    /// Smallest and largest conditional pin probability over all sites and
    /// all configurations of the other sites.
    pub fn conditional_pin_range(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..n {
            for a in 0..(1usize << n) {
                if a >> i & 1 == 1 {
                    continue;
                }
                let p = self.conditional_pin_prob(i, a);
                lo = lo.min(p);
                hi = hi.max(p);
            }
        }
        (lo, hi)
    }

    /// Field covariance between table sites `i`, `j` given zero on `a`.
    pub fn conditional_covariance(&self, i: usize, j: usize, a: usize) -> f64 {
        if a >> i & 1 == 1 || a >> j & 1 == 1 {
            return 0.0;
        }
        conditional_covariance(&self.cov, i, j, a)
    }
}

/// `C_ij - C_iA C_AA^{-1} C_Aj` for a covariance among indexed sites.
pub(crate) fn conditional_covariance(cov: &DMatrix<f64>, i: usize, j: usize, a: usize) -> f64 {
    let idx: Vec<usize> = (0..cov.nrows()).filter(|k| a >> k & 1 == 1).collect();
    if idx.is_empty() {
        return cov[(i, j)];
    }
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |p, q| cov[(idx[p], idx[q])]);
    let bi = nalgebra::DVector::from_iterator(idx.len(), idx.iter().map(|&k| cov[(k, i)]));
    let bj = nalgebra::DVector::from_iterator(idx.len(), idx.iter().map(|&k| cov[(k, j)]));
    let chol = sub.cholesky().expect("principal submatrix of a covariance");
    cov[(i, j)] - bi.dot(&chol.solve(&bj))
}

/// `eps g / (1 + eps g)` with `g = (2 pi var)^{-1/2}`.
#[inline]
pub fn pin_prob(eps: f64, var: f64) -> f64 {
    if eps == 0.0 {
        return 0.0;
    }
    let eg = eps / (2.0 * PI * var).sqrt();
    eg / (1.0 + eg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_site_closed_form() {
        let t = ExactPinTable::build(vec![Site::ORIGIN], DMatrix::from_element(1, 1, 1.0), 1.0).unwrap();
        let expected = 1.0 / (1.0 + (2.0 * PI).sqrt());
        assert!((t.prob(1) - expected).abs() < 1e-15);
        assert!((t.prob(1) - 0.285_175).abs() < 1e-6);
    }

    #[test]
    fn logdets_match_direct_determinants() {
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.5, 0.3, 0.1, 0.3, 1.0]);
        let l = subset_logdets(&c).unwrap();
        assert!((l[0b111] - c.determinant().ln()).abs() < 1e-13);
        assert!((l[0b101] - (2.0 * 1.0 - 0.01f64).ln()).abs() < 1e-13);
        assert_eq!(l[0], 0.0);
    }

    #[test]
    fn pin_prob_limits() {
        assert_eq!(pin_prob(0.0, 1.0), 0.0);
        assert!(pin_prob(1.0, 2.0) < pin_prob(1.0, 1.0));
    }
}
