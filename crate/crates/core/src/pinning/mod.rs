//! The pinned-set measure: exact enumeration on small sets, the heat-bath
//! sampler, Gaussian field draws given pins, and the checks built on them.

mod estimate;
mod exact;
mod sampler;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::green::{conditional_variance, Region};
use crate::lattice::Site;
use crate::mc::{replica_rng, McRng};

pub use estimate::{
    box_stability, covariance, empty_probability, pin_statistics, variance_at, variance_origin, ChainConfig,
    EmptyProbability, PinStatistics, StabilityProbe, StabilityRow,
};
pub use exact::{pin_prob, ExactPinTable, MAX_EXACT_SITES};
pub use sampler::{PinSampler, AUDIT_FLIPS, AUDIT_TOLERANCE};

/// Largest box for which the dense pin-free covariance is formed.
pub const DENSE_COV_LIMIT: usize = 5000;
/// Default half-width of the windowed conditional-variance solves.
pub const DEFAULT_WINDOW_RADIUS: usize = 12;
/// Largest box for the exhaustive lattice-condition check.
pub const MAX_LATTICE_CHECK_SITES: usize = 9;

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    Ok(())
}

/// A region, a pinning strength, and the pin-free covariance (or a window
/// radius for the approximate engine). Sites are indexed as the alive sites
/// of the region.
#[derive(Clone, Debug)]
pub struct PinModel {
    pub(crate) region: Region,
    pub(crate) eps: f64,
    pub(crate) cov: Option<DMatrix<f64>>,
    pub(crate) window_radius: Option<usize>,
    pinnable: Vec<usize>,
    is_pinnable: Vec<bool>,
}

impl PinModel {
    /// Exact engine on the dense pin-free covariance.
    pub fn new(region: &Region, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        let n = region.alive_count();
        if n == 0 {
            return Err(Error::InvalidArgument("region has no alive sites".into()));
        }
        if n > DENSE_COV_LIMIT {
            return Err(Error::TooLarge(format!(
                "dense covariance on {n} sites (limit {DENSE_COV_LIMIT}); use the windowed engine"
            )));
        }
        let cov = region.covariance_dense()?;
        Ok(Self::assemble(region, eps, Some(cov), None))
    }

    /// Approximate engine: conditional variances from solves on the sub-box
    /// of the given radius around each site.
    pub fn windowed(region: &Region, eps: f64, radius: usize) -> Result<Self> {
        check_eps(eps)?;
        if region.alive_count() == 0 {
            return Err(Error::InvalidArgument("region has no alive sites".into()));
        }
        Ok(Self::assemble(region, eps, None, Some(radius)))
    }

    fn assemble(region: &Region, eps: f64, cov: Option<DMatrix<f64>>, window_radius: Option<usize>) -> Self {
        let n = region.alive_count();
        PinModel {
            region: region.clone(),
            eps,
            cov,
            window_radius,
            pinnable: (0..n).collect(),
            is_pinnable: vec![true; n],
        }
    }

    /// Only the listed sites may carry pins.
    pub fn restrict_pins(mut self, sites: &[Site]) -> Result<Self> {
        let mut idx = Vec::with_capacity(sites.len());
        for s in sites {
            let i = self
                .region
                .alive_index(s)
                .ok_or_else(|| Error::DeadSite(s.coords(self.region.dim()).to_vec()))?;
            idx.push(i);
        }
        idx.sort_unstable();
        idx.dedup();
        self.is_pinnable = vec![false; self.len()];
        for &i in &idx {
            self.is_pinnable[i] = true;
        }
        self.pinnable = idx;
        Ok(self)
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn len(&self) -> usize {
        self.region.alive_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_dense(&self) -> bool {
        self.cov.is_some()
    }

    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        self.cov.as_ref()
    }

    /// Indices of the sites that may be pinned, in lexicographic order.
    pub fn pinnable_indices(&self) -> &[usize] {
        &self.pinnable
    }

    pub fn is_pinnable(&self, i: usize) -> bool {
        self.is_pinnable[i]
    }

    pub fn index_of(&self, s: &Site) -> Result<usize> {
        self.region
            .alive_index(s)
            .ok_or_else(|| Error::DeadSite(s.coords(self.region.dim()).to_vec()))
    }

    /// Exact law of the pinned set over the pinnable sites.
    pub fn exact_table(&self) -> Result<ExactPinTable> {
        let c = self
            .cov
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("exact enumeration needs the dense engine".into()))?;
        if self.pinnable.len() > MAX_EXACT_SITES {
            return Err(Error::TooLarge(format!(
                "exact enumeration over {} sites (limit {MAX_EXACT_SITES})",
                self.pinnable.len()
            )));
        }
        let p = &self.pinnable;
        let sub = DMatrix::from_fn(p.len(), p.len(), |a, b| c[(p[a], p[b])]);
        let sites = p.iter().map(|&i| self.region.alive_sites()[i]).collect();
        ExactPinTable::build(sites, sub, self.eps)
    }
}

/// Exact pinned-set law with every alive site of `region` pinnable.
pub fn exact_pin_measure(region: &Region, eps: f64) -> Result<ExactPinTable> {
    if region.alive_count() > MAX_EXACT_SITES {
        return Err(Error::TooLarge(format!(
            "exact enumeration over {} sites (limit {MAX_EXACT_SITES})",
            region.alive_count()
        )));
    }
    PinModel::new(region, eps)?.exact_table()
}

/// Exact pinned-set law when only the sites of `window` may be pinned.
pub fn exact_pin_measure_on(region: &Region, eps: f64, window: &[Site]) -> Result<ExactPinTable> {
    PinModel::new(region, eps)?.restrict_pins(window)?.exact_table()
}

/// Probability that `x` is pinned given the pins `pins` elsewhere, from a
/// fresh solve on the region with those pins removed.
pub fn gibbs_pin_prob(region: &Region, pins: &[Site], x: &Site, eps: f64) -> Result<f64> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be nonnegative, got {eps}")));
    }
    let others: Vec<Site> = pins.iter().filter(|s| *s != x).copied().collect();
    let r = region.with_dead(&others)?;
    let var = conditional_variance(&r, x)?;
    Ok(pin_prob(eps, var))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeCheck {
    pub sites: Vec<Site>,
    /// `min nu(A ∪ B) nu(A ∩ B) / (nu(A) nu(B))` over all pairs.
    pub min_ratio: f64,
    pub argmin: (usize, usize),
    pub pairs: u64,
}

/// Exhaustive check of the lattice condition over all pairs of subsets.
pub fn check_lattice_condition(region: &Region, eps: f64) -> Result<LatticeCheck> {
    if region.alive_count() > MAX_LATTICE_CHECK_SITES {
        return Err(Error::TooLarge(format!(
            "lattice condition check over {} sites (limit {MAX_LATTICE_CHECK_SITES})",
            region.alive_count()
        )));
    }
    let t = exact_pin_measure(region, eps)?;
    let l = &t.log_probs;
    let n = 1usize << t.len();
    let mut best = (f64::INFINITY, (0, 0));
    for a in 0..n {
        for b in 0..n {
            let log_ratio = l[a | b] + l[a & b] - l[a] - l[b];
            if log_ratio < best.0 {
                best = (log_ratio, (a, b));
            }
        }
    }
    Ok(LatticeCheck { sites: t.sites.clone(), min_ratio: best.0.exp(), argmin: best.1, pairs: (n * n) as u64 })
}

/// A field configuration on the alive sites of a region.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub sites: Vec<Site>,
    pub values: Vec<f64>,
}

impl FieldSample {
    pub fn get(&self, s: &Site) -> f64 {
        self.sites.iter().position(|t| t == s).map_or(0.0, |i| self.values[i])
    }
}

/// Exact Gaussian draw with precision `beta_eff (I - P)` on the alive sites
/// not in `pins`, zero on `pins`.
pub fn sample_field(region: &Region, pins: &[Site], rng: &mut McRng) -> Result<FieldSample> {
    let free = region.with_dead(pins)?;
    let sites = region.alive_sites().to_vec();
    let mut values = vec![0.0; sites.len()];
    let n = free.alive_count();
    if n > 0 {
        if n > DENSE_COV_LIMIT {
            return Err(Error::TooLarge(format!("dense field sample on {n} sites")));
        }
        let k = free.operator().to_dense() * free.beta_eff();
        let chol = k.cholesky().ok_or(Error::Singular("field precision"))?;
        let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
        let phi = chol.l().transpose().solve_upper_triangular(&z).ok_or(Error::Singular("field precision factor"))?;
        for (j, s) in free.alive_sites().iter().enumerate() {
            let i = region.alive_index(s).expect("free sites are alive in the region");
            values[i] = phi[j];
        }
    }
    Ok(FieldSample { sites, values })
}

/// Final state of a heat-bath run.
#[derive(Clone, Debug, PartialEq)]
pub struct PinState {
    pub sites: Vec<Site>,
    pub pinned: Vec<bool>,
    pub eps: f64,
    pub sweeps: u64,
    pub seed: u64,
}

impl PinState {
    pub fn pins(&self) -> Vec<Site> {
        self.sites.iter().zip(&self.pinned).filter(|(_, &p)| p).map(|(s, _)| *s).collect()
    }
}

/// Runs `sweeps` heat-bath sweeps from the empty configuration.
pub fn sample_pins(region: &Region, eps: f64, sweeps: usize, seed: u64) -> Result<PinState> {
    if sweeps == 0 {
        return Err(Error::InvalidArgument("sweeps must be at least 1".into()));
    }
    let model = PinModel::new(region, eps)?;
    let mut s = PinSampler::new(&model, replica_rng(seed, 0));
    for _ in 0..sweeps {
        s.sweep()?;
    }
    Ok(PinState {
        sites: region.alive_sites().to_vec(),
        pinned: s.pinned().to_vec(),
        eps,
        sweeps: s.sweeps(),
        seed,
    })
}
