//! Chain-based estimators over the pinned-set law.

use super::{PinModel, PinSampler};
use crate::error::{Error, Result};
use crate::green::Region;
use crate::kernel::StepKernel;
use crate::lattice::Site;
use crate::mc::{batch_means, derive_seed, Accum, Estimate, Exec, McRng};

/// Budget of a set of independent heat-bath chains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainConfig {
    /// Sweeps per chain, burn-in included.
    pub sweeps: usize,
    /// Discarded sweeps per chain; half of `sweeps` when `None`.
    pub burnin: Option<usize>,
    pub chains: usize,
    /// Batch-means blocks per chain.
    pub batches: usize,
}

impl ChainConfig {
    pub fn new(sweeps: usize) -> Self {
        ChainConfig { sweeps, burnin: None, chains: 1, batches: 20 }
    }

    pub fn with_chains(mut self, chains: usize) -> Self {
        self.chains = chains;
        self
    }

    pub fn with_burnin(mut self, burnin: usize) -> Self {
        self.burnin = Some(burnin);
        self
    }

    pub fn burnin(&self) -> usize {
        self.burnin.unwrap_or(self.sweeps / 2)
    }

    pub fn kept(&self) -> usize {
        self.sweeps.saturating_sub(self.burnin())
    }

    fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.batches == 0 {
            return Err(Error::InvalidArgument("chains and batches must be at least 1".into()));
        }
        if self.kept() < self.batches {
            return Err(Error::InvalidArgument(format!(
                "{} sweeps after burn-in cannot fill {} batches",
                self.kept(),
                self.batches
            )));
        }
        Ok(())
    }
}

/// Runs every chain and records `observe(sampler)` after each kept sweep.
/// Chains are seeded `(seed, chain)` and returned in chain order.
fn run_chains<T, F>(model: &PinModel, cfg: &ChainConfig, seed: u64, exec: &Exec, observe: F) -> Result<Vec<Vec<T>>>
where
    T: Send,
    F: Fn(&mut PinSampler) -> Result<T> + Sync + Send,
{
    cfg.validate()?;
    let burnin = cfg.burnin();
    exec.replicas(seed, cfg.chains, |rng: &mut McRng, _| {
        let mut s = PinSampler::new(model, rng.clone());
        let mut out = Vec::with_capacity(cfg.kept());
        for sweep in 0..cfg.sweeps {
            s.sweep()?;
            if sweep >= burnin {
                out.push(observe(&mut s)?);
            }
        }
        Ok(out)
    })
    .into_iter()
    .collect()
}

fn merge_batches(series: &[Vec<f64>], batches: usize, seed: u64) -> Estimate {
    let mut acc = Accum::default();
    for s in series {
        acc.merge(&batch_means(s, batches));
    }
    Estimate::from_accum(&acc, seed)
}

/// Rao-Blackwellized `E(phi_i^2)`: after every sweep, the conditional mean of
/// `Var(phi_i | pins)` over the pin state of `i` itself.
pub fn variance_at(model: &PinModel, site: &Site, cfg: &ChainConfig, seed: u64, exec: &Exec) -> Result<Estimate> {
    let i = model.index_of(site)?;
    let series = run_chains(model, cfg, seed, exec, |s| {
        let var = s.cond_variance(i)?;
        let p = if model.is_pinnable(i) { s.pin_prob(i)? } else { 0.0 };
        Ok((1.0 - p) * var)
    })?;
    Ok(merge_batches(&series, cfg.batches, seed))
}

/// Variance of the field at the origin under the pinned measure.
pub fn variance_origin(region: &Region, eps: f64, cfg: &ChainConfig, seed: u64, exec: &Exec) -> Result<Estimate> {
    let model = PinModel::new(region, eps)?;
    variance_at(&model, &Site::ORIGIN, cfg, seed, exec)
}

/// `E(phi_x phi_y)` as the chain average of the covariance given the pins.
pub fn covariance(model: &PinModel, x: &Site, y: &Site, cfg: &ChainConfig, seed: u64, exec: &Exec) -> Result<Estimate> {
    if x == y {
        return variance_at(model, x, cfg, seed, exec);
    }
    let i = model.index_of(x)?;
    let j = model.index_of(y)?;
    let series = run_chains(model, cfg, seed, exec, |s| s.covariance_given_pins(i, j))?;
    Ok(merge_batches(&series, cfg.batches, seed))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PinStatistics {
    pub sites: Vec<Site>,
    /// `nu(site pinned)` per pinnable site.
    pub marginals: Vec<Estimate>,
    /// Empirical frequency of each pinned set (indexed by mask over the
    /// pinnable sites) when there are at most 16 of them.
    pub subset_freq: Option<Vec<f64>>,
    pub mean_pins: Estimate,
    pub samples: u64,
}

pub fn pin_statistics(model: &PinModel, cfg: &ChainConfig, seed: u64, exec: &Exec) -> Result<PinStatistics> {
    let np = model.pinnable_indices().len();
    if np > 64 {
        return Err(Error::TooLarge(format!("pin statistics over {np} pinnable sites (limit 64)")));
    }
    let masks = run_chains(model, cfg, seed, exec, |s| Ok(s.pinnable_mask()))?;
    let marginals = (0..np)
        .map(|b| {
            let series: Vec<Vec<f64>> =
                masks.iter().map(|m| m.iter().map(|&x| (x >> b & 1) as f64).collect()).collect();
            merge_batches(&series, cfg.batches, seed)
        })
        .collect();
    let counts: Vec<Vec<f64>> = masks.iter().map(|m| m.iter().map(|x| x.count_ones() as f64).collect()).collect();
    let samples: u64 = masks.iter().map(|m| m.len() as u64).sum();
    let subset_freq = (np <= 16).then(|| {
        let mut f = vec![0.0; 1 << np];
        for &m in masks.iter().flatten() {
            f[m as usize] += 1.0;
        }
        f.iter_mut().for_each(|v| *v /= samples as f64);
        f
    });
    Ok(PinStatistics {
        sites: model.pinnable_indices().iter().map(|&i| model.region().alive_sites()[i]).collect(),
        marginals,
        subset_freq,
        mean_pins: merge_batches(&counts, cfg.batches, seed),
        samples,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmptyProbability {
    /// `nu(A ∩ B = ∅)`.
    pub estimate: Estimate,
    pub set_size: usize,
    /// Smallest and largest conditional pin probability seen by the chains.
    pub p_minus: f64,
    pub p_plus: f64,
    /// `(1 - p_plus)^|B|` and `(1 - p_minus)^|B|`.
    pub lower_ref: f64,
    pub upper_ref: f64,
}

impl EmptyProbability {
    /// `p_minus / eps` and `p_plus / eps`.
    pub fn constants(&self, eps: f64) -> (f64, f64) {
        (self.p_minus / eps, self.p_plus / eps)
    }
}

/// Probability that no site of `set` is pinned, with Bernoulli reference
/// values from the observed range of conditional pin probabilities.
pub fn empty_probability(model: &PinModel, set: &[Site], cfg: &ChainConfig, seed: u64, exec: &Exec) -> Result<EmptyProbability> {
    let idx: Vec<usize> = set.iter().map(|s| model.index_of(s)).collect::<Result<_>>()?;
    if idx.is_empty() {
        return Ok(EmptyProbability {
            estimate: Estimate::exact(1.0),
            set_size: 0,
            p_minus: 0.0,
            p_plus: 0.0,
            lower_ref: 1.0,
            upper_ref: 1.0,
        });
    }
    cfg.validate()?;
    let burnin = cfg.burnin();
    let runs: Vec<Result<(Vec<f64>, f64, f64)>> = exec.replicas(seed, cfg.chains, |rng, _| {
        let mut s = PinSampler::new(model, rng.clone());
        let mut series = Vec::with_capacity(cfg.kept());
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for sweep in 0..cfg.sweeps {
            if sweep >= burnin {
                s.sweep_with(|_, p| {
                    lo = lo.min(p);
                    hi = hi.max(p);
                })?;
                let empty = idx.iter().all(|&i| !s.pinned()[i]);
                series.push(if empty { 1.0 } else { 0.0 });
            } else {
                s.sweep()?;
            }
        }
        Ok((series, lo, hi))
    });
    let mut series = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for r in runs {
        let (s, a, b) = r?;
        series.push(s);
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let k = idx.len() as i32;
    Ok(EmptyProbability {
        estimate: merge_batches(&series, cfg.batches, seed),
        set_size: idx.len(),
        p_minus: lo,
        p_plus: hi,
        lower_ref: (1.0 - hi).powi(k),
        upper_ref: (1.0 - lo).powi(k),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StabilityProbe {
    /// `nu(origin not pinned)`.
    Unpinned,
    /// Field variance at the origin.
    Variance,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityRow {
    pub radius: usize,
    pub sites: usize,
    pub estimate: Estimate,
}

/// The probe on the centred boxes of the given radii. Every box uses the
/// same seed, so equal boxes give equal values.
pub fn box_stability(
    kernel: &StepKernel,
    eps: f64,
    radii: &[usize],
    probe: StabilityProbe,
    cfg: &ChainConfig,
    seed: u64,
    exec: &Exec,
) -> Result<Vec<StabilityRow>> {
    if radii.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("radii must be nondecreasing".into()));
    }
    let stream = derive_seed(seed, 0x57ab);
    radii
        .iter()
        .map(|&radius| {
            let region = Region::centered(kernel, radius)?;
            let model = PinModel::new(&region, eps)?;
            let estimate = match probe {
                StabilityProbe::Variance => variance_at(&model, &Site::ORIGIN, cfg, stream, exec)?,
                StabilityProbe::Unpinned => {
                    let i = model.index_of(&Site::ORIGIN)?;
                    let series = run_chains(&model, cfg, stream, exec, |s| Ok(1.0 - s.pin_prob(i)?))?;
                    merge_batches(&series, cfg.batches, stream)
                }
            };
            Ok(StabilityRow { radius, sites: region.alive_count(), estimate })
        })
        .collect()
}
