//! Simulated walks: paths, range, range tails and crossing-cell counts.

use rand::Rng;
use rustc_hash::FxHashSet;

use super::StepKernel;
use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::mc::{zero_count_upper_bound, Accum, Estimate, Exec};

/// Set of visited sites keyed by [`Site::key`].
#[derive(Clone, Debug, Default)]
pub struct VisitedSet {
    keys: FxHashSet<u64>,
}

impl VisitedSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        VisitedSet { keys: FxHashSet::with_capacity_and_hasher(n, Default::default()) }
    }

    /// Returns true if the site was not visited before.
    #[inline]
    pub fn insert(&mut self, s: &Site) -> bool {
        self.keys.insert(s.key())
    }

    #[inline]
    pub fn contains(&self, s: &Site) -> bool {
        self.keys.contains(&s.key())
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn clear(&mut self) {
        self.keys.clear();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkPath {
    pub sites: Vec<Site>,
    /// Number of distinct sites among `sites`.
    pub range: usize,
}

impl WalkPath {
    pub fn steps(&self) -> usize {
        self.sites.len() - 1
    }

    pub fn end(&self) -> Site {
        *self.sites.last().expect("paths are never empty")
    }
}

/// `n` steps from the origin.
pub fn sample_path<R: Rng + ?Sized>(k: &StepKernel, n: usize, rng: &mut R) -> WalkPath {
    let mut sites = Vec::with_capacity(n + 1);
    let mut visited = VisitedSet::with_capacity(n + 1);
    let mut x = Site::ORIGIN;
    sites.push(x);
    visited.insert(&x);
    for _ in 0..n {
        x = x + k.sample_step(rng);
        sites.push(x);
        visited.insert(&x);
    }
    WalkPath { sites, range: visited.len() }
}

/// Range of an `n`-step walk, stopping early once it exceeds `cap`.
fn walk_range<R: Rng + ?Sized>(k: &StepKernel, n: usize, cap: usize, visited: &mut VisitedSet, rng: &mut R) -> usize {
    visited.clear();
    let mut x = Site::ORIGIN;
    visited.insert(&x);
    for _ in 0..n {
        x = x + k.sample_step(rng);
        if visited.insert(&x) && visited.len() > cap {
            break;
        }
    }
    visited.len()
}

fn check_reach(k: &StepKernel, n: usize) -> Result<()> {
    // Site keys hold 16 bits per coordinate
    if n.saturating_mul(k.range_radius()) >= 1 << 15 {
        return Err(Error::TooLarge(format!("walk of {n} steps exceeds the coordinate range")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RangeSamples {
    /// `|X_[0,n]|` per replica, in replica order.
    pub samples: Vec<u64>,
    pub estimate: Estimate,
}

pub fn simulate_range(k: &StepKernel, n: usize, reps: usize, seed: u64, exec: &Exec) -> Result<RangeSamples> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    check_reach(k, n)?;
    let samples: Vec<u64> = exec.replicas(seed, reps, |rng, _| {
        let mut visited = VisitedSet::with_capacity(n + 1);
        walk_range(k, n, usize::MAX, &mut visited, rng) as u64
    });
    let acc = Accum::from_iter(samples.iter().map(|&s| s as f64));
    Ok(RangeSamples { samples, estimate: Estimate::from_accum(&acc, seed) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RangeTail {
    /// `kappa n / log n`.
    pub threshold: f64,
    pub hits: u64,
    pub reps: u64,
    pub estimate: Estimate,
    /// One-sided 95% upper bound on the probability when `hits == 0`.
    pub upper_bound_95: Option<f64>,
}

/// Frequency of `{|X_[0,n]| <= kappa n / log n}`.
pub fn range_tail(k: &StepKernel, n: usize, kappa: f64, reps: usize, seed: u64, exec: &Exec) -> Result<RangeTail> {
    if n < 3 {
        return Err(Error::InvalidArgument("range_tail needs n >= 3".into()));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
    }
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    check_reach(k, n)?;
    let threshold = kappa * n as f64 / (n as f64).ln();
    let hits = if threshold >= (n + 1) as f64 {
        reps as u64
    } else if threshold < 1.0 {
        0
    } else {
        let cap = threshold.floor() as usize;
        let flags = exec.replicas(seed, reps, |rng, _| {
            let mut visited = VisitedSet::with_capacity(cap + 2);
            walk_range(k, n, cap, &mut visited, rng) <= cap
        });
        flags.iter().filter(|&&h| h).count() as u64
    };
    let mut acc = Accum::default();
    acc.count = reps as u64;
    acc.sum = hits as f64;
    acc.sum_sq = hits as f64;
    let upper = (hits == 0).then(|| zero_count_upper_bound(reps as u64, 0.95));
    Ok(RangeTail { threshold, hits, reps: reps as u64, estimate: Estimate::from_accum(&acc, seed), upper_bound_95: upper })
}

/// Number of side-`cell` cells visited before the walk first leaves the box
/// `{-n cell + 1, .., n cell}^d`, one sample per replica.
pub fn crossing_cells(k: &StepKernel, n: usize, cell: usize, reps: usize, seed: u64, exec: &Exec) -> Result<Vec<u64>> {
    if n == 0 || cell == 0 {
        return Err(Error::InvalidArgument("crossing_cells needs n, K >= 1".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    let half = n.checked_mul(cell).filter(|&h| h < 1 << 14).ok_or_else(|| {
        Error::TooLarge(format!("box of half-side {n} x {cell} exceeds the coordinate range"))
    })? as i32;
    let d = k.dim();
    let kk = cell as i32;
    let inside = |x: &Site| (0..d).all(|i| x.0[i] > -half && x.0[i] <= half);
    let cell_of = |x: &Site| {
        let mut c = Site::ORIGIN;
        for i in 0..d {
            c.0[i] = (x.0[i] - 1).div_euclid(kk);
        }
        c
    };
    Ok(exec.replicas(seed, reps, |rng, _| {
        let mut cells = VisitedSet::new();
        let mut x = Site::ORIGIN;
        cells.insert(&cell_of(&x));
        loop {
            x = x + k.sample_step(rng);
            if !inside(&x) {
                break;
            }
            cells.insert(&cell_of(&x));
        }
        cells.len() as u64
    }))
}
