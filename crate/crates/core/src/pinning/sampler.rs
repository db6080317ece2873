//! Systematic-scan heat bath for the pinned set.
//!
//! Updating site `x` needs `Var(phi_x | phi = 0 on A \ {x})`. In the dense
//! engine this comes from the pin-free covariance `C` and the inverse
//! `M = C_AA^{-1}`, kept current under single pin insertions and removals:
//!
//! ```text
//! x in A:      Var = 1 / M_xx
//! x not in A:  Var = C_xx - C_xA M C_Ax
//! ```
//!
//! `M` is rebuilt from a fresh factorization once per sweep. The windowed
//! engine instead solves on the sub-box of radius `W` around `x`, and is
//! audited against full-region solves.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::exact::pin_prob;
use super::PinModel;
use crate::error::{Error, Result};
use crate::green::{green_killed, green_killed_with, Region, SolverKind};
use crate::lattice::{LatticeBox, Site};
use crate::mc::McRng;

/// Largest relative error the windowed engine may show on its audit flips.
pub const AUDIT_TOLERANCE: f64 = 0.01;
/// Number of audit flips per windowed run.
pub const AUDIT_FLIPS: usize = 10;

const NOT_PINNED: usize = usize::MAX;

pub struct PinSampler<'m> {
    model: &'m PinModel,
    pinned: Vec<bool>,
    /// Pinned site indices, in the row order of `minv`.
    pins: Vec<usize>,
    /// Position of each site in `pins`, or `NOT_PINNED`.
    pos: Vec<usize>,
    minv: DMatrix<f64>,
    rng: McRng,
    sweeps: u64,
}

impl<'m> PinSampler<'m> {
    /// Starts from the empty pin set.
    pub fn new(model: &'m PinModel, rng: McRng) -> Self {
        let n = model.len();
        PinSampler {
            model,
            pinned: vec![false; n],
            pins: Vec::new(),
            pos: vec![NOT_PINNED; n],
            minv: DMatrix::zeros(0, 0),
            rng,
            sweeps: 0,
        }
    }

    pub fn model(&self) -> &PinModel {
        self.model
    }

    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    pub fn pin_count(&self) -> usize {
        self.pinned.iter().filter(|&&p| p).count()
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn rng_mut(&mut self) -> &mut McRng {
        &mut self.rng
    }

    /// Pinned set as a bit mask over the pinnable sites (at most 64 of them).
    pub fn pinnable_mask(&self) -> u64 {
        self.model
            .pinnable_indices()
            .iter()
            .enumerate()
            .filter(|(_, &i)| self.pinned[i])
            .fold(0u64, |m, (b, _)| m | 1 << b)
    }

    /// `Var(phi_i | phi = 0 on A \ {i})`.
    pub fn cond_variance(&self, i: usize) -> Result<f64> {
        match self.model.cov.as_ref() {
            Some(c) => Ok(self.dense_cond_variance(c, i)),
            None => self.windowed_cond_variance(i),
        }
    }

    fn dense_cond_variance(&self, c: &DMatrix<f64>, i: usize) -> f64 {
        let p = self.pos[i];
        if p != NOT_PINNED {
            return 1.0 / self.minv[(p, p)];
        }
        if self.pins.is_empty() {
            return c[(i, i)];
        }
        let b = DVector::from_iterator(self.pins.len(), self.pins.iter().map(|&a| c[(a, i)]));
        c[(i, i)] - b.dot(&(&self.minv * &b))
    }

    fn windowed_cond_variance(&self, i: usize) -> Result<f64> {
        let w = self.model.window_radius.expect("windowed model") as i32;
        let region = &self.model.region;
        let s = region.alive_sites()[i];
        let d = region.dim();
        let (blo, bhi) = (region.bounds().lo(), region.bounds().hi());
        let mut lo = s;
        let mut hi = s;
        for a in 0..d {
            lo.0[a] = (s.0[a] - w).max(blo.0[a]);
            hi.0[a] = (s.0[a] + w).min(bhi.0[a]);
        }
        let sub = Region::new(region.kernel(), LatticeBox::new(d, lo, hi)?)?;
        let mask: Vec<bool> = sub
            .bounds()
            .sites()
            .map(|t| region.alive_index(&t).is_some_and(|j| j == i || !self.pinned[j]))
            .collect();
        let sub = sub.with_mask(&mask);
        Ok(green_killed_with(&sub, &s, &s, SolverKind::Iterative)?.value)
    }

    /// Same quantity from a solve on the whole region.
    pub fn full_cond_variance(&self, i: usize) -> Result<f64> {
        let region = &self.model.region;
        let dead: Vec<Site> = (0..self.pinned.len())
            .filter(|&j| j != i && self.pinned[j])
            .map(|j| region.alive_sites()[j])
            .collect();
        let r = region.with_dead(&dead)?;
        let s = region.alive_sites()[i];
        Ok(green_killed(&r, &s, &s)?.value)
    }

    /// Probability that site `i` is pinned given the other pins.
    pub fn pin_prob(&self, i: usize) -> Result<f64> {
        Ok(pin_prob(self.model.eps, self.cond_variance(i)?))
    }

    /// `Cov(phi_i, phi_j | phi = 0 on A)`. Dense engine only.
    pub fn covariance_given_pins(&self, i: usize, j: usize) -> Result<f64> {
        let c = self
            .model
            .cov
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("pinned covariances need the dense engine".into()))?;
        if self.pinned[i] || self.pinned[j] {
            return Ok(0.0);
        }
        if self.pins.is_empty() {
            return Ok(c[(i, j)]);
        }
        let bi = DVector::from_iterator(self.pins.len(), self.pins.iter().map(|&a| c[(a, i)]));
        let bj = DVector::from_iterator(self.pins.len(), self.pins.iter().map(|&a| c[(a, j)]));
        Ok(c[(i, j)] - bi.dot(&(&self.minv * &bj)))
    }

    fn add_pin(&mut self, c: &DMatrix<f64>, i: usize) {
        let k = self.pins.len();
        let b = DVector::from_iterator(k, self.pins.iter().map(|&a| c[(a, i)]));
        let u = &self.minv * &b;
        let s = c[(i, i)] - b.dot(&u);
        let mut m = DMatrix::zeros(k + 1, k + 1);
        for r in 0..k {
            for q in 0..k {
                m[(r, q)] = self.minv[(r, q)] + u[r] * u[q] / s;
            }
            m[(r, k)] = -u[r] / s;
            m[(k, r)] = -u[r] / s;
        }
        m[(k, k)] = 1.0 / s;
        self.minv = m;
        self.pos[i] = k;
        self.pins.push(i);
    }

    fn remove_pin(&mut self, i: usize) {
        let p = self.pos[i];
        let last = self.pins.len() - 1;
        if p != last {
            self.minv.swap_rows(p, last);
            self.minv.swap_columns(p, last);
            self.pins.swap(p, last);
            self.pos[self.pins[p]] = p;
        }
        let d = self.minv[(last, last)];
        let col: Vec<f64> = (0..last).map(|r| self.minv[(r, last)]).collect();
        let mut m = DMatrix::zeros(last, last);
        for r in 0..last {
            for q in 0..last {
                m[(r, q)] = self.minv[(r, q)] - col[r] * col[q] / d;
            }
        }
        self.minv = m;
        self.pins.pop();
        self.pos[i] = NOT_PINNED;
    }

    /// Rebuilds `M = C_AA^{-1}` from scratch to stop round-off drift.
    fn refresh(&mut self) -> Result<()> {
        let Some(c) = self.model.cov.as_ref() else { return Ok(()) };
        let k = self.pins.len();
        if k == 0 {
            return Ok(());
        }
        let sub = DMatrix::from_fn(k, k, |r, q| c[(self.pins[r], self.pins[q])]);
        self.minv = sub.cholesky().ok_or(Error::Singular("pinned covariance block"))?.inverse();
        Ok(())
    }

    /// One lexicographic heat-bath sweep.
    pub fn sweep(&mut self) -> Result<()> {
        self.sweep_with(|_, _| {})
    }

    /// One sweep, calling `observe(site, pin probability)` at every update.
    pub fn sweep_with<F: FnMut(usize, f64)>(&mut self, mut observe: F) -> Result<()> {
        let model = self.model;
        for &i in model.pinnable_indices() {
            let p = self.pin_prob(i)?;
            observe(i, p);
            let want = self.rng.random::<f64>() < p;
            if want != self.pinned[i] {
                self.pinned[i] = want;
                if let Some(c) = model.cov.as_ref() {
                    if want {
                        self.add_pin(c, i);
                    } else {
                        self.remove_pin(i);
                    }
                }
            }
        }
        self.refresh()?;
        self.sweeps += 1;
        Ok(())
    }

    /// Compares the windowed engine with full solves at `AUDIT_FLIPS` random
    /// sites of the current configuration. Returns the largest relative error.
    pub fn audit(&self, rng: &mut McRng) -> Result<f64> {
        let n = self.model.pinnable_indices().len();
        let mut worst: f64 = 0.0;
        for _ in 0..AUDIT_FLIPS {
            let i = self.model.pinnable_indices()[rng.random_range(0..n)];
            let approx = self.cond_variance(i)?;
            let full = self.full_cond_variance(i)?;
            worst = worst.max((approx - full).abs() / full);
        }
        if worst > AUDIT_TOLERANCE {
            return Err(Error::AuditFailed { max_rel_err: worst, tolerance: AUDIT_TOLERANCE });
        }
        Ok(worst)
    }
}
