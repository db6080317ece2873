//! Symmetric finite-range step distributions on Z^d and single-walk
//! quantities derived from them.

mod exact;
mod file;
mod potential;
mod saddle;
mod walks;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{Site, MAX_DIM};

pub use exact::{
    first_return_pmf, pmf_at_sites, return_probabilities, step_pmf, step_pmf_n, tied_down_range_mean,
    StepPmf, MASS_TOLERANCE,
};
pub use file::KernelSpec;
pub use potential::{potential_kernel, PotentialKernel};
pub use saddle::{rate_function, saddle_pmf_approx, RateFunctionPoint};
pub use walks::{
    crossing_cells, range_tail, sample_path, simulate_range, RangeSamples, RangeTail, VisitedSet,
    WalkPath,
};

/// A symmetric, irreducible step distribution with finite support, together
/// with its covariance matrix and the temperature it is paired with.
#[derive(Clone, Debug)]
pub struct StepKernel {
    dim: usize,
    support: Vec<(Site, f64)>,
    cumulative: Vec<f64>,
    covariance: DMatrix<f64>,
    lazy: bool,
    periodic: bool,
    beta_input: f64,
    beta_eff: f64,
}

/// Builds a normalized kernel from raw `(vector, weight)` pairs.
///
/// `lazify` moves mass 1/2 to the origin and doubles the temperature
/// parameter; the field model is unchanged by this transform.
pub fn make_kernel(points: &[(Site, f64)], dim: usize, lazify: bool, beta: f64) -> Result<StepKernel> {
    StepKernel::build(points, dim, lazify, beta, false)
}

impl StepKernel {
    pub fn build(points: &[(Site, f64)], dim: usize, lazify: bool, beta: f64, symmetrize: bool) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidKernel(format!("dimension {dim} not in 1..={MAX_DIM}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidKernel(format!("beta must be positive, got {beta}")));
        }
        let mut merged: BTreeMap<Site, f64> = BTreeMap::new();
        for &(x, w) in points {
            x.check_dim(dim)?;
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidKernel(format!("weight {w} at {x:?} is not a nonnegative number")));
            }
            if w > 0.0 {
                *merged.entry(x).or_insert(0.0) += w;
            }
        }
        let total: f64 = merged.values().sum();
        if merged.is_empty() || total <= 0.0 {
            return Err(Error::InvalidKernel("total weight is zero".into()));
        }

        let mut sym: BTreeMap<Site, f64> = BTreeMap::new();
        for (&x, &w) in &merged {
            let wm = merged.get(&-x).copied().unwrap_or(0.0);
            if (w - wm).abs() > 1e-12 * w.max(wm) {
                if !symmetrize {
                    return Err(Error::NotSymmetric(x.coords(dim).to_vec()));
                }
                sym.insert(x, 0.5 * (w + wm));
                sym.insert(-x, 0.5 * (w + wm));
            } else {
                sym.insert(x, w);
            }
        }
        let total: f64 = sym.values().sum();
        let mut support: Vec<(Site, f64)> = sym.into_iter().map(|(x, w)| (x, w / total)).collect();

        let beta_eff = if lazify {
            for (x, w) in support.iter_mut() {
                *w *= 0.5;
                if x.is_origin() {
                    *w += 0.5;
                }
            }
            if !support.iter().any(|(x, _)| x.is_origin()) {
                support.push((Site::ORIGIN, 0.5));
                support.sort_by(|a, b| a.0.cmp(&b.0));
            }
            2.0 * beta
        } else {
            beta
        };

        if !generates_lattice(&support, dim) {
            return Err(Error::NotIrreducible(dim));
        }
        let periodic = is_bipartite(&support, dim);

        let mut covariance = DMatrix::zeros(dim, dim);
        for (x, w) in &support {
            for i in 0..dim {
                for j in 0..dim {
                    covariance[(i, j)] += w * x.0[i] as f64 * x.0[j] as f64;
                }
            }
        }
        if covariance.clone().cholesky().is_none() {
            return Err(Error::NotIrreducible(dim));
        }

        let mut acc = 0.0;
        let cumulative = support
            .iter()
            .map(|(_, w)| {
                acc += w;
                acc
            })
            .collect();

        Ok(StepKernel {
            dim,
            support,
            cumulative,
            covariance,
            lazy: lazify,
            periodic,
            beta_input: beta,
            beta_eff,
        })
    }

    /// Nearest-neighbour simple random walk on Z^d.
    pub fn simple(dim: usize) -> Self {
        Self::simple_with(dim, false, 1.0)
    }

    /// Lazy simple random walk (`p(0) = 1/2`, `beta_eff = 2`).
    pub fn lazy_simple(dim: usize) -> Self {
        Self::simple_with(dim, true, 1.0)
    }

    pub fn simple_with(dim: usize, lazify: bool, beta: f64) -> Self {
        let pts: Vec<(Site, f64)> = (0..dim)
            .flat_map(|i| [(Site::unit(i), 1.0), (-Site::unit(i), 1.0)])
            .collect();
        make_kernel(&pts, dim, lazify, beta).expect("simple random walk is a valid kernel")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Support points with their probabilities, in lexicographic order.
    pub fn support(&self) -> &[(Site, f64)] {
        &self.support
    }

    pub fn prob(&self, x: &Site) -> f64 {
        self.support.iter().find(|(y, _)| y == x).map_or(0.0, |(_, w)| *w)
    }

    pub fn holding_prob(&self) -> f64 {
        self.prob(&Site::ORIGIN)
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn det_covariance(&self) -> f64 {
        self.covariance.determinant()
    }

    pub fn is_lazy(&self) -> bool {
        self.lazy
    }

    /// True when the walk only returns to its start at even times.
    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn beta_input(&self) -> f64 {
        self.beta_input
    }

    pub fn beta_eff(&self) -> f64 {
        self.beta_eff
    }

    /// Largest sup-norm of a support vector.
    pub fn range_radius(&self) -> usize {
        self.support.iter().map(|(x, _)| x.sup_norm() as usize).max().unwrap_or(0)
    }

    /// Largest eigenvalue of the covariance matrix.
    pub fn max_variance(&self) -> f64 {
        self.covariance.symmetric_eigenvalues().max()
    }

    /// Draws one increment.
    #[inline]
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> Site {
        let u: f64 = rng.random();
        let i = self.cumulative.iter().position(|&c| u < c).unwrap_or(self.support.len() - 1);
        self.support[i].0
    }

    /// Characteristic function `sum_x p(x) cos(theta . x)` (real by symmetry).
    pub fn characteristic(&self, theta: &[f64]) -> f64 {
        self.support
            .iter()
            .map(|(x, w)| {
                let dot: f64 = (0..self.dim).map(|i| theta[i] * x.0[i] as f64).sum();
                w * dot.cos()
            })
            .sum()
    }
}

/// Whether the support vectors generate Z^d as a group: integer row reduction
/// to Hermite form, then check that the pivots are all units.
fn generates_lattice(support: &[(Site, f64)], dim: usize) -> bool {
    let mut rows: Vec<Vec<i64>> = support
        .iter()
        .filter(|(x, _)| !x.is_origin())
        .map(|(x, _)| x.coords(dim).iter().map(|&c| c as i64).collect())
        .collect();
    let mut pivot_row = 0;
    for col in 0..dim {
        // Euclid on column `col` over rows pivot_row..
        loop {
            let nonzero: Vec<usize> = (pivot_row..rows.len()).filter(|&r| rows[r][col] != 0).collect();
            if nonzero.is_empty() {
                return false;
            }
            let best = *nonzero.iter().min_by_key(|&&r| rows[r][col].abs()).unwrap();
            rows.swap(pivot_row, best);
            let mut done = true;
            for r in pivot_row + 1..rows.len() {
                if rows[r][col] != 0 {
                    let q = rows[r][col] / rows[pivot_row][col];
                    for c in 0..dim {
                        rows[r][c] -= q * rows[pivot_row][c];
                    }
                    if rows[r][col] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        if rows[pivot_row][col].abs() != 1 {
            return false;
        }
        pivot_row += 1;
    }
    true
}

/// A symmetric walk has period 2 exactly when some parity character
/// `x -> a.x mod 2` is odd on every support vector.
fn is_bipartite(support: &[(Site, f64)], dim: usize) -> bool {
    (1u32..(1 << dim)).any(|mask| {
        support.iter().all(|(x, _)| {
            let s: i64 = (0..dim).filter(|i| mask >> i & 1 == 1).map(|i| x.0[i] as i64).sum();
            s.rem_euclid(2) == 1
        })
    })
}
