//! Green functions of walks killed on a dead set, which are also the
//! covariances of the field with zero boundary values on that set.
//!
//! All solves run on the walk operator `I - P` restricted to alive sites; the
//! returned Green values are divided by `beta_eff` at the end, so they are
//! field covariances.

mod solver;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::{potential_kernel, return_probabilities, StepKernel};
use crate::lattice::{LatticeBox, Site};

pub use solver::{dense_solve, pcg, Csr, Solution};

/// Below this many alive sites solves use a dense Cholesky factorization.
pub const DENSE_LIMIT: usize = 2000;
/// Relative residual target of every solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    /// Dense below [`DENSE_LIMIT`] alive sites, conjugate gradients above.
    Auto,
    Dense,
    Iterative,
}

/// A finite box with a dead mask. Everything outside the box is dead.
#[derive(Clone, Debug)]
pub struct Region {
    kernel: StepKernel,
    bounds: LatticeBox,
    /// Box index to alive index, or `NONE`.
    index: Vec<u32>,
    alive: Vec<Site>,
}

impl Region {
    /// All sites of `bounds` alive.
    pub fn new(kernel: &StepKernel, bounds: LatticeBox) -> Result<Self> {
        if bounds.dim() != kernel.dim() {
            return Err(Error::Dimension { expected: kernel.dim(), got: bounds.dim() });
        }
        if bounds.len() >= NONE as usize {
            return Err(Error::TooLarge(format!("box with {} sites", bounds.len())));
        }
        let alive: Vec<Site> = bounds.sites().collect();
        let index = (0..alive.len() as u32).collect();
        Ok(Region { kernel: kernel.clone(), bounds, index, alive })
    }

    /// The box `{-radius..=radius}^d`.
    pub fn centered(kernel: &StepKernel, radius: usize) -> Result<Self> {
        Self::new(kernel, LatticeBox::centered(kernel.dim(), radius)?)
    }

    /// The same box with the sites of `dead` removed as well.
    pub fn with_dead(&self, dead: &[Site]) -> Result<Self> {
        let mut mask: Vec<bool> = self.index.iter().map(|&i| i != NONE).collect();
        for s in dead {
            s.check_dim(self.dim())?;
            if let Some(b) = self.bounds.index_of(s) {
                mask[b] = false;
            }
        }
        Ok(self.with_mask(&mask))
    }

    /// Alive exactly where `mask` (indexed like the box) is true.
    pub fn with_mask(&self, mask: &[bool]) -> Self {
        assert_eq!(mask.len(), self.bounds.len(), "mask length must match the box");
        let mut index = vec![NONE; mask.len()];
        let mut alive = Vec::new();
        for (b, &m) in mask.iter().enumerate() {
            if m {
                index[b] = alive.len() as u32;
                alive.push(self.bounds.site_at(b));
            }
        }
        Region { kernel: self.kernel.clone(), bounds: self.bounds.clone(), index, alive }
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn kernel(&self) -> &StepKernel {
        &self.kernel
    }

    pub fn bounds(&self) -> &LatticeBox {
        &self.bounds
    }

    pub fn beta_eff(&self) -> f64 {
        self.kernel.beta_eff()
    }

    pub fn alive_sites(&self) -> &[Site] {
        &self.alive
    }

    pub fn alive_count(&self) -> usize {
        self.alive.len()
    }

    pub fn alive_index(&self, s: &Site) -> Option<usize> {
        let b = self.bounds.index_of(s)?;
        let i = self.index[b];
        (i != NONE).then_some(i as usize)
    }

    pub fn is_alive(&self, s: &Site) -> bool {
        self.alive_index(s).is_some()
    }

    /// Alive mask indexed like the box.
    pub fn mask(&self) -> Vec<bool> {
        self.index.iter().map(|&i| i != NONE).collect()
    }

    /// `I - P` restricted to alive sites.
    pub fn operator(&self) -> Csr {
        let rows = self
            .alive
            .iter()
            .map(|s| {
                let mut row = Vec::with_capacity(self.kernel.support().len() + 1);
                row.push((self.alive_index(s).unwrap() as u32, 1.0));
                for (dx, w) in self.kernel.support() {
                    if let Some(j) = self.alive_index(&(*s + *dx)) {
                        row.push((j as u32, -w));
                    }
                }
                row
            })
            .collect();
        Csr::from_rows(rows)
    }

    /// Dense field covariance `(beta_eff (I - P))^{-1}` on the alive sites.
    pub fn covariance_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.alive_count();
        if n > 6000 {
            return Err(Error::TooLarge(format!("dense covariance on {n} sites")));
        }
        if n == 0 {
            return Ok(DMatrix::zeros(0, 0));
        }
        let chol = self.operator().to_dense().cholesky().ok_or(Error::Singular("killed operator"))?;
        Ok(chol.inverse() / self.beta_eff())
    }

    fn require_alive(&self, s: &Site) -> Result<usize> {
        s.check_dim(self.dim())?;
        self.alive_index(s).ok_or_else(|| Error::DeadSite(s.coords(self.dim()).to_vec()))
    }

    /// Solves `(I - P) g = b` on the alive sites.
    pub fn solve(&self, b: &[f64], kind: SolverKind) -> Result<Solution> {
        let a = self.operator();
        let dense = match kind {
            SolverKind::Auto => a.len() < DENSE_LIMIT,
            SolverKind::Dense => true,
            SolverKind::Iterative => false,
        };
        if dense {
            dense_solve(&a, b, RESIDUAL_TOL)
        } else {
            pcg(&a, b, RESIDUAL_TOL, 50 * a.len() + 1000)
        }
    }

    /// Column `G(., y) / beta_eff` over the alive sites, with its residual.
    pub fn green_column(&self, y: &Site, kind: SolverKind) -> Result<(Vec<f64>, f64)> {
        let j = self.require_alive(y)?;
        let mut b = vec![0.0; self.alive_count()];
        b[j] = 1.0;
        let sol = self.solve(&b, kind)?;
        let beta = self.beta_eff();
        Ok((sol.x.into_iter().map(|v| v / beta).collect(), sol.residual))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenProbe {
    pub x: Site,
    pub y: Site,
    /// Expected visits to `y` from `x` before death, divided by `beta_eff`.
    pub value: f64,
    pub residual: f64,
}

pub fn green_killed(r: &Region, x: &Site, y: &Site) -> Result<GreenProbe> {
    green_killed_with(r, x, y, SolverKind::Auto)
}

pub fn green_killed_with(r: &Region, x: &Site, y: &Site, kind: SolverKind) -> Result<GreenProbe> {
    let i = r.require_alive(x)?;
    let (col, residual) = r.green_column(y, kind)?;
    Ok(GreenProbe { x: *x, y: *y, value: col[i], residual })
}

/// `G_B(0, 0)` for the box `B = {-radius..=radius}^2`.
pub fn green_box_origin(k: &StepKernel, radius: usize) -> Result<GreenProbe> {
    if k.dim() != 2 {
        return Err(Error::UnsupportedDimension { op: "green_box_origin", required: 2 });
    }
    let r = Region::centered(k, radius)?;
    green_killed(&r, &Site::ORIGIN, &Site::ORIGIN)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObstacleGreen {
    /// `(a(x) + a(-x)) / beta_eff`.
    pub value: f64,
    /// Omitted tail of the potential-kernel partial sums, same units.
    pub tail: f64,
    pub quadrature_error: f64,
}

/// `G_{Z^2 \ {x}}(0, 0)` from the potential kernel, `a(x) + a(-x)`.
pub fn green_one_obstacle(k: &StepKernel, x: &Site, n_max: Option<u64>) -> Result<ObstacleGreen> {
    if k.dim() != 2 {
        return Err(Error::UnsupportedDimension { op: "green_one_obstacle", required: 2 });
    }
    if x.is_origin() {
        return Err(Error::InvalidArgument("the obstacle must not sit at the origin".into()));
    }
    // kernels are symmetric, so a(-x) = a(x)
    let a = potential_kernel(k, x, n_max)?;
    let beta = k.beta_eff();
    Ok(ObstacleGreen {
        value: 2.0 * a.value / beta,
        tail: 2.0 * a.tail / beta,
        quadrature_error: 2.0 * a.quadrature_error / beta,
    })
}

/// `G^n(0, 0) = sum_{m <= n} p_m(0)`, expected visits to the origin up to
/// time `n` (no temperature factor).
pub fn green_nstep(k: &StepKernel, n: usize) -> Result<f64> {
    Ok(return_probabilities(k, n)?.iter().sum())
}

/// Probability that the walk from `x` hits `target` before dying on the dead
/// set of `r`. Target sites count as hit even if they are dead in `r`.
pub fn hitting_prob(r: &Region, target: &[Site], x: &Site) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::InvalidArgument("empty target set".into()));
    }
    for t in target {
        t.check_dim(r.dim())?;
        if !r.bounds().contains(t) {
            return Err(Error::InvalidArgument(format!("target {:?} outside the box", t.coords(r.dim()))));
        }
    }
    if target.contains(x) {
        return Ok(1.0);
    }
    r.require_alive(x)?;
    let inner = r.with_dead(target)?;
    let b: Vec<f64> = inner
        .alive_sites()
        .iter()
        .map(|s| {
            r.kernel()
                .support()
                .iter()
                .filter(|(dx, _)| target.contains(&(*s + *dx)))
                .map(|(_, w)| w)
                .sum()
        })
        .collect();
    let sol = inner.solve(&b, SolverKind::Auto)?;
    let i = inner.alive_index(x).expect("x is alive and not a target");
    Ok(sol.x[i].clamp(0.0, 1.0))
}

/// Variance of the field at `x` given zero on every dead site.
pub fn conditional_variance(r: &Region, x: &Site) -> Result<f64> {
    Ok(green_killed(r, x, x)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_regions() {
        let k = StepKernel::simple(2);
        let r = Region::centered(&k, 0).unwrap();
        assert!((conditional_variance(&r, &Site::ORIGIN).unwrap() - 1.0).abs() < 1e-14);
        let lazy = StepKernel::lazy_simple(2);
        let r = Region::centered(&lazy, 0).unwrap();
        assert!((conditional_variance(&r, &Site::ORIGIN).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dead_sites_are_rejected() {
        let k = StepKernel::simple(2);
        let r = Region::centered(&k, 2).unwrap().with_dead(&[Site::ORIGIN]).unwrap();
        assert!(matches!(green_killed(&r, &Site::ORIGIN, &Site::unit(0)), Err(Error::DeadSite(_))));
        assert!(matches!(green_killed(&r, &Site::new(&[5, 0]), &Site::unit(0)), Err(Error::DeadSite(_))));
    }

    #[test]
    fn hitting_trivial_cases() {
        let k = StepKernel::simple(2);
        let r = Region::centered(&k, 3).unwrap();
        assert_eq!(hitting_prob(&r, &[Site::ORIGIN], &Site::ORIGIN).unwrap(), 1.0);
        // wall off x = (2, 2) from the origin
        let x = Site::new(&[2, 2]);
        let walls: Vec<Site> = [[1, 2], [3, 2], [2, 1], [2, 3]].iter().map(|c| Site::new(c)).collect();
        let r = r.with_dead(&walls).unwrap();
        assert_eq!(hitting_prob(&r, &[Site::ORIGIN], &x).unwrap(), 0.0);
    }

    #[test]
    fn nstep_small() {
        let k = StepKernel::simple(2);
        assert_eq!(green_nstep(&k, 0).unwrap(), 1.0);
        assert!((green_nstep(&k, 2).unwrap() - 1.25).abs() < 1e-15);
    }
}
