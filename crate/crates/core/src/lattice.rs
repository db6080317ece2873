//! Lattice points, boxes and dense tables indexed by lattice sites.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use crate::error::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 4;

/// A point of Z^d for d <= [`MAX_DIM`]. Unused trailing coordinates are zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Site(pub [i32; MAX_DIM]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    pub fn new(coords: &[i32]) -> Self {
        assert!(coords.len() <= MAX_DIM, "dimension {} > {MAX_DIM}", coords.len());
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    /// The unit vector along `axis`.
    pub fn unit(axis: usize) -> Self {
        let mut c = [0; MAX_DIM];
        c[axis] = 1;
        Site(c)
    }

    pub fn coords(&self, d: usize) -> &[i32] {
        &self.0[..d]
    }

    pub fn is_origin(&self) -> bool {
        self.0 == [0; MAX_DIM]
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn sup_norm(&self) -> i32 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    /// Injective 64-bit key for hashing, valid while every coordinate lies in
    /// [-2^15, 2^15).
    #[inline]
    pub fn key(&self) -> u64 {
        let mut k = 0u64;
        for &c in &self.0 {
            k = (k << 16) | ((c + (1 << 15)) as u64 & 0xffff);
        }
        k
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if self.0[d..].iter().any(|&c| c != 0) {
            return Err(Error::Dimension {
                expected: d,
                got: MAX_DIM - self.0.iter().rev().take_while(|&&c| c == 0).count(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let last = self.0.iter().rposition(|&c| c != 0).map_or(1, |i| i + 1);
        f.debug_list().entries(&self.0[..last]).finish()
    }
}

impl Add for Site {
    type Output = Site;
    #[inline]
    fn add(self, o: Site) -> Site {
        let mut c = self.0;
        for i in 0..MAX_DIM {
            c[i] += o.0[i];
        }
        Site(c)
    }
}

impl Sub for Site {
    type Output = Site;
    #[inline]
    fn sub(self, o: Site) -> Site {
        let mut c = self.0;
        for i in 0..MAX_DIM {
            c[i] -= o.0[i];
        }
        Site(c)
    }
}

impl Neg for Site {
    type Output = Site;
    #[inline]
    fn neg(self) -> Site {
        let mut c = self.0;
        for v in c.iter_mut() {
            *v = -*v;
        }
        Site(c)
    }
}

/// Axis-aligned box `{lo..=hi}^d`, enumerated in lexicographic order (last
/// coordinate fastest).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeBox {
    dim: usize,
    lo: Site,
    hi: Site,
}

impl LatticeBox {
    pub fn new(dim: usize, lo: Site, hi: Site) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidArgument(format!("dimension {dim} not in 1..={MAX_DIM}")));
        }
        for i in 0..dim {
            if lo.0[i] > hi.0[i] {
                return Err(Error::InvalidArgument(format!("empty box along axis {i}")));
            }
        }
        let mut lo = lo;
        let mut hi = hi;
        for i in dim..MAX_DIM {
            lo.0[i] = 0;
            hi.0[i] = 0;
        }
        Ok(LatticeBox { dim, lo, hi })
    }

    /// The box `{-r..=r}^d` of side `2r+1` centred at the origin.
    pub fn centered(dim: usize, radius: usize) -> Result<Self> {
        let r = radius as i32;
        let lo = Site::new(&vec![-r; dim]);
        let hi = Site::new(&vec![r; dim]);
        Self::new(dim, lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> Site {
        self.lo
    }

    pub fn hi(&self) -> Site {
        self.hi
    }

    pub fn side(&self, axis: usize) -> usize {
        (self.hi.0[axis] - self.lo.0[axis] + 1) as usize
    }

    pub fn len(&self) -> usize {
        (0..self.dim).map(|i| self.side(i)).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, s: &Site) -> bool {
        (0..MAX_DIM).all(|i| s.0[i] >= self.lo.0[i] && s.0[i] <= self.hi.0[i])
    }

    /// Lexicographic position of `s`, or `None` outside the box.
    #[inline]
    pub fn index_of(&self, s: &Site) -> Option<usize> {
        let mut idx = 0usize;
        for i in 0..MAX_DIM {
            let c = s.0[i];
            if c < self.lo.0[i] || c > self.hi.0[i] {
                return None;
            }
            if i < self.dim {
                idx = idx * self.side(i) + (c - self.lo.0[i]) as usize;
            }
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let mut c = [0; MAX_DIM];
        for i in (0..self.dim).rev() {
            let s = self.side(i);
            c[i] = self.lo.0[i] + (idx % s) as i32;
            idx /= s;
        }
        Site(c)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |i| self.site_at(i))
    }
}

/// Dense table of reals on the cube `{-radius..=radius}^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeTable {
    cube: LatticeBox,
    radius: usize,
    data: Vec<f64>,
}

impl LatticeTable {
    pub fn zeros(dim: usize, radius: usize) -> Result<Self> {
        let cube = LatticeBox::centered(dim, radius)?;
        let n = cube.len();
        Ok(LatticeTable { cube, radius, data: vec![0.0; n] })
    }

    pub fn dim(&self) -> usize {
        self.cube.dim()
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn cube(&self) -> &LatticeBox {
        &self.cube
    }

    /// Value at `s`; zero outside the window.
    pub fn get(&self, s: &Site) -> f64 {
        self.cube.index_of(s).map_or(0.0, |i| self.data[i])
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// `(site, value)` pairs in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        self.data.iter().enumerate().map(move |(i, &v)| (self.cube.site_at(i), v))
    }
}
