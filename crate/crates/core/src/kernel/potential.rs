//! Potential kernel of a planar walk, `a(x) = sum_n (p_n(0) - p_n(x))`.
//!
//! Partial sums are evaluated through their Fourier representation
//!
//! ```text
//! a_N(x) = (2 pi)^-2  \int_{[-pi,pi]^2} (1 - cos(theta . x)) * sum_{n<=N} phi(theta)^n  d theta
//! ```
//!
//! with an adaptive tensor Gauss-Kronrod (7/15) cubature; the geometric sum is
//! evaluated in closed form, so the cost does not grow with `N`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use super::StepKernel;
use crate::error::{Error, Result};
use crate::lattice::Site;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15 Kronrod nodes on [-1, 1] with Kronrod and embedded Gauss weights.
fn rule() -> [(f64, f64, f64); 15] {
    let mut out = [(0.0, 0.0, 0.0); 15];
    for i in 0..7 {
        let wg = if i % 2 == 1 { WG[i / 2] } else { 0.0 };
        out[i] = (-XGK[i], WGK[i], wg);
        out[14 - i] = (XGK[i], WGK[i], wg);
    }
    out[7] = (0.0, WGK[7], WG[3]);
    out
}

#[derive(Debug)]
struct Cell {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    value: f64,
    error: f64,
    /// Touches a point where the integrand is not smooth at the cell scale.
    forced: bool,
}

impl PartialEq for Cell {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Cell {
    fn cmp(&self, o: &Self) -> Ordering {
        self.forced.cmp(&o.forced).then(self.error.total_cmp(&o.error))
    }
}

fn integrate_cell<F: Fn(f64, f64) -> f64>(f: &F, nodes: &[(f64, f64, f64); 15], x0: f64, x1: f64, y0: f64, y1: f64) -> Cell {
    let (cx, hx) = (0.5 * (x0 + x1), 0.5 * (x1 - x0));
    let (cy, hy) = (0.5 * (y0 + y1), 0.5 * (y1 - y0));
    let mut k = 0.0;
    let mut g = 0.0;
    for &(u, wku, wgu) in nodes {
        let x = cx + hx * u;
        for &(v, wkv, wgv) in nodes {
            let fv = f(x, cy + hy * v);
            k += wku * wkv * fv;
            g += wgu * wgv * fv;
        }
    }
    let area = hx * hy;
    Cell { x0, x1, y0, y1, value: k * area, error: ((k - g) * area).abs(), forced: false }
}

/// Adaptive cubature of `f` over a rectangle. Returns `(value, error estimate)`.
///
/// Cells containing one of the `special` points are split until their sides
/// are below `h_min`, whatever their error estimate says.
pub(crate) fn cubature_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    special: &[(f64, f64)],
    h_min: f64,
    abs_tol: f64,
    max_cells: usize,
) -> (f64, f64) {
    let nodes = rule();
    let make = |ax: f64, bx: f64, ay: f64, by: f64| {
        let mut c = integrate_cell(&f, &nodes, ax, bx, ay, by);
        c.forced = (bx - ax).max(by - ay) > h_min
            && special.iter().any(|&(px, py)| px >= ax && px <= bx && py >= ay && py <= by);
        c
    };
    let mut heap = BinaryHeap::new();
    // start from a 4x4 grid so that lattice points of pi Z^2 sit on cell corners
    let n0 = 4;
    for i in 0..n0 {
        for j in 0..n0 {
            let ax = x0 + (x1 - x0) * i as f64 / n0 as f64;
            let bx = x0 + (x1 - x0) * (i + 1) as f64 / n0 as f64;
            let ay = y0 + (y1 - y0) * j as f64 / n0 as f64;
            let by = y0 + (y1 - y0) * (j + 1) as f64 / n0 as f64;
            heap.push(make(ax, bx, ay, by));
        }
    }
    let mut cells = heap.len();
    loop {
        let forced = heap.peek().is_some_and(|c| c.forced);
        let err: f64 = heap.iter().map(|c| c.error).sum();
        if (!forced && err <= abs_tol) || cells >= max_cells {
            let value = heap.iter().map(|c| c.value).sum();
            return (value, err);
        }
        // refine a batch of the worst cells before re-summing
        for _ in 0..16 {
            let Some(c) = heap.pop() else { break };
            let mx = 0.5 * (c.x0 + c.x1);
            let my = 0.5 * (c.y0 + c.y1);
            heap.push(make(c.x0, mx, c.y0, my));
            heap.push(make(mx, c.x1, c.y0, my));
            heap.push(make(c.x0, mx, my, c.y1));
            heap.push(make(mx, c.x1, my, c.y1));
            cells += 3;
        }
    }
}

/// `sum_{n=0}^{N} phi^n` for `|phi| <= 1`, stable as `phi -> 1`; `None` means
/// the full series `1 / (1 - phi)`.
fn geometric_sum(phi: f64, n_max: Option<u64>) -> f64 {
    let u = 1.0 - phi;
    match n_max {
        None => {
            if u <= 0.0 {
                0.0
            } else {
                1.0 / u
            }
        }
        Some(n) => {
            let terms = (n + 1) as f64;
            if u <= 0.0 {
                return terms;
            }
            if phi > 0.0 {
                -(terms * (-u).ln_1p()).exp_m1() / u
            } else {
                let mag = phi.abs().powf(terms);
                let pw = if (n + 1) % 2 == 0 { mag } else { -mag };
                (1.0 - pw) / u
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialKernel {
    /// `sum_{n <= n_max} (p_n(0) - p_n(x))`, or the full sum when `n_max` is `None`.
    pub value: f64,
    /// Size of the omitted tail `a(x) - a_N(x)` (zero for the full sum).
    pub tail: f64,
    /// Cubature error estimate on `value`.
    pub quadrature_error: f64,
    pub n_max: Option<u64>,
}

const ABS_TOL: f64 = 1e-11;
const MAX_CELLS: usize = 400_000;

fn fourier_partial_sum(k: &StepKernel, x: &Site, n_max: Option<u64>) -> (f64, f64) {
    let (x1, x2) = (x.0[0] as f64, x.0[1] as f64);
    let f = |t1: f64, t2: f64| {
        let phi = k.characteristic(&[t1, t2]);
        (1.0 - (t1 * x1 + t2 * x2).cos()) * geometric_sum(phi, n_max)
    };
    // |phi| = 1 only on pi Z^2; near those points phi^n varies on the scale n^{-1/2}
    let special: Vec<(f64, f64)> = [-PI, 0.0, PI]
        .iter()
        .flat_map(|&a| [-PI, 0.0, PI].map(|b| (a, b)))
        .filter(|&(a, b)| k.characteristic(&[a, b]).abs() > 1.0 - 1e-12)
        .collect();
    let h_min = match n_max {
        Some(n) => 0.05 / ((n + 1) as f64).sqrt(),
        None => 1e-6,
    };
    let (v, e) = cubature_2d(f, (-PI, PI), (-PI, PI), &special, h_min, ABS_TOL * 4.0 * PI * PI, MAX_CELLS);
    let norm = 1.0 / (4.0 * PI * PI);
    (v * norm, e * norm)
}

/// Potential kernel `a(x)` of a planar kernel; partial sum up to `n_max`
/// steps, or the full series when `n_max` is `None`.
pub fn potential_kernel(k: &StepKernel, x: &Site, n_max: Option<u64>) -> Result<PotentialKernel> {
    if k.dim() != 2 {
        return Err(Error::UnsupportedDimension { op: "potential_kernel", required: 2 });
    }
    x.check_dim(2)?;
    if x.is_origin() {
        return Ok(PotentialKernel { value: 0.0, tail: 0.0, quadrature_error: 0.0, n_max });
    }
    let (value, err) = fourier_partial_sum(k, x, n_max);
    let (tail, err) = match n_max {
        None => (0.0, err),
        Some(_) => {
            let (full, e_full) = fourier_partial_sum(k, x, None);
            (full - value, err + e_full)
        }
    };
    Ok(PotentialKernel { value, tail, quadrature_error: err, n_max })
}
