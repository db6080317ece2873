//! Exact n-step laws by dynamic-programming convolution on a finite window,
//! and the renewal quantities built from them.

use super::StepKernel;
use crate::error::{Error, Result};
use crate::lattice::{LatticeTable, Site, MAX_DIM};

/// Largest mass a DP window may drop before it is considered too small.
pub const MASS_TOLERANCE: f64 = 1e-12;

const MAX_CELLS: usize = 60_000_000;

/// The law of `X_n` on a window, and the mass that fell outside it.
#[derive(Clone, Debug)]
pub struct StepPmf {
    pub n: usize,
    pub table: LatticeTable,
    pub dropped: f64,
}

/// One convolution step `dst = src * p`, reading only sources within sup-norm
/// `active` of the origin. Mass pushed outside the window is lost.
fn convolve(k: &StepKernel, src: &[f64], dst: &mut [f64], radius: usize, active: usize) {
    let dim = k.dim();
    let r = radius as i64;
    let a = active.min(radius) as i64;
    let side = (2 * radius + 1) as i64;
    let mut stride = [0i64; MAX_DIM];
    stride[dim - 1] = 1;
    for i in (0..dim - 1).rev() {
        stride[i] = stride[i + 1] * side;
    }
    dst.iter_mut().for_each(|v| *v = 0.0);

    for (x, w) in k.support() {
        let mut lo = [0i64; MAX_DIM];
        let mut hi = [0i64; MAX_DIM];
        let mut empty = false;
        for i in 0..dim {
            let xi = x.0[i] as i64;
            lo[i] = (-a).max(-r - xi);
            hi[i] = a.min(r - xi);
            empty |= lo[i] > hi[i];
        }
        if empty {
            continue;
        }
        let inner = dim - 1;
        let xin = x.0[inner] as i64;
        let len = (hi[inner] - lo[inner] + 1) as usize;
        let mut idx = lo;
        'outer: loop {
            let mut s_off = 0i64;
            let mut t_off = 0i64;
            for i in 0..inner {
                s_off += (idx[i] + r) * stride[i];
                t_off += (idx[i] + x.0[i] as i64 + r) * stride[i];
            }
            let s0 = (s_off + lo[inner] + r) as usize;
            let t0 = (t_off + lo[inner] + xin + r) as usize;
            let s = &src[s0..s0 + len];
            let t = &mut dst[t0..t0 + len];
            for (tv, sv) in t.iter_mut().zip(s) {
                *tv += w * sv;
            }
            // odometer over the outer axes
            let mut axis = inner;
            loop {
                if axis == 0 {
                    break 'outer;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] <= hi[axis] {
                    break;
                }
                idx[axis] = lo[axis];
            }
        }
    }
}

fn cells(dim: usize, radius: usize) -> usize {
    (2 * radius + 1).saturating_pow(dim as u32)
}

/// Runs the DP for `n` steps on a window of the given radius, calling
/// `visit(m, table)` after every step `m = 0..=n`. Returns the dropped mass.
fn run_dp<F: FnMut(usize, &LatticeTable)>(k: &StepKernel, n: usize, radius: usize, mut visit: F) -> Result<(LatticeTable, f64)> {
    let dim = k.dim();
    if cells(dim, radius) > MAX_CELLS {
        return Err(Error::TooLarge(format!(
            "DP window of radius {radius} in d = {dim} exceeds {MAX_CELLS} cells"
        )));
    }
    let mut cur = LatticeTable::zeros(dim, radius)?;
    let origin = cur.cube().index_of(&Site::ORIGIN).expect("origin in window");
    cur.data_mut()[origin] = 1.0;
    visit(0, &cur);
    let mut next = cur.clone();
    let step = k.range_radius();
    for m in 1..=n {
        convolve(k, cur.data(), next.data_mut(), radius, (m - 1) * step);
        std::mem::swap(&mut cur, &mut next);
        visit(m, &cur);
    }
    let dropped = (1.0 - cur.total()).max(0.0);
    Ok((cur, dropped))
}

/// Window radius guess: exact reach `n * r`, or ten standard deviations.
fn auto_radius(k: &StepKernel, n: usize) -> usize {
    let r = k.range_radius();
    let reach = n * r;
    let spread = (10.0 * (k.max_variance() * n as f64).sqrt()).ceil() as usize + r;
    reach.min(spread).max(1)
}

/// `p_n` on the window `{-radius..=radius}^d`; fails if the window captures
/// less than `1 - MASS_TOLERANCE` of the mass.
pub fn step_pmf_n(k: &StepKernel, n: usize, radius: usize) -> Result<LatticeTable> {
    let (table, dropped) = run_dp(k, n, radius, |_, _| {})?;
    if dropped > MASS_TOLERANCE {
        return Err(Error::WindowTooSmall { radius, captured: 1.0 - dropped });
    }
    Ok(table)
}

/// `p_n` on an automatically sized window that grows until the dropped mass
/// is below [`MASS_TOLERANCE`].
pub fn step_pmf(k: &StepKernel, n: usize) -> Result<StepPmf> {
    let mut radius = auto_radius(k, n);
    loop {
        let (table, dropped) = run_dp(k, n, radius, |_, _| {})?;
        if dropped <= MASS_TOLERANCE {
            return Ok(StepPmf { n, table, dropped });
        }
        radius = (2 * radius).min(n * k.range_radius());
    }
}

/// `out[i][m] = p_m(sites[i])` for `m = 0..=n`, from a single DP pass.
pub fn pmf_at_sites(k: &StepKernel, n: usize, sites: &[Site]) -> Result<Vec<Vec<f64>>> {
    for s in sites {
        s.check_dim(k.dim())?;
    }
    let mut radius = auto_radius(k, n);
    loop {
        let mut out = vec![Vec::with_capacity(n + 1); sites.len()];
        let (_, dropped) = run_dp(k, n, radius, |_, t| {
            for (o, s) in out.iter_mut().zip(sites) {
                o.push(t.get(s));
            }
        })?;
        if dropped <= MASS_TOLERANCE {
            return Ok(out);
        }
        radius = (2 * radius).min(n * k.range_radius());
    }
}

/// `p_m(0)` for `m = 0..=n`.
pub fn return_probabilities(k: &StepKernel, n: usize) -> Result<Vec<f64>> {
    Ok(pmf_at_sites(k, n, &[Site::ORIGIN])?.pop().unwrap())
}

/// First-return probabilities `q_l = P_0(X_1 != 0, .., X_{l-1} != 0, X_l = 0)`,
/// returned with `q[0] = 0` so that `q[l]` is `q_l` for `l = 1..=max_len`.
///
/// Obtained from the renewal identity `p_n(0) = sum_{l<=n} q_l p_{n-l}(0)`.
pub fn first_return_pmf(k: &StepKernel, max_len: usize) -> Result<Vec<f64>> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("first_return_pmf needs max_len >= 1".into()));
    }
    let p = return_probabilities(k, max_len)?;
    Ok(first_return_from_returns(&p))
}

pub(crate) fn first_return_from_returns(p: &[f64]) -> Vec<f64> {
    let n_max = p.len() - 1;
    let mut q = vec![0.0; n_max + 1];
    for n in 1..=n_max {
        let conv: f64 = (1..n).map(|l| q[l] * p[n - l]).sum();
        q[n] = p[n] - conv;
    }
    q
}

/// Exact mean range of the bridge from 0 to `x` in `n` steps,
/// `n + 1 - sum_{l=1}^n (n - l + 1) q_l p_{n-l}(x) / p_n(x)`.
pub fn tied_down_range_mean(k: &StepKernel, n: usize, x: &Site) -> Result<f64> {
    let tables = pmf_at_sites(k, n, &[Site::ORIGIN, *x])?;
    let q = first_return_from_returns(&tables[0]);
    let px = &tables[1];
    if px[n] <= 0.0 {
        return Err(Error::ZeroProbability(format!("p_{n}({x:?}) = 0")));
    }
    let correction: f64 = (1..=n).map(|l| (n - l + 1) as f64 * q[l] * px[n - l]).sum();
    Ok((n + 1) as f64 - correction / px[n])
}
