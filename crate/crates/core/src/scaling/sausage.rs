//! Walks among Bernoulli traps: the sausage Green function, survival up to a
//! target, and the survival curve to distant hyperplanes.
//!
//! A walk that has visited `R` distinct sites survives the traps with
//! probability `(1 - p)^R`. The crossing curve samples the exponentially
//! tilted walk with step law `p(s) e^{lambda s_a} / z(lambda)`, whose
//! likelihood ratio up to time `T` is `z^T e^{-lambda X_T,a}`.

use rand::Rng;

use super::fit::MassCurve;
use crate::error::{Error, Result};
use crate::kernel::{StepKernel, VisitedSet};
use crate::lattice::Site;
use crate::mc::{Accum, Estimate, Exec};

/// Range exponent in the reported truncation bound `(1-p)^{kappa n / log n}`.
pub const TRUNCATION_KAPPA: f64 = 0.1;
/// Truncation bounds above this flag the result.
pub const TRUNCATION_TOL: f64 = 1e-3;

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    Ok(())
}

fn check_reach(k: &StepKernel, n: usize) -> Result<()> {
    if n.saturating_mul(k.range_radius()) >= 1 << 15 {
        return Err(Error::TooLarge(format!("walk of {n} steps exceeds the coordinate range")));
    }
    Ok(())
}

/// `(1 - p)^{kappa n / log n}`: a bound on the sausage weight of every walk
/// longer than `n`, given the range lower bound of moderate deviations.
pub fn truncation_bound(p: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    let n = n as f64;
    (1.0 - p).powf(TRUNCATION_KAPPA * n / n.ln())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SausageGreen {
    pub estimate: Estimate,
    pub n_max: usize,
    /// See [`truncation_bound`].
    pub truncation_bound: f64,
    /// Set when the truncation bound exceeds [`TRUNCATION_TOL`].
    pub truncated: bool,
}

/// Per-path sums `sum_{n <= n_max} 1(X_n = x) (1-p)^{|X_[0,n]|}`, in replica
/// order. The paths depend only on the seed, not on `p`.
pub fn sausage_path_sums(
    k: &StepKernel,
    p: f64,
    x: &Site,
    reps: usize,
    n_max: usize,
    seed: u64,
    exec: &Exec,
) -> Result<Vec<f64>> {
    x.check_dim(k.dim())?;
    check_reps(reps)?;
    check_reach(k, n_max)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("trap density must lie in [0, 1], got {p}")));
    }
    if p == 0.0 && k.dim() <= 2 {
        return Err(Error::InvalidArgument("trap density 0 makes the sausage Green function diverge for d <= 2".into()));
    }
    let q = 1.0 - p;
    Ok(exec.replicas(seed, reps, |rng, _| {
        let mut visited = VisitedSet::with_capacity(n_max + 1);
        let mut pos = Site::ORIGIN;
        visited.insert(&pos);
        let mut w = q;
        let mut total = if pos == *x { w } else { 0.0 };
        for _ in 0..n_max {
            pos = pos + k.sample_step(rng);
            if visited.insert(&pos) {
                w *= q;
            }
            if pos == *x {
                total += w;
            }
        }
        total
    }))
}

/// Green function of the walk killed by Bernoulli(`p`) traps, truncated at
/// `n_max` steps.
pub fn sausage_green(k: &StepKernel, p: f64, x: &Site, reps: usize, n_max: usize, seed: u64, exec: &Exec) -> Result<SausageGreen> {
    let sums = sausage_path_sums(k, p, x, reps, n_max, seed, exec)?;
    let bound = truncation_bound(p, n_max);
    Ok(SausageGreen {
        estimate: Estimate::from_accum(&Accum::from_iter(sums), seed),
        n_max,
        truncation_bound: bound,
        truncated: bound > TRUNCATION_TOL,
    })
}

/// One path of the survival estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurvivalPath {
    /// First hitting time of the target, if at most `n_max`.
    pub hit_time: Option<usize>,
    /// `(1-p)^{|X_[0,T_x]|}` on a hit, else 0.
    pub weight: f64,
}

/// Per-path weights of [`survival_to_target`], in replica order.
pub fn survival_paths(
    k: &StepKernel,
    p: f64,
    x: &Site,
    reps: usize,
    n_max: usize,
    seed: u64,
    exec: &Exec,
) -> Result<Vec<SurvivalPath>> {
    x.check_dim(k.dim())?;
    check_reps(reps)?;
    check_reach(k, n_max)?;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("trap density must lie in [0, 1), got {p}")));
    }
    if x.is_origin() {
        return Err(Error::InvalidArgument("the target must differ from the origin".into()));
    }
    let q = 1.0 - p;
    Ok(exec.replicas(seed, reps, |rng, _| {
        let mut visited = VisitedSet::new();
        let mut pos = Site::ORIGIN;
        visited.insert(&pos);
        let mut w = q;
        for n in 1..=n_max {
            pos = pos + k.sample_step(rng);
            if visited.insert(&pos) {
                w *= q;
            }
            if pos == *x {
                return SurvivalPath { hit_time: Some(n), weight: w };
            }
        }
        SurvivalPath { hit_time: None, weight: 0.0 }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Survival {
    /// `E[(1-p)^{|X_[0,T_x]|}; T_x <= n_max]`.
    pub estimate: Estimate,
    /// `P(T_x <= n_max)` on the same paths.
    pub hit_fraction: f64,
    pub n_max: usize,
}

/// Probability that the walk reaches `x` within `n_max` steps before a trap
/// of density `p` kills it (annealed over traps, traps on the path counted
/// up to and including `x`).
pub fn survival_to_target(k: &StepKernel, p: f64, x: &Site, reps: usize, n_max: usize, seed: u64, exec: &Exec) -> Result<Survival> {
    let paths = survival_paths(k, p, x, reps, n_max, seed, exec)?;
    let hits = paths.iter().filter(|s| s.hit_time.is_some()).count();
    Ok(Survival {
        estimate: Estimate::from_accum(&Accum::from_iter(paths.iter().map(|s| s.weight)), seed),
        hit_fraction: hits as f64 / reps as f64,
        n_max,
    })
}

/// Step law tilted along one axis.
#[derive(Clone, Debug)]
struct TiltedSteps {
    steps: Vec<Site>,
    cumulative: Vec<f64>,
    log_z: f64,
}

impl TiltedSteps {
    fn new(k: &StepKernel, axis: usize, lambda: f64) -> Self {
        let raw: Vec<(Site, f64)> =
            k.support().iter().map(|(s, w)| (*s, w * (lambda * s.0[axis] as f64).exp())).collect();
        let z: f64 = raw.iter().map(|(_, w)| w).sum();
        let mut acc = 0.0;
        let cumulative = raw
            .iter()
            .map(|(_, w)| {
                acc += w / z;
                acc
            })
            .collect();
        TiltedSteps { steps: raw.iter().map(|(s, _)| *s).collect(), cumulative, log_z: z.ln() }
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Site {
        let u: f64 = rng.random();
        let i = self.cumulative.iter().position(|&c| u < c).unwrap_or(self.steps.len() - 1);
        self.steps[i]
    }
}

/// `log z(lambda) = log sum_s p(s) e^{lambda s_a}`.
pub fn log_mgf_axis(k: &StepKernel, axis: usize, lambda: f64) -> f64 {
    TiltedSteps::new(k, axis, lambda).log_z
}

/// Drift `E_lambda[s_a]` of the tilted step.
pub fn tilted_drift(k: &StepKernel, axis: usize, lambda: f64) -> f64 {
    let t = TiltedSteps::new(k, axis, lambda);
    let z = t.log_z.exp();
    k.support().iter().map(|(s, w)| s.0[axis] as f64 * w * (lambda * s.0[axis] as f64).exp() / z).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossingCurve {
    /// Level `r = 1..=r_max` against the survival probability to the
    /// hyperplane `{x_a >= r}`.
    pub curve: MassCurve,
    pub lambda: f64,
    pub reps: usize,
    pub n_max: usize,
    /// Paths that had not reached `r_max` after `n_max` steps.
    pub truncated: usize,
}

/// Survival probability among Bernoulli(`p`) traps up to the first time the
/// walk reaches `{x_axis >= r}`, for every `r = 1..=r_max`, by importance
/// sampling with tilt `lambda > 0`.
#[allow(clippy::too_many_arguments)]
pub fn crossing_survival(
    k: &StepKernel,
    p: f64,
    axis: usize,
    lambda: f64,
    r_max: usize,
    reps: usize,
    n_max: usize,
    seed: u64,
    exec: &Exec,
) -> Result<CrossingCurve> {
    check_reps(reps)?;
    check_reach(k, n_max)?;
    if axis >= k.dim() {
        return Err(Error::InvalidArgument(format!("axis {axis} out of range for d = {}", k.dim())));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("trap density must lie in (0, 1), got {p}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("tilt must be positive, got {lambda}")));
    }
    if r_max == 0 {
        return Err(Error::InvalidArgument("r_max must be at least 1".into()));
    }
    let tilted = TiltedSteps::new(k, axis, lambda);
    let log_q = (1.0 - p).ln();
    let runs: Vec<(Vec<f64>, bool)> = exec.replicas(seed, reps, |rng, _| {
        let mut out = vec![0.0; r_max];
        let mut visited = VisitedSet::new();
        let mut pos = Site::ORIGIN;
        visited.insert(&pos);
        let mut range = 1.0f64;
        let mut next = 1usize;
        for t in 1..=n_max {
            pos = pos + tilted.sample(rng);
            if visited.insert(&pos) {
                range += 1.0;
            }
            let h = pos.0[axis];
            if h >= next as i32 {
                let w = (t as f64 * tilted.log_z - lambda * h as f64 + range * log_q).exp();
                while next <= r_max && h >= next as i32 {
                    out[next - 1] = w;
                    next += 1;
                }
                if next > r_max {
                    return (out, false);
                }
            }
        }
        (out, true)
    });
    let mut acc = vec![Accum::default(); r_max];
    let mut truncated = 0;
    for (row, cut) in &runs {
        truncated += *cut as usize;
        for (a, &w) in acc.iter_mut().zip(row) {
            a.push(w);
        }
    }
    let curve = MassCurve::new(
        (1..=r_max).map(|r| r as f64).collect(),
        acc.iter().map(|a| a.mean()).collect(),
        acc.iter().map(|a| a.stderr()).collect(),
    )?;
    Ok(CrossingCurve { curve, lambda, reps, n_max, truncated })
}
