//! Scans over the pinning strength: the mass exponent and the variance
//! growth at the origin.

use std::f64::consts::PI;

use super::fit::{fit_line, mass_fit, LineFit, MassCurve, MassFit};
use super::sausage::{crossing_survival, log_mgf_axis, tilted_drift};
use crate::error::{Error, Result};
use crate::green::{green_nstep, Region};
use crate::kernel::StepKernel;
use crate::lattice::Site;
use crate::mc::{derive_seed, Estimate, Exec};
use crate::pinning::{variance_at, ChainConfig, PinModel, PinSampler};

#[derive(Clone, Debug, PartialEq)]
pub struct ScanPoint {
    pub eps: f64,
    pub estimate: Estimate,
    /// Paths or kept chain sweeps behind the estimate.
    pub n_used: u64,
    pub flags: Vec<String>,
    /// Named per-point diagnostics.
    pub aux: Vec<(&'static str, f64)>,
}

impl ScanPoint {
    pub fn aux(&self, name: &str) -> Option<f64> {
        self.aux.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
    /// Regression over the points that carry no fatal flag.
    pub fit: Option<LineFit>,
    /// What the fit regresses, e.g. `"log m vs log eps"`.
    pub fit_axes: &'static str,
    /// Reference slope, when the theory fixes one.
    pub reference_slope: Option<f64>,
    /// Named scan-level diagnostics.
    pub summary: Vec<(String, String)>,
}

impl ScanResult {
    pub fn slope(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.slope)
    }

    pub fn summary(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub(crate) fn check_grid(eps: &[f64]) -> Result<()> {
    if eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidArgument("every epsilon must lie in (0, 1)".into()));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("the epsilon grid must be strictly decreasing".into()));
    }
    if eps.len() < 3 {
        return Err(Error::InvalidArgument(format!("a scan needs at least 3 grid points, got {}", eps.len())));
    }
    Ok(())
}

/// How the pinning strength maps to a trap density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrapMap {
    /// `c eps` for `d >= 3` and `c eps / sqrt|log eps|` for `d = 2`.
    Scaled { constant: f64 },
    /// `p = eps`.
    Direct,
}

impl Default for TrapMap {
    fn default() -> Self {
        TrapMap::Scaled { constant: 1.0 }
    }
}

impl TrapMap {
    pub fn density(&self, dim: usize, eps: f64) -> f64 {
        match *self {
            TrapMap::Direct => eps,
            TrapMap::Scaled { constant } if dim == 2 => constant * eps / eps.ln().abs().sqrt(),
            TrapMap::Scaled { constant } => constant * eps,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            TrapMap::Direct => "p = eps".into(),
            TrapMap::Scaled { constant } => format!("p = {constant} eps (d>=3), {constant} eps/sqrt|log eps| (d=2)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassMode {
    /// Survival among independent traps, by tilted crossing estimates.
    Surrogate,
    /// Pinned-field covariance along an axis from heat-bath chains.
    PinningExact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MassScanConfig {
    pub mode: MassMode,
    pub trap_map: TrapMap,
    pub axis: usize,
    /// Paths per curve in surrogate mode.
    pub reps: usize,
    pub pilot_reps: usize,
    /// Fit window `[lo / m, hi / m]` with `m` the pilot mass.
    pub fit_window: (f64, f64),
    /// Step cap of a crossing run: this factor times `r_max / drift`.
    pub nmax_factor: f64,
    /// Box radius and chain budget of the pinning mode.
    pub box_radius: usize,
    pub chain: ChainConfig,
}

impl Default for MassScanConfig {
    fn default() -> Self {
        MassScanConfig {
            mode: MassMode::Surrogate,
            trap_map: TrapMap::default(),
            axis: 0,
            reps: 20_000,
            pilot_reps: 2_000,
            fit_window: (3.0, 12.0),
            nmax_factor: 20.0,
            box_radius: 10,
            chain: ChainConfig::new(2_000),
        }
    }
}

/// Mass of the walk killed at rate `-log(1-p)` per step, ignoring returns:
/// the root of `log z(m) = -log(1-p)`. Overestimates the trap mass.
pub fn killed_walk_mass(k: &StepKernel, axis: usize, p: f64) -> f64 {
    let target = -(1.0 - p).ln();
    let (mut lo, mut hi) = (0.0, 1.0);
    while log_mgf_axis(k, axis, hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if log_mgf_axis(k, axis, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Step cap for a crossing run to level `r_max`.
fn crossing_nmax(k: &StepKernel, axis: usize, lambda: f64, r_max: usize, factor: f64) -> usize {
    let drift = tilted_drift(k, axis, lambda).max(1e-6);
    let n = (factor * r_max as f64 / drift).ceil() as usize;
    n.min((1 << 15) / k.range_radius().max(1) - 1)
}

pub struct SurrogateMass {
    pub fit: MassFit,
    pub curve: MassCurve,
    pub density: f64,
    pub lambda: f64,
    pub pilot_rounds: usize,
    pub pilot_converged: bool,
    pub truncated: usize,
    pub reps: usize,
}

/// Mass of the trap surrogate at density `p`: pilot runs tune the tilt to the
/// mass, then one long run is fitted on `[lo/m, hi/m]`.
pub fn surrogate_mass(k: &StepKernel, p: f64, cfg: &MassScanConfig, seed: u64, exec: &Exec) -> Result<SurrogateMass> {
    let (wlo, whi) = cfg.fit_window;
    if !(wlo > 0.0 && whi > wlo) {
        return Err(Error::InvalidArgument(format!("bad fit window {:?}", cfg.fit_window)));
    }
    if !(cfg.nmax_factor >= 1.0) {
        return Err(Error::InvalidArgument(format!("step-cap factor must be at least 1, got {}", cfg.nmax_factor)));
    }
    let mut m = killed_walk_mass(k, cfg.axis, p);
    let mut converged = false;
    let mut rounds = 0;
    while rounds < 4 {
        rounds += 1;
        let r_max = ((0.6 * whi / m).ceil() as usize).max(6);
        let n_max = crossing_nmax(k, cfg.axis, m, r_max, cfg.nmax_factor);
        let run = crossing_survival(k, p, cfg.axis, m, r_max, cfg.pilot_reps, n_max, derive_seed(seed, rounds as u64), exec)?;
        let w = run.curve.window((0.5 * wlo / m).max(1.0), r_max as f64);
        let next = mass_fit(&run.curve, w)?.mass;
        if !(next > 0.0) {
            return Err(Error::NoConvergence { what: "pilot mass", residual: next, iterations: rounds });
        }
        let change = (next / m - 1.0).abs();
        m = next;
        if change < 0.05 {
            converged = true;
            break;
        }
    }
    let r_max = (whi / m).ceil() as usize;
    let n_max = crossing_nmax(k, cfg.axis, m, r_max, cfg.nmax_factor);
    let run = crossing_survival(k, p, cfg.axis, m, r_max, cfg.reps, n_max, derive_seed(seed, 0), exec)?;
    let window = run.curve.window(wlo / m, whi / m);
    let fit = mass_fit(&run.curve, window)?;
    Ok(SurrogateMass {
        fit,
        curve: run.curve,
        density: p,
        lambda: m,
        pilot_rounds: rounds,
        pilot_converged: converged,
        truncated: run.truncated,
        reps: cfg.reps,
    })
}

/// `E(phi_0 phi_{r e_a})` for `r = 1..=radius/2` from heat-bath chains on the
/// centred box.
pub fn pinned_covariance_curve(
    k: &StepKernel,
    eps: f64,
    radius: usize,
    axis: usize,
    cfg: &ChainConfig,
    seed: u64,
    exec: &Exec,
) -> Result<MassCurve> {
    let region = Region::centered(k, radius)?;
    let model = PinModel::new(&region, eps)?;
    let i0 = model.index_of(&Site::ORIGIN)?;
    let rmax = (radius / 2).max(1);
    let js: Vec<usize> = (1..=rmax)
        .map(|r| {
            let mut s = Site::ORIGIN;
            s.0[axis] = r as i32;
            model.index_of(&s)
        })
        .collect::<Result<_>>()?;
    if cfg.chains == 0 || cfg.kept() < cfg.batches {
        return Err(Error::InvalidArgument("chain budget leaves no batches".into()));
    }
    let burnin = cfg.burnin();
    let runs: Vec<Result<Vec<Vec<f64>>>> = exec.replicas(seed, cfg.chains, |rng, _| {
        let mut s = PinSampler::new(&model, rng.clone());
        let mut series = vec![Vec::with_capacity(cfg.kept()); rmax];
        for sweep in 0..cfg.sweeps {
            s.sweep()?;
            if sweep >= burnin {
                for (out, &j) in series.iter_mut().zip(&js) {
                    out.push(s.covariance_given_pins(i0, j)?);
                }
            }
        }
        Ok(series)
    });
    let runs: Vec<Vec<Vec<f64>>> = runs.into_iter().collect::<Result<_>>()?;
    let mut value = Vec::with_capacity(rmax);
    let mut stderr = Vec::with_capacity(rmax);
    for r in 0..rmax {
        let mut acc = crate::mc::Accum::default();
        for chain in &runs {
            acc.merge(&crate::mc::batch_means(&chain[r], cfg.batches));
        }
        value.push(acc.mean());
        stderr.push(acc.stderr());
    }
    MassCurve::new((1..=rmax).map(|r| r as f64).collect(), value, stderr)
}

/// Mass over a decreasing grid of pinning strengths, and the exponent of
/// `m(eps)` from a regression of `log m` on `log eps`. In `d = 2` the point
/// diagnostic `m eps^{-1/2}` and its monotonicity are reported as well.
pub fn mass_scan(k: &StepKernel, eps: &[f64], cfg: &MassScanConfig, seed: u64, exec: &Exec) -> Result<ScanResult> {
    check_grid(eps)?;
    if cfg.axis >= k.dim() {
        return Err(Error::InvalidArgument(format!("axis {} out of range for d = {}", cfg.axis, k.dim())));
    }
    let mut points = Vec::with_capacity(eps.len());
    for (n, &e) in eps.iter().enumerate() {
        let point_seed = derive_seed(seed, 0x3a55 + n as u64);
        let p = cfg.trap_map.density(k.dim(), e);
        let mut flags = Vec::new();
        let mut aux = vec![("trap_density", p)];
        let fitted = match cfg.mode {
            MassMode::Surrogate => surrogate_mass(k, p, cfg, point_seed, exec).map(|s| {
                if !s.pilot_converged {
                    flags.push("pilot_unconverged".to_string());
                }
                if s.truncated > 0 {
                    flags.push("truncated".to_string());
                }
                aux.push(("tilt", s.lambda));
                (s.fit, cfg.reps as u64)
            }),
            MassMode::PinningExact => {
                let guess = killed_walk_mass(k, cfg.axis, p);
                pinned_covariance_curve(k, e, cfg.box_radius, cfg.axis, &cfg.chain, point_seed, exec).and_then(|c| {
                    let lo = (cfg.fit_window.0 / guess).max(1.0);
                    let mut w = c.window(lo, f64::INFINITY);
                    if w.len() < 3 {
                        flags.push("window_clipped".to_string());
                        w = c.len().saturating_sub(3)..c.len();
                    }
                    let kept = (cfg.chain.kept() * cfg.chain.chains) as u64;
                    mass_fit(&c, w).map(|f| (f, kept))
                })
            }
        };
        match fitted {
            Ok((fit, n_used)) => {
                if !fit.monotone {
                    flags.push("fit_nonmonotone".to_string());
                }
                aux.push(("window_lo", fit.window.start as f64 + 1.0));
                aux.push(("window_hi", fit.window.end as f64));
                aux.push(("m_over_sqrt_eps", fit.mass / e.sqrt()));
                points.push(ScanPoint {
                    eps: e,
                    estimate: Estimate { mean: fit.mass, stderr: fit.stderr, count: n_used, seed: point_seed },
                    n_used,
                    flags,
                    aux,
                });
            }
            Err(err) => {
                flags.push(format!("fit_failed: {err}"));
                points.push(ScanPoint {
                    eps: e,
                    estimate: Estimate { mean: f64::NAN, stderr: f64::NAN, count: 0, seed: point_seed },
                    n_used: 0,
                    flags,
                    aux,
                });
            }
        }
    }
    let good: Vec<&ScanPoint> = points.iter().filter(|p| p.estimate.mean > 0.0).collect();
    let x: Vec<f64> = good.iter().map(|p| p.eps.ln()).collect();
    let y: Vec<f64> = good.iter().map(|p| p.estimate.mean.ln()).collect();
    let s: Vec<f64> = good.iter().map(|p| p.estimate.stderr / p.estimate.mean).collect();
    let fit = fit_line(&x, &y, Some(&s)).ok();
    let mut summary = vec![
        ("mode".to_string(), format!("{:?}", cfg.mode)),
        ("trap_map".to_string(), cfg.trap_map.describe()),
        ("fit_window".to_string(), format!("[{}/m, {}/m]", cfg.fit_window.0, cfg.fit_window.1)),
    ];
    if k.dim() == 2 {
        let diag: Vec<f64> = points.iter().filter_map(|p| p.aux("m_over_sqrt_eps")).collect();
        // Grid decreases, so growth in eps means the diagnostic falls along it.
        let monotone = diag.len() == points.len() && diag.windows(2).all(|w| w[1] < w[0]);
        summary.push(("m_over_sqrt_eps_increasing_in_eps".to_string(), monotone.to_string()));
    }
    Ok(ScanResult { points, fit, fit_axes: "log m vs log eps", reference_slope: Some(0.5), summary })
}

/// Box size rule `radius >= c eps^{-1/2} |log eps|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxPolicy {
    pub c: f64,
}

impl Default for BoxPolicy {
    fn default() -> Self {
        BoxPolicy { c: 1.0 }
    }
}

impl BoxPolicy {
    pub fn min_radius(&self, eps: f64) -> usize {
        (self.c * eps.powf(-0.5) * eps.ln().abs()).ceil().max(1.0) as usize
    }

    pub fn describe(&self) -> String {
        format!("radius >= {} eps^(-1/2) |log eps|", self.c)
    }

    /// Error naming the policy when `radius` is too small for `eps`.
    pub fn check(&self, eps: f64, radius: usize) -> Result<()> {
        let min = self.min_radius(eps);
        if radius < min {
            return Err(Error::InvalidArgument(format!(
                "box radius {radius} below the policy floor {min} at eps = {eps} ({})",
                self.describe()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceScanConfig {
    pub policy: BoxPolicy,
    /// Explicit radii, one per grid point; the policy minimum when `None`.
    pub radii: Option<Vec<usize>>,
    pub chain: ChainConfig,
    /// Exponent in `n_0 = eps^{-1} |log eps|^eta`.
    pub eta: f64,
}

impl Default for VarianceScanConfig {
    fn default() -> Self {
        VarianceScanConfig { policy: BoxPolicy::default(), radii: None, chain: ChainConfig::new(4_000), eta: 3.0 }
    }
}

/// Leading coefficient `(2 pi beta_eff sqrt(det Q))^{-1}` of the variance in
/// `|log eps|`.
pub fn variance_slope(k: &StepKernel) -> f64 {
    1.0 / (2.0 * PI * k.beta_eff() * k.det_covariance().sqrt())
}

/// Field variance at the origin over a decreasing grid, its regression on
/// `|log eps|`, the offsets from the leading term, and the truncated Green
/// function `G^{n_0}(0,0) / beta_eff` per point.
pub fn variance_scan(k: &StepKernel, eps: &[f64], cfg: &VarianceScanConfig, seed: u64, exec: &Exec) -> Result<ScanResult> {
    if k.dim() != 2 {
        return Err(Error::UnsupportedDimension { op: "variance_scan", required: 2 });
    }
    check_grid(eps)?;
    let radii: Vec<usize> = match &cfg.radii {
        Some(r) if r.len() != eps.len() => {
            return Err(Error::InvalidArgument(format!("{} radii for {} grid points", r.len(), eps.len())))
        }
        Some(r) => r.clone(),
        None => eps.iter().map(|&e| cfg.policy.min_radius(e)).collect(),
    };
    for (&e, &r) in eps.iter().zip(&radii) {
        cfg.policy.check(e, r)?;
    }
    let slope = variance_slope(k);
    let mut points = Vec::with_capacity(eps.len());
    for (n, (&e, &radius)) in eps.iter().zip(&radii).enumerate() {
        let point_seed = derive_seed(seed, 0x7a71 + n as u64);
        let region = Region::centered(k, radius)?;
        let model = PinModel::new(&region, e)?;
        let est = variance_at(&model, &Site::ORIGIN, &cfg.chain, point_seed, exec)?;
        let log_eps = e.ln().abs();
        let n0 = (log_eps.powf(cfg.eta) / e).ceil() as usize;
        let g_n0 = green_nstep(k, n0)? / k.beta_eff();
        points.push(ScanPoint {
            eps: e,
            estimate: est,
            n_used: (cfg.chain.kept() * cfg.chain.chains) as u64,
            flags: Vec::new(),
            aux: vec![
                ("radius", radius as f64),
                ("abs_log_eps", log_eps),
                ("offset", est.mean - slope * log_eps),
                ("n0", n0 as f64),
                ("green_n0", g_n0),
            ],
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.eps.ln().abs()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.estimate.mean).collect();
    let s: Vec<f64> = points.iter().map(|p| p.estimate.stderr).collect();
    let fit = fit_line(&x, &y, Some(&s)).ok();
    let summary = vec![
        ("box_policy".to_string(), cfg.policy.describe()),
        ("eta".to_string(), cfg.eta.to_string()),
        ("reference_slope".to_string(), slope.to_string()),
    ];
    Ok(ScanResult { points, fit, fit_axes: "variance vs |log eps|", reference_slope: Some(slope), summary })
}
