//! Flat `key = value` experiment configs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use depin::kernel::{KernelSpec, StepKernel};
use depin::lattice::Site;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Command {
    KernelInfo,
    GreenProbe,
    PinsSample,
    FkgCheck,
    DominationCheck,
    VarianceScan,
    MassScan,
    RangeStats,
    Renewal1d,
    BoxStability,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::KernelInfo => "kernel-info",
            Command::GreenProbe => "green-probe",
            Command::PinsSample => "pins-sample",
            Command::FkgCheck => "fkg-check",
            Command::DominationCheck => "domination-check",
            Command::VarianceScan => "variance-scan",
            Command::MassScan => "mass-scan",
            Command::RangeStats => "range-stats",
            Command::Renewal1d => "renewal1d",
            Command::BoxStability => "box-stability",
        }
    }

    /// Keys accepted besides the common ones.
    fn keys(self) -> &'static [&'static str] {
        const CHAIN: [&str; 4] = ["sweeps", "burnin", "chains", "batches"];
        match self {
            Command::KernelInfo => &["n_list"],
            Command::GreenProbe => &["radius_list", "x", "y", "solver"],
            Command::PinsSample => &["radius", "epsilon", CHAIN[0], CHAIN[1], CHAIN[2], CHAIN[3]],
            Command::FkgCheck => &["radius", "eps_list"],
            Command::DominationCheck => &["radius", "eps_list", "window_lo", "window_hi", "x", "y"],
            Command::VarianceScan => {
                &["eps_list", "box_c", "radius_list", "eta", CHAIN[0], CHAIN[1], CHAIN[2], CHAIN[3]]
            }
            Command::MassScan => &[
                "eps_list",
                "mode",
                "budget",
                "pilot_budget",
                "nmax_policy",
                "fit_window",
                "trap_map",
                "trap_constant",
                "axis",
                "radius",
                CHAIN[0],
                CHAIN[1],
                CHAIN[2],
                CHAIN[3],
            ],
            Command::RangeStats => &["n", "kappa", "reps"],
            Command::Renewal1d => &["eps_list"],
            Command::BoxStability => {
                &["epsilon", "radius_list", "probe", CHAIN[0], CHAIN[1], CHAIN[2], CHAIN[3]]
            }
        }
    }

    fn needs_kernel(self) -> bool {
        self != Command::Renewal1d
    }
}

const COMMON_KEYS: [&str; 5] = ["seed", "out_dir", "kernel", "beta", "lazify"];

/// One failed constraint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub key: String,
    pub constraint: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.constraint)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, Violation> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Violation {
                key: format!("line {}", n + 1),
                constraint: format!("expected `key = value`, got {line:?}"),
            })?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(RawConfig { entries })
    }

    pub fn set(&mut self, assignment: &str) -> Result<(), Violation> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| Violation {
            key: assignment.to_string(),
            constraint: "expected key=value".into(),
        })?;
        self.entries.insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }

    /// Canonical text: sorted `key = value` lines.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Typed accessors that collect violations instead of failing early.
struct Reader<'a> {
    raw: &'a RawConfig,
    violations: Vec<Violation>,
}

impl<'a> Reader<'a> {
    fn bad(&mut self, key: &str, constraint: impl Into<String>) {
        self.violations.push(Violation { key: key.into(), constraint: constraint.into() });
    }

    fn get(&self, key: &str) -> Option<&'a str> {
        self.raw.entries.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let v = self.get(key)?;
        match v.parse() {
            Ok(x) => Some(x),
            Err(_) => {
                self.bad(key, format!("expected {what}, got {v:?}"));
                None
            }
        }
    }

    fn uint(&mut self, key: &str, default: usize) -> usize {
        let v = self.parse::<usize>(key, "a nonnegative integer").unwrap_or(default);
        if v == 0 {
            self.bad(key, "must be positive");
        }
        v
    }

    fn real(&mut self, key: &str, default: f64) -> f64 {
        self.parse::<f64>(key, "a number").unwrap_or(default)
    }

    fn epsilon(&mut self, key: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.bad(key, "epsilon must be positive");
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<Vec<T>> {
        let v = self.get(key)?;
        let items: Result<Vec<T>, _> = v.split(',').map(|s| s.trim().parse::<T>()).collect();
        match items {
            Ok(x) if !x.is_empty() => Some(x),
            _ => {
                self.bad(key, format!("expected a comma-separated list of {what}, got {v:?}"));
                None
            }
        }
    }

    fn eps_list(&mut self, default: &[f64]) -> Vec<f64> {
        let v = self.list::<f64>("eps_list", "numbers").unwrap_or_else(|| default.to_vec());
        for &e in &v {
            self.epsilon("eps_list", e);
        }
        v
    }

    fn site(&mut self, key: &str, dim: usize, default: Site) -> Site {
        match self.list::<i32>(key, "integers") {
            Some(c) if c.len() == dim => Site::new(&c),
            Some(c) => {
                self.bad(key, format!("expected {dim} coordinates, got {}", c.len()));
                default
            }
            None => default,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chain {
    pub sweeps: usize,
    pub burnin: Option<usize>,
    pub chains: usize,
    pub batches: usize,
}

impl Chain {
    pub fn config(&self) -> depin::pinning::ChainConfig {
        let mut c = depin::pinning::ChainConfig::new(self.sweeps).with_chains(self.chains);
        c.batches = self.batches;
        if let Some(b) = self.burnin {
            c = c.with_burnin(b);
        }
        c
    }
}

/// Fully validated settings of one run.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub command: Command,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub kernel: Option<StepKernel>,
    pub kernel_desc: String,
    pub params: Params,
    pub raw: RawConfig,
}

#[derive(Clone, Debug)]
pub enum Params {
    KernelInfo { n_list: Vec<usize> },
    GreenProbe { radii: Vec<usize>, x: Site, y: Site, solver: depin::green::SolverKind },
    PinsSample { radius: usize, eps: f64, chain: Chain },
    FkgCheck { radius: usize, eps: Vec<f64> },
    DominationCheck { radius: usize, eps: Vec<f64>, window_lo: Site, window_hi: Site, x: Site, y: Site },
    VarianceScan { eps: Vec<f64>, cfg: depin::scaling::VarianceScanConfig },
    MassScan { eps: Vec<f64>, cfg: depin::scaling::MassScanConfig },
    RangeStats { n: usize, kappa: f64, reps: usize },
    Renewal1d { eps: Vec<f64> },
    BoxStability { eps: f64, radii: Vec<usize>, probe: depin::pinning::StabilityProbe, chain: Chain },
}

/// Builtin `srw:<d>` / `lazy-srw:<d>`, or a kernel file.
fn load_kernel(r: &mut Reader, base: &Path) -> Option<(StepKernel, String)> {
    let Some(name) = r.get("kernel") else {
        r.bad("kernel", "required (srw:<d>, lazy-srw:<d> or a kernel file)");
        return None;
    };
    let beta = r.real("beta", 1.0);
    if !(beta > 0.0 && beta.is_finite()) {
        r.bad("beta", "must be positive");
        return None;
    }
    let lazify = match r.get("lazify") {
        None => None,
        Some("true") => Some(true),
        Some("false") => Some(false),
        Some(v) => {
            r.bad("lazify", format!("expected true or false, got {v:?}"));
            return None;
        }
    };
    let builtin = |prefix: &str| name.strip_prefix(prefix).map(|d| d.parse::<usize>());
    let spec = if let Some(d) = builtin("lazy-srw:") {
        d.ok().map(|d| (d, true))
    } else {
        builtin("srw:").and_then(|d| d.ok()).map(|d| (d, false))
    };
    if let Some((d, lazy)) = spec {
        if !(1..=4).contains(&d) {
            r.bad("kernel", format!("dimension must be 1..=4, got {d}"));
            return None;
        }
        let lazy = lazify.unwrap_or(false) || lazy;
        return Some((StepKernel::simple_with(d, lazy, beta), format!("{name} beta={beta} lazify={lazy}")));
    }
    let path = base.join(name);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            r.bad("kernel", format!("cannot read kernel file {}: {e}", path.display()));
            return None;
        }
    };
    let built = KernelSpec::parse(&text).and_then(|mut s| {
        if let Some(l) = lazify {
            s.lazify = l;
        }
        if r.get("beta").is_some() {
            s.beta = beta;
        }
        s.build().map(|k| (k, s))
    });
    match built {
        Ok((k, s)) => Some((k, format!("file {name} beta={} lazify={}", s.beta, s.lazify))),
        Err(e) => {
            r.bad("kernel", e.to_string());
            None
        }
    }
}

/// Every violated constraint of `raw` for `command`; empty iff the run can start.
pub fn validate(command: Command, raw: &RawConfig, base: &Path) -> Vec<Violation> {
    match build(command, raw, base) {
        Ok(_) => Vec::new(),
        Err(v) => v,
    }
}

pub fn build(command: Command, raw: &RawConfig, base: &Path) -> Result<Experiment, Vec<Violation>> {
    let mut r = Reader { raw, violations: Vec::new() };
    for key in raw.entries.keys() {
        if !COMMON_KEYS.contains(&key.as_str()) && !command.keys().contains(&key.as_str()) {
            r.bad(key, format!("unknown key for {}", command.name()));
        }
    }
    let seed = match r.get("seed") {
        None => {
            r.bad("seed", "required (there is no default seed)");
            0
        }
        Some(_) => r.parse::<u64>("seed", "an unsigned integer").unwrap_or(0),
    };
    let out_dir = PathBuf::from(r.get("out_dir").unwrap_or("out"));
    let (kernel, kernel_desc) = if command.needs_kernel() {
        match load_kernel(&mut r, base) {
            Some((k, d)) => (Some(k), d),
            None => (None, String::new()),
        }
    } else {
        for key in ["kernel", "beta", "lazify"] {
            if raw.entries.contains_key(key) {
                r.bad(key, "renewal1d uses the Gaussian chain and takes no kernel");
            }
        }
        (None, "gaussian-1d".into())
    };
    let dim = kernel.as_ref().map_or(1, |k| k.dim());
    let chain = |r: &mut Reader, sweeps: usize| {
        let c = Chain {
            sweeps: r.uint("sweeps", sweeps),
            burnin: r.parse::<usize>("burnin", "a nonnegative integer"),
            chains: r.uint("chains", 1),
            batches: r.uint("batches", 20),
        };
        if c.burnin.is_some_and(|b| b >= c.sweeps) {
            r.bad("burnin", "must be smaller than sweeps");
        } else if c.config().kept() < c.batches {
            r.bad("batches", "more batches than kept sweeps");
        }
        c
    };
    let params = match command {
        Command::KernelInfo => {
            Params::KernelInfo { n_list: r.list::<usize>("n_list", "integers").unwrap_or_else(|| vec![50, 200]) }
        }
        Command::GreenProbe => {
            let radii = r.list::<usize>("radius_list", "integers").unwrap_or_else(|| vec![16, 32]);
            if radii.contains(&0) {
                r.bad("radius_list", "radii must be positive");
            }
            let x = r.site("x", dim, Site::ORIGIN);
            let y = r.site("y", dim, Site::ORIGIN);
            let solver = match r.get("solver").unwrap_or("auto") {
                "auto" => depin::green::SolverKind::Auto,
                "dense" => depin::green::SolverKind::Dense,
                "iterative" => depin::green::SolverKind::Iterative,
                v => {
                    r.bad("solver", format!("expected auto, dense or iterative, got {v:?}"));
                    depin::green::SolverKind::Auto
                }
            };
            Params::GreenProbe { radii, x, y, solver }
        }
        Command::PinsSample => {
            let radius = r.uint("radius", 1);
            let eps = r.real("epsilon", 0.5);
            r.epsilon("epsilon", eps);
            Params::PinsSample { radius, eps, chain: chain(&mut r, 10_000) }
        }
        Command::FkgCheck => {
            let radius = r.uint("radius", 1);
            Params::FkgCheck { radius, eps: r.eps_list(&[0.1, 0.5, 1.0, 10.0]) }
        }
        Command::DominationCheck => {
            let radius = r.uint("radius", 4);
            let eps = r.eps_list(&[0.3]);
            let window_lo = r.site("window_lo", dim, Site::new(&[-1, -2]));
            let window_hi = r.site("window_hi", dim, Site::new(&[2, 1]));
            let x = r.site("x", dim, Site::new(&[-1, 0]));
            let y = r.site("y", dim, Site::new(&[2, 0]));
            Params::DominationCheck { radius, eps, window_lo, window_hi, x, y }
        }
        Command::VarianceScan => {
            let eps = r.eps_list(&[0.3, 0.1, 0.03]);
            let c = r.real("box_c", 1.0);
            if !(c > 0.0) {
                r.bad("box_c", "must be positive");
            }
            let policy = depin::scaling::BoxPolicy { c };
            let radii = r.list::<usize>("radius_list", "integers");
            if let Some(rs) = &radii {
                if rs.len() != eps.len() {
                    r.bad("radius_list", format!("{} radii for {} epsilons", rs.len(), eps.len()));
                } else {
                    for (&e, &rad) in eps.iter().zip(rs) {
                        if let Err(err) = policy.check(e, rad) {
                            r.bad("radius_list", err.to_string());
                        }
                    }
                }
            }
            let eta = r.real("eta", 3.0);
            if !(eta > 0.0) {
                r.bad("eta", "must be positive");
            }
            let chain = chain(&mut r, 4_000);
            Params::VarianceScan {
                eps,
                cfg: depin::scaling::VarianceScanConfig { policy, radii, chain: chain.config(), eta },
            }
        }
        Command::MassScan => {
            let eps = r.eps_list(&[0.2, 0.1, 0.05, 0.02]);
            let mut cfg = depin::scaling::MassScanConfig::default();
            cfg.mode = match r.get("mode").unwrap_or("bernoulli-surrogate") {
                "bernoulli-surrogate" => depin::scaling::MassMode::Surrogate,
                "pinning-exact" => depin::scaling::MassMode::PinningExact,
                v => {
                    r.bad("mode", format!("expected bernoulli-surrogate or pinning-exact, got {v:?}"));
                    cfg.mode
                }
            };
            cfg.reps = r.uint("budget", cfg.reps);
            cfg.pilot_reps = r.uint("pilot_budget", cfg.pilot_reps);
            match r.get("nmax_policy") {
                None => {}
                Some(v) => match v.strip_prefix("drift:").map(str::parse::<f64>) {
                    Some(Ok(f)) if f >= 1.0 => cfg.nmax_factor = f,
                    _ => r.bad("nmax_policy", format!("expected drift:<factor >= 1>, got {v:?}")),
                },
            }
            if let Some(w) = r.list::<f64>("fit_window", "numbers") {
                if w.len() == 2 && w[0] > 0.0 && w[1] > w[0] {
                    cfg.fit_window = (w[0], w[1]);
                } else {
                    r.bad("fit_window", "expected lo,hi with 0 < lo < hi");
                }
            }
            let constant = r.real("trap_constant", 1.0);
            if !(constant > 0.0) {
                r.bad("trap_constant", "must be positive");
            }
            cfg.trap_map = match r.get("trap_map").unwrap_or("scaled") {
                "scaled" => depin::scaling::TrapMap::Scaled { constant },
                "direct" => depin::scaling::TrapMap::Direct,
                v => {
                    r.bad("trap_map", format!("expected scaled or direct, got {v:?}"));
                    cfg.trap_map
                }
            };
            cfg.axis = r.parse::<usize>("axis", "an integer").unwrap_or(0);
            if cfg.axis >= dim {
                r.bad("axis", format!("must be below the dimension {dim}"));
            }
            cfg.box_radius = r.uint("radius", cfg.box_radius);
            cfg.chain = chain(&mut r, 2_000).config();
            if eps.iter().any(|&e| e >= 1.0) {
                r.bad("eps_list", "mass scans need epsilon < 1");
            }
            Params::MassScan { eps, cfg }
        }
        Command::RangeStats => {
            let n = r.uint("n", 10_000);
            let kappa = r.real("kappa", 0.1);
            if !(kappa > 0.0) {
                r.bad("kappa", "must be positive");
            }
            Params::RangeStats { n, kappa, reps: r.uint("reps", 10_000) }
        }
        Command::Renewal1d => Params::Renewal1d { eps: r.eps_list(&[0.1, 0.01]) },
        Command::BoxStability => {
            let eps = r.real("epsilon", 0.3);
            r.epsilon("epsilon", eps);
            let radii = r.list::<usize>("radius_list", "integers").unwrap_or_else(|| vec![2, 4, 6]);
            if radii.windows(2).any(|w| w[1] < w[0]) {
                r.bad("radius_list", "radii must be nondecreasing");
            }
            let probe = match r.get("probe").unwrap_or("unpinned") {
                "unpinned" => depin::pinning::StabilityProbe::Unpinned,
                "variance" => depin::pinning::StabilityProbe::Variance,
                v => {
                    r.bad("probe", format!("expected unpinned or variance, got {v:?}"));
                    depin::pinning::StabilityProbe::Unpinned
                }
            };
            Params::BoxStability { eps, radii, probe, chain: chain(&mut r, 2_000) }
        }
    };
    if matches!(command, Command::VarianceScan | Command::MassScan) {
        let eps = match &params {
            Params::VarianceScan { eps, .. } | Params::MassScan { eps, .. } => eps,
            _ => unreachable!(),
        };
        if eps.len() < 3 {
            r.bad("eps_list", "a scan needs at least 3 values");
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            r.bad("eps_list", "must be strictly decreasing");
        }
    }
    if command == Command::VarianceScan && dim != 2 {
        r.bad("kernel", "variance-scan needs a 2D kernel");
    }
    if !r.violations.is_empty() {
        return Err(r.violations);
    }
    Ok(Experiment { command, seed, out_dir, kernel, kernel_desc, params, raw: raw.clone() })
}
