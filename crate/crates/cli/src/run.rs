//! Command dispatch. Every command returns its tables; writing is separate.

use depin::green::{green_killed_with, Region};
use depin::kernel::{return_probabilities, simulate_range, range_tail};
use depin::lattice::{LatticeBox, Site};
use depin::mc::{derive_seed, Exec};
use depin::pinning::{box_stability, check_lattice_condition, exact_pin_measure, pin_statistics, PinModel, MAX_EXACT_SITES};
use depin::renewal::renewal_row;
use depin::scaling::{covariance_sandwich, mass_scan, variance_scan, ScanResult};

use crate::config::{Experiment, Params};

/// One CSV artifact.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Table { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn site(s: &Site, d: usize) -> String {
    s.coords(d).iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn execute(exp: &Experiment, exec: &Exec) -> depin::Result<Vec<Table>> {
    let seed = exp.seed;
    let stem = exp.command.name().replace('-', "_");
    match &exp.params {
        Params::KernelInfo { n_list } => {
            let k = exp.kernel.as_ref().expect("validated");
            let mut t = Table::new(stem.clone(), &["key", "value"]);
            let q = k.covariance();
            let rows: Vec<(String, String)> = vec![
                ("dim".into(), k.dim().to_string()),
                ("support_size".into(), k.support().len().to_string()),
                ("holding_prob".into(), num(k.holding_prob())),
                ("lazy".into(), k.is_lazy().to_string()),
                ("periodic".into(), k.is_periodic().to_string()),
                ("beta".into(), num(k.beta_input())),
                ("beta_eff".into(), num(k.beta_eff())),
                ("det_q".into(), num(k.det_covariance())),
                ("q".into(), q.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ")),
            ];
            for (a, b) in rows {
                t.push(vec![a, b]);
            }
            let mut lclt = Table::new(format!("{stem}_lclt"), &["n", "p_n0", "normalized"]);
            let n_max = n_list.iter().copied().max().unwrap_or(0);
            let p = return_probabilities(k, n_max)?;
            let d = k.dim() as f64;
            for &n in n_list {
                let scale = (2.0 * std::f64::consts::PI * n as f64).powf(d / 2.0) * k.det_covariance().sqrt();
                lclt.push(vec![n.to_string(), num(p[n]), num(p[n] * scale)]);
            }
            Ok(vec![t, lclt])
        }
        Params::GreenProbe { radii, x, y, solver } => {
            let k = exp.kernel.as_ref().expect("validated");
            let mut t = Table::new(stem, &["radius", "x", "y", "value", "residual"]);
            for &r in radii {
                let region = Region::centered(k, r)?;
                let g = green_killed_with(&region, x, y, *solver)?;
                t.push(vec![r.to_string(), site(x, k.dim()), site(y, k.dim()), num(g.value), num(g.residual)]);
            }
            Ok(vec![t])
        }
        Params::PinsSample { radius, eps, chain } => {
            let k = exp.kernel.as_ref().expect("validated");
            let region = Region::centered(k, *radius)?;
            let model = PinModel::new(&region, *eps)?;
            let stats = pin_statistics(&model, &chain.config(), seed, exec)?;
            let exact = (region.alive_count() <= MAX_EXACT_SITES).then(|| exact_pin_measure(&region, *eps)).transpose()?;
            let mut t = Table::new(stem.clone(), &["site", "marginal", "stderr", "exact"]);
            for (i, (s, m)) in stats.sites.iter().zip(&stats.marginals).enumerate() {
                let ex = exact.as_ref().map_or(String::new(), |e| num(e.marginal(i)));
                t.push(vec![site(s, k.dim()), num(m.mean), num(m.stderr), ex]);
            }
            let mut out = vec![t];
            if let (Some(freq), Some(e)) = (&stats.subset_freq, &exact) {
                let tv: f64 = 0.5 * freq.iter().zip(&e.probs).map(|(a, b)| (a - b).abs()).sum::<f64>();
                let mut s = Table::new(format!("{stem}_summary"), &["key", "value"]);
                s.push(vec!["samples".into(), stats.samples.to_string()]);
                s.push(vec!["mean_pins".into(), num(stats.mean_pins.mean)]);
                s.push(vec!["total_variation".into(), num(tv)]);
                out.push(s);
            }
            Ok(out)
        }
        Params::FkgCheck { radius, eps } => {
            let k = exp.kernel.as_ref().expect("validated");
            let region = Region::centered(k, *radius)?;
            let mut t = Table::new(stem, &["epsilon", "sites", "min_ratio", "pairs"]);
            for &e in eps {
                let c = check_lattice_condition(&region, e)?;
                t.push(vec![num(e), c.sites.len().to_string(), num(c.min_ratio), c.pairs.to_string()]);
            }
            Ok(vec![t])
        }
        Params::DominationCheck { radius, eps, window_lo, window_hi, x, y } => {
            let k = exp.kernel.as_ref().expect("validated");
            let region = Region::centered(k, *radius)?;
            let window: Vec<Site> = LatticeBox::new(k.dim(), *window_lo, *window_hi)?.sites().collect();
            let mut t = Table::new(
                stem,
                &["epsilon", "exact", "bernoulli_p_plus", "bernoulli_p_minus", "p_minus", "p_plus", "ordered"],
            );
            for &e in eps {
                let s = covariance_sandwich(&region, e, &window, x, y)?;
                t.push(vec![
                    num(e),
                    num(s.exact),
                    num(s.lower),
                    num(s.upper),
                    num(s.p_minus),
                    num(s.p_plus),
                    s.holds().to_string(),
                ]);
            }
            Ok(vec![t])
        }
        Params::VarianceScan { eps, cfg } => {
            let k = exp.kernel.as_ref().expect("validated");
            Ok(scan_tables(&stem, &variance_scan(k, eps, cfg, seed, exec)?))
        }
        Params::MassScan { eps, cfg } => {
            let k = exp.kernel.as_ref().expect("validated");
            Ok(scan_tables(&stem, &mass_scan(k, eps, cfg, seed, exec)?))
        }
        Params::RangeStats { n, kappa, reps } => {
            let k = exp.kernel.as_ref().expect("validated");
            let range = simulate_range(k, *n, *reps, derive_seed(seed, 1), exec)?;
            let tail = range_tail(k, *n, *kappa, *reps, derive_seed(seed, 2), exec)?;
            let mut t = Table::new(stem, &["key", "value"]);
            let rows = [
                ("n", n.to_string()),
                ("reps", reps.to_string()),
                ("mean_range", num(range.estimate.mean)),
                ("mean_range_stderr", num(range.estimate.stderr)),
                ("kappa", num(*kappa)),
                ("threshold", num(tail.threshold)),
                ("hits", tail.hits.to_string()),
                ("hit_fraction", num(tail.estimate.mean)),
                ("upper_bound_95", tail.upper_bound_95.map_or(String::new(), num)),
            ];
            for (a, b) in rows {
                t.push(vec![a.to_string(), b]);
            }
            Ok(vec![t])
        }
        Params::Renewal1d { eps } => {
            let mut t = Table::new(
                stem,
                &[
                    "epsilon",
                    "lambda",
                    "lambda_over_eps2_half",
                    "M",
                    "M_times_eps3",
                    "variance",
                    "variance_times_2eps2",
                ],
            );
            for &e in eps {
                let r = renewal_row(e)?;
                t.push(vec![
                    num(e),
                    num(r.lambda),
                    num(r.lambda_over_eps2_half),
                    num(r.mean),
                    num(r.mean_times_eps3),
                    num(r.variance),
                    num(r.variance_times_2eps2),
                ]);
            }
            Ok(vec![t])
        }
        Params::BoxStability { eps, radii, probe, chain } => {
            let k = exp.kernel.as_ref().expect("validated");
            let rows = box_stability(k, *eps, radii, *probe, &chain.config(), seed, exec)?;
            let mut t = Table::new(stem, &["radius", "sites", "value", "stderr"]);
            for r in rows {
                t.push(vec![r.radius.to_string(), r.sites.to_string(), num(r.estimate.mean), num(r.estimate.stderr)]);
            }
            Ok(vec![t])
        }
    }
}

/// Points as `epsilon, value, stderr, n_used, flags`, the fit summary, and
/// the per-point diagnostics.
fn scan_tables(stem: &str, s: &ScanResult) -> Vec<Table> {
    let mut points = Table::new(stem, &["epsilon", "value", "stderr", "n_used", "flags"]);
    let mut diag = Table::new(format!("{stem}_diagnostics"), &["epsilon", "name", "value"]);
    for p in &s.points {
        points.push(vec![num(p.eps), num(p.estimate.mean), num(p.estimate.stderr), p.n_used.to_string(), p.flags.join(";")]);
        for (name, v) in &p.aux {
            diag.push(vec![num(p.eps), name.to_string(), num(*v)]);
        }
    }
    let mut fit = Table::new(format!("{stem}_fit"), &["key", "value"]);
    fit.push(vec!["axes".into(), s.fit_axes.into()]);
    match &s.fit {
        Some(f) => {
            fit.push(vec!["slope".into(), num(f.slope)]);
            fit.push(vec!["slope_stderr".into(), num(f.slope_stderr)]);
            fit.push(vec!["intercept".into(), num(f.intercept)]);
            fit.push(vec!["chi2_per_dof".into(), num(f.chi2_per_dof)]);
            let res = f.residuals.iter().map(|r| num(*r)).collect::<Vec<_>>().join(" ");
            fit.push(vec!["residuals".into(), res]);
        }
        None => fit.push(vec!["slope".into(), "fit_failed".into()]),
    }
    if let Some(r) = s.reference_slope {
        fit.push(vec!["reference_slope".into(), num(r)]);
    }
    for (k, v) in &s.summary {
        fit.push(vec![k.clone(), v.clone()]);
    }
    vec![points, fit, diag]
}
