//! Straight-line fits and exponential decay rates of correlation curves.

use std::ops::Range;

use crate::error::{Error, Result};

/// Weighted least-squares line `y = intercept + slope x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope, scaled by the reduced chi-square (zero
    /// for data on an exact line).
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    /// `y - fit` per point.
    pub residuals: Vec<f64>,
    pub chi2_per_dof: f64,
}

/// Fits a line to at least three points. With `sigma` the weights are
/// `1/sigma^2`; a missing or non-positive sigma gives unit weights throughout.
pub fn fit_line(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<LineFit> {
    let n = x.len();
    if y.len() != n || sigma.is_some_and(|s| s.len() != n) {
        return Err(Error::InvalidArgument("fit arrays differ in length".into()));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("a line fit needs at least 3 points, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in fit data".into()));
    }
    let w: Vec<f64> = match sigma {
        Some(s) if s.iter().all(|&v| v > 0.0 && v.is_finite()) => s.iter().map(|v| 1.0 / (v * v)).collect(),
        _ => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("degenerate fit: all abscissae equal".into()));
    }
    let sxy: f64 = (0..n).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - intercept - slope * x[i]).collect();
    let chi2: f64 = (0..n).map(|i| w[i] * residuals[i].powi(2)).sum();
    let chi2_per_dof = chi2 / (n - 2) as f64;
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr: (chi2_per_dof / sxx).sqrt(),
        intercept_stderr: (chi2_per_dof * (1.0 / sw + xm * xm / sxx)).sqrt(),
        residuals,
        chi2_per_dof,
    })
}

/// Correlation or survival values `C(r)` at increasing distances.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MassCurve {
    pub r: Vec<f64>,
    pub value: Vec<f64>,
    /// Monte Carlo standard error of each value (zero when exact).
    pub stderr: Vec<f64>,
}

impl MassCurve {
    pub fn new(r: Vec<f64>, value: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        if r.len() != value.len() || r.len() != stderr.len() {
            return Err(Error::InvalidArgument("curve arrays differ in length".into()));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("curve distances must increase".into()));
        }
        Ok(MassCurve { r, value, stderr })
    }

    /// Noise-free curve.
    pub fn exact(r: Vec<f64>, value: Vec<f64>) -> Result<Self> {
        let n = r.len();
        Self::new(r, value, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// `-log C(r)`.
    pub fn neg_log(&self) -> Vec<f64> {
        self.value.iter().map(|v| -v.ln()).collect()
    }

    /// Error of `log C(r)`: `stderr / C`.
    pub fn log_err(&self) -> Vec<f64> {
        self.value.iter().zip(&self.stderr).map(|(v, s)| s / v).collect()
    }

    /// Indices with `lo <= r <= hi`.
    pub fn window(&self, lo: f64, hi: f64) -> Range<usize> {
        let start = self.r.iter().position(|&r| r >= lo).unwrap_or(self.len());
        let end = self.r.iter().rposition(|&r| r <= hi).map_or(start, |i| (i + 1).max(start));
        start..end
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MassFit {
    pub mass: f64,
    pub stderr: f64,
    pub window: Range<usize>,
    pub fit: LineFit,
    /// Slopes fitted on the growing windows `window.start..window.start + k`,
    /// `k >= 3`.
    pub prefix_slopes: Vec<f64>,
    /// False if a prefix slope drops below its predecessor by more than two
    /// standard errors of the full fit.
    pub monotone: bool,
}

/// Weighted least squares on `(r, -log C(r))` over `window`; the slope is the
/// mass.
pub fn mass_fit(curve: &MassCurve, window: Range<usize>) -> Result<MassFit> {
    if window.end > curve.len() || window.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "fit window {window:?} must hold at least 3 of the {} points",
            curve.len()
        )));
    }
    let idx = window.clone();
    if let Some(i) = idx.clone().find(|&i| !(curve.value[i] > 0.0)) {
        return Err(Error::InvalidArgument(format!("non-positive value {} at r = {}", curve.value[i], curve.r[i])));
    }
    let x = &curve.r[idx.clone()];
    let y: Vec<f64> = curve.neg_log()[idx.clone()].to_vec();
    let s: Vec<f64> = curve.log_err()[idx].to_vec();
    let fit = fit_line(x, &y, Some(&s))?;
    let prefix_slopes: Vec<f64> = (3..=x.len())
        .map(|k| fit_line(&x[..k], &y[..k], Some(&s[..k])).map(|f| f.slope))
        .collect::<Result<_>>()?;
    let slack = 2.0 * fit.slope_stderr + 1e-12 * fit.slope.abs();
    let monotone = prefix_slopes.windows(2).all(|w| w[1] >= w[0] - slack);
    Ok(MassFit { mass: fit.slope, stderr: fit.slope_stderr, window, fit, prefix_slopes, monotone })
}
