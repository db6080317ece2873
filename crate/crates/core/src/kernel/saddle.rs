//! Exponential tilting: the rate function `I(xi) = sup_l (l.xi - log z(l))`
//! and the saddle-point approximation of `p_n(x)` built on it.

use nalgebra::{DMatrix, DVector};

use super::StepKernel;
use crate::error::{Error, Result};
use crate::lattice::Site;

const MAX_NEWTON: usize = 50;
const RESIDUAL_TOL: f64 = 1e-10;
/// `det Q(xi) / det Q` below this marks the solution as near the edge of the
/// achievable velocities.
const NEAR_BOUNDARY_DET_RATIO: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct RateFunctionPoint {
    pub xi: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `I(xi)` in nats per step.
    pub rate: f64,
    /// Covariance of the tilted step law.
    pub tilted_cov: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub near_boundary: bool,
}

/// `log z(l)`, tilted mean and tilted covariance.
pub(crate) fn tilted_moments(k: &StepKernel, lambda: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let d = k.dim();
    let dots: Vec<f64> = k
        .support()
        .iter()
        .map(|(x, _)| (0..d).map(|i| lambda[i] * x.0[i] as f64).sum())
        .collect();
    let shift = dots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = k.support().iter().zip(&dots).map(|((_, w), s)| w * (s - shift).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut mean = DVector::zeros(d);
    let mut second = DMatrix::zeros(d, d);
    for ((x, _), w) in k.support().iter().zip(&weights) {
        let w = w / z;
        for i in 0..d {
            mean[i] += w * x.0[i] as f64;
            for j in 0..d {
                second[(i, j)] += w * x.0[i] as f64 * x.0[j] as f64;
            }
        }
    }
    let cov = second - &mean * mean.transpose();
    (z.ln() + shift, mean, cov)
}

/// Log-moment generating function `log z(l) = log sum_x p(x) e^{l.x}`.
pub fn log_mgf(k: &StepKernel, lambda: &[f64]) -> f64 {
    tilted_moments(k, lambda).0
}

/// Solves `grad log z(l) = xi` by damped Newton iteration started from the
/// linearization `l = Q^{-1} xi`.
pub fn rate_function(k: &StepKernel, xi: &[f64]) -> Result<RateFunctionPoint> {
    let d = k.dim();
    if xi.len() != d {
        return Err(Error::Dimension { expected: d, got: xi.len() });
    }
    let target = DVector::from_column_slice(xi);
    let out_of_domain = |reason: &str| Error::OutOfDomain { xi: xi.to_vec(), reason: reason.to_string() };

    let q_chol = k.covariance().clone().cholesky().ok_or(Error::Singular("kernel covariance"))?;
    let mut lambda = q_chol.solve(&target);
    // objective f(l) = log z(l) - l.xi is convex with gradient mean_l - xi
    let objective = |l: &DVector<f64>| log_mgf(k, l.as_slice()) - l.dot(&target);

    for iter in 0..=MAX_NEWTON {
        let (logz, mean, cov) = tilted_moments(k, lambda.as_slice());
        let grad = &mean - &target;
        let residual = grad.amax();
        if residual <= RESIDUAL_TOL {
            let det_ratio = cov.determinant() / k.det_covariance();
            return Ok(RateFunctionPoint {
                xi: xi.to_vec(),
                lambda: lambda.as_slice().to_vec(),
                rate: lambda.dot(&target) - logz,
                tilted_cov: cov,
                residual,
                iterations: iter,
                near_boundary: det_ratio < NEAR_BOUNDARY_DET_RATIO,
            });
        }
        if iter == MAX_NEWTON {
            break;
        }
        let step = match cov.clone().cholesky() {
            Some(ch) => -ch.solve(&grad),
            None => return Err(out_of_domain("tilted covariance became singular")),
        };
        let f0 = logz - lambda.dot(&target);
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &lambda + t * &step;
            // round-off slack so that steps near the optimum are not rejected
            if objective(&trial) <= f0 + 1e-4 * t * slope + 1e-14 * (1.0 + f0.abs()) {
                lambda = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(out_of_domain("line search stalled"));
        }
        if lambda.amax() > 600.0 {
            return Err(out_of_domain("tilt diverged"));
        }
    }
    Err(out_of_domain("Newton did not converge in 50 iterations"))
}

/// `exp(-n I(x/n)) / ((2 pi n)^{d/2} sqrt(det Q(x/n)))`.
pub fn saddle_pmf_approx(k: &StepKernel, n: usize, x: &Site) -> Result<f64> {
    if k.is_periodic() {
        return Err(Error::Periodic("saddle_pmf_approx"));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("saddle_pmf_approx needs n >= 1".into()));
    }
    x.check_dim(k.dim())?;
    let d = k.dim();
    let xi: Vec<f64> = x.coords(d).iter().map(|&c| c as f64 / n as f64).collect();
    let point = rate_function(k, &xi)?;
    let nf = n as f64;
    let det = point.tilted_cov.determinant();
    Ok((-nf * point.rate).exp() / ((2.0 * std::f64::consts::PI * nf).powf(d as f64 / 2.0) * det.sqrt()))
}
