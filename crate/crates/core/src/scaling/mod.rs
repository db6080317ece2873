//! Critical behaviour: walks among Bernoulli traps, exponential decay fits,
//! and scans over the pinning strength.

mod fit;
mod sandwich;
mod sausage;
mod scan;

pub use fit::{fit_line, mass_fit, LineFit, MassCurve, MassFit};
pub use sandwich::{bernoulli_expectation, covariance_sandwich, Sandwich};
pub use sausage::{
    crossing_survival, log_mgf_axis, sausage_green, sausage_path_sums, survival_paths, survival_to_target, tilted_drift,
    truncation_bound, CrossingCurve, SausageGreen, Survival, SurvivalPath, TRUNCATION_KAPPA, TRUNCATION_TOL,
};
pub use scan::{
    killed_walk_mass, mass_scan, pinned_covariance_curve, surrogate_mass, variance_scan, variance_slope, BoxPolicy,
    MassMode, MassScanConfig, ScanPoint, ScanResult, SurrogateMass, TrapMap, VarianceScanConfig,
};
