use std::f64::consts::PI;

use depin::green::{green_killed, Region};
use depin::kernel::{StepKernel, VisitedSet};
use depin::lattice::{LatticeBox, Site};
use depin::mc::{replica_rng, Accum, Exec};
use depin::pinning::exact_pin_measure_on;
use depin::scaling::*;
use proptest::prelude::*;
use rand::Rng;

fn s(c: &[i32]) -> Site {
    Site::new(c)
}

/// Calls `visit(weight, path)` for every `n`-step path from the origin.
fn for_each_path<F: FnMut(f64, &[Site])>(k: &StepKernel, n: usize, visit: &mut F) {
    fn rec<F: FnMut(f64, &[Site])>(k: &StepKernel, n: usize, w: f64, path: &mut Vec<Site>, visit: &mut F) {
        if path.len() == n + 1 {
            visit(w, path);
            return;
        }
        for (step, p) in k.support() {
            path.push(*path.last().unwrap() + *step);
            rec(k, n, w * p, path, visit);
            path.pop();
        }
    }
    rec(k, n, 1.0, &mut vec![Site::ORIGIN], visit);
}

/// `E sum_{n <= n_max} 1(X_n = x) (1-p)^{|X_[0,n]|}` by enumeration.
fn sausage_oracle(k: &StepKernel, p: f64, x: &Site, n_max: usize) -> f64 {
    let mut total = 0.0;
    for_each_path(k, n_max, &mut |w, path| {
        let mut seen = VisitedSet::new();
        for z in path {
            seen.insert(z);
            if z == x {
                total += w * (1.0 - p).powi(seen.len() as i32);
            }
        }
    });
    total
}

/// `E (1-p)^{|X_[0,T_x]|} 1(T_x <= n_max)` by enumeration.
fn survival_oracle(k: &StepKernel, p: f64, x: &Site, n_max: usize) -> f64 {
    let mut total = 0.0;
    for_each_path(k, n_max, &mut |w, path| {
        let mut seen = VisitedSet::new();
        for z in path {
            seen.insert(z);
            if z == x {
                total += w * (1.0 - p).powi(seen.len() as i32);
                return;
            }
        }
    });
    total
}

#[test]
fn sausage_green_small_instance() {
    let k = StepKernel::simple(2);
    let x = s(&[1, 0]);
    let exact = sausage_oracle(&k, 0.5, &x, 6);
    let g = sausage_green(&k, 0.5, &x, 50_000, 6, 4, &Exec::sequential()).unwrap();
    assert!(g.estimate.z_score(exact) < 3.0, "{:?} vs {exact}", g.estimate);
    assert!(g.truncated);

    // trivial values: full traps kill at once, no traps at x = 0 count the start
    let zero = sausage_green(&k, 1.0, &Site::ORIGIN, 100, 20, 1, &Exec::sequential()).unwrap();
    assert_eq!(zero.estimate.mean, 0.0);
    assert!(sausage_green(&k, 0.0, &Site::ORIGIN, 10, 20, 1, &Exec::sequential()).is_err());
}

#[test]
fn survival_small_instance() {
    let k = StepKernel::simple(2);
    let x = s(&[2, 0]);
    let exact = survival_oracle(&k, 0.3, &x, 8);
    let sv = survival_to_target(&k, 0.3, &x, 50_000, 8, 5, &Exec::sequential()).unwrap();
    assert!(sv.estimate.z_score(exact) < 3.0, "{:?} vs {exact}", sv.estimate);
    assert!(survival_to_target(&k, 0.3, &Site::ORIGIN, 10, 8, 5, &Exec::sequential()).is_err());
}

#[test]
fn survival_weights_are_bounded_by_hits() {
    let k = StepKernel::lazy_simple(2);
    let x = s(&[3, -1]);
    let paths = survival_paths(&k, 0.05, &x, 2000, 400, 8, &Exec::sequential()).unwrap();
    for p in &paths {
        match p.hit_time {
            Some(t) => assert!(p.weight > 0.0 && p.weight <= 0.95f64.powi(2) && t >= 3),
            None => assert_eq!(p.weight, 0.0),
        }
    }
}

#[test]
fn crossing_curve_against_plain_sampling() {
    let k = StepKernel::simple(2);
    let (p, r_max, reps) = (0.2, 4, 40_000);
    let tilted = crossing_survival(&k, p, 0, 0.5, r_max, reps, 4000, 12, &Exec::sequential()).unwrap();
    assert_eq!(tilted.truncated, 0);

    let mut rng = replica_rng(31, 0);
    let mut acc = vec![Accum::default(); r_max];
    for _ in 0..reps {
        let mut seen = VisitedSet::new();
        let mut z = Site::ORIGIN;
        seen.insert(&z);
        let mut level = 0;
        let mut hit = vec![0.0; r_max];
        // (1-p)^range < 1e-12 after ~124 distinct sites; stop there
        while seen.len() < 130 && level < r_max {
            z = z + k.sample_step(&mut rng);
            seen.insert(&z);
            while level < r_max && z.0[0] > level as i32 {
                hit[level] = (1.0 - p).powi(seen.len() as i32);
                level += 1;
            }
        }
        for (a, h) in acc.iter_mut().zip(hit) {
            a.push(h);
        }
    }
    for r in 0..r_max {
        let se = (tilted.curve.stderr[r].powi(2) + acc[r].stderr().powi(2)).sqrt();
        let diff = (tilted.curve.value[r] - acc[r].mean()).abs();
        assert!(diff < 3.0 * se, "r = {}: {} vs {} (se {se})", r + 1, tilted.curve.value[r], acc[r].mean());
    }
}

#[test]
fn tilt_moments() {
    let k = StepKernel::simple(2);
    for l in [0.1f64, 0.7, 2.0] {
        let want = (l.cosh() + 1.0) / 2.0;
        assert!((log_mgf_axis(&k, 0, l) - want.ln()).abs() < 1e-14);
        assert!((tilted_drift(&k, 0, l) - l.sinh() / (2.0 * want)).abs() < 1e-14);
    }
    // log z(m) = -log(1-p) has the closed form acosh(2/(1-p) - 1)
    for p in [0.01, 0.2, 0.6] {
        let m = killed_walk_mass(&k, 0, p);
        assert!((m - (2.0 / (1.0 - p) - 1.0).acosh()).abs() < 1e-12);
    }
}

#[test]
fn mass_fit_on_exact_exponentials() {
    let r: Vec<f64> = (1..=20).map(|v| v as f64).collect();
    let c = MassCurve::exact(r.clone(), r.iter().map(|x| (-0.3 * x).exp()).collect()).unwrap();
    let f = mass_fit(&c, c.window(3.0, 12.0)).unwrap();
    assert!((f.mass - 0.3).abs() < 1e-12);
    assert!(f.monotone);
    assert_eq!(f.window, 2..12);
}

#[test]
fn mass_fit_with_noise() {
    let mut rng = replica_rng(2024, 0);
    let r: Vec<f64> = (1..=40).map(|v| v as f64).collect();
    let value: Vec<f64> = r.iter().map(|x| (-0.1 * x).exp() * (1.0 + 0.01 * (rng.random::<f64>() - 0.5) * 12f64.sqrt())).collect();
    let stderr: Vec<f64> = value.iter().map(|v| 0.01 * v).collect();
    let c = MassCurve::new(r, value, stderr).unwrap();
    let f = mass_fit(&c, c.window(5.0, 40.0)).unwrap();
    assert!(f.stderr > 0.0);
    assert!((f.mass - 0.1).abs() < 2.0 * f.stderr, "{} ± {}", f.mass, f.stderr);
    assert!(mass_fit(&c, 0..2).is_err());
}

#[test]
fn synthetic_scaling_slopes() {
    let eps = [0.2, 0.1, 0.05, 0.02, 0.01];
    let x: Vec<f64> = eps.iter().map(|e: &f64| e.ln()).collect();
    let y: Vec<f64> = eps.iter().map(|e: &f64| (3.0 * e.sqrt()).ln()).collect();
    assert!((fit_line(&x, &y, None).unwrap().slope - 0.5).abs() < 1e-12);

    let k = StepKernel::lazy_simple(2);
    let x: Vec<f64> = eps.iter().map(|e: &f64| e.ln().abs()).collect();
    let y: Vec<f64> = x.iter().map(|l| l / PI + 0.7).collect();
    let f = fit_line(&x, &y, None).unwrap();
    assert!((f.slope - variance_slope(&k)).abs() < 1e-12);
    assert!((variance_slope(&StepKernel::simple(2)) - 1.0 / PI).abs() < 1e-15);
}

#[test]
fn scan_grids_and_maps() {
    let k = StepKernel::lazy_simple(3);
    let exec = Exec::sequential();
    let cfg = MassScanConfig::default();
    assert!(mass_scan(&k, &[0.1, 0.2, 0.05], &cfg, 1, &exec).is_err());
    assert!(mass_scan(&k, &[0.1, 0.05], &cfg, 1, &exec).is_err());
    assert!(mass_scan(&k, &[1.5, 0.1, 0.05], &cfg, 1, &exec).is_err());
    assert!(variance_scan(&k, &[0.3, 0.1, 0.03], &VarianceScanConfig::default(), 1, &exec).is_err());

    let map = TrapMap::default();
    assert_eq!(map.density(3, 0.1), 0.1);
    assert!((map.density(2, 0.1) - 0.1 / 10f64.ln().sqrt()).abs() < 1e-15);
    assert_eq!(TrapMap::Direct.density(2, 0.1), 0.1);

    let policy = BoxPolicy::default();
    let radii: Vec<usize> = [0.3, 0.1, 0.03].iter().map(|&e| policy.min_radius(e)).collect();
    assert_eq!(radii, [3, 8, 21]);
    let err = policy.check(0.03, 10).unwrap_err().to_string();
    assert!(err.contains(&policy.describe()), "{err}");
    assert!(policy.check(0.03, 21).is_ok());
}

#[test]
fn sandwich_against_direct_solves() {
    let k = StepKernel::lazy_simple(2);
    let region = Region::centered(&k, 2).unwrap();
    let window: Vec<Site> = LatticeBox::new(2, s(&[-1, 0]), s(&[1, 1])).unwrap().sites().collect();
    let (x, y) = (s(&[-1, 0]), s(&[1, 0]));
    for eps in [0.3, 1.0] {
        let sw = covariance_sandwich(&region, eps, &window, &x, &y).unwrap();
        assert!(sw.holds(), "{sw:?}");
        assert!(sw.p_minus <= sw.p_plus);

        // E_nu G_{A^c}(x, y) from one sparse solve per pin set
        let t = exact_pin_measure_on(&region, eps, &window).unwrap();
        let mut direct = 0.0;
        for (mask, p) in t.probs.iter().enumerate() {
            let pins: Vec<Site> = (0..t.len()).filter(|i| mask >> i & 1 == 1).map(|i| t.sites[i]).collect();
            if pins.contains(&x) || pins.contains(&y) {
                continue;
            }
            direct += p * green_killed(&region.with_dead(&pins).unwrap(), &x, &y).unwrap().value;
        }
        assert!((direct - sw.exact).abs() < 1e-10 * direct, "{direct} vs {}", sw.exact);
    }
    assert!(covariance_sandwich(&region, 0.3, &window, &x, &s(&[2, 2])).is_err());
}

#[test]
fn bernoulli_expectation_endpoints() {
    let h: Vec<f64> = (0..8).map(|m| 1.0 / (1.0 + m as f64)).collect();
    assert_eq!(bernoulli_expectation(&h, 3, 0.0), h[0]);
    assert_eq!(bernoulli_expectation(&h, 3, 1.0), h[7]);
    let ones = vec![1.0; 8];
    assert!((bernoulli_expectation(&ones, 3, 0.37) - 1.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mass_fit_ignores_prefactor(m in 0.02f64..1.0, scale in 0.01f64..100.0) {
        let r: Vec<f64> = (1..=30).map(|v| v as f64).collect();
        let base: Vec<f64> = r.iter().map(|x| (-m * x).exp()).collect();
        let scaled: Vec<f64> = base.iter().map(|v| scale * v).collect();
        let a = mass_fit(&MassCurve::exact(r.clone(), base).unwrap(), 2..25).unwrap();
        let b = mass_fit(&MassCurve::exact(r, scaled).unwrap(), 2..25).unwrap();
        prop_assert!((a.mass - m).abs() <= 1e-12);
        prop_assert!((a.mass - b.mass).abs() <= 1e-12);
    }

    #[test]
    fn path_sums_decrease_in_trap_density(seed in any::<u64>(), p in 0.01f64..0.5, dp in 0.01f64..0.4) {
        let k = StepKernel::lazy_simple(2);
        let x = s(&[1, 1]);
        let exec = Exec::sequential();
        let lo = sausage_path_sums(&k, p, &x, 100, 60, seed, &exec).unwrap();
        let hi = sausage_path_sums(&k, p + dp, &x, 100, 60, seed, &exec).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            prop_assert!(b <= a);
        }
    }
}
