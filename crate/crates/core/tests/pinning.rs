use std::f64::consts::PI;

use depin::green::{conditional_variance, Region};
use depin::kernel::StepKernel;
use depin::lattice::{LatticeBox, Site};
use depin::mc::{batch_means, replica_rng, Accum, Exec};
use depin::pinning::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn s(c: &[i32]) -> Site {
    Site::new(c)
}

fn singleton(k: &StepKernel) -> Region {
    Region::new(k, LatticeBox::new(2, Site::ORIGIN, Site::ORIGIN).unwrap()).unwrap()
}

/// Unnormalized `eps^|A| (2 pi)^{|A^c|/2} det(K_{A^c})^{-1/2}` with `K`
/// the precision `beta_eff (I - P)` on the alive sites of the region,
/// assembled directly from the kernel.
fn weight_oracle(r: &Region, eps: f64, mask: usize) -> f64 {
    let sites = r.alive_sites();
    let free: Vec<usize> = (0..sites.len()).filter(|i| mask >> i & 1 == 0).collect();
    let beta = r.kernel().beta_eff();
    let k = DMatrix::from_fn(free.len(), free.len(), |a, b| {
        let (x, y) = (sites[free[a]], sites[free[b]]);
        let p = r.kernel().prob(&(y - x));
        beta * (if a == b { 1.0 } else { 0.0 } - p)
    });
    let det = if free.is_empty() { 1.0 } else { k.determinant() };
    eps.powi(mask.count_ones() as i32) * (2.0 * PI).powf(free.len() as f64 / 2.0) / det.sqrt()
}

#[test]
fn one_site_closed_forms() {
    let r = singleton(&StepKernel::simple(2));
    let root = (2.0 * PI).sqrt();
    for eps in [0.1, 1.0, 7.0] {
        let t = exact_pin_measure(&r, eps).unwrap();
        assert!((t.marginal(0) - eps / (eps + root)).abs() < 1e-14);
        let g = gibbs_pin_prob(&r, &[], &Site::ORIGIN, eps).unwrap();
        assert!((g - eps / (eps + root)).abs() < 1e-14);
    }
    assert!((exact_pin_measure(&r, 1.0).unwrap().marginal(0) - 0.285_175).abs() < 1e-6);
    assert_eq!(gibbs_pin_prob(&r, &[], &Site::ORIGIN, 0.0).unwrap(), 0.0);
}

#[test]
fn exact_table_against_determinants() {
    for k in [StepKernel::simple(2), StepKernel::lazy_simple(2)] {
        let r = Region::centered(&k, 1).unwrap();
        for eps in [0.5, 3.0] {
            let t = exact_pin_measure(&r, eps).unwrap();
            assert_eq!(t.probs.len(), 512);
            assert!((t.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            let w: Vec<f64> = (0..512).map(|m| weight_oracle(&r, eps, m)).collect();
            let z: f64 = w.iter().sum();
            for m in 0..512 {
                assert!(t.probs[m] > 0.0);
                assert!((t.probs[m] - w[m] / z).abs() <= 1e-12, "mask {m}");
            }
        }
    }
    let r = Region::centered(&StepKernel::simple(2), 1).unwrap();
    assert!(exact_pin_measure(&r, 1e8).unwrap().probs[511] > 0.999);
    assert!(exact_pin_measure(&Region::centered(&StepKernel::simple(2), 2).unwrap(), 1.0).is_err());
}

#[test]
fn single_flip_balance() {
    let r = Region::centered(&StepKernel::lazy_simple(2), 1).unwrap();
    let eps = 0.7;
    let t = exact_pin_measure(&r, eps).unwrap();
    for a in 0..512usize {
        for i in 0..9 {
            if a >> i & 1 == 1 {
                continue;
            }
            let pins: Vec<Site> = (0..9).filter(|j| a >> j & 1 == 1).map(|j| t.sites[j]).collect();
            let p = gibbs_pin_prob(&r, &pins, &t.sites[i], eps).unwrap();
            let ratio = t.probs[a | 1 << i] / t.probs[a];
            assert!((ratio / (p / (1.0 - p)) - 1.0).abs() <= 1e-10);
        }
    }
}

#[test]
fn pin_probability_is_at_most_eps_over_root_two_pi() {
    // Var(phi_x | pins) >= 1 / beta_eff for every pin set
    for k in [StepKernel::simple(2), StepKernel::lazy_simple(2)] {
        let r = Region::centered(&k, 1).unwrap();
        for eps in [0.1, 0.5, 2.0] {
            let t = exact_pin_measure(&r, eps).unwrap();
            let (lo, hi) = t.conditional_pin_range();
            let cap = eps * (k.beta_eff() / (2.0 * PI)).sqrt();
            assert!(lo > 0.0 && hi <= cap * (1.0 + 1e-12), "{hi} vs {cap}");
        }
    }
}

#[test]
fn more_room_means_fewer_pins() {
    let r = Region::centered(&StepKernel::simple(2), 2).unwrap();
    let x = Site::ORIGIN;
    let near = gibbs_pin_prob(&r, &[s(&[1, 0]), s(&[0, 1])], &x, 1.0).unwrap();
    let far = gibbs_pin_prob(&r, &[s(&[2, 0])], &x, 1.0).unwrap();
    let none = gibbs_pin_prob(&r, &[], &x, 1.0).unwrap();
    assert!(near > far && far > none);
    let var_none = conditional_variance(&r, &x).unwrap();
    assert!((none - pin_prob(1.0, var_none)).abs() < 1e-15);
}

#[test]
fn lattice_condition_holds() {
    let k = StepKernel::simple(2);
    let two = Region::new(&k, LatticeBox::new(2, s(&[0, 0]), s(&[1, 1])).unwrap()).unwrap();
    let three = Region::centered(&k, 1).unwrap();
    for r in [&two, &three] {
        for eps in [0.1, 0.5, 1.0, 10.0] {
            let c = check_lattice_condition(r, eps).unwrap();
            assert!(c.min_ratio >= 1.0 - 1e-10, "{eps}: {}", c.min_ratio);
        }
    }
    // comparable pairs give exactly 1 in the log domain
    let t = exact_pin_measure(&two, 0.5).unwrap();
    let l = &t.log_probs;
    for a in 0..16usize {
        for b in 0..16usize {
            if a & b == a {
                assert!((l[a | b] + l[a & b] - l[a] - l[b]).abs() < 1e-12);
            }
        }
    }
    assert!(check_lattice_condition(&Region::centered(&k, 2).unwrap(), 1.0).is_err());
}

#[test]
fn sampler_matches_exact_on_two_by_two() {
    let k = StepKernel::lazy_simple(2);
    let r = Region::new(&k, LatticeBox::new(2, s(&[0, 0]), s(&[1, 1])).unwrap()).unwrap();
    let model = PinModel::new(&r, 0.5).unwrap();
    let exact = model.exact_table().unwrap();
    let stats = pin_statistics(&model, &ChainConfig::new(40_000), 3, &Exec::sequential()).unwrap();
    for (i, m) in stats.marginals.iter().enumerate() {
        assert!(m.z_score(exact.marginal(i)) < 3.0, "site {i}: {m:?} vs {}", exact.marginal(i));
    }
    let freq = stats.subset_freq.unwrap();
    let tv: f64 = 0.5 * freq.iter().zip(&exact.probs).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv <= 0.02, "{tv}");
    // all four corners are equivalent
    let m: Vec<f64> = stats.marginals.iter().map(|e| e.mean).collect();
    let se = stats.marginals[0].stderr;
    assert!(m.iter().all(|v| (v - m[0]).abs() < 4.0 * se * 2f64.sqrt()));
}

#[test]
fn huge_eps_pins_everything() {
    let r = Region::centered(&StepKernel::simple(2), 1).unwrap();
    assert!(exact_pin_measure(&r, 1e6).unwrap().probs[511] >= 0.99);
    let mut pinned = 0;
    for seed in 0..20 {
        let st = sample_pins(&r, 1e6, 100, seed).unwrap();
        pinned += st.pinned.iter().filter(|&&p| p).count();
        assert_eq!(st.sweeps, 100);
    }
    assert!(pinned as f64 / (20.0 * 9.0) >= 0.99);
    let a = sample_pins(&r, 0.5, 30, 4).unwrap();
    let b = sample_pins(&r, 0.5, 30, 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn field_samples() {
    let k = StepKernel::simple(2);
    let one = singleton(&k);
    let mut rng = replica_rng(21, 0);
    let acc = Accum::from_iter((0..100_000).map(|_| sample_field(&one, &[], &mut rng).unwrap().values[0].powi(2)));
    assert!((acc.mean() - 1.0).abs() < 3.0 * acc.stderr(), "{} ± {}", acc.mean(), acc.stderr());

    let r = Region::centered(&k, 1).unwrap();
    let all = r.alive_sites().to_vec();
    assert!(sample_field(&r, &all, &mut rng).unwrap().values.iter().all(|&v| v == 0.0));
    let f = sample_field(&r, &[s(&[0, 0])], &mut rng).unwrap();
    assert_eq!(f.get(&Site::ORIGIN), 0.0);
}

#[test]
fn field_covariance_on_five_by_five() {
    let k = StepKernel::lazy_simple(2);
    let r = Region::centered(&k, 2).unwrap();
    let c = r.covariance_dense().unwrap();
    let n = r.alive_count();
    let draws = 20_000;
    let mut rng = replica_rng(8, 0);
    let samples: Vec<Vec<f64>> = (0..draws).map(|_| sample_field(&r, &[], &mut rng).unwrap().values).collect();
    let probes = [(12, 12), (12, 13), (12, 17), (0, 24), (0, 0), (6, 18), (3, 4)];
    for (i, j) in probes {
        assert!(i < n && j < n);
        let acc = Accum::from_iter(samples.iter().map(|v| v[i] * v[j]));
        assert!((acc.mean() - c[(i, j)]).abs() < 3.0 * acc.stderr(), "({i},{j}): {} vs {}", acc.mean(), c[(i, j)]);
    }
}

#[test]
fn rao_blackwell_agrees_with_naive() {
    let k = StepKernel::lazy_simple(2);
    let r = Region::centered(&k, 2).unwrap();
    let eps = 0.5;
    let cfg = ChainConfig::new(6000);
    let rb = variance_origin(&r, eps, &cfg, 17, &Exec::sequential()).unwrap();

    let model = PinModel::new(&r, eps).unwrap();
    let mut sampler = PinSampler::new(&model, replica_rng(99, 0));
    let mut field_rng = replica_rng(99, 1);
    let o = r.alive_index(&Site::ORIGIN).unwrap();
    let mut series = Vec::new();
    for sweep in 0..20_000 {
        sampler.sweep().unwrap();
        if sweep >= 1000 {
            let pins: Vec<Site> =
                r.alive_sites().iter().zip(sampler.pinned()).filter(|(_, &p)| p).map(|(s, _)| *s).collect();
            series.push(sample_field(&r, &pins, &mut field_rng).unwrap().values[o].powi(2));
        }
    }
    let naive = batch_means(&series, 20);
    let combined = (rb.stderr.powi(2) + naive.stderr().powi(2)).sqrt();
    assert!((rb.mean - naive.mean()).abs() < 3.0 * combined, "{rb:?} vs {} ± {}", naive.mean(), naive.stderr());
    assert!(rb.stderr < naive.stderr());
}

#[test]
fn one_site_variance() {
    let r = singleton(&StepKernel::simple(2));
    let root = (2.0 * PI).sqrt();
    let eps = 0.8;
    let v = variance_origin(&r, eps, &ChainConfig::new(20_000), 5, &Exec::sequential()).unwrap();
    // the conditional expectation is exact for a single site
    assert!((v.mean - root / (eps + root)).abs() < 1e-12);
    let tiny = variance_origin(&r, 1e9, &ChainConfig::new(100), 5, &Exec::sequential()).unwrap();
    assert!(tiny.mean < 1e-8);
}

#[test]
fn covariance_estimates() {
    let k = StepKernel::lazy_simple(2);
    let r = Region::centered(&k, 2).unwrap();
    let model = PinModel::new(&r, 0.3).unwrap();
    let cfg = ChainConfig::new(2000);
    let exec = Exec::sequential();
    let o = Site::ORIGIN;
    let same = covariance(&model, &o, &o, &cfg, 2, &exec).unwrap();
    let var = variance_origin(&r, 0.3, &cfg, 2, &exec).unwrap();
    assert_eq!(same, var);
    let c: Vec<f64> =
        (1..=2).map(|d| covariance(&model, &o, &s(&[d, 0]), &cfg, 2, &exec).unwrap().mean).collect();
    assert!(c.iter().all(|&v| v >= 0.0));
    assert!(var.mean > c[0] && c[0] > c[1]);
}

#[test]
fn empty_set_probabilities() {
    let k = StepKernel::lazy_simple(2);
    let r = Region::centered(&k, 1).unwrap();
    let model = PinModel::new(&r, 0.5).unwrap();
    let exec = Exec::sequential();
    let cfg = ChainConfig::new(20_000);
    let none = empty_probability(&model, &[], &cfg, 1, &exec).unwrap();
    assert_eq!(none.estimate.mean, 1.0);

    let center = [Site::ORIGIN];
    let e = empty_probability(&model, &center, &cfg, 1, &exec).unwrap();
    let t = exact_pin_measure(&r, 0.5).unwrap();
    let want = t.empty_prob(t.mask_of(&center).unwrap());
    assert!(e.estimate.z_score(want) < 3.0, "{:?} vs {want}", e.estimate);
    assert!(e.lower_ref <= want && want <= e.upper_ref);

    // exact Bernoulli sandwich with p_-, p_+ from the table
    for eps in [0.1, 0.3] {
        let t = exact_pin_measure(&r, eps).unwrap();
        let (lo, hi) = t.conditional_pin_range();
        for b in [1usize, 0b11, 0b10101, 0x1ff] {
            let n = b.count_ones() as i32;
            let v = t.empty_prob(b);
            assert!((1.0 - hi).powi(n) <= v + 1e-12 && v <= (1.0 - lo).powi(n) + 1e-12);
        }
    }
}

#[test]
fn box_stability_rows() {
    let k = StepKernel::lazy_simple(2);
    let cfg = ChainConfig::new(1500);
    let exec = Exec::sequential();
    let rows = box_stability(&k, 0.3, &[1, 1, 2, 3, 4], StabilityProbe::Unpinned, &cfg, 6, &exec).unwrap();
    assert_eq!(rows[0].estimate, rows[1].estimate);
    for w in rows.windows(2) {
        let se = (w[0].estimate.stderr.powi(2) + w[1].estimate.stderr.powi(2)).sqrt();
        assert!(w[1].estimate.mean >= w[0].estimate.mean - 3.0 * se);
    }
    let d: Vec<f64> = rows[2..].windows(2).map(|w| (w[1].estimate.mean - w[0].estimate.mean).abs()).collect();
    assert!(d[1] <= d[0] + 3.0 * rows[4].estimate.stderr);
    assert!(box_stability(&k, 0.3, &[3, 2], StabilityProbe::Unpinned, &cfg, 6, &exec).is_err());
}

#[test]
fn windowed_engine_passes_audit() {
    let k = StepKernel::lazy_simple(2);
    let r = Region::centered(&k, 14).unwrap();
    let model = PinModel::windowed(&r, 0.3, 6).unwrap();
    let mut sampler = PinSampler::new(&model, replica_rng(3, 0));
    for _ in 0..3 {
        sampler.sweep().unwrap();
    }
    let err = sampler.audit(&mut replica_rng(3, 1)).unwrap();
    assert!(err <= AUDIT_TOLERANCE);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn conditional_variance_from_table(mask in 0usize..512, i in 0usize..9, eps in 0.05f64..5.0) {
        prop_assume!(mask >> i & 1 == 0);
        let r = Region::centered(&StepKernel::simple(2), 1).unwrap();
        let t = exact_pin_measure(&r, eps).unwrap();
        let pins: Vec<Site> = (0..9).filter(|j| mask >> j & 1 == 1).map(|j| t.sites[j]).collect();
        let direct = conditional_variance(&r.with_dead(&pins).unwrap(), &t.sites[i]).unwrap();
        prop_assert!((t.conditional_variance(i, mask) / direct - 1.0).abs() < 1e-10);
    }
}
