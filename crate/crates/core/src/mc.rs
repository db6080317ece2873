//! Monte Carlo plumbing: counter-derived random streams, an executor that
//! fans replicas out over a worker pool, and associative accumulators.
//!
//! Every replica draws from its own ChaCha8 stream selected by
//! `(master seed, replica index)`, and results are always merged in replica
//! order, so outputs do not depend on the number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type McRng = ChaCha8Rng;

/// Random stream for replica `replica` of a run seeded with `master`.
pub fn replica_rng(master: u64, replica: u64) -> McRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(replica);
    rng
}

/// Mixes a domain tag into a master seed (SplitMix64 finalizer), so that
/// independent stages of one run never share streams.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Worker-pool handle. `jobs == 1`, or a build without the `parallel`
/// feature, runs everything on the calling thread.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Exec {
    jobs: usize,
}

impl Default for Exec {
    fn default() -> Self {
        Exec::sequential()
    }
}

impl Exec {
    pub fn sequential() -> Self {
        Exec { jobs: 1 }
    }

    pub fn new(jobs: usize) -> Self {
        Exec { jobs: jobs.max(1) }
    }

    /// One worker per available hardware thread.
    pub fn all_cores() -> Self {
        Exec::new(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn jobs(&self) -> usize {
        self.jobs
    }

    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.jobs > 1 && n > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.jobs)
                .build()
                .expect("failed to build worker pool");
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }

    /// Runs `reps` replicas, replica `i` seeded from `(master, i)`, in chunks
    /// of fixed size. Output order is replica order.
    pub fn replicas<T, F>(&self, master: u64, reps: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut McRng, usize) -> T + Sync + Send,
    {
        const CHUNK: usize = 64;
        let chunks = reps.div_ceil(CHUNK);
        self.map(chunks, |c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(reps);
            (start..end)
                .map(|i| {
                    let mut rng = replica_rng(master, i as u64);
                    f(&mut rng, i)
                })
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect()
    }
}

/// Running (count, sum, sum of squares); merging is associative, and
/// merging in a fixed order is bit-reproducible.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Accum {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Accum {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Accum) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn from_iter<I: IntoIterator<Item = f64>>(it: I) -> Self {
        let mut a = Accum::default();
        for x in it {
            a.push(x);
        }
        a
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let m = self.sum / n;
        ((self.sum_sq - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

/// A Monte Carlo statistic with its provenance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    /// Number of independent observations behind `stderr` (replicas, or
    /// batch means for Markov chains).
    pub count: u64,
    pub seed: u64,
}

impl Estimate {
    pub fn from_accum(acc: &Accum, seed: u64) -> Self {
        Estimate { mean: acc.mean(), stderr: acc.stderr(), count: acc.count, seed }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { mean: value, stderr: 0.0, count: 0, seed: 0 }
    }

    /// `|mean - target|` in units of the standard error (infinite when the
    /// error is zero and the values differ).
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = (self.mean - target).abs();
        if diff == 0.0 {
            0.0
        } else if self.stderr == 0.0 {
            f64::INFINITY
        } else {
            diff / self.stderr
        }
    }
}

/// Batch-means estimate for a correlated series: the series is cut into
/// `batches` consecutive blocks and the block means are treated as
/// independent observations.
pub fn batch_means(series: &[f64], batches: usize) -> Accum {
    let batches = batches.clamp(1, series.len().max(1));
    let size = series.len() / batches;
    if size == 0 {
        return Accum::from_iter(series.iter().copied());
    }
    Accum::from_iter((0..batches).map(|b| {
        let block = &series[b * size..(b + 1) * size];
        block.iter().sum::<f64>() / size as f64
    }))
}

/// Exact one-sided upper confidence bound for a binomial proportion when
/// zero successes were seen in `trials` trials: `1 - alpha^(1/trials)`.
pub fn zero_count_upper_bound(trials: u64, confidence: f64) -> f64 {
    let alpha = 1.0 - confidence;
    1.0 - alpha.powf(1.0 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = replica_rng(7, 0).random();
        let b: u64 = replica_rng(7, 1).random();
        let c: u64 = replica_rng(7, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
        assert_ne!(derive_seed(7, 1), derive_seed(7, 2));
    }

    #[test]
    fn replicas_independent_of_jobs() {
        let f = |rng: &mut McRng, i: usize| rng.random::<f64>() + i as f64;
        let one = Exec::new(1).replicas(11, 1000, f);
        let many = Exec::new(8).replicas(11, 1000, f);
        assert_eq!(one.len(), 1000);
        assert!(one.iter().zip(&many).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn accum_moments() {
        let a = Accum::from_iter([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.mean(), 2.5);
        assert!((a.variance() - 5.0 / 3.0).abs() < 1e-12);
        let mut b = Accum::from_iter([1.0, 2.0]);
        b.merge(&Accum::from_iter([3.0, 4.0]));
        assert_eq!(a, b);
    }

    #[test]
    fn rule_of_three() {
        let ub = zero_count_upper_bound(10_000, 0.95);
        assert!(ub < 3.7e-4 && ub > 2.9e-4);
    }
}
