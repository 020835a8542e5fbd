//! Deterministic parallel Monte Carlo driver.
//!
//! Samples are split into fixed chunks that are processed independently and
//! merged in chunk order, so results do not depend on the number of workers.
//! Sample `i` of law `l` draws from the ChaCha8 stream `(l << 40) | i` of the
//! base seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::WishartParams;
use crate::sim::{self, PathSample, SimConfig};

pub const CHUNK: u64 = 1000;

pub fn stream_rng(seed: u64, law: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((law << 40) | index);
    rng
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs `body(acc, index, rng)` for `index in 0..samples` and merges the
/// chunk accumulators in order.
pub fn par_chunks<A, I, B, M>(
    samples: u64,
    seed: u64,
    law: u64,
    workers: usize,
    init: I,
    body: B,
    merge: M,
) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    B: Fn(&mut A, u64, &mut ChaCha8Rng) -> Result<()> + Sync,
    M: Fn(&mut A, A),
{
    let chunks = samples.div_ceil(CHUNK);
    let work = |c: u64| -> Result<A> {
        let mut acc = init();
        for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
            let mut rng = stream_rng(seed, law, i);
            body(&mut acc, i, &mut rng)?;
        }
        Ok(acc)
    };
    let parts: Vec<Result<A>> = if workers <= 1 {
        (0..chunks).map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;
        pool.install(|| (0..chunks).into_par_iter().map(work).collect())
    };
    let mut out = init();
    for p in parts {
        merge(&mut out, p?);
    }
    Ok(out)
}

/// One simulated law: parameters, horizon and grid.
#[derive(Clone, Copy)]
pub struct LawRun<'a> {
    pub params: &'a WishartParams,
    pub t: f64,
    pub steps: usize,
    pub seed: u64,
    pub law: u64,
    pub paths: u64,
    pub antithetic: bool,
    pub workers: usize,
}

/// Simulates the law and feeds every path to `observe`. With antithetic
/// pairing `observe` receives the pair `(ΔW, −ΔW)` and the number of samples
/// is `paths / 2`.
pub fn run_paths<A, I, O, M>(run: LawRun<'_>, init: I, observe: O, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    O: Fn(&mut A, &[&PathSample]) -> Result<()> + Sync,
    M: Fn(&mut A, A),
{
    let cfg = SimConfig::new(run.steps, run.seed);
    let samples = if run.antithetic { run.paths / 2 } else { run.paths };
    par_chunks(
        samples,
        run.seed,
        run.law,
        run.workers,
        init,
        |acc, _i, rng| {
            if run.antithetic {
                let (p, q) = sim::simulate_antithetic_pair(run.params, run.t, &cfg, rng)?;
                observe(acc, &[&p, &q])
            } else {
                let p = sim::simulate_path_with_rng(run.params, run.t, &cfg, rng)?;
                observe(acc, &[&p])
            }
        },
        merge,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::stats::Moments;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_mean(workers: usize, samples: u64) -> Moments {
        par_chunks(
            samples,
            5,
            0,
            workers,
            Moments::default,
            |m, _, rng| {
                let z: f64 = StandardNormal.sample(rng);
                m.push(z);
                Ok(())
            },
            |a, b| a.merge(&b),
        )
        .unwrap()
    }

    #[test]
    fn reduction_independent_of_workers() {
        let a = normal_mean(1, 4321);
        let b = normal_mean(3, 4321);
        assert_eq!(a, b);
        assert_eq!(a.count, 4321);
    }

    #[test]
    fn streams_differ() {
        use rand::Rng;
        let mut a = stream_rng(1, 0, 0);
        let mut b = stream_rng(1, 0, 1);
        let mut c = stream_rng(1, 1, 0);
        let (x, y, z) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert!(x != y && x != z && y != z);
    }
}
