//! Exact-event simulation of the raw and conditioned chains, with
//! estimators built on it.
//!
//! Path `k` of a run with master seed `s` draws from its own ChaCha stream
//! `(s, k)`. Paths run in parallel but are collected in index order and
//! reduced sequentially, so results do not depend on the worker count.

mod compare;
mod estimators;
mod paths;
mod subexp;

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub use compare::{conditioned_vs_rejection, DivergenceReport, StateOccupation};
pub use estimators::{
    estimate_conditioned_survival, estimate_occupancy, estimate_survival, estimate_tail_ratio, verify_harmonic,
    HarmonicProfile, RatioEstimate,
};
pub use paths::{sample_hitting_times, simulate_path, PathEnd, Process, SamplePath, Sampler};
pub use subexp::{subexp_diagnostic, SubexpOptions, SubexpPoint, SubexpReport};

/// Smallest replication count accepted by the estimators.
pub const MIN_PATHS: usize = 100;

/// Mixed into the master seed for a second, independent family of streams.
pub(crate) const SECOND_FAMILY: u64 = 0x9E37_79B9_7F4A_7C15;

pub(crate) fn path_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// `f(rng_k, k)` for `k = 0..n`, in index order.
pub(crate) fn run_paths<T, F>(n: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(seed, k as u64);
            f(&mut rng, k)
        })
        .collect()
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

pub(crate) fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths < MIN_PATHS {
        return Err(Error::Precondition(format!("need at least {MIN_PATHS} paths, got {n_paths}")));
    }
    Ok(())
}

/// A Monte Carlo point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub t: f64,
    pub estimate: f64,
    /// Sample standard deviation over `√n_paths`.
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl Estimate {
    pub(crate) fn from_samples(t: f64, xs: impl IntoIterator<Item = f64>, seed: u64) -> Self {
        let (mean, stderr, n) = mean_stderr(xs);
        Estimate { t, estimate: mean, stderr, n_paths: n, seed }
    }

    /// `|estimate - value| / stderr`, infinite when a nonzero gap has no noise.
    pub fn z_score(&self, value: f64) -> f64 {
        let gap = (self.estimate - value).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / self.stderr
        }
    }
}

/// Mean, standard error (with the `n - 1` sample variance) and count.
pub(crate) fn mean_stderr(xs: impl IntoIterator<Item = f64>) -> (f64, f64, usize) {
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for x in xs {
        n += 1;
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
    }
    if n < 2 {
        return (mean, f64::NAN, n);
    }
    (mean, (m2 / (n - 1) as f64 / n as f64).sqrt(), n)
}

/// CSV `t,estimate,stderr,n_paths,seed`.
pub fn estimates_csv(estimates: &[Estimate]) -> String {
    let mut out = String::from("t,estimate,stderr,n_paths,seed\n");
    for e in estimates {
        writeln!(out, "{},{:e},{:e},{},{}", e.t, e.estimate, e.stderr, e.n_paths, e.seed)
            .expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_of_thread_count() {
        let draw = || run_paths(500, 7, |rng, k| rng.gen::<u64>() ^ k as u64);
        let one = with_threads(1, draw).unwrap();
        let four = with_threads(4, draw).unwrap();
        assert_eq!(one, four);
        assert_ne!(path_rng(7, 0).gen::<u64>(), path_rng(7, 1).gen::<u64>());
    }

    #[test]
    fn stderr_uses_sample_variance() {
        let (m, se, n) = mean_stderr([1.0, 0.0, 1.0, 0.0]);
        assert_eq!((m, n), (0.5, 4));
        assert!((se - (1.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let e = Estimate { t: 1.5, estimate: 0.25, stderr: 0.01, n_paths: 100, seed: 3 };
        assert_eq!(estimates_csv(&[e]), "t,estimate,stderr,n_paths,seed\n1.5,2.5e-1,1e-2,100,3\n");
    }
}
