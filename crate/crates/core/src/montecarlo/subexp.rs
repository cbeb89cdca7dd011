use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use super::run_paths;
use crate::error::{Error, Result};

/// Exceedances needed before a tail estimate is used.
const MIN_TAIL: usize = 50;
const DEFAULT_POINTS: usize = 40;

#[derive(Debug, Clone)]
pub struct SubexpOptions {
    /// Convolution order `n ≥ 2`.
    pub order: usize,
    /// Evaluation times; by default log-spaced from the sample median to the
    /// last time with enough exceedances (capped at the largest finite
    /// sample).
    pub t_grid: Option<Vec<f64>>,
    pub seed: u64,
    /// Slack on the bound `n`.
    pub tolerance: f64,
}

impl Default for SubexpOptions {
    fn default() -> Self {
        SubexpOptions { order: 2, t_grid: None, seed: 0, tolerance: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SubexpPoint {
    pub t: f64,
    pub ratio: f64,
    pub single_tail: f64,
    pub sum_tail: f64,
    /// Samples above `t`.
    pub n_exceed: usize,
    pub reliable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubexpReport {
    pub order: usize,
    pub bound: f64,
    pub points: Vec<SubexpPoint>,
    /// Largest ratio among reliable points.
    pub max_ratio: f64,
    /// Reliable curve within `n(1 + tolerance)` over its last decade of `t`.
    pub consistent: bool,
    /// Fewer than fifty samples beyond the median of the sums.
    pub unreliable: bool,
    /// All samples are equal.
    pub degenerate: bool,
    pub n_samples: usize,
    pub seed: u64,
}

impl SubexpReport {
    /// CSV `t,ratio,single_tail,sum_tail,n_exceed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,ratio,single_tail,sum_tail,n_exceed\n");
        for p in &self.points {
            writeln!(out, "{},{:e},{:e},{:e},{}", p.t, p.ratio, p.single_tail, p.sum_tail, p.n_exceed)
                .expect("writing to a String");
        }
        out
    }
}

fn count_above(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|&x| x <= t)
}

/// Empirical `F̄^{n*}(t) / F̄(t)` from i.i.d. samples, using as many sums of
/// `n` resampled values as there are samples. Censored samples may be given
/// as `∞`; they count as exceeding every finite `t`.
pub fn subexp_diagnostic(samples: &[f64], opts: &SubexpOptions) -> Result<SubexpReport> {
    if opts.order < 2 {
        return Err(Error::Precondition(format!("convolution order {} must be at least 2", opts.order)));
    }
    if samples.len() < 2 {
        return Err(Error::Precondition("need at least two samples".into()));
    }
    if samples.iter().any(|x| x.is_nan() || *x < 0.0) {
        return Err(Error::Precondition("samples must be nonnegative".into()));
    }
    let m = samples.len();
    let mut single = samples.to_vec();
    single.sort_by(f64::total_cmp);
    let mut sums = run_paths(m, opts.seed, |rng, _| {
        (0..opts.order).map(|_| samples[rng.gen_range(0..m)]).sum::<f64>()
    });
    sums.sort_by(f64::total_cmp);

    let degenerate = single[0] == single[m - 1];
    let median_sum = sums[m / 2];
    let unreliable = count_above(&single, median_sum) < MIN_TAIL;

    let grid = match &opts.t_grid {
        Some(g) => g.clone(),
        None => default_grid(&single),
    };
    let points: Vec<SubexpPoint> = grid
        .iter()
        .map(|&t| {
            let n_exceed = count_above(&single, t);
            let single_tail = n_exceed as f64 / m as f64;
            let sum_tail = count_above(&sums, t) as f64 / m as f64;
            let ratio = if n_exceed == 0 { f64::NAN } else { sum_tail / single_tail };
            SubexpPoint { t, ratio, single_tail, sum_tail, n_exceed, reliable: n_exceed >= MIN_TAIL }
        })
        .collect();

    let bound = opts.order as f64 * (1.0 + opts.tolerance);
    let reliable: Vec<&SubexpPoint> = points.iter().filter(|p| p.reliable && p.t > 0.0).collect();
    let max_ratio = reliable.iter().map(|p| p.ratio).fold(f64::NAN, f64::max);
    let consistent = match reliable.iter().map(|p| p.t).reduce(f64::max) {
        Some(t_last) if !degenerate => {
            reliable.iter().filter(|p| p.t >= t_last / 10.0).all(|p| p.ratio <= bound)
        }
        _ => false,
    };

    Ok(SubexpReport {
        order: opts.order,
        bound,
        points,
        max_ratio,
        consistent,
        unreliable,
        degenerate,
        n_samples: m,
        seed: opts.seed,
    })
}

fn default_grid(sorted: &[f64]) -> Vec<f64> {
    let m = sorted.len();
    let lo = sorted[m / 2];
    let last_finite = sorted.iter().rev().copied().find(|x| x.is_finite()).unwrap_or(0.0);
    let hi = if m > MIN_TAIL { sorted[m - MIN_TAIL - 1] } else { sorted[m - 1] }.min(last_finite);
    if !(lo > 0.0 && hi.is_finite()) || hi <= lo {
        return vec![lo];
    }
    let step = (hi / lo).ln() / (DEFAULT_POINTS - 1) as f64;
    (0..DEFAULT_POINTS).map(|k| lo * (step * k as f64).exp()).collect()
}
