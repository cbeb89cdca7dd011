use serde::Serialize;

use super::paths::{PathEnd, Process, Sampler};
use super::{check_paths, mean_stderr, run_paths, Estimate, SECOND_FAMILY};
use crate::asymptotics::SpaceFunction;
use crate::chain::{AugmentedState, ChainSpec};
use crate::conditioned::ConditionedChain;
use crate::error::{Error, Result};

/// Below this many surviving denominator paths a ratio is flagged.
const RATIO_MIN_SURVIVORS: usize = 10;

fn check_grid(t_grid: &[f64]) -> Result<f64> {
    if t_grid.is_empty() {
        return Err(Error::Precondition("empty time grid".into()));
    }
    if let Some(t) = t_grid.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::Precondition(format!("grid time {t} must be finite and nonnegative")));
    }
    Ok(t_grid.iter().cloned().fold(0.0, f64::max))
}

fn survival_on_grid(
    process: Process<'_>,
    start: AugmentedState,
    t_grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    check_paths(n_paths)?;
    let horizon = check_grid(t_grid)?.max(f64::MIN_POSITIVE);
    let sampler = Sampler::new(process);
    let ends = run_paths(n_paths, seed, |rng, _| sampler.run(start, horizon, rng, false).end_time());
    Ok(t_grid
        .iter()
        .map(|&t| Estimate::from_samples(t, ends.iter().map(|&e| f64::from(u8::from(e > t))), seed))
        .collect())
}

/// `P_start(τ > t)` on a grid, from one set of paths.
pub fn estimate_survival(
    spec: &ChainSpec,
    start: AugmentedState,
    t_grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    spec.check_state(&start)?;
    survival_on_grid(Process::Raw(spec), start, t_grid, n_paths, seed)
}

/// Probability that a conditioned chain is still alive at each grid time.
pub fn estimate_conditioned_survival(
    chain: &ConditionedChain,
    start: AugmentedState,
    t_grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    survival_on_grid(Process::Conditioned(chain), start, t_grid, n_paths, seed)
}

/// `P(X_t = state)` along a grid, the origin counted as one state. With
/// `condition_horizon = Some(T)` only raw paths with `τ > T` are kept
/// (rejection sampling of `X^T`), and the path count of each estimate is
/// the number accepted.
#[allow(clippy::too_many_arguments)]
pub fn estimate_occupancy(
    process: Process<'_>,
    state: usize,
    start: AugmentedState,
    t_grid: &[f64],
    n_paths: usize,
    seed: u64,
    condition_horizon: Option<f64>,
) -> Result<Vec<Estimate>> {
    check_paths(n_paths)?;
    let t_last = check_grid(t_grid)?;
    let sampler = Sampler::new(process);
    if state >= sampler.n_states() {
        return Err(Error::Precondition(format!("state {state} outside 0..{}", sampler.n_states())));
    }
    let horizon = condition_horizon.unwrap_or(0.0).max(t_last).max(f64::MIN_POSITIVE);
    let rows: Vec<Option<Vec<f64>>> = run_paths(n_paths, seed, |rng, _| {
        let path = sampler.run(start, horizon, rng, true);
        if let Some(big_t) = condition_horizon {
            if !path.survives(big_t) {
                return None;
            }
        }
        Some(
            t_grid
                .iter()
                .map(|&t| f64::from(u8::from(path.state_at(t).is_some_and(|s| s.state() == state))))
                .collect(),
        )
    });
    let kept: Vec<Vec<f64>> = rows.into_iter().flatten().collect();
    if kept.len() < 2 || (kept.len() as f64) < 1e-4 * n_paths as f64 {
        return Err(Error::Infeasible(format!("only {} of {n_paths} paths survived the conditioning", kept.len())));
    }
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| Estimate::from_samples(t, kept.iter().map(|row| row[k]), seed))
        .collect())
}

/// `s_i(t - v) / s_j(t)` with a delta-method standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RatioEstimate {
    pub t: f64,
    pub v: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub numerator: Estimate,
    pub denominator: Estimate,
    pub denominator_survivors: usize,
    /// At least ten denominator paths survived.
    pub reliable: bool,
    pub n_paths: usize,
    pub seed: u64,
}

impl RatioEstimate {
    pub fn as_estimate(&self) -> Estimate {
        Estimate { t: self.t, estimate: self.estimate, stderr: self.stderr, n_paths: self.n_paths, seed: self.seed }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_tail_ratio(
    spec: &ChainSpec,
    i: AugmentedState,
    j: AugmentedState,
    v: f64,
    t: f64,
    n_paths: usize,
    seed: u64,
) -> Result<RatioEstimate> {
    if !(v >= 0.0 && t > v && t.is_finite()) {
        return Err(Error::Precondition(format!("need t > v >= 0, got t={t}, v={v}")));
    }
    spec.check_state(&i)?;
    spec.check_state(&j)?;
    check_paths(n_paths)?;
    let sampler = Sampler::new(Process::Raw(spec));
    let n = n_paths as f64;
    let (a, b): (Vec<f64>, Vec<f64>) = if i == j {
        // Common random numbers: one path gives both indicators.
        let ends = run_paths(n_paths, seed, |rng, _| sampler.run(j, t, rng, false).end_time());
        ends.iter().map(|&e| (f64::from(u8::from(e > t - v)), f64::from(u8::from(e > t)))).unzip()
    } else {
        let num = run_paths(n_paths, seed, |rng, _| sampler.run(i, t - v, rng, false).end_time());
        let den = run_paths(n_paths, seed ^ SECOND_FAMILY, |rng, _| sampler.run(j, t, rng, false).end_time());
        (
            num.iter().map(|&e| f64::from(u8::from(e > t - v))).collect(),
            den.iter().map(|&e| f64::from(u8::from(e > t))).collect(),
        )
    };
    let numerator = Estimate::from_samples(t - v, a.iter().copied(), seed);
    let denominator = Estimate::from_samples(t, b.iter().copied(), seed);
    let survivors = b.iter().filter(|x| **x > 0.0).count();
    let (ma, mb) = (numerator.estimate, denominator.estimate);
    let (estimate, stderr) = if i == j && v == 0.0 {
        (1.0, 0.0)
    } else if mb == 0.0 {
        (f64::NAN, f64::NAN)
    } else {
        let cov = if i == j {
            a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0) / n
        } else {
            0.0
        };
        let r = ma / mb;
        let var = numerator.stderr.powi(2) / (mb * mb) + r * r * denominator.stderr.powi(2) / (mb * mb)
            - 2.0 * r * cov / (mb * mb);
        (r, var.max(0.0).sqrt())
    };
    Ok(RatioEstimate {
        t,
        v,
        estimate,
        stderr,
        numerator,
        denominator,
        denominator_survivors: survivors,
        reliable: survivors >= RATIO_MIN_SURVIVORS,
        n_paths,
        seed,
    })
}

/// Estimates of `E[e^{φ(t∧τ)} h(X̂_{t∧τ})]` along a grid, with paired drift
/// statistics between grid points.
#[derive(Debug, Clone, Serialize)]
pub struct HarmonicProfile {
    pub estimates: Vec<Estimate>,
    /// `max - min` of the estimates.
    pub range: f64,
    /// Largest `|mean difference| / stderr` over pairs of grid times, with
    /// the standard error of the per-path difference.
    pub max_pair_z: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn verify_harmonic(
    spec: &ChainSpec,
    h: &SpaceFunction,
    phi: f64,
    t_grid: &[f64],
    n_paths: usize,
    seed: u64,
    start: AugmentedState,
) -> Result<HarmonicProfile> {
    check_paths(n_paths)?;
    spec.check_state(&start)?;
    if h.states.len() != spec.n_states() {
        return Err(Error::Precondition(format!(
            "h has {} state values, chain has {} states",
            h.states.len(),
            spec.n_states()
        )));
    }
    let horizon = check_grid(t_grid)?.max(f64::MIN_POSITIVE);
    let theta = spec.wait_threshold();
    let sampler = Sampler::new(Process::Raw(spec));
    let at_tau = h.origin.eval(theta);
    let values: Vec<Vec<f64>> = run_paths(n_paths, seed, |rng, _| {
        let path = sampler.run(start, horizon, rng, true);
        t_grid
            .iter()
            .map(|&t| match path.end {
                PathEnd::Tau(tau) if tau <= t => (phi * tau).exp() * at_tau,
                _ => {
                    let state = path.state_at(t).expect("alive before its end");
                    (phi * t).exp() * h.at(&state)
                }
            })
            .collect()
    });
    let estimates: Vec<Estimate> = t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| Estimate::from_samples(t, values.iter().map(|row| row[k]), seed))
        .collect();
    let (lo, hi) = estimates
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.estimate), hi.max(e.estimate)));
    let mut max_pair_z: f64 = 0.0;
    for a in 0..t_grid.len() {
        for b in a + 1..t_grid.len() {
            let (m, se, _) = mean_stderr(values.iter().map(|row| row[b] - row[a]));
            let z = if m == 0.0 { 0.0 } else { m.abs() / se };
            max_pair_z = max_pair_z.max(z);
        }
    }
    Ok(HarmonicProfile { estimates, range: hi - lo, max_pair_z })
}
