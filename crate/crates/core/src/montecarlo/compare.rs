use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::paths::{Process, SamplePath, Sampler};
use super::{check_paths, mean_stderr, run_paths, SECOND_FAMILY};
use crate::chain::{AugmentedState, ChainSpec};
use crate::conditioned::ConditionedChain;
use crate::error::{Error, Result};

const MIN_ACCEPTANCE: f64 = 1e-4;
const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StateOccupation {
    pub state: usize,
    /// Fraction of `[0, s]` spent in `state` under rejection sampling.
    pub rejection: f64,
    pub conditioned: f64,
    pub diff: f64,
    pub stderr: f64,
    pub z: f64,
}

/// Rejection-sampled `X^T` against a directly simulated conditioned chain on
/// the window `[0, s]`, both started at `(0, 0)`.
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceReport {
    pub horizon: f64,
    pub window: f64,
    pub n_proposals: usize,
    pub n_accepted: usize,
    pub acceptance_rate: f64,
    pub n_conditioned: usize,
    pub occupation: Vec<StateOccupation>,
    pub max_abs_diff: f64,
    pub max_abs_z: f64,
    /// Two-sample chi-square on the number of jumps in `[0, s]`.
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    pub seed: u64,
}

struct Summary {
    occupation: Vec<f64>,
    jumps: usize,
}

fn summarize(path: &SamplePath, n_states: usize, s: f64) -> Summary {
    let mut occupation = path.occupation(n_states, s);
    for x in &mut occupation {
        *x /= s;
    }
    Summary { occupation, jumps: path.jumps_before(s) }
}

pub fn conditioned_vs_rejection(
    spec: &ChainSpec,
    cond: &ConditionedChain,
    horizon: f64,
    window: f64,
    n_paths: usize,
    seed: u64,
) -> Result<DivergenceReport> {
    check_paths(n_paths)?;
    if !(window > 0.0 && window <= horizon && horizon.is_finite()) {
        return Err(Error::Precondition(format!("need 0 < s <= T, got s={window}, T={horizon}")));
    }
    if cond.n_states != spec.n_states() {
        return Err(Error::Precondition(format!(
            "conditioned chain has {} states, spec has {}",
            cond.n_states,
            spec.n_states()
        )));
    }
    let n = spec.n_states();
    let start = AugmentedState::ORIGIN;

    let raw = Sampler::new(Process::Raw(spec));
    let proposals = run_paths(n_paths, seed, |rng, _| {
        let path = raw.run(start, horizon, rng, true);
        path.survives(horizon).then(|| summarize(&path, n, window))
    });
    let accepted: Vec<Summary> = proposals.into_iter().flatten().collect();
    let acceptance_rate = accepted.len() as f64 / n_paths as f64;
    if acceptance_rate < MIN_ACCEPTANCE || accepted.len() < 2 {
        return Err(Error::Infeasible(format!(
            "rejection acceptance {acceptance_rate:e} ({} of {n_paths} paths) is below {MIN_ACCEPTANCE:e}",
            accepted.len()
        )));
    }

    let sampler = Sampler::new(Process::Conditioned(cond));
    let direct = run_paths(n_paths, seed ^ SECOND_FAMILY, |rng, _| {
        summarize(&sampler.run(start, window, rng, true), n, window)
    });

    let occupation: Vec<StateOccupation> = (0..n)
        .map(|state| {
            let (a, sa, _) = mean_stderr(accepted.iter().map(|x| x.occupation[state]));
            let (b, sb, _) = mean_stderr(direct.iter().map(|x| x.occupation[state]));
            let diff = a - b;
            let stderr = (sa * sa + sb * sb).sqrt();
            let z = if diff == 0.0 { 0.0 } else { diff.abs() / stderr };
            StateOccupation { state, rejection: a, conditioned: b, diff, stderr, z }
        })
        .collect();
    let max_abs_diff = occupation.iter().map(|o| o.diff.abs()).fold(0.0, f64::max);
    let max_abs_z = occupation.iter().map(|o| o.z).fold(0.0, f64::max);

    let (chi_square, dof) = two_sample_chi_square(
        &histogram(accepted.iter().map(|x| x.jumps)),
        &histogram(direct.iter().map(|x| x.jumps)),
    );
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).expect("positive degrees of freedom").sf(chi_square)
    };

    Ok(DivergenceReport {
        horizon,
        window,
        n_proposals: n_paths,
        n_accepted: accepted.len(),
        acceptance_rate,
        n_conditioned: direct.len(),
        occupation,
        max_abs_diff,
        max_abs_z,
        chi_square,
        dof,
        p_value,
        seed,
    })
}

fn histogram(counts: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut h = Vec::new();
    for c in counts {
        if c >= h.len() {
            h.resize(c + 1, 0.0);
        }
        h[c] += 1.0;
    }
    h
}

/// Homogeneity chi-square for two samples of counts. Adjacent bins are
/// pooled until both expected counts reach five; a short last group joins
/// its neighbour.
fn two_sample_chi_square(a: &[f64], b: &[f64]) -> (f64, usize) {
    let (na, nb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let total = na + nb;
    let len = a.len().max(b.len());
    let get = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut ga, mut gb) = (0.0, 0.0);
    for k in 0..len {
        ga += get(a, k);
        gb += get(b, k);
        let pooled = ga + gb;
        if pooled * na.min(nb) / total >= MIN_EXPECTED {
            groups.push((ga, gb));
            ga = 0.0;
            gb = 0.0;
        }
    }
    if ga + gb > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += ga;
                last.1 += gb;
            }
            None => groups.push((ga, gb)),
        }
    }
    if groups.len() < 2 {
        return (0.0, 0);
    }
    let stat = groups
        .iter()
        .map(|&(x, y)| {
            let m = x + y;
            let (ea, eb) = (m * na / total, m * nb / total);
            (x - ea).powi(2) / ea + (y - eb).powi(2) / eb
        })
        .sum();
    (stat, groups.len() - 1)
}
