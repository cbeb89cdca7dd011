//! The chain killed at the origin: never-hit probabilities, hitting-time
//! moment generating functions, decay parameters and birth–death closed
//! forms.
//!
//! Vectors over the interior are indexed by `state - 1`.
//!
//! A finite chain hits the origin with probability one, so transience is a
//! property of the infinite chain a truncation stands in for. When the chain
//! declares a truncation level `N`, the never-hit probability of state `i` is
//! taken as the probability of reaching `N` before `0`, and the chain is
//! reported transient when the probability of leaving the origin and never
//! returning exceeds the transience tolerance. For transient chains the hitting systems treat `N` as the point
//! at infinity: it never hits the origin.

use serde::Serialize;

use crate::chain::{is_birth_death, ChainSpec};
use crate::error::{Error, Result};
use crate::spectral::{perron_decay, solve_linear, DenseMatrix, KilledGenerator, MMatrixFactor};

/// Never-hit probabilities at or below this are treated as zero.
pub const TRANSIENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct HittingAnalysis {
    /// `β_i`, probability of never hitting the origin from `i`.
    pub beta: Vec<f64>,
    pub mu_c: f64,
    pub alpha_c: f64,
    /// `Δ = Σ_j q_{0,j} β_j / q_0`.
    pub delta: f64,
    pub transient: bool,
    pub truncation_level: Option<usize>,
}

/// Hitting-time transform at one tilt.
#[derive(Debug, Clone, Serialize)]
pub struct MgfValue {
    pub lambda: f64,
    /// `F_{i,0}(λ) = E e^{λ τ_0^{(i)}}` (restricted to `τ_0 < ∞`).
    pub values: Vec<f64>,
    /// `F'_{i,0}(λ)`.
    pub derivs: Vec<f64>,
    pub finite: bool,
}

/// Never-hit probabilities with the default tolerance.
pub fn never_hit_prob(spec: &ChainSpec) -> Result<Vec<f64>> {
    never_hit_prob_with_tol(spec, TRANSIENCE_TOL)
}

pub fn never_hit_prob_with_tol(spec: &ChainSpec, tol: f64) -> Result<Vec<f64>> {
    let n_int = spec.n_interior();
    let Some(top) = spec.truncation_level() else {
        return Ok(vec![0.0; n_int]);
    };
    let states: Vec<usize> = (1..spec.n_states()).filter(|&i| i != top).collect();
    let gen = KilledGenerator::on_states(spec, &states);
    let escape_rates: Vec<f64> = states.iter().map(|&i| spec.rate(i, top)).collect();
    let reach_top = solve_linear(&gen.shifted_negation(0.0), &escape_rates)?;
    let mut beta = vec![0.0; n_int];
    for (&i, p) in states.iter().zip(&reach_top) {
        beta[i - 1] = p.clamp(0.0, 1.0);
    }
    beta[top - 1] = 1.0;
    let delta = escape_from_origin(spec, &beta);
    if !(delta > tol) {
        beta.iter_mut().for_each(|b| *b = 0.0);
    }
    Ok(beta)
}

/// The linear hitting system of a chain, set up once for repeated tilts.
#[derive(Debug, Clone)]
pub struct HittingSystem {
    n_interior: usize,
    gen: KilledGenerator,
    transient: bool,
}

impl HittingSystem {
    pub fn new(spec: &ChainSpec) -> Result<Self> {
        let beta = never_hit_prob(spec)?;
        let transient = beta.iter().any(|b| *b > 0.0);
        Ok(Self::with_classification(spec, transient))
    }

    /// Builds the system for a known classification.
    pub fn with_classification(spec: &ChainSpec, transient: bool) -> Self {
        let gen = match (transient, spec.truncation_level()) {
            (true, Some(top)) => {
                let states: Vec<usize> = (1..spec.n_states()).filter(|&i| i != top).collect();
                KilledGenerator::on_states(spec, &states)
            }
            _ => KilledGenerator::from_spec(spec),
        };
        HittingSystem { n_interior: spec.n_interior(), gen, transient }
    }

    pub fn is_transient(&self) -> bool {
        self.transient
    }

    /// `F(λ)` and `F'(λ)` from `M(λ) F = r`, `M(λ) F' = F` with
    /// `M(λ) = -Q̃ - λI` and `r_i = q_{i,0}`. The transform is flagged
    /// infinite when `M(λ)` is not a nonsingular M-matrix.
    pub fn mgf(&self, lambda: f64) -> MgfValue {
        let mut values = vec![0.0; self.n_interior];
        let mut derivs = vec![0.0; self.n_interior];
        let infinite = |lambda| MgfValue {
            lambda,
            values: vec![f64::INFINITY; self.n_interior],
            derivs: vec![f64::INFINITY; self.n_interior],
            finite: false,
        };
        let Some(factor) = MMatrixFactor::new(&self.gen.shifted_negation(lambda)) else {
            return infinite(lambda);
        };
        let f = factor.solve(self.gen.into_origin());
        if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return infinite(lambda);
        }
        let df = factor.solve(&f);
        if df.iter().any(|v| !v.is_finite()) {
            return infinite(lambda);
        }
        for (k, &state) in self.gen.states().iter().enumerate() {
            values[state - 1] = f[k];
            derivs[state - 1] = df[k];
        }
        MgfValue { lambda, values, derivs, finite: true }
    }
}

pub fn hitting_mgf(spec: &ChainSpec, lambda: f64) -> Result<MgfValue> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("tilt {lambda} must be nonnegative")));
    }
    Ok(HittingSystem::new(spec)?.mgf(lambda))
}

/// Closed-form root `γ_λ` with `F_{i,0}(λ) = γ_λ^i` for the nearest-neighbour
/// walk with up rate `b` and down rate `d`.
pub fn bd_gamma(b: f64, d: f64, lambda: f64) -> Result<f64> {
    if !(b > 0.0 && d > 0.0) {
        return Err(Error::Domain(format!("rates b={b}, d={d} must be positive")));
    }
    let top = b + d - 2.0 * (b * d).sqrt();
    if !(lambda >= 0.0) || lambda > top * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::Domain(format!("tilt {lambda} outside [0, {top}]")));
    }
    let s = b + d - lambda;
    let disc = (s * s - 4.0 * b * d).max(0.0);
    Ok((s - disc.sqrt()) / (2.0 * b))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayParams {
    pub mu_c: f64,
    pub alpha_c: f64,
    pub transient: bool,
    pub truncation_level: Option<usize>,
}

/// `α^C` from the Perron root of the killed generator. A finite chain has
/// finitely many states feeding the origin, so `μ^C = α^C`; transient
/// chains leak mass and report `μ^C = 0`.
pub fn decay_params(spec: &ChainSpec) -> Result<DecayParams> {
    let beta = never_hit_prob(spec)?;
    decay_params_given(spec, beta.iter().any(|b| *b > 0.0))
}

fn decay_params_given(spec: &ChainSpec, transient: bool) -> Result<DecayParams> {
    let alpha_c = perron_decay(&KilledGenerator::from_spec(spec))?.decay;
    Ok(DecayParams {
        mu_c: if transient { 0.0 } else { alpha_c },
        alpha_c,
        transient,
        truncation_level: spec.truncation_level(),
    })
}

pub fn analyze_hitting(spec: &ChainSpec) -> Result<HittingAnalysis> {
    analyze_hitting_with_tol(spec, TRANSIENCE_TOL)
}

pub fn analyze_hitting_with_tol(spec: &ChainSpec, tol: f64) -> Result<HittingAnalysis> {
    let beta = never_hit_prob_with_tol(spec, tol)?;
    let transient = beta.iter().any(|b| *b > 0.0);
    let decay = decay_params_given(spec, transient)?;
    let delta = escape_from_origin(spec, &beta);
    Ok(HittingAnalysis {
        beta,
        mu_c: decay.mu_c,
        alpha_c: decay.alpha_c,
        delta,
        transient,
        truncation_level: spec.truncation_level(),
    })
}

fn escape_from_origin(spec: &ChainSpec, beta: &[f64]) -> f64 {
    spec.origin_exits()
        .filter(|&(j, _)| j != 0)
        .map(|(j, r)| r * beta[j - 1])
        .sum::<f64>()
        / spec.q0()
}

/// The harmonic function of a birth–death chain killed at the origin,
/// normalised by `h_1 = 1` (and `h_0 = 0`), from
/// `b_i (h_{i+1} - h_i) = d_i (h_i - h_{i-1})`.
///
/// The recursion is run up to the top state; harmonicity holds at every
/// interior state below it. Only the neighbour structure is checked.
pub fn harmonic_vector_bd(spec: &ChainSpec) -> Result<Vec<f64>> {
    let n = spec.n_states();
    if n < 2 || !is_birth_death(spec) {
        return Err(Error::Structure("not a nearest-neighbour birth–death chain".into()));
    }
    let mut h = vec![0.0; n];
    h[1] = 1.0;
    for i in 1..n - 1 {
        let b = spec.rate(i, i + 1);
        let d = spec.rate(i, i - 1);
        if b <= 0.0 {
            return Err(Error::Structure(format!("state {i} has no upward rate")));
        }
        h[i + 1] = h[i] + d * (h[i] - h[i - 1]) / b;
    }
    Ok(h[1..].to_vec())
}

/// `(Q̃a)_i` over the interior, with `a` given over the interior and the
/// truncation level (if any) left out.
pub fn harmonic_residual(spec: &ChainSpec, a: &[f64]) -> Vec<f64> {
    let gen = KilledGenerator::from_spec(spec);
    let qa = gen.matrix().matvec(a);
    qa.into_iter()
        .enumerate()
        .map(|(k, v)| if Some(k + 1) == spec.truncation_level() { 0.0 } else { v })
        .collect()
}

/// `-Q̃ - λI` for callers that need the raw system.
pub fn shifted_system(spec: &ChainSpec, lambda: f64) -> DenseMatrix {
    KilledGenerator::from_spec(spec).shifted_negation(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_birth_death, poisson_chain, RateProfile};

    fn single_interior() -> ChainSpec {
        ChainSpec::from_triples(2, &[(0, 1, 1.0), (1, 0, 2.0)], 1.0).unwrap()
    }

    #[test]
    fn recurrent_walk_never_escapes() {
        let spec = build_birth_death(1.0, 2.0, 200, &[(1, 1.0)]).unwrap();
        assert!(never_hit_prob(&spec).unwrap().iter().all(|b| *b == 0.0));
    }

    #[test]
    fn transient_walk_matches_geometric_hit_probability() {
        let spec = build_birth_death(2.0, 1.0, 60, &[(1, 1.0)]).unwrap();
        let beta = never_hit_prob(&spec).unwrap();
        for i in 1..=10 {
            let want = 1.0 - 0.5f64.powi(i as i32);
            assert!((beta[i - 1] - want).abs() < 1e-12, "i={i}");
        }
        assert_eq!(beta[59], 1.0);
    }

    #[test]
    fn untruncated_chain_is_recurrent() {
        assert_eq!(never_hit_prob(&single_interior()).unwrap(), vec![0.0]);
        assert!(never_hit_prob(&poisson_chain(1.0).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn scalar_mgf() {
        let m = hitting_mgf(&single_interior(), 1.0).unwrap();
        assert!(m.finite);
        assert!((m.values[0] - 2.0).abs() < 1e-14);
        // F = q/(q-λ), F' = q/(q-λ)².
        assert!((m.derivs[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn mgf_at_zero_is_one_when_recurrent() {
        let spec = build_birth_death(1.0, 2.0, 40, &[(1, 1.0)]).unwrap();
        let m = hitting_mgf(&spec, 0.0).unwrap();
        assert!(m.values.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn mgf_at_zero_is_hit_probability_when_transient() {
        let spec = build_birth_death(2.0, 1.0, 60, &[(1, 1.0)]).unwrap();
        let beta = never_hit_prob(&spec).unwrap();
        let m = hitting_mgf(&spec, 0.0).unwrap();
        for (f, b) in m.values.iter().zip(&beta) {
            assert!((f - (1.0 - b)).abs() < 1e-10);
        }
    }

    #[test]
    fn mgf_infinite_beyond_alpha() {
        let spec = build_birth_death(1.0, 2.0, 30, &[(1, 1.0)]).unwrap();
        let alpha = decay_params(&spec).unwrap().alpha_c;
        assert!(hitting_mgf(&spec, 0.99 * alpha).unwrap().finite);
        assert!(!hitting_mgf(&spec, alpha * 1.001).unwrap().finite);
        assert!(!hitting_mgf(&single_interior(), 2.0).unwrap().finite);
        assert!(!hitting_mgf(&single_interior(), 3.0).unwrap().finite);
    }

    #[test]
    fn gamma_closed_forms() {
        assert!((bd_gamma(1.0, 2.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let mu = 3.0 - 2.0 * 2f64.sqrt();
        assert!((bd_gamma(1.0, 2.0, mu).unwrap() - 2f64.sqrt()).abs() < 1e-7);
        assert!((bd_gamma(2.0, 1.0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(bd_gamma(1.0, 2.0, 0.2), Err(Error::Domain(_))));
    }

    #[test]
    fn gamma_matches_truncated_mgf() {
        let spec = build_birth_death(1.0, 2.0, 200, &[(1, 1.0)]).unwrap();
        let mu = 3.0 - 2.0 * 2f64.sqrt();
        for frac in [0.1, 0.5, 0.9] {
            let lambda = frac * mu;
            let gamma = bd_gamma(1.0, 2.0, lambda).unwrap();
            let m = hitting_mgf(&spec, lambda).unwrap();
            for i in 1..=50 {
                let want = gamma.powi(i as i32);
                assert!((m.values[i - 1] - want).abs() <= 1e-4 * want, "λ={lambda} i={i}");
            }
        }
    }

    #[test]
    fn decay_single_state() {
        let d = decay_params(&single_interior()).unwrap();
        assert!((d.alpha_c - 2.0).abs() < 1e-12);
        assert!((d.mu_c - 2.0).abs() < 1e-12);
        assert!(!d.transient);
    }

    #[test]
    fn decay_transient_reports_zero_mu() {
        let spec = build_birth_death(2.0, 1.0, 30, &[(1, 1.0)]).unwrap();
        let d = decay_params(&spec).unwrap();
        assert!(d.transient);
        assert_eq!(d.mu_c, 0.0);
        assert_eq!(d.truncation_level, Some(30));
    }

    #[test]
    fn analysis_delta() {
        let spec = build_birth_death(2.0, 1.0, 60, &[(1, 1.0)]).unwrap();
        let ha = analyze_hitting(&spec).unwrap();
        assert!((ha.delta - 0.5).abs() < 1e-12);
        assert!(ha.transient);
    }

    #[test]
    fn harmonic_vectors() {
        let eq = build_birth_death(1.5, 1.5, 20, &[(1, 1.0)]).unwrap();
        let h = harmonic_vector_bd(&eq).unwrap();
        for (k, v) in h.iter().enumerate() {
            assert!((v - (k + 1) as f64).abs() < 1e-12);
        }
        let down = build_birth_death(1.0, 2.0, 20, &[(1, 1.0)]).unwrap();
        let h = harmonic_vector_bd(&down).unwrap();
        for (k, v) in h.iter().enumerate() {
            let i = (k + 1) as i32;
            assert!((v - (2f64.powi(i) - 1.0)).abs() < 1e-9);
        }
        let res = harmonic_residual(&down, &h);
        for (k, r) in res.iter().enumerate().take(19) {
            assert!(r.abs() <= 1e-10 * h[k], "state {}", k + 1);
        }
        let up = build_birth_death(2.0, 1.0, 20, &[(1, 1.0)]).unwrap();
        let h = harmonic_vector_bd(&up).unwrap();
        for (k, v) in h.iter().enumerate() {
            let i = (k + 1) as i32;
            assert!((v - 2.0 * (1.0 - 0.5f64.powi(i))).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_decreasing_rates() {
        let rates = RateProfile::from_fn(50, |i| 1.0 / i as f64);
        let spec = build_birth_death(rates.clone(), rates, 50, &[(1, 1.0)]).unwrap();
        let h = harmonic_vector_bd(&spec).unwrap();
        let res = harmonic_residual(&spec, &h);
        for (k, r) in res.iter().enumerate().take(49) {
            assert!(r.abs() <= 1e-10 * h[k]);
        }
    }

    #[test]
    fn harmonic_rejects_non_birth_death() {
        let spec = ChainSpec::from_triples(
            4,
            &[(0, 1, 1.0), (1, 3, 1.0), (3, 2, 1.0), (2, 1, 1.0), (2, 0, 1.0)],
            1.0,
        )
        .unwrap();
        assert!(matches!(harmonic_vector_bd(&spec), Err(Error::Structure(_))));
    }
}
