//! Doob transforms of the augmented chain: the limit of the chain
//! conditioned on `τ > T`, the vague limit with killing at the origin, the
//! `h^λ` reduction and the transform by a tail-coefficient vector.
//!
//! A [`ConditionedChain`] is an executable description. Interior state `i`
//! jumps to `j` at rate `q_{ij} h_j / h_i` (`j = 0` lands at `(0, 0)`), and
//! dies at rate `interior_killing[i-1]`. At the origin the holding clock `u`
//! ends in a departure with density `mass · e^{(φ-q_0)v} / J(θ)` on `[0, θ)`;
//! the remaining `1 - mass` reaches `θ-` and dies. A departure goes to `j`
//! with probability `exit_probs[j]`, unless a hazard is present, in which
//! case it is a death with probability `λ(u)/η(u)` (`η` the departure
//! hazard).

use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    window_integral, LimitScale, LimitVector, OriginProfile, ReturnCycle, SpaceFunction,
};
use crate::chain::{AugmentedState, ChainSpec};
use crate::error::{Error, Result};
use crate::hitting::{harmonic_residual, HittingSystem};

/// Rates of killing below this (relative to the exit rate) are rounding.
const KILLING_TOL: f64 = 1e-9;
/// Harmonicity tolerance for tail-coefficient vectors, relative to `max a`.
pub const HARMONIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Limit,
    Vague,
    Hlambda,
    Subexp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "tilted_exponential")]
pub struct OriginHolding {
    pub phi: f64,
    pub q0: f64,
    pub theta: f64,
    /// Probability of leaving before `θ`.
    pub mass: f64,
}

impl OriginHolding {
    fn exponent(&self) -> f64 {
        self.phi - self.q0
    }

    /// Departure density at clock `v`.
    pub fn density(&self, v: f64) -> f64 {
        if !(0.0..self.theta).contains(&v) {
            return 0.0;
        }
        let a = self.exponent();
        self.mass * (a * v).exp() / window_integral(a, self.theta)
    }

    /// Probability of a departure by clock `v`.
    pub fn cdf(&self, v: f64) -> f64 {
        let a = self.exponent();
        self.mass * window_integral(a, v.clamp(0.0, self.theta)) / window_integral(a, self.theta)
    }

    /// Departure hazard at clock `u`.
    pub fn hazard(&self, u: f64) -> f64 {
        self.density(u) / (1.0 - self.cdf(u))
    }

    /// Departure clock from `(0, u)` by inversion, given a uniform draw;
    /// `None` when the clock runs out at `θ`.
    pub fn sample_departure(&self, u: f64, uniform: f64) -> Option<f64> {
        let start = self.cdf(u);
        let target = start + uniform * (1.0 - start);
        if target >= self.mass {
            return None;
        }
        let a = self.exponent();
        let j = target / self.mass * window_integral(a, self.theta);
        let v = if a.abs() < 1e-12 { j } else { (a * j).ln_1p() / a };
        Some(v.clamp(u, self.theta * (1.0 - f64::EPSILON)))
    }
}

/// Killing hazard `λ(u) = q_0 e^{-q_0θ} / (1 - e^{-q_0(θ-u)})` at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "theorem36")]
pub struct VagueHazard {
    pub q0: f64,
    pub theta: f64,
}

impl VagueHazard {
    pub fn rate(&self, u: f64) -> f64 {
        if u >= self.theta {
            return f64::INFINITY;
        }
        self.q0 * (-self.q0 * self.theta).exp() / -(-self.q0 * (self.theta - u)).exp_m1()
    }
}

/// The function generating the transform, with its time factor `e^{φt}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HValues {
    pub states: Vec<f64>,
    pub origin: OriginProfile,
    pub time_rate: f64,
}

impl HValues {
    pub fn space_function(&self) -> SpaceFunction {
        SpaceFunction { states: self.states.clone(), origin: self.origin }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionedChain {
    pub variant: Variant,
    pub n_states: usize,
    /// `(i, j, rate)` for interior `i`; `j = 0` lands at `(0, 0)`.
    pub interior_rates: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior_killing: Option<Vec<f64>>,
    pub origin_holding: OriginHolding,
    pub exit_probs: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hazard: Option<VagueHazard>,
    pub h_values: HValues,
    pub honest: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonic_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_level: Option<usize>,
}

impl ConditionedChain {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("conditioned chain serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    /// Outgoing `(target, rate)` lists per state (index 0 unused).
    pub fn jump_table(&self) -> Vec<Vec<(usize, f64)>> {
        let mut table = vec![Vec::new(); self.n_states];
        for &(i, j, r) in &self.interior_rates {
            table[i].push((j, r));
        }
        table
    }

    pub fn killing(&self, state: usize) -> f64 {
        self.interior_killing.as_ref().map_or(0.0, |k| k[state - 1].max(0.0))
    }

    /// Probability that a departure at clock `u` is a death.
    pub fn kill_probability(&self, u: f64) -> f64 {
        match &self.hazard {
            None => 0.0,
            Some(h) => (h.rate(u) / self.origin_holding.hazard(u)).clamp(0.0, 1.0),
        }
    }

    pub fn h_at(&self, state: &AugmentedState) -> f64 {
        match *state {
            AugmentedState::Interior(i) => self.h_values.states[i],
            AugmentedState::AtOrigin(u) => self.h_values.origin.eval(u),
        }
    }
}

struct Transform<'a> {
    spec: &'a ChainSpec,
    h: Vec<f64>,
    origin: OriginProfile,
    phi: f64,
    absorbing: Option<usize>,
}

impl Transform<'_> {
    fn rates_and_killing(&self) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
        let n = self.spec.n_states();
        let mut rates = Vec::new();
        let mut killing = vec![0.0; n - 1];
        for i in 1..n {
            if Some(i) == self.absorbing {
                continue;
            }
            let mut out = 0.0;
            for j in 0..n {
                let q = self.spec.rate(i, j);
                if j == i || q == 0.0 {
                    continue;
                }
                let r = q * self.h[j] / self.h[i];
                rates.push((i, j, r));
                out += r;
            }
            let hold = self.spec.exit_rate(i) - self.phi;
            let k = hold - out;
            killing[i - 1] = if k.abs() <= KILLING_TOL * self.spec.exit_rate(i).max(1.0) { 0.0 } else { k };
        }
        (rates, killing)
    }

    fn exits(&self, weights: impl Fn(usize) -> f64) -> Vec<(usize, f64)> {
        let raw: Vec<(usize, f64)> = self.spec.origin_exits().map(|(j, r)| (j, r * weights(j))).collect();
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        raw.into_iter().map(|(j, w)| (j, w / total)).collect()
    }

    fn build(
        self,
        variant: Variant,
        holding: OriginHolding,
        exits: Vec<(usize, f64)>,
        hazard: Option<VagueHazard>,
        honest_hint: bool,
        harmonic_residual: Option<f64>,
    ) -> ConditionedChain {
        let (interior_rates, killing) = self.rates_and_killing();
        let no_killing = killing.iter().all(|k| *k == 0.0);
        ConditionedChain {
            variant,
            n_states: self.spec.n_states(),
            interior_rates,
            interior_killing: if no_killing { None } else { Some(killing) },
            origin_holding: holding,
            exit_probs: exits,
            hazard,
            h_values: HValues { states: self.h, origin: self.origin, time_rate: self.phi },
            honest: honest_hint,
            harmonic_residual,
            truncation_level: self.spec.truncation_level(),
        }
    }
}

fn unit_window(spec: &ChainSpec) -> OriginProfile {
    OriginProfile::Window { tilt: 0.0, q0: spec.q0(), theta: spec.wait_threshold(), scale: 1.0 }
}

/// The limit of the chain conditioned on `τ > T`, `T → ∞`, from its limit
/// vector. For a transient truncation the top state stands for escape and is
/// made absorbing.
pub fn make_limit_chain(spec: &ChainSpec, p: &LimitVector) -> Result<ConditionedChain> {
    if p.p.states.len() != spec.n_states() {
        return Err(Error::Precondition("limit vector does not match the chain".into()));
    }
    if let Some(bad) = p.p.states.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Precondition(format!("limit vector entry {bad} is not positive")));
    }
    let q0 = spec.q0();
    let theta = spec.wait_threshold();
    let absorbing = match p.scale {
        LimitScale::Probability => spec.truncation_level(),
        LimitScale::DecayNormalized => None,
    };
    let t = Transform { spec, h: p.p.states.clone(), origin: p.p.origin, phi: p.phi, absorbing };
    let weighted: f64 = spec.origin_exits().map(|(j, r)| r * t.h[j]).sum();
    let mass = window_integral(p.phi - q0, theta) * weighted / t.h[0];
    if mass > 1.0 + 1e-9 {
        return Err(Error::Precondition(format!(
            "p is not superharmonic at the origin (departure mass {mass})"
        )));
    }
    let holding = OriginHolding { phi: p.phi, q0, theta, mass: mass.min(1.0) };
    let exits = t.exits(|j| t.h[j]);
    let honest = (1.0 - mass).abs() <= 1e-9;
    let mut chain = t.build(Variant::Limit, holding, exits, None, honest, None);
    chain.honest = chain.honest && chain.interior_killing.is_none();
    Ok(chain)
}

/// The vague limit: interior unchanged, `h_{(0,u)} = (1-e^{-q_0(θ-u)})/(1-e^{-q_0θ})`,
/// death at the origin with hazard `λ(u)`.
pub fn make_vague_limit(spec: &ChainSpec) -> Result<ConditionedChain> {
    let q0 = spec.q0();
    let theta = spec.wait_threshold();
    let t = Transform { spec, h: vec![1.0; spec.n_states()], origin: unit_window(spec), phi: 0.0, absorbing: None };
    let exits = t.exits(|_| 1.0);
    let holding = OriginHolding { phi: 0.0, q0, theta, mass: 1.0 };
    Ok(t.build(Variant::Vague, holding, exits, Some(VagueHazard { q0, theta }), false, None))
}

/// The transform by `h^λ(i, t) = F_{i,0}(λ) e^{λt}`. The origin keeps its
/// clock; the chain dies only at `(0, θ-)`, with probability `1 - I(λ)` per
/// visit.
pub fn make_hlambda(spec: &ChainSpec, lambda: f64) -> Result<ConditionedChain> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("tilt {lambda} must be nonnegative")));
    }
    let cycle = ReturnCycle::with_system(spec, HittingSystem::with_classification(spec, false));
    let ret = cycle.eval(lambda);
    if !ret.finite {
        return Err(Error::Precondition(format!("F(λ) is infinite at λ = {lambda}")));
    }
    if ret.i > 1.0 + 1e-12 {
        return Err(Error::Precondition(format!("I(λ) = {} > 1: h is not superharmonic", ret.i)));
    }
    let mgf = cycle.hitting(lambda);
    if mgf.values.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::Precondition("hitting transform has a nonpositive entry".into()));
    }
    let q0 = spec.q0();
    let theta = spec.wait_threshold();
    let i_lambda = ret.i.min(1.0);
    let mut h = Vec::with_capacity(spec.n_states());
    h.push(1.0);
    h.extend_from_slice(&mgf.values);
    let origin = OriginProfile::HLambda { lambda, q0, theta, i_lambda };
    let t = Transform { spec, h, origin, phi: lambda, absorbing: None };
    let exits = t.exits(|j| t.h[j]);
    let holding = OriginHolding { phi: lambda, q0, theta, mass: i_lambda };
    let honest = (1.0 - i_lambda).abs() <= 1e-9;
    let mut chain = t.build(Variant::Hlambda, holding, exits, None, honest, None);
    chain.honest = chain.honest && chain.interior_killing.is_none();
    Ok(chain)
}

/// The transform by `h_i = 1 + a_i / ((e^{q_0θ}-1) m)`, `m = Σ q_{0,i} a_i / q_0`,
/// with the vague-limit profile at the origin. Honest when `a` is harmonic
/// for the killed chain away from the truncation boundary.
pub fn make_subexp_weak(spec: &ChainSpec, a: &[f64]) -> Result<ConditionedChain> {
    if a.len() != spec.n_interior() {
        return Err(Error::Precondition(format!(
            "tail coefficients have length {}, expected {}",
            a.len(),
            spec.n_interior()
        )));
    }
    if let Some(bad) = a.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Precondition(format!("a_{} must be finite and nonnegative", bad + 1)));
    }
    let q0 = spec.q0();
    let theta = spec.wait_threshold();
    let m: f64 = spec.origin_exits().filter(|&(j, _)| j != 0).map(|(j, r)| r * a[j - 1]).sum::<f64>() / q0;
    if !(m > 0.0) {
        return Err(Error::Precondition("a vanishes on every exit target of the origin (m = 0)".into()));
    }
    let scale = (q0 * theta).exp_m1() * m;
    let mut h = Vec::with_capacity(spec.n_states());
    h.push(1.0);
    h.extend(a.iter().map(|ai| 1.0 + ai / scale));
    let a_max = a.iter().cloned().fold(0.0, f64::max);
    let residual = harmonic_residual(spec, a).iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
    let honest = residual <= HARMONIC_TOL * a_max;
    let t = Transform { spec, h, origin: unit_window(spec), phi: 0.0, absorbing: None };
    let exits = t.exits(|j| t.h[j]);
    let holding = OriginHolding { phi: 0.0, q0, theta, mass: 1.0 };
    Ok(t.build(Variant::Subexp, holding, exits, None, honest, Some(residual)))
}
