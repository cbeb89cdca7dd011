//! Return-cycle transform `I(λ)`, the decay rate `φ` with `I(φ) = 1`, and
//! the limit vectors `p` of the conditioned survival probabilities.
//!
//! A return cycle starts with the chain entering the origin. It holds there
//! for `H ~ Exp(q_0)`; if `H < θ` it jumps to `j` and the cycle ends when it
//! is next back at the origin. `g` is the defective density of the cycle
//! length on `{H < θ}` and `I(λ) = ∫ e^{λt} g(t) dt`.

use serde::{Deserialize, Serialize};

use crate::chain::{AugmentedState, ChainSpec};
use crate::error::{Error, Result};
use crate::hitting::{analyze_hitting, decay_params, HittingAnalysis, HittingSystem, MgfValue};

/// Below this `|a|` the window integral switches to its series.
const SMALL_EXPONENT: f64 = 1e-8;

/// `J_a(x) = ∫₀^x e^{a v} dv`.
pub fn window_integral(a: f64, x: f64) -> f64 {
    let ax = a * x;
    if a.abs() < SMALL_EXPONENT {
        x * (1.0 + ax / 2.0 + ax * ax / 6.0)
    } else {
        ax.exp_m1() / a
    }
}

/// `∂J_a(x)/∂a`.
pub fn window_integral_da(a: f64, x: f64) -> f64 {
    if a.abs() < SMALL_EXPONENT {
        x * x / 2.0 + a * x.powi(3) / 3.0 + a * a * x.powi(4) / 8.0
    } else {
        let e = (a * x).exp();
        (x * e * a - (e - 1.0)) / (a * a)
    }
}

/// `I(λ)` and `I'(λ)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReturnValue {
    pub lambda: f64,
    pub i: f64,
    pub i_prime: f64,
    pub finite: bool,
}

/// The return-cycle transform of a chain, evaluated through the hitting
/// transforms of the states the origin feeds:
/// `I(λ) = J_{λ-q_0}(θ) Σ_j q_{0,j} F_{j,0}(λ)` with `F_{0,0} ≡ 1`.
#[derive(Debug, Clone)]
pub struct ReturnCycle {
    system: HittingSystem,
    exits: Vec<(usize, f64)>,
    q0: f64,
    theta: f64,
}

impl ReturnCycle {
    pub fn new(spec: &ChainSpec) -> Result<Self> {
        Ok(Self::with_system(spec, HittingSystem::new(spec)?))
    }

    pub fn with_system(spec: &ChainSpec, system: HittingSystem) -> Self {
        ReturnCycle {
            system,
            exits: spec.origin_exits().collect(),
            q0: spec.q0(),
            theta: spec.wait_threshold(),
        }
    }

    pub fn system(&self) -> &HittingSystem {
        &self.system
    }

    pub fn hitting(&self, lambda: f64) -> MgfValue {
        self.system.mgf(lambda)
    }

    pub fn eval(&self, lambda: f64) -> ReturnValue {
        let mgf = self.system.mgf(lambda);
        if !mgf.finite {
            return ReturnValue { lambda, i: f64::INFINITY, i_prime: f64::INFINITY, finite: false };
        }
        let (mut sum, mut dsum) = (0.0, 0.0);
        for &(j, r) in &self.exits {
            if j == 0 {
                sum += r;
            } else {
                sum += r * mgf.values[j - 1];
                dsum += r * mgf.derivs[j - 1];
            }
        }
        let a = lambda - self.q0;
        let jw = window_integral(a, self.theta);
        let djw = window_integral_da(a, self.theta);
        ReturnValue { lambda, i: jw * sum, i_prime: djw * sum + jw * dsum, finite: true }
    }
}

pub fn return_mgf(spec: &ChainSpec, lambda: f64) -> Result<ReturnValue> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("tilt {lambda} must be nonnegative")));
    }
    Ok(ReturnCycle::new(spec)?.eval(lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    AlphaPositive,
    /// `I(α^C-) < 1`: no exponential decay rate below `α^C`.
    NoRoot,
    /// `I(φ) = 1` only in the limit `φ → α^C`, where `I'` blows up.
    DerivativeInfinite,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiSolution {
    pub phi: f64,
    pub kappa: f64,
    pub i_at_phi: f64,
    pub i_prime_at_phi: f64,
    pub bracket: (f64, f64),
    pub regime: Regime,
    pub alpha_c: f64,
    pub truncation_level: Option<usize>,
}

/// Bisection width at which `φ` is accepted, relative once `φ < 1`.
pub const PHI_TOL: f64 = 1e-12;
const BISECTION_MAX: usize = 400;

/// Finds `φ ∈ (0, α^C)` with `I(φ) = 1` by bisection.
///
/// When `I(α^C(1-10^{-k})) < 1` for `k = 6..12`, the limit `I(α^C-)` is
/// guessed by geometric extrapolation of the probes; a guess below one gives
/// [`Regime::NoRoot`], otherwise [`Regime::DerivativeInfinite`] at
/// `φ = α^C`. With no interior states (`α^C = ∞`) the upper bracket is
/// grown by doubling.
pub fn solve_phi(spec: &ChainSpec) -> Result<PhiSolution> {
    let cycle = ReturnCycle::new(spec)?;
    if cycle.system().is_transient() {
        return Err(Error::Precondition(
            "chain is transient; use the transient limit vector".into(),
        ));
    }
    let alpha = decay_params(spec)?.alpha_c;
    solve_phi_with(spec, &cycle, alpha)
}

fn solve_phi_with(spec: &ChainSpec, cycle: &ReturnCycle, alpha: f64) -> Result<PhiSolution> {
    let q0 = spec.q0();
    let theta = spec.wait_threshold();
    let below_one = |lambda: f64| {
        let v = cycle.eval(lambda);
        v.finite && v.i < 1.0
    };
    let solution = |phi: f64, bracket: (f64, f64), regime: Regime| {
        let v = cycle.eval(phi);
        let kappa = if regime == Regime::AlphaPositive {
            ((phi - q0) * theta).exp() / (phi * v.i_prime)
        } else {
            f64::NAN
        };
        PhiSolution {
            phi,
            kappa,
            i_at_phi: v.i,
            i_prime_at_phi: v.i_prime,
            bracket,
            regime,
            alpha_c: alpha,
            truncation_level: spec.truncation_level(),
        }
    };

    let hi = if alpha.is_infinite() {
        let mut hi = q0.max(1.0);
        let mut grown = 0;
        while below_one(hi) {
            hi *= 2.0;
            grown += 1;
            if grown > 200 {
                return Err(Error::NoConvergence { iterations: grown, residual: 1.0 - cycle.eval(hi).i });
            }
        }
        hi
    } else if alpha == 0.0 {
        return Ok(solution(0.0, (0.0, 0.0), Regime::NoRoot));
    } else {
        let top = alpha * (1.0 - 1e-9);
        if !below_one(top) && cycle.eval(top).finite {
            top
        } else {
            let probes: Vec<(f64, ReturnValue)> = (6..=12)
                .map(|k| {
                    let lambda = alpha * (1.0 - 10f64.powi(-k));
                    (lambda, cycle.eval(lambda))
                })
                .collect();
            if let Some(&(lambda, _)) = probes.iter().find(|(_, v)| v.finite && v.i >= 1.0) {
                lambda
            } else {
                let finite: Vec<f64> = probes.iter().filter(|(_, v)| v.finite).map(|(_, v)| v.i).collect();
                let regime = if extrapolate_limit(&finite) < 1.0 {
                    Regime::NoRoot
                } else {
                    Regime::DerivativeInfinite
                };
                return Ok(solution(alpha, (probes[probes.len() - 1].0, alpha), regime));
            }
        }
    };

    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..BISECTION_MAX {
        if hi - lo <= PHI_TOL * hi.min(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if below_one(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let phi = 0.5 * (lo + hi);
    let sol = solution(phi, (lo, hi), Regime::AlphaPositive);
    if !sol.i_prime_at_phi.is_finite() {
        return Ok(PhiSolution { regime: Regime::DerivativeInfinite, kappa: f64::NAN, ..sol });
    }
    Ok(sol)
}

/// Limit guess for a sequence converging geometrically.
fn extrapolate_limit(xs: &[f64]) -> f64 {
    match xs {
        [] => f64::NEG_INFINITY,
        [.., a, b, c] => {
            let (d1, d2) = (b - a, c - b);
            if d1 > 0.0 && d2 >= 0.0 && d2 < d1 {
                let r = d2 / d1;
                c + d2 * r / (1.0 - r)
            } else {
                *c
            }
        }
        [.., c] => *c,
    }
}

/// Profile `u ↦ h(0, u)` of a space function on the holding clock at the
/// origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OriginProfile {
    /// `scale · J_{tilt-q_0}(θ-u) / J_{tilt-q_0}(θ)`.
    Window { tilt: f64, q0: f64, theta: f64, scale: f64 },
    /// `(1 - I(λ) J(u) / J(θ)) e^{-(λ-q_0)u}` with `J = J_{λ-q_0}`.
    HLambda { lambda: f64, q0: f64, theta: f64, i_lambda: f64 },
    Constant { value: f64 },
}

impl OriginProfile {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            OriginProfile::Window { tilt, q0, theta, scale } => {
                let a = tilt - q0;
                scale * window_integral(a, theta - u) / window_integral(a, theta)
            }
            OriginProfile::HLambda { lambda, q0, theta, i_lambda } => {
                let a = lambda - q0;
                (1.0 - i_lambda * window_integral(a, u) / window_integral(a, theta)) * (-a * u).exp()
            }
            OriginProfile::Constant { value } => value,
        }
    }
}

/// A function on the augmented state space: `states[0]` is the value at
/// `(0, 0)`, `states[i]` the value at interior state `i`.
#[derive(Debug, Clone, Serialize)]
pub struct SpaceFunction {
    pub states: Vec<f64>,
    pub origin: OriginProfile,
}

impl SpaceFunction {
    pub fn at(&self, state: &AugmentedState) -> f64 {
        match *state {
            AugmentedState::Interior(i) => self.states[i],
            AugmentedState::AtOrigin(u) => self.origin.eval(u),
        }
    }

    pub fn interior(&self) -> &[f64] {
        &self.states[1..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitScale {
    /// `p_i = lim e^{φt} P_i(τ > t)`, so `p_{(0,0)} = κ`.
    DecayNormalized,
    /// `p_i = lim P_i(τ > t)`, a probability.
    Probability,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitVector {
    pub phi: f64,
    pub p: SpaceFunction,
    pub scale: LimitScale,
    pub truncation_level: Option<usize>,
}

impl LimitVector {
    pub fn p_interior(&self) -> &[f64] {
        self.p.interior()
    }

    pub fn p_origin(&self, u: f64) -> f64 {
        self.p.origin.eval(u)
    }

    pub fn p0(&self) -> f64 {
        self.p.states[0]
    }
}

/// `p_i = F_{i,0}(φ) κ`, `p_{(0,u)} = κ J(θ-u)/J(θ)`.
pub fn limit_vector_recurrent(spec: &ChainSpec, sol: &PhiSolution) -> Result<LimitVector> {
    if sol.regime != Regime::AlphaPositive {
        return Err(Error::Precondition(format!("φ regime is {:?}, not alpha-positive", sol.regime)));
    }
    let system = HittingSystem::with_classification(spec, false);
    let mgf = system.mgf(sol.phi);
    if !mgf.finite {
        return Err(Error::Numeric(format!("hitting transform infinite at φ = {}", sol.phi)));
    }
    let mut states = Vec::with_capacity(spec.n_states());
    states.push(sol.kappa);
    states.extend(mgf.values.iter().map(|f| f * sol.kappa));
    Ok(LimitVector {
        phi: sol.phi,
        p: SpaceFunction {
            states,
            origin: OriginProfile::Window {
                tilt: sol.phi,
                q0: spec.q0(),
                theta: spec.wait_threshold(),
                scale: sol.kappa,
            },
        },
        scale: LimitScale::DecayNormalized,
        truncation_level: spec.truncation_level(),
    })
}

/// `p_0 = cΔ/(e^{-q_0θ} + cΔ)` with `c = 1 - e^{-q_0θ}`,
/// `p_{(0,u)} = (1 - e^{-q_0(θ-u)})/c · p_0`, `p_i = β_i + (1-β_i) p_0`.
pub fn limit_vector_transient(spec: &ChainSpec, ha: &HittingAnalysis) -> Result<LimitVector> {
    if !(ha.delta > 0.0) {
        return Err(Error::Precondition("Δ = 0: chain is recurrent, use the recurrent limit".into()));
    }
    let q0 = spec.q0();
    let theta = spec.wait_threshold();
    let stay = (-q0 * theta).exp();
    let c = -(-q0 * theta).exp_m1();
    let p0 = c * ha.delta / (stay + c * ha.delta);
    let mut states = Vec::with_capacity(spec.n_states());
    states.push(p0);
    states.extend(ha.beta.iter().map(|b| b + (1.0 - b) * p0));
    Ok(LimitVector {
        phi: 0.0,
        p: SpaceFunction { states, origin: OriginProfile::Window { tilt: 0.0, q0, theta, scale: p0 } },
        scale: LimitScale::Probability,
        truncation_level: spec.truncation_level(),
    })
}

/// The limit vector of whichever case applies, with the φ solution when
/// the chain is recurrent.
pub fn limit_vector(spec: &ChainSpec) -> Result<(LimitVector, Option<PhiSolution>)> {
    let ha = analyze_hitting(spec)?;
    if ha.transient {
        Ok((limit_vector_transient(spec, &ha)?, None))
    } else {
        let sol = solve_phi(spec)?;
        Ok((limit_vector_recurrent(spec, &sol)?, Some(sol)))
    }
}
