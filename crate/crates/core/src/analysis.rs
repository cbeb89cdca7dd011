//! End-to-end report: classification, decay parameters and the limit
//! vector, with an optional Monte Carlo check of the predicted tail.

use serde::Serialize;

use crate::asymptotics::{
    limit_vector_recurrent, limit_vector_transient, solve_phi, LimitScale, OriginProfile, Regime, PHI_TOL,
};
use crate::chain::{AugmentedState, ChainSpec};
use crate::error::{Error, Result};
use crate::hitting::{analyze_hitting_with_tol, TRANSIENCE_TOL};
use crate::montecarlo::{estimate_survival, Estimate};
use crate::spectral::PERRON_RESIDUAL_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Transient,
    Recurrent,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitSummary {
    pub scale: LimitScale,
    /// Value at `(0, 0)`.
    pub p0: f64,
    /// `p_i` for interior `i = 1..`.
    pub p_interior: Vec<f64>,
    pub origin_profile: OriginProfile,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    pub transience: f64,
    pub perron_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_bisection: Option<f64>,
}

/// Monte Carlo estimate of `P_{(0,0)}(τ > t)` against the limit prediction
/// (`p_0` when transient, `κ e^{-φt}` when recurrent).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimulationCheck {
    pub estimate: Estimate,
    pub predicted: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub classification: Classification,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation_level: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    pub delta: f64,
    pub mu_c: f64,
    pub alpha_c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitSummary>,
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationCheck>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AnalysisOptions {
    pub transience_tol: f64,
    /// Paths for the optional Monte Carlo check.
    pub mc_paths: Option<usize>,
    pub mc_time: f64,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { transience_tol: TRANSIENCE_TOL, mc_paths: None, mc_time: 10.0, seed: 0 }
    }
}

pub fn analyze(spec: &ChainSpec, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let report = spec.validate();
    if !report.is_valid() {
        return Err(Error::Validation(report));
    }
    let ha = analyze_hitting_with_tol(spec, opts.transience_tol)?;
    let mut out = AnalysisReport {
        classification: if ha.transient { Classification::Transient } else { Classification::Recurrent },
        regime: None,
        truncation_level: ha.truncation_level,
        beta: None,
        delta: ha.delta,
        mu_c: ha.mu_c,
        alpha_c: ha.alpha_c,
        phi: None,
        kappa: None,
        limit: None,
        tolerances: Tolerances {
            transience: opts.transience_tol,
            perron_residual: PERRON_RESIDUAL_TOL,
            phi_bisection: None,
        },
        simulation: None,
    };
    let predicted: Option<f64>;
    if ha.transient {
        let p = limit_vector_transient(spec, &ha)?;
        predicted = Some(p.p0());
        out.limit = Some(summary(&p));
        out.beta = Some(ha.beta);
    } else {
        let sol = solve_phi(spec)?;
        out.regime = Some(sol.regime);
        out.tolerances.phi_bisection = Some(PHI_TOL);
        out.phi = Some(sol.phi);
        if sol.regime == Regime::AlphaPositive {
            out.kappa = Some(sol.kappa);
            out.limit = Some(summary(&limit_vector_recurrent(spec, &sol)?));
            predicted = Some(sol.kappa * (-sol.phi * opts.mc_time).exp());
        } else {
            predicted = None;
        }
    }
    if let Some(n) = opts.mc_paths {
        let estimate = estimate_survival(spec, AugmentedState::ORIGIN, &[opts.mc_time], n, opts.seed)?[0];
        let predicted = predicted.unwrap_or(f64::NAN);
        out.simulation = Some(SimulationCheck { estimate, predicted, z: estimate.z_score(predicted) });
    }
    Ok(out)
}

fn summary(p: &crate::asymptotics::LimitVector) -> LimitSummary {
    LimitSummary { scale: p.scale, p0: p.p0(), p_interior: p.p_interior().to_vec(), origin_profile: p.p.origin }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::build_birth_death;

    #[test]
    fn transient_walk_report() {
        let spec = build_birth_death(2.0, 1.0, 60, &[(1, 1.0)]).unwrap();
        let rep = analyze(&spec, &AnalysisOptions::default()).unwrap();
        assert_eq!(rep.classification, Classification::Transient);
        assert!(rep.phi.is_none() && rep.kappa.is_none() && rep.regime.is_none());
        assert!((rep.limit.as_ref().unwrap().p0 - 0.46212).abs() < 1e-5);
        assert_eq!(rep.mu_c, 0.0);
        let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(json["classification"], "transient");
        assert!(json.get("phi").is_none());
        assert!(json["beta"].is_array());
    }

    #[test]
    fn recurrent_report_with_check() {
        let spec = ChainSpec::from_triples(2, &[(0, 1, 1.0), (1, 0, 2.0)], 1.0).unwrap();
        let opts = AnalysisOptions { mc_paths: Some(20_000), mc_time: 8.0, seed: 4, ..Default::default() };
        let rep = analyze(&spec, &opts).unwrap();
        assert_eq!(rep.classification, Classification::Recurrent);
        assert_eq!(rep.regime, Some(Regime::AlphaPositive));
        assert!((rep.phi.unwrap() - 0.456842).abs() < 1e-6);
        assert!(rep.beta.is_none());
        assert!(rep.simulation.unwrap().z < 4.0);
        let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(json["regime"], "alpha-positive");
        assert_eq!(json["tolerances"]["phi_bisection"], 1e-12);
    }
}
