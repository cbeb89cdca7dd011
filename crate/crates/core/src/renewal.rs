//! Survival probabilities `s(t) = P(τ > t)` from the renewal equation at
//! `(0, 0)` and its convolution lifts to the other starting states.
//!
//! With `W` the length of a return cycle on `{H < θ}` and `g` its defective
//! density,
//!
//! ```text
//! s(t) = e^{-q_0θ} 1(t < θ) + ∫_t^∞ g + ∫_0^t g(u) s(t-u) du.
//! ```
//!
//! The tail `∫_t^∞ g = P(H < θ, W > t)` is evaluated directly from the
//! survival of the killed chain rather than by subtraction, so that the
//! relative accuracy of `s` does not degrade as `s` decays.

use std::fmt::Write as _;

use crate::asymptotics::PhiSolution;
use crate::chain::{AugmentedState, ChainSpec};
use crate::error::{Error, Result};
use crate::spectral::{expm_action, expm_step_matrix, KilledGenerator};

/// Quadrature points per grid step in the `g` and tail integrals.
const SUBSTEPS: usize = 4;
/// Coarsest allowed step relative to the threshold.
const MAX_STEP_FRACTION: f64 = 1.0 / 50.0;

#[derive(Debug, Clone)]
pub struct SurvivalCurve {
    pub dt: f64,
    /// `s(t_k)`, right-continuous.
    pub values: Vec<f64>,
    /// `s(t_k-)`; differs from `values` only where `s` jumps.
    pub left_limits: Vec<f64>,
    pub start: AugmentedState,
}

impl SurvivalCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        self.dt * (self.values.len().saturating_sub(1)) as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |k| k as f64 * self.dt)
    }

    /// Value at the grid point nearest `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        let k = (t / self.dt).round();
        if k < 0.0 || (t - k * self.dt).abs() > 1e-9 * self.dt.max(t) {
            return None;
        }
        self.values.get(k as usize).copied()
    }

    /// CSV with header `t,s,scaled_s`; `scaled_s = e^{φt} s(t)` when `φ` is
    /// given and empty otherwise.
    pub fn to_csv(&self, phi: Option<f64>) -> String {
        let mut out = String::from("t,s,scaled_s\n");
        for (t, s) in self.times().zip(&self.values) {
            match phi {
                Some(phi) => writeln!(out, "{t},{s:e},{:e}", (phi * t).exp() * s),
                None => writeln!(out, "{t},{s:e},"),
            }
            .expect("writing to a String");
        }
        out
    }

    pub fn scaled(&self, sol: &PhiSolution) -> Vec<f64> {
        self.times().zip(&self.values).map(|(t, s)| (sol.phi * t).exp() * s).collect()
    }
}

struct Grid {
    dt: f64,
    steps: usize,
    theta_index: usize,
}

fn grid(spec: &ChainSpec, t_max: f64, dt: f64) -> Result<Grid> {
    let theta = spec.wait_threshold();
    if !(dt > 0.0) || dt > theta * MAX_STEP_FRACTION * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "step {dt} must be positive and at most θ/50 = {}",
            theta * MAX_STEP_FRACTION
        )));
    }
    let ratio = theta / dt;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio {
        return Err(Error::Precondition(format!("θ = {theta} is not a multiple of the step {dt}")));
    }
    if !(t_max >= theta) {
        return Err(Error::Precondition(format!("horizon {t_max} must be at least θ = {theta}")));
    }
    Ok(Grid { dt, steps: (t_max / dt - 1e-9).ceil() as usize, theta_index: ratio.round() as usize })
}

/// Killed-chain quantities along a fine grid of step `dt / SUBSTEPS`.
struct Kernel {
    /// `Σ_{j≠0} (q_{0,j}/q_0) ρ_j(s)`, the return density after a jump.
    rho_mix: Vec<f64>,
    /// `Σ_{j≠0} (q_{0,j}/q_0) P_j(τ_0 > s)`.
    surv_mix: Vec<f64>,
    /// Full `ρ(t_k)` and `s^C(t_k)` on the coarse grid, when requested.
    rho_coarse: Vec<Vec<f64>>,
    surv_coarse: Vec<Vec<f64>>,
}

fn kernel(spec: &ChainSpec, g: &Grid, keep_vectors: bool) -> Result<Kernel> {
    let gen = KilledGenerator::from_spec(spec);
    let fine = g.steps * SUBSTEPS;
    let weights: Vec<f64> = gen.states().iter().map(|&j| spec.rate(0, j) / spec.q0()).collect();
    let mut rho = gen.into_origin().to_vec();
    let mut surv = vec![1.0; gen.dim()];
    let step = expm_step_matrix(&gen, g.dt / SUBSTEPS as f64)?;
    let dot = |v: &[f64]| v.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>();
    let mut k = Kernel {
        rho_mix: Vec::with_capacity(fine + 1),
        surv_mix: Vec::with_capacity(fine + 1),
        rho_coarse: Vec::new(),
        surv_coarse: Vec::new(),
    };
    for m in 0..=fine {
        if m > 0 {
            rho = step.matvec(&rho);
            surv = step.matvec(&surv);
        }
        k.rho_mix.push(dot(&rho));
        k.surv_mix.push(dot(&surv));
        if keep_vectors && m % SUBSTEPS == 0 {
            k.rho_coarse.push(rho.clone());
            k.surv_coarse.push(surv.clone());
        }
    }
    Ok(k)
}

/// Composite Simpson for `∫_0^{L} q_0 e^{-q_0 v} f(m - v/h) dv` where `f`
/// is tabulated on the fine grid, `m` is the fine index of `t` and `L` spans
/// `len` fine intervals (even).
fn simpson_against_holding(q0: f64, h: f64, table: &[f64], m: usize, len: usize) -> f64 {
    if len == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for l in 0..=len {
        let w = if l == 0 || l == len {
            1.0
        } else if l % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * q0 * (-q0 * l as f64 * h).exp() * table[m - l];
    }
    acc * h / 3.0
}

/// The defective return-cycle density and its tail on the coarse grid.
#[derive(Debug, Clone)]
pub struct RenewalKernel {
    pub dt: f64,
    /// `g(t_k-)` and `g(t_k+)`; they differ only at `θ` when the origin
    /// feeds itself.
    pub g_left: Vec<f64>,
    pub g_right: Vec<f64>,
    /// `∫_{t_k}^∞ g`.
    pub tail: Vec<f64>,
}

fn renewal_kernel_on(spec: &ChainSpec, g: &Grid, k: &Kernel) -> RenewalKernel {
    let q0 = spec.q0();
    let q00 = spec.origin_self_return();
    let theta = spec.wait_threshold();
    let h = g.dt / SUBSTEPS as f64;
    let stay = (-q0 * theta).exp();
    let mut out = RenewalKernel {
        dt: g.dt,
        g_left: Vec::with_capacity(g.steps + 1),
        g_right: Vec::with_capacity(g.steps + 1),
        tail: Vec::with_capacity(g.steps + 1),
    };
    for n in 0..=g.steps {
        let t = n as f64 * g.dt;
        let m = n * SUBSTEPS;
        let len = n.min(g.theta_index) * SUBSTEPS;
        let jump = simpson_against_holding(q0, h, &k.rho_mix, m, len);
        let atom = q00 * (-q0 * t).exp();
        out.g_left.push(jump + if n <= g.theta_index && n > 0 { atom } else { 0.0 });
        out.g_right.push(jump + if n < g.theta_index { atom } else { 0.0 });
        let holding = ((-q0 * t).exp() - stay).max(0.0);
        out.tail.push(holding + simpson_against_holding(q0, h, &k.surv_mix, m, len));
    }
    out
}

pub fn renewal_kernel(spec: &ChainSpec, t_max: f64, dt: f64) -> Result<RenewalKernel> {
    let g = grid(spec, t_max, dt)?;
    let k = kernel(spec, &g, false)?;
    Ok(renewal_kernel_on(spec, &g, &k))
}

/// `g(t)` at a single time, by Simpson's rule with 400 panels.
pub fn g_density(spec: &ChainSpec, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time {t} must be nonnegative")));
    }
    let q0 = spec.q0();
    let theta = spec.wait_threshold();
    let atom = if t < theta { spec.origin_self_return() * (-q0 * t).exp() } else { 0.0 };
    let len = t.min(theta);
    if len == 0.0 {
        return Ok(atom);
    }
    let gen = KilledGenerator::from_spec(spec);
    let weights: Vec<f64> = gen.states().iter().map(|&j| spec.rate(0, j) / q0).collect();
    const PANELS: usize = 400;
    let h = len / PANELS as f64;
    let step = expm_step_matrix(&gen, h)?;
    let mut rho = expm_action(&gen, gen.into_origin(), t - len)?;
    let mut table = Vec::with_capacity(PANELS + 1);
    for m in 0..=PANELS {
        if m > 0 {
            rho = step.matvec(&rho);
        }
        table.push(rho.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>());
    }
    Ok(atom + simpson_against_holding(q0, h, &table, PANELS, PANELS))
}

fn march(spec: &ChainSpec, g: &Grid, rk: &RenewalKernel) -> SurvivalCurve {
    let stay = (-spec.q0() * spec.wait_threshold()).exp();
    let half = 0.5 * g.dt;
    let mut left = Vec::with_capacity(g.steps + 1);
    let mut right: Vec<f64> = Vec::with_capacity(g.steps + 1);
    for n in 0..=g.steps {
        let holds = if n <= g.theta_index { stay } else { 0.0 };
        let mut rhs = holds + rk.tail[n];
        if n > 0 {
            rhs += half * rk.g_left[1] * right[n - 1];
            for j in 1..n {
                rhs += half * (rk.g_right[j] * left[n - j] + rk.g_left[j + 1] * right[n - j - 1]);
            }
        }
        let mut sl = if n > 0 { rhs / (1.0 - half * rk.g_right[0]) } else { rhs };
        sl = sl.clamp(0.0, 1.0);
        if n > 0 {
            sl = sl.min(right[n - 1]);
        }
        let sr = if n == g.theta_index { (sl - stay).max(0.0) } else { sl };
        left.push(sl);
        right.push(sr);
    }
    SurvivalCurve { dt: g.dt, values: right, left_limits: left, start: AugmentedState::ORIGIN }
}

/// `s_{(0,0)}` on `t_k = k dt`, `k ≤ ⌈t_max/dt⌉`, by trapezoidal marching of
/// the renewal equation. `θ` must be a multiple of `dt` and `dt ≤ θ/50`.
pub fn solve_renewal(spec: &ChainSpec, t_max: f64, dt: f64) -> Result<SurvivalCurve> {
    let g = grid(spec, t_max, dt)?;
    let k = kernel(spec, &g, false)?;
    let rk = renewal_kernel_on(spec, &g, &k);
    Ok(march(spec, &g, &rk))
}

/// Survival from every interior state:
/// `s_i(t) = P_i(τ_0 > t) + ∫_0^t ρ_i(u) s_{(0,0)}(t-u) du`.
fn lift_interior_all(base: &SurvivalCurve, k: &Kernel) -> Vec<Vec<f64>> {
    let steps = base.values.len() - 1;
    let half = 0.5 * base.dt;
    let dim = k.rho_coarse.first().map_or(0, Vec::len);
    let mut out = vec![Vec::with_capacity(steps + 1); dim];
    for n in 0..=steps {
        let mut acc = k.surv_coarse[n].clone();
        for j in 0..n {
            let (sl, sr) = (base.left_limits[n - j], base.values[n - j - 1]);
            for (a, (r0, r1)) in acc.iter_mut().zip(k.rho_coarse[j].iter().zip(&k.rho_coarse[j + 1])) {
                *a += half * (r0 * sl + r1 * sr);
            }
        }
        for (i, a) in acc.into_iter().enumerate() {
            out[i].push(a.clamp(0.0, 1.0));
        }
    }
    for curve in &mut out {
        for n in 1..curve.len() {
            curve[n] = curve[n].min(curve[n - 1]);
        }
    }
    out
}

/// Lifts the `(0,0)` curve to another starting state.
///
/// From `(0, u)` with `u > 0` the chain either holds out the remaining
/// window, or jumps at `v < θ-u` and then survives from the target:
/// `s_{(0,u)}(t) = e^{-q_0 t} 1(t < θ-u) + ∫_0^{t∧(θ-u)} q_0 e^{-q_0 v} s_J(t-v) dv`
/// where `s_J = Σ_j (q_{0,j}/q_0) s_j` and `s_0 = s_{(0,0)}`.
pub fn lift_survival(spec: &ChainSpec, base: &SurvivalCurve, start: AugmentedState) -> Result<SurvivalCurve> {
    spec.check_state(&start)?;
    if base.start != AugmentedState::ORIGIN {
        return Err(Error::Precondition("base curve must start from (0,0)".into()));
    }
    if let AugmentedState::AtOrigin(u) = start {
        if u == 0.0 {
            return Ok(base.clone());
        }
    }
    let g = grid(spec, base.t_max(), base.dt)?;
    if g.steps + 1 != base.values.len() {
        return Err(Error::Precondition("base curve does not match its own grid".into()));
    }
    let k = kernel(spec, &g, true)?;
    let interior = lift_interior_all(base, &k);
    let gen_states = KilledGenerator::from_spec(spec).states().to_vec();
    let u = match start {
        AugmentedState::Interior(i) => {
            let pos = gen_states.iter().position(|&s| s == i).expect("interior state");
            let values = interior[pos].clone();
            return Ok(SurvivalCurve { dt: base.dt, left_limits: values.clone(), values, start });
        }
        AugmentedState::AtOrigin(u) => u,
    };

    let q0 = spec.q0();
    let window = spec.wait_threshold() - u;
    let n_pts = base.values.len();
    let mut mix_left = vec![0.0; n_pts];
    let mut mix_right = vec![0.0; n_pts];
    for (j, r) in spec.origin_exits() {
        let w = r / q0;
        if j == 0 {
            for n in 0..n_pts {
                mix_left[n] += w * base.left_limits[n];
                mix_right[n] += w * base.values[n];
            }
        } else {
            let pos = gen_states.iter().position(|&s| s == j).expect("interior state");
            for n in 0..n_pts {
                mix_left[n] += w * interior[pos][n];
                mix_right[n] += w * interior[pos][n];
            }
        }
    }
    let dens = |v: f64| q0 * (-q0 * v).exp();
    let mut values = Vec::with_capacity(n_pts);
    for n in 0..n_pts {
        let t = n as f64 * base.dt;
        let reach = t.min(window);
        let full = ((reach / base.dt) + 1e-9).floor() as usize;
        let full = full.min(n);
        let mut acc = if t < window { (-q0 * t).exp() } else { 0.0 };
        for j in 0..full {
            let (v0, v1) = (j as f64 * base.dt, (j + 1) as f64 * base.dt);
            acc += 0.5 * base.dt * (dens(v0) * mix_left[n - j] + dens(v1) * mix_right[n - j - 1]);
        }
        let rest = reach - full as f64 * base.dt;
        if rest > 1e-12 * base.dt && full < n {
            let v0 = full as f64 * base.dt;
            let frac = rest / base.dt;
            let at_end = (1.0 - frac) * mix_left[n - full] + frac * mix_right[n - full - 1];
            acc += 0.5 * rest * (dens(v0) * mix_left[n - full] + dens(reach) * at_end);
        }
        values.push(acc.clamp(0.0, 1.0));
    }
    for n in 1..values.len() {
        values[n] = values[n].min(values[n - 1]);
    }
    Ok(SurvivalCurve { dt: base.dt, left_limits: values.clone(), values, start })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::{limit_vector_recurrent, solve_phi};
    use crate::chain::poisson_chain;

    fn single_interior() -> ChainSpec {
        ChainSpec::from_triples(2, &[(0, 1, 1.0), (1, 0, 2.0)], 1.0).unwrap()
    }

    #[test]
    fn grid_preconditions() {
        let spec = single_interior();
        assert!(matches!(solve_renewal(&spec, 5.0, 0.05), Err(Error::Precondition(_))));
        assert!(matches!(solve_renewal(&spec, 5.0, 0.015), Err(Error::Precondition(_))));
        assert!(matches!(solve_renewal(&spec, 0.5, 0.01), Err(Error::Precondition(_))));
    }

    #[test]
    fn poisson_density_is_truncated_exponential() {
        let spec = poisson_chain(1.5).unwrap();
        for t in [0.0, 0.3, 0.99] {
            assert!((g_density(&spec, t).unwrap() - 1.5 * (-1.5 * t).exp()).abs() < 1e-14);
        }
        assert_eq!(g_density(&spec, 1.2).unwrap(), 0.0);
    }

    #[test]
    fn density_integrates_to_return_probability() {
        let spec = single_interior();
        let rk = renewal_kernel(&spec, 40.0, 0.01).unwrap();
        assert_eq!(rk.g_right[0], 0.0);
        // Simpson on [0, θ] and [θ, 40], where g has a kink at θ.
        let simpson = |f: &[f64]| {
            let n = f.len() - 1;
            let inner: f64 = (1..n).map(|k| if k % 2 == 1 { 4.0 } else { 2.0 } * f[k]).sum();
            (f[0] + f[n] + inner) * rk.dt / 3.0
        };
        let integral = simpson(&rk.g_left[..=100]) + simpson(&rk.g_right[100..]);
        assert!((integral - (1.0 - (-1f64).exp())).abs() < 1e-6);
        assert!((rk.tail[0] - (1.0 - (-1f64).exp())).abs() < 1e-12);
        assert!((g_density(&spec, 0.73).unwrap() - rk.g_left[73]).abs() < 1e-9);
    }

    #[test]
    fn single_interior_density_closed_form() {
        // g(t) = ∫_0^{t∧1} e^{-v} 2 e^{-2(t-v)} dv.
        let spec = single_interior();
        for t in [0.5f64, 1.0, 2.0] {
            let reach = t.min(1.0);
            let want = 2.0 * (-2.0 * t).exp() * (reach.exp() - 1.0);
            assert!((g_density(&spec, t).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn curve_bounds() {
        let spec = single_interior();
        let c = solve_renewal(&spec, 10.0, 0.02).unwrap();
        assert_eq!(c.values[0], 1.0);
        for (k, w) in c.values.windows(2).enumerate() {
            assert!(w[1] <= w[0] && w[1] >= 0.0, "k={k}");
        }
        for (k, t) in c.times().enumerate().filter(|(_, t)| *t < 1.0) {
            assert!(c.values[k] >= (-t).exp() - 1e-12);
        }
    }

    #[test]
    fn poisson_unit_rate_plateau() {
        let c = solve_renewal(&poisson_chain(1.0).unwrap(), 25.0, 0.005).unwrap();
        let scaled = 25f64.exp() * c.values.last().unwrap();
        assert!((scaled - 2.0).abs() < 1e-2, "{scaled}");
    }

    #[test]
    fn single_interior_plateau_matches_kappa() {
        let spec = single_interior();
        let sol = solve_phi(&spec).unwrap();
        let t_max = 30.0;
        let c = solve_renewal(&spec, t_max, 0.01).unwrap();
        let scaled = c.scaled(&sol);
        assert!((scaled.last().unwrap() - sol.kappa).abs() < 1e-3 * sol.kappa);
        let lv = limit_vector_recurrent(&spec, &sol).unwrap();
        let s1 = lift_survival(&spec, &c, AugmentedState::Interior(1)).unwrap();
        let p1 = (sol.phi * t_max).exp() * s1.values.last().unwrap();
        assert!((p1 - lv.p_interior()[0]).abs() < 1e-3 * p1);
        let half = lift_survival(&spec, &c, AugmentedState::AtOrigin(0.5)).unwrap();
        let ph = (sol.phi * t_max).exp() * half.values.last().unwrap();
        assert!((ph - lv.p_origin(0.5)).abs() < 2e-3 * ph, "{ph} vs {}", lv.p_origin(0.5));
    }

    #[test]
    fn origin_lift_at_zero_is_base() {
        let spec = single_interior();
        let c = solve_renewal(&spec, 5.0, 0.02).unwrap();
        let same = lift_survival(&spec, &c, AugmentedState::AtOrigin(0.0)).unwrap();
        assert_eq!(same.values, c.values);
        let near = lift_survival(&spec, &c, AugmentedState::AtOrigin(1e-6)).unwrap();
        for (a, b) in near.values.iter().zip(&c.values) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn halving_step_is_second_order() {
        let spec = single_interior();
        let at = |dt: f64| solve_renewal(&spec, 4.0, dt).unwrap().at(4.0).unwrap();
        let (a, b, c) = (at(0.02), at(0.01), at(0.005));
        let ratio = (a - b) / (b - c);
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn csv_header_and_scaling() {
        let c = solve_renewal(&poisson_chain(1.0).unwrap(), 1.0, 0.02).unwrap();
        let csv = c.to_csv(Some(1.0));
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,s,scaled_s"));
        assert_eq!(csv.lines().count(), c.len() + 1);
        assert!(c.to_csv(None).lines().nth(1).unwrap().ends_with(','));
    }
}
