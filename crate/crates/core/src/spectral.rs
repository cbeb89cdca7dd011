//! Dense numerical kernels for the killed generator.
//!
//! Everything here is plain row-major `f64` algebra. Eliminations skip
//! structurally zero entries, so banded generators (birth–death chains) cost
//! `O(n · bandwidth²)` rather than `O(n³)`.

use crate::chain::ChainSpec;
use crate::error::{Error, Result};

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix must be square");
            data.extend_from_slice(row);
        }
        DenseMatrix { n, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves `m x = r` by Gaussian elimination with partial pivoting.
///
/// Fails with [`Error::Singular`] when a pivot falls below
/// `n · ε · max|m|`, and with [`Error::Numeric`] when the residual exceeds
/// `1e-10 · (1 + ‖r‖∞)`.
pub fn solve_linear(m: &DenseMatrix, r: &[f64]) -> Result<Vec<f64>> {
    let n = m.n;
    assert_eq!(r.len(), n, "right-hand side must conform");
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = m.data.clone();
    let mut b = r.to_vec();
    let floor = (n as f64) * f64::EPSILON * m.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let (piv_row, piv) = (k..n)
            .map(|i| (i, a[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv <= floor {
            return Err(Error::Singular { pivot: piv });
        }
        if piv_row != k {
            for j in 0..n {
                a.swap(k * n + j, piv_row * n + j);
            }
            b.swap(k, piv_row);
        }
        let last = last_nonzero(&a[k * n..(k + 1) * n]).max(k);
        let pivot = a[k * n + k];
        for i in k + 1..n {
            let f = a[i * n + k];
            if f == 0.0 {
                continue;
            }
            let l = f / pivot;
            a[i * n + k] = 0.0;
            for j in k + 1..=last {
                a[i * n + j] -= l * a[k * n + j];
            }
            b[i] -= l * b[k];
        }
    }
    let x = back_substitute(&a, n, b);
    let residual = m
        .matvec(&x)
        .iter()
        .zip(r)
        .fold(0.0f64, |acc, (mx, ri)| acc.max((mx - ri).abs()));
    if residual > 1e-10 * (1.0 + norm_inf(r)) {
        return Err(Error::Numeric(format!("linear solve residual {residual:e} too large")));
    }
    Ok(x)
}

fn last_nonzero(row: &[f64]) -> usize {
    row.iter().rposition(|v| *v != 0.0).unwrap_or(0)
}

fn back_substitute(upper: &[f64], n: usize, mut b: Vec<f64>) -> Vec<f64> {
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= upper[i * n + j] * b[j];
        }
        b[i] = s / upper[i * n + i];
    }
    b
}

/// LU factors of a nonsingular M-matrix, computed without pivoting.
#[derive(Debug, Clone)]
pub struct MMatrixFactor {
    n: usize,
    lu: Vec<f64>,
}

impl MMatrixFactor {
    /// Factors a Z-matrix. Returns `None` unless every pivot is positive,
    /// which for Z-matrices is exactly the nonsingular M-matrix property.
    pub fn new(m: &DenseMatrix) -> Option<Self> {
        let n = m.n;
        let mut a = m.data.clone();
        for k in 0..n {
            let pivot = a[k * n + k];
            if !(pivot > 0.0 && pivot.is_finite()) {
                return None;
            }
            let last = last_nonzero(&a[k * n..(k + 1) * n]).max(k);
            for i in k + 1..n {
                let f = a[i * n + k];
                if f == 0.0 {
                    continue;
                }
                let l = f / pivot;
                a[i * n + k] = l;
                for j in k + 1..=last {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
        }
        Some(MMatrixFactor { n, lu: a })
    }

    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = r.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                let l = self.lu[i * n + k];
                if l != 0.0 {
                    s -= l * y[k];
                }
            }
            y[i] = s;
        }
        back_substitute(&self.lu, n, y)
    }
}

/// Generator of the chain killed on hitting the origin, restricted to a set
/// of interior states. Off-diagonals are `q_ij`, the diagonal is `-q_i` with
/// the full exit rate, so rates to the origin (or to any dropped state) act
/// as killing.
#[derive(Debug, Clone)]
pub struct KilledGenerator {
    states: Vec<usize>,
    matrix: DenseMatrix,
    into_origin: Vec<f64>,
}

impl KilledGenerator {
    /// The killed generator on all of `C = {1..n-1}`.
    pub fn from_spec(spec: &ChainSpec) -> Self {
        let states: Vec<usize> = (1..spec.n_states()).collect();
        Self::on_states(spec, &states)
    }

    /// The killed generator on `states`, a subset of the interior; jumps out
    /// of the subset are killing.
    pub fn on_states(spec: &ChainSpec, states: &[usize]) -> Self {
        let m = states.len();
        let mut matrix = DenseMatrix::zeros(m);
        for (a, &i) in states.iter().enumerate() {
            for (b, &j) in states.iter().enumerate() {
                let v = if a == b { -spec.exit_rate(i) } else { spec.rate(i, j) };
                matrix.set(a, b, v);
            }
        }
        let into_origin = states.iter().map(|&i| spec.rate(i, 0)).collect();
        KilledGenerator { states: states.to_vec(), matrix, into_origin }
    }

    /// Builds directly from a generator matrix and its rates into the origin.
    pub fn from_matrix(matrix: DenseMatrix, into_origin: Vec<f64>) -> Self {
        let states = (1..=matrix.n()).collect();
        KilledGenerator { states, matrix, into_origin }
    }

    pub fn dim(&self) -> usize {
        self.matrix.n()
    }

    /// Chain index of each row.
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// Rates `q_{i,0}` into the origin, per row.
    pub fn into_origin(&self) -> &[f64] {
        &self.into_origin
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.dim()).fold(0.0f64, |m, i| m.max(-self.matrix.get(i, i)))
    }

    pub fn min_exit_rate(&self) -> f64 {
        (0..self.dim()).fold(f64::INFINITY, |m, i| m.min(-self.matrix.get(i, i)))
    }

    /// Per-row killing rate `-(Σ_j Q̃_ij)`.
    pub fn killing_rates(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| -self.matrix.row(i).iter().sum::<f64>()).collect()
    }

    /// `-Q̃ - λ I`, the matrix whose M-matrix property decides `λ < α`.
    pub fn shifted_negation(&self, lambda: f64) -> DenseMatrix {
        let n = self.dim();
        let mut m = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let v = -self.matrix.get(i, j);
                m.set(i, j, if i == j { v - lambda } else { v });
            }
        }
        m
    }
}

/// Dominant eigenpair of a killed generator.
#[derive(Debug, Clone)]
pub struct PerronRoot {
    /// `α`, the negated dominant eigenvalue.
    pub decay: f64,
    /// Positive eigenvector, max-normalized.
    pub vector: Vec<f64>,
    /// `max_i |(-Q̃x)_i / x_i - α|`.
    pub residual: f64,
    pub iterations: usize,
}

const PERRON_INCREMENT_TOL: f64 = 1e-12;
/// Eigen-residual bound on the Perron root.
pub const PERRON_RESIDUAL_TOL: f64 = 1e-9;
const PERRON_MAX_ITER: usize = 10_000;

/// Decay parameter of the killed chain: `α = -max Re spec(Q̃)`.
///
/// The shift is located by bisection on the M-matrix test of `-Q̃ - λI`
/// (nonsingular M-matrix iff `λ < α`), then refined by inverse-power
/// iteration at that shift. Collatz–Wielandt ratios of the positive iterate
/// bracket `α` from both sides; their spread is the reported residual.
/// An empty generator has `α = ∞`. A decay too small to resolve (the test
/// already fails at `λ = 0`) is reported as `0` with a `NaN` residual.
pub fn perron_decay(gen: &KilledGenerator) -> Result<PerronRoot> {
    let n = gen.dim();
    if n == 0 {
        return Ok(PerronRoot { decay: f64::INFINITY, vector: Vec::new(), residual: 0.0, iterations: 0 });
    }
    let killing = gen.killing_rates();
    let mut lo = killing.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    let mut hi = killing
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .min(gen.min_exit_rate())
        .max(lo);
    // The test is strict (`λ < α`); nudge `lo` down if it sits on α itself.
    while lo > 0.0 && MMatrixFactor::new(&gen.shifted_negation(lo)).is_none() {
        lo *= 0.5;
        if lo < 1e-300 {
            lo = 0.0;
        }
    }
    if MMatrixFactor::new(&gen.shifted_negation(lo)).is_none() {
        // Decay below working precision (e.g. a long truncation of a walk
        // drifting away from the killing states).
        if gen.killing_rates().iter().any(|k| *k > 0.0) {
            return Ok(PerronRoot { decay: 0.0, vector: vec![1.0; n], residual: f64::NAN, iterations: 0 });
        }
        return Err(Error::Numeric("killed generator has no killing".into()));
    }
    for _ in 0..200 {
        if hi - lo <= 1e-11 * hi.max(f64::MIN_POSITIVE) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if MMatrixFactor::new(&gen.shifted_negation(mid)).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let factor = MMatrixFactor::new(&gen.shifted_negation(lo))
        .ok_or_else(|| Error::Numeric("lost the M-matrix property at the lower bracket".into()))?;
    let neg = gen.shifted_negation(0.0);
    let mut x = vec![1.0; n];
    let mut estimate = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=PERRON_MAX_ITER {
        let y = factor.solve(&x);
        let scale = norm_inf(&y);
        if !(scale.is_finite() && scale > 0.0) || y.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::NoConvergence { iterations: it, residual });
        }
        x = y.into_iter().map(|v| v / scale).collect();
        let ax = neg.matvec(&x);
        let (cw_lo, cw_hi) = ax
            .iter()
            .zip(&x)
            .map(|(a, xi)| a / xi)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), r| (l.min(r), h.max(r)));
        let next = (0.5 * (cw_lo + cw_hi)).clamp(lo, hi);
        residual = (cw_hi - next).max(next - cw_lo);
        let increment = (next - estimate).abs();
        estimate = next;
        if increment <= PERRON_INCREMENT_TOL * estimate.max(1.0)
            && residual <= PERRON_RESIDUAL_TOL * estimate.max(1.0)
        {
            return Ok(PerronRoot { decay: estimate, vector: x, residual, iterations: it });
        }
    }
    Err(Error::NoConvergence { iterations: PERRON_MAX_ITER, residual })
}

/// Largest `Λ t` handled by [`expm_action`].
pub const UNIFORMIZATION_GUARD: f64 = 1e4;
const UNIFORMIZATION_CHUNK: f64 = 20.0;
const POISSON_TAIL: f64 = 1e-13;

/// `e^{Q̃ t} v` by uniformization.
///
/// With `Λ = max_i q_i` and `P = I + Q̃/Λ` (nonnegative, substochastic),
/// `e^{Q̃t} = Σ_k Poisson(Λt; k) P^k`. The series is cut when the remaining
/// Poisson mass falls below `1e-13`; long horizons are split into chunks of
/// `Λh ≤ 20` so the leading weight never underflows.
pub fn expm_action(gen: &KilledGenerator, v: &[f64], t: f64) -> Result<Vec<f64>> {
    assert_eq!(v.len(), gen.dim());
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time {t} must be nonnegative")));
    }
    let rate = gen.max_exit_rate();
    if rate * t > UNIFORMIZATION_GUARD {
        return Err(Error::Numeric(format!(
            "t·max q_i = {} exceeds the uniformization guard {UNIFORMIZATION_GUARD}",
            rate * t
        )));
    }
    if t == 0.0 || gen.dim() == 0 || rate == 0.0 {
        return Ok(v.to_vec());
    }
    let chunks = ((rate * t) / UNIFORMIZATION_CHUNK).ceil().max(1.0) as usize;
    let h = t / chunks as f64;
    let stepper = Uniformized::new(gen, rate);
    let mut out = v.to_vec();
    for _ in 0..chunks {
        out = stepper.apply(&out, rate * h);
    }
    Ok(out)
}

struct Uniformized {
    p: DenseMatrix,
}

impl Uniformized {
    fn new(gen: &KilledGenerator, rate: f64) -> Self {
        let n = gen.dim();
        let mut p = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let q = gen.matrix().get(i, j) / rate;
                p.set(i, j, if i == j { 1.0 + q } else { q });
            }
        }
        Uniformized { p }
    }

    fn apply(&self, v: &[f64], mean: f64) -> Vec<f64> {
        let mut weight = (-mean).exp();
        let mut cumulative = weight;
        let mut term = v.to_vec();
        let mut acc: Vec<f64> = term.iter().map(|x| weight * x).collect();
        let mut k = 0usize;
        while 1.0 - cumulative > POISSON_TAIL && k < 10_000 {
            k += 1;
            term = self.p.matvec(&term);
            weight *= mean / k as f64;
            cumulative += weight;
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += weight * t;
            }
        }
        acc
    }
}

/// The matrix `e^{Q̃ h}`, for marching a vector along a uniform grid.
pub fn expm_step_matrix(gen: &KilledGenerator, h: f64) -> Result<DenseMatrix> {
    let n = gen.dim();
    let mut out = DenseMatrix::zeros(n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[j] = 1.0;
        let col = expm_action(gen, &e, h)?;
        for i in 0..n {
            out.set(i, j, col[i]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_birth_death, ChainSpec};

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64)
    }

    #[test]
    fn identity_solve() {
        let r = vec![1.5, -2.0, 3.25];
        assert_eq!(solve_linear(&DenseMatrix::identity(3), &r).unwrap(), r);
    }

    #[test]
    fn diagonal_solve() {
        let m = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        assert_eq!(solve_linear(&m, &[2.0, 4.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn random_well_conditioned_solve() {
        let mut seed = 7u64;
        let n = 5;
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v = lcg(&mut seed) - 0.5;
            }
            row[i] += 3.0;
        }
        let m = DenseMatrix::from_rows(&rows);
        let r: Vec<f64> = (0..n).map(|_| lcg(&mut seed) * 10.0).collect();
        let x = solve_linear(&m, &r).unwrap();
        let res = m.matvec(&x).iter().zip(&r).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
        assert!(res <= 1e-10 * (1.0 + norm_inf(&r)));
    }

    #[test]
    fn singular_solve_reports_pivot() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        match solve_linear(&m, &[1.0, 1.0]) {
            Err(Error::Singular { pivot }) => assert!(pivot < 1e-12),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(solve_linear(&m, &[3.0, 4.0]).unwrap(), vec![4.0, 3.0]);
    }

    #[test]
    fn perron_single_state() {
        let spec = ChainSpec::from_triples(2, &[(0, 1, 1.0), (1, 0, 2.0)], 1.0).unwrap();
        let root = perron_decay(&KilledGenerator::from_spec(&spec)).unwrap();
        assert!((root.decay - 2.0).abs() < 1e-12);
    }

    #[test]
    fn perron_two_cycle_matches_characteristic_polynomial() {
        // C = {1,2}: q12 = q21 = 1, q10 = 1. Q̃ = [[-2, 1], [1, -1]].
        // Eigenvalues solve x² + 3x + 1 = 0; dominant (-3 + √5)/2.
        let spec =
            ChainSpec::from_triples(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 1, 1.0), (1, 0, 1.0)], 1.0)
                .unwrap();
        let root = perron_decay(&KilledGenerator::from_spec(&spec)).unwrap();
        let oracle = (3.0 - 5f64.sqrt()) / 2.0;
        assert!((root.decay - oracle).abs() < 1e-10, "{} vs {}", root.decay, oracle);
        assert!(root.residual <= 1e-9);
        assert!(root.vector.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn perron_birth_death_truncation() {
        let spec = build_birth_death(1.0, 2.0, 200, &[(1, 1.0)]).unwrap();
        let root = perron_decay(&KilledGenerator::from_spec(&spec)).unwrap();
        let limit = 3.0 - 2.0 * 2f64.sqrt();
        assert!((root.decay - limit).abs() < 1e-3, "{}", root.decay);
        assert!(root.decay > limit);
    }

    #[test]
    fn m_matrix_test_matches_decay() {
        let spec = build_birth_death(1.0, 2.0, 30, &[(1, 1.0)]).unwrap();
        let gen = KilledGenerator::from_spec(&spec);
        let alpha = perron_decay(&gen).unwrap().decay;
        assert!(MMatrixFactor::new(&gen.shifted_negation(alpha * (1.0 - 1e-6))).is_some());
        assert!(MMatrixFactor::new(&gen.shifted_negation(alpha * (1.0 + 1e-6))).is_none());
    }

    #[test]
    fn expm_scalar() {
        let spec = ChainSpec::from_triples(2, &[(0, 1, 1.0), (1, 0, 2.0)], 1.0).unwrap();
        let gen = KilledGenerator::from_spec(&spec);
        assert_eq!(expm_action(&gen, &[1.0], 0.0).unwrap(), vec![1.0]);
        for &t in &[0.1, 1.0, 7.5, 40.0] {
            let got = expm_action(&gen, &[1.0], t).unwrap()[0];
            let want = (-2.0 * t).exp();
            assert!((got - want).abs() <= 1e-10 * want.max(1e-300) + 1e-16, "t={t}");
        }
    }

    #[test]
    fn expm_guard() {
        let spec = ChainSpec::from_triples(2, &[(0, 1, 1.0), (1, 0, 2.0)], 1.0).unwrap();
        let gen = KilledGenerator::from_spec(&spec);
        assert!(matches!(expm_action(&gen, &[1.0], 6000.0), Err(Error::Numeric(_))));
        assert!(matches!(expm_action(&gen, &[1.0], -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn expm_survival_in_unit_interval() {
        let spec = build_birth_death(1.0, 2.0, 10, &[(1, 1.0)]).unwrap();
        let gen = KilledGenerator::from_spec(&spec);
        let s = expm_action(&gen, &vec![1.0; gen.dim()], 3.0).unwrap();
        assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        // Farther from the origin survives longer.
        assert!(s.windows(2).all(|w| w[0] <= w[1] + 1e-15));
    }

    #[test]
    fn step_matrix_matches_action() {
        let spec = build_birth_death(1.5, 1.0, 6, &[(1, 0.5), (3, 0.5)]).unwrap();
        let gen = KilledGenerator::from_spec(&spec);
        let e = expm_step_matrix(&gen, 0.3).unwrap();
        let v: Vec<f64> = (0..gen.dim()).map(|i| 1.0 + i as f64).collect();
        let a = e.matvec(&v);
        let b = expm_action(&gen, &v, 0.3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
