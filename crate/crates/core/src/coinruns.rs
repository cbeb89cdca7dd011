//! Runs of heads in coin tossing, and the Poisson chain that is their
//! continuous-time analogue.
//!
//! `p_n^{(k)}` is the probability of no run of `k` heads in `n` tosses with
//! head probability `p`. It decays like `c_k s_k^{n+1}` with `s_k` the
//! largest root in `(0, 1)` of `x^k - q Σ_{j<k} p^j x^{k-1-j}`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

const ROOT_TOL: f64 = 1e-12;

fn check_coin(p: f64, k: usize) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("head probability {p} must lie in (0, 1)")));
    }
    if k == 0 {
        return Err(Error::Domain("run length must be at least 1".into()));
    }
    Ok(())
}

fn run_polynomial(p: f64, k: usize, x: f64) -> f64 {
    let q = 1.0 - p;
    // Horner on Σ_{j<k} p^j x^{k-1-j}.
    let mut sum = 0.0;
    let mut pj = 1.0;
    let mut tail = Vec::with_capacity(k);
    for _ in 0..k {
        tail.push(pj);
        pj *= p;
    }
    for c in tail {
        sum = sum * x + c;
    }
    x.powi(k as i32) - q * sum
}

/// `s_k` by bisection. Multiplying the polynomial by `x - p` gives
/// `x^k (1-x) = q p^k`, whose two positive roots straddle `k/(k+1)`; one of
/// them is `p`, so the bracket is `[p, 1)` when `p < k q` and `[0, p]`
/// otherwise.
pub fn coin_root(p: f64, k: usize) -> Result<f64> {
    check_coin(p, k)?;
    let f = |x| run_polynomial(p, k, x);
    let q = 1.0 - p;
    let (mut lo, mut hi) = if p < k as f64 * q { (p, 1.0) } else { (0.0, p) };
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Numeric(format!("no sign change on [{lo}, {hi}] for p={p}, k={k}")));
    }
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `c_k = (s_k - p) / (q ((k+1) s_k - k))`.
///
/// `k = 1` is reported as degenerate: there `p_n^{(1)} = q^n` exactly.
pub fn coin_constant(p: f64, k: usize, s: f64) -> Result<f64> {
    check_coin(p, k)?;
    if k == 1 {
        return Err(Error::Numeric("run length 1 is degenerate (p_n = q^n exactly)".into()));
    }
    let q = 1.0 - p;
    let denom = q * ((k as f64 + 1.0) * s - k as f64);
    if denom.abs() < 1e-12 {
        return Err(Error::Numeric(format!("vanishing denominator {denom:e}")));
    }
    Ok((s - p) / denom)
}

/// Exact `p_n^{(k)}` by dynamic programming over the current head-run
/// length.
pub fn coin_exact(p: f64, k: usize, n: usize) -> Result<f64> {
    Ok(*coin_exact_all(p, k, n)?.last().expect("n + 1 entries"))
}

/// `p_0^{(k)}, ..., p_n^{(k)}`.
pub fn coin_exact_all(p: f64, k: usize, n: usize) -> Result<Vec<f64>> {
    check_coin(p, k)?;
    let q = 1.0 - p;
    let mut run = vec![0.0; k];
    run[0] = 1.0;
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    for m in 1..=n {
        let total: f64 = run.iter().sum();
        let mut next = vec![0.0; k];
        next[0] = q * total;
        for r in 1..k {
            next[r] = p * run[r - 1];
        }
        run = next;
        // No run fits in fewer than k tosses; avoid rounding in the sum.
        out.push(if m < k { 1.0 } else { run.iter().sum() });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoinRow {
    pub n: usize,
    pub exact: f64,
    pub asymptote: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoinResult {
    pub p: f64,
    pub k: usize,
    pub s_k: f64,
    /// `None` when the constant is degenerate.
    pub c_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<CoinRow>>,
}

impl CoinResult {
    /// CSV `n,exact,asymptote,rel_error`; empty body without a table.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("n,exact,asymptote,rel_error\n");
        for row in self.table.iter().flatten() {
            writeln!(out, "{},{:e},{:e},{:e}", row.n, row.exact, row.asymptote, row.rel_error)
                .expect("writing to a String");
        }
        out
    }
}

/// Root, constant and (with `n_max`) the exact-vs-asymptote table for
/// `n = 0..=n_max`.
pub fn coin_analysis(p: f64, k: usize, n_max: Option<usize>) -> Result<CoinResult> {
    let s_k = coin_root(p, k)?;
    let c_k = match coin_constant(p, k, s_k) {
        Ok(c) => Some(c),
        Err(Error::Numeric(_)) => None,
        Err(e) => return Err(e),
    };
    let table = match n_max {
        None => None,
        Some(n) => {
            let exact = coin_exact_all(p, k, n)?;
            Some(
                exact
                    .into_iter()
                    .enumerate()
                    .map(|(n, exact)| {
                        let asymptote = match c_k {
                            Some(c) => c * s_k.powi(n as i32 + 1),
                            None => f64::NAN,
                        };
                        CoinRow { n, exact, asymptote, rel_error: (asymptote - exact).abs() / exact }
                    })
                    .collect(),
            )
        }
    };
    Ok(CoinResult { p, k, s_k, c_k, table })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoissonResult {
    pub r: f64,
    pub phi_r: f64,
    pub c_r: f64,
}

/// Decay rate of `P(τ > t)` when the origin returns to itself at rate `r`:
/// the root `φ ≠ r` of `x e^{-x} = r e^{-r}`, with constant
/// `c = (φ - r)/(r(φ - 1))`. At `r = 1` the roots merge and `(φ, c) = (1, 2)`.
pub fn poisson_phi(r: f64) -> Result<PoissonResult> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("rate {r} must be positive")));
    }
    if r == 1.0 {
        return Ok(PoissonResult { r, phi_r: 1.0, c_r: 2.0 });
    }
    // ln x - x is increasing on (0,1), decreasing on (1,∞).
    let target = r.ln() - r;
    let f = |x: f64| x.ln() - x - target;
    let (mut lo, mut hi) = if r > 1.0 {
        (f64::MIN_POSITIVE, 1.0)
    } else {
        let mut hi = 2.0;
        while f(hi) > 0.0 {
            hi *= 2.0;
        }
        (1.0, hi)
    };
    let rising = r > 1.0;
    while hi - lo > ROOT_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let phi = 0.5 * (lo + hi);
    Ok(PoissonResult { r, phi_r: phi, c_r: (phi - r) / (r * (phi - 1.0)) })
}
