//! Chain representation, validation and the standard families.
//!
//! States are dense indices `0..n`, with `0` the distinguished origin. Rates
//! are stored densely in memory. The diagonal is never stored as a negative
//! number: the exit rate `q_i` is kept alongside as the row sum. The single
//! exception to "no diagonal" is the origin self-return rate `q_{0,0}`, a jump
//! out of the origin that lands back on it and restarts the holding clock
//! (a Poisson process is the chain whose only jump is this one).
//!
//! A chain may declare a truncation level `N`: the top state of a finite
//! stand-in for an infinite chain. The dynamics at `N` are whatever the rates
//! say (reflecting, for the built families); the hitting analysis uses `N` as
//! the escape boundary when deciding transience.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Holding-time threshold used when a document does not state one.
pub const DEFAULT_WAIT_THRESHOLD: f64 = 1.0;

/// Largest state count held densely.
pub const MAX_STATES: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    n_states: usize,
    rates: Vec<f64>,
    exit_rates: Vec<f64>,
    wait_threshold: f64,
    truncation_level: Option<usize>,
}

/// A point of the augmented state space: an interior state, or the origin
/// together with the time already spent holding there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum AugmentedState {
    Interior(usize),
    AtOrigin(f64),
}

impl AugmentedState {
    pub const ORIGIN: AugmentedState = AugmentedState::AtOrigin(0.0);

    /// Chain state index (`0` for any origin point).
    pub fn state(&self) -> usize {
        match *self {
            AugmentedState::Interior(i) => i,
            AugmentedState::AtOrigin(_) => 0,
        }
    }
}

impl fmt::Display for AugmentedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentedState::Interior(i) => write!(f, "{i}"),
            AugmentedState::AtOrigin(u) => write!(f, "(0,{u})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    NegativeRate { from: usize, to: usize, rate: f64 },
    NonFiniteRate { from: usize, to: usize },
    InteriorSelfLoop { state: usize },
    AbsorbingState { state: usize },
    NotStronglyConnected { unreachable: Vec<usize> },
    InteriorNotIrreducible,
    ZeroOriginRate,
    BadThreshold { value: f64 },
    TruncationOutOfRange { level: usize },
    TooManyStates { n_states: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeRate { from, to, rate } => {
                write!(f, "negative rate {rate} on {from}->{to}")
            }
            Violation::NonFiniteRate { from, to } => write!(f, "non-finite rate on {from}->{to}"),
            Violation::InteriorSelfLoop { state } => {
                write!(f, "self-loop at interior state {state}")
            }
            Violation::AbsorbingState { state } => write!(f, "absorbing state {state}"),
            Violation::NotStronglyConnected { unreachable } => {
                write!(f, "not strongly connected (states {unreachable:?} cut off)")
            }
            Violation::InteriorNotIrreducible => {
                write!(f, "interior states are not strongly connected among themselves")
            }
            Violation::ZeroOriginRate => write!(f, "zero exit rate from the origin"),
            Violation::BadThreshold { value } => write!(f, "wait threshold {value} is not positive"),
            Violation::TruncationOutOfRange { level } => {
                write!(f, "truncation level {level} is not an interior state")
            }
            Violation::TooManyStates { n_states } => {
                write!(f, "{n_states} states exceeds the dense limit {MAX_STATES}")
            }
        }
    }
}

/// Every invariant a chain breaks; empty means the chain is usable.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

impl ChainSpec {
    /// Builds a chain from `(from, to, rate)` triples. Absent rates are zero;
    /// repeated triples accumulate.
    pub fn from_triples(
        n_states: usize,
        triples: &[(usize, usize, f64)],
        wait_threshold: f64,
    ) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::Precondition("a chain needs at least the origin state".into()));
        }
        let mut rates = vec![0.0; n_states * n_states];
        for (k, &(i, j, r)) in triples.iter().enumerate() {
            if i >= n_states || j >= n_states {
                return Err(Error::Parse {
                    location: format!("rates[{k}]"),
                    message: format!("index ({i}, {j}) outside 0..{n_states}"),
                });
            }
            rates[i * n_states + j] += r;
        }
        Self::from_dense(n_states, rates, wait_threshold)
    }

    /// Builds a chain from a row-major rate array (diagonal ignored except at
    /// the origin, where it is the self-return rate).
    pub fn from_dense(n_states: usize, mut rates: Vec<f64>, wait_threshold: f64) -> Result<Self> {
        assert_eq!(rates.len(), n_states * n_states, "rate array must be n x n");
        let report = validate_parts(n_states, &rates, wait_threshold, None);
        if !report.is_valid() {
            return Err(Error::Validation(report));
        }
        for i in 1..n_states {
            rates[i * n_states + i] = 0.0;
        }
        let exit_rates = (0..n_states)
            .map(|i| rates[i * n_states..(i + 1) * n_states].iter().sum())
            .collect();
        Ok(ChainSpec { n_states, rates, exit_rates, wait_threshold, truncation_level: None })
    }

    /// Declares `level` as the truncation boundary of this chain.
    pub fn with_truncation_level(mut self, level: usize) -> Result<Self> {
        if level == 0 || level >= self.n_states {
            return Err(Error::Validation(ValidationReport {
                violations: vec![Violation::TruncationOutOfRange { level }],
            }));
        }
        self.truncation_level = Some(level);
        Ok(self)
    }

    pub fn with_wait_threshold(mut self, wait_threshold: f64) -> Result<Self> {
        if !(wait_threshold > 0.0 && wait_threshold.is_finite()) {
            return Err(Error::Validation(ValidationReport {
                violations: vec![Violation::BadThreshold { value: wait_threshold }],
            }));
        }
        self.wait_threshold = wait_threshold;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Number of interior states (`n - 1`).
    pub fn n_interior(&self) -> usize {
        self.n_states - 1
    }

    pub fn wait_threshold(&self) -> f64 {
        self.wait_threshold
    }

    pub fn truncation_level(&self) -> Option<usize> {
        self.truncation_level
    }

    #[inline]
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[from * self.n_states + to]
    }

    /// Total exit rate `q_i`.
    #[inline]
    pub fn exit_rate(&self, state: usize) -> f64 {
        self.exit_rates[state]
    }

    /// Exit rate of the origin, self-returns included.
    pub fn q0(&self) -> f64 {
        self.exit_rates[0]
    }

    pub fn origin_self_return(&self) -> f64 {
        self.rates[0]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.rates[state * self.n_states..(state + 1) * self.n_states]
    }

    /// Targets of jumps out of the origin with their rates, self-return
    /// included as target `0`.
    pub fn origin_exits(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row(0).iter().copied().enumerate().filter(|&(_, r)| r > 0.0)
    }

    /// States with a direct rate into the origin.
    pub fn feeders_of_origin(&self) -> Vec<usize> {
        (1..self.n_states).filter(|&i| self.rate(i, 0) > 0.0).collect()
    }

    /// Rates multiplied by `factor` and the threshold divided by it: the same
    /// chain observed on a clock running `factor` times faster.
    pub fn time_rescaled(&self, factor: f64) -> Result<Self> {
        let rates = self.rates.iter().map(|r| r * factor).collect();
        let mut spec = Self::from_dense(self.n_states, rates, self.wait_threshold / factor)?;
        spec.truncation_level = self.truncation_level;
        Ok(spec)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_parts(self.n_states, &self.rates, self.wait_threshold, self.truncation_level)
    }

    /// Checks that `state` names a point of this chain's augmented space.
    pub fn check_state(&self, state: &AugmentedState) -> Result<()> {
        match *state {
            AugmentedState::Interior(i) if i == 0 || i >= self.n_states => Err(Error::Precondition(
                format!("interior state {i} outside 1..{}", self.n_states),
            )),
            AugmentedState::AtOrigin(u) if !(0.0..self.wait_threshold).contains(&u) => {
                Err(Error::Precondition(format!(
                    "holding time {u} outside [0, {})",
                    self.wait_threshold
                )))
            }
            _ => Ok(()),
        }
    }

    /// Sparse triples of the nonzero rates, row-major.
    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n_states;
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let r = self.rates[i * n + j];
                if r != 0.0 {
                    out.push((i, j, r));
                }
            }
        }
        out
    }

    /// Serializes to the chain-spec JSON document.
    pub fn to_json(&self) -> String {
        let doc = ChainDocument {
            n_states: self.n_states,
            rates: self.triples(),
            wait_threshold: Some(self.wait_threshold),
            truncation_level: self.truncation_level,
        };
        serde_json::to_string_pretty(&doc).expect("chain document serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainDocument {
    n_states: usize,
    rates: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wait_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truncation_level: Option<usize>,
}

/// Parses a chain-spec JSON document.
///
/// The document holds `n_states`, `rates` as `[i, j, rate]` triples,
/// an optional `wait_threshold` (default 1.0) and an optional
/// `truncation_level`. A triple may appear at most once.
pub fn parse_spec(text: &str) -> Result<ChainSpec> {
    let doc: ChainDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if doc.n_states == 0 {
        return Err(Error::Parse {
            location: "n_states".into(),
            message: "must be at least 1".into(),
        });
    }
    let mut seen = BTreeMap::new();
    for (k, &(i, j, _)) in doc.rates.iter().enumerate() {
        if let Some(prev) = seen.insert((i, j), k) {
            return Err(Error::Parse {
                location: format!("rates[{k}]"),
                message: format!("duplicate entry for ({i}, {j}), first given at rates[{prev}]"),
            });
        }
    }
    let n = doc.n_states;
    if n > MAX_STATES {
        return Err(Error::Validation(ValidationReport {
            violations: vec![Violation::TooManyStates { n_states: n }],
        }));
    }
    let mut rates = vec![0.0; n * n];
    for (k, &(i, j, r)) in doc.rates.iter().enumerate() {
        if i >= n || j >= n {
            return Err(Error::Parse {
                location: format!("rates[{k}]"),
                message: format!("index ({i}, {j}) outside 0..{n}"),
            });
        }
        rates[i * n + j] = r;
    }
    let threshold = doc.wait_threshold.unwrap_or(DEFAULT_WAIT_THRESHOLD);
    let report = validate_parts(n, &rates, threshold, doc.truncation_level);
    if !report.is_valid() {
        return Err(Error::Validation(report));
    }
    let spec = ChainSpec::from_dense(n, rates, threshold)?;
    match doc.truncation_level {
        Some(level) => spec.with_truncation_level(level),
        None => Ok(spec),
    }
}

fn validate_parts(
    n: usize,
    rates: &[f64],
    threshold: f64,
    truncation: Option<usize>,
) -> ValidationReport {
    let mut violations = Vec::new();
    if n > MAX_STATES {
        violations.push(Violation::TooManyStates { n_states: n });
        return ValidationReport { violations };
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        violations.push(Violation::BadThreshold { value: threshold });
    }
    if let Some(level) = truncation {
        if level == 0 || level >= n {
            violations.push(Violation::TruncationOutOfRange { level });
        }
    }
    for i in 0..n {
        for j in 0..n {
            let r = rates[i * n + j];
            if !r.is_finite() {
                violations.push(Violation::NonFiniteRate { from: i, to: j });
            } else if r < 0.0 {
                violations.push(Violation::NegativeRate { from: i, to: j, rate: r });
            } else if i == j && i != 0 && r != 0.0 {
                violations.push(Violation::InteriorSelfLoop { state: i });
            }
        }
    }
    let positive = |i: usize, j: usize| {
        let r = rates[i * n + j];
        i != j && r.is_finite() && r > 0.0
    };
    let origin_total: f64 = rates[..n].iter().filter(|r| r.is_finite() && **r > 0.0).sum();
    if origin_total <= 0.0 {
        violations.push(Violation::ZeroOriginRate);
    }
    for i in 1..n {
        if !(0..n).any(|j| positive(i, j)) {
            violations.push(Violation::AbsorbingState { state: i });
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let cut_off = unreachable_either_way(&all, &positive);
    if !cut_off.is_empty() {
        violations.push(Violation::NotStronglyConnected { unreachable: cut_off });
    } else if n > 2 {
        let interior: Vec<usize> = (1..n).collect();
        if !unreachable_either_way(&interior, &positive).is_empty() {
            violations.push(Violation::InteriorNotIrreducible);
        }
    }
    ValidationReport { violations }
}

/// States of `nodes` not mutually reachable with `nodes[0]` inside the
/// subgraph induced by `nodes`.
fn unreachable_either_way(nodes: &[usize], edge: &dyn Fn(usize, usize) -> bool) -> Vec<usize> {
    let Some(&root) = nodes.first() else {
        return Vec::new();
    };
    let reach = |forward: bool| {
        let mut seen = vec![false; nodes.iter().max().map_or(0, |m| m + 1)];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            for &v in nodes {
                let e = if forward { edge(u, v) } else { edge(v, u) };
                if e && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    };
    let fwd = reach(true);
    let bwd = reach(false);
    nodes.iter().copied().filter(|&v| !(fwd[v] && bwd[v])).collect()
}

/// Per-state or constant rate for the birth–death constructor.
#[derive(Debug, Clone, PartialEq)]
pub enum RateProfile {
    Constant(f64),
    /// Entry `k` is the rate at state `k + 1`.
    PerState(Vec<f64>),
}

impl RateProfile {
    pub fn from_fn(n: usize, f: impl Fn(usize) -> f64) -> Self {
        RateProfile::PerState((1..=n).map(f).collect())
    }

    fn at(&self, state: usize) -> Result<f64> {
        match self {
            RateProfile::Constant(r) => Ok(*r),
            RateProfile::PerState(v) => v.get(state - 1).copied().ok_or_else(|| {
                Error::Precondition(format!("rate list has no entry for state {state}"))
            }),
        }
    }
}

impl From<f64> for RateProfile {
    fn from(r: f64) -> Self {
        RateProfile::Constant(r)
    }
}

/// Nearest-neighbour birth–death chain on `{0..n}` with the top state made
/// reflecting. Jumps out of the origin follow `origin_exits`, given as
/// `(state, rate)` pairs. The result carries truncation level `n`.
pub fn build_birth_death(
    birth: impl Into<RateProfile>,
    death: impl Into<RateProfile>,
    n: usize,
    origin_exits: &[(usize, f64)],
) -> Result<ChainSpec> {
    let birth = birth.into();
    let death = death.into();
    if n < 2 {
        return Err(Error::Precondition(format!("truncation level {n} must be at least 2")));
    }
    let size = n + 1;
    let mut rates = vec![0.0; size * size];
    for &(j, r) in origin_exits {
        if j == 0 || j >= n {
            return Err(Error::Precondition(format!(
                "origin exit target {j} outside 1..{n}"
            )));
        }
        rates[j] += r;
    }
    for i in 1..=n {
        let d = death.at(i)?;
        rates[i * size + i - 1] = d;
        if i < n {
            rates[i * size + i + 1] = birth.at(i)?;
        }
    }
    let zero_rate = (1..=n).find(|&i| {
        let b = if i < n { rates[i * size + i + 1] } else { 1.0 };
        !(b > 0.0 && rates[i * size + i - 1] > 0.0)
    });
    if let Some(state) = zero_rate {
        return Err(Error::Validation(ValidationReport {
            violations: vec![Violation::AbsorbingState { state }],
        }));
    }
    ChainSpec::from_dense(size, rates, DEFAULT_WAIT_THRESHOLD)?.with_truncation_level(n)
}

/// A Poisson process of the given rate seen as a chain that jumps from the
/// origin straight back to it.
pub fn poisson_chain(rate: f64) -> Result<ChainSpec> {
    ChainSpec::from_dense(1, vec![rate], DEFAULT_WAIT_THRESHOLD)
}

/// Birth–death structure check: nonzero rates only between neighbours on
/// the interior (the origin may jump anywhere).
pub fn is_birth_death(spec: &ChainSpec) -> bool {
    let n = spec.n_states();
    (1..n).all(|i| (0..n).all(|j| spec.rate(i, j) == 0.0 || i.abs_diff(j) == 1))
}
