use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{check_paths, path_rng, run_paths};
use crate::chain::{AugmentedState, ChainSpec};
use crate::conditioned::{ConditionedChain, OriginHolding};
use crate::error::{Error, Result};

/// What to simulate.
#[derive(Debug, Clone, Copy)]
pub enum Process<'a> {
    Raw(&'a ChainSpec),
    Conditioned(&'a ConditionedChain),
}

impl<'a> From<&'a ChainSpec> for Process<'a> {
    fn from(spec: &'a ChainSpec) -> Self {
        Process::Raw(spec)
    }
}

impl<'a> From<&'a ConditionedChain> for Process<'a> {
    fn from(chain: &'a ConditionedChain) -> Self {
        Process::Conditioned(chain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathEnd {
    /// Still alive at the horizon.
    Censored,
    /// The holding clock at the origin reached the threshold.
    Tau(f64),
    /// A conditioned chain died.
    Killed(f64),
}

#[derive(Debug, Clone)]
pub struct SamplePath {
    pub start: AugmentedState,
    pub horizon: f64,
    pub wait_threshold: f64,
    /// `(time, state)` at the start and after every jump; empty when the
    /// path was simulated without recording.
    pub events: Vec<(f64, usize)>,
    pub end: PathEnd,
}

impl SamplePath {
    pub fn tau(&self) -> Option<f64> {
        match self.end {
            PathEnd::Tau(t) => Some(t),
            _ => None,
        }
    }

    /// End of life, `∞` when censored.
    pub fn end_time(&self) -> f64 {
        match self.end {
            PathEnd::Censored => f64::INFINITY,
            PathEnd::Tau(t) | PathEnd::Killed(t) => t,
        }
    }

    /// Alive past `t` (only meaningful for `t ≤ horizon`).
    pub fn survives(&self, t: f64) -> bool {
        self.end_time() > t
    }

    /// Augmented state at time `t`, or `None` once the path has ended.
    pub fn state_at(&self, t: f64) -> Option<AugmentedState> {
        if !self.survives(t) || t > self.horizon {
            return None;
        }
        let k = self.events.partition_point(|&(s, _)| s <= t).checked_sub(1)?;
        let (entered, state) = self.events[k];
        Some(if state == 0 {
            let offset = match (k, self.start) {
                (0, AugmentedState::AtOrigin(u)) => u,
                _ => 0.0,
            };
            AugmentedState::AtOrigin(t - entered + offset)
        } else {
            AugmentedState::Interior(state)
        })
    }

    /// Entry epochs `S_n` into the origin; a path started at `(0, u)` has
    /// `S_0 = -u`.
    pub fn returns(&self) -> Vec<f64> {
        self.events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.1 == 0)
            .map(|(k, e)| match (k, self.start) {
                (0, AugmentedState::AtOrigin(u)) => -u,
                _ => e.0,
            })
            .collect()
    }

    /// Departure epochs `T_n` from the origin (the end of the last visit is
    /// `τ` when the path ended there).
    pub fn departures(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (k, e) in self.events.iter().enumerate() {
            if e.1 != 0 {
                continue;
            }
            match self.events.get(k + 1) {
                Some(next) => out.push(next.0),
                None => {
                    if let PathEnd::Tau(t) | PathEnd::Killed(t) = self.end {
                        out.push(t);
                    }
                }
            }
        }
        out
    }

    /// Holding times `H^n = T_n - S_n` of completed visits.
    pub fn holding_times(&self) -> Vec<f64> {
        self.returns().iter().zip(self.departures()).map(|(s, t)| t - s).collect()
    }

    /// Return times `R^n = S_{n+1} - T_n`.
    pub fn return_times(&self) -> Vec<f64> {
        let s = self.returns();
        self.departures().iter().zip(s.iter().skip(1)).map(|(t, s)| s - t).collect()
    }

    /// First entry time into the origin, `τ_0`.
    pub fn first_hit_origin(&self) -> Option<f64> {
        self.events.iter().find(|e| e.1 == 0).map(|e| e.0)
    }

    /// Time spent in each state on `[0, s]`, origin lumped as state `0`.
    pub fn occupation(&self, n_states: usize, s: f64) -> Vec<f64> {
        let mut occ = vec![0.0; n_states];
        let stop = s.min(self.end_time());
        for (k, &(t, state)) in self.events.iter().enumerate() {
            if t >= stop {
                break;
            }
            let next = self.events.get(k + 1).map_or(stop, |e| e.0.min(stop));
            occ[state] += next - t;
        }
        occ
    }

    /// Jumps on `[0, s]`.
    pub fn jumps_before(&self, s: f64) -> usize {
        self.events.iter().skip(1).take_while(|e| e.0 <= s).count()
    }
}

fn exp_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

/// Cumulative jump table of one state.
#[derive(Debug, Clone, Default)]
struct Jumps {
    targets: Vec<usize>,
    cumulative: Vec<f64>,
}

impl Jumps {
    fn new(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut j = Jumps::default();
        let mut acc = 0.0;
        for (t, r) in pairs {
            if r > 0.0 {
                acc += r;
                j.targets.push(t);
                j.cumulative.push(acc);
            }
        }
        j
    }

    fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    fn pick(&self, rng: &mut ChaCha8Rng) -> usize {
        let x = rng.gen::<f64>() * self.total();
        let k = self.cumulative.partition_point(|&c| c <= x);
        self.targets[k.min(self.targets.len() - 1)]
    }
}

/// A process prepared for repeated simulation.
#[derive(Debug, Clone)]
pub struct Sampler(Inner);

#[derive(Debug, Clone)]
enum Inner {
    Raw {
        jumps: Vec<Jumps>,
        q0: f64,
        theta: f64,
    },
    Conditioned {
        jumps: Vec<Jumps>,
        killing: Vec<f64>,
        holding: OriginHolding,
        exits: Jumps,
        chain: Box<ConditionedChain>,
    },
}

impl Sampler {
    pub fn new(process: Process<'_>) -> Self {
        match process {
            Process::Raw(spec) => Sampler({
                let n = spec.n_states();
                let jumps = (0..n)
                    .map(|i| Jumps::new((0..n).filter(|&j| j != i || i == 0).map(|j| (j, spec.rate(i, j)))))
                    .collect();
                Inner::Raw { jumps, q0: spec.q0(), theta: spec.wait_threshold() }
            }),
            Process::Conditioned(chain) => Sampler({
                let table = chain.jump_table();
                let jumps = table.into_iter().map(Jumps::new).collect();
                let killing = (0..chain.n_states).map(|i| if i == 0 { 0.0 } else { chain.killing(i) }).collect();
                Inner::Conditioned {
                    jumps,
                    killing,
                    holding: chain.origin_holding,
                    exits: Jumps::new(chain.exit_probs.iter().copied()),
                    chain: Box::new(chain.clone()),
                }
            }),
        }
    }

    pub fn wait_threshold(&self) -> f64 {
        match &self.0 {
            Inner::Raw { theta, .. } => *theta,
            Inner::Conditioned { holding, .. } => holding.theta,
        }
    }

    pub fn n_states(&self) -> usize {
        match &self.0 {
            Inner::Raw { jumps, .. } | Inner::Conditioned { jumps, .. } => jumps.len(),
        }
    }

    /// One path on `[0, horizon]`.
    pub fn run(&self, start: AugmentedState, horizon: f64, rng: &mut ChaCha8Rng, record: bool) -> SamplePath {
        let theta = self.wait_threshold();
        let (mut state, mut clock) = match start {
            AugmentedState::Interior(i) => (i, 0.0),
            AugmentedState::AtOrigin(u) => (0, u),
        };
        let mut events = Vec::new();
        if record {
            events.push((0.0, state));
        }
        let mut t = 0.0;
        let end = loop {
            if state == 0 {
                let next = match &self.0 {
                    Inner::Raw { jumps, q0, .. } => {
                        let remaining = theta - clock;
                        let h = exp_draw(rng, *q0);
                        if h >= remaining {
                            Err(PathEnd::Tau(t + remaining))
                        } else {
                            Ok((t + h, jumps[0].pick(rng)))
                        }
                    }
                    Inner::Conditioned { holding, exits, chain, .. } => {
                        match holding.sample_departure(clock, rng.gen()) {
                            None => Err(PathEnd::Killed(t + theta - clock)),
                            Some(v) => {
                                let at = t + (v - clock);
                                let p_kill = chain.kill_probability(v);
                                if p_kill > 0.0 && rng.gen::<f64>() < p_kill {
                                    Err(PathEnd::Killed(at))
                                } else {
                                    Ok((at, exits.pick(rng)))
                                }
                            }
                        }
                    }
                };
                match next {
                    Err(end) => {
                        let at = match end {
                            PathEnd::Tau(s) | PathEnd::Killed(s) => s,
                            PathEnd::Censored => f64::INFINITY,
                        };
                        break if at > horizon { PathEnd::Censored } else { end };
                    }
                    Ok((at, target)) => {
                        if at > horizon {
                            break PathEnd::Censored;
                        }
                        t = at;
                        state = target;
                        clock = 0.0;
                    }
                }
            } else {
                let (jumps, kill) = match &self.0 {
                    Inner::Raw { jumps, .. } => (&jumps[state], 0.0),
                    Inner::Conditioned { jumps, killing, .. } => (&jumps[state], killing[state]),
                };
                let total = jumps.total() + kill;
                if total == 0.0 {
                    break PathEnd::Censored;
                }
                t += exp_draw(rng, total);
                if t > horizon {
                    break PathEnd::Censored;
                }
                if kill > 0.0 && rng.gen::<f64>() * total < kill {
                    break PathEnd::Killed(t);
                }
                state = jumps.pick(rng);
                clock = 0.0;
            }
            if record {
                events.push((t, state));
            }
        };
        SamplePath { start, horizon, wait_threshold: theta, events, end }
    }
}

/// One recorded path from master seed `seed` (stream 0).
pub fn simulate_path<'a>(
    process: impl Into<Process<'a>>,
    start: AugmentedState,
    horizon: f64,
    seed: u64,
) -> Result<SamplePath> {
    if !(horizon > 0.0) {
        return Err(Error::Precondition(format!("horizon {horizon} must be positive")));
    }
    let sampler = Sampler::new(process.into());
    Ok(sampler.run(start, horizon, &mut path_rng(seed, 0), true))
}

/// First entry times into the origin from interior state `start`, `∞` when
/// the path is still out at `horizon`.
pub fn sample_hitting_times(
    spec: &ChainSpec,
    start: usize,
    n_samples: usize,
    horizon: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    check_paths(n_samples)?;
    spec.check_state(&AugmentedState::Interior(start))?;
    if !(horizon > 0.0) {
        return Err(Error::Precondition(format!("horizon {horizon} must be positive")));
    }
    let n = spec.n_states();
    let jumps: Vec<Jumps> =
        (0..n).map(|i| Jumps::new((0..n).filter(|&j| j != i).map(|j| (j, spec.rate(i, j))))).collect();
    Ok(run_paths(n_samples, seed, |rng, _| {
        let (mut t, mut state) = (0.0, start);
        loop {
            t += exp_draw(rng, jumps[state].total());
            if t > horizon {
                return f64::INFINITY;
            }
            state = jumps[state].pick(rng);
            if state == 0 {
                return t;
            }
        }
    }))
}
