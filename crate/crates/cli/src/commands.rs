use std::fs;
use std::path::Path;

use holdcond::analysis::{analyze, AnalysisOptions};
use holdcond::asymptotics::limit_vector;
use holdcond::coinruns::{coin_analysis, poisson_phi};
use holdcond::conditioned::{make_hlambda, make_limit_chain, make_subexp_weak, make_vague_limit, ConditionedChain};
use holdcond::hitting::harmonic_vector_bd;
use holdcond::montecarlo::{
    conditioned_vs_rejection, estimate_occupancy, estimate_survival, estimate_tail_ratio, estimates_csv,
    sample_hitting_times, subexp_diagnostic, verify_harmonic, Process, SubexpOptions,
};
use holdcond::renewal::{lift_survival, solve_renewal};
use holdcond::{parse_spec, AugmentedState, ChainSpec, Error};
use serde::Serialize;

use crate::{
    AnalyzeArgs, CoinArgs, Command, ConditionArgs, ConditionMode, DiagnoseArgs, Failure, PoissonArgs, RenewalArgs,
    SimMode, SimulateArgs, TailsArgs,
};

type Outcome = Result<String, Failure>;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Coin(a) => cmd_coin(a),
        Command::Poisson(a) => cmd_poisson(a),
        Command::Renewal(a) => cmd_renewal(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Condition(a) => cmd_condition(a),
        Command::Tails(a) => cmd_tails(a),
        Command::DiagnoseSubexp(a) => cmd_diagnose(a),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input("io", format!("cannot read {}: {e}", path.display())))
}

fn load_spec(path: &Path) -> Result<ChainSpec, Failure> {
    Ok(parse_spec(&read(path)?)?)
}

fn json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// `i` for an interior state, `0` for `(0, 0)`, `0:u` for `(0, u)`.
fn parse_state(text: &str, spec: &ChainSpec) -> Result<AugmentedState, Failure> {
    let bad = || Failure::input("usage", format!("cannot read state {text:?}; use i, 0 or 0:u"));
    let state = match text.split_once(':') {
        Some(("0", u)) => AugmentedState::AtOrigin(u.trim().parse().map_err(|_| bad())?),
        Some(_) => return Err(bad()),
        None => match text.trim().parse::<usize>().map_err(|_| bad())? {
            0 => AugmentedState::ORIGIN,
            i => AugmentedState::Interior(i),
        },
    };
    spec.check_state(&state)?;
    Ok(state)
}

fn cmd_analyze(a: AnalyzeArgs) -> Outcome {
    let spec = load_spec(&a.spec)?;
    let opts = AnalysisOptions { transience_tol: a.transience_tol, mc_paths: a.mc_paths, mc_time: a.mc_time, seed: a.seed };
    Ok(json(&analyze(&spec, &opts)?))
}

fn cmd_coin(a: CoinArgs) -> Outcome {
    let res = coin_analysis(a.p, a.k, a.n)?;
    Ok(if a.n.is_some() { res.table_csv() } else { json(&res) })
}

fn cmd_poisson(a: PoissonArgs) -> Outcome {
    Ok(json(&poisson_phi(a.r)?))
}

fn cmd_renewal(a: RenewalArgs) -> Outcome {
    let spec = load_spec(&a.spec)?;
    let start = parse_state(&a.start, &spec)?;
    let base = solve_renewal(&spec, a.t_max, a.dt)?;
    let curve = if start == AugmentedState::ORIGIN { base } else { lift_survival(&spec, &base, start)? };
    // Scale by e^{φt} only when a decay rate exists.
    let phi = match limit_vector(&spec) {
        Ok((_, Some(sol))) => Some(sol.phi),
        _ => None,
    };
    Ok(curve.to_csv(phi))
}

fn grid(a: &SimulateArgs) -> Result<Vec<f64>, Failure> {
    match &a.t_grid {
        Some(g) => Ok(g.clone()),
        None if a.points == 0 => Err(Failure::input("usage", "--points must be at least 1")),
        None => Ok((1..=a.points).map(|k| a.horizon * k as f64 / a.points as f64).collect()),
    }
}

fn conditioned_chain(a: &SimulateArgs, spec: &ChainSpec) -> Result<ConditionedChain, Failure> {
    match &a.chain {
        Some(path) => Ok(ConditionedChain::from_json(&read(path)?)?),
        None => {
            let (p, _) = limit_vector(spec)?;
            Ok(make_limit_chain(spec, &p)?)
        }
    }
}

fn need_condition_horizon(a: &SimulateArgs) -> Result<f64, Failure> {
    a.condition_horizon.ok_or_else(|| Failure::input("usage", "this mode needs --condition-horizon"))
}

fn cmd_simulate(a: SimulateArgs) -> Outcome {
    let spec = load_spec(&a.spec)?;
    let start = parse_state(&a.start, &spec)?;
    let t_grid = grid(&a)?;
    match a.mode {
        SimMode::Survival => Ok(estimates_csv(&estimate_survival(&spec, start, &t_grid, a.n_paths, a.seed)?)),
        SimMode::Conditioned => {
            let chain = conditioned_chain(&a, &spec)?;
            let est =
                estimate_occupancy(Process::Conditioned(&chain), a.state, start, &t_grid, a.n_paths, a.seed, None)?;
            Ok(estimates_csv(&est))
        }
        SimMode::Rejection => {
            let big_t = need_condition_horizon(&a)?;
            let est =
                estimate_occupancy(Process::Raw(&spec), a.state, start, &t_grid, a.n_paths, a.seed, Some(big_t))?;
            Ok(estimates_csv(&est))
        }
        SimMode::Compare => {
            let big_t = need_condition_horizon(&a)?;
            let chain = conditioned_chain(&a, &spec)?;
            Ok(json(&conditioned_vs_rejection(&spec, &chain, big_t, a.horizon, a.n_paths, a.seed)?))
        }
        SimMode::Harmonic => {
            let (p, sol) = limit_vector(&spec)?;
            let phi = sol.map_or(0.0, |s| s.phi);
            let prof = verify_harmonic(&spec, &p.p, phi, &t_grid, a.n_paths, a.seed, start)?;
            Ok(estimates_csv(&prof.estimates))
        }
    }
}

fn cmd_condition(a: ConditionArgs) -> Outcome {
    let spec = load_spec(&a.spec)?;
    let chain = match a.mode {
        ConditionMode::Limit => {
            let (p, _) = limit_vector(&spec)?;
            make_limit_chain(&spec, &p)?
        }
        ConditionMode::Vague => make_vague_limit(&spec)?,
        ConditionMode::Hlambda => make_hlambda(&spec, a.lambda)?,
        ConditionMode::Subexp => {
            let coeffs = match a.a {
                Some(v) => v,
                None => harmonic_vector_bd(&spec)?,
            };
            make_subexp_weak(&spec, &coeffs)?
        }
    };
    let mut out = chain.to_json();
    out.push('\n');
    Ok(out)
}

fn cmd_tails(a: TailsArgs) -> Outcome {
    let spec = load_spec(&a.spec)?;
    let i = parse_state(&a.i, &spec)?;
    let j = parse_state(&a.j, &spec)?;
    let r = estimate_tail_ratio(&spec, i, j, a.v, a.t, a.n_paths, a.seed)?;
    if !r.reliable {
        eprintln!(
            "{}",
            serde_json::json!({
                "warning": "unreliable",
                "denominator_survivors": r.denominator_survivors,
            })
        );
    }
    Ok(estimates_csv(&[r.as_estimate()]))
}

fn cmd_diagnose(a: DiagnoseArgs) -> Outcome {
    let spec = load_spec(&a.spec)?;
    if a.state == 0 {
        return Err(Error::Precondition("first-entry times need an interior start state".into()).into());
    }
    let samples = sample_hitting_times(&spec, a.state, a.n_samples, a.horizon, a.seed)?;
    let opts = SubexpOptions { order: a.order, t_grid: None, seed: a.seed, tolerance: a.tolerance };
    let rep = subexp_diagnostic(&samples, &opts)?;
    eprintln!(
        "{}",
        serde_json::json!({
            "consistent": rep.consistent,
            "unreliable": rep.unreliable,
            "degenerate": rep.degenerate,
            "max_ratio": rep.max_ratio,
            "bound": rep.bound,
        })
    );
    Ok(rep.to_csv())
}
