//! Finite-state imprecise MDPs and robust value iteration.
//!
//! An [`Imdp`] couples every (state, action) pair with a *credal set* — a
//! closed set of transition distributions — and a cost interval. The solver
//! computes, for each state, the least expected cost to reach the goal set
//! when the ambiguity is resolved adversarially in our favor (`min` mode)
//! or against us (`max` mode). Iterating the robust Bellman operator from
//! the zero table converges monotonically from below to the least fixpoint,
//! so a run stopped at residual `tol` reports values that are themselves
//! certified lower iterates of the fixpoint in either mode.
//!
//! Credal sets come in two flavors:
//! * [`CredalSet::Interval`] — per-successor probability bounds. The inner
//!   optimization is solved exactly by an ordered greedy assignment: sort
//!   successors by current value (ascending for `min`, descending for
//!   `max`), hand out upper bounds until the mass budget is spent, leave
//!   the rest at their lower bounds.
//! * [`CredalSet::Candidates`] — an explicit finite list of distributions;
//!   the inner optimization is an exhaustive scan.
//!
//! Both store successor lists sparsely: states absent from `successors`
//! implicitly carry a `[0, 0]` probability interval (resp. probability 0 in
//! every candidate), which keeps grid-induced models small without changing
//! their semantics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sup-norm residual below which value iteration stops by default.
pub const DEFAULT_VI_TOL: f64 = 1e-9;
/// Default sweep cap for value iteration.
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Values crossing this threshold are promoted to `+∞` (goal unreachable).
pub const DEFAULT_DIVERGENCE_CAP: f64 = 1e9;

/// Slack for probability-sum feasibility checks (`Σ p_low ≤ 1 ≤ Σ p_high`).
const FEAS_TOL: f64 = 1e-9;
/// Slack for "a distribution sums to one" checks.
const DIST_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ImdpError {
    #[error("credal set is infeasible: {0}")]
    InfeasibleCredal(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid cost interval: c_min {c_min} must satisfy 0 <= c_min <= c_max {c_max}")]
    InvalidCost { c_min: f64, c_max: f64 },
    #[error("state {state} has no entry for action {action}")]
    MissingEntry { state: usize, action: usize },
    #[error("goal state {state} is not absorbing under action {action}")]
    NotAbsorbing { state: usize, action: usize },
    #[error("goal state {state} must have zero cost, got [{c_min}, {c_max}]")]
    NonzeroGoalCost { state: usize, c_min: f64, c_max: f64 },
    #[error("strategy chooses no action for non-goal state {0}")]
    IncompleteStrategy(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(
        "instance too large for exhaustive enumeration: {0} (limits: 6 states, 3 actions, \
         candidate sets of at most 4, horizon at most 12)"
    )]
    Oversize(String),
    #[error("serialization failure: {0}")]
    Serialization(String),
    #[error("unsupported model format tag {0:?} (expected \"imdp-v1\")")]
    UnsupportedFormat(String),
}

pub type Result<T> = core::result::Result<T, ImdpError>;

/// Direction of the inner (adversary) optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptMode {
    /// Ambiguity resolved in our favor: guaranteed lower bound.
    Min,
    /// Ambiguity resolved against us: guaranteed upper bound.
    Max,
}

impl std::fmt::Display for OptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptMode::Min => "min",
            OptMode::Max => "max",
        })
    }
}

/// Closed set of transition distributions for one (state, action) pair.
///
/// `successors` lists the states that may receive mass, strictly increasing;
/// any state not listed implicitly has probability 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CredalSet {
    Interval {
        successors: Vec<usize>,
        p_low: Vec<f64>,
        p_high: Vec<f64>,
    },
    Candidates {
        successors: Vec<usize>,
        dists: Vec<Vec<f64>>,
    },
}

impl CredalSet {
    /// Point distribution: all mass on a single successor.
    #[must_use]
    pub fn point(successor: usize) -> Self {
        CredalSet::Interval {
            successors: vec![successor],
            p_low: vec![1.0],
            p_high: vec![1.0],
        }
    }

    #[must_use]
    pub fn successors(&self) -> &[usize] {
        match self {
            CredalSet::Interval { successors, .. } => successors,
            CredalSet::Candidates { successors, .. } => successors,
        }
    }

    /// Checks the structural invariants against a state count.
    pub fn validate(&self, num_states: usize) -> Result<()> {
        let succ = self.successors();
        if !succ.windows(2).all(|w| w[0] < w[1]) {
            return Err(ImdpError::InvalidArgument(
                "successor list must be strictly increasing".into(),
            ));
        }
        if succ.iter().any(|&s| s >= num_states) {
            return Err(ImdpError::InvalidArgument(format!(
                "successor index out of range (states: {num_states})"
            )));
        }
        match self {
            CredalSet::Interval {
                successors,
                p_low,
                p_high,
            } => {
                if p_low.len() != successors.len() || p_high.len() != successors.len() {
                    return Err(ImdpError::InvalidArgument(
                        "probability bound vectors must match the successor list".into(),
                    ));
                }
                for i in 0..p_low.len() {
                    if !(0.0 <= p_low[i] && p_low[i] <= p_high[i] && p_high[i] <= 1.0) {
                        return Err(ImdpError::InfeasibleCredal(format!(
                            "bounds for successor {} violate 0 <= {} <= {} <= 1",
                            successors[i], p_low[i], p_high[i]
                        )));
                    }
                }
                let sum_lo: f64 = p_low.iter().sum();
                let sum_hi: f64 = p_high.iter().sum();
                if sum_lo > 1.0 + FEAS_TOL || sum_hi < 1.0 - FEAS_TOL {
                    return Err(ImdpError::InfeasibleCredal(format!(
                        "no distribution fits: sum of lower bounds {sum_lo}, upper {sum_hi}"
                    )));
                }
                Ok(())
            }
            CredalSet::Candidates { successors, dists } => {
                if dists.is_empty() {
                    return Err(ImdpError::InvalidDistribution(
                        "candidate list must be nonempty".into(),
                    ));
                }
                for d in dists {
                    if d.len() != successors.len() {
                        return Err(ImdpError::InvalidDistribution(
                            "candidate length must match the successor list".into(),
                        ));
                    }
                    if d.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                        return Err(ImdpError::InvalidDistribution(
                            "candidate probabilities must lie in [0, 1]".into(),
                        ));
                    }
                    let s: f64 = d.iter().sum();
                    if (s - 1.0).abs() > DIST_TOL {
                        return Err(ImdpError::InvalidDistribution(format!(
                            "candidate sums to {s}, expected 1"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Per-step cost range for one (state, action) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostInterval {
    pub c_min: f64,
    pub c_max: f64,
}

impl CostInterval {
    pub fn new(c_min: f64, c_max: f64) -> Result<Self> {
        if !(0.0 <= c_min && c_min <= c_max) || !c_max.is_finite() {
            return Err(ImdpError::InvalidCost { c_min, c_max });
        }
        Ok(CostInterval { c_min, c_max })
    }

    /// Point cost (no ambiguity).
    #[must_use]
    pub fn exact(c: f64) -> Self {
        CostInterval { c_min: c, c_max: c }
    }

    #[must_use]
    pub fn endpoint(&self, mode: OptMode) -> f64 {
        match mode {
            OptMode::Min => self.c_min,
            OptMode::Max => self.c_max,
        }
    }
}

/// Transition data for one (state, action) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub credal: CredalSet,
    pub cost: CostInterval,
}

/// Finite-state imprecise MDP.
///
/// `table[s][a]` holds the entry for state `s` under action `a`; every
/// non-goal state must have an entry for every action. Goal states are
/// absorbing with zero cost — they may either omit entries entirely or
/// carry explicitly absorbing ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Imdp {
    pub states: Vec<String>,
    pub goal: Vec<bool>,
    pub actions: Vec<String>,
    pub table: Vec<Vec<Option<Entry>>>,
}

impl Imdp {
    /// Empty model with the given state/action names and goal flags.
    pub fn new(states: Vec<String>, goal: Vec<bool>, actions: Vec<String>) -> Result<Self> {
        if states.is_empty() || actions.is_empty() {
            return Err(ImdpError::InvalidArgument(
                "states and actions must be nonempty".into(),
            ));
        }
        if goal.len() != states.len() {
            return Err(ImdpError::InvalidArgument(
                "goal flags must match the state list".into(),
            ));
        }
        let n = states.len();
        let m = actions.len();
        Ok(Imdp {
            states,
            goal,
            actions,
            table: vec![vec![None; m]; n],
        })
    }

    #[must_use]
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    #[must_use]
    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn set_entry(
        &mut self,
        state: usize,
        action: usize,
        credal: CredalSet,
        cost: CostInterval,
    ) -> Result<()> {
        if state >= self.num_states() || action >= self.num_actions() {
            return Err(ImdpError::InvalidArgument(format!(
                "entry index ({state}, {action}) out of range"
            )));
        }
        self.table[state][action] = Some(Entry { credal, cost });
        Ok(())
    }

    /// Checks every structural invariant; called by the solver entry points.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_states();
        for s in 0..n {
            for a in 0..self.num_actions() {
                match &self.table[s][a] {
                    None => {
                        if !self.goal[s] {
                            return Err(ImdpError::MissingEntry { state: s, action: a });
                        }
                    }
                    Some(entry) => {
                        entry.credal.validate(n)?;
                        CostInterval::new(entry.cost.c_min, entry.cost.c_max)?;
                        if self.goal[s] {
                            self.check_absorbing(s, a, entry)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Goal entries must put all mass on goal states and cost nothing.
    fn check_absorbing(&self, state: usize, action: usize, entry: &Entry) -> Result<()> {
        if entry.cost.c_min != 0.0 || entry.cost.c_max != 0.0 {
            return Err(ImdpError::NonzeroGoalCost {
                state,
                c_min: entry.cost.c_min,
                c_max: entry.cost.c_max,
            });
        }
        let ok = match &entry.credal {
            CredalSet::Interval {
                successors, p_high, ..
            } => successors
                .iter()
                .zip(p_high)
                .all(|(&t, &hi)| self.goal[t] || hi <= DIST_TOL),
            CredalSet::Candidates { successors, dists } => dists.iter().all(|d| {
                let goal_mass: f64 = successors
                    .iter()
                    .zip(d)
                    .filter(|(&t, _)| self.goal[t])
                    .map(|(_, &p)| p)
                    .sum();
                (goal_mass - 1.0).abs() <= FEAS_TOL
            }),
        };
        if ok {
            Ok(())
        } else {
            Err(ImdpError::NotAbsorbing { state, action })
        }
    }
}

/// Per-state values: finite binary64 or `+∞`.
pub type ValueTable = Vec<f64>;

/// Deterministic memoryless strategy: an action index per non-goal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub choice: Vec<Option<usize>>,
}

/// Concrete distribution per (state, action), drawn from the credal set;
/// probabilities are aligned with the credal set's successor list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adversary {
    pub choice: Vec<Vec<Option<Vec<f64>>>>,
}

/// Expectation of `v` under sparse probabilities, `∞`-aware: mass on an
/// infinite-value state yields `∞`, zero mass never touches the value
/// (avoids `0·∞`).
fn expectation(successors: &[usize], probs: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, &s) in successors.iter().enumerate() {
        let p = probs[i];
        if p > 0.0 {
            let val = v[s];
            if val.is_infinite() {
                return f64::INFINITY;
            }
            acc += p * val;
        }
    }
    acc
}

/// Optimal expectation of `v` over the credal set, with an achieving vector.
///
/// Interval variant: ordered greedy — successors sorted by value (ascending
/// for `min`, descending for `max`, ties by state index), upper bounds
/// saturated in sorted order until the mass budget `1 − Σ p_low` is spent.
/// Exact for interval ambiguity sets. Candidates variant: exhaustive scan,
/// ties keeping the earliest candidate. The returned vector is aligned with
/// the credal set's successor list.
pub fn inner_opt(credal: &CredalSet, v: &[f64], mode: OptMode) -> Result<(f64, Vec<f64>)> {
    match credal {
        CredalSet::Interval {
            successors,
            p_low,
            p_high,
        } => {
            let k = successors.len();
            let sum_lo: f64 = p_low.iter().sum();
            let sum_hi: f64 = p_high.iter().sum();
            if sum_lo > 1.0 + FEAS_TOL || sum_hi < 1.0 - FEAS_TOL {
                return Err(ImdpError::InfeasibleCredal(format!(
                    "no distribution fits: sum of lower bounds {sum_lo}, upper {sum_hi}"
                )));
            }
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| {
                let (va, vb) = (v[successors[a]], v[successors[b]]);
                let by_value = match mode {
                    OptMode::Min => va.partial_cmp(&vb).expect("values must not be NaN"),
                    OptMode::Max => vb.partial_cmp(&va).expect("values must not be NaN"),
                };
                by_value.then(successors[a].cmp(&successors[b]))
            });
            let mut probs = p_low.clone();
            let mut budget = (1.0 - sum_lo).max(0.0);
            for &i in &order {
                if budget <= 0.0 {
                    break;
                }
                let extra = (p_high[i] - p_low[i]).min(budget);
                probs[i] += extra;
                budget -= extra;
            }
            let value = expectation(successors, &probs, v);
            Ok((value, probs))
        }
        CredalSet::Candidates { successors, dists } => {
            let mut best: Option<(f64, usize)> = None;
            for (idx, d) in dists.iter().enumerate() {
                let e = expectation(successors, d, v);
                let better = match best {
                    None => true,
                    Some((b, _)) => match mode {
                        OptMode::Min => e < b,
                        OptMode::Max => e > b,
                    },
                };
                if better {
                    best = Some((e, idx));
                }
            }
            let (value, idx) = best.ok_or_else(|| {
                ImdpError::InvalidDistribution("candidate list must be nonempty".into())
            })?;
            Ok((value, dists[idx].clone()))
        }
    }
}

/// Robust state value for one state under the current table: min over
/// actions of `cost endpoint + inner_opt`.
fn state_value(imdp: &Imdp, s: usize, v: &[f64], mode: OptMode) -> Result<f64> {
    if imdp.goal[s] {
        return Ok(0.0);
    }
    let mut best = f64::INFINITY;
    for a in 0..imdp.num_actions() {
        let entry = imdp.table[s][a]
            .as_ref()
            .ok_or(ImdpError::MissingEntry { state: s, action: a })?;
        let (inner, _) = inner_opt(&entry.credal, v, mode)?;
        let q = entry.cost.endpoint(mode) + inner;
        if q < best {
            best = q;
        }
    }
    Ok(best)
}

/// One application of the robust Bellman operator.
///
/// Goal states are pinned at 0; every other state takes the best action
/// under the mode's cost endpoint and adversarial inner optimization.
/// Reads a frozen input table and writes a fresh output table, so the
/// result is bit-identical no matter how many threads participate.
pub fn vi_sweep(imdp: &Imdp, v: &[f64], mode: OptMode) -> Result<ValueTable> {
    if v.len() != imdp.num_states() {
        return Err(ImdpError::InvalidArgument(format!(
            "value table has {} entries for {} states",
            v.len(),
            imdp.num_states()
        )));
    }
    (0..imdp.num_states())
        .into_par_iter()
        .map(|s| state_value(imdp, s, v, mode))
        .collect()
}

/// Strategy-restricted sweep: no minimization over actions, the adversary
/// still optimizes the credal set and the cost endpoint follows the mode.
fn vi_sweep_fixed(
    imdp: &Imdp,
    strategy: &Strategy,
    v: &[f64],
    mode: OptMode,
) -> Result<ValueTable> {
    (0..imdp.num_states())
        .into_par_iter()
        .map(|s| {
            if imdp.goal[s] {
                return Ok(0.0);
            }
            let a = strategy.choice[s].ok_or(ImdpError::IncompleteStrategy(s))?;
            let entry = imdp.table[s][a]
                .as_ref()
                .ok_or(ImdpError::MissingEntry { state: s, action: a })?;
            let (inner, _) = inner_opt(&entry.credal, v, mode)?;
            Ok(entry.cost.endpoint(mode) + inner)
        })
        .collect()
}

/// Tuning knobs for [`value_iteration`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViParams {
    /// Stop when the sup-norm residual over finite-valued states drops below.
    pub tol: f64,
    /// Hard sweep cap.
    pub max_iter: usize,
    /// Values crossing this are finalized to `+∞` and leave the residual.
    pub divergence_cap: f64,
}

impl Default for ViParams {
    fn default() -> Self {
        ViParams {
            tol: DEFAULT_VI_TOL,
            max_iter: DEFAULT_MAX_ITER,
            divergence_cap: DEFAULT_DIVERGENCE_CAP,
        }
    }
}

impl ViParams {
    #[must_use]
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    #[must_use]
    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    #[must_use]
    pub fn with_divergence_cap(mut self, cap: f64) -> Self {
        self.divergence_cap = cap;
        self
    }
}

/// Convergence report for a value-iteration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViReport {
    pub mode: OptMode,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// States finalized to `+∞` after crossing the divergence cap.
    pub diverged: Vec<usize>,
    pub tol: f64,
    /// Iterates climb monotonically from the zero table, so on a converged
    /// run the reported values are certified lower iterates of the fixpoint.
    pub certified_from_below: bool,
}

/// Full output of a value-iteration run.
#[derive(Debug, Clone)]
pub struct ViOutcome {
    pub values: ValueTable,
    pub strategy: Strategy,
    pub adversary: Adversary,
    pub report: ViReport,
}

/// Iterates [`vi_sweep`] from the zero table until the sup-norm residual
/// over finite-valued states drops below `params.tol` or `params.max_iter`
/// sweeps have run. States whose value crosses `params.divergence_cap` are
/// latched at `+∞` and no longer counted in the residual. A run that
/// exhausts `max_iter` without converging still returns its values, with
/// `report.converged == false` and the final residual.
pub fn value_iteration(imdp: &Imdp, mode: OptMode, params: &ViParams) -> Result<ViOutcome> {
    if !(params.tol > 0.0) {
        return Err(ImdpError::InvalidArgument(format!(
            "tol must be positive, got {}",
            params.tol
        )));
    }
    if !(params.divergence_cap > 0.0) {
        return Err(ImdpError::InvalidArgument(format!(
            "divergence_cap must be positive, got {}",
            params.divergence_cap
        )));
    }
    imdp.validate()?;
    let n = imdp.num_states();
    let mut values: ValueTable = vec![0.0; n];
    let mut diverged = vec![false; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iter {
        let mut next = vi_sweep(imdp, &values, mode)?;
        iterations += 1;
        let mut max_delta = 0.0f64;
        for s in 0..n {
            if diverged[s] {
                next[s] = f64::INFINITY;
                continue;
            }
            if next[s] > params.divergence_cap {
                diverged[s] = true;
                next[s] = f64::INFINITY;
                continue;
            }
            // The sweep sequence must climb from the zero table; allow only
            // rounding-level slack.
            debug_assert!(
                next[s] >= values[s] - 1e-9,
                "sweep {iterations} decreased state {s}: {} -> {}",
                values[s],
                next[s]
            );
            let delta = (next[s] - values[s]).abs();
            if delta > max_delta {
                max_delta = delta;
            }
        }
        values = next;
        residual = max_delta;
        if residual < params.tol {
            converged = true;
            break;
        }
    }

    let (strategy, adversary) = extract(imdp, &values, mode)?;
    Ok(ViOutcome {
        values,
        strategy,
        adversary,
        report: ViReport {
            mode,
            iterations,
            residual,
            converged,
            diverged: (0..n).filter(|&s| diverged[s]).collect(),
            tol: params.tol,
            certified_from_below: true,
        },
    })
}

/// Reads the greedy strategy and adversary off a value table: per non-goal
/// state the argmin action (ties to the earliest action in declaration
/// order), and for *every* existing (state, action) entry the witness
/// distribution achieving the inner optimum at these values.
pub fn extract(imdp: &Imdp, values: &[f64], mode: OptMode) -> Result<(Strategy, Adversary)> {
    let n = imdp.num_states();
    if values.len() != n {
        return Err(ImdpError::InvalidArgument(format!(
            "value table has {} entries for {} states",
            values.len(),
            n
        )));
    }
    let mut choice = vec![None; n];
    let mut witness: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; imdp.num_actions()]; n];
    for s in 0..n {
        let mut best: Option<(f64, usize)> = None;
        for a in 0..imdp.num_actions() {
            let Some(entry) = imdp.table[s][a].as_ref() else {
                continue;
            };
            let (inner, probs) = inner_opt(&entry.credal, values, mode)?;
            witness[s][a] = Some(probs);
            let q = entry.cost.endpoint(mode) + inner;
            if best.is_none_or(|(b, _)| q < b) {
                best = Some((q, a));
            }
        }
        if !imdp.goal[s] {
            let (_, a) = best.ok_or(ImdpError::MissingEntry { state: s, action: 0 })?;
            choice[s] = Some(a);
        }
    }
    Ok((Strategy { choice }, Adversary { choice: witness }))
}

/// Expected cost of following `strategy` for exactly `n_steps` steps from
/// the zero table: the adversary re-optimizes greedily at every step and
/// the cost endpoint follows `mode`.
pub fn bounded_horizon_values(
    imdp: &Imdp,
    strategy: &Strategy,
    n_steps: usize,
    mode: OptMode,
) -> Result<ValueTable> {
    if n_steps == 0 {
        return Err(ImdpError::InvalidArgument(
            "n_steps must be positive".into(),
        ));
    }
    if strategy.choice.len() != imdp.num_states() {
        return Err(ImdpError::InvalidArgument(
            "strategy must cover every state".into(),
        ));
    }
    for s in 0..imdp.num_states() {
        if !imdp.goal[s] && strategy.choice[s].is_none() {
            return Err(ImdpError::IncompleteStrategy(s));
        }
    }
    let mut v = vec![0.0; imdp.num_states()];
    for _ in 0..n_steps {
        v = vi_sweep_fixed(imdp, strategy, &v, mode)?;
    }
    Ok(v)
}

/// Exhaustive horizon-bounded reference: evaluates *every* deterministic
/// stationary strategy against *every* stationary candidate adversary by
/// dynamic programming and returns the pointwise min-min and min-max
/// tables. Only for tiny models (≤ 6 states, ≤ 3 actions, candidate sets
/// of ≤ 4, horizon ≤ 12); everything else is an oversize error. Serves as
/// an independent oracle for the value-iteration solver.
pub fn brute_force_values(imdp: &Imdp, horizon: usize) -> Result<(ValueTable, ValueTable)> {
    imdp.validate()?;
    let n = imdp.num_states();
    if n > 6 {
        return Err(ImdpError::Oversize(format!("{n} states")));
    }
    if imdp.num_actions() > 3 {
        return Err(ImdpError::Oversize(format!("{} actions", imdp.num_actions())));
    }
    if horizon == 0 {
        return Err(ImdpError::InvalidArgument("horizon must be positive".into()));
    }
    if horizon > 12 {
        return Err(ImdpError::Oversize(format!("horizon {horizon}")));
    }
    for s in 0..n {
        for a in 0..imdp.num_actions() {
            if let Some(entry) = &imdp.table[s][a] {
                match &entry.credal {
                    CredalSet::Candidates { dists, .. } => {
                        if dists.len() > 4 {
                            return Err(ImdpError::Oversize(format!(
                                "{} candidates at state {s} action {a}",
                                dists.len()
                            )));
                        }
                    }
                    CredalSet::Interval { .. } => {
                        return Err(ImdpError::InvalidArgument(
                            "exhaustive enumeration requires candidate-list credal sets".into(),
                        ));
                    }
                }
            }
        }
    }

    let non_goal: Vec<usize> = (0..n).filter(|&s| !imdp.goal[s]).collect();
    let strategies = enumerate_choices(
        &non_goal
            .iter()
            .map(|_| imdp.num_actions())
            .collect::<Vec<_>>(),
    );

    let mut min_table = vec![f64::INFINITY; n];
    let mut max_table = vec![f64::INFINITY; n];
    for g in 0..n {
        if imdp.goal[g] {
            min_table[g] = 0.0;
            max_table[g] = 0.0;
        }
    }

    for sigma in &strategies {
        // Candidate counts for the pairs this strategy actually uses.
        let pair_entries: Vec<(usize, &Entry)> = non_goal
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let a = sigma[k];
                (s, imdp.table[s][a].as_ref().expect("validated entry"))
            })
            .collect();
        let counts: Vec<usize> = pair_entries
            .iter()
            .map(|(_, e)| match &e.credal {
                CredalSet::Candidates { dists, .. } => dists.len(),
                CredalSet::Interval { .. } => unreachable!("rejected above"),
            })
            .collect();

        let mut sigma_max = vec![f64::NEG_INFINITY; n];
        let mut sigma_min = vec![f64::INFINITY; n];
        for g in 0..n {
            if imdp.goal[g] {
                sigma_max[g] = 0.0;
                sigma_min[g] = 0.0;
            }
        }

        for alpha in &enumerate_choices(&counts) {
            for (mode, table) in [
                (OptMode::Min, &mut sigma_min),
                (OptMode::Max, &mut sigma_max),
            ] {
                let mut v = vec![0.0; n];
                for _ in 0..horizon {
                    let mut next = vec![0.0; n];
                    for (k, (s, entry)) in pair_entries.iter().enumerate() {
                        let (succ, d) = match &entry.credal {
                            CredalSet::Candidates { successors, dists } => {
                                (successors, &dists[alpha[k]])
                            }
                            CredalSet::Interval { .. } => unreachable!("rejected above"),
                        };
                        next[*s] = entry.cost.endpoint(mode) + expectation(succ, d, &v);
                    }
                    v = next;
                }
                for s in 0..n {
                    match mode {
                        OptMode::Min => {
                            if v[s] < table[s] {
                                table[s] = v[s];
                            }
                        }
                        OptMode::Max => {
                            if v[s] > table[s] {
                                table[s] = v[s];
                            }
                        }
                    }
                }
            }
        }

        for s in 0..n {
            min_table[s] = min_table[s].min(sigma_min[s]);
            max_table[s] = max_table[s].min(sigma_max[s]);
        }
    }
    Ok((min_table, max_table))
}

/// All index tuples with `choice[k] < radix[k]` (empty radix → one empty
/// tuple), in lexicographic order.
fn enumerate_choices(radix: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &r in radix {
        let mut grown = Vec::with_capacity(out.len() * r);
        for prefix in &out {
            for c in 0..r {
                let mut next = prefix.clone();
                next.push(c);
                grown.push(next);
            }
        }
        out = grown;
    }
    out
}

// ─── Serialization ──────────────────────────────────────────────────────

/// On-disk form: `format` tag, state and action names, goal indices, and a
/// flat entry list in (state, action) order. Binary64 values survive the
/// round trip bit-exactly (shortest-round-trip decimal encoding).
#[derive(Serialize, Deserialize)]
struct ImdpFile {
    format: String,
    states: Vec<String>,
    goal: Vec<usize>,
    actions: Vec<String>,
    entries: Vec<EntryRecord>,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    state: usize,
    action: usize,
    cost: CostInterval,
    credal: CredalSet,
}

/// Format tag accepted by [`Imdp::from_json`].
pub const IMDP_FORMAT: &str = "imdp-v1";

impl From<&Imdp> for ImdpFile {
    fn from(imdp: &Imdp) -> ImdpFile {
        let mut entries = Vec::new();
        for s in 0..imdp.num_states() {
            for a in 0..imdp.num_actions() {
                if let Some(e) = &imdp.table[s][a] {
                    entries.push(EntryRecord {
                        state: s,
                        action: a,
                        cost: e.cost,
                        credal: e.credal.clone(),
                    });
                }
            }
        }
        ImdpFile {
            format: IMDP_FORMAT.to_string(),
            states: imdp.states.clone(),
            goal: (0..imdp.num_states()).filter(|&s| imdp.goal[s]).collect(),
            actions: imdp.actions.clone(),
            entries,
        }
    }
}

impl TryFrom<ImdpFile> for Imdp {
    type Error = ImdpError;

    fn try_from(file: ImdpFile) -> Result<Imdp> {
        if file.format != IMDP_FORMAT {
            return Err(ImdpError::UnsupportedFormat(file.format));
        }
        let n = file.states.len();
        let mut goal = vec![false; n];
        for &g in &file.goal {
            if g >= n {
                return Err(ImdpError::InvalidArgument(format!(
                    "goal index {g} out of range for {n} states"
                )));
            }
            goal[g] = true;
        }
        let mut imdp = Imdp::new(file.states, goal, file.actions)?;
        for rec in file.entries {
            imdp.set_entry(rec.state, rec.action, rec.credal, rec.cost)?;
        }
        Ok(imdp)
    }
}

impl Serialize for Imdp {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        ImdpFile::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Imdp {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        let file = ImdpFile::deserialize(deserializer)?;
        Imdp::try_from(file).map_err(serde::de::Error::custom)
    }
}

impl Imdp {
    /// Serializes to the versioned JSON schema (deterministic entry order).
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| ImdpError::Serialization(e.to_string()))
    }

    /// Parses and validates the JSON schema produced by [`Imdp::to_json`].
    pub fn from_json(text: &str) -> Result<Imdp> {
        let file: ImdpFile =
            serde_json::from_str(text).map_err(|e| ImdpError::Serialization(e.to_string()))?;
        let imdp = Imdp::try_from(file)?;
        imdp.validate()?;
        Ok(imdp)
    }
}
