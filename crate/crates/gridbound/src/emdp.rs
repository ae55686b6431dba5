//! Continuous-state walker models, exact kernel sampling, Monte-Carlo
//! evaluation, and a fine-grid point-valued oracle.
//!
//! A [`WalkerModel`] is a continuous-state process on a compact box: each
//! action drifts the state by a fixed vector and then perturbs it uniformly
//! on a square of half-width `noise_half_width`, truncated to the domain and
//! renormalized. Runs accumulate per-step action costs until they enter the
//! goal (done, cost stops) or the failure region (one-time penalty on the
//! entering transition, then absorbed). The expected total cost from a
//! point, minimized over strategies, is the quantity the grid abstraction
//! brackets; this module provides the ground-truth side of that comparison:
//! exact samplers, reproducible Monte-Carlo estimates, and a fine-grid
//! midpoint discretization solved by its own value-iteration loop (no code
//! shared with the interval solver, so the two can check each other).

use crate::geometry::{AxisBox, GridPartition, Point};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmdpError {
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("strategy undefined at {0}")]
    UndefinedStrategy(String),
    #[error("the noise box around {center:?} has no overlap with the domain")]
    DegenerateKernel { center: Point },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("model file is not valid TOML: {0}")]
    ModelFormat(String),
}

pub type Result<T> = core::result::Result<T, EmdpError>;

/// One movement primitive: drift plus uniform noise at a fixed price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub name: String,
    /// Deterministic displacement applied before the noise.
    pub drift: Point,
    /// Half-width of the uniform noise square (must be positive).
    pub noise_half_width: f64,
    /// Per-step cost of taking this action from a non-terminal state.
    pub cost: f64,
}

/// Continuous-state model on a compact 2-D box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerModel {
    pub domain: AxisBox,
    pub goal: AxisBox,
    pub failure: AxisBox,
    pub actions: Vec<ActionSpec>,
    /// One-time surcharge on the transition that enters the failure region.
    pub failure_penalty: f64,
}

impl WalkerModel {
    /// The default semi-random walker: cross the `x = 1` finishing line
    /// before the clock `t` reaches 1 on the square `[0, 1.2]²`. `fast`
    /// moves far in `x` but costs 3 per step; `slow` creeps diagonally for
    /// 1 per step. Both actions share noise half-width 0.1. Entering the
    /// top strip (out of time) costs a one-time penalty of 10.
    #[must_use]
    pub fn default_walker() -> Self {
        WalkerModel {
            domain: AxisBox::new(vec![0.0, 0.0], vec![1.2, 1.2]).expect("static box"),
            goal: AxisBox::new(vec![1.0, 0.0], vec![1.2, 1.0]).expect("static box"),
            failure: AxisBox::new(vec![0.0, 1.0], vec![1.2, 1.2]).expect("static box"),
            actions: vec![
                ActionSpec {
                    name: "fast".into(),
                    drift: vec![0.25, 0.05],
                    noise_half_width: 0.1,
                    cost: 3.0,
                },
                ActionSpec {
                    name: "slow".into(),
                    drift: vec![0.10, 0.10],
                    noise_half_width: 0.1,
                    cost: 1.0,
                },
            ],
            failure_penalty: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.domain.dim();
        if k != 2 {
            return Err(EmdpError::InvalidModel(format!(
                "walker models are 2-dimensional, domain has {k} dimensions"
            )));
        }
        if self.domain.volume() <= 0.0 {
            return Err(EmdpError::InvalidModel("domain must have positive volume".into()));
        }
        for (name, b) in [("goal", &self.goal), ("failure", &self.failure)] {
            if b.dim() != k {
                return Err(EmdpError::InvalidModel(format!(
                    "{name} box has {} dimensions, domain has {k}",
                    b.dim()
                )));
            }
            if !self.domain.contains_box(b) {
                return Err(EmdpError::InvalidModel(format!(
                    "{name} box must lie inside the domain"
                )));
            }
        }
        let overlap: f64 = (0..k)
            .map(|d| {
                (self.goal.hi[d].min(self.failure.hi[d])
                    - self.goal.lo[d].max(self.failure.lo[d]))
                .max(0.0)
            })
            .product();
        if overlap > 1e-12 {
            return Err(EmdpError::InvalidModel(format!(
                "goal and failure boxes overlap with volume {overlap}"
            )));
        }
        if self.actions.is_empty() {
            return Err(EmdpError::InvalidModel("at least one action required".into()));
        }
        for a in &self.actions {
            if a.drift.len() != k {
                return Err(EmdpError::InvalidModel(format!(
                    "action {:?} drift has {} dimensions, domain has {k}",
                    a.name,
                    a.drift.len()
                )));
            }
            if !(a.noise_half_width > 0.0) {
                return Err(EmdpError::InvalidModel(format!(
                    "action {:?} noise half-width must be positive",
                    a.name
                )));
            }
            if !(a.cost >= 0.0) {
                return Err(EmdpError::InvalidModel(format!(
                    "action {:?} cost must be nonnegative",
                    a.name
                )));
            }
        }
        if self
            .actions
            .iter()
            .enumerate()
            .any(|(i, a)| self.actions[..i].iter().any(|b| b.name == a.name))
        {
            return Err(EmdpError::InvalidModel("action names must be unique".into()));
        }
        if !(self.failure_penalty >= 0.0) || !self.failure_penalty.is_finite() {
            return Err(EmdpError::InvalidModel(
                "failure penalty must be nonnegative and finite".into(),
            ));
        }
        Ok(())
    }

    /// Index of the action with this name.
    pub fn action_index(&self, name: &str) -> Result<usize> {
        self.actions
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| EmdpError::UnknownAction(name.to_string()))
    }

    /// Goal membership under the half-open convention (closed on faces that
    /// coincide with the domain's upper faces).
    #[must_use]
    pub fn is_goal(&self, s: &[f64]) -> bool {
        self.goal.contains_halfopen(s, &self.domain)
    }

    /// Failure membership; on the (zero-volume) shared boundary the goal
    /// takes precedence.
    #[must_use]
    pub fn is_failure(&self, s: &[f64]) -> bool {
        !self.is_goal(s) && self.failure.contains_halfopen(s, &self.domain)
    }

    #[must_use]
    pub fn is_terminal(&self, s: &[f64]) -> bool {
        self.is_goal(s) || self.is_failure(s)
    }

    /// Parses the TOML model schema and validates the result.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let model: WalkerModel =
            toml::from_str(text).map_err(|e| EmdpError::ModelFormat(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    /// Serializes to the TOML model schema.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| EmdpError::ModelFormat(e.to_string()))
    }
}

/// Per-step cost: 0 on terminal states, the action's price elsewhere. The
/// one-time failure surcharge is charged by the transition that *enters*
/// the failure region (see [`rollout`]), not by this function.
pub fn step_cost(model: &WalkerModel, s: &[f64], action: usize) -> Result<f64> {
    if action >= model.actions.len() {
        return Err(EmdpError::UnknownAction(format!("#{action}")));
    }
    if model.is_terminal(s) {
        Ok(0.0)
    } else {
        Ok(model.actions[action].cost)
    }
}

/// Draws the successor state: uniform on the noise square around
/// `s + drift`, intersected with the domain.
pub fn kernel_sample<R: rand::Rng>(
    model: &WalkerModel,
    s: &[f64],
    action: usize,
    rng: &mut R,
) -> Result<Point> {
    if action >= model.actions.len() {
        return Err(EmdpError::UnknownAction(format!("#{action}")));
    }
    let spec = &model.actions[action];
    let eps = spec.noise_half_width;
    let mut next = Vec::with_capacity(s.len());
    let center: Point = s.iter().zip(&spec.drift).map(|(x, d)| x + d).collect();
    for d in 0..s.len() {
        let lo = (center[d] - eps).max(model.domain.lo[d]);
        let hi = (center[d] + eps).min(model.domain.hi[d]);
        if lo > hi {
            return Err(EmdpError::DegenerateKernel { center });
        }
        if lo == hi {
            next.push(lo);
        } else {
            next.push(Uniform::new_inclusive(lo, hi).sample(rng));
        }
    }
    Ok(next)
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunTerminal {
    Goal,
    Failure,
    HorizonCapped,
}

/// One executed step: the state it left, the action taken, and the cost
/// charged (action price, plus the failure surcharge if this transition
/// entered the failure region).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStep {
    pub state: Point,
    pub action: String,
    pub incurred_cost: f64,
}

/// A finite trajectory prefix with its termination reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub steps: Vec<RunStep>,
    pub terminal: RunTerminal,
    pub final_state: Point,
}

impl Run {
    /// Total cost of the run (sum of incurred per-step costs).
    #[must_use]
    pub fn total_cost(&self) -> f64 {
        self.steps.iter().map(|st| st.incurred_cost).sum()
    }
}

/// Maps points to action choices. Implementations return a human-readable
/// location description as the error when they have no decision there.
pub trait PointStrategy: Sync {
    fn action_at(&self, s: &[f64]) -> core::result::Result<usize, String>;
}

/// Plays one fixed action everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantStrategy(pub usize);

impl PointStrategy for ConstantStrategy {
    fn action_at(&self, _s: &[f64]) -> core::result::Result<usize, String> {
        Ok(self.0)
    }
}

/// Simulates the walker under a strategy for at most `horizon` steps.
///
/// Terminal states stop the run immediately (no further cost); a transition
/// landing in the failure region charges the action price plus the one-time
/// failure penalty on that step.
pub fn rollout<R: rand::Rng>(
    model: &WalkerModel,
    strategy: &dyn PointStrategy,
    s0: &[f64],
    horizon: usize,
    rng: &mut R,
) -> Result<Run> {
    if horizon == 0 {
        return Err(EmdpError::InvalidArgument("horizon must be positive".into()));
    }
    let mut s = s0.to_vec();
    let mut steps = Vec::new();
    let mut terminal = RunTerminal::HorizonCapped;
    for _ in 0..horizon {
        if model.is_goal(&s) {
            terminal = RunTerminal::Goal;
            break;
        }
        if model.is_failure(&s) {
            terminal = RunTerminal::Failure;
            break;
        }
        let action = strategy
            .action_at(&s)
            .map_err(EmdpError::UndefinedStrategy)?;
        let mut cost = step_cost(model, &s, action)?;
        let next = kernel_sample(model, &s, action, rng)?;
        if model.is_failure(&next) {
            cost += model.failure_penalty;
        }
        steps.push(RunStep {
            state: s.clone(),
            action: model.actions[action].name.clone(),
            incurred_cost: cost,
        });
        s = next;
    }
    // The loop may also exhaust the horizon exactly when a terminal state
    // is reached; prefer the informative label.
    if terminal == RunTerminal::HorizonCapped {
        if model.is_goal(&s) {
            terminal = RunTerminal::Goal;
        } else if model.is_failure(&s) {
            terminal = RunTerminal::Failure;
        }
    }
    Ok(Run {
        steps,
        terminal,
        final_state: s,
    })
}

/// Monte-Carlo estimate of an expected run cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√n_runs`.
    pub std_error: f64,
    pub n_runs: usize,
    pub seed: u64,
}

/// Sums with pairwise splitting: error grows like `log n`, and the result
/// depends only on element order — never on thread scheduling.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Estimates the expected total cost of `strategy` from `s0` over `n_runs`
/// independent rollouts truncated at `horizon` steps.
///
/// Reproducibility: run `i` draws from a stream-split generator — the seed
/// keys the cipher and the run index selects the stream — so every run is
/// independent of scheduling and the estimate is bit-identical for a fixed
/// `(seed, n_runs)` on every platform and thread count.
pub fn mc_expected_cost(
    model: &WalkerModel,
    strategy: &dyn PointStrategy,
    s0: &[f64],
    horizon: usize,
    n_runs: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_runs == 0 {
        return Err(EmdpError::InvalidArgument("n_runs must be positive".into()));
    }
    let costs: Vec<f64> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rollout(model, strategy, s0, horizon, &mut rng).map(|run| run.total_cost())
        })
        .collect::<Result<_>>()?;
    let mean = pairwise_sum(&costs) / n_runs as f64;
    let std_error = if n_runs >= 2 {
        let sq: Vec<f64> = costs.iter().map(|c| (c - mean) * (c - mean)).collect();
        let var = pairwise_sum(&sq) / (n_runs - 1) as f64;
        (var / n_runs as f64).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_error,
        n_runs,
        seed,
    })
}

/// Output of [`fine_grid_oracle`]: one value per grid cell (row-major), and
/// the convergence report of its internal iteration.
#[derive(Debug, Clone)]
pub struct FineGridValues {
    pub partition: GridPartition,
    /// Approximate minimal expected cost from each cell's midpoint.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Sparse per-axis transition row: probabilities for a contiguous index
/// window along one dimension.
struct AxisRow {
    start: usize,
    probs: Vec<f64>,
}

/// Per-dimension overlap probabilities of the 1-D kernel `[c−ε, c+ε] ∩
/// [dom_lo, dom_hi]` against the cells of that axis.
fn axis_row(
    partition: &GridPartition,
    dim: usize,
    center: f64,
    eps: f64,
) -> core::result::Result<AxisRow, ()> {
    let dom_lo = partition.domain().lo[dim];
    let dom_hi = partition.domain().hi[dim];
    let lo = (center - eps).max(dom_lo);
    let hi = (center + eps).min(dom_hi);
    if lo >= hi {
        return Err(());
    }
    let count = partition.counts()[dim];
    let width = partition.widths()[dim];
    let den = hi - lo;
    let first = (((lo - dom_lo) / width).floor().max(0.0) as usize).min(count - 1);
    let mut probs = Vec::new();
    for u in first..count {
        let cell_lo = dom_lo + u as f64 * width;
        let cell_hi = if u + 1 == count {
            dom_hi
        } else {
            dom_lo + (u + 1) as f64 * width
        };
        if cell_lo >= hi {
            break;
        }
        let ov = (hi.min(cell_hi) - lo.max(cell_lo)).max(0.0);
        probs.push(ov / den);
    }
    Ok(AxisRow { start: first, probs })
}

/// Point-valued reference solver: discretizes the model on a fine grid by
/// planting one representative at each cell midpoint, connects midpoints by
/// the exact truncated-kernel overlap probabilities, and runs plain value
/// iteration from the zero table. Entirely independent of the interval
/// solver — this is the "ground truth at desk scale" the interval bounds
/// are checked against. Widths of 0.0125 or finer are recommended.
pub fn fine_grid_oracle(
    model: &WalkerModel,
    fine_width: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FineGridValues> {
    model.validate()?;
    if !(tol > 0.0) {
        return Err(EmdpError::InvalidArgument(format!(
            "tol must be positive, got {tol}"
        )));
    }
    let partition = GridPartition::uniform(model.domain.clone(), fine_width)?;
    let (nx, nt) = (partition.counts()[0], partition.counts()[1]);
    let n = nx * nt;

    // Midpoint classification: 0 = regular, 1 = goal, 2 = failure.
    let mut kind = vec![0u8; n];
    let mut mids = Vec::with_capacity(n);
    for id in partition.regions() {
        let mid = partition.region_box(&id)?.midpoint();
        let lin = partition.linear_index(&id);
        if model.is_goal(&mid) {
            kind[lin] = 1;
        } else if model.is_failure(&mid) {
            kind[lin] = 2;
        }
        mids.push(mid);
    }

    // Precompute per (action, cell) the separable axis rows once; the
    // product kernel makes the 2-D cell mass the product of axis masses.
    let n_actions = model.actions.len();
    let mut rows_x: Vec<Vec<Option<AxisRow>>> = Vec::with_capacity(n_actions);
    let mut rows_t: Vec<Vec<Option<AxisRow>>> = Vec::with_capacity(n_actions);
    for spec in &model.actions {
        let eps = spec.noise_half_width;
        let mut per_cell_x = Vec::with_capacity(n);
        let mut per_cell_t = Vec::with_capacity(n);
        for lin in 0..n {
            if kind[lin] != 0 {
                per_cell_x.push(None);
                per_cell_t.push(None);
                continue;
            }
            let cx = mids[lin][0] + spec.drift[0];
            let ct = mids[lin][1] + spec.drift[1];
            let rx = axis_row(&partition, 0, cx, eps);
            let rt = axis_row(&partition, 1, ct, eps);
            match (rx, rt) {
                (Ok(rx), Ok(rt)) => {
                    per_cell_x.push(Some(rx));
                    per_cell_t.push(Some(rt));
                }
                _ => {
                    return Err(EmdpError::DegenerateKernel {
                        center: vec![cx, ct],
                    })
                }
            }
        }
        rows_x.push(per_cell_x);
        rows_t.push(per_cell_t);
    }

    let mut values = vec![0.0f64; n];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    while iterations < max_iter {
        let next: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|lin| {
                if kind[lin] != 0 {
                    return 0.0;
                }
                let mut best = f64::INFINITY;
                for a in 0..n_actions {
                    let rx = rows_x[a][lin].as_ref().expect("regular cell rows exist");
                    let rt = rows_t[a][lin].as_ref().expect("regular cell rows exist");
                    let mut acc = model.actions[a].cost;
                    for (du, px) in rx.probs.iter().enumerate() {
                        if *px == 0.0 {
                            continue;
                        }
                        let u = rx.start + du;
                        for (dw, pt) in rt.probs.iter().enumerate() {
                            if *pt == 0.0 {
                                continue;
                            }
                            let w = rt.start + dw;
                            let target = u * nt + w;
                            let mut v = values[target];
                            if kind[target] == 2 {
                                v += model.failure_penalty;
                            }
                            acc += px * pt * v;
                        }
                    }
                    if acc < best {
                        best = acc;
                    }
                }
                best
            })
            .collect();
        iterations += 1;
        let mut delta = 0.0f64;
        for lin in 0..n {
            debug_assert!(
                next[lin] >= values[lin] - 1e-9,
                "oracle sweep decreased cell {lin}: {} -> {}",
                values[lin],
                next[lin]
            );
            delta = delta.max((next[lin] - values[lin]).abs());
        }
        values = next;
        residual = delta;
        if residual < tol {
            converged = true;
            break;
        }
    }

    Ok(FineGridValues {
        partition,
        values,
        iterations,
        residual,
        converged,
    })
}
