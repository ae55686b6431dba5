//! Grid-induced interval MDPs: the bridge from continuous walker models to
//! the finite solver.
//!
//! [`induce`] turns a model plus a consistent grid partition into an
//! [`Imdp`] with one state per cell. In *interval* mode every (cell,
//! action) pair gets per-target probability bounds from exact critical-
//! point enumeration over the whole source cell — an outer approximation
//! of the reachable transition set, so solver bounds are sound for the
//! continuous model. In *candidates* mode the credal set is the exact
//! transition distributions at a k×k lattice of sample points per cell —
//! an inner approximation, useful to measure the gap but flagged unsound
//! for bounds in its provenance.
//!
//! The failure surcharge folds into costs as an interval: a (cell, action)
//! pair pays `action cost + penalty · q` where `q` ranges over the exact
//! bounds on the probability of landing in the failure region, keeping
//! point-valued cost semantics while staying sound.
//!
//! [`refinement_sequence`] builds nested abstractions for a chain of cell
//! widths, and [`check_refinement_monotonicity`] verifies that refining
//! can only tighten the solver's bounds.

use crate::emdp::{PointStrategy, WalkerModel};
use crate::geometry::{
    classify_regions, overlap_bounds, AxisBox, CellKind, GridPartition, RegionId,
};
use crate::imdp::{CostInterval, CredalSet, Entry, Imdp, Strategy};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Imdp(#[from] crate::imdp::ImdpError),
    #[error(transparent)]
    Emdp(#[from] crate::emdp::EmdpError),
    #[error("partition domain must coincide with the model domain")]
    DomainMismatch,
    #[error("refinement width {next} does not evenly split cells of width {prev}")]
    InvalidSequence { prev: f64, next: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("serialization failure: {0}")]
    Serialization(String),
    #[error("unsupported abstraction format tag {0:?} (expected \"induced-imdp-v1\")")]
    UnsupportedFormat(String),
}

pub type Result<T> = core::result::Result<T, AbstractionError>;

/// How the credal sets of the induced model are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbstractionMode {
    /// Per-target probability intervals over the whole source cell (outer
    /// approximation — sound for bounds). The default.
    Interval,
    /// Exact distributions at a k×k lattice of sample points per cell
    /// (inner approximation — not sound for bounds).
    Candidates { k: usize },
}

impl std::fmt::Display for AbstractionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AbstractionMode::Interval => f.write_str("interval"),
            AbstractionMode::Candidates { k } => write!(f, "candidates(k={k})"),
        }
    }
}

/// Construction header carried in the serialized abstraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// FNV-1a hash of the model's canonical TOML form.
    pub model_hash: String,
    /// Cell widths per dimension.
    pub widths: Vec<f64>,
    pub mode: AbstractionMode,
    pub tool_version: String,
    /// Interval mode only: solver results bracket the continuous values.
    pub sound_for_bounds: bool,
    /// Cell width of the coarser level this one refines, if built as part
    /// of a refinement sequence.
    pub refines_width: Option<f64>,
}

/// A finite abstraction: the induced model, the partition it came from,
/// and how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedImdp {
    pub imdp: Imdp,
    pub partition: GridPartition,
    pub kinds: Vec<CellKind>,
    pub mode: AbstractionMode,
    pub provenance: Provenance,
}

/// 64-bit FNV-1a, hex-encoded; stable fingerprint for model provenance.
fn fnv1a64(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

/// Stable hex fingerprint of a model (hash of its canonical TOML form),
/// as recorded in abstraction provenance; use it to verify that a model
/// file and a serialized abstraction belong together.
pub fn model_fingerprint(model: &WalkerModel) -> Result<String> {
    Ok(fnv1a64(model.to_toml_string()?.as_bytes()))
}

/// Inclusive cell-index window along one dimension covering `[lo, hi]`,
/// padded by one cell on each side for float safety.
fn index_window(partition: &GridPartition, dim: usize, lo: f64, hi: f64) -> (usize, usize) {
    let dom_lo = partition.domain().lo[dim];
    let w = partition.widths()[dim];
    let count = partition.counts()[dim] as isize;
    let a = (((lo - dom_lo) / w).floor() as isize - 1).clamp(0, count - 1);
    let b = (((hi - dom_lo) / w).ceil() as isize + 1).clamp(0, count - 1);
    (a as usize, b as usize)
}

/// Per-axis exact overlap fractions of the 1-D truncated kernel against
/// the partition's cells on that axis (sample-point transition builder for
/// candidates mode).
fn axis_fractions(
    partition: &GridPartition,
    dim: usize,
    center: f64,
    eps: f64,
) -> Result<Vec<(usize, f64)>> {
    let dom_lo = partition.domain().lo[dim];
    let dom_hi = partition.domain().hi[dim];
    let lo = (center - eps).max(dom_lo);
    let hi = (center + eps).min(dom_hi);
    if lo >= hi {
        return Err(AbstractionError::Geometry(
            crate::geometry::GeometryError::DegenerateKernel,
        ));
    }
    let den = hi - lo;
    let (a, b) = index_window(partition, dim, lo, hi);
    let width = partition.widths()[dim];
    let count = partition.counts()[dim];
    let mut out = Vec::new();
    for u in a..=b {
        let cell_lo = dom_lo + u as f64 * width;
        let cell_hi = if u + 1 == count {
            dom_hi
        } else {
            dom_lo + (u + 1) as f64 * width
        };
        let ov = (hi.min(cell_hi) - lo.max(cell_lo)).max(0.0);
        if ov > 0.0 {
            out.push((u, ov / den));
        }
    }
    Ok(out)
}

/// Transition data for one regular cell under one action.
struct PairData {
    credal: CredalSet,
    cost: CostInterval,
}

/// Builds the interval-mode credal set and folded cost for one pair.
fn interval_pair(
    model: &WalkerModel,
    partition: &GridPartition,
    source: &AxisBox,
    action: usize,
) -> Result<PairData> {
    let spec = &model.actions[action];
    let eps = spec.noise_half_width;
    let domain = &model.domain;
    let (nx, nt) = (partition.counts()[0], partition.counts()[1]);
    let reach_lo = |d: usize| source.lo[d] + spec.drift[d] - eps;
    let reach_hi = |d: usize| source.hi[d] + spec.drift[d] + eps;
    let (x0, x1) = index_window(partition, 0, reach_lo(0), reach_hi(0));
    let (t0, t1) = index_window(partition, 1, reach_lo(1), reach_hi(1));

    let mut successors = Vec::new();
    let mut p_low = Vec::new();
    let mut p_high = Vec::new();
    for u in x0..=x1 {
        for w in t0..=t1 {
            let target = partition.region_box(&RegionId(vec![u, w]))?;
            let (lo, hi) = overlap_bounds(source, &spec.drift, eps, &target, domain)?;
            if hi > 0.0 {
                successors.push(u * nt + w);
                p_low.push(lo);
                p_high.push(hi);
            }
        }
    }
    debug_assert!(x1 < nx && t1 < nt);
    debug_assert!(
        p_high.iter().sum::<f64>() >= 1.0 - 1e-9,
        "target window must be able to absorb all kernel mass"
    );

    // Exact bounds on the mass entering the failure region: the failure box
    // itself is the union of the failure cells (the partition is consistent),
    // and bounding against the box directly keeps the correlation between
    // cells instead of summing per-cell worst cases.
    let (q_lo, q_hi) = overlap_bounds(source, &spec.drift, eps, &model.failure, domain)?;
    let cost = CostInterval::new(
        spec.cost + model.failure_penalty * q_lo,
        spec.cost + model.failure_penalty * q_hi,
    )?;
    Ok(PairData {
        credal: CredalSet::Interval {
            successors,
            p_low,
            p_high,
        },
        cost,
    })
}

/// Builds the candidates-mode credal set (k×k lattice) and cost for one pair.
fn candidates_pair(
    model: &WalkerModel,
    partition: &GridPartition,
    source: &AxisBox,
    action: usize,
    k: usize,
) -> Result<PairData> {
    let spec = &model.actions[action];
    let eps = spec.noise_half_width;
    let nt = partition.counts()[1];

    // Corner-inclusive lattice; k = 1 degenerates to the midpoint.
    let coords = |d: usize| -> Vec<f64> {
        if k == 1 {
            vec![0.5 * (source.lo[d] + source.hi[d])]
        } else {
            (0..k)
                .map(|j| {
                    source.lo[d] + (source.hi[d] - source.lo[d]) * j as f64 / (k - 1) as f64
                })
                .collect()
        }
    };
    let xs = coords(0);
    let ts = coords(1);

    let mut sparse_dists: Vec<Vec<(usize, f64)>> = Vec::with_capacity(k * k);
    let mut q_min = f64::INFINITY;
    let mut q_max = f64::NEG_INFINITY;
    for &sx in &xs {
        for &st in &ts {
            let fx = axis_fractions(partition, 0, sx + spec.drift[0], eps)?;
            let ft = axis_fractions(partition, 1, st + spec.drift[1], eps)?;
            let mut dist = Vec::with_capacity(fx.len() * ft.len());
            for &(u, px) in &fx {
                for &(w, pt) in &ft {
                    dist.push((u * nt + w, px * pt));
                }
            }
            // Exact failure-entry probability at this sample point.
            let point = AxisBox::new(vec![sx, st], vec![sx, st])?;
            let (q, q2) =
                overlap_bounds(&point, &spec.drift, eps, &model.failure, &model.domain)?;
            debug_assert!((q - q2).abs() < 1e-12, "point source must give a point bound");
            q_min = q_min.min(q);
            q_max = q_max.max(q);
            sparse_dists.push(dist);
        }
    }

    // Union support across candidates, ascending, then align every vector.
    let mut successors: Vec<usize> = sparse_dists
        .iter()
        .flat_map(|d| d.iter().map(|&(t, _)| t))
        .collect();
    successors.sort_unstable();
    successors.dedup();
    let index_of = |t: usize| successors.binary_search(&t).expect("member of union");
    let dists: Vec<Vec<f64>> = sparse_dists
        .into_iter()
        .map(|sparse| {
            let mut dense = vec![0.0; successors.len()];
            for (t, p) in sparse {
                dense[index_of(t)] += p;
            }
            dense
        })
        .collect();

    let cost = CostInterval::new(
        spec.cost + model.failure_penalty * q_min,
        spec.cost + model.failure_penalty * q_max,
    )?;
    Ok(PairData {
        credal: CredalSet::Candidates { successors, dists },
        cost,
    })
}

/// Induces the finite abstraction of a model over a grid partition.
///
/// Requires the partition to live on the model's domain and to be
/// consistent with both terminal boxes (every cell fully inside or fully
/// outside each). Terminal cells become absorbing zero-cost goal states of
/// the IMDP — failure cells too, because the failure surcharge is folded
/// into the costs of the transitions that can enter them, after which
/// failure is just "done". Construction parallelizes over cells; output is
/// independent of scheduling.
pub fn induce(
    model: &WalkerModel,
    partition: &GridPartition,
    mode: AbstractionMode,
) -> Result<InducedImdp> {
    model.validate()?;
    if let AbstractionMode::Candidates { k } = mode {
        if k == 0 {
            return Err(AbstractionError::InvalidArgument(
                "candidates mode needs at least one sample per axis".into(),
            ));
        }
    }
    let k_dims = model.domain.dim();
    if partition.dim() != k_dims
        || (0..k_dims).any(|d| {
            (partition.domain().lo[d] - model.domain.lo[d]).abs() > 1e-12
                || (partition.domain().hi[d] - model.domain.hi[d]).abs() > 1e-12
        })
    {
        return Err(AbstractionError::DomainMismatch);
    }
    let kinds = classify_regions(partition, &model.goal, &model.failure)?;

    let n = partition.num_regions();
    let states: Vec<String> = partition
        .regions()
        .map(|id| format!("c{}_{}", id.0[0], id.0[1]))
        .collect();
    let goal: Vec<bool> = kinds.iter().map(|k| *k != CellKind::Regular).collect();
    let actions: Vec<String> = model.actions.iter().map(|a| a.name.clone()).collect();

    let rows: Vec<Vec<Option<Entry>>> = (0..n)
        .into_par_iter()
        .map(|lin| -> Result<Vec<Option<Entry>>> {
            let id = partition.region_from_linear(lin);
            let mut row = Vec::with_capacity(model.actions.len());
            if kinds[lin] != CellKind::Regular {
                // Absorbing terminal: self-loop at zero cost under every action.
                for _ in 0..model.actions.len() {
                    row.push(Some(Entry {
                        credal: CredalSet::point(lin),
                        cost: CostInterval::exact(0.0),
                    }));
                }
                return Ok(row);
            }
            let source = partition.region_box(&id)?;
            for a in 0..model.actions.len() {
                let pair = match mode {
                    AbstractionMode::Interval => interval_pair(model, partition, &source, a)?,
                    AbstractionMode::Candidates { k } => {
                        candidates_pair(model, partition, &source, a, k)?
                    }
                };
                row.push(Some(Entry {
                    credal: pair.credal,
                    cost: pair.cost,
                }));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut imdp = Imdp::new(states, goal, actions)?;
    imdp.table = rows;
    imdp.validate()?;

    let model_hash = model_fingerprint(model)?;
    Ok(InducedImdp {
        imdp,
        partition: partition.clone(),
        kinds,
        mode,
        provenance: Provenance {
            model_hash,
            widths: partition.widths().to_vec(),
            mode,
            tool_version: crate::TOOL_VERSION.to_string(),
            sound_for_bounds: matches!(mode, AbstractionMode::Interval),
            refines_width: None,
        },
    })
}

/// Builds nested abstractions for a chain of square cell widths, coarsest
/// first. Every width must evenly split the cells of the previous one.
pub fn refinement_sequence(
    model: &WalkerModel,
    widths: &[f64],
    mode: AbstractionMode,
) -> Result<Vec<InducedImdp>> {
    if widths.is_empty() {
        return Err(AbstractionError::InvalidArgument(
            "at least one width required".into(),
        ));
    }
    for pair in widths.windows(2) {
        let (prev, next) = (pair[0], pair[1]);
        if !(next > 0.0) {
            return Err(AbstractionError::InvalidArgument(format!(
                "widths must be positive, got {next}"
            )));
        }
        let ratio = prev / next;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.round().max(1.0) || ratio < 1.0 - 1e-9 {
            return Err(AbstractionError::InvalidSequence { prev, next });
        }
    }
    let mut out = Vec::with_capacity(widths.len());
    for (i, &w) in widths.iter().enumerate() {
        let partition = GridPartition::uniform(model.domain.clone(), w)?;
        let mut induced = induce(model, &partition, mode)?;
        if i > 0 {
            induced.provenance.refines_width = Some(widths[i - 1]);
        }
        out.push(induced);
    }
    Ok(out)
}

/// Which bound a refinement violation concerns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSide {
    Min,
    Max,
}

/// One fine cell whose bound escaped the coarse cell's bracket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub side: BoundSide,
    pub fine_region: RegionId,
    pub coarse_region: RegionId,
    pub coarse_value: f64,
    pub fine_value: f64,
}

/// Outcome of a refinement-monotonicity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub checked: usize,
    pub slack: f64,
    pub violations: Vec<MonotonicityViolation>,
}

impl MonotonicityReport {
    #[must_use]
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Value tables of one abstraction level, as fed to the monotonicity check.
#[derive(Debug, Clone, Copy)]
pub struct LevelValues<'a> {
    pub partition: &'a GridPartition,
    pub min_values: &'a [f64],
    pub max_values: &'a [f64],
}

/// Verifies that refining the partition only tightens the bounds: for every
/// fine cell ν′ inside a coarse cell ν, the coarse lower bound must not
/// exceed the fine lower bound and the coarse upper bound must not fall
/// below the fine upper bound, up to `slack` (use twice the solver
/// tolerance). Infinite values compare the usual way.
pub fn check_refinement_monotonicity(
    coarse: LevelValues<'_>,
    fine: LevelValues<'_>,
    slack: f64,
) -> Result<MonotonicityReport> {
    if !(slack >= 0.0) {
        return Err(AbstractionError::InvalidArgument(
            "slack must be nonnegative".into(),
        ));
    }
    let k = coarse.partition.dim();
    if fine.partition.dim() != k
        || (0..k).any(|d| {
            (coarse.partition.domain().lo[d] - fine.partition.domain().lo[d]).abs() > 1e-12
                || (coarse.partition.domain().hi[d] - fine.partition.domain().hi[d]).abs()
                    > 1e-12
        })
    {
        return Err(AbstractionError::InvalidArgument(
            "partitions must share a domain".into(),
        ));
    }
    for d in 0..k {
        let ratio = coarse.partition.widths()[d] / fine.partition.widths()[d];
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.round().max(1.0) || ratio < 1.0 - 1e-9 {
            return Err(AbstractionError::InvalidSequence {
                prev: coarse.partition.widths()[d],
                next: fine.partition.widths()[d],
            });
        }
    }
    for (name, level) in [("coarse", &coarse), ("fine", &fine)] {
        let n = level.partition.num_regions();
        if level.min_values.len() != n || level.max_values.len() != n {
            return Err(AbstractionError::InvalidArgument(format!(
                "{name} value tables must have one entry per cell"
            )));
        }
    }

    let mut violations = Vec::new();
    let mut checked = 0usize;
    for fine_id in fine.partition.regions() {
        let mid = fine.partition.region_box(&fine_id)?.midpoint();
        let coarse_id = coarse.partition.region_of(&mid)?;
        let ci = coarse.partition.linear_index(&coarse_id);
        let fi = fine.partition.linear_index(&fine_id);
        checked += 1;
        if !(coarse.min_values[ci] <= fine.min_values[fi] + slack) {
            violations.push(MonotonicityViolation {
                side: BoundSide::Min,
                fine_region: fine_id.clone(),
                coarse_region: coarse_id.clone(),
                coarse_value: coarse.min_values[ci],
                fine_value: fine.min_values[fi],
            });
        }
        if !(coarse.max_values[ci] >= fine.max_values[fi] - slack) {
            violations.push(MonotonicityViolation {
                side: BoundSide::Max,
                fine_region: fine_id,
                coarse_region: coarse_id,
                coarse_value: coarse.max_values[ci],
                fine_value: fine.max_values[fi],
            });
        }
    }
    Ok(MonotonicityReport {
        checked,
        slack,
        violations,
    })
}

/// A solver strategy lifted back to continuous points: look up the cell,
/// play its chosen action.
#[derive(Debug, Clone)]
pub struct CellStrategy {
    pub partition: GridPartition,
    /// Action index per cell, linear order; `None` on terminal cells.
    pub choice: Vec<Option<usize>>,
}

impl CellStrategy {
    /// Pairs a solver strategy with the partition it was computed on.
    pub fn from_strategy(induced: &InducedImdp, strategy: &Strategy) -> Result<Self> {
        if strategy.choice.len() != induced.partition.num_regions() {
            return Err(AbstractionError::InvalidArgument(
                "strategy must have one choice per cell".into(),
            ));
        }
        Ok(CellStrategy {
            partition: induced.partition.clone(),
            choice: strategy.choice.clone(),
        })
    }
}

impl PointStrategy for CellStrategy {
    fn action_at(&self, s: &[f64]) -> core::result::Result<usize, String> {
        let id = self
            .partition
            .region_of(s)
            .map_err(|_| format!("point ({}, {}) outside the partition", s[0], s[1]))?;
        self.choice[self.partition.linear_index(&id)]
            .ok_or_else(|| format!("cell {id}"))
    }
}

// ─── Serialization ──────────────────────────────────────────────────────

/// Format tag accepted by [`InducedImdp::from_json`].
pub const INDUCED_FORMAT: &str = "induced-imdp-v1";

#[derive(Serialize, Deserialize)]
struct InducedFile {
    format: String,
    provenance: Provenance,
    mode: AbstractionMode,
    partition: GridPartition,
    kinds: Vec<CellKind>,
    imdp: Imdp,
}

impl InducedImdp {
    /// Serializes abstraction, partition, and provenance header together.
    pub fn to_json(&self) -> Result<String> {
        let file = InducedFile {
            format: INDUCED_FORMAT.to_string(),
            provenance: self.provenance.clone(),
            mode: self.mode,
            partition: self.partition.clone(),
            kinds: self.kinds.clone(),
            imdp: self.imdp.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| AbstractionError::Serialization(e.to_string()))
    }

    /// Parses and fully revalidates a serialized abstraction.
    pub fn from_json(text: &str) -> Result<InducedImdp> {
        let file: InducedFile = serde_json::from_str(text)
            .map_err(|e| AbstractionError::Serialization(e.to_string()))?;
        if file.format != INDUCED_FORMAT {
            return Err(AbstractionError::UnsupportedFormat(file.format));
        }
        let rebuilt = GridPartition::new(
            file.partition.domain().clone(),
            file.partition.widths().to_vec(),
        )?;
        if rebuilt != file.partition {
            return Err(AbstractionError::InvalidArgument(
                "stored partition is inconsistent with its own domain and widths".into(),
            ));
        }
        if file.kinds.len() != file.partition.num_regions()
            || file.imdp.num_states() != file.partition.num_regions()
        {
            return Err(AbstractionError::InvalidArgument(
                "cell metadata must match the partition size".into(),
            ));
        }
        file.imdp.validate()?;
        Ok(InducedImdp {
            imdp: file.imdp,
            partition: file.partition,
            kinds: file.kinds,
            mode: file.mode,
            provenance: file.provenance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn walker_grid(width: f64) -> (WalkerModel, GridPartition) {
        let model = WalkerModel::default_walker();
        let partition = GridPartition::uniform(model.domain.clone(), width).unwrap();
        (model, partition)
    }

    #[test]
    fn induce_builds_one_state_per_cell() {
        let (model, partition) = walker_grid(0.1);
        let induced = induce(&model, &partition, AbstractionMode::Interval).unwrap();
        assert_eq!(induced.imdp.num_states(), 144);
        assert_eq!(induced.imdp.actions, vec!["fast", "slow"]);
        // 20 goal cells + 24 out-of-time cells are terminal.
        let n_terminal = induced.imdp.goal.iter().filter(|g| **g).count();
        assert_eq!(n_terminal, 44);
        assert_eq!(induced.provenance.widths, vec![0.1, 0.1]);
        assert!(induced.provenance.sound_for_bounds);
    }

    #[test]
    fn induced_terminal_cells_are_absorbing_and_free() {
        let (model, partition) = walker_grid(0.1);
        let induced = induce(&model, &partition, AbstractionMode::Interval).unwrap();
        let goal_cell = partition.region_of(&[1.1, 0.5]).unwrap();
        let lin = partition.linear_index(&goal_cell);
        assert!(induced.imdp.goal[lin]);
        let entry = induced.imdp.table[lin][0].as_ref().unwrap();
        assert_eq!(entry.cost, CostInterval::exact(0.0));
        assert_eq!(entry.credal, CredalSet::point(lin));
    }

    #[test]
    fn induced_interval_entries_are_feasible_and_windowed() {
        let (model, partition) = walker_grid(0.1);
        let induced = induce(&model, &partition, AbstractionMode::Interval).unwrap();
        let cell = partition.region_of(&[0.45, 0.45]).unwrap();
        let lin = partition.linear_index(&cell);
        for a in 0..2 {
            let entry = induced.imdp.table[lin][a].as_ref().unwrap();
            let CredalSet::Interval {
                successors,
                p_low,
                p_high,
            } = &entry.credal
            else {
                panic!("interval mode must produce interval credal sets");
            };
            assert!(!successors.is_empty());
            let sum_lo: f64 = p_low.iter().sum();
            let sum_hi: f64 = p_high.iter().sum();
            assert!(sum_lo <= 1.0 + 1e-12 && sum_hi >= 1.0 - 1e-12);
            // Interior cell far from the failure strip: plain action cost.
            assert_eq!(entry.cost.c_min, model.actions[a].cost);
            assert_eq!(entry.cost.c_max, model.actions[a].cost);
        }
    }

    #[test]
    fn induced_costs_fold_failure_mass_near_the_strip() {
        let (model, partition) = walker_grid(0.1);
        let induced = induce(&model, &partition, AbstractionMode::Interval).unwrap();
        // Cell just below the failure strip: slow action (t-drift 0.1 ± 0.1)
        // may or may not cross t = 1.0.
        let cell = partition.region_of(&[0.45, 0.95]).unwrap();
        let lin = partition.linear_index(&cell);
        let slow = 1;
        let entry = induced.imdp.table[lin][slow].as_ref().unwrap();
        assert!(entry.cost.c_min >= model.actions[slow].cost);
        assert!(
            entry.cost.c_max > entry.cost.c_min,
            "failure-entry ambiguity must widen the cost interval: {:?}",
            entry.cost
        );
        assert!(entry.cost.c_max <= model.actions[slow].cost + model.failure_penalty);
    }

    #[test]
    fn induce_rejects_inconsistent_partitions() {
        let model = WalkerModel::default_walker();
        let partition = GridPartition::uniform(model.domain.clone(), 0.07).unwrap();
        assert!(matches!(
            induce(&model, &partition, AbstractionMode::Interval),
            Err(AbstractionError::Geometry(
                crate::geometry::GeometryError::InconsistentCell { .. }
            ))
        ));
    }

    #[test]
    fn induce_rejects_foreign_domains() {
        let model = WalkerModel::default_walker();
        let other = AxisBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let partition = GridPartition::uniform(other, 0.1).unwrap();
        assert!(matches!(
            induce(&model, &partition, AbstractionMode::Interval),
            Err(AbstractionError::DomainMismatch)
        ));
    }

    #[test]
    fn induce_surfaces_degenerate_kernels() {
        // Shrinking the failure strip to x < 1 leaves the top-right corner
        // regular; from there the fast kernel lies entirely outside the
        // domain, which must surface as an error rather than silently
        // produce an empty credal set.
        let mut model = WalkerModel::default_walker();
        model.failure = AxisBox::new(vec![0.0, 1.0], vec![1.0, 1.2]).unwrap();
        model.validate().unwrap();
        let partition = GridPartition::uniform(model.domain.clone(), 0.1).unwrap();
        assert!(matches!(
            induce(&model, &partition, AbstractionMode::Interval),
            Err(AbstractionError::Geometry(
                crate::geometry::GeometryError::DegenerateKernel
            ))
        ));
    }

    #[test]
    fn candidates_mode_is_flagged_unsound() {
        let (model, partition) = walker_grid(0.1);
        let induced =
            induce(&model, &partition, AbstractionMode::Candidates { k: 3 }).unwrap();
        assert!(!induced.provenance.sound_for_bounds);
        assert_eq!(induced.mode, AbstractionMode::Candidates { k: 3 });
        let cell = partition.region_of(&[0.45, 0.45]).unwrap();
        let lin = partition.linear_index(&cell);
        let entry = induced.imdp.table[lin][0].as_ref().unwrap();
        let CredalSet::Candidates { dists, .. } = &entry.credal else {
            panic!("candidates mode must produce candidate lists");
        };
        assert_eq!(dists.len(), 9);
    }

    #[test]
    fn interval_bounds_contain_candidate_vectors() {
        let (model, partition) = walker_grid(0.1);
        let outer = induce(&model, &partition, AbstractionMode::Interval).unwrap();
        let inner = induce(&model, &partition, AbstractionMode::Candidates { k: 5 }).unwrap();
        let regular: Vec<usize> = (0..outer.imdp.num_states())
            .filter(|&s| !outer.imdp.goal[s])
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(451);
        for _ in 0..50 {
            let s = regular[rng.gen_range(0..regular.len())];
            let a = rng.gen_range(0..2);
            let CredalSet::Interval {
                successors: outer_succ,
                p_low,
                p_high,
            } = &outer.imdp.table[s][a].as_ref().unwrap().credal
            else {
                panic!("interval entry expected");
            };
            let CredalSet::Candidates { successors, dists } =
                &inner.imdp.table[s][a].as_ref().unwrap().credal
            else {
                panic!("candidates entry expected");
            };
            for d in dists {
                for (i, &target) in successors.iter().enumerate() {
                    let p = d[i];
                    match outer_succ.binary_search(&target) {
                        Ok(j) => assert!(
                            p >= p_low[j] - 1e-12 && p <= p_high[j] + 1e-12,
                            "state {s} action {a} target {target}: {p} outside \
                             [{}, {}]",
                            p_low[j],
                            p_high[j]
                        ),
                        Err(_) => assert!(
                            p <= 1e-12,
                            "state {s} action {a}: mass {p} on target {target} \
                             missing from the interval support"
                        ),
                    }
                }
            }
        }
    }

    #[test]
    fn refinement_sequence_state_counts() {
        let model = WalkerModel::default_walker();
        let seq =
            refinement_sequence(&model, &[0.1, 0.05, 0.025], AbstractionMode::Interval)
                .unwrap();
        let counts: Vec<usize> = seq.iter().map(|i| i.imdp.num_states()).collect();
        assert_eq!(counts, vec![144, 576, 2304]);
        assert_eq!(seq[0].provenance.refines_width, None);
        assert_eq!(seq[1].provenance.refines_width, Some(0.1));
        assert_eq!(seq[2].provenance.refines_width, Some(0.05));
    }

    #[test]
    fn refinement_sequence_single_element() {
        let model = WalkerModel::default_walker();
        let seq = refinement_sequence(&model, &[0.1], AbstractionMode::Interval).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq[0].provenance.refines_width, None);
    }

    #[test]
    fn refinement_sequence_rejects_non_nesting_widths() {
        let model = WalkerModel::default_walker();
        assert!(matches!(
            refinement_sequence(&model, &[0.1, 0.04], AbstractionMode::Interval),
            Err(AbstractionError::InvalidSequence { .. })
        ));
    }

    #[test]
    fn monotonicity_reflexive_on_identical_partitions() {
        let (_, partition) = walker_grid(0.1);
        let min_v: Vec<f64> = (0..144).map(|i| i as f64).collect();
        let max_v: Vec<f64> = (0..144).map(|i| i as f64 + 1.0).collect();
        let level = LevelValues {
            partition: &partition,
            min_values: &min_v,
            max_values: &max_v,
        };
        let report = check_refinement_monotonicity(level, level, 0.0).unwrap();
        assert_eq!(report.checked, 144);
        assert!(report.is_clean());
    }

    #[test]
    fn monotonicity_flags_escaping_bounds() {
        let model = WalkerModel::default_walker();
        let coarse_p = GridPartition::uniform(model.domain.clone(), 0.1).unwrap();
        let fine_p = GridPartition::uniform(model.domain.clone(), 0.05).unwrap();
        let coarse_min = vec![1.0; coarse_p.num_regions()];
        let coarse_max = vec![2.0; coarse_p.num_regions()];
        let mut fine_min = vec![1.5; fine_p.num_regions()];
        let mut fine_max = vec![1.5; fine_p.num_regions()];
        // One fine cell dips below the coarse lower bound and one climbs
        // above the coarse upper bound.
        fine_min[7] = 0.5;
        fine_max[11] = 2.5;
        let report = check_refinement_monotonicity(
            LevelValues {
                partition: &coarse_p,
                min_values: &coarse_min,
                max_values: &coarse_max,
            },
            LevelValues {
                partition: &fine_p,
                min_values: &fine_min,
                max_values: &fine_max,
            },
            1e-9,
        )
        .unwrap();
        assert_eq!(report.violations.len(), 2);
        assert!(report.violations.iter().any(|v| v.side == BoundSide::Min));
        assert!(report.violations.iter().any(|v| v.side == BoundSide::Max));
    }

    #[test]
    fn monotonicity_rejects_mismatched_partitions() {
        let model = WalkerModel::default_walker();
        let p1 = GridPartition::uniform(model.domain.clone(), 0.1).unwrap();
        let p2 = GridPartition::uniform(model.domain.clone(), 0.04).unwrap();
        let v1 = vec![0.0; p1.num_regions()];
        let v2 = vec![0.0; p2.num_regions()];
        assert!(check_refinement_monotonicity(
            LevelValues {
                partition: &p1,
                min_values: &v1,
                max_values: &v1
            },
            LevelValues {
                partition: &p2,
                min_values: &v2,
                max_values: &v2
            },
            0.0,
        )
        .is_err());
    }

    #[test]
    fn cell_strategy_plays_per_cell_choices() {
        let (model, partition) = walker_grid(0.1);
        let induced = induce(&model, &partition, AbstractionMode::Interval).unwrap();
        let mut choice = vec![None; 144];
        for s in 0..144 {
            if !induced.imdp.goal[s] {
                choice[s] = Some(s % 2);
            }
        }
        let strategy = CellStrategy::from_strategy(&induced, &Strategy { choice }).unwrap();
        let lin = partition.linear_index(&partition.region_of(&[0.45, 0.45]).unwrap());
        assert_eq!(strategy.action_at(&[0.45, 0.45]).unwrap(), lin % 2);
        assert!(strategy.action_at(&[5.0, 5.0]).is_err());
    }

    #[test]
    fn induced_json_round_trip() {
        let (model, partition) = walker_grid(0.1);
        let induced = induce(&model, &partition, AbstractionMode::Interval).unwrap();
        let text = induced.to_json().unwrap();
        let back = InducedImdp::from_json(&text).unwrap();
        assert_eq!(induced, back);
        assert_eq!(text, back.to_json().unwrap());
    }

    #[test]
    fn induced_json_rejects_unknown_format() {
        let (model, partition) = walker_grid(0.1);
        let induced = induce(&model, &partition, AbstractionMode::Interval).unwrap();
        let text = induced
            .to_json()
            .unwrap()
            .replace("induced-imdp-v1", "induced-imdp-v0");
        assert!(matches!(
            InducedImdp::from_json(&text),
            Err(AbstractionError::UnsupportedFormat(_))
        ));
    }
}
