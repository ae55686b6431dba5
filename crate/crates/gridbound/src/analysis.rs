//! Post-solve analysis: total-variation utilities, one-dimensional value
//! sections, bound-width metrics, strategy agreement maps, and import of
//! externally produced (e.g. learned) strategies for comparison.
//!
//! Everything here is a pure function over immutable inputs and safe to
//! call from parallel contexts. CSV exports use row-major cell order and
//! shortest-round-trip float formatting, so identical inputs produce
//! byte-identical files.

use crate::geometry::{GeometryError, GridPartition, RegionId};
use crate::imdp::{Imdp, Strategy};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = core::result::Result<T, AnalysisError>;

// ─── Total variation ────────────────────────────────────────────────────

const DIST_SUM_TOL: f64 = 1e-12;

fn validate_dist(name: &str, p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(AnalysisError::InvalidArgument(format!(
            "{name} must be non-empty"
        )));
    }
    if p.iter().any(|&x| !(x >= 0.0)) {
        return Err(AnalysisError::InvalidArgument(format!(
            "{name} has a negative or NaN entry"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > DIST_SUM_TOL {
        return Err(AnalysisError::InvalidArgument(format!(
            "{name} sums to {sum}, not 1"
        )));
    }
    Ok(())
}

/// Total-variation distance between two probability vectors on the same
/// support: half the L1 distance, equivalently the largest possible
/// difference in probability the two assign to any event. Symmetric, in
/// `[0, 1]`, and zero exactly on equal vectors.
pub fn dtv(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(AnalysisError::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    validate_dist("first argument", p)?;
    validate_dist("second argument", q)?;
    let l1: f64 = p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    Ok(0.5 * l1)
}

fn expectation(p: &[f64], f: &[f64]) -> f64 {
    p.iter().zip(f).map(|(a, b)| a * b).sum()
}

/// Outcome of randomized stress tests of the two total-variation
/// inequalities behind the soundness argument (see [`check_dtv_bounds`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtvBoundsReport {
    pub trials: usize,
    /// Trials where |E\[f\] − E′\[f′\]| exceeded ε(1 + 2·max f).
    pub expectation_violations: usize,
    /// Trials where the mixture distance exceeded 3ε.
    pub mixture_violations: usize,
    /// Largest observed left/right ratio of the expectation inequality.
    pub max_expectation_ratio: f64,
    /// Largest observed left/right ratio of the mixture inequality.
    pub max_mixture_ratio: f64,
    /// Ratio achieved by the constructed equality instance (two points,
    /// zero payoff, shifted payoff on the moved mass): exactly 1.
    pub tight_expectation_ratio: f64,
}

impl DtvBoundsReport {
    #[must_use]
    pub fn is_clean(&self) -> bool {
        self.expectation_violations == 0 && self.mixture_violations == 0
    }
}

/// Random probability vector, Dirichlet(1) via normalized exponentials.
fn random_dist<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln().max(1e-12))
        .collect();
    let s: f64 = g.iter().sum();
    for x in &mut g {
        *x /= s;
    }
    g
}

/// Random vector at controllable total-variation distance from `p`:
/// a convex blend with an independent random vector.
fn blended_dist<R: Rng>(rng: &mut R, p: &[f64]) -> Vec<f64> {
    let r = random_dist(rng, p.len());
    let lambda: f64 = rng.gen::<f64>();
    p.iter()
        .zip(&r)
        .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
        .collect()
}

/// Stress-tests the two inequalities that make finite credal abstractions
/// sound, over `trials` random instances on supports of size ≤ 8:
///
/// * **Expectation bound** — if two distributions differ by at most ε in
///   total variation and two nonnegative payoff vectors differ by at most
///   ε pointwise, the expectations differ by at most ε(1 + 2·max f).
/// * **Mixture bound** — if the mixing weights differ by at most ε in
///   total variation and every pair of mixed components does too, the
///   mixtures differ by at most 3ε.
///
/// Also evaluates a constructed equality instance of the expectation
/// bound (all payoff slack concentrated on the moved mass) whose ratio is
/// exactly 1, demonstrating the factor cannot be improved.
pub fn check_dtv_bounds<R: Rng>(trials: usize, rng: &mut R) -> DtvBoundsReport {
    let mut report = DtvBoundsReport {
        trials,
        expectation_violations: 0,
        mixture_violations: 0,
        max_expectation_ratio: 0.0,
        max_mixture_ratio: 0.0,
        tight_expectation_ratio: 0.0,
    };
    const SLACK: f64 = 1e-12;

    for _ in 0..trials {
        // Expectation bound.
        let n = rng.gen_range(2..=8);
        let p = random_dist(rng, n);
        let q = blended_dist(rng, &p);
        let eps_dist = dtv(&p, &q).expect("generated distributions are valid");
        let scale: f64 = rng.gen_range(0.1..10.0);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=scale)).collect();
        let wobble: f64 = rng.gen_range(0.0..0.5);
        let g: Vec<f64> = f
            .iter()
            .map(|&v| (v + rng.gen_range(-wobble..=wobble)).max(0.0))
            .collect();
        let eps_payoff = f
            .iter()
            .zip(&g)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let eps = eps_dist.max(eps_payoff);
        let lhs = (expectation(&p, &f) - expectation(&q, &g)).abs();
        let f_max = f.iter().copied().fold(0.0, f64::max);
        let rhs = eps * (1.0 + 2.0 * f_max);
        if lhs > rhs + SLACK {
            report.expectation_violations += 1;
        }
        if rhs > 1e-300 {
            report.max_expectation_ratio = report.max_expectation_ratio.max(lhs / rhs);
        }

        // Mixture bound.
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(2..=6);
        let w = random_dist(rng, n);
        let w2 = blended_dist(rng, &w);
        let mut eps = dtv(&w, &w2).expect("generated distributions are valid");
        let mut mix = vec![0.0; m];
        let mut mix2 = vec![0.0; m];
        for nu in 0..n {
            let comp = random_dist(rng, m);
            let comp2 = blended_dist(rng, &comp);
            eps = eps.max(dtv(&comp, &comp2).expect("generated distributions are valid"));
            for j in 0..m {
                mix[j] += w[nu] * comp[j];
                mix2[j] += w2[nu] * comp2[j];
            }
        }
        let lhs = dtv(&mix, &mix2).expect("mixtures of distributions are distributions");
        let rhs = 3.0 * eps;
        if lhs > rhs + SLACK {
            report.mixture_violations += 1;
        }
        if rhs > 1e-300 {
            report.max_mixture_ratio = report.max_mixture_ratio.max(lhs / rhs);
        }
    }

    // Equality instance: move mass e from the first point to the second,
    // pay nothing under f and e under f′ everywhere. Then both sides of
    // the expectation bound equal e.
    let e = 0.25;
    let p = [1.0, 0.0];
    let q = [1.0 - e, e];
    let f = [0.0, 0.0];
    let g = [e, e];
    let eps = dtv(&p, &q).expect("valid by construction");
    let lhs = (expectation(&p, &f) - expectation(&q, &g)).abs();
    let rhs = eps * (1.0 + 2.0 * f.iter().fold(0.0_f64, |a, &b| a.max(b)));
    report.tight_expectation_ratio = lhs / rhs;
    report
}

// ─── Value sections ─────────────────────────────────────────────────────

/// One cell crossed by a section line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSample {
    /// Linear cell index in the partition.
    pub cell: usize,
    pub region: RegionId,
    /// Midpoint of the cell along the free axis.
    pub x: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub external: Option<f64>,
}

/// Values of both bounds (and optionally an external value table) along a
/// one-dimensional axis-parallel line through the partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionData {
    pub fixed_dim: usize,
    pub fixed_value: f64,
    pub free_dim: usize,
    pub samples: Vec<SectionSample>,
}

/// Extracts the row of cells crossed by the line `{coordinate d = value}`
/// of a two-dimensional partition, ordered by the free coordinate. Each
/// sample carries the cell's lower and upper solved values and, when an
/// external table is supplied, its value for that cell. The line follows
/// the same cell-membership rule as points (half-open cells, upper domain
/// boundary included), so a value on an interior cell edge selects the row
/// below it.
pub fn extract_section(
    partition: &GridPartition,
    e_min: &[f64],
    e_max: &[f64],
    fixed: (usize, f64),
    external: Option<&[Option<f64>]>,
) -> Result<SectionData> {
    if partition.dim() != 2 {
        return Err(AnalysisError::InvalidArgument(format!(
            "sections require a 2-D partition, got {}-D",
            partition.dim()
        )));
    }
    let (fixed_dim, fixed_value) = fixed;
    if fixed_dim >= 2 {
        return Err(AnalysisError::InvalidArgument(format!(
            "fixed dimension {fixed_dim} out of range"
        )));
    }
    let n = partition.num_regions();
    if e_min.len() != n || e_max.len() != n || external.is_some_and(|t| t.len() != n) {
        return Err(AnalysisError::InvalidArgument(
            "value tables must have one entry per cell".into(),
        ));
    }
    let fixed_index = partition.index_on_axis(fixed_dim, fixed_value)?;
    let free_dim = 1 - fixed_dim;

    let mut samples = Vec::with_capacity(partition.counts()[free_dim]);
    for u in 0..partition.counts()[free_dim] {
        let mut idx = vec![0usize; 2];
        idx[fixed_dim] = fixed_index;
        idx[free_dim] = u;
        let region = RegionId(idx);
        let cell = partition.linear_index(&region);
        let x = partition.region_box(&region)?.midpoint()[free_dim];
        samples.push(SectionSample {
            cell,
            region,
            x,
            e_min: e_min[cell],
            e_max: e_max[cell],
            external: external.and_then(|t| t[cell]),
        });
    }
    Ok(SectionData {
        fixed_dim,
        fixed_value,
        free_dim,
        samples,
    })
}

/// Renders a section as CSV (`cell,i0,i1,x,e_min,e_max,external`), one row
/// per crossed cell in free-coordinate order. The external column is empty
/// when no external table was attached.
#[must_use]
pub fn section_to_csv(section: &SectionData) -> String {
    let mut out = String::from("cell,i0,i1,x,e_min,e_max,external\n");
    for s in &section.samples {
        let ext = s.external.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.cell, s.region.0[0], s.region.0[1], s.x, s.e_min, s.e_max, ext
        );
    }
    out
}

// ─── Strategy agreement ─────────────────────────────────────────────────

/// Per-cell classification of how the two extracted bound strategies and
/// an optional external strategy relate. Classes are strings built from
/// action names:
///
/// * `both-<a>` — both bound strategies pick `<a>` and the external one
///   (when present) agrees;
/// * `low-<a>-high-<b>` — the bound strategies split (`<a>` for the lower
///   bound, `<b>` for the upper), external ignored;
/// * `external-disagrees-<a>` — both bound strategies pick `<a>` but the
///   external one differs.
///
/// Terminal (goal/failure) cells carry no class. The classes partition
/// the non-terminal cells, so the counts sum to their number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMap {
    /// Class per cell, linear order; `None` on terminal cells.
    pub classes: Vec<Option<String>>,
    /// Count per class name, deterministically ordered.
    pub counts: BTreeMap<String, usize>,
}

fn strategy_choice(
    which: &str,
    strategy: &Strategy,
    state: usize,
    n_actions: usize,
) -> Result<usize> {
    let a = strategy.choice[state].ok_or_else(|| {
        AnalysisError::InvalidArgument(format!(
            "{which} strategy leaves non-terminal state {state} unassigned"
        ))
    })?;
    if a >= n_actions {
        return Err(AnalysisError::InvalidArgument(format!(
            "{which} strategy picks action {a} at state {state}, model has {n_actions}"
        )));
    }
    Ok(a)
}

/// Classifies every non-terminal state of `imdp` by the actions chosen by
/// the lower-bound strategy, the upper-bound strategy, and optionally an
/// external strategy. All supplied strategies must cover every
/// non-terminal state; nothing is defaulted.
pub fn agreement_map(
    imdp: &Imdp,
    low: &Strategy,
    high: &Strategy,
    external: Option<&Strategy>,
) -> Result<AgreementMap> {
    let n = imdp.num_states();
    for (name, s) in [("low", low), ("high", high)]
        .into_iter()
        .chain(external.map(|e| ("external", e)))
    {
        if s.choice.len() != n {
            return Err(AnalysisError::InvalidArgument(format!(
                "{name} strategy covers {} states, model has {n}",
                s.choice.len()
            )));
        }
    }
    let mut classes = vec![None; n];
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in 0..n {
        if imdp.goal[s] {
            continue;
        }
        let a_low = strategy_choice("low", low, s, imdp.num_actions())?;
        let a_high = strategy_choice("high", high, s, imdp.num_actions())?;
        let class = if a_low != a_high {
            format!(
                "low-{}-high-{}",
                imdp.actions[a_low], imdp.actions[a_high]
            )
        } else {
            let agreed = &imdp.actions[a_low];
            match external {
                Some(ext) => {
                    let a_ext = strategy_choice("external", ext, s, imdp.num_actions())?;
                    if a_ext == a_low {
                        format!("both-{agreed}")
                    } else {
                        format!("external-disagrees-{agreed}")
                    }
                }
                None => format!("both-{agreed}"),
            }
        };
        *counts.entry(class.clone()).or_insert(0) += 1;
        classes[s] = Some(class);
    }
    Ok(AgreementMap { classes, counts })
}

/// Renders an agreement map as CSV (`cell,i0,i1,class`), one row per cell
/// in row-major order; terminal cells get an empty class field.
pub fn agreement_to_csv(partition: &GridPartition, map: &AgreementMap) -> Result<String> {
    if map.classes.len() != partition.num_regions() {
        return Err(AnalysisError::InvalidArgument(
            "agreement map size does not match the partition".into(),
        ));
    }
    let mut out = String::from("cell,i0,i1,class\n");
    for region in partition.regions() {
        let cell = partition.linear_index(&region);
        let class = map.classes[cell].as_deref().unwrap_or("");
        let _ = writeln!(out, "{},{},{},{}", cell, region.0[0], region.0[1], class);
    }
    Ok(out)
}

// ─── External strategy import ───────────────────────────────────────────

/// Result of reading an externally produced strategy file.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedStrategy {
    /// Action per covered cell; `None` where the file said nothing.
    pub strategy: Strategy,
    /// Per-cell claimed values, present when any input row carried one.
    pub values: Option<Vec<Option<f64>>>,
    /// Cells no input row covered, row-major order. Never defaulted.
    pub uncovered: Vec<RegionId>,
}

fn parse_field(line_no: usize, field: Option<&str>, what: &str) -> Result<f64> {
    let text = field.ok_or(AnalysisError::Parse {
        line: line_no,
        msg: format!("missing {what} column"),
    })?;
    text.trim().parse().map_err(|_| AnalysisError::Parse {
        line: line_no,
        msg: format!("cannot parse {what} {text:?} as a number"),
    })
}

/// Snaps a coordinate to the grid line it must lie on; errors when it is
/// not on any within tolerance.
fn snap_to_grid(
    partition: &GridPartition,
    dim: usize,
    value: f64,
    line_no: usize,
) -> Result<usize> {
    let lo = partition.domain().lo[dim];
    let width = partition.widths()[dim];
    let count = partition.counts()[dim];
    // The top edge of the last cell is the domain boundary, which may sit
    // slightly off the arithmetic k·width grid.
    let k = ((value - lo) / width).round();
    let snapped = if k as usize == count {
        partition.domain().hi[dim]
    } else {
        lo + k * width
    };
    if !(0.0..=(count as f64)).contains(&k) || (value - snapped).abs() > 1e-9 {
        return Err(AnalysisError::Parse {
            line: line_no,
            msg: format!("coordinate {value} on axis {dim} is not on a cell boundary"),
        });
    }
    Ok(k as usize)
}

/// Parses an externally produced strategy over boxes that must tile into
/// grid cells. One data row per line:
///
/// ```text
/// lo0,lo1,hi0,hi1,action[,value]
/// ```
///
/// Blank lines and lines starting with `#` are skipped. Every box edge
/// must lie on a cell boundary of `partition` (within 1e-9); a box may
/// cover several whole cells, which all receive its action. Boxes must
/// not overlap. Action names resolve against `actions`. Cells covered by
/// no box are reported in `uncovered`, never silently defaulted.
pub fn parse_external_strategy(
    text: &str,
    partition: &GridPartition,
    actions: &[String],
) -> Result<ImportedStrategy> {
    if partition.dim() != 2 {
        return Err(AnalysisError::InvalidArgument(format!(
            "external strategies require a 2-D partition, got {}-D",
            partition.dim()
        )));
    }
    let n = partition.num_regions();
    let mut choice: Vec<Option<usize>> = vec![None; n];
    let mut claimed_by: Vec<Option<usize>> = vec![None; n];
    let mut values: Vec<Option<f64>> = vec![None; n];
    let mut any_value = false;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let lo0 = parse_field(line_no, fields.next(), "first lower coordinate")?;
        let lo1 = parse_field(line_no, fields.next(), "second lower coordinate")?;
        let hi0 = parse_field(line_no, fields.next(), "first upper coordinate")?;
        let hi1 = parse_field(line_no, fields.next(), "second upper coordinate")?;
        let action_name = fields
            .next()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or(AnalysisError::Parse {
                line: line_no,
                msg: "missing action column".into(),
            })?;
        let action =
            actions
                .iter()
                .position(|a| a == action_name)
                .ok_or(AnalysisError::Parse {
                    line: line_no,
                    msg: format!(
                        "unknown action {action_name:?} (model actions: {})",
                        actions.join(", ")
                    ),
                })?;
        let value = match fields.next() {
            Some(text) if !text.trim().is_empty() => {
                Some(parse_field(line_no, Some(text), "value")?)
            }
            _ => None,
        };
        if let Some(extra) = fields.next() {
            return Err(AnalysisError::Parse {
                line: line_no,
                msg: format!("unexpected trailing field {extra:?}"),
            });
        }

        let a0 = snap_to_grid(partition, 0, lo0, line_no)?;
        let b0 = snap_to_grid(partition, 0, hi0, line_no)?;
        let a1 = snap_to_grid(partition, 1, lo1, line_no)?;
        let b1 = snap_to_grid(partition, 1, hi1, line_no)?;
        if a0 >= b0 || a1 >= b1 {
            return Err(AnalysisError::Parse {
                line: line_no,
                msg: format!("box [{lo0},{hi0}]×[{lo1},{hi1}] is empty or inverted"),
            });
        }
        for u in a0..b0 {
            for w in a1..b1 {
                let region = RegionId(vec![u, w]);
                let cell = partition.linear_index(&region);
                if let Some(prev) = claimed_by[cell] {
                    return Err(AnalysisError::Parse {
                        line: line_no,
                        msg: format!("cell {region} already covered by line {prev}"),
                    });
                }
                claimed_by[cell] = Some(line_no);
                choice[cell] = Some(action);
                values[cell] = value;
            }
        }
        any_value |= value.is_some();
    }

    let uncovered: Vec<RegionId> = partition
        .regions()
        .filter(|r| claimed_by[partition.linear_index(r)].is_none())
        .collect();
    Ok(ImportedStrategy {
        strategy: Strategy { choice },
        values: any_value.then_some(values),
        uncovered,
    })
}

/// Reads and parses an external strategy file; see
/// [`parse_external_strategy`] for the format.
pub fn import_external_strategy(
    path: &Path,
    partition: &GridPartition,
    actions: &[String],
) -> Result<ImportedStrategy> {
    let text = std::fs::read_to_string(path)?;
    parse_external_strategy(&text, partition, actions)
}

// ─── Value/bound comparison ─────────────────────────────────────────────

/// How a table of claimed values sits relative to solved bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundComparison {
    pub inside: usize,
    pub below: usize,
    pub above: usize,
    /// Cells with no claimed value.
    pub missing: usize,
    /// `(cell, value)` for every claimed value outside its bound interval.
    pub escapes: Vec<(usize, f64)>,
}

/// Counts, per cell, whether a claimed value lies inside `[e_min − slack,
/// e_max + slack]`, below it, or above it. Out-of-bounds values are
/// reported as found — they are evidence about the claimed table, and are
/// never clamped.
pub fn compare_values_to_bounds(
    values: &[Option<f64>],
    e_min: &[f64],
    e_max: &[f64],
    slack: f64,
) -> Result<BoundComparison> {
    if values.len() != e_min.len() || values.len() != e_max.len() {
        return Err(AnalysisError::InvalidArgument(
            "value and bound tables must have equal length".into(),
        ));
    }
    if !(slack >= 0.0) {
        return Err(AnalysisError::InvalidArgument(
            "slack must be nonnegative".into(),
        ));
    }
    let mut cmp = BoundComparison {
        inside: 0,
        below: 0,
        above: 0,
        missing: 0,
        escapes: Vec::new(),
    };
    for (cell, v) in values.iter().enumerate() {
        match v {
            None => cmp.missing += 1,
            Some(v) => {
                if *v < e_min[cell] - slack {
                    cmp.below += 1;
                    cmp.escapes.push((cell, *v));
                } else if *v > e_max[cell] + slack {
                    cmp.above += 1;
                    cmp.escapes.push((cell, *v));
                } else {
                    cmp.inside += 1;
                }
            }
        }
    }
    Ok(cmp)
}
