//! Guaranteed bounds on expected cost for continuous-state walker models.
//!
//! The library approximates a continuous-state Markov decision process whose
//! dynamics are truncated-uniform box kernels (a "walker" moving through an
//! axis-aligned domain toward a goal region) by a finite-state MDP with
//! *imprecise* transitions: every (region, action) pair carries a closed set
//! of candidate transition distributions instead of a single one. Solving the
//! finite model with robust value iteration yields certified lower and upper
//! bounds on the expected cost-to-goal of the continuous model, which tighten
//! as the grid is refined.
//!
//! Module map:
//!
//! * [`geometry`] — boxes, uniform grid partitions, and exact overlap-mass
//!   computations (the probability a truncated uniform kernel lands in a cell,
//!   and tight per-cell bounds on that mass over a whole source region).
//! * [`emdp`] — concrete continuous models (domain/goal/failure boxes plus a
//!   finite action list), kernel sampling, seeded Monte-Carlo evaluation, and
//!   an independent fine-grid midpoint solver used as a cross-check oracle.
//! * [`imdp`] — finite imprecise MDPs: credal sets, robust Bellman sweeps,
//!   value iteration with strategy/adversary extraction, bounded-horizon
//!   evaluation, and a small brute-force enumeration oracle.
//! * [`abstraction`] — builds the induced imprecise MDP of a model over a grid
//!   partition, manages nested refinement sequences, and checks that refining
//!   the grid only tightens the bounds.
//! * [`analysis`] — total-variation utilities, 1-D value sections, strategy
//!   agreement maps, external-strategy import, and CSV export.

// `!(a > b)` guards deliberately treat NaN as out-of-range, and loops that
// index several parallel arrays with one counter stay as plain ranges.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod abstraction;
pub mod analysis;
pub mod emdp;
pub mod geometry;
pub mod imdp;

/// Version string recorded in file provenance headers.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
