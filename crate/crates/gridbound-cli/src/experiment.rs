//! End-to-end pipeline: abstract the model at every configured width,
//! solve both bounds per level, verify refinement monotonicity, export
//! sections and agreement maps, compute horizon-truncated bound gaps,
//! simulate the finest level's upper-bound strategy, and summarize the
//! run in one JSON file. Every emitted byte depends only on the merged
//! configuration — never on wall-clock time, machine, path, or thread
//! count — so re-running a config reproduces the output exactly.

use crate::commands::{run_probes, width_label, McSummary};
use crate::config::{McConfig, RunConfig, SolverConfig};
use crate::errors::{CliError, Result};
use crate::outputs::{ensure_dir, strategy_csv, to_json_pretty, values_csv, write_file};
use gridbound::abstraction::{self, LevelValues};
use gridbound::analysis;
use gridbound::geometry::CellKind;
use gridbound::imdp::{bounded_horizon_values, value_iteration, OptMode, ViOutcome, ViReport};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.in_stage(name))
}

#[derive(Serialize)]
struct SolveStats {
    iterations: usize,
    residual: f64,
    converged: bool,
}

impl From<&ViReport> for SolveStats {
    fn from(r: &ViReport) -> Self {
        SolveStats {
            iterations: r.iterations,
            residual: r.residual,
            converged: r.converged,
        }
    }
}

#[derive(Serialize)]
struct LevelSummary {
    width: f64,
    states: usize,
    /// Cells that are neither goal nor failure.
    live_cells: usize,
    vi_min: SolveStats,
    vi_max: SolveStats,
    /// Mean of (upper − lower) over live cells.
    mean_bound_width: f64,
    max_bound_width: f64,
    /// Largest live-cell gap between the 5-step worst-case and best-case
    /// cost of the extracted upper-bound strategy.
    horizon_gap_n5: f64,
    /// Agreement classes between the two extracted strategies.
    agreement: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct MonotonicityPair {
    coarse_width: f64,
    fine_width: f64,
    checked: usize,
    violations: usize,
}

#[derive(Serialize)]
struct ExperimentSummary {
    format: &'static str,
    tool_version: &'static str,
    model_hash: String,
    mode: String,
    sound_for_bounds: bool,
    solver: SolverConfig,
    mc: McConfig,
    levels: Vec<LevelSummary>,
    monotonicity: Vec<MonotonicityPair>,
    /// Whether the mean live-cell bound width strictly shrinks at every
    /// refinement step.
    mean_widths_strictly_decreasing: bool,
    mc_probes: McSummary,
}

struct Solved {
    lo: ViOutcome,
    hi: ViOutcome,
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    ensure_dir(out)?;

    let model = stage("model", || {
        let model = cfg.load_model()?;
        write_file(&out.join("model.toml"), &model.to_toml_string().map_err(CliError::from)?)?;
        let echo = toml::to_string_pretty(cfg)
            .map_err(|e| CliError::Io(format!("cannot serialize the effective config: {e}")))?;
        write_file(&out.join("config.toml"), &echo)?;
        Ok(model)
    })?;

    let levels = stage("induce", || {
        let levels =
            abstraction::refinement_sequence(&model, &cfg.widths, cfg.abstraction_mode())?;
        for level in &levels {
            let label = width_label(level.provenance.widths[0]);
            write_file(
                &out.join(format!("imdp_{label}.json")),
                &level.to_json().map_err(CliError::from)?,
            )?;
        }
        Ok(levels)
    })?;

    let solved = stage("solve", || {
        let mut solved = Vec::with_capacity(levels.len());
        for level in &levels {
            let label = width_label(level.provenance.widths[0]);
            let lo = value_iteration(&level.imdp, OptMode::Min, &cfg.vi_params())?;
            let hi = value_iteration(&level.imdp, OptMode::Max, &cfg.vi_params())?;
            for (mode, oc) in [(OptMode::Min, &lo), (OptMode::Max, &hi)] {
                if !oc.report.converged {
                    return Err(CliError::Solver(format!(
                        "width {label}: {mode}-side value iteration stopped after {} \
                         sweeps with residual {:.3e} above tol {:.3e}",
                        oc.report.iterations, oc.report.residual, cfg.solver.tol
                    )));
                }
            }
            write_file(
                &out.join(format!("values_min_{label}.csv")),
                &values_csv(&level.imdp.states, &lo.values),
            )?;
            write_file(
                &out.join(format!("values_max_{label}.csv")),
                &values_csv(&level.imdp.states, &hi.values),
            )?;
            write_file(
                &out.join(format!("strategy_min_{label}.csv")),
                &strategy_csv(&level.imdp.states, &level.imdp.actions, &lo.strategy),
            )?;
            write_file(
                &out.join(format!("strategy_max_{label}.csv")),
                &strategy_csv(&level.imdp.states, &level.imdp.actions, &hi.strategy),
            )?;
            solved.push(Solved { lo, hi });
        }
        Ok(solved)
    })?;

    let slack = 2.0 * cfg.solver.tol;
    let monotonicity = stage("refine-check", || {
        let mut pairs = Vec::new();
        for i in 0..levels.len().saturating_sub(1) {
            let report = abstraction::check_refinement_monotonicity(
                LevelValues {
                    partition: &levels[i].partition,
                    min_values: &solved[i].lo.values,
                    max_values: &solved[i].hi.values,
                },
                LevelValues {
                    partition: &levels[i + 1].partition,
                    min_values: &solved[i + 1].lo.values,
                    max_values: &solved[i + 1].hi.values,
                },
                slack,
            )?;
            pairs.push(MonotonicityPair {
                coarse_width: levels[i].provenance.widths[0],
                fine_width: levels[i + 1].provenance.widths[0],
                checked: report.checked,
                violations: report.violations.len(),
            });
        }
        Ok(pairs)
    })?;

    stage("sections", || {
        for (level, s) in levels.iter().zip(&solved) {
            let label = width_label(level.provenance.widths[0]);
            for t in [0.0, 0.7] {
                let section = analysis::extract_section(
                    &level.partition,
                    &s.lo.values,
                    &s.hi.values,
                    (1, t),
                    None,
                )?;
                write_file(
                    &out.join(format!("section_d1_{t}_{label}.csv")),
                    &analysis::section_to_csv(&section),
                )?;
            }
        }
        Ok(())
    })?;

    let agreements = stage("agreement", || {
        let mut counts = Vec::with_capacity(levels.len());
        for (level, s) in levels.iter().zip(&solved) {
            let label = width_label(level.provenance.widths[0]);
            let map = analysis::agreement_map(&level.imdp, &s.lo.strategy, &s.hi.strategy, None)?;
            write_file(
                &out.join(format!("agreement_{label}.csv")),
                &analysis::agreement_to_csv(&level.partition, &map)?,
            )?;
            counts.push(map.counts);
        }
        Ok(counts)
    })?;

    let gaps = stage("horizon-gap", || {
        let mut gaps = Vec::with_capacity(levels.len());
        for (level, s) in levels.iter().zip(&solved) {
            let bh_min = bounded_horizon_values(&level.imdp, &s.hi.strategy, 5, OptMode::Min)?;
            let bh_max = bounded_horizon_values(&level.imdp, &s.hi.strategy, 5, OptMode::Max)?;
            let gap = level
                .kinds
                .iter()
                .enumerate()
                .filter(|(_, k)| **k == CellKind::Regular)
                .map(|(i, _)| bh_max[i] - bh_min[i])
                .fold(0.0, f64::max);
            gaps.push(gap);
        }
        Ok(gaps)
    })?;

    let finest = levels.len() - 1;
    let probe_run = stage("mc", || {
        let run = run_probes(
            &model,
            &levels[finest],
            &solved[finest].lo.values,
            &solved[finest].hi.values,
            &solved[finest].hi.strategy,
            cfg,
        )?;
        write_file(&out.join("mc_probes.csv"), &run.csv)?;
        Ok(run)
    })?;

    stage("summary", || {
        let mut level_summaries = Vec::with_capacity(levels.len());
        let mut means = Vec::with_capacity(levels.len());
        for (i, (level, s)) in levels.iter().zip(&solved).enumerate() {
            let live: Vec<usize> = level
                .kinds
                .iter()
                .enumerate()
                .filter(|(_, k)| **k == CellKind::Regular)
                .map(|(c, _)| c)
                .collect();
            let widths: Vec<f64> = live.iter().map(|&c| s.hi.values[c] - s.lo.values[c]).collect();
            let mean = widths.iter().sum::<f64>() / widths.len() as f64;
            let max = widths.iter().copied().fold(0.0, f64::max);
            means.push(mean);
            level_summaries.push(LevelSummary {
                width: level.provenance.widths[0],
                states: level.imdp.num_states(),
                live_cells: live.len(),
                vi_min: SolveStats::from(&s.lo.report),
                vi_max: SolveStats::from(&s.hi.report),
                mean_bound_width: mean,
                max_bound_width: max,
                horizon_gap_n5: gaps[i],
                agreement: agreements[i].clone(),
            });
        }
        let summary = ExperimentSummary {
            format: "experiment-summary-v1",
            tool_version: gridbound::TOOL_VERSION,
            model_hash: levels[0].provenance.model_hash.clone(),
            mode: cfg.abstraction_mode().to_string(),
            sound_for_bounds: levels[0].provenance.sound_for_bounds,
            solver: cfg.solver,
            mc: cfg.mc,
            levels: level_summaries,
            monotonicity,
            mean_widths_strictly_decreasing: means.windows(2).all(|w| w[1] < w[0]),
            mc_probes: probe_run.summary.clone(),
        };
        write_file(&out.join("summary.json"), &to_json_pretty(&summary)?)?;
        for level in &summary.levels {
            println!(
                "width {}: {} states, mean bound width {:.6}, max {:.6}, \
                 5-step strategy gap {:.6}",
                width_label(level.width),
                level.states,
                level.mean_bound_width,
                level.max_bound_width,
                level.horizon_gap_n5
            );
        }
        for pair in &summary.monotonicity {
            println!(
                "monotonicity {} -> {}: {} comparisons, {} violations",
                width_label(pair.coarse_width),
                width_label(pair.fine_width),
                pair.checked,
                pair.violations
            );
        }
        println!(
            "simulation: {}/{} probes inside the relaxed bound interval",
            summary.mc_probes.inside, summary.mc_probes.probes
        );
        Ok(())
    })?;

    stage("plot", || write_file(&out.join("plot_sections.py"), PLOT_SCRIPT))?;

    Ok(())
}

/// Static companion script: draws the section CSVs the pipeline wrote.
/// Kept byte-for-byte fixed so experiment outputs stay reproducible.
const PLOT_SCRIPT: &str = r##"#!/usr/bin/env python3
"""Plot the bound sections written by the experiment pipeline.

Reads every section_d<axis>_<coord>_<width>.csv next to this script and
draws the lower/upper bound staircases, one panel per (axis, coord) pair
with one curve pair per cell width.

Usage: python3 plot_sections.py [--out sections.png]
"""
import argparse
import csv
import re
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

NAME = re.compile(r"section_d(\d+)_([0-9.]+)_([0-9.]+)\.csv$")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="sections.png")
    args = parser.parse_args()
    here = Path(__file__).resolve().parent
    groups = defaultdict(list)
    for path in sorted(here.glob("section_*.csv")):
        match = NAME.search(path.name)
        if match is None:
            continue
        axis, coord, width = match.groups()
        groups[(int(axis), coord)].append((float(width), path))
    if not groups:
        raise SystemExit("no section_d*_*_*.csv files found next to this script")
    fig, axes = plt.subplots(
        1, len(groups), figsize=(6 * len(groups), 4.5), squeeze=False
    )
    for ax, ((axis, coord), files) in zip(axes[0], sorted(groups.items())):
        for width, path in sorted(files, reverse=True):
            xs, lo, hi = [], [], []
            with path.open() as fh:
                for row in csv.DictReader(fh):
                    xs.append(float(row["x"]))
                    lo.append(float(row["e_min"]))
                    hi.append(float(row["e_max"]))
            ax.step(xs, lo, where="mid", label=f"lower, width {width}")
            ax.step(xs, hi, where="mid", label=f"upper, width {width}")
        free = 1 - axis
        ax.set_xlabel(f"x{free}")
        ax.set_ylabel("expected cost to goal")
        ax.set_title(f"bounds along x{free} at x{axis} = {coord}")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
"##;
