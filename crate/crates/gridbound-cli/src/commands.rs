//! Subcommand implementations. Each takes the merged run configuration
//! and the resolved output directory, does its work, and writes files
//! whose bytes depend only on the inputs — never on wall-clock time,
//! paths, or thread count.

use crate::config::{CredalModeName, RunConfig};
use crate::errors::{CliError, Result};
use crate::outputs::{
    adversary_json, ensure_dir, load_input, strategy_boxes_csv, strategy_csv, to_json_pretty,
    values_csv, write_file,
};
use gridbound::abstraction::{
    self, CellStrategy, InducedImdp, LevelValues, MonotonicityReport,
};
use gridbound::analysis;
use gridbound::emdp::{self, WalkerModel};
use gridbound::geometry::CellKind;
use gridbound::imdp::{value_iteration, Imdp, OptMode, Strategy, ViOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Credal-set construction named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    /// Per-successor probability intervals (sound outer bounds).
    Interval,
    /// Finitely many sampled distributions (inner approximation).
    Candidates,
}

impl From<ModeArg> for CredalModeName {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Interval => CredalModeName::Interval,
            ModeArg::Candidates => CredalModeName::Candidates,
        }
    }
}

/// Which optimization side(s) to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BoundArg {
    /// Guaranteed lower bound.
    Min,
    /// Guaranteed upper bound.
    Max,
    /// Both bounds.
    Both,
}

impl BoundArg {
    fn modes(self) -> Vec<OptMode> {
        match self {
            BoundArg::Min => vec![OptMode::Min],
            BoundArg::Max => vec![OptMode::Max],
            BoundArg::Both => vec![OptMode::Min, OptMode::Max],
        }
    }
}

fn apply_model_overrides(
    cfg: &mut RunConfig,
    model: &Option<PathBuf>,
    widths: &[f64],
    mode: Option<ModeArg>,
    candidates_k: Option<usize>,
) {
    if model.is_some() {
        cfg.model.clone_from(model);
    }
    if !widths.is_empty() {
        cfg.widths = widths.to_vec();
    }
    if let Some(m) = mode {
        cfg.mode = m.into();
    }
    if let Some(k) = candidates_k {
        cfg.candidates_k = k;
    }
}

fn apply_solver_overrides(
    cfg: &mut RunConfig,
    tol: Option<f64>,
    max_iter: Option<usize>,
    divergence_cap: Option<f64>,
) {
    if let Some(t) = tol {
        cfg.solver.tol = t;
    }
    if let Some(m) = max_iter {
        cfg.solver.max_iter = m;
    }
    if let Some(c) = divergence_cap {
        cfg.solver.divergence_cap = c;
    }
}

/// Solves one side to the fixpoint; non-convergence is a solver failure.
fn solve_converged(imdp: &Imdp, mode: OptMode, cfg: &RunConfig) -> Result<ViOutcome> {
    let outcome = value_iteration(imdp, mode, &cfg.vi_params())?;
    if !outcome.report.converged {
        return Err(CliError::Solver(format!(
            "{mode}-side value iteration did not converge within {} sweeps \
             (residual {:.3e}, tol {:.3e})",
            outcome.report.iterations, outcome.report.residual, cfg.solver.tol
        )));
    }
    Ok(outcome)
}

/// Width label used in file names: the shortest exact decimal form.
pub fn width_label(w: f64) -> String {
    format!("{w}")
}

// ---------------------------------------------------------------------------
// induce
// ---------------------------------------------------------------------------

#[derive(Debug, clap::Args)]
pub struct InduceArgs {
    /// Model TOML path (default: the built-in walker).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated cell widths, coarsest first; each must evenly
    /// divide the previous one.
    #[arg(long, value_delimiter = ',')]
    pub widths: Vec<f64>,
    /// Credal-set construction.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Samples per axis in candidates mode.
    #[arg(long)]
    pub candidates_k: Option<usize>,
}

pub fn cmd_induce(cfg: &RunConfig, out: &Path, args: &InduceArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    apply_model_overrides(&mut cfg, &args.model, &args.widths, args.mode, args.candidates_k);
    cfg.validate()?;
    let model = cfg.load_model()?;
    let levels = abstraction::refinement_sequence(&model, &cfg.widths, cfg.abstraction_mode())?;
    ensure_dir(out)?;
    for level in &levels {
        let label = width_label(level.provenance.widths[0]);
        let path = out.join(format!("imdp_{label}.json"));
        write_file(&path, &level.to_json()?)?;
        println!(
            "wrote {} ({} states, {} terminal)",
            path.display(),
            level.imdp.num_states(),
            level.imdp.goal.iter().filter(|g| **g).count()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// vi
// ---------------------------------------------------------------------------

#[derive(Debug, clap::Args)]
pub struct ViArgs {
    /// Induced-model or bare interval-MDP JSON file.
    #[arg(long)]
    pub input: PathBuf,
    /// Which bound(s) to solve.
    #[arg(long, value_enum, default_value = "both")]
    pub mode: BoundArg,
    /// Convergence tolerance (sup-norm residual).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Hard sweep cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Values crossing this are treated as divergent.
    #[arg(long)]
    pub divergence_cap: Option<f64>,
}

fn write_vi_outputs(out: &Path, imdp: &Imdp, mode: OptMode, outcome: &ViOutcome) -> Result<()> {
    write_file(
        &out.join(format!("values_{mode}.csv")),
        &values_csv(&imdp.states, &outcome.values),
    )?;
    write_file(
        &out.join(format!("strategy_{mode}.csv")),
        &strategy_csv(&imdp.states, &imdp.actions, &outcome.strategy),
    )?;
    write_file(
        &out.join(format!("adversary_{mode}.json")),
        &adversary_json(imdp, mode, &outcome.adversary)?,
    )?;
    write_file(
        &out.join(format!("report_{mode}.json")),
        &to_json_pretty(&outcome.report)?,
    )
}

pub fn cmd_vi(cfg: &RunConfig, out: &Path, args: &ViArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    apply_solver_overrides(&mut cfg, args.tol, args.max_iter, args.divergence_cap);
    cfg.validate()?;
    let input = load_input(&args.input)?;
    let imdp = input.imdp();
    ensure_dir(out)?;
    let mut failure: Option<String> = None;
    for mode in args.mode.modes() {
        let outcome = value_iteration(imdp, mode, &cfg.vi_params())?;
        // Partial results are still written on non-convergence so the run
        // can be inspected; the exit code reports the failure afterwards.
        write_vi_outputs(out, imdp, mode, &outcome)?;
        println!(
            "{mode}: {} sweeps, residual {:.3e}, converged: {}",
            outcome.report.iterations, outcome.report.residual, outcome.report.converged
        );
        if !outcome.report.converged {
            failure = Some(format!(
                "{mode}-side value iteration stopped after {} sweeps with residual \
                 {:.3e} above tol {:.3e}",
                outcome.report.iterations, outcome.report.residual, cfg.solver.tol
            ));
        }
    }
    match failure {
        Some(msg) => Err(CliError::Solver(msg)),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// strategy
// ---------------------------------------------------------------------------

#[derive(Debug, clap::Args)]
pub struct StrategyArgs {
    /// Induced-model JSON file (the partition is needed for cell boxes).
    #[arg(long)]
    pub input: PathBuf,
    /// Which bound(s) to extract a strategy for.
    #[arg(long, value_enum, default_value = "both")]
    pub mode: BoundArg,
    /// Convergence tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

pub fn cmd_strategy(cfg: &RunConfig, out: &Path, args: &StrategyArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    apply_solver_overrides(&mut cfg, args.tol, None, None);
    cfg.validate()?;
    let input = load_input(&args.input)?;
    let induced = input.induced()?;
    ensure_dir(out)?;
    for mode in args.mode.modes() {
        let outcome = solve_converged(&induced.imdp, mode, &cfg)?;
        let csv = strategy_boxes_csv(induced, &outcome.strategy, &outcome.values)?;
        let path = out.join(format!("strategy_{mode}_boxes.csv"));
        write_file(&path, &csv)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// section
// ---------------------------------------------------------------------------

#[derive(Debug, clap::Args)]
pub struct SectionArgs {
    /// Induced-model JSON file.
    #[arg(long)]
    pub input: PathBuf,
    /// Dimension to hold fixed.
    #[arg(long)]
    pub axis: usize,
    /// Coordinate at which to hold it.
    #[arg(long)]
    pub at: f64,
    /// Externally supplied strategy file whose claimed values are plotted
    /// alongside the bounds (requires its optional value column).
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// Convergence tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

pub fn cmd_section(cfg: &RunConfig, out: &Path, args: &SectionArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    apply_solver_overrides(&mut cfg, args.tol, None, None);
    cfg.validate()?;
    let input = load_input(&args.input)?;
    let induced = input.induced()?;
    let lo = solve_converged(&induced.imdp, OptMode::Min, &cfg)?;
    let hi = solve_converged(&induced.imdp, OptMode::Max, &cfg)?;
    let external_values = match &args.external {
        None => None,
        Some(path) => {
            let imported = analysis::import_external_strategy(
                path,
                &induced.partition,
                &induced.imdp.actions,
            )?;
            match imported.values {
                Some(v) => Some(v),
                None => {
                    return Err(CliError::Model(format!(
                        "{}: no value column, nothing to plot alongside the bounds",
                        path.display()
                    )))
                }
            }
        }
    };
    let section = analysis::extract_section(
        &induced.partition,
        &lo.values,
        &hi.values,
        (args.axis, args.at),
        external_values.as_deref(),
    )?;
    ensure_dir(out)?;
    let path = out.join(format!("section_d{}_{}.csv", args.axis, args.at));
    write_file(&path, &analysis::section_to_csv(&section))?;
    println!("wrote {} ({} samples)", path.display(), section.samples.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// refine-check
// ---------------------------------------------------------------------------

#[derive(Debug, clap::Args)]
pub struct RefineCheckArgs {
    /// Model TOML path (default: the built-in walker).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated cell widths, coarsest first.
    #[arg(long, value_delimiter = ',')]
    pub widths: Vec<f64>,
    /// Credal-set construction.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Convergence tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Serialize)]
struct RefinePair {
    coarse_width: f64,
    fine_width: f64,
    report: MonotonicityReport,
}

#[derive(Serialize)]
struct RefineCheckFile {
    widths: Vec<f64>,
    /// Comparison slack: twice the solver tolerance.
    slack: f64,
    clean: bool,
    pairs: Vec<RefinePair>,
}

pub fn cmd_refine_check(cfg: &RunConfig, out: &Path, args: &RefineCheckArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    apply_model_overrides(&mut cfg, &args.model, &args.widths, args.mode, None);
    apply_solver_overrides(&mut cfg, args.tol, None, None);
    cfg.validate()?;
    if cfg.widths.len() < 2 {
        return Err(CliError::Usage(
            "refine-check needs at least two widths to compare".into(),
        ));
    }
    let model = cfg.load_model()?;
    let levels = abstraction::refinement_sequence(&model, &cfg.widths, cfg.abstraction_mode())?;
    let mut solved = Vec::with_capacity(levels.len());
    for level in &levels {
        let lo = solve_converged(&level.imdp, OptMode::Min, &cfg)?;
        let hi = solve_converged(&level.imdp, OptMode::Max, &cfg)?;
        solved.push((lo, hi));
    }
    let slack = 2.0 * cfg.solver.tol;
    let mut pairs = Vec::new();
    for i in 0..levels.len() - 1 {
        let coarse = LevelValues {
            partition: &levels[i].partition,
            min_values: &solved[i].0.values,
            max_values: &solved[i].1.values,
        };
        let fine = LevelValues {
            partition: &levels[i + 1].partition,
            min_values: &solved[i + 1].0.values,
            max_values: &solved[i + 1].1.values,
        };
        let report = abstraction::check_refinement_monotonicity(coarse, fine, slack)?;
        let coarse_width = levels[i].provenance.widths[0];
        let fine_width = levels[i + 1].provenance.widths[0];
        println!(
            "{} -> {}: {} comparisons, {} violations",
            width_label(coarse_width),
            width_label(fine_width),
            report.checked,
            report.violations.len()
        );
        pairs.push(RefinePair {
            coarse_width,
            fine_width,
            report,
        });
    }
    let doc = RefineCheckFile {
        widths: cfg.widths.clone(),
        slack,
        clean: pairs.iter().all(|p| p.report.is_clean()),
        pairs,
    };
    ensure_dir(out)?;
    write_file(&out.join("refine_check.json"), &to_json_pretty(&doc)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// mc
// ---------------------------------------------------------------------------

#[derive(Debug, clap::Args)]
pub struct McArgs {
    /// Induced-model JSON file whose upper-bound strategy is simulated.
    #[arg(long)]
    pub input: PathBuf,
    /// Model TOML path; must fingerprint-match the abstraction's provenance.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Simulated trajectories per probe point.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Step cap per trajectory.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Base seed for probe placement and simulation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of probe start points.
    #[arg(long)]
    pub probes: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct McSummary {
    pub probes: usize,
    /// Probes whose empirical mean lies in the cell's bound interval
    /// relaxed by three standard errors on each side.
    pub inside: usize,
    pub containment_rate: f64,
    pub runs: usize,
    pub horizon: usize,
    pub seed: u64,
}

pub struct ProbeRun {
    pub csv: String,
    pub summary: McSummary,
}

/// Simulates the given cell strategy from randomly placed non-terminal
/// start points and scores each empirical mean against its cell's bounds.
pub fn run_probes(
    model: &WalkerModel,
    induced: &InducedImdp,
    e_min: &[f64],
    e_max: &[f64],
    strategy: &Strategy,
    cfg: &RunConfig,
) -> Result<ProbeRun> {
    let playable = CellStrategy::from_strategy(induced, strategy)?;
    // Probe placement uses a dedicated stream so it can never collide with
    // the per-trajectory streams the simulator derives from its seeds.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.mc.seed);
    rng.set_stream(u64::MAX);
    let dom = induced.partition.domain().clone();
    let mut csv = String::from("probe,x0,x1,cell,e_min,e_max,mean,std_error,inside\n");
    let mut inside_count = 0usize;
    for i in 0..cfg.mc.probes {
        let (point, cell) = loop {
            let p: Vec<f64> = (0..dom.dim())
                .map(|d| rng.gen_range(dom.lo[d]..dom.hi[d]))
                .collect();
            if model.is_terminal(&p) {
                continue;
            }
            let region = induced.partition.region_of(&p)?;
            let cell = induced.partition.linear_index(&region);
            if induced.kinds[cell] == CellKind::Regular {
                break (p, cell);
            }
        };
        let probe_seed: u64 = rng.gen();
        let est = emdp::mc_expected_cost(
            model,
            &playable,
            &point,
            cfg.mc.horizon,
            cfg.mc.runs,
            probe_seed,
        )?;
        let inside = est.mean >= e_min[cell] - 3.0 * est.std_error
            && est.mean <= e_max[cell] + 3.0 * est.std_error;
        if inside {
            inside_count += 1;
        }
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            i, point[0], point[1], cell, e_min[cell], e_max[cell], est.mean, est.std_error, inside
        );
    }
    let summary = McSummary {
        probes: cfg.mc.probes,
        inside: inside_count,
        containment_rate: inside_count as f64 / cfg.mc.probes as f64,
        runs: cfg.mc.runs,
        horizon: cfg.mc.horizon,
        seed: cfg.mc.seed,
    };
    Ok(ProbeRun { csv, summary })
}

/// Rejects a model whose fingerprint differs from the abstraction's
/// provenance — simulating one model under another's bounds proves nothing.
pub fn check_model_matches(model: &WalkerModel, induced: &InducedImdp) -> Result<()> {
    let fp = abstraction::model_fingerprint(model)?;
    if fp != induced.provenance.model_hash {
        return Err(CliError::Model(format!(
            "model fingerprint {fp} does not match the abstraction's provenance \
             {}; the bounds were computed for a different model",
            induced.provenance.model_hash
        )));
    }
    Ok(())
}

pub fn cmd_mc(cfg: &RunConfig, out: &Path, args: &McArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    if args.model.is_some() {
        cfg.model.clone_from(&args.model);
    }
    if let Some(r) = args.runs {
        cfg.mc.runs = r;
    }
    if let Some(h) = args.horizon {
        cfg.mc.horizon = h;
    }
    if let Some(s) = args.seed {
        cfg.mc.seed = s;
    }
    if let Some(p) = args.probes {
        cfg.mc.probes = p;
    }
    cfg.validate()?;
    let input = load_input(&args.input)?;
    let induced = input.induced()?;
    let model = cfg.load_model()?;
    check_model_matches(&model, induced)?;
    let lo = solve_converged(&induced.imdp, OptMode::Min, &cfg)?;
    let hi = solve_converged(&induced.imdp, OptMode::Max, &cfg)?;
    let run = run_probes(&model, induced, &lo.values, &hi.values, &hi.strategy, &cfg)?;
    ensure_dir(out)?;
    write_file(&out.join("mc_probes.csv"), &run.csv)?;
    write_file(&out.join("mc_summary.json"), &to_json_pretty(&run.summary)?)?;
    println!(
        "containment: {}/{} probes inside the relaxed bound interval",
        run.summary.inside, run.summary.probes
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[derive(Debug, clap::Args)]
pub struct CompareArgs {
    /// Induced-model JSON file.
    #[arg(long)]
    pub input: PathBuf,
    /// External strategy file: `lo0,lo1,hi0,hi1,action[,value]` rows.
    #[arg(long)]
    pub external: PathBuf,
    /// Convergence tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Serialize)]
struct ComparisonFile {
    /// Non-terminal cells the external file assigns an action.
    covered_live: usize,
    /// Non-terminal cells it leaves unassigned.
    uncovered_live: usize,
    /// Agreement class counts against the two solved strategies; absent
    /// when the external strategy does not cover every live cell.
    #[serde(skip_serializing_if = "Option::is_none")]
    agreement: Option<BTreeMap<String, usize>>,
    /// Placement of the file's claimed values against the solved bounds;
    /// absent when the file carries no value column.
    #[serde(skip_serializing_if = "Option::is_none")]
    value_check: Option<analysis::BoundComparison>,
    /// Slack used for the value check: twice the solver tolerance.
    value_slack: f64,
}

pub fn cmd_compare(cfg: &RunConfig, out: &Path, args: &CompareArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    apply_solver_overrides(&mut cfg, args.tol, None, None);
    cfg.validate()?;
    let input = load_input(&args.input)?;
    let induced = input.induced()?;
    let imported = analysis::import_external_strategy(
        &args.external,
        &induced.partition,
        &induced.imdp.actions,
    )?;
    let lo = solve_converged(&induced.imdp, OptMode::Min, &cfg)?;
    let hi = solve_converged(&induced.imdp, OptMode::Max, &cfg)?;
    ensure_dir(out)?;

    let mut covered_live = 0usize;
    let mut uncovered_live = 0usize;
    for (goal, choice) in induced.imdp.goal.iter().zip(&imported.strategy.choice) {
        if *goal {
            continue;
        }
        match choice {
            Some(_) => covered_live += 1,
            None => uncovered_live += 1,
        }
    }

    let agreement = if uncovered_live == 0 {
        let map = analysis::agreement_map(
            &induced.imdp,
            &lo.strategy,
            &hi.strategy,
            Some(&imported.strategy),
        )?;
        write_file(
            &out.join("agreement.csv"),
            &analysis::agreement_to_csv(&induced.partition, &map)?,
        )?;
        Some(map.counts)
    } else {
        println!(
            "external strategy leaves {uncovered_live} live cells unassigned; \
             skipping the agreement map"
        );
        None
    };

    let value_slack = 2.0 * cfg.solver.tol;
    let value_check = match &imported.values {
        Some(vals) => Some(analysis::compare_values_to_bounds(
            vals,
            &lo.values,
            &hi.values,
            value_slack,
        )?),
        None => None,
    };
    if let Some(check) = &value_check {
        println!(
            "claimed values: {} inside, {} below, {} above, {} missing",
            check.inside, check.below, check.above, check.missing
        );
    }

    let doc = ComparisonFile {
        covered_live,
        uncovered_live,
        agreement,
        value_check,
        value_slack,
    };
    write_file(&out.join("comparison.json"), &to_json_pretty(&doc)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

#[derive(Debug, clap::Args)]
pub struct ExperimentArgs {
    /// Model TOML path (default: the built-in walker).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated cell widths, coarsest first.
    #[arg(long, value_delimiter = ',')]
    pub widths: Vec<f64>,
    /// Credal-set construction.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Samples per axis in candidates mode.
    #[arg(long)]
    pub candidates_k: Option<usize>,
}

pub fn cmd_experiment(cfg: &RunConfig, out: &Path, args: &ExperimentArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    apply_model_overrides(&mut cfg, &args.model, &args.widths, args.mode, args.candidates_k);
    crate::experiment::run(&cfg, out)
}
