//! Deterministic file output and input loading. Every writer produces
//! byte-identical content for identical inputs: row-major cell order,
//! shortest-round-trip float formatting, no timestamps, no machine state.

use crate::errors::{CliError, Result};
use gridbound::abstraction::InducedImdp;
use gridbound::imdp::{Adversary, Imdp, OptMode, Strategy};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

/// A solver input: either a bare interval MDP or a full induced
/// abstraction (which additionally knows its partition and provenance).
pub enum LoadedInput {
    Bare(Imdp),
    Induced(Box<InducedImdp>),
}

impl LoadedInput {
    #[must_use]
    pub fn imdp(&self) -> &Imdp {
        match self {
            LoadedInput::Bare(m) => m,
            LoadedInput::Induced(i) => &i.imdp,
        }
    }

    /// The induced abstraction, for commands that need the partition.
    pub fn induced(&self) -> Result<&InducedImdp> {
        match self {
            LoadedInput::Induced(i) => Ok(i),
            LoadedInput::Bare(_) => Err(CliError::Model(
                "this command needs an induced-model file (with a partition), \
                 got a bare interval-MDP file"
                    .into(),
            )),
        }
    }
}

/// Loads a solver input file, dispatching on its `format` tag.
pub fn load_input(path: &Path) -> Result<LoadedInput> {
    let text = read_file(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Model(format!("{} is not valid JSON: {e}", path.display())))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some("imdp-v1") => Ok(LoadedInput::Bare(Imdp::from_json(&text)?)),
        Some("induced-imdp-v1") => Ok(LoadedInput::Induced(Box::new(
            InducedImdp::from_json(&text)?,
        ))),
        other => Err(CliError::Model(format!(
            "{}: unsupported format tag {other:?}",
            path.display()
        ))),
    }
}

/// `cell,state,value` rows, one per state in state order.
#[must_use]
pub fn values_csv(states: &[String], values: &[f64]) -> String {
    let mut out = String::from("cell,state,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", i, states[i], v);
    }
    out
}

/// `cell,state,action,action_name` rows; empty action fields on states
/// without a choice (terminal states).
#[must_use]
pub fn strategy_csv(states: &[String], actions: &[String], strategy: &Strategy) -> String {
    let mut out = String::from("cell,state,action,action_name\n");
    for (i, choice) in strategy.choice.iter().enumerate() {
        match choice {
            Some(a) => {
                let _ = writeln!(out, "{},{},{},{}", i, states[i], a, actions[*a]);
            }
            None => {
                let _ = writeln!(out, "{},{},,", i, states[i]);
            }
        }
    }
    out
}

#[derive(Serialize)]
struct AdversaryFile<'a> {
    format: &'static str,
    mode: String,
    states: &'a [String],
    actions: &'a [String],
    /// Witness distribution per (state, action), aligned with the credal
    /// set's successor list; null where no entry exists.
    choice: &'a Adversary,
}

/// Versioned JSON for an extracted adversary.
pub fn adversary_json(imdp: &Imdp, mode: OptMode, adversary: &Adversary) -> Result<String> {
    let file = AdversaryFile {
        format: "adversary-v1",
        mode: mode.to_string(),
        states: &imdp.states,
        actions: &imdp.actions,
        choice: adversary,
    };
    serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::Io(format!("cannot serialize adversary: {e}")))
}

/// Solved-strategy export in the box-per-cell exchange format read back by
/// `compare`: `lo0,lo1,hi0,hi1,action[,value]`, one row per non-terminal
/// cell in row-major order, carrying the cell's solved value.
pub fn strategy_boxes_csv(
    induced: &InducedImdp,
    strategy: &Strategy,
    values: &[f64],
) -> Result<String> {
    let mut out = String::from("# columns: lo0,lo1,hi0,hi1,action,value\n");
    for region in induced.partition.regions() {
        let cell = induced.partition.linear_index(&region);
        let Some(action) = strategy.choice[cell] else {
            continue;
        };
        let b = induced.partition.region_box(&region)?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            b.lo[0],
            b.lo[1],
            b.hi[0],
            b.hi[1],
            induced.imdp.actions[action],
            values[cell]
        );
    }
    Ok(out)
}

/// Serializes a report as pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    Ok(text)
}
