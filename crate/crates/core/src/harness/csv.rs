//! Trace CSV emission and parse-back.
//!
//! Columns: `step, lr, loss, accuracy?, g_l1.<group>..., g_linf.<group>...,
//! regret?, bound_rhs?, noise_l2?, tail_index?`. Optional columns appear only
//! when at least one record carries the value; absent cells are empty.
//! Numbers are rendered with `Display`, which emits the shortest digits that
//! parse back to the identical bits, so a written file reads back exactly.

use std::fs;
use std::path::Path;

use crate::analysis::{GroupNorms, TraceRecord};
use crate::error::{Error, Result};

fn validate(trace: &[TraceRecord]) -> Result<Vec<String>> {
    let groups: Vec<String> = trace
        .first()
        .map(|rec| rec.group_norms.iter().map(|g| g.group.clone()).collect())
        .unwrap_or_default();
    let mut prev_step = 0u64;
    for rec in trace {
        if rec.step <= prev_step {
            return Err(Error::Domain(format!(
                "trace steps must be strictly increasing; step {} follows {}",
                rec.step, prev_step
            )));
        }
        prev_step = rec.step;
        if !rec.lr.is_finite() || !rec.loss.is_finite() {
            return Err(Error::Domain(format!(
                "non-finite lr/loss at step {}",
                rec.step
            )));
        }
        let names: Vec<&str> = rec.group_norms.iter().map(|g| g.group.as_str()).collect();
        if names.len() != groups.len() || names.iter().zip(&groups).any(|(a, b)| a != b) {
            return Err(Error::Domain(format!(
                "step {} logs groups {names:?}, expected {groups:?}",
                rec.step
            )));
        }
        for g in &rec.group_norms {
            if !g.grad_l1.is_finite() || !g.grad_linf.is_finite() {
                return Err(Error::Domain(format!(
                    "non-finite norm for group {} at step {}",
                    g.group, rec.step
                )));
            }
        }
        for (name, v) in [
            ("accuracy", rec.accuracy),
            ("regret", rec.regret),
            ("bound_rhs", rec.bound_rhs),
            ("noise_l2", rec.noise_l2),
            ("tail_index", rec.tail_index),
        ] {
            if let Some(x) = v {
                if !x.is_finite() {
                    return Err(Error::Domain(format!(
                        "non-finite {name} at step {}",
                        rec.step
                    )));
                }
            }
        }
    }
    Ok(groups)
}

const OPTIONAL_COLUMNS: [&str; 5] = ["accuracy", "regret", "bound_rhs", "noise_l2", "tail_index"];

fn optional_value(rec: &TraceRecord, column: &str) -> Option<f64> {
    match column {
        "accuracy" => rec.accuracy,
        "regret" => rec.regret,
        "bound_rhs" => rec.bound_rhs,
        "noise_l2" => rec.noise_l2,
        "tail_index" => rec.tail_index,
        _ => None,
    }
}

/// Writes the trace to `path`, all-or-nothing: the content goes to a
/// temporary sibling first and is renamed into place, so a failure never
/// leaves a truncated or header-less file behind.
pub fn write_csv(trace: &[TraceRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let groups = validate(trace)?;
    let with_accuracy = trace.iter().any(|r| r.accuracy.is_some());
    let tail_columns: Vec<&str> = OPTIONAL_COLUMNS[1..]
        .iter()
        .copied()
        .filter(|c| trace.iter().any(|r| optional_value(r, c).is_some()))
        .collect();

    let mut text = String::from("step,lr,loss");
    if with_accuracy {
        text.push_str(",accuracy");
    }
    for g in &groups {
        text.push_str(&format!(",g_l1.{g}"));
    }
    for g in &groups {
        text.push_str(&format!(",g_linf.{g}"));
    }
    for c in &tail_columns {
        text.push(',');
        text.push_str(c);
    }
    text.push('\n');

    for rec in trace {
        text.push_str(&format!("{},{},{}", rec.step, rec.lr, rec.loss));
        if with_accuracy {
            text.push(',');
            if let Some(a) = rec.accuracy {
                text.push_str(&a.to_string());
            }
        }
        for g in &rec.group_norms {
            text.push_str(&format!(",{}", g.grad_l1));
        }
        for g in &rec.group_norms {
            text.push_str(&format!(",{}", g.grad_linf));
        }
        for c in &tail_columns {
            text.push(',');
            if let Some(v) = optional_value(rec, c) {
                text.push_str(&v.to_string());
            }
        }
        text.push('\n');
    }

    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, text.as_bytes()).map_err(|e| Error::io(&path_str, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(&path_str, e)
    })?;
    Ok(())
}

fn parse_cell(cell: &str, column: &str, line: usize) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| {
        Error::Domain(format!(
            "line {line}: column {column} holds {cell:?}, expected a number"
        ))
    })
}

fn parse_optional(cell: &str, column: &str, line: usize) -> Result<Option<f64>> {
    if cell.is_empty() {
        Ok(None)
    } else {
        parse_cell(cell, column, line).map(Some)
    }
}

/// Reads a file written by [`write_csv`] back into records. Snapshot and
/// running-sum fields are not part of the CSV schema and come back `None`.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(&path_str, e))?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Domain(format!("{path_str} is empty (no header)")));
    };
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 3 || columns[..3] != ["step", "lr", "loss"] {
        return Err(Error::Domain(format!(
            "unexpected header {header:?}; traces start with step,lr,loss"
        )));
    }
    for col in &columns[3..] {
        let known = OPTIONAL_COLUMNS.contains(col)
            || col.starts_with("g_l1.")
            || col.starts_with("g_linf.");
        if !known {
            return Err(Error::Domain(format!("unknown column {col:?}")));
        }
    }

    let mut records = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(Error::Domain(format!(
                "line {line_no}: {} cells but {} columns",
                cells.len(),
                columns.len()
            )));
        }
        let step = cells[0]
            .parse::<u64>()
            .map_err(|_| Error::Domain(format!("line {line_no}: bad step {:?}", cells[0])))?;
        let mut rec = TraceRecord::new(
            step,
            parse_cell(cells[1], "lr", line_no)?,
            parse_cell(cells[2], "loss", line_no)?,
        );
        let mut linf_by_group: Vec<(String, f64)> = Vec::new();
        for (col, cell) in columns[3..].iter().zip(&cells[3..]) {
            if let Some(group) = col.strip_prefix("g_l1.") {
                rec.group_norms.push(GroupNorms {
                    group: group.to_string(),
                    grad_l1: parse_cell(cell, col, line_no)?,
                    grad_linf: f64::NAN,
                });
            } else if let Some(group) = col.strip_prefix("g_linf.") {
                linf_by_group.push((group.to_string(), parse_cell(cell, col, line_no)?));
            } else {
                let v = parse_optional(cell, col, line_no)?;
                match *col {
                    "accuracy" => rec.accuracy = v,
                    "regret" => rec.regret = v,
                    "bound_rhs" => rec.bound_rhs = v,
                    "noise_l2" => rec.noise_l2 = v,
                    "tail_index" => rec.tail_index = v,
                    _ => unreachable!("column set validated above"),
                }
            }
        }
        for (group, linf) in linf_by_group {
            let Some(gn) = rec.group_norms.iter_mut().find(|g| g.group == group) else {
                return Err(Error::Domain(format!(
                    "line {line_no}: g_linf.{group} without matching g_l1 column"
                )));
            };
            gn.grad_linf = linf;
        }
        if rec.group_norms.iter().any(|g| g.grad_linf.is_nan()) {
            return Err(Error::Domain(format!(
                "line {line_no}: missing g_linf column for a traced group"
            )));
        }
        records.push(rec);
    }
    Ok(records)
}
