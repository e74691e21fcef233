//! Deterministic file outputs. CSV floats use 17 significant digits so
//! doubles round-trip losslessly; JSON reports embed the invoking config.

use anyhow::{Context, Result};
use consensus_core::bounds::StageCheck;
use consensus_core::dynamics::Trajectory;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let n = traj.states.first().map(Vec::len).unwrap_or(0);
    let mut out = String::new();
    out.push('t');
    for i in 1..=n {
        let _ = write!(out, ",x_{i}");
    }
    out.push_str(",H,h,Psi\n");
    for (idx, state) in traj.states.iter().enumerate() {
        let _ = write!(out, "{}", traj.t0 + idx as u64);
        for &v in state {
            let _ = write!(out, ",{}", fmt_f64(v));
        }
        let _ = writeln!(
            out,
            ",{},{},{}",
            fmt_f64(traj.max_state[idx]),
            fmt_f64(traj.min_state[idx]),
            fmt_f64(traj.spread[idx]),
        );
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_sorted_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let records = traj
        .sorted
        .as_ref()
        .context("sorted records were not recorded; pass --record-sorted")?;
    let n = records.first().map(|r| r.rank.len()).unwrap_or(0);
    let mut out = String::new();
    out.push('t');
    for i in 1..=n {
        let _ = write!(out, ",sigma_{i}");
    }
    for i in 1..=n {
        let _ = write!(out, ",z_{i}");
    }
    out.push('\n');
    for (idx, rec) in records.iter().enumerate() {
        let _ = write!(out, "{}", traj.t0 + idx as u64);
        for &r in &rec.rank {
            let _ = write!(out, ",{}", r + 1);
        }
        for &z in &rec.sorted {
            let _ = write!(out, ",{}", fmt_f64(z));
        }
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_stage_csv(path: &Path, checks: &[StageCheck]) -> Result<()> {
    let mut out = String::from("stage,t,predicted,observed,ok\n");
    for c in checks {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.stage,
            c.time,
            fmt_f64(c.predicted),
            fmt_f64(c.observed),
            c.ok
        );
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Self-describing report: the command, its arguments and the result.
pub fn write_json_report<C: Serialize, T: Serialize>(
    path: &Path,
    command: &str,
    config: &C,
    result: &T,
) -> Result<()> {
    #[derive(Serialize)]
    struct Report<'a, C, T> {
        command: &'a str,
        config: &'a C,
        result: &'a T,
    }
    let mut json = serde_json::to_string_pretty(&Report {
        command,
        config,
        result,
    })?;
    json.push('\n');
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
