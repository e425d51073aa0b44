//! Tidy CSVs for the standard figures plus a small plotting script.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::run::RunRecord;
use super::sweep::SweepTable;
use super::write_atomic;
use crate::{Error, Result};

/// Inputs for [`emit_plot_data`]; any subset may be present.
#[derive(Clone, Copy, Debug, Default)]
pub struct PlotData<'a> {
    /// Runs compared on the same problem, one series each.
    pub runs: &'a [RunRecord],
    pub topology_sweep: Option<&'a SweepTable>,
    pub sigma_sweep: Option<&'a SweepTable>,
}

/// Series labels made unique by suffixing `#2`, `#3`, ...
fn unique_labels(runs: &[RunRecord]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::with_capacity(runs.len());
    for r in runs {
        let mut label = r.label.clone();
        let mut k = 2;
        while seen.contains(&label) {
            label = format!("{}#{k}", r.label);
            k += 1;
        }
        seen.push(label);
    }
    seen
}

/// Wide table: one `iter` column and one column per run; blank where a run
/// has no row at that iteration.
pub fn series_csv(runs: &[RunRecord], metric: impl Fn(&super::run::MetricRow) -> f64) -> String {
    let labels = unique_labels(runs);
    let iters: BTreeSet<usize> = runs.iter().flat_map(|r| r.rows.iter().map(|row| row.iter)).collect();
    let mut out = String::from("iter");
    for l in &labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for it in iters {
        let _ = write!(out, "{it}");
        for r in runs {
            out.push(',');
            if let Some(row) = r.rows.iter().find(|row| row.iter == it) {
                let _ = write!(out, "{}", metric(row));
            }
        }
        out.push('\n');
    }
    out
}

fn sweep_csv(table: &SweepTable) -> String {
    let mut out = format!("{},mean_final_opt_err,mean_final_consensus,diverged,repeats\n", table.axis.name());
    for s in &table.summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.axis_value, s.mean_final_opt_err, s.mean_final_consensus, s.diverged, s.repeats
        );
    }
    out
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Line and bar plots for the CSV files in this directory."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent


def read(name):
    with open(here / name) as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


def lines(name, ylabel):
    if not (here / name).exists():
        return
    header, rows = read(name)
    fig, ax = plt.subplots()
    for col in range(1, len(header)):
        pts = [(float(r[0]), float(r[col])) for r in rows if r[col] != ""]
        if pts:
            ax.semilogy(*zip(*pts), label=header[col])
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.savefig(here / name.replace(".csv", ".png"), dpi=150)


def bars(name):
    if not (here / name).exists():
        return
    header, rows = read(name)
    fig, ax = plt.subplots()
    ax.bar([r[0] for r in rows], [float(r[1]) for r in rows])
    ax.set_yscale("log")
    ax.set_xlabel(header[0])
    ax.set_ylabel("final optimality error")
    fig.savefig(here / name.replace(".csv", ".png"), dpi=150)


lines("fig1a_opt_err.csv", "optimality error")
lines("fig1b_consensus.csv", "average consensus error")
bars("fig1c_topology_sweep.csv")
bars("fig1d_sigma_sweep.csv")
"#;

/// Writes the figure CSVs that the inputs allow, plus `plot_figures.py`, and
/// returns the written paths.
pub fn emit_plot_data(dir: &Path, data: &PlotData<'_>) -> Result<Vec<PathBuf>> {
    if data.runs.is_empty() && data.topology_sweep.is_none() && data.sigma_sweep.is_none() {
        return Err(Error::EmptyInput("no runs or sweeps to plot".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
        Ok(())
    };
    if !data.runs.is_empty() {
        put("fig1a_opt_err.csv", series_csv(data.runs, |r| r.opt_err))?;
        put("fig1b_consensus.csv", series_csv(data.runs, |r| r.avg_consensus))?;
    }
    if let Some(t) = data.topology_sweep {
        put("fig1c_topology_sweep.csv", sweep_csv(t))?;
    }
    if let Some(t) = data.sigma_sweep {
        put("fig1d_sigma_sweep.csv", sweep_csv(t))?;
    }
    put("plot_figures.py", PLOT_SCRIPT.to_string())?;
    Ok(written)
}
