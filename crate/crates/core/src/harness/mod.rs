//! Experiment configuration, runs, sweeps and CSV output.

pub mod check;
pub mod config;
pub mod plot;
pub mod run;
pub mod sweep;

use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

pub use check::{run_checks, CheckGrid, CheckReport, CheckRow};
pub use config::{
    apply_env_overrides, load_config, parse_config, AlphaMode, DatasetSpec, ExperimentConfig, GammaMode, ObjectiveSpec,
};
pub use plot::{emit_plot_data, PlotData};
pub use run::{
    alpha_grid, build_problem, grid_search, run_experiment, run_on_problem, simulate, theoretical_alpha, GridPoint,
    MetricRow, Problem, RunRecord, RunStatus, RUN_CSV_HEADER,
};
pub use sweep::{apply_axis, sweep, SweepAxis, SweepRow, SweepSummary, SweepTable};

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
