use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pdgmm::metrics::{mean_std, write_csv, MetricsReport};
use pdgmm::Exec;

use crate::commands::run_all;
use crate::config::{sha256_hex, Axis, ExperimentConfig};
use crate::error::{io_err, CliError};

#[derive(Debug)]
pub struct CellRun {
    pub value: String,
    pub seed: u64,
    pub outcome: Result<MetricsReport, CliError>,
}

#[derive(Debug)]
pub struct GridOutcome {
    pub dir: PathBuf,
    pub runs: Vec<CellRun>,
}

impl GridOutcome {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.outcome.is_err()).count()
    }
}

#[cfg(feature = "parallel")]
fn run_pool<T: Send>(workers: usize, count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(|| (0..count).into_par_iter().map(&f).collect()),
        Err(_) => (0..count).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_pool<T: Send>(_workers: usize, count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..count).map(f).collect()
}

fn fmt_stat(values: &[f64]) -> String {
    if values.is_empty() {
        return ",".into();
    }
    let (m, s) = mean_std(values);
    format!("{m},{s}")
}

pub const SUMMARY_HEADER: &str =
    "axis,value,runs,failures,r2_stage1_mean,r2_stage1_std,mcc_stage1_mean,mcc_stage1_std,mcc_stage2_mean,mcc_stage2_std";

/// Runs every `(value, seed)` cell of one ablation axis. Failed cells are recorded and
/// the rest of the grid continues.
pub fn grid(
    base: &ExperimentConfig,
    axis: Axis,
    values: &[String],
    seeds: &[u64],
    workers: usize,
    root: &Path,
) -> Result<GridOutcome, CliError> {
    if values.is_empty() || seeds.is_empty() {
        return Err(CliError::Config("a grid needs at least one value and one seed".into()));
    }
    let cells: Vec<(String, u64, ExperimentConfig)> = values
        .iter()
        .map(|v| axis.apply(base, v).map(|c| (v.clone(), c)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flat_map(|(v, c)| seeds.iter().map(move |&s| (v.clone(), s, ExperimentConfig { seed: s, ..c.clone() })))
        .collect();
    let id = serde_json::json!({ "base": base, "axis": axis, "values": values, "seeds": seeds });
    let dir = root.join(format!("grid-{axis}-{}", &sha256_hex(&id.to_string())[..16]));
    let exec = if workers > 1 { Exec::Sequential } else { Exec::Parallel };
    let outcomes = run_pool(workers, cells.len(), |i| run_all(&cells[i].2, root, exec));
    let runs: Vec<CellRun> = cells
        .into_iter()
        .zip(outcomes)
        .map(|((value, seed, _), outcome)| CellRun { value, seed, outcome })
        .collect();

    let reports: Vec<MetricsReport> = runs.iter().filter_map(|r| r.outcome.as_ref().ok().cloned()).collect();
    let mut runs_csv = Vec::new();
    write_csv(&reports, &mut runs_csv)?;

    let mut summary = format!("{SUMMARY_HEADER}\n");
    let mut failures = String::from("value,seed,exit_code,error\n");
    for v in values {
        let cell: Vec<&CellRun> = runs.iter().filter(|r| &r.value == v).collect();
        let ok: Vec<&MetricsReport> = cell.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
        let pick = |f: fn(&MetricsReport) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
        let _ = writeln!(
            summary,
            "{axis},{v},{},{},{},{},{}",
            ok.len(),
            cell.len() - ok.len(),
            fmt_stat(&pick(|r| Some(r.r2_stage1))),
            fmt_stat(&pick(|r| Some(r.mcc_stage1))),
            fmt_stat(&pick(|r| r.mcc_stage2)),
        );
        for r in &cell {
            if let Err(e) = &r.outcome {
                let msg = e.to_string().replace(['"', '\n'], " ");
                let _ = writeln!(failures, "{v},{},{},\"{msg}\"", r.seed, e.exit_code());
            }
        }
    }
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (name, bytes) in [("runs.csv", runs_csv), ("summary.csv", summary.into_bytes()), ("failures.csv", failures.into_bytes())]
    {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    Ok(GridOutcome { dir, runs })
}
