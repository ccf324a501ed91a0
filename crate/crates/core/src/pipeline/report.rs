//! Report files: the accuracy grid, per-label reports, the shift comparison
//! and run timings. Everything except `timings.csv` is byte-deterministic.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::cell_order;
use super::phase2::CellReport;
use crate::error::{Error, Result};
use crate::eval::{fmt3, shift_report, ShiftReport};

pub const RESULTS_GRID: &str = "results_grid.csv";
pub const CLASS_REPORTS: &str = "class_reports.csv";
pub const SHIFT_REPORT: &str = "shift_report.csv";
pub const REPORTS_JSON: &str = "reports.json";
pub const TIMINGS: &str = "timings.csv";

const GRID_HEADER: [&str; 6] = ["model", "optimizer", "n_trials", "best_cv_error", "test1_accuracy", "test2_accuracy"];
const CLASS_HEADER: [&str; 11] = [
    "model",
    "optimizer",
    "label",
    "test1_precision",
    "test1_recall",
    "test1_f1",
    "test1_support",
    "test2_precision",
    "test2_recall",
    "test2_f1",
    "test2_support",
];
const SHIFT_HEADER: [&str; 10] = [
    "model",
    "optimizer",
    "label",
    "delta_precision",
    "delta_recall",
    "delta_f1",
    "test1_accuracy",
    "test2_accuracy",
    "delta_accuracy",
    "label1_more_robust",
];
const TIMING_HEADER: [&str; 5] = ["model", "optimizer", "hpo_wall_time_s", "refit_wall_time_s", "total_wall_time_s"];

#[derive(Serialize)]
struct JsonCell<'a> {
    #[serde(flatten)]
    cell: &'a CellReport,
    shift: ShiftReport,
}

fn csv_file(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn robust(flag: Option<bool>) -> String {
    flag.map_or_else(String::new, |b| b.to_string())
}

/// Writes all report files into `dir` (created if missing), rows sorted by
/// (model, optimizer), and returns their paths.
pub fn emit_reports(cells: &[CellReport], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut cells: Vec<&CellReport> = cells.iter().collect();
    cells.sort_by_key(|c| cell_order(c.model, c.optimizer));
    let id = |c: &CellReport| vec![c.model.to_string(), c.optimizer.to_string()];

    let grid = cells
        .iter()
        .map(|c| {
            let mut r = id(c);
            r.extend([c.n_trials.to_string(), fmt3(c.best_cv_error), fmt3(c.test1.accuracy), fmt3(c.test2.accuracy)]);
            r
        })
        .collect();
    let class = cells
        .iter()
        .flat_map(|c| {
            (0..2).map(move |l| {
                let (a, b) = (&c.test1.per_label[l], &c.test2.per_label[l]);
                let mut r = id(c);
                r.extend([l.to_string(), fmt3(a.precision), fmt3(a.recall), fmt3(a.f1), a.support.to_string()]);
                r.extend([fmt3(b.precision), fmt3(b.recall), fmt3(b.f1), b.support.to_string()]);
                r
            })
        })
        .collect();
    let shifts: Vec<ShiftReport> =
        cells.iter().map(|c| shift_report(&c.test1, &c.test2, c.model.name(), c.optimizer.name())).collect();
    let shift = shifts
        .iter()
        .flat_map(|s| {
            (0..2).map(move |l| {
                let d = &s.delta[l];
                let mut r = vec![s.model.clone(), s.optimizer.clone(), l.to_string()];
                r.extend([fmt3(d.precision), fmt3(d.recall), fmt3(d.f1)]);
                r.extend([fmt3(s.test1.accuracy), fmt3(s.test2.accuracy), fmt3(s.delta_accuracy)]);
                r.push(robust(s.label1_more_robust));
                r
            })
        })
        .collect();
    let timings = cells
        .iter()
        .map(|c| {
            let mut r = id(c);
            r.extend(
                [c.hpo_wall_time_s, c.refit_wall_time_s, c.hpo_wall_time_s + c.refit_wall_time_s]
                    .map(|t| format!("{t:.3}")),
            );
            r
        })
        .collect();

    let paths: Vec<PathBuf> =
        [RESULTS_GRID, CLASS_REPORTS, SHIFT_REPORT, REPORTS_JSON, TIMINGS].iter().map(|f| dir.join(f)).collect();
    csv_file(&paths[0], &GRID_HEADER, grid)?;
    csv_file(&paths[1], &CLASS_HEADER, class)?;
    csv_file(&paths[2], &SHIFT_HEADER, shift)?;
    let json: Vec<JsonCell> = cells.iter().zip(shifts).map(|(&cell, shift)| JsonCell { cell, shift }).collect();
    let mut text = serde_json::to_string_pretty(&json)?;
    text.push('\n');
    std::fs::write(&paths[3], text).map_err(|e| Error::io(&paths[3], e))?;
    csv_file(&paths[4], &TIMING_HEADER, timings)?;
    Ok(paths)
}
