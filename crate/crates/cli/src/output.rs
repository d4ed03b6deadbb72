//! Report and CSV writers.

use std::fs;
use std::path::{Path, PathBuf};

use eto::evolver::RunTrace;
use eto::lab::race::RaceRow;
use eto::lab::{Cell, ExperimentReport, Table};
use serde::Serialize;

use crate::CliError;

/// Float format for every CSV: 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::io(path, e))
}

pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn cell(c: &Cell) -> String {
    match c {
        Cell::Text(s) => s.clone(),
        Cell::Int(i) => i.to_string(),
        Cell::Float(x) => format_float(*x),
    }
}

pub fn write_table(dir: &Path, t: &Table) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{}.csv", t.name));
    write_csv(&path, &t.columns, t.rows.iter().map(|r| r.iter().map(cell)))?;
    Ok(path)
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<(), CliError> {
    write_csv(
        path,
        &["eval_count", "best_objective"],
        trace
            .best_per_generation
            .iter()
            .map(|&(n, f)| [n.to_string(), format_float(f)]),
    )
}

pub fn write_race_rows(path: &Path, rows: &[RaceRow]) -> Result<(), CliError> {
    write_csv(
        path,
        &[
            "race",
            "scenario",
            "baseline_evaluations",
            "transfer_evaluations",
            "transfers",
            "identical_trace",
        ],
        rows.iter().map(|r| {
            [
                r.race.to_string(),
                r.scenario.name().to_string(),
                r.baseline_evaluations.to_string(),
                r.transfer_evaluations.to_string(),
                r.transfers.to_string(),
                (r.identical_trace as u8).to_string(),
            ]
        }),
    )
}

#[derive(Serialize)]
struct Stamped<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<&'a str>,
    #[serde(flatten)]
    report: &'a ExperimentReport,
}

/// JSON report, with a leading `generated_at` field unless `stamp` is None.
pub fn write_report(dir: &Path, report: &ExperimentReport, stamp: Option<&str>) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{}.json", report.experiment));
    let mut text = serde_json::to_string_pretty(&Stamped {
        generated_at: stamp,
        report,
    })
    .expect("reports serialize");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn write_summary(dir: &Path, reports: &[ExperimentReport], stamp: Option<&str>) -> Result<PathBuf, CliError> {
    let path = dir.join("summary.txt");
    let mut text = String::new();
    if let Some(s) = stamp {
        text.push_str(&format!("# generated {s}\n"));
    }
    for r in reports {
        text.push_str(&r.to_text());
    }
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-2.5), "-2.5000000000000000e0");
        let x = std::f64::consts::PI;
        assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_dialect() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, &["a", "b"], [[format_float(1.0), "x".to_string()]]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text, "a,b\n1.0000000000000000e0,x\n");
    }
}
