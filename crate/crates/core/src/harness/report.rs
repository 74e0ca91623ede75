//! CSV, JSON and gnuplot output of an [`ExperimentReport`].

use super::{ExperimentReport, ReportRow};
use crate::{Error, Result};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Column names of the CSV table, in order.
pub const CSV_HEADER: [&str; 8] = ["epsilon", "E_e1", "E_v_part", "E_w_part", "pe_residual", "sns_residual", "iterations", "wall_ms"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    /// Whitespace-separated `ε E(ε)` table for a log-log plot.
    Gnuplot,
}

impl ReportFormat {
    pub fn file_name(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "convergence.csv",
            ReportFormat::Json => "convergence.json",
            ReportFormat::Gnuplot => "convergence.dat",
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    epsilon: f64,
    e_e1: Option<f64>,
    e_v_part: Option<f64>,
    e_w_part: Option<f64>,
    pe_residual: f64,
    sns_residual: Option<f64>,
    iterations: usize,
    wall_ms: u64,
}

impl From<&ReportRow> for CsvRow {
    fn from(r: &ReportRow) -> Self {
        CsvRow {
            epsilon: r.epsilon,
            e_e1: r.e_e1,
            e_v_part: r.e_v_part,
            e_w_part: r.e_w_part,
            pe_residual: r.pe_residual,
            sns_residual: r.sns_residual,
            iterations: r.iterations,
            wall_ms: r.wall_ms,
        }
    }
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Writes the CSV table; the header is written even without rows.
pub fn write_csv<W: Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &report.rows {
        w.serialize(CsvRow::from(r)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_gnuplot<W: Write>(report: &ExperimentReport, mut out: W) -> Result<()> {
    writeln!(out, "# epsilon E_e1 E_v_part E_w_part")?;
    if let Some(s) = report.slope {
        writeln!(out, "# fitted slope {s:.6}")?;
    }
    for r in report.rows.iter().filter(|r| r.failure.is_none()) {
        if let (Some(e), Some(v), Some(w)) = (r.e_e1, r.e_v_part, r.e_w_part) {
            writeln!(out, "{:.17e} {e:.17e} {v:.17e} {w:.17e}", r.epsilon)?;
        }
    }
    Ok(())
}

/// Writes the requested formats into `dir`, creating it if needed, and
/// returns the written paths.
pub fn emit_report(report: &ExperimentReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    let mut written = Vec::new();
    for f in formats {
        let path = dir.join(f.file_name());
        let file = BufWriter::new(File::create(&path).map_err(io_at(&path))?);
        match f {
            ReportFormat::Csv => write_csv(report, file)?,
            ReportFormat::Json => {
                let mut file = file;
                serde_json::to_writer_pretty(&mut file, report).map_err(|e| Error::Io(e.into()))?;
                writeln!(file)?;
            }
            ReportFormat::Gnuplot => write_gnuplot(report, file)?,
        }
        written.push(path);
    }
    Ok(written)
}

/// Reads a report written in the JSON format.
pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SimConfig;

    fn sample_rows() -> Vec<ReportRow> {
        [(0.2, 0.31), (0.1, 0.16), (0.05, 0.079)]
            .iter()
            .map(|&(eps, e)| ReportRow {
                epsilon: eps,
                e_e1: Some(e),
                e_v_part: Some(0.9 * e),
                e_w_part: Some(0.1 * e),
                pe_residual: 1e-14,
                sns_residual: Some(3e-9),
                iterations: 7,
                wall_ms: 12,
                picard_max_ratio: Some(0.05),
                subintervals: 1,
                direct_e1: Some(1.01 * e),
                discretization_error: Some(0.01 * e),
                paths_agree: Some(true),
                excluded: false,
                failure: None,
            })
            .collect()
    }

    #[test]
    fn empty_sweep_gives_header_only_csv() {
        let rep = ExperimentReport::new(SimConfig { epsilons: vec![], ..SimConfig::default() }, vec![]);
        let mut buf = Vec::new();
        write_csv(&rep, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
        assert!(rep.slope.is_none());
    }

    #[test]
    fn files_round_trip() {
        let dir = std::env::temp_dir().join(format!("hydrolimit-report-{}", std::process::id()));
        let rep = ExperimentReport::new(SimConfig::default(), sample_rows());
        let paths = emit_report(&rep, &dir, &[ReportFormat::Csv, ReportFormat::Json, ReportFormat::Gnuplot]).unwrap();
        assert_eq!(read_report(&paths[1]).unwrap(), rep);
        let mut rdr = csv::Reader::from_path(&paths[0]).unwrap();
        assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER.to_vec());
        let recs: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[1][1].parse::<f64>().unwrap(), 0.16);
        let dat = std::fs::read_to_string(&paths[2]).unwrap();
        assert_eq!(dat.lines().filter(|l| !l.starts_with('#')).count(), 3);
        let json = std::fs::read_to_string(&paths[1]).unwrap();
        assert!(json.contains("\"slope\""));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn slope_key_absent_below_three_rows() {
        let mut rows = sample_rows();
        rows.truncate(2);
        let rep = ExperimentReport::new(SimConfig::default(), rows);
        let json = serde_json::to_string(&rep).unwrap();
        assert!(!json.contains("\"slope\""));
        let back: ExperimentReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn unwritable_directory_is_an_io_error() {
        let file = std::env::temp_dir().join(format!("hydrolimit-blocker-{}", std::process::id()));
        std::fs::write(&file, b"x").unwrap();
        let rep = ExperimentReport::new(SimConfig::default(), vec![]);
        assert!(matches!(emit_report(&rep, &file.join("sub"), &[ReportFormat::Csv]), Err(Error::Io(_))));
        std::fs::remove_file(&file).unwrap();
    }
}
