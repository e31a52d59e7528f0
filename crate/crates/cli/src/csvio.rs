//! CSV outputs: the training log, metric reports and denoised signals.

use std::path::Path;

use eegdir_core::metrics::{MetricsReport, MetricsRow};
use eegdir_core::train::LogRow;

use crate::error::{Error, Result};
use crate::fsio;

pub const LOG_HEADER: [&str; 3] = ["epoch", "step", "loss"];
pub const REPORT_HEADER: [&str; 5] = [
    "snr_db",
    "rrmse_temporal",
    "rrmse_spectral",
    "cc",
    "n_samples",
];

fn to_bytes(header: Option<&[&str]>, rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_writer(Vec::new());
    // writing into a Vec cannot fail
    if let Some(h) = header {
        w.write_record(h).expect("in-memory csv");
    }
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

pub fn log_bytes(rows: &[LogRow]) -> Vec<u8> {
    to_bytes(
        Some(&LOG_HEADER),
        rows.iter()
            .map(|r| vec![r.epoch.to_string(), r.step.to_string(), r.loss.to_string()]),
    )
}

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    fsio::write_atomic(path, &log_bytes(rows))
}

fn report_row(r: &MetricsRow) -> Vec<String> {
    vec![
        r.snr_db
            .map_or_else(|| "all".to_string(), |s| s.to_string()),
        r.rrmse_temporal.to_string(),
        r.rrmse_spectral.to_string(),
        r.cc.to_string(),
        r.n_samples.to_string(),
    ]
}

/// Per-SNR rows in ascending order followed by the `all` row.
pub fn report_bytes(report: &MetricsReport) -> Vec<u8> {
    to_bytes(
        Some(&REPORT_HEADER),
        report.rows.iter().chain([&report.all]).map(report_row),
    )
}

pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    fsio::write_atomic(path, &report_bytes(report))
}

/// Parses a report written by [`write_report`].
pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let bytes = fsio::read(path)?;
    let bad = |m: String| Error::Failed(format!("{}: {m}", path.display()));
    let mut rd = csv::Reader::from_reader(bytes.as_slice());
    let header = rd.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.iter().ne(REPORT_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("{:?}: {e}", &rec[i])))
        };
        rows.push(MetricsRow {
            snr_db: match &rec[0] {
                "all" => None,
                s => Some(s.parse().map_err(|e| bad(format!("{s:?}: {e}")))?),
            },
            rrmse_temporal: num(1)?,
            rrmse_spectral: num(2)?,
            cc: num(3)?,
            n_samples: rec[4]
                .parse()
                .map_err(|e| bad(format!("{:?}: {e}", &rec[4])))?,
        });
    }
    match rows.pop() {
        Some(all) if all.snr_db.is_none() => Ok(MetricsReport { rows, all }),
        _ => Err(bad("missing `all` row".into())),
    }
}

/// One signal per row, no header.
pub fn write_signals(path: &Path, signals: &[Vec<f64>]) -> Result<()> {
    fsio::write_atomic(
        path,
        &to_bytes(
            None,
            signals
                .iter()
                .map(|s| s.iter().map(|v| v.to_string()).collect()),
        ),
    )
}

/// Reads raw signals, one per row, no header. Blank lines are skipped.
pub fn read_signals(path: &Path) -> Result<Vec<Vec<f64>>> {
    let bytes = fsio::read(path)?;
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::Failed(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        out.push(row);
    }
    Ok(out)
}
