//! CSV artifacts: '.' decimal separator, '\n' line endings, mandatory header.
//! Floats use the shortest representation that parses back to the same value.

use std::path::Path;

use orthowgan::linalg::Matrix;
use orthowgan::wgan::MetricLog;

use crate::error::CliError;

/// Column order of metrics.csv.
pub const METRIC_COLUMNS: [&str; 9] = [
    "iter",
    "wall_clock_s",
    "critic_loss",
    "gen_loss",
    "gen_grad_norm",
    "lipschitz_est",
    "interp_penalty",
    "mean_gram_dev",
    "iters_per_sec",
];

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes `header` and `rows` to `path`.
pub fn write_table<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::format(path, e))?;
    w.write_record(header).map_err(|e| CliError::format(path, e))?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(row.iter().map(|s| s.as_ref())).map_err(|e| CliError::format(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// metrics.csv rows; the two timing columns stay empty unless `log_timing`.
pub fn metric_rows(log: &MetricLog, log_timing: bool) -> Vec<Vec<String>> {
    log.rows
        .iter()
        .map(|r| {
            let timing = |v: f64| if log_timing { fmt_f64(v) } else { String::new() };
            vec![
                r.iter.to_string(),
                timing(r.wall_clock_s),
                fmt_f64(r.critic_loss),
                fmt_f64(r.gen_loss),
                fmt_f64(r.gen_grad_norm),
                fmt_opt(r.lipschitz_est),
                fmt_opt(r.interp_penalty),
                fmt_opt(r.mean_gram_dev),
                timing(r.iters_per_sec),
            ]
        })
        .collect()
}

pub fn write_metrics(path: &Path, log: &MetricLog, log_timing: bool) -> Result<(), CliError> {
    write_table(path, &METRIC_COLUMNS, &metric_rows(log, log_timing))
}

/// Reads a headed CSV of 2-D points. Any other column count is an error.
pub fn read_points(path: &Path) -> Result<Option<Matrix>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::format(path, e))?;
    let width = r.headers().map_err(|e| CliError::format(path, e))?.len();
    if width != 2 {
        return Err(CliError::format(path, format!("expected 2-D points (2 columns), found {width} columns")));
    }
    let mut data = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::format(path, e))?;
        if rec.len() != 2 {
            return Err(CliError::format(path, format!("row {}: expected 2 values, found {}", i + 1, rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|e| CliError::format(path, format!("row {}: '{field}': {e}", i + 1)))?;
            data.push(v);
        }
    }
    if data.is_empty() {
        return Ok(None);
    }
    let n = data.len() / 2;
    Matrix::new(n, 2, data).map(Some).map_err(|e| CliError::format(path, e))
}
