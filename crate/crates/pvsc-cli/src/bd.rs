//! The `bd` subcommand: reads two summary CSVs, builds rate–quality curves
//! from their (cbr, quality) columns, and prints the relative rate delta.

use std::path::Path;

use pvsc_core::metrics::{bd_cbr, RateQualityCurve};

use crate::config::CliError;

/// Parses a float CSV field, accepting the writer's `inf` forms.
fn parse_float(field: &str) -> Option<f64> {
    match field {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        other => other.parse().ok(),
    }
}

/// Loads (cbr, quality) pairs from a summary CSV by header name.
pub fn load_curve(path: &Path, metric: &str) -> Result<RateQualityCurve, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::new(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::new(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::new(format!("{}: no `{name}` column in header", path.display()))
        })
    };
    let cbr_col = col("cbr")?;
    let metric_col = col(metric)?;

    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // Header is line 1; data starts at line 2.
        let line = i + 2;
        let record =
            record.map_err(|e| CliError::new(format!("{}: line {line}: {e}", path.display())))?;
        let field = |c: usize| {
            record.get(c).ok_or_else(|| {
                CliError::new(format!("{}: line {line}: missing field", path.display()))
            })
        };
        let cbr = parse_float(field(cbr_col)?).ok_or_else(|| {
            CliError::new(format!(
                "{}: line {line}: bad cbr value {:?}",
                path.display(),
                record.get(cbr_col).unwrap_or("")
            ))
        })?;
        let quality = parse_float(field(metric_col)?).ok_or_else(|| {
            CliError::new(format!(
                "{}: line {line}: bad {metric} value {:?}",
                path.display(),
                record.get(metric_col).unwrap_or("")
            ))
        })?;
        points.push((cbr, quality));
    }
    RateQualityCurve::new(points, metric)
        .map_err(|e| CliError::new(format!("{}: {e}", path.display())))
}

/// Computes and formats the BD rate delta between two summary CSVs.
pub fn bd_between(anchor: &Path, test: &Path, metric: &str) -> Result<String, CliError> {
    let anchor_curve = load_curve(anchor, metric)?;
    let test_curve = load_curve(test, metric)?;
    let delta = bd_cbr(&anchor_curve, &test_curve)?;
    Ok(format!("BD-CBR ({metric}): {delta:+.4}%"))
}
