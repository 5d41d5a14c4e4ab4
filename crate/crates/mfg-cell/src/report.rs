//! Samples tables and summary documents.
//!
//! The samples file is comma-delimited text with LF line endings and a fixed
//! header; reals are written in shortest round-trip form, so a written table
//! re-reads bit-identically. A companion summary (structured text) carries
//! the audit verdicts and refinement fits.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::effective::EffectiveSample;
use crate::error::ConfigError;
use crate::newton::SolveDiagnostics;
use crate::sweep::{RefinementFit, SliceRow, SweepReport};

/// Exact header of a samples table.
pub const SAMPLES_HEADER: &str =
    "P,alpha,Hbar,bbar,dH_dP,R,E,relation_error,converged,iterations,residual_norm";

fn io_err(path: &Path, source: std::io::Error) -> ConfigError {
    ConfigError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Render sample rows as a samples table (header + one line per sample).
pub fn samples_to_string(samples: &[EffectiveSample]) -> String {
    let mut out = String::with_capacity(64 * (samples.len() + 1));
    out.push_str(SAMPLES_HEADER);
    out.push('\n');
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            s.p,
            s.alpha,
            s.hbar,
            s.bbar,
            s.dh_dp,
            s.r,
            s.e,
            s.relation_error,
            s.diagnostics.converged,
            s.diagnostics.iterations,
            s.diagnostics.final_residual_norm,
        ));
    }
    out
}

/// Render the companion summary document.
pub fn summary_to_string(report: &SweepReport, generated_at: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("generated_at: {generated_at}\n"));
    out.push_str(&format!("grid_N: {}\n", report.grid_n));
    out.push_str(&format!(
        "P_range: {} .. {} ({})\n",
        report.p_values.first().unwrap_or(&f64::NAN),
        report.p_values.last().unwrap_or(&f64::NAN),
        report.p_values.len()
    ));
    out.push_str(&format!(
        "alpha_range: {} .. {} ({})\n",
        report.alpha_values.first().unwrap_or(&f64::NAN),
        report.alpha_values.last().unwrap_or(&f64::NAN),
        report.alpha_values.len()
    ));
    out.push_str(&format!("points: {}\n", report.samples.len()));
    out.push_str(&format!("failed: {}\n", report.failed_count()));
    out.push_str("\n[audits]\n");
    if report.audits.is_empty() {
        out.push_str("(none)\n");
    }
    for audit in &report.audits {
        out.push_str(&format!(
            "{}: {} (worst excess {:e} at {})\n",
            audit.name,
            if audit.passed { "PASS" } else { "FAIL" },
            audit.worst_violation,
            audit.location
        ));
    }
    out.push_str("\n[refinement]\n");
    if report.refinement_fits.is_empty() {
        out.push_str("(none)\n");
    }
    for fit in &report.refinement_fits {
        let order = fit
            .fitted_order
            .map(|o| format!("{o:.3}"))
            .unwrap_or_else(|| "-".into());
        let change = fit
            .last_rel_change
            .map(|c| format!("{c:.3e}"))
            .unwrap_or_else(|| "-".into());
        let ns: Vec<String> = fit.rows.iter().map(|r| r.0.to_string()).collect();
        out.push_str(&format!(
            "{}: order {} last_rel_change {} over N = {}\n",
            fit.quantity,
            order,
            change,
            ns.join(",")
        ));
    }
    out
}

/// Companion summary path: same location with extension `summary.txt`.
pub fn summary_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("summary.txt")
}

/// Write the samples table and its companion summary document.
pub fn write_samples(report: &SweepReport, path: &Path) -> Result<(), ConfigError> {
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(samples_to_string(&report.samples).as_bytes())
        .map_err(|e| io_err(path, e))?;
    let generated_at = chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string();
    let spath = summary_path(path);
    fs::write(&spath, summary_to_string(report, &generated_at)).map_err(|e| io_err(&spath, e))?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(
    field: &str,
    name: &str,
    lineno: usize,
) -> Result<T, ConfigError> {
    field.parse().map_err(|_| {
        ConfigError::BadSamples(format!("line {lineno}: bad {name} value `{field}`"))
    })
}

/// Parse a samples table (header + rows) back into sample records.
pub fn parse_samples(text: &str) -> Result<Vec<EffectiveSample>, ConfigError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == SAMPLES_HEADER => {}
        other => {
            return Err(ConfigError::BadSamples(format!(
                "bad header: {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut samples = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(ConfigError::BadSamples(format!(
                "line {lineno}: expected 11 fields, got {}",
                fields.len()
            )));
        }
        let converged: bool = parse_field(fields[8], "converged", lineno)?;
        samples.push(EffectiveSample {
            p: parse_field(fields[0], "P", lineno)?,
            alpha: parse_field(fields[1], "alpha", lineno)?,
            hbar: parse_field(fields[2], "Hbar", lineno)?,
            bbar: parse_field(fields[3], "bbar", lineno)?,
            dh_dp: parse_field(fields[4], "dH_dP", lineno)?,
            r: parse_field(fields[5], "R", lineno)?,
            e: parse_field(fields[6], "E", lineno)?,
            relation_error: parse_field(fields[7], "relation_error", lineno)?,
            diagnostics: SolveDiagnostics {
                iterations: parse_field(fields[9], "iterations", lineno)?,
                final_residual_norm: parse_field(fields[10], "residual_norm", lineno)?,
                converged,
                step_history: Vec::new(),
            },
        });
    }
    Ok(samples)
}

/// Read a samples table from disk.
pub fn read_samples(path: &Path) -> Result<Vec<EffectiveSample>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_samples(&text)
}

/// Render a refinement study as a small table.
pub fn refinement_to_string(fit: &RefinementFit) -> String {
    let mut out = String::from("N,h,value\n");
    for &(n, h, v) in &fit.rows {
        out.push_str(&format!("{n},{h},{v}\n"));
    }
    out
}

/// Render an asymptotic slice as a table.
pub fn slice_to_string(rows: &[SliceRow]) -> String {
    let mut out = String::from("P,Hbar_over_P2,drift_gap_rel\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            row.p, row.hbar_over_p2, row.drift_gap_rel
        ));
    }
    out
}
