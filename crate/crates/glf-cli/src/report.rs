//! Tidy CSV outputs with a leading config-hash column.
//!
//! All floats are written with Rust's shortest round-trip formatting, so a
//! file is a pure function of the computed values — the bitwise
//! reproducibility contract rides on that.

use std::path::Path;

use glf_core::eval::MetricsReport;

use crate::error::{CliError, CliResult};
use crate::runner::EpochStats;

pub fn write_losses(path: &Path, hash: &str, stats: &[EpochStats]) -> CliResult<()> {
    let mut out = String::from("config_hash,epoch,l_ctr,l_dcm,l_lpm,total\n");
    for s in stats {
        out.push_str(&format!(
            "{hash},{},{},{},{},{}\n",
            s.epoch, s.mean.l_ctr, s.mean.l_dcm, s.mean.l_lpm, s.mean.total
        ));
    }
    write_file(path, &out)
}

pub fn write_metrics(path: &Path, hash: &str, report: &MetricsReport) -> CliResult<()> {
    let mut out = String::from("config_hash,");
    out.push_str(&MetricsReport::FIELD_NAMES.join(","));
    out.push('\n');
    out.push_str(hash);
    for v in report.values() {
        out.push(',');
        out.push_str(&v.to_string());
    }
    out.push('\n');
    write_file(path, &out)
}

pub fn read_metrics(path: &Path) -> CliResult<(String, MetricsReport)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("{}: empty metrics file", path.display())))?;
    let expect = format!("config_hash,{}", MetricsReport::FIELD_NAMES.join(","));
    if header != expect {
        return Err(CliError::Config(format!(
            "{}: unexpected metrics header",
            path.display()
        )));
    }
    let row = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("{}: missing metrics row", path.display())))?;
    let fields: Vec<&str> = row.split(',').collect();
    if fields.len() != 9 {
        return Err(CliError::Config(format!(
            "{}: expected 9 fields, got {}",
            path.display(),
            fields.len()
        )));
    }
    let parse = |s: &str| -> CliResult<f64> {
        s.parse()
            .map_err(|_| CliError::Config(format!("{}: bad float '{s}'", path.display())))
    };
    let report = MetricsReport {
        linear_acc: parse(fields[1])?,
        knn_acc: parse(fields[2])?,
        mean_ce: parse(fields[3])?,
        cond_variance: parse(fields[4])?,
        intra_compactness: parse(fields[5])?,
        inter_separability: parse(fields[6])?,
        alignment: parse(fields[7])?,
        uniformity: parse(fields[8])?,
    };
    Ok((fields[0].to_string(), report))
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::io(parent.display().to_string(), e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path.display().to_string(), e))
}
