//! Report emission and ingestion: detection records as text or CSV, truth
//! listings, and the metrics block.

use anyhow::{Context, Result};
use cbaa::metrics::{GroundTruth, MetricsReport};
use cbaa::SuperHostRecord;
use std::io::Write;
use std::net::Ipv4Addr;
use std::path::Path;

/// CSV layout: `ip,estimate,cs`, one detected host per row.
pub fn write_records_csv(records: &[SuperHostRecord], out: &mut dyn Write) -> Result<()> {
    writeln!(out, "ip,estimate,cs")?;
    for record in records {
        writeln!(
            out,
            "{},{},{}",
            Ipv4Addr::from(record.ip),
            record.estimate,
            record.cs
        )?;
    }
    Ok(())
}

pub fn write_records_text(
    records: &[SuperHostRecord],
    theta: u32,
    out: &mut dyn Write,
) -> Result<()> {
    writeln!(out, "detected {} super hosts (theta = {theta})", records.len())?;
    for record in records {
        writeln!(
            out,
            "  {:<15} estimate {:>10.1}  sketch {}",
            Ipv4Addr::from(record.ip).to_string(),
            record.estimate,
            record.cs
        )?;
    }
    Ok(())
}

/// Reads a report produced by [`write_records_csv`].
pub fn read_records_csv(path: &Path) -> Result<Vec<SuperHostRecord>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "ip,estimate,cs")) => {}
        Some((_, other)) => anyhow::bail!(
            "{}: expected header `ip,estimate,cs`, got `{other}`",
            path.display()
        ),
        None => return Ok(Vec::new()),
    }
    let mut records = Vec::new();
    for (number, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut parse = || -> Option<SuperHostRecord> {
            let ip: Ipv4Addr = fields.next()?.parse().ok()?;
            let estimate: f64 = fields.next()?.parse().ok()?;
            let cs: u32 = fields.next()?.parse().ok()?;
            fields.next().is_none().then_some(SuperHostRecord {
                ip: u32::from(ip),
                estimate,
                cs,
            })
        };
        records.push(parse().ok_or_else(|| {
            anyhow::anyhow!("{}: line {}: bad record `{line}`", path.display(), number + 1)
        })?);
    }
    Ok(records)
}

/// CSV layout: `ip,cardinality`, descending cardinality.
pub fn write_truth_csv(truth: &GroundTruth, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "ip,cardinality")?;
    for (ip, cardinality) in truth.super_hosts(1) {
        writeln!(out, "{},{cardinality}", Ipv4Addr::from(ip))?;
    }
    Ok(())
}

pub fn write_metrics_text(metrics: &MetricsReport, out: &mut dyn Write) -> Result<()> {
    writeln!(
        out,
        "truth {} super hosts, detected {}",
        metrics.truth_count, metrics.detected_count
    )?;
    writeln!(
        out,
        "missed {} (fnr {:.4})  spurious {} (fpr {:.4})  ftr {:.4}",
        metrics.missed, metrics.fnr, metrics.spurious, metrics.fpr, metrics.ftr
    )?;
    match metrics.precision {
        Some(p) => writeln!(out, "precision {p:.4} (true detections / detections)")?,
        None => writeln!(out, "precision undefined (nothing detected)")?,
    }
    if metrics.boundary > 0 {
        writeln!(
            out,
            "note: {} detected host(s) sit exactly on theta and count as both true and spurious",
            metrics.boundary
        )?;
    }
    Ok(())
}
