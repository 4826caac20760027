//! CSV and JSON serialization of run reports.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::MetricsReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Float with at most 9 significant digits, in a form that parses back.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    let a = rounded.abs();
    if (1e-4..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "auto".to_string(), format_float)
}

fn per_user(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

fn padded(values: &[f64], n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| values.get(i).map_or_else(String::new, |&v| format_float(v)))
}

/// CSV text: header plus one row per report. Per-user columns run to the
/// largest user count present; rows with fewer users leave them empty.
pub fn to_csv(reports: &[MetricsReport]) -> Result<String> {
    let s_max = reports.iter().map(|r| r.config.s_users).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["strategy", "s_users", "v", "l_av", "rho", "seed", "t_slots", "total_utility", "spectral_efficiency_total"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(per_user("throughput", s_max));
    header.push("avg_power".into());
    header.extend(per_user("avg_block_size", s_max));
    header.push("ack_fraction".into());
    header.extend(per_user("max_queue", s_max));
    header.push("violations".into());
    header.extend(
        [
            "k",
            "i_max",
            "p_av",
            "p_peak",
            "delta",
            "eps_power",
            "eps_overhead",
            "d_cap",
            "warmup_fraction",
            "channel_mode",
            "rho1_encoding_fix",
            "quadrature_nodes",
            "utility",
            "utility_alpha",
            "ack_count",
            "scheduled_count",
            "feedback_count",
            "outage_count",
            "max_z",
            "violations_queue_bound",
            "violations_power_support",
            "violations_negativity",
            "failed_at_slot",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    header.extend(per_user("delivered", s_max));
    w.write_record(&header).map_err(csv_err)?;

    for r in reports {
        let c = &r.config;
        let mut row = vec![
            c.strategy.name().to_string(),
            c.s_users.to_string(),
            format_float(c.v),
            format_float(c.l_av),
            format_float(c.rho),
            c.seed.to_string(),
            c.t_slots.to_string(),
            format_float(r.total_utility),
            format_float(r.spectral_efficiency),
        ];
        row.extend(padded(&r.per_user_throughput, s_max));
        row.push(format_float(r.avg_power));
        row.extend(padded(&r.avg_block_size, s_max));
        row.push(format_float(r.ack_fraction));
        row.extend(padded(&r.max_queue, s_max));
        row.push(r.violations.total().to_string());
        row.extend([
            format_float(c.k),
            format_float(c.i_max),
            format_float(c.p_av),
            format_float(c.p_peak),
            opt(c.delta),
            opt(c.eps_power),
            format_float(c.eps_overhead),
            opt(c.d_cap),
            format_float(c.warmup_fraction),
            serde_plain(&c.channel_mode),
            c.rho1_encoding_fix.to_string(),
            c.quadrature_nodes.to_string(),
            serde_plain(&c.utility),
            format_float(c.utility_alpha),
            r.ack_count.to_string(),
            r.scheduled_count.to_string(),
            r.feedback_count.to_string(),
            r.outage_count.to_string(),
            format_float(r.max_z),
            r.violations.queue_bound.to_string(),
            r.violations.power_support.to_string(),
            r.violations.negativity.to_string(),
            r.failure.as_ref().map_or_else(String::new, |f| f.slot.to_string()),
        ]);
        row.extend(padded(&r.delivered_throughput, s_max));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: "<csv>".into(),
        reason: e.to_string(),
    }
}

/// JSON array of report objects at full precision.
pub fn to_json(reports: &[MetricsReport]) -> Result<String> {
    serde_json::to_string_pretty(reports).map_err(|e| Error::Io {
        path: "<json>".into(),
        reason: e.to_string(),
    })
}

pub fn from_json(text: &str) -> Result<Vec<MetricsReport>> {
    serde_json::from_str(text).map_err(|e| Error::Io {
        path: "<json>".into(),
        reason: e.to_string(),
    })
}

pub fn render(reports: &[MetricsReport], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => to_csv(reports),
        OutputFormat::Json => to_json(reports),
    }
}

/// Writes `reports` to `path`.
pub fn write_results(reports: &[MetricsReport], path: &Path, format: OutputFormat) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::InvalidParameter {
            name: "reports",
            reason: "nothing to write".into(),
        });
    }
    let text = render(reports, format)?;
    let io = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}
