//! Flat `key = value` configuration files.
//!
//! ```text
//! # estimate-quality sweep
//! strategies = nca, genie, fixed_rate
//! v = 1e4K          # a trailing K multiplies by the packet length k
//! axis = rho
//! values = 0, 0.2, 0.4, 0.6, 0.8, 1
//! seeds = 1, 2, 3
//! ```
//!
//! Overrides given as `key=value` strings are applied after the file, and the
//! last occurrence of a key wins. Unknown keys are errors.

use std::collections::BTreeMap;
use std::path::Path;

use crate::channel::ChannelMode;
use crate::engine::{Axis, ExperimentConfig, Strategy, UtilityKind};
use crate::error::{Error, Result};

/// A parsed configuration: one base experiment plus optional sweep settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub base: ExperimentConfig,
    pub axis: Option<Axis>,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub strategies: Vec<Strategy>,
}

const EXPERIMENT_KEYS: &[&str] = &[
    "strategy",
    "s_users",
    "v",
    "l_av",
    "rho",
    "k",
    "i_max",
    "p_av",
    "p_peak",
    "delta",
    "eps_power",
    "eps_overhead",
    "d_cap",
    "t_slots",
    "warmup_fraction",
    "seed",
    "channel_mode",
    "rho1_encoding_fix",
    "quadrature_nodes",
    "utility",
    "utility_alpha",
];
const SWEEP_KEYS: &[&str] = &["axis", "values", "seeds", "strategies"];

/// Every key accepted in a config file or override.
pub fn known_keys() -> impl Iterator<Item = &'static str> {
    EXPERIMENT_KEYS.iter().chain(SWEEP_KEYS).copied()
}

fn is_known(key: &str) -> bool {
    known_keys().any(|k| k == key)
}

/// Reads and parses `path`, then applies `overrides`.
pub fn load(path: &Path, overrides: &[String]) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse(&text, overrides)
}

/// Parses config text, then applies `overrides`.
pub fn parse(text: &str, overrides: &[String]) -> Result<ConfigFile> {
    let mut raw: BTreeMap<String, String> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
            line: i + 1,
            reason: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        if !is_known(key) {
            return Err(Error::UnknownKey(key.to_string()));
        }
        raw.insert(key.to_string(), value.trim().to_string());
    }
    for o in overrides {
        let (key, value) = o.split_once('=').ok_or_else(|| Error::BadValue {
            key: o.clone(),
            reason: "override must look like key=value".into(),
        })?;
        let key = key.trim();
        if !is_known(key) {
            return Err(Error::UnknownKey(key.to_string()));
        }
        raw.insert(key.to_string(), value.trim().to_string());
    }
    build(&raw)
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::BadValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| bad(key, format!("`{s}` is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, "must be finite"))
    }
}

/// A number, optionally suffixed with `K` to scale by the packet length.
fn parse_scaled(key: &str, s: &str, k: f64) -> Result<f64> {
    let s = s.trim();
    match s.strip_suffix('K') {
        Some(head) => Ok(parse_f64(key, head)? * k),
        None => parse_f64(key, s),
    }
}

fn parse_u64(key: &str, s: &str) -> Result<u64> {
    s.trim().parse().map_err(|_| bad(key, format!("`{s}` is not a non-negative integer")))
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(bad(key, format!("`{other}` is not a boolean"))),
    }
}

fn parse_auto(key: &str, s: &str) -> Result<Option<f64>> {
    if s.trim() == "auto" {
        Ok(None)
    } else {
        parse_f64(key, s).map(Some)
    }
}

fn list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

fn build(raw: &BTreeMap<String, String>) -> Result<ConfigFile> {
    let mut c = ExperimentConfig::default();
    let get = |k: &str| raw.get(k).map(String::as_str);

    // k first: `v` and sweep values may be written in units of it.
    if let Some(s) = get("k") {
        c.k = parse_f64("k", s)?;
    }
    c.v = 1e4 * c.k;
    for (key, s) in raw {
        let key = key.as_str();
        match key {
            "strategy" => c.strategy = s.parse()?,
            "s_users" => c.s_users = parse_u64(key, s)? as usize,
            "v" => c.v = parse_scaled(key, s, c.k)?,
            "l_av" => c.l_av = parse_f64(key, s)?,
            "rho" => c.rho = parse_f64(key, s)?,
            "i_max" => c.i_max = parse_f64(key, s)?,
            "p_av" => c.p_av = parse_f64(key, s)?,
            "p_peak" => c.p_peak = parse_f64(key, s)?,
            "delta" => c.delta = parse_auto(key, s)?,
            "eps_power" => c.eps_power = parse_auto(key, s)?,
            "eps_overhead" => c.eps_overhead = parse_f64(key, s)?,
            "d_cap" => c.d_cap = parse_auto(key, s)?,
            "t_slots" => c.t_slots = parse_u64(key, s)?,
            "warmup_fraction" => c.warmup_fraction = parse_f64(key, s)?,
            "seed" => c.seed = parse_u64(key, s)?,
            "channel_mode" => {
                c.channel_mode = match s.as_str() {
                    "ar1" => ChannelMode::Ar1,
                    "iid" => ChannelMode::Iid,
                    other => return Err(bad(key, format!("`{other}` is not ar1 or iid"))),
                }
            }
            "rho1_encoding_fix" => c.rho1_encoding_fix = parse_bool(key, s)?,
            "quadrature_nodes" => c.quadrature_nodes = parse_u64(key, s)? as usize,
            "utility" => {
                c.utility = match s.as_str() {
                    "log" => UtilityKind::Log,
                    "linear" => UtilityKind::Linear,
                    "isoelastic" => UtilityKind::Isoelastic,
                    other => return Err(bad(key, format!("unknown utility `{other}`"))),
                }
            }
            "utility_alpha" => c.utility_alpha = parse_f64(key, s)?,
            _ => {}
        }
    }
    // p_peak follows p_av unless given explicitly.
    if get("p_av").is_some() && get("p_peak").is_none() {
        c.p_peak = 4.0 * c.p_av;
    }
    c.validate()?;

    let axis = get("axis").map(str::parse::<Axis>).transpose()?;
    let values = match get("values") {
        Some(s) => list(s)
            .map(|v| parse_scaled("values", v, c.k))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    if axis.is_some() && values.is_empty() {
        return Err(bad("values", "a sweep axis needs at least one value"));
    }
    let seeds = match get("seeds") {
        Some(s) => list(s).map(|v| parse_u64("seeds", v)).collect::<Result<Vec<_>>>()?,
        None => vec![c.seed],
    };
    let strategies = match get("strategies") {
        Some(s) => list(s).map(str::parse).collect::<Result<Vec<Strategy>>>()?,
        None => vec![c.strategy],
    };
    if seeds.is_empty() || strategies.is_empty() {
        return Err(bad("seeds", "seeds and strategies must be non-empty"));
    }
    Ok(ConfigFile {
        base: c,
        axis,
        values,
        seeds,
        strategies,
    })
}
