//! Line-oriented `key = value` run configuration.
//!
//! ```text
//! n = 1
//! grid = 64
//! psi = cos 1,0 0.8
//! r = 0.05
//! ```
//!
//! `psi` may repeat; `#` starts a comment.

use std::path::Path;

use crate::continuity::{JacobianMode, SolveConfig};
use crate::error::{Error, Result};
use crate::grid::{FourierTerm, Harmonic};

fn invalid(line: usize, message: impl Into<String>) -> Error {
    Error::InvalidConfig {
        line,
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| invalid(line, format!("cannot parse {key} value {value:?}")))
}

fn flag(line: usize, key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(line, format!("{key} expects on/off, got {value:?}"))),
    }
}

/// `cos 1,0 0.8` or `sin 0,2 0.25`.
pub fn parse_term(text: &str) -> std::result::Result<FourierTerm, String> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let [kind, wave, amp] = parts.as_slice() else {
        return Err(format!("expected `cos|sin k1,k2,... amplitude`, got {text:?}"));
    };
    let harmonic = match *kind {
        "cos" => Harmonic::Cos,
        "sin" => Harmonic::Sin,
        other => return Err(format!("unknown harmonic {other:?}")),
    };
    let wavevector = wave
        .split(',')
        .map(|k| k.trim().parse::<i32>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| format!("bad wavevector {wave:?}"))?;
    let amplitude = amp.parse::<f64>().map_err(|_| format!("bad amplitude {amp:?}"))?;
    if !amplitude.is_finite() {
        return Err(format!("amplitude must be finite, got {amp}"));
    }
    Ok(FourierTerm {
        harmonic,
        wavevector,
        amplitude,
    })
}

pub fn parse_config(text: &str) -> Result<SolveConfig> {
    let mut n = None;
    let mut points = None;
    let mut psi = Vec::new();
    let mut r = None;
    let mut cfg = SolveConfig::new(1, 64, Vec::new(), 1.0);

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(invalid(line, format!("expected `key = value`, got {content:?}")));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "n" => n = Some(number::<usize>(line, key, value)?),
            "grid" => points = Some(number::<usize>(line, key, value)?),
            "psi" => psi.push(parse_term(value).map_err(|m| invalid(line, m))?),
            "r" => r = Some(number::<f64>(line, key, value)?),
            "base_order" => cfg.base_order = number(line, key, value)?,
            "tol_linear" => cfg.linear.rel_tol = number(line, key, value)?,
            "tol_residual" => cfg.tol_residual = number(line, key, value)?,
            "max_iter" => cfg.max_fixed_point_iterations = number(line, key, value)?,
            "damping" => cfg.damping_enabled = flag(line, key, value)?,
            "dealias" => cfg.dealias = flag(line, key, value)?,
            "jacobian" => {
                cfg.jacobian = match value.to_ascii_lowercase().as_str() {
                    "frozen" => JacobianMode::Frozen,
                    "newton" => JacobianMode::Newton,
                    _ => return Err(invalid(line, format!("unknown jacobian mode {value:?}"))),
                }
            }
            _ => return Err(invalid(line, format!("unknown key {key:?}"))),
        }
    }

    cfg.n = n.unwrap_or(1);
    if !(1..=2).contains(&cfg.n) {
        return Err(invalid(0, format!("n must be 1 or 2, got {}", cfg.n)));
    }
    cfg.points = points.unwrap_or(if cfg.n == 1 { 64 } else { 16 });
    cfg.r = r.ok_or_else(|| invalid(0, "missing required key `r`"))?;
    let dims = 2 * cfg.n;
    if let Some(t) = psi.iter().find(|t| t.wavevector.len() != dims) {
        return Err(invalid(
            0,
            format!("psi wavevector {:?} needs {dims} components", t.wavevector),
        ));
    }
    cfg.psi = psi;
    cfg.validate().map_err(|e| invalid(0, e.to_string()))?;
    cfg.grid().map_err(|e| invalid(0, e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SolveConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
