//! Sketch parameter files: `key=value` lines, `#` comments. Any key not
//! present keeps its default, so a file may override just a seed or just the
//! geometry.
//!
//! Keys: `r`, `g`, `cbn` (comma list), `clbs` (comma list), `mangle_a`,
//! `mangle_b`, `bv_seed`, `va_seeds` (comma list, may be empty). Integers
//! accept a `0x` prefix.

use anyhow::{bail, Context, Result};
use cbaa::SketchConfig;
use std::path::Path;

pub fn load(path: Option<&Path>) -> Result<SketchConfig> {
    let Some(path) = path else {
        return Ok(SketchConfig::default());
    };
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config = parse(&text).with_context(|| format!("in {}", path.display()))?;
    config
        .validate()
        .with_context(|| format!("in {}", path.display()))?;
    Ok(config)
}

fn parse(text: &str) -> Result<SketchConfig> {
    let mut config = SketchConfig::default();
    for (number, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key=value, got `{line}`", number + 1);
        };
        let (key, value) = (key.trim(), value.trim());
        let fail = |what: &str| anyhow::anyhow!("line {}: bad {what} `{value}`", number + 1);
        match key {
            "r" => config.r = int(value).ok_or_else(|| fail("r"))? as u8,
            "g" => config.g = int(value).ok_or_else(|| fail("g"))? as u32,
            "cbn" => config.cbn = int_list(value).ok_or_else(|| fail("cbn list"))?,
            "clbs" => config.clbs = int_list(value).ok_or_else(|| fail("clbs list"))?,
            "mangle_a" => config.mangle_a = int(value).ok_or_else(|| fail("mangle_a"))? as u32,
            "mangle_b" => config.mangle_b = int(value).ok_or_else(|| fail("mangle_b"))? as u32,
            "bv_seed" => config.bv_seed = int(value).ok_or_else(|| fail("bv_seed"))? as u32,
            "va_seeds" => {
                config.va_seeds = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| int(v.trim()).map(|x| x as u32))
                        .collect::<Option<_>>()
                        .ok_or_else(|| fail("va_seeds list"))?
                }
            }
            other => bail!("line {}: unknown key `{other}`", number + 1),
        }
    }
    Ok(config)
}

fn int(s: &str) -> Option<u64> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

fn int_list(s: &str) -> Option<Vec<u8>> {
    s.split(',')
        .map(|v| int(v.trim()).and_then(|x| u8::try_from(x).ok()))
        .collect()
}
