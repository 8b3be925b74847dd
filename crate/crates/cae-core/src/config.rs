//! Key-value run configuration.
//!
//! The on-disk format is one `key = value` pair per line with `#` comments.
//! Lookups *consume* entries; after a component has taken everything it
//! understands, [`ConfigMap::assert_consumed`] rejects whatever is left, so a
//! typo in a config file fails the run instead of silently using a default.

use crate::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn new() -> ConfigMap {
        ConfigMap::default()
    }

    pub fn parse(text: &str) -> Result<ConfigMap> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if key.is_empty() {
                return Err(Error::config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        Ok(ConfigMap { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Removes and returns the raw value for `key`.
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Removes `key` and parses it, reporting the key in the error.
    pub fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::config(format!(
                    "key `{key}`: cannot parse `{raw}` as {}",
                    std::any::type_name::<T>()
                ))
            }),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fails if any entry was never consumed (unknown keys are errors).
    pub fn assert_consumed(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let keys: Vec<&str> = self.entries.keys().map(|k| k.as_str()).collect();
        Err(Error::config(format!(
            "unrecognized config keys: {}",
            keys.join(", ")
        )))
    }

    /// Serializes sorted by key; `parse(to_text(m))` reproduces `m`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }
}

/// Splits `"(a,b,...) (a,b,...)"` into groups of exactly `arity` numbers.
pub fn parse_tuples(text: &str, arity: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        if !rest.starts_with('(') {
            return Err(Error::config(format!("expected `(` in tuple list `{text}`")));
        }
        let Some(close) = rest.find(')') else {
            return Err(Error::config(format!("unclosed `(` in tuple list `{text}`")));
        };
        let body = &rest[1..close];
        let nums: Result<Vec<f64>> = body
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::config(format!("bad number `{p}` in `{text}`")))
            })
            .collect();
        let nums = nums?;
        if nums.len() != arity {
            return Err(Error::config(format!(
                "tuple `{}` has {} fields, expected {arity}",
                &rest[..=close],
                nums.len()
            )));
        }
        out.push(nums);
        rest = rest[close + 1..].trim_start();
    }
    Ok(out)
}

pub fn parse_cell(text: &str) -> Result<(i32, i32)> {
    let tuples = parse_tuples(text, 2)?;
    if tuples.len() != 1 {
        return Err(Error::config(format!("expected one (x,y) cell in `{text}`")));
    }
    cell_from(&tuples[0], text)
}

pub fn parse_cell_list(text: &str) -> Result<Vec<(i32, i32)>> {
    parse_tuples(text, 2)?
        .iter()
        .map(|t| cell_from(t, text))
        .collect()
}

fn cell_from(t: &[f64], src: &str) -> Result<(i32, i32)> {
    if t.iter().any(|v| v.fract() != 0.0) {
        return Err(Error::config(format!("cell coordinates in `{src}` must be integers")));
    }
    Ok((t[0] as i32, t[1] as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_skips_comments_and_blanks() {
        let cfg = ConfigMap::parse("# header\n\na = 1 # trailing\n b.c = (0,2) (3,4) \n").unwrap();
        let mut cfg = cfg;
        assert_eq!(cfg.take_parsed::<u32>("a").unwrap(), Some(1));
        assert_eq!(cfg.take("b.c").unwrap(), "(0,2) (3,4)");
        cfg.assert_consumed().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let cfg = ConfigMap::parse("env.sizzle = 5").unwrap();
        let err = cfg.assert_consumed().unwrap_err();
        assert!(err.to_string().contains("env.sizzle"));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        assert!(ConfigMap::parse("a = 1\na = 2").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ConfigMap::new();
        cfg.set("seed", 7);
        cfg.set("env.holes", "(0,2) (0,3)");
        let text = cfg.to_text();
        let back = ConfigMap::parse(&text).unwrap();
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn malformed_lines_fail() {
        assert!(ConfigMap::parse("just words").is_err());
        assert!(ConfigMap::parse("= value").is_err());
    }

    #[test]
    fn cells_and_tuples() {
        assert_eq!(parse_cell("(1, 6)").unwrap(), (1, 6));
        assert_eq!(
            parse_cell_list("(0,2) (0,3) (0,4)").unwrap(),
            vec![(0, 2), (0, 3), (0, 4)]
        );
        assert_eq!(
            parse_tuples("(3,7.5,12,7.5)", 4).unwrap(),
            vec![vec![3.0, 7.5, 12.0, 7.5]]
        );
        assert!(parse_cell("(1.5,2)").is_err());
        assert!(parse_tuples("(1,2", 2).is_err());
        assert!(parse_tuples("(1,2,3)", 2).is_err());
    }
}
