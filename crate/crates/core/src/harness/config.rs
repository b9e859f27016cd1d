//! Plain-text configuration: one `key = value` per line, `#` starts a
//! comment, list values are separated by `|`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::io::parse_free;
use crate::model::{FreeMask, Theta};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Later values win; used for command-line overrides.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Rejects keys outside `allowed`, catching typos.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::Config(format!("unknown key `{k}`; expected one of {}", allowed.join(", ")))),
            None => Ok(()),
        }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))))
            .transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| v.split('|').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.list(key) {
            None => Ok(default.to_vec()),
            Some(items) => items
                .iter()
                .map(|s| s.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`"))))
                .collect(),
        }
    }

    pub fn usize_list_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.list(key) {
            None => Ok(default.to_vec()),
            Some(items) => items
                .iter()
                .map(|s| s.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`"))))
                .collect(),
        }
    }

    /// A parameter triple `mu, sigma2, tau2` with the free mask from
    /// `free_key` (default: all free).
    pub fn theta_or(&self, key: &str, free_key: &str, default: Theta) -> Result<Theta> {
        let free = match self.get(free_key) {
            Some(text) => parse_free(text)?,
            None => default.free,
        };
        match self.get(key) {
            None => Ok(Theta { free, ..default }),
            Some(text) => parse_triple(text, free),
        }
    }

    /// `m x n` pairs such as `5x5 | 10x10`.
    pub fn sizes_or(&self, key: &str, default: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
        match self.list(key) {
            None => Ok(default.to_vec()),
            Some(items) => items
                .iter()
                .map(|s| {
                    let (a, b) = s
                        .split_once('x')
                        .ok_or_else(|| Error::Config(format!("`{key}`: expected `MxN`, got `{s}`")))?;
                    let parse = |t: &str| {
                        t.trim().parse::<usize>().map_err(|_| Error::Config(format!("`{key}`: bad size `{s}`")))
                    };
                    Ok((parse(a)?, parse(b)?))
                })
                .collect(),
        }
    }
}

/// Parses `mu, sigma2, tau2`.
pub fn parse_triple(text: &str, free: FreeMask) -> Result<Theta> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("cannot parse parameter `{text}`"))))
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        return Err(Error::Config(format!("expected `mu, sigma2, tau2`, got `{text}`")));
    }
    Theta::with_mask(parts[0], parts[1], parts[2], free).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_overrides() {
        let mut c = Config::parse("# study\nsizes = 5x5 | 10x10  # ladder\nreps=3\n\ntheta0 = 0.5, 1, 1\nfree = mu\n").unwrap();
        assert_eq!(c.sizes_or("sizes", &[]).unwrap(), vec![(5, 5), (10, 10)]);
        assert_eq!(c.usize_or("reps", 1).unwrap(), 3);
        let t = c.theta_or("theta0", "free", Theta::new(0.0, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(t.values(), [0.5, 1.0, 1.0]);
        assert_eq!(t.free, FreeMask::MU_ONLY);
        c.set("reps", "9");
        assert_eq!(c.usize_or("reps", 1).unwrap(), 9);
        assert!(c.check_keys(&["sizes", "reps", "theta0"]).is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("no equals sign").is_err());
        assert!(Config::parse("a = 1\na = 2").is_err());
        assert!(Config::parse("reps = x").unwrap().usize_or("reps", 1).is_err());
    }
}
