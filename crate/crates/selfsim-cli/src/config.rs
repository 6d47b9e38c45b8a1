//! Flat `key = value` configuration with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use selfsim::profiles::{FIT_HI, FIT_LO};
use selfsim::solver::{Enforcement, InitialFunction, SolveConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Every tunable of a run. Built from defaults, then the config file,
/// then explicit flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub solve: SolveConfig,
    pub out_dir: PathBuf,
    pub format: Format,
    pub threads: Option<usize>,
    /// Fit window of the asymptotics, as fractions of the truncation radius.
    pub fit_lo: f64,
    pub fit_hi: f64,
    pub dump_bundles: bool,
    /// Print a progress line every this many iterations.
    pub progress_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            solve: SolveConfig::default(),
            out_dir: PathBuf::from("."),
            format: Format::Json,
            threads: None,
            fit_lo: FIT_LO,
            fit_hi: FIT_HI,
            dump_bundles: false,
            progress_every: 10,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(key: &str, value: &str) -> ConfigError {
    ConfigError(format!("invalid value for `{key}`: {value:?}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| bad(key, value))
}

pub fn parse_initial(s: &str) -> Result<InitialFunction, ConfigError> {
    match s {
        "rational-one" => Ok(InitialFunction::RationalOne),
        "m0" => Ok(InitialFunction::M0),
        "m1" => Ok(InitialFunction::M1),
        _ => match s.strip_prefix("file:") {
            Some(p) => Ok(InitialFunction::File(PathBuf::from(p))),
            None => Err(bad("initial", s)),
        },
    }
}

pub fn parse_enforcement(s: &str) -> Result<Enforcement, ConfigError> {
    match s {
        "log-only" => Ok(Enforcement::LogOnly),
        "enforce" => Ok(Enforcement::Enforce),
        "after-entry" => Ok(Enforcement::AfterEntry),
        _ => Err(bad("enforcement", s)),
    }
}

pub fn parse_format(s: &str) -> Result<Format, ConfigError> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(bad("format", s)),
    }
}

/// Recognized keys, in the order they are documented.
pub const KEYS: &[&str] = &[
    "tol",
    "max_iters",
    "damping",
    "enforcement",
    "membership_tol",
    "initial",
    "per_decade",
    "x_min",
    "x_max",
    "fit_lo",
    "fit_hi",
    "threads",
    "out_dir",
    "format",
    "dump_bundles",
    "progress_every",
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let s = &mut self.solve;
        match key {
            "tol" => s.tol_residual = num(key, value)?,
            "max_iters" => s.max_iters = num(key, value)?,
            "damping" => s.damping = num(key, value)?,
            "enforcement" => s.enforcement = parse_enforcement(value)?,
            "membership_tol" => s.membership_tol = num(key, value)?,
            "initial" => s.initial = parse_initial(value)?,
            "per_decade" => s.mesh.per_decade = num(key, value)?,
            "x_min" => s.mesh.x_min = num(key, value)?,
            "x_max" => s.mesh.x_max = num(key, value)?,
            "fit_lo" => self.fit_lo = num(key, value)?,
            "fit_hi" => self.fit_hi = num(key, value)?,
            "threads" => self.threads = Some(num(key, value)?),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "format" => self.format = parse_format(value)?,
            "dump_bundles" => self.dump_bundles = num(key, value)?,
            "progress_every" => self.progress_every = num(key, value)?,
            _ => return Err(ConfigError(format!("unknown config key `{key}` (known: {})", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Apply a file of `key = value` lines. `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        for (k, v) in parse_pairs(&text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.solve.validate().map_err(|e| ConfigError(e.to_string()))?;
        if !(self.fit_lo > 0.0 && self.fit_lo < self.fit_hi && self.fit_hi <= 1.0) {
            return Err(ConfigError("fit window needs 0 < fit_lo < fit_hi <= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(ConfigError("threads must be at least 1".into()));
        }
        if self.progress_every == 0 {
            return Err(ConfigError("progress_every must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key = value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_apply_in_order() {
        let pairs = parse_pairs("# comment\ntol = 1e-8\nper_decade=32 # trailing\n\nformat = csv\n").unwrap();
        let mut cfg = RunConfig::default();
        for (k, v) in &pairs {
            cfg.set(k, v).unwrap();
        }
        assert_eq!(cfg.solve.tol_residual, 1e-8);
        assert_eq!(cfg.solve.mesh.per_decade, 32);
        assert_eq!(cfg.format, Format::Csv);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("tolerance", "1").is_err());
        assert!(cfg.set("tol", "abc").is_err());
        assert!(cfg.set("initial", "gaussian").is_err());
        assert!(parse_pairs("no equals sign").is_err());
    }

    #[test]
    fn every_documented_key_is_settable() {
        let sample = |k: &str| match k {
            "enforcement" => "enforce",
            "initial" => "m0",
            "out_dir" => "/tmp",
            "format" => "csv",
            "dump_bundles" => "true",
            "max_iters" | "per_decade" | "threads" | "progress_every" => "3",
            _ => "0.5",
        };
        for k in KEYS {
            RunConfig::default().set(k, sample(k)).unwrap();
        }
    }
}
