//! Flat `key = value` run configuration with command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use stabprobe_core::experiment::{ExperimentConfig, Mode, Preset};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("`out_dir` is required")]
    MissingOutDir,
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Invalid(#[from] stabprobe_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    CsvSvg,
}

impl OutputFormat {
    pub fn with_svg(self) -> bool {
        self == Self::CsvSvg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub experiment: ExperimentConfig,
    pub preset: Preset,
    pub out_dir: Option<PathBuf>,
    pub format: OutputFormat,
    pub records: bool,
}

pub const KEYS: &[&str] = &[
    "preset",
    "n",
    "T",
    "trials",
    "seed",
    "p",
    "L",
    "a",
    "K",
    "epsilon",
    "delta",
    "h",
    "symmetrize",
    "report_api",
    "mode",
    "out_dir",
    "format",
    "records",
];

/// Parses `key = value` lines. Blank lines and `#` comments are ignored.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: i + 1 })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        pairs.push((k.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Splits a `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::BadValue {
        key: s.to_string(),
        value: String::new(),
        reason: "expected key=value".into(),
    })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| bad(key, value, e.to_string()))
}

fn float_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(|s| num(key, s.trim())).collect()
}

/// Comma list of integers; `a..b` expands to the inclusive range.
fn int_list(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim) {
        match part.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi): (usize, usize) = (num(key, lo.trim())?, num(key, hi.trim())?);
                if lo > hi {
                    return Err(bad(key, value, "empty range"));
                }
                out.extend(lo..=hi);
            }
            None => out.push(num(key, part)?),
        }
    }
    Ok(out)
}

fn boolean(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

/// Resolves pairs in order (later pairs win) on top of the defaults. The
/// preset is applied first so explicit `T`/`trials` always override it.
pub fn resolve(pairs: &[(String, String)]) -> Result<CliConfig, ConfigError> {
    if let Some((k, _)) = pairs.iter().find(|(k, _)| !KEYS.contains(&k.as_str())) {
        return Err(ConfigError::UnknownKey(k.clone()));
    }
    let mut cfg = CliConfig {
        experiment: ExperimentConfig::default(),
        preset: Preset::Full,
        out_dir: None,
        format: OutputFormat::Csv,
        records: false,
    };
    if let Some((k, v)) = pairs.iter().rev().find(|(k, _)| k == "preset") {
        cfg.preset = match v.as_str() {
            "full" => Preset::Full,
            "quick" => Preset::Quick,
            _ => return Err(bad(k, v, "expected full or quick")),
        };
        cfg.experiment.apply_preset(cfg.preset);
    }

    let e = &mut cfg.experiment;
    for (k, v) in pairs {
        match k.as_str() {
            "preset" => {}
            "n" => e.n = num(k, v)?,
            "T" => e.t = num(k, v)?,
            "trials" => e.trials = num(k, v)?,
            "seed" => e.seed = num(k, v)?,
            "p" => e.p_grid = float_list(k, v)?,
            "L" => e.l_grid = int_list(k, v)?,
            "a" => e.ar = float_list(k, v)?,
            "K" => e.k_grid = int_list(k, v)?,
            "epsilon" => e.epsilon = num(k, v)?,
            "delta" => e.delta = num(k, v)?,
            "h" => e.fd_step = num(k, v)?,
            "symmetrize" => e.symmetrize = boolean(k, v)?,
            "report_api" => e.report_api = boolean(k, v)?,
            "mode" => {
                e.mode = match v.as_str() {
                    "sample" => Mode::Sample,
                    "population" => Mode::Population,
                    _ => return Err(bad(k, v, "expected sample or population")),
                }
            }
            "out_dir" => cfg.out_dir = Some(PathBuf::from(v)),
            "format" => {
                cfg.format = match v.as_str() {
                    "csv" => OutputFormat::Csv,
                    "csv+svg" => OutputFormat::CsvSvg,
                    _ => return Err(bad(k, v, "expected csv or csv+svg")),
                }
            }
            "records" => cfg.records = boolean(k, v)?,
            _ => unreachable!("keys checked above"),
        }
    }
    cfg.experiment.validate()?;
    Ok(cfg)
}

/// Reads an optional config file and applies overrides after it.
pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<CliConfig, ConfigError> {
    let mut pairs = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            parse_pairs(&text)?
        }
        None => Vec::new(),
    };
    pairs.extend_from_slice(overrides);
    resolve(&pairs)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl CliConfig {
    pub fn require_out_dir(&self) -> Result<&Path, ConfigError> {
        self.out_dir.as_deref().ok_or(ConfigError::MissingOutDir)
    }

    /// Every key with its resolved value. Feeding this text back through
    /// [`load`] reproduces the configuration exactly.
    pub fn resolved_text(&self) -> String {
        let e = &self.experiment;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv(
            "preset",
            match self.preset {
                Preset::Full => "full",
                Preset::Quick => "quick",
            }
            .into(),
        );
        kv("n", e.n.to_string());
        kv("T", e.t.to_string());
        kv("trials", e.trials.to_string());
        kv("seed", e.seed.to_string());
        kv("p", join(&e.p_grid));
        kv("L", join(&e.l_grid));
        kv("a", join(&e.ar));
        kv("K", join(&e.k_grid));
        kv("epsilon", e.epsilon.to_string());
        kv("delta", e.delta.to_string());
        kv("h", e.fd_step.to_string());
        kv("symmetrize", e.symmetrize.to_string());
        kv("report_api", e.report_api.to_string());
        kv(
            "mode",
            match e.mode {
                Mode::Sample => "sample",
                Mode::Population => "population",
            }
            .into(),
        );
        if let Some(dir) = &self.out_dir {
            kv("out_dir", dir.display().to_string());
        }
        kv(
            "format",
            match self.format {
                OutputFormat::Csv => "csv",
                OutputFormat::CsvSvg => "csv+svg",
            }
            .into(),
        );
        kv("records", self.records.to_string());
        s
    }
}
