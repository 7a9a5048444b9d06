//! Flat `key = value` experiment files.
//!
//! Lines may carry `#` comments. A `[section]` line prefixes the keys that
//! follow it, so `[model]` then `tau = 0.01` is the same as `model.tau = 0.01`.
//! Every key must be consumed by the command that reads the file; leftovers
//! are reported with their line numbers, which catches typos early.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed configuration, or parameters that fail validation.
    Config(String),
    /// A computation failed.
    Numerical(mhj_core::Error),
    /// Output could not be written.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl From<mhj_core::Error> for CliError {
    fn from(e: mhj_core::Error) -> Self {
        CliError::Numerical(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
    used: RefCell<BTreeSet<String>>,
    /// Hex SHA-256 of the file contents.
    pub hash: String,
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::Config(format!("line {line}: unterminated section header")))?
                    .trim();
                if !valid_key(name) {
                    return Err(CliError::Config(format!("line {line}: invalid section name {name:?}")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {line}: expected key = value, found {content:?}")))?;
            let key = key.trim();
            if !valid_key(key) {
                return Err(CliError::Config(format!("line {line}: invalid key {key:?}")));
            }
            let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            let value = value.trim().to_string();
            if let Some(prev) = entries.insert(full.clone(), Entry { value, line }) {
                return Err(CliError::Config(format!("line {line}: key {full} already set on line {}", prev.line)));
            }
        }
        let hash = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { entries, used: RefCell::new(BTreeSet::new()), hash })
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key)
    }

    /// Line a key was set on, for error messages about derived values.
    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    fn parse_with<T>(&self, key: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> CliResult<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => f(&e.value)
                .map(Some)
                .ok_or_else(|| CliError::Config(format!("line {}: {key} = {:?} is not {what}", e.line, e.value))),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.parse_with(key, "a finite number", parse_f64)?.unwrap_or(default))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> CliResult<usize> {
        Ok(self.parse_with(key, "a non-negative integer", |s| s.parse().ok())?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> CliResult<u64> {
        Ok(self.parse_with(key, "a non-negative integer", |s| s.parse().ok())?.unwrap_or(default))
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> CliResult<Vec<f64>> {
        let list = self.parse_with(key, "a comma-separated list of numbers", |s| {
            s.split(',').map(|t| parse_f64(t.trim())).collect::<Option<Vec<f64>>>()
        })?;
        Ok(list.unwrap_or_else(|| default.to_vec()))
    }

    /// One of `choices`, defaulting to the first.
    pub fn choice(&self, key: &str, choices: &[&str]) -> CliResult<String> {
        match self.raw(key) {
            None => Ok(choices[0].to_string()),
            Some(e) if choices.contains(&e.value.as_str()) => Ok(e.value.clone()),
            Some(e) => Err(CliError::Config(format!("line {}: {key} must be one of {}", e.line, choices.join(", ")))),
        }
    }

    /// Fails on keys no reader asked for.
    pub fn finish(&self) -> CliResult<()> {
        let used = self.used.borrow();
        let unknown: Vec<String> =
            self.entries.iter().filter(|(k, _)| !used.contains(*k)).map(|(k, e)| format!("line {}: unknown key {k}", e.line)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(unknown.join("; ")))
        }
    }
}

fn strip_comment(line: &str) -> &str {
    line.find('#').map_or(line, |i| &line[..i])
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}
