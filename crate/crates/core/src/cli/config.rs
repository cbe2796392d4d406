//! Config files: `key = value` lines grouped under `[section]` headers.
//! Keys before the first header, or under `[run]`, are run-level keys;
//! `[resolve]`, `[rates]`, `[embed]` and `[forest]` hold subcommand keys
//! named exactly like the corresponding flags. Lines starting with `#` are
//! comments.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const RUN_KEYS: &[&str] = &["command", "seed", "threads", "out"];
pub const RESOLVE_KEYS: &[&str] =
    &["measure", "generators", "radii", "targets", "schedule", "trials", "reference", "adversarial"];
pub const RATES_KEYS: &[&str] = &["scheme", "d", "measure", "schedule", "trials", "eval", "reference"];
pub const EMBED_KEYS: &[&str] =
    &["measure", "construction", "depth", "chains", "split-source", "path-dt", "path-horizon", "path-series"];
pub const FOREST_KEYS: &[&str] = &[
    "scheme",
    "d",
    "measure",
    "split-source",
    "witness",
    "splits",
    "trees",
    "noise",
    "n",
    "large-n",
    "trials",
    "eval",
    "reference",
    "csv",
    "features",
    "target",
    "test-fraction",
];

pub fn section_keys(section: &str) -> Option<&'static [&'static str]> {
    match section {
        "run" => Some(RUN_KEYS),
        "resolve" => Some(RESOLVE_KEYS),
        "rates" => Some(RATES_KEYS),
        "embed" => Some(EMBED_KEYS),
        "forest" => Some(FOREST_KEYS),
        _ => None,
    }
}

/// Parsed config file: section → key → raw value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("config: cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = "run".to_string();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if section_keys(name).is_none() {
                    return Err(Error::config(format!("config line {lineno}: unknown section [{name}]")));
                }
                current = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("config line {lineno}: expected key = value")))?;
            let (key, value) = (key.trim(), value.trim());
            let known = section_keys(&current).expect("validated section");
            if !known.contains(&key) {
                return Err(Error::config(format!("config line {lineno}: unknown key '{key}' in [{current}]")));
            }
            let entries = sections.entry(current.clone()).or_default();
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::config(format!("config line {lineno}: duplicate key '{key}' in [{current}]")));
            }
        }
        Ok(ConfigFile { sections })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(String::as_str)
    }

    pub fn section(&self, section: &str) -> BTreeMap<String, String> {
        self.sections.get(section).cloned().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let c = ConfigFile::parse("seed = 3\n# comment\n[rates]\nscheme = symmetric\nschedule = 4,8,16\n").unwrap();
        assert_eq!(c.get("run", "seed"), Some("3"));
        assert_eq!(c.get("rates", "schedule"), Some("4,8,16"));
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let e = ConfigFile::parse("[rates]\nbogus = 1\n").unwrap_err().to_string();
        assert!(e.contains("bogus"));
        assert!(ConfigFile::parse("[nope]\n").is_err());
        assert!(ConfigFile::parse("seed = 1\nseed = 2\n").is_err());
        assert!(ConfigFile::parse("seed 1\n").is_err());
    }
}
