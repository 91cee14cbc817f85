//! Declarative run configuration: INI-style sections of key = value pairs.
//! Command-line flags override file values, which override built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;

pub type Sections = BTreeMap<String, BTreeMap<String, String>>;

/// Parse `[section]` headers and `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Sections, String> {
    let mut sections: Sections = BTreeMap::new();
    let mut current = String::from("global");
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected 'key = value', got {raw:?}", lineno + 1));
        };
        sections
            .entry(current.clone())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(sections)
}

pub fn load_config(path: &Path) -> Result<Sections, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    parse_config(&text)
}

/// Typed lookup helper over one section.
pub struct Section<'a> {
    values: Option<&'a BTreeMap<String, String>>,
}

impl<'a> Section<'a> {
    pub fn of(sections: &'a Sections, name: &str) -> Self {
        Section { values: sections.get(name) }
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.values.and_then(|v| v.get(key)) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| format!("config key {key:?}: cannot parse {raw:?}")),
        }
    }
}

/// Resolve a value: explicit flag, then config file, then default.
pub fn resolve<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
