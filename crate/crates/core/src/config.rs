//! Flat `key = value` configuration files with optional `[section]` headers.
//! `#` starts a comment. Lists are comma separated.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Keys of one section. Values are consumed with `take`; `finish` rejects
/// whatever was never read.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Section {
    name: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl Section {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn take_raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| config_err(format!("line {line}: invalid value '{v}' for '{key}'"))),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<T>().map_err(|_| config_err(format!("line {line}: invalid list item '{t}' for '{key}'"))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((k, (line, _))) => {
                let scope = if self.name.is_empty() { String::new() } else { format!(" in [{}]", self.name) };
                Err(config_err(format!("line {line}: unknown key '{k}'{scope}")))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    /// Keys before any section header.
    pub global: Section,
    pub sections: BTreeMap<String, Section>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(format!("line {line_no}: malformed section header")))?
                    .trim()
                    .to_string();
                if name.is_empty() || cfg.sections.contains_key(&name) {
                    return Err(config_err(format!("line {line_no}: empty or repeated section '{name}'")));
                }
                cfg.sections.insert(name.clone(), Section { name: name.clone(), entries: BTreeMap::new() });
                current = Some(name);
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {line_no}: expected 'key = value'")))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.is_empty() {
                return Err(config_err(format!("line {line_no}: empty key")));
            }
            let section = match &current {
                None => &mut cfg.global,
                Some(name) => cfg.sections.get_mut(name).expect("inserted"),
            };
            if section.entries.insert(k.clone(), (line_no, v)).is_some() {
                return Err(config_err(format!("line {line_no}: duplicate key '{k}'")));
            }
        }
        Ok(cfg)
    }

    pub fn take_section(&mut self, name: &str) -> Option<Section> {
        self.sections.remove(name)
    }

    /// Fails on unread keys and unknown sections.
    pub fn finish(self) -> Result<()> {
        self.global.finish()?;
        match self.sections.keys().next() {
            Some(name) => Err(config_err(format!("unknown section [{name}]"))),
            None => Ok(()),
        }
    }
}
