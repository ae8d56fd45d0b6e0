//! `key = value` text with `#` comments and dotted keys.

use std::fmt::Display;
use std::str::FromStr;

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// Parsed key/value pairs in file order. Readers consume keys with
/// [`KvMap::take`]; [`KvMap::finish`] rejects whatever is left.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvMap {
    entries: IndexMap<String, (String, usize)>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = IndexMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected key = value")))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {line_no}: malformed key {key:?}")));
            }
            if entries
                .insert(key.to_string(), (value.trim().to_string(), line_no))
                .is_some()
            {
                return Err(Error::Config(format!("line {line_no}: duplicate key {key}")));
            }
        }
        Ok(KvMap { entries })
    }

    pub fn insert(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.shift_remove(key).map(|(v, _)| v)
    }

    pub fn take<V: FromStr>(&mut self, key: &str) -> Result<Option<V>>
    where
        V::Err: Display,
    {
        match self.entries.shift_remove(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("{}{key} = {v:?}: {e}", at(line)))),
        }
    }

    /// Comma separated list, optionally bracketed: `3, 3, 6` or `[3,3,6]`.
    pub fn take_list<V: FromStr>(&mut self, key: &str) -> Result<Option<Vec<V>>>
    where
        V::Err: Display,
    {
        let Some((v, line)) = self.entries.shift_remove(key) else {
            return Ok(None);
        };
        let inner = v.trim().trim_start_matches('[').trim_end_matches(']').trim();
        if inner.is_empty() {
            return Ok(Some(Vec::new()));
        }
        inner
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|e| Error::Config(format!("{}{key} = {v:?}: {e}", at(line))))
            })
            .collect::<Result<Vec<V>>>()
            .map(Some)
    }

    /// Moves every `prefix.`-keyed entry into a new map with the prefix stripped.
    pub fn take_section(&mut self, prefix: &str) -> KvMap {
        let dotted = format!("{prefix}.");
        let keys: Vec<String> = self.keys().filter(|k| k.starts_with(&dotted)).map(String::from).collect();
        let mut out = KvMap::default();
        for k in keys {
            let v = self.entries.shift_remove(&k).expect("key listed above");
            out.entries.insert(k[dotted.len()..].to_string(), v);
        }
        out
    }

    /// Errors naming every key nobody consumed.
    pub fn finish(self, context: &str) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let names: Vec<String> = self
            .entries
            .iter()
            .map(|(k, (_, line))| format!("{}{k}", at(*line)))
            .collect();
        Err(Error::Config(format!("unknown {context} keys: {}", names.join(", "))))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, (v, _)) in &self.entries {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }
}

fn at(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("line {line}: ")
    }
}

/// `H x W` such as `48x64`.
pub fn parse_extent(s: &str) -> Result<(usize, usize)> {
    let (h, w) = s
        .split_once(['x', 'X', '×'])
        .ok_or_else(|| Error::Config(format!("expected HxW, got {s:?}")))?;
    let parse = |p: &str| {
        p.trim()
            .parse::<usize>()
            .map_err(|e| Error::Config(format!("extent {s:?}: {e}")))
    };
    Ok((parse(h)?, parse(w)?))
}
