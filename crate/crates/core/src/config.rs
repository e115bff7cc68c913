//! Flat `key = value` text files. `#` starts a comment; section prefixes are
//! part of the key (`train.hidden = 32`).

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type KeyValues = BTreeMap<String, String>;

pub fn parse_kv(text: &str) -> Result<KeyValues> {
    let mut out = KeyValues::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key '{k}'",
                i + 1
            )));
        }
    }
    Ok(out)
}

pub fn render_kv(kv: &KeyValues) -> String {
    kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Parses `kv[key]` into `slot` when present.
pub fn take<T: FromStr>(kv: &KeyValues, key: &str, slot: &mut T) -> Result<()> {
    if let Some(v) = kv.get(key) {
        *slot = v
            .parse()
            .map_err(|_| Error::Config(format!("'{key}': cannot parse '{v}'")))?;
    }
    Ok(())
}
