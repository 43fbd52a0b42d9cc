//! Whitespace-separated manifest: `<file name> <energy kCal> [<category>]`
//! per line. Lines starting with `#` and blank lines are ignored.

use super::write_atomic;
use crate::error::{Error, Result};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub name: String,
    pub energy: f64,
    pub category: Option<String>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(path, &text)
}

fn parse(path: &Path, text: &str) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.into(),
            line: i + 1,
            msg,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&tokens.len()) {
            return Err(err(format!(
                "expected `<name> <energy> [category]`, found {} fields",
                tokens.len()
            )));
        }
        let energy: f64 = tokens[1]
            .parse()
            .map_err(|_| err(format!("energy {:?} is not a number", tokens[1])))?;
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(err(format!("energy {energy} must be positive")));
        }
        out.push(ManifestRecord {
            name: tokens[0].to_string(),
            energy,
            category: tokens.get(2).map(|s| s.to_string()),
        });
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.name);
        s.push(' ');
        s.push_str(&r.energy.to_string());
        if let Some(c) = &r.category {
            s.push(' ');
            s.push_str(c);
        }
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}
