//! TOML experiment configs with line-level diagnostics.

use std::path::Path;

use acl_core::training::ExperimentConfig;
use acl_core::Error as CoreError;

use crate::error::{LabError, LabResult};

/// 1-based line of byte offset `pos`.
fn line_of(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].matches('\n').count() + 1
}

/// Dotted name of the table whose body contains byte offset `pos`.
fn table_at(text: &str, pos: usize) -> String {
    let mut table = String::new();
    for line in text[..pos.min(text.len())].lines() {
        let t = line.trim();
        if t.starts_with('[') && !t.starts_with("[[") {
            if let Some(end) = t.find(']') {
                table = t[1..end].trim().to_string();
            }
        }
    }
    table
}

/// Line where the dotted `field` is assigned, or where its table opens.
pub fn locate(text: &str, field: &str) -> Option<usize> {
    let (table, key) = field.rsplit_once('.').unwrap_or(("", field));
    let mut current = String::new();
    let mut table_line = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == table {
                table_line = Some(i + 1);
            }
            continue;
        }
        let assigned = t.split('=').next().map(str::trim);
        if current == table && assigned == Some(key) {
            return Some(i + 1);
        }
    }
    table_line
}

/// The backquoted name in a serde message such as "missing field `alpha`".
fn quoted(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

fn join(table: &str, key: &str) -> String {
    if table.is_empty() {
        key.to_string()
    } else {
        format!("{table}.{key}")
    }
}

/// Parses and validates a config held in memory; `origin` names it in
/// diagnostics.
pub fn parse(text: &str, origin: &str) -> LabResult<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let message = e.message().trim().to_string();
        let Some(span) = e.span() else {
            return LabError::config(origin, message);
        };
        let line = line_of(text, span.start);
        let location = format!("{origin}:{line}");
        if message.starts_with("missing field") {
            if let Some(key) = quoted(&message) {
                // The span starts at the table header that lacks the key.
                let header_end = text[span.start..].find('\n').map_or(text.len(), |i| span.start + i);
                let field = join(&table_at(text, header_end), key);
                return LabError::config(location, format!("missing required field `{field}`"));
            }
        }
        LabError::config(location, message)
    })?;
    validate(&cfg, text, origin)?;
    Ok(cfg)
}

/// Runs the library's validation, pointing at the offending line.
pub fn validate(cfg: &ExperimentConfig, text: &str, origin: &str) -> LabResult<()> {
    match cfg.validate() {
        Ok(()) => Ok(()),
        Err(CoreError::Config { field, reason }) => {
            let location = match locate(text, field) {
                Some(line) => format!("{origin}:{line}"),
                None => origin.to_string(),
            };
            Err(LabError::config(location, format!("invalid `{field}`: {reason}")))
        }
        Err(other) => Err(LabError::config(origin, other.to_string())),
    }
}

pub fn load(path: &Path) -> LabResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::config(path.display().to_string(), format!("cannot read: {e}")))?;
    parse(&text, &path.display().to_string())
}

/// TOML text that parses back to `cfg`.
pub fn to_toml(cfg: &ExperimentConfig) -> LabResult<String> {
    toml::to_string(cfg).map_err(|e| LabError::config("config", format!("cannot serialize: {e}")))
}
