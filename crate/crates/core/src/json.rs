//! Canonical JSON output: sorted keys, two-space indent, trailing newline.
//! Two artifacts are equal exactly when their bytes are equal.

use serde::Serialize;

pub fn to_canonical_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    // serde_json::Map is a BTreeMap without the preserve_order feature,
    // so going through Value sorts every object's keys.
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Single-line canonical form, used for JSONL records.
pub fn to_canonical_line<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string(&v)?;
    s.push('\n');
    Ok(s)
}
