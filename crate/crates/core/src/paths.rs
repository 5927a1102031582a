//! Workspace-relative path handling.

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("path is empty")]
    Empty,
    #[error("absolute path `{0}` is not allowed; use a workspace-relative path")]
    Absolute(String),
    #[error("path `{0}` escapes the workspace")]
    Escapes(String),
}

/// Normalizes a workspace-relative path to canonical `a/b/c` form.
///
/// `.` segments and duplicate separators are dropped, `..` segments are
/// resolved lexically and must never climb above the root.
pub fn normalize_relative(raw: &str) -> Result<String, PathError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(PathError::Empty);
    }
    if trimmed.starts_with('/') || trimmed.starts_with('\\') || has_drive_prefix(trimmed) {
        return Err(PathError::Absolute(raw.to_owned()));
    }
    let mut parts: Vec<&str> = Vec::new();
    for seg in trimmed.split(['/', '\\']) {
        match seg {
            "" | "." => {}
            ".." => {
                if parts.pop().is_none() {
                    return Err(PathError::Escapes(raw.to_owned()));
                }
            }
            s => parts.push(s),
        }
    }
    if parts.is_empty() {
        return Err(PathError::Empty);
    }
    Ok(parts.join("/"))
}

fn has_drive_prefix(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() >= 2 && b[0].is_ascii_alphabetic() && b[1] == b':'
}

/// Resolves a relative path against `root`, refusing anything that leaves it.
pub fn resolve_under(root: &Path, raw: &str) -> Result<PathBuf, PathError> {
    let rel = normalize_relative(raw)?;
    Ok(root.join(rel))
}
