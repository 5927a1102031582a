//! Distills raw tool failures (tracebacks, panics, worker stderr) into a
//! short category-tagged message for the agent.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Upper bound on a denoised message, in characters.
pub const MAX_MESSAGE_CHARS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    CrsMismatch,
    TopologyError,
    FileLocked,
    MissingFile,
    BadParameter,
    Timeout,
    Internal,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::CrsMismatch => "crs_mismatch",
            ErrorCategory::TopologyError => "topology_error",
            ErrorCategory::FileLocked => "file_locked",
            ErrorCategory::MissingFile => "missing_file",
            ErrorCategory::BadParameter => "bad_parameter",
            ErrorCategory::Timeout => "timeout",
            ErrorCategory::Internal => "internal",
        }
    }

    fn hint(self) -> Option<&'static str> {
        Some(match self {
            ErrorCategory::CrsMismatch => {
                "Reproject the inputs to a common CRS (or a projected CRS for metric operations) and retry."
            }
            ErrorCategory::TopologyError => "Repair the geometries first (for example with fix_geometry) and retry.",
            ErrorCategory::FileLocked => "Write to a new output path, or pass overwrite=true to replace the file.",
            ErrorCategory::MissingFile => {
                "Only staged inputs and outputs of earlier successful steps exist; check the path."
            }
            ErrorCategory::BadParameter => "Check parameter names, types, and allowed values against the tool schema.",
            ErrorCategory::Timeout => "The call hit the time limit and was terminated; change the parameters or the workload.",
            ErrorCategory::Internal => return None,
        })
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoisedError {
    pub category: ErrorCategory,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

impl fmt::Display for DenoisedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.category, self.message)?;
        if let Some(hint) = &self.hint {
            write!(f, " Hint: {hint}")?;
        }
        Ok(())
    }
}

static RULES: LazyLock<Vec<(ErrorCategory, Regex)>> = LazyLock::new(|| {
    let rule = |c, p: &str| (c, Regex::new(p).expect("denoise rule compiles"));
    vec![
        rule(ErrorCategory::Timeout, r"(?i)timed out|\btimeout\b|deadline exceeded|TimeoutError"),
        rule(
            ErrorCategory::CrsMismatch,
            r"(?i)crs mismatch|\bcrs\b|CRSError|coordinate reference|EPSG:\d+|projected coordinate",
        ),
        rule(
            ErrorCategory::TopologyError,
            r"(?i)topolog|self-intersect|invalid geometr|TopologyException|not a valid polygon",
        ),
        rule(
            ErrorCategory::FileLocked,
            r"(?i)\blocked\b|permission denied|PermissionError|in use by another|resource busy",
        ),
        rule(
            ErrorCategory::MissingFile,
            r"(?i)no such file|FileNotFoundError|file not found|does not exist|missing input",
        ),
        rule(
            ErrorCategory::BadParameter,
            r"(?i)bad parameter|invalid (value|parameter|argument|expression)|ValueError|TypeError|KeyError|expected .+ got|unknown (parameter|tool)|missing required",
        ),
    ]
});

static SCAFFOLD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"^(Traceback \(most recent call last\):|\s+File ".*", line \d+|\s+\^+\s*$|stack backtrace:|\s*\d+: \S|\s+at \S+:\d+|During handling of the above exception|The above exception was the direct cause|note: run with `RUST_BACKTRACE)"#,
    )
    .expect("scaffold pattern compiles")
});

static EXCEPTION_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:[A-Za-z_][\w]*\.)*[A-Za-z_]\w*(?:Error|Exception|Warning|Interrupt)\b(?::|$)|^thread '.*' panicked at")
        .expect("exception pattern compiles")
});

/// Maps raw failure text to a [`DenoisedError`]. A pure function of its
/// inputs; `hint` overrides pattern-based categorization.
pub fn denoise(raw: &str, hint: Option<ErrorCategory>) -> DenoisedError {
    let category = hint.unwrap_or_else(|| categorize(raw));
    let message = truncate(&distill(raw));
    let message = if message.is_empty() {
        format!("tool failed ({category})")
    } else {
        message
    };
    DenoisedError {
        category,
        message,
        hint: category.hint().map(str::to_owned),
    }
}

fn categorize(raw: &str) -> ErrorCategory {
    // Rules run against the distilled message first so that frames of a
    // traceback cannot outvote the actual exception line.
    let distilled = distill(raw);
    for text in [distilled.as_str(), raw] {
        if let Some((cat, _)) = RULES.iter().find(|(_, re)| re.is_match(text)) {
            return *cat;
        }
    }
    ErrorCategory::Internal
}

fn distill(raw: &str) -> String {
    let mut kept: Vec<&str> = Vec::new();
    let mut after_frame = false;
    for line in raw.lines() {
        if line.trim().is_empty() {
            after_frame = false;
            continue;
        }
        if SCAFFOLD.is_match(line) {
            after_frame = line.trim_start().starts_with("File \"");
            continue;
        }
        // Source line echoed under a traceback frame.
        if after_frame && line.starts_with(char::is_whitespace) {
            after_frame = false;
            continue;
        }
        after_frame = false;
        kept.push(line.trim());
    }
    let chosen: Vec<&str> = match kept.iter().rposition(|l| EXCEPTION_LINE.is_match(l)) {
        Some(idx) => vec![kept[idx]],
        None => kept,
    };
    let joined = chosen.join("; ");
    joined.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn truncate(s: &str) -> String {
    if s.chars().count() <= MAX_MESSAGE_CHARS {
        return s.to_owned();
    }
    let mut out: String = s.chars().take(MAX_MESSAGE_CHARS - 3).collect();
    out.push_str("...");
    out
}
