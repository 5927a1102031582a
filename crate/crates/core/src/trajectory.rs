//! Task, gold toolchain, and trajectory data model plus their on-disk formats.
//!
//! Task documents are JSON objects with the fields `id`, `domain`,
//! `task_description`, `data_description`, `drawing_style`,
//! `toolchain_length`, `toolchain`, `result`, and `layers`.
//!
//! Trajectory logs are UTF-8 JSON lines: a header line carrying the task id
//! and terminal status, followed by one line per tool-call record in step
//! order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::args::{ArgValue, Args};
use crate::paths::normalize_relative;
use crate::sandbox::DenoisedError;

/// Default cap on tool calls per task run.
pub const DEFAULT_MAX_STEPS: usize = 30;
/// Default per-call wall-clock limit, in seconds.
pub const DEFAULT_CALL_TIMEOUT_SECS: f64 = 360.0;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("malformed task document: {0}")]
    MalformedDocument(String),
    #[error("task schema violation: {0}")]
    SchemaViolation(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("malformed trajectory log at line {line}: {message}")]
    MalformedDocument { line: usize, message: String },
    #[error("non-monotone step indices: expected step {expected}, found {found}")]
    NonMonotoneSteps { expected: u32, found: u32 },
}

/// The six GIS task domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    SpatialDataManagement,
    VectorSpatialAnalysis,
    RasterSpatialAnalysis,
    ThreeDModeling,
    GeostatisticalAnalysis,
    HydrologicalAnalysis,
}

impl Domain {
    pub const ALL: [Domain; 6] = [
        Domain::SpatialDataManagement,
        Domain::VectorSpatialAnalysis,
        Domain::RasterSpatialAnalysis,
        Domain::ThreeDModeling,
        Domain::GeostatisticalAnalysis,
        Domain::HydrologicalAnalysis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::SpatialDataManagement => "spatial_data_management",
            Domain::VectorSpatialAnalysis => "vector_spatial_analysis",
            Domain::RasterSpatialAnalysis => "raster_spatial_analysis",
            Domain::ThreeDModeling => "3d_modeling_and_analysis",
            Domain::GeostatisticalAnalysis => "geostatistical_analysis",
            Domain::HydrologicalAnalysis => "hydrological_analysis",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    /// Accepts the canonical snake-case names as well as display forms such
    /// as "Vector Spatial Analysis".
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect();
        let key = key.replace("3d_modelling", "3d_modeling");
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str() == key || (key == "3d_modeling" && *d == Domain::ThreeDModeling))
            .ok_or_else(|| format!("unknown domain `{s}`"))
    }
}

impl Serialize for Domain {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataInput {
    pub path: String,
    #[serde(default)]
    pub metadata: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldStep {
    /// 1-based position in the toolchain.
    pub index: u32,
    pub tool: String,
    pub args: Args,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GoldToolchain {
    pub steps: Vec<GoldStep>,
}

impl GoldToolchain {
    pub fn from_calls<I, S>(calls: I) -> Self
    where
        I: IntoIterator<Item = (S, Args)>,
        S: Into<String>,
    {
        let steps = calls
            .into_iter()
            .enumerate()
            .map(|(i, (tool, args))| GoldStep {
                index: i as u32 + 1,
                tool: tool.into(),
                args,
            })
            .collect();
        GoldToolchain { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn tool_names(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.tool.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: String,
    pub domain: Domain,
    pub task_description: String,
    pub data_description: Vec<DataInput>,
    pub drawing_style: String,
    pub toolchain_length: usize,
    pub gold_toolchain: GoldToolchain,
    pub result_filename: String,
    /// Ordered bottom-first; stacking order is significant.
    pub layers: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskDocument {
    id: String,
    domain: Domain,
    task_description: String,
    #[serde(default)]
    data_description: Vec<DataInput>,
    #[serde(default)]
    drawing_style: String,
    toolchain_length: usize,
    toolchain: Vec<ToolchainEntry>,
    result: String,
    #[serde(default)]
    layers: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ToolchainEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    index: Option<u32>,
    tool: String,
    #[serde(default)]
    args: Args,
}

/// Parses and validates a task document.
pub fn parse_task_spec(document: &str) -> Result<TaskSpec, TaskError> {
    let doc: TaskDocument = serde_json::from_str(document).map_err(|e| {
        if e.is_data() {
            TaskError::SchemaViolation(e.to_string())
        } else {
            TaskError::MalformedDocument(e.to_string())
        }
    })?;
    let violation = |msg: String| TaskError::SchemaViolation(msg);

    if doc.id.trim().is_empty() {
        return Err(violation("id is empty".into()));
    }
    if doc.toolchain_length == 0 {
        return Err(violation("toolchain_length must be positive".into()));
    }
    if doc.toolchain_length != doc.toolchain.len() {
        return Err(violation(format!(
            "toolchain_length is {} but toolchain has {} steps",
            doc.toolchain_length,
            doc.toolchain.len()
        )));
    }

    let mut steps = Vec::with_capacity(doc.toolchain.len());
    for (i, entry) in doc.toolchain.into_iter().enumerate() {
        let expected = i as u32 + 1;
        if let Some(index) = entry.index {
            if index != expected {
                return Err(violation(format!(
                    "toolchain indices must be contiguous from 1: expected {expected}, found {index}"
                )));
            }
        }
        if entry.tool.trim().is_empty() {
            return Err(violation(format!("toolchain step {expected} has an empty tool name")));
        }
        steps.push(GoldStep {
            index: expected,
            tool: entry.tool,
            args: entry.args,
        });
    }

    let mut data_description = Vec::with_capacity(doc.data_description.len());
    for input in doc.data_description {
        let path = normalize_relative(&input.path)
            .map_err(|e| violation(format!("data_description: {e}")))?;
        data_description.push(DataInput { path, metadata: input.metadata });
    }

    let result_filename =
        normalize_relative(&doc.result).map_err(|e| violation(format!("result: {e}")))?;
    let produced = steps.iter().any(|s| {
        s.args
            .values()
            .any(|v| v.as_str().and_then(|p| normalize_relative(p).ok()).as_deref() == Some(&result_filename))
    });
    if !produced {
        return Err(violation(format!(
            "result `{result_filename}` is not produced by any gold step"
        )));
    }

    Ok(TaskSpec {
        id: doc.id,
        domain: doc.domain,
        task_description: doc.task_description,
        data_description,
        drawing_style: doc.drawing_style,
        toolchain_length: doc.toolchain_length,
        gold_toolchain: GoldToolchain { steps },
        result_filename,
        layers: doc.layers,
    })
}

/// Renders a task back to its document form.
pub fn serialize_task_spec(task: &TaskSpec) -> String {
    let doc = TaskDocument {
        id: task.id.clone(),
        domain: task.domain,
        task_description: task.task_description.clone(),
        data_description: task.data_description.clone(),
        drawing_style: task.drawing_style.clone(),
        toolchain_length: task.toolchain_length,
        toolchain: task
            .gold_toolchain
            .steps
            .iter()
            .map(|s| ToolchainEntry {
                index: Some(s.index),
                tool: s.tool.clone(),
                args: s.args.clone(),
            })
            .collect(),
        result: task.result_filename.clone(),
        layers: task.layers.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("task document serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallStatus {
    Success,
    Error,
    Timeout,
    Rejected,
}

impl fmt::Display for CallStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CallStatus::Success => "success",
            CallStatus::Error => "error",
            CallStatus::Timeout => "timeout",
            CallStatus::Rejected => "rejected",
        })
    }
}

/// One attempted tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolCallRecord {
    pub step: u32,
    pub tool: String,
    pub args: Args,
    pub status: CallStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<DenoisedError>,
    /// Wall-clock seconds.
    pub duration: f64,
    #[serde(default)]
    pub outputs_declared: Vec<String>,
    /// Short success message from the tool, shown to the agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

impl ToolCallRecord {
    pub fn is_success(&self) -> bool {
        self.status == CallStatus::Success
    }

    pub fn arg(&self, name: &str) -> Option<&ArgValue> {
        self.args.get(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Completed,
    StepCapExceeded,
    Aborted,
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Terminal::Completed => "completed",
            Terminal::StepCapExceeded => "step_cap_exceeded",
            Terminal::Aborted => "aborted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub task_id: String,
    pub records: Vec<ToolCallRecord>,
    pub terminal: Terminal,
    pub final_answer: Option<String>,
}

impl Trajectory {
    pub fn new(task_id: impl Into<String>) -> Self {
        Trajectory {
            task_id: task_id.into(),
            records: Vec::new(),
            terminal: Terminal::Aborted,
            final_answer: None,
        }
    }

    pub fn tool_names(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.tool.as_str()).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogHeader {
    task_id: String,
    terminal: Terminal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    final_answer: Option<String>,
}

/// Serializes a trajectory as a header line plus one JSON line per record.
pub fn serialize_trajectory(t: &Trajectory) -> String {
    let header = LogHeader {
        task_id: t.task_id.clone(),
        terminal: t.terminal,
        final_answer: t.final_answer.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for record in &t.records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_trajectory(document: &str) -> Result<Trajectory, TrajectoryError> {
    let mut lines = document
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(TrajectoryError::MalformedDocument {
        line: 1,
        message: "missing header line".into(),
    })?;
    let header: LogHeader =
        serde_json::from_str(first).map_err(|e| TrajectoryError::MalformedDocument {
            line: 1,
            message: e.to_string(),
        })?;

    let mut records: Vec<ToolCallRecord> = Vec::new();
    for (idx, line) in lines {
        let record: ToolCallRecord =
            serde_json::from_str(line).map_err(|e| TrajectoryError::MalformedDocument {
                line: idx + 1,
                message: e.to_string(),
            })?;
        let expected = records.len() as u32 + 1;
        if record.step != expected {
            return Err(TrajectoryError::NonMonotoneSteps {
                expected,
                found: record.step,
            });
        }
        if (record.status == CallStatus::Success) != record.error.is_none() {
            return Err(TrajectoryError::MalformedDocument {
                line: idx + 1,
                message: "error must be present exactly when status is not success".into(),
            });
        }
        if !(record.duration >= 0.0) {
            return Err(TrajectoryError::MalformedDocument {
                line: idx + 1,
                message: "duration must be non-negative".into(),
            });
        }
        records.push(record);
    }

    Ok(Trajectory {
        task_id: header.task_id,
        records,
        terminal: header.terminal,
        final_answer: header.final_answer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args;
    use crate::sandbox::ErrorCategory;

    fn one_step_doc(length: usize) -> String {
        format!(
            r#"{{
              "id": "t1",
              "domain": "Vector Spatial Analysis",
              "task_description": "buffer the roads",
              "data_description": [{{"path": "roads.geojson", "metadata": "road lines"}}],
              "drawing_style": "",
              "toolchain_length": {length},
              "toolchain": [{{"tool": "buffer_features", "args": {{"input": "roads.geojson", "distance": 100, "output": "buf.geojson"}}}}],
              "result": "buf.geojson",
              "layers": ["buf.geojson"]
            }}"#
        )
    }

    #[test]
    fn minimal_task_parses() {
        let task = parse_task_spec(&one_step_doc(1)).unwrap();
        assert_eq!(task.domain, Domain::VectorSpatialAnalysis);
        assert_eq!(task.gold_toolchain.len(), 1);
        assert_eq!(task.gold_toolchain.steps[0].index, 1);
        let again = parse_task_spec(&serialize_task_spec(&task)).unwrap();
        assert_eq!(again, task);
    }

    #[test]
    fn length_mismatch_is_schema_violation() {
        let err = parse_task_spec(&one_step_doc(5)).unwrap_err();
        assert!(matches!(err, TaskError::SchemaViolation(_)), "{err}");
    }

    #[test]
    fn syntax_error_is_malformed() {
        let err = parse_task_spec("{ not json").unwrap_err();
        assert!(matches!(err, TaskError::MalformedDocument(_)));
    }

    #[test]
    fn missing_field_and_absolute_paths_are_violations() {
        let doc = one_step_doc(1).replace(r#""result": "buf.geojson","#, "");
        assert!(matches!(parse_task_spec(&doc), Err(TaskError::SchemaViolation(_))));
        let doc = one_step_doc(1).replace(r#""path": "roads.geojson""#, r#""path": "/data/roads.geojson""#);
        assert!(matches!(parse_task_spec(&doc), Err(TaskError::SchemaViolation(_))));
        let doc = one_step_doc(1).replace(r#""result": "buf.geojson""#, r#""result": "other.png""#);
        assert!(matches!(parse_task_spec(&doc), Err(TaskError::SchemaViolation(_))));
    }

    fn record(step: u32, tool: &str, status: CallStatus) -> ToolCallRecord {
        ToolCallRecord {
            step,
            tool: tool.into(),
            args: args! { "input" => "a.geojson", "distance" => 12.5 },
            status,
            error: (status != CallStatus::Success).then(|| DenoisedError {
                category: ErrorCategory::BadParameter,
                message: "distance: erwartet Zahl – „100m“".into(),
                hint: None,
            }),
            duration: 0.25,
            outputs_declared: vec![],
            summary: None,
        }
    }

    #[test]
    fn empty_trajectory_is_header_only() {
        let t = Trajectory::new("t1");
        let doc = serialize_trajectory(&t);
        assert_eq!(doc.lines().count(), 1);
        assert_eq!(parse_trajectory(&doc).unwrap(), t);
    }

    #[test]
    fn records_keep_order() {
        let mut t = Trajectory::new("t1");
        t.terminal = Terminal::Completed;
        t.records = vec![
            record(1, "a", CallStatus::Success),
            record(2, "b", CallStatus::Error),
            record(3, "c", CallStatus::Success),
        ];
        let doc = serialize_trajectory(&t);
        assert_eq!(doc.lines().count(), 4);
        let back = parse_trajectory(&doc).unwrap();
        assert_eq!(back.tool_names(), vec!["a", "b", "c"]);
        assert_eq!(serialize_trajectory(&back), doc);
    }

    #[test]
    fn gap_in_steps_is_rejected() {
        let mut t = Trajectory::new("t1");
        t.records = vec![record(1, "a", CallStatus::Success), record(3, "b", CallStatus::Success)];
        let err = parse_trajectory(&serialize_trajectory(&t)).unwrap_err();
        assert_eq!(err, TrajectoryError::NonMonotoneSteps { expected: 2, found: 3 });
    }

    #[test]
    fn thirty_records_accepted() {
        let mut t = Trajectory::new("t1");
        t.terminal = Terminal::StepCapExceeded;
        t.records = (1..=DEFAULT_MAX_STEPS as u32)
            .map(|i| record(i, "loop", CallStatus::Error))
            .collect();
        let back = parse_trajectory(&serialize_trajectory(&t)).unwrap();
        assert_eq!(back.records.len(), 30);
    }

    #[test]
    fn status_error_consistency_is_checked() {
        let mut r = record(1, "a", CallStatus::Success);
        r.error = Some(DenoisedError {
            category: ErrorCategory::Internal,
            message: "x".into(),
            hint: None,
        });
        let mut t = Trajectory::new("t");
        t.records.push(r);
        assert!(matches!(
            parse_trajectory(&serialize_trajectory(&t)),
            Err(TrajectoryError::MalformedDocument { .. })
        ));
    }
}
