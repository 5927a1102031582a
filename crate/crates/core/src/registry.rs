//! Tool schemas, argument validation, and the prompt-facing tool manifest.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::args::{ArgValue, Args};
use crate::paths::normalize_relative;
use crate::sandbox::ToolExecutor;

/// Argument every tool with output paths accepts to lift the write lock.
pub const OVERWRITE_ARG: &str = "overwrite";

/// Relative tolerance used for numeric equivalence when a parameter does
/// not declare its own.
pub const DEFAULT_NUMERIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Integer,
    Real,
    String,
    Boolean,
    Enum,
    Path,
    List,
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamKind::Integer => "integer",
            ParamKind::Real => "real",
            ParamKind::String => "string",
            ParamKind::Boolean => "boolean",
            ParamKind::Enum => "enum",
            ParamKind::Path => "path",
            ParamKind::List => "list",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    InputPath,
    OutputPath,
    Stylistic,
    #[default]
    Plain,
}

impl ParamRole {
    pub fn is_path(self) -> bool {
        matches!(self, ParamRole::InputPath | ParamRole::OutputPath)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default)]
    pub role: ParamRole,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enum_values: Option<Vec<String>>,
    /// Relative tolerance for numeric equivalence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_tolerance: Option<f64>,
    /// Element kind for `list` parameters (defaults to string).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_kind: Option<ParamKind>,
    /// List equivalence ignores order when set.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unordered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, kind: ParamKind) -> Self {
        ParamSpec {
            name: name.into(),
            kind,
            role: ParamRole::Plain,
            required: false,
            enum_values: None,
            numeric_tolerance: None,
            item_kind: None,
            unordered: false,
            description: None,
        }
    }

    pub fn input_path(name: impl Into<String>) -> Self {
        Self::new(name, ParamKind::Path).role(ParamRole::InputPath).required()
    }

    pub fn output_path(name: impl Into<String>) -> Self {
        Self::new(name, ParamKind::Path).role(ParamRole::OutputPath).required()
    }

    pub fn role(mut self, role: ParamRole) -> Self {
        self.role = role;
        self
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }

    pub fn values<I: IntoIterator<Item = S>, S: Into<String>>(mut self, values: I) -> Self {
        self.enum_values = Some(values.into_iter().map(Into::into).collect());
        self
    }

    pub fn items(mut self, kind: ParamKind) -> Self {
        self.item_kind = Some(kind);
        self
    }

    pub fn tolerance(mut self, tol: f64) -> Self {
        self.numeric_tolerance = Some(tol);
        self
    }

    pub fn describe(mut self, text: impl Into<String>) -> Self {
        self.description = Some(text.into());
        self
    }

    pub fn tolerance_or_default(&self) -> f64 {
        self.numeric_tolerance.unwrap_or(DEFAULT_NUMERIC_TOLERANCE)
    }

    fn element_kind(&self) -> ParamKind {
        self.item_kind.unwrap_or(ParamKind::String)
    }

    fn check(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("parameter with empty name".into());
        }
        if self.kind == ParamKind::Enum && self.enum_values.as_ref().is_none_or(|v| v.is_empty()) {
            return Err(format!("enum parameter `{}` declares no values", self.name));
        }
        if self.role.is_path() {
            let path_like = self.kind == ParamKind::Path
                || (self.kind == ParamKind::List && self.item_kind == Some(ParamKind::Path));
            if !path_like {
                return Err(format!("path-role parameter `{}` must have path kind", self.name));
            }
        }
        if matches!(self.item_kind, Some(ParamKind::List)) {
            return Err(format!("parameter `{}` nests lists", self.name));
        }
        if let Some(tol) = self.numeric_tolerance {
            if !(tol >= 0.0) {
                return Err(format!("parameter `{}` has a negative tolerance", self.name));
            }
        }
        Ok(())
    }

    fn signature(&self) -> String {
        let mut kind = match (self.kind, &self.enum_values) {
            (ParamKind::Enum, Some(values)) => format!("enum {{{}}}", values.join("|")),
            (ParamKind::List, _) => format!("list of {}", self.element_kind()),
            (k, _) => k.to_string(),
        };
        match self.role {
            ParamRole::InputPath => kind.push_str(", input path"),
            ParamRole::OutputPath => kind.push_str(", output path"),
            ParamRole::Stylistic => kind.push_str(", stylistic"),
            ParamRole::Plain => {}
        }
        kind.push_str(if self.required { ", required" } else { ", optional" });
        match &self.description {
            Some(d) => format!("{}: {kind}. {d}", self.name),
            None => format!("{}: {kind}", self.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    /// Visualization tools; their single output path is the map product.
    #[serde(default)]
    pub produces_map: bool,
}

impl ToolSchema {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        ToolSchema {
            name: name.into(),
            description: description.into(),
            params: Vec::new(),
            produces_map: false,
        }
    }

    pub fn param(mut self, spec: ParamSpec) -> Self {
        self.params.push(spec);
        self
    }

    pub fn map_product(mut self) -> Self {
        self.produces_map = true;
        self
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn output_params(&self) -> impl Iterator<Item = &ParamSpec> {
        self.params.iter().filter(|p| p.role == ParamRole::OutputPath)
    }

    pub fn has_outputs(&self) -> bool {
        self.output_params().next().is_some()
    }

    /// Output paths named by `args`, in schema order.
    pub fn declared_outputs(&self, args: &Args) -> Vec<String> {
        let mut out = Vec::new();
        for spec in self.output_params() {
            match args.get(&spec.name) {
                Some(ArgValue::Str(p)) => out.push(normalize_relative(p).unwrap_or_else(|_| p.clone())),
                Some(ArgValue::List(items)) => out.extend(
                    items
                        .iter()
                        .filter_map(ArgValue::as_str)
                        .map(|p| normalize_relative(p).unwrap_or_else(|_| p.to_owned())),
                ),
                _ => {}
            }
        }
        out
    }

    pub fn check(&self) -> Result<(), RegistryError> {
        let bad = |msg: String| RegistryError::InvalidSchema { tool: self.name.clone(), message: msg };
        if self.name.trim().is_empty() {
            return Err(bad("empty tool name".into()));
        }
        let mut seen = HashSet::new();
        for p in &self.params {
            p.check().map_err(bad)?;
            if !seen.insert(p.name.as_str()) {
                return Err(bad(format!("duplicate parameter `{}`", p.name)));
            }
        }
        if self.produces_map && self.output_params().count() > 1 {
            return Err(bad("map tools must declare at most one output path".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("tool `{0}` is already registered")]
    DuplicateTool(String),
    #[error("invalid schema for `{tool}`: {message}")]
    InvalidSchema { tool: String, message: String },
    #[error("registry is empty")]
    EmptyRegistry,
    #[error("cannot load tool manifest: {0}")]
    Load(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("missing required parameter `{param}` for {tool}")]
    MissingParam { tool: String, param: String },
    #[error("bad parameter `{param}` for {tool}: expected {expected}, got {found}")]
    TypeMismatch {
        tool: String,
        param: String,
        expected: String,
        found: String,
    },
    #[error("unknown parameter `{param}` for {tool}")]
    UnknownParam { tool: String, param: String },
}

/// Arguments after validation plus a note per coercion applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub args: Args,
    pub notes: Vec<String>,
}

struct Entry {
    schema: ToolSchema,
    executor: Arc<dyn ToolExecutor>,
}

/// Declared tools and their executors. Built once, then shared read-only.
#[derive(Default)]
pub struct Registry {
    tools: BTreeMap<String, Entry>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry").field("tools", &self.tools.keys().collect::<Vec<_>>()).finish()
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        schema: ToolSchema,
        executor: Arc<dyn ToolExecutor>,
    ) -> Result<(), RegistryError> {
        schema.check()?;
        if self.tools.contains_key(&schema.name) {
            return Err(RegistryError::DuplicateTool(schema.name));
        }
        self.tools.insert(schema.name.clone(), Entry { schema, executor });
        Ok(())
    }

    pub fn lookup(&self, name: &str) -> Option<&ToolSchema> {
        self.tools.get(name).map(|e| &e.schema)
    }

    pub fn executor(&self, name: &str) -> Option<Arc<dyn ToolExecutor>> {
        self.tools.get(name).map(|e| Arc::clone(&e.executor))
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }

    pub fn schemas(&self) -> impl Iterator<Item = &ToolSchema> {
        self.tools.values().map(|e| &e.schema)
    }

    /// Checks required params, coerces kinds, rejects unknown params and
    /// canonicalizes paths. Idempotent on its own output.
    pub fn validate_args(&self, tool: &str, args: &Args) -> Result<Validated, ValidationError> {
        let schema = self
            .lookup(tool)
            .ok_or_else(|| ValidationError::UnknownTool(tool.to_owned()))?;
        validate_against(schema, args)
    }

    pub fn render_manifest(&self) -> Result<String, RegistryError> {
        if self.is_empty() {
            return Err(RegistryError::EmptyRegistry);
        }
        Ok(render_schemas(self.schemas()))
    }
}

/// Deterministic manifest text: tools sorted by name, one header line per
/// tool followed by one line per parameter.
pub fn render_schemas<'a>(schemas: impl IntoIterator<Item = &'a ToolSchema>) -> String {
    let mut sorted: Vec<&ToolSchema> = schemas.into_iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut out = String::new();
    for schema in sorted {
        let marker = if schema.produces_map { " [map product]" } else { "" };
        let _ = writeln!(out, "tool {}{marker}: {}", schema.name, schema.description.trim());
        for p in &schema.params {
            let _ = writeln!(out, "  - {}", p.signature());
        }
    }
    out
}

pub fn validate_against(schema: &ToolSchema, args: &Args) -> Result<Validated, ValidationError> {
    let tool = &schema.name;
    for name in args.keys() {
        let reserved = name == OVERWRITE_ARG && schema.has_outputs();
        if schema.get(name).is_none() && !reserved {
            return Err(ValidationError::UnknownParam { tool: tool.clone(), param: name.clone() });
        }
    }
    for spec in &schema.params {
        if spec.required && !args.contains_key(&spec.name) {
            return Err(ValidationError::MissingParam { tool: tool.clone(), param: spec.name.clone() });
        }
    }

    let mut out = Args::new();
    let mut notes = Vec::new();
    for (name, value) in args {
        let normalized = match schema.get(name) {
            Some(spec) => coerce(spec, value, &mut notes),
            None => coerce_bool(value, name, &mut notes),
        }
        .map_err(|(expected, found)| ValidationError::TypeMismatch {
            tool: tool.clone(),
            param: name.clone(),
            expected,
            found,
        })?;
        out.insert(name.clone(), normalized);
    }
    Ok(Validated { args: out, notes })
}

type CoerceResult = Result<ArgValue, (String, String)>;

fn describe(value: &ArgValue) -> String {
    format!("{} {value}", value.type_name())
}

/// Lenient per-parameter normalization used when comparing parameters.
/// Values that cannot be coerced are returned unchanged.
pub fn normalize_value(spec: &ParamSpec, value: &ArgValue) -> ArgValue {
    let mut scratch = Vec::new();
    coerce(spec, value, &mut scratch).unwrap_or_else(|_| value.clone())
}

fn coerce(spec: &ParamSpec, value: &ArgValue, notes: &mut Vec<String>) -> CoerceResult {
    if spec.kind == ParamKind::List {
        let item_kind = spec.element_kind();
        let items: Vec<ArgValue> = match value {
            ArgValue::List(items) => items.clone(),
            scalar => {
                notes.push(format!("{}: wrapped single value into a list", spec.name));
                vec![scalar.clone()]
            }
        };
        let mut out = Vec::with_capacity(items.len());
        for item in &items {
            let coerced = coerce_scalar(&spec.name, item_kind, spec.enum_values.as_deref(), item, notes)
                .map_err(|(e, f)| (format!("list of {e}"), f))?;
            out.push(coerced);
        }
        return Ok(ArgValue::List(out));
    }
    coerce_scalar(&spec.name, spec.kind, spec.enum_values.as_deref(), value, notes)
}

fn coerce_bool(value: &ArgValue, name: &str, notes: &mut Vec<String>) -> CoerceResult {
    coerce_scalar(name, ParamKind::Boolean, None, value, notes)
}

fn coerce_scalar(
    name: &str,
    kind: ParamKind,
    enum_values: Option<&[String]>,
    value: &ArgValue,
    notes: &mut Vec<String>,
) -> CoerceResult {
    let mismatch = |expected: &str| Err((expected.to_owned(), describe(value)));
    match (kind, value) {
        (ParamKind::Integer, ArgValue::Int(_)) => Ok(value.clone()),
        (ParamKind::Integer, ArgValue::Real(r)) if r.fract() == 0.0 && r.abs() < 9.0e15 => {
            notes.push(format!("{name}: coerced real {r} to integer"));
            Ok(ArgValue::Int(*r as i64))
        }
        (ParamKind::Integer, ArgValue::Str(s)) => match s.trim().parse::<i64>() {
            Ok(i) => {
                notes.push(format!("{name}: coerced string \"{s}\" to integer {i}"));
                Ok(ArgValue::Int(i))
            }
            Err(_) => mismatch("integer"),
        },
        (ParamKind::Integer, _) => mismatch("integer"),

        (ParamKind::Real, ArgValue::Real(_)) => Ok(value.clone()),
        (ParamKind::Real, ArgValue::Int(i)) => Ok(ArgValue::Real(*i as f64)),
        (ParamKind::Real, ArgValue::Str(s)) => match s.trim().parse::<f64>() {
            Ok(r) if r.is_finite() => {
                notes.push(format!("{name}: coerced string \"{s}\" to real {r:?}"));
                Ok(ArgValue::Real(r))
            }
            _ => mismatch("real"),
        },
        (ParamKind::Real, _) => mismatch("real"),

        (ParamKind::String, ArgValue::Str(_)) => Ok(value.clone()),
        (ParamKind::String, _) => mismatch("string"),

        (ParamKind::Boolean, ArgValue::Bool(_)) => Ok(value.clone()),
        (ParamKind::Boolean, ArgValue::Str(s)) => match s.trim().to_ascii_lowercase().as_str() {
            "true" => {
                notes.push(format!("{name}: coerced string \"{s}\" to boolean true"));
                Ok(ArgValue::Bool(true))
            }
            "false" => {
                notes.push(format!("{name}: coerced string \"{s}\" to boolean false"));
                Ok(ArgValue::Bool(false))
            }
            _ => mismatch("boolean"),
        },
        (ParamKind::Boolean, _) => mismatch("boolean"),

        (ParamKind::Enum, ArgValue::Str(s)) => {
            let values = enum_values.unwrap_or_default();
            if values.iter().any(|v| v == s) {
                return Ok(value.clone());
            }
            match values.iter().find(|v| v.eq_ignore_ascii_case(s.trim())) {
                Some(canonical) => {
                    notes.push(format!("{name}: matched \"{s}\" to \"{canonical}\""));
                    Ok(ArgValue::Str(canonical.clone()))
                }
                None => mismatch(&format!("one of {}", values.join(", "))),
            }
        }
        (ParamKind::Enum, _) => {
            let values = enum_values.unwrap_or_default();
            mismatch(&format!("one of {}", values.join(", ")))
        }

        (ParamKind::Path, ArgValue::Str(s)) => match normalize_relative(s) {
            Ok(p) => {
                if &p != s {
                    notes.push(format!("{name}: normalized path \"{s}\" to \"{p}\""));
                }
                Ok(ArgValue::Str(p))
            }
            Err(e) => Err(("workspace-relative path".into(), format!("\"{s}\" ({e})"))),
        },
        (ParamKind::Path, _) => mismatch("path"),

        (ParamKind::List, _) => mismatch("scalar list element"),
    }
}

/// One entry of a tool manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    #[serde(default)]
    pub produces_map: bool,
    /// Command line of an out-of-process worker serving this tool. Tools
    /// without a worker must name a built-in tool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker: Option<Vec<String>>,
}

impl ManifestEntry {
    pub fn schema(&self) -> ToolSchema {
        ToolSchema {
            name: self.name.clone(),
            description: self.description.clone(),
            params: self.params.clone(),
            produces_map: self.produces_map,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestDocument {
    Wrapped { tools: Vec<ManifestEntry> },
    Bare(Vec<ManifestEntry>),
}

pub fn parse_manifest(document: &str) -> Result<Vec<ManifestEntry>, RegistryError> {
    let doc: ManifestDocument =
        serde_json::from_str(document).map_err(|e| RegistryError::Load(e.to_string()))?;
    Ok(match doc {
        ManifestDocument::Wrapped { tools } => tools,
        ManifestDocument::Bare(tools) => tools,
    })
}
