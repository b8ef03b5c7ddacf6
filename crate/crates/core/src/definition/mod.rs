//! Platform-agnostic workflow definitions.
//!
//! A definition is a set of named phases chained through `next`. Every phase
//! has a kind (task, map, loop, repeat, switch, parallel) and receives the
//! output payload of its predecessor as input.

mod document;
mod guard;
mod parse;
mod validate;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use guard::{Comparator, Guard, GuardError, Literal};
pub use parse::{parse_definition, DefinitionError, Encoding};
pub use validate::{validate, validate_with_fanouts, Diagnostic, DiagnosticKind, ValidationReport};

/// Dot-separated path into a tree-shaped payload. The single segment `$`
/// addresses the payload root (useful when a phase consumes the array
/// produced by a preceding map).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PayloadPath(Vec<String>);

impl PayloadPath {
    pub fn parse(text: &str) -> Option<PayloadPath> {
        let text = text.trim();
        if text.is_empty() {
            return None;
        }
        if text == "$" {
            return Some(PayloadPath(Vec::new()));
        }
        let segments: Vec<String> = text.split('.').map(str::to_owned).collect();
        if segments.iter().any(|s| s.is_empty()) {
            return None;
        }
        Some(PayloadPath(segments))
    }

    pub fn root() -> PayloadPath {
        PayloadPath(Vec::new())
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    /// First segment, which names the data element the path reads from.
    pub fn head(&self) -> Option<&str> {
        self.0.first().map(String::as_str)
    }

    /// Walks the payload. Numeric segments index arrays; a trailing `length`
    /// on an array or string that has no such key yields its length.
    pub fn resolve(&self, payload: &Value) -> Option<Value> {
        let mut current = payload.clone();
        for segment in &self.0 {
            current = match current {
                Value::Object(mut map) => map.remove(segment.as_str())?,
                Value::Array(items) if segment == "length" => Value::from(items.len()),
                Value::String(s) if segment == "length" => Value::from(s.chars().count()),
                Value::Array(mut items) => {
                    let idx: usize = segment.parse().ok()?;
                    if idx >= items.len() {
                        return None;
                    }
                    items.swap_remove(idx)
                }
                _ => return None,
            };
        }
        Some(current)
    }
}

impl fmt::Display for PayloadPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            f.write_str("$")
        } else {
            f.write_str(&self.0.join("."))
        }
    }
}

/// How a data element travels between functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceAnnotation {
    ObjectStorage,
    InvocationPayload,
    Transparent,
    Reference,
}

impl ResourceAnnotation {
    pub const ALL: [ResourceAnnotation; 4] = [
        ResourceAnnotation::ObjectStorage,
        ResourceAnnotation::InvocationPayload,
        ResourceAnnotation::Transparent,
        ResourceAnnotation::Reference,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResourceAnnotation::ObjectStorage => "object_storage",
            ResourceAnnotation::InvocationPayload => "invocation_payload",
            ResourceAnnotation::Transparent => "transparent",
            ResourceAnnotation::Reference => "reference",
        }
    }

    pub fn from_name(name: &str) -> Option<ResourceAnnotation> {
        Self::ALL.into_iter().find(|a| a.as_str() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataDecl {
    pub name: String,
    pub channel: ResourceAnnotation,
}

/// Declared data interface of a serverless function.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FunctionSpec {
    pub name: String,
    pub reads: Vec<DataDecl>,
    pub writes: Vec<DataDecl>,
    pub destroys: Vec<String>,
    /// Name of the local kernel that executes this function; defaults to the
    /// function name.
    pub kernel: Option<String>,
}

impl FunctionSpec {
    pub fn kernel_name(&self) -> &str {
        self.kernel.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CaseGuard {
    Single(Guard),
    /// Conjunction of comparisons. Parsed so it can be diagnosed, never
    /// executed or transcribed.
    All(Vec<Guard>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchCase {
    pub guard: CaseGuard,
    pub next: Option<String>,
}

impl SwitchCase {
    pub fn single_guard(&self) -> Option<&Guard> {
        match &self.guard {
            CaseGuard::Single(g) => Some(g),
            CaseGuard::All(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhaseKind {
    Task {
        func: String,
    },
    /// `body` holds one function, or a chain executed in order per element.
    Map {
        body: Vec<String>,
        array: PayloadPath,
        common_parameters: Option<PayloadPath>,
    },
    Loop {
        func: String,
        array: PayloadPath,
    },
    Repeat {
        func: String,
        count: u32,
    },
    Switch {
        cases: Vec<SwitchCase>,
        /// Every `default` declaration, in document order. More than one is a
        /// validation error.
        defaults: Vec<String>,
    },
    Parallel {
        branches: Vec<Vec<String>>,
    },
}

impl PhaseKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            PhaseKind::Task { .. } => "task",
            PhaseKind::Map { .. } => "map",
            PhaseKind::Loop { .. } => "loop",
            PhaseKind::Repeat { .. } => "repeat",
            PhaseKind::Switch { .. } => "switch",
            PhaseKind::Parallel { .. } => "parallel",
        }
    }

    /// Functions invoked directly by this phase, in invocation order.
    pub fn functions(&self) -> Vec<&str> {
        match self {
            PhaseKind::Task { func } | PhaseKind::Loop { func, .. } | PhaseKind::Repeat { func, .. } => {
                vec![func.as_str()]
            }
            PhaseKind::Map { body, .. } => body.iter().map(String::as_str).collect(),
            PhaseKind::Switch { .. } | PhaseKind::Parallel { .. } => Vec::new(),
        }
    }

    /// Phase runs exactly one function transition per step, so it can act as
    /// the AND-split or AND-join of its neighbours.
    pub fn is_sequential(&self) -> bool {
        matches!(self, PhaseKind::Task { .. } | PhaseKind::Loop { .. } | PhaseKind::Repeat { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub name: String,
    pub kind: PhaseKind,
    pub next: Option<String>,
    /// Failure handler: the phase to run when this task's function fails.
    /// Used to express compensation chains.
    pub catch: Option<String>,
}

impl Phase {
    pub fn task(name: &str, func: &str) -> Phase {
        Phase { name: name.to_owned(), kind: PhaseKind::Task { func: func.to_owned() }, next: None, catch: None }
    }

    pub fn with_next(mut self, next: &str) -> Phase {
        self.next = Some(next.to_owned());
        self
    }

    pub fn with_catch(mut self, handler: &str) -> Phase {
        self.catch = Some(handler.to_owned());
        self
    }

    /// Every phase name this phase can hand control to.
    pub fn successors(&self) -> Vec<&str> {
        let mut out = Vec::new();
        if let Some(n) = &self.next {
            out.push(n.as_str());
        }
        if let Some(c) = &self.catch {
            out.push(c.as_str());
        }
        match &self.kind {
            PhaseKind::Switch { cases, defaults } => {
                out.extend(cases.iter().filter_map(|c| c.next.as_deref()));
                out.extend(defaults.iter().map(String::as_str));
            }
            PhaseKind::Parallel { branches } => {
                out.extend(branches.iter().filter_map(|b| b.first().map(String::as_str)));
            }
            _ => {}
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowDefinition {
    pub name: String,
    pub root: String,
    pub phases: Vec<Phase>,
    pub functions: Vec<FunctionSpec>,
}

impl WorkflowDefinition {
    pub fn new(name: &str, root: &str) -> WorkflowDefinition {
        WorkflowDefinition { name: name.to_owned(), root: root.to_owned(), phases: Vec::new(), functions: Vec::new() }
    }

    pub fn with_phase(mut self, phase: Phase) -> WorkflowDefinition {
        self.phases.push(phase);
        self
    }

    pub fn phase(&self, name: &str) -> Option<&Phase> {
        self.phases.iter().find(|p| p.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionSpec> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Phases that end the workflow: every non-switch phase without `next`.
    /// Phases inside parallel branches end their branch instead.
    pub fn terminal_phases(&self) -> BTreeSet<&str> {
        self.phases
            .iter()
            .filter(|p| p.next.is_none() && !matches!(p.kind, PhaseKind::Switch { .. }))
            .map(|p| p.name.as_str())
            .collect()
    }

    /// Distinct function names referenced by any phase, in first-use order.
    pub fn referenced_functions(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for phase in &self.phases {
            for f in phase.kind.functions() {
                if seen.insert(f) {
                    out.push(f);
                }
            }
        }
        out
    }

    /// Phase names that belong to some parallel branch.
    pub fn branch_members(&self) -> BTreeSet<&str> {
        self.phases
            .iter()
            .filter_map(|p| match &p.kind {
                PhaseKind::Parallel { branches } => Some(branches),
                _ => None,
            })
            .flatten()
            .flatten()
            .map(String::as_str)
            .collect()
    }

    /// Canonical (JSON) rendering; parses back to an equal definition.
    pub fn to_canonical(&self) -> String {
        parse::serialize(self, Encoding::Json)
    }

    pub fn to_encoding(&self, encoding: Encoding) -> String {
        parse::serialize(self, encoding)
    }
}
