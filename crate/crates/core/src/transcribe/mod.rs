//! Transcription of workflow definitions into the orchestration formats of
//! AWS Step Functions, Google Cloud Workflows and Azure Durable Functions,
//! with a census of the states and billed transitions of each program.

mod aws;
mod azure;
mod google;
mod walk;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::definition::{Encoding, PhaseKind, WorkflowDefinition};
use crate::net::ReplayChoices;
use crate::Platform;

pub use aws::to_aws;
pub use azure::to_azure;
pub use google::to_google;
pub use walk::{walk_aws, walk_google, DocumentRun};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranscribeError {
    #[error("phase `{phase}` cannot be transcribed: {reason}")]
    Untranscribable { phase: String, reason: String },
    #[error("execution shape is incomplete: {0}")]
    ShapeIncomplete(String),
    #[error("definition refers to unknown phase `{0}`")]
    UnknownPhase(String),
    #[error("malformed {platform} document: {reason}")]
    Malformed { platform: Platform, reason: String },
}

pub type Result<T> = std::result::Result<T, TranscribeError>;

/// The data-dependent facts that decide which states one execution visits:
/// map and loop widths, the target taken at each switch and the phases whose
/// function failed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionShape {
    #[serde(default)]
    pub fanouts: BTreeMap<String, usize>,
    #[serde(default)]
    pub routes: BTreeMap<String, String>,
    #[serde(default)]
    pub failed: BTreeSet<String>,
}

impl ExecutionShape {
    pub fn with_fanout(mut self, phase: &str, width: usize) -> ExecutionShape {
        self.fanouts.insert(phase.to_owned(), width);
        self
    }

    pub fn with_route(mut self, switch: &str, target: &str) -> ExecutionShape {
        self.routes.insert(switch.to_owned(), target.to_owned());
        self
    }

    pub fn with_failure(mut self, phase: &str) -> ExecutionShape {
        self.failed.insert(phase.to_owned());
        self
    }

    pub fn choices(&self) -> ReplayChoices {
        ReplayChoices { routes: self.routes.clone(), failed: self.failed.clone() }
    }

    /// Fan-outs for building the net; map and loop phases not on the taken
    /// path get width 1.
    pub fn net_fanouts(&self, defn: &WorkflowDefinition) -> BTreeMap<String, usize> {
        let mut out = self.fanouts.clone();
        for phase in &defn.phases {
            if matches!(phase.kind, PhaseKind::Map { .. } | PhaseKind::Loop { .. }) {
                out.entry(phase.name.clone()).or_insert(1);
            }
        }
        out
    }

    fn width(&self, phase: &str) -> Result<u64> {
        self.fanouts
            .get(phase)
            .map(|w| *w as u64)
            .ok_or_else(|| TranscribeError::ShapeIncomplete(format!("no fan-out for `{phase}`")))
    }
}

/// Billed transitions of one execution. Google bills steps calling
/// functions (external) at a different rate than the rest (internal).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCount {
    pub internal: u64,
    pub external: u64,
}

impl TransitionCount {
    pub fn total(&self) -> u64 {
        self.internal + self.external
    }

    fn add(&mut self, internal: u64, external: u64) {
        self.internal += internal;
        self.external += external;
    }
}

/// Census of one transcribed program.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCensus {
    pub platform: Platform,
    /// States (AWS), steps (Google) or phases (Azure) in the document.
    pub state_count: usize,
    defn: WorkflowDefinition,
}

/// Difference between a computed count and an externally reported one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusDelta {
    pub computed: u64,
    pub reported: u64,
}

impl CensusDelta {
    pub fn delta(&self) -> i64 {
        self.computed as i64 - self.reported as i64
    }

    pub fn matches(&self) -> bool {
        self.computed == self.reported
    }
}

impl StateCensus {
    pub fn transitions_per_execution(&self, shape: &ExecutionShape) -> Result<TransitionCount> {
        transitions(&self.defn, self.platform, shape)
    }

    pub fn compare_reported(&self, shape: &ExecutionShape, reported: u64) -> Result<CensusDelta> {
        Ok(CensusDelta { computed: self.transitions_per_execution(shape)?.total(), reported })
    }
}

/// Counts the billed transitions of one execution directly from the
/// definition.
///
/// AWS: one per state entered, a Parallel state counts its entry and exit,
/// plus two per execution. Google: one per executed step, where a task is a
/// call step and a parse step, a map adds four bookkeeping steps and three
/// per element around its sub-workflow, and a loop is one `for` step; plus
/// two per execution. Azure: one orchestrator awakening at start and one per
/// awaited batch of activities.
pub fn transitions(defn: &WorkflowDefinition, platform: Platform, shape: &ExecutionShape) -> Result<TransitionCount> {
    let mut count = TransitionCount::default();
    match platform {
        Platform::Aws | Platform::Google => count.add(2, 0),
        Platform::Azure => count.add(1, 0),
    }
    let completed = walk_rule(defn, &defn.root, platform, shape, &mut count)?;
    if !completed && platform == Platform::Google {
        // the final return step never runs
        count.internal -= 1;
    }
    Ok(count)
}

fn walk_rule(
    defn: &WorkflowDefinition,
    from: &str,
    platform: Platform,
    shape: &ExecutionShape,
    count: &mut TransitionCount,
) -> Result<bool> {
    let mut current = Some(from.to_owned());
    while let Some(name) = current {
        let phase = defn.phase(&name).ok_or_else(|| TranscribeError::UnknownPhase(name.clone()))?;
        current = phase.next.clone();
        match &phase.kind {
            PhaseKind::Task { .. } => {
                let failed = shape.failed.contains(&name);
                match platform {
                    // an uncaught failure skips the parse step
                    Platform::Google if failed && phase.catch.is_none() => count.add(0, 1),
                    Platform::Google => count.add(1, 1),
                    Platform::Aws | Platform::Azure => count.add(1, 0),
                }
                if failed {
                    match &phase.catch {
                        Some(handler) => current = Some(handler.clone()),
                        None => return Ok(false),
                    }
                }
            }
            PhaseKind::Repeat { count: n, .. } => {
                let n = *n as u64;
                match platform {
                    Platform::Aws | Platform::Azure => count.add(n, 0),
                    Platform::Google => count.add(n, n),
                }
            }
            PhaseKind::Map { body, .. } => {
                let w = shape.width(&name)?;
                let c = body.len() as u64;
                match platform {
                    Platform::Aws => count.add(1 + w * c, 0),
                    Platform::Google => count.add(4 + w * (3 + c), w * c),
                    Platform::Azure => count.add(1, 0),
                }
            }
            PhaseKind::Loop { .. } => {
                let w = shape.width(&name)?;
                match platform {
                    Platform::Aws => count.add(1 + w, 0),
                    Platform::Google => count.add(1 + w, w),
                    Platform::Azure => count.add(w, 0),
                }
            }
            PhaseKind::Parallel { branches } => {
                match platform {
                    Platform::Aws => count.add(2, 0),
                    Platform::Google | Platform::Azure => count.add(1, 0),
                }
                // branches are awaited as sub-orchestrations on Azure
                let mut inner = TransitionCount::default();
                for branch in branches {
                    if let Some(first) = branch.first() {
                        if !walk_rule(defn, first, platform, shape, &mut inner)? {
                            count.add(inner.internal, inner.external);
                            return Ok(false);
                        }
                    }
                }
                if platform != Platform::Azure {
                    count.add(inner.internal, inner.external);
                }
            }
            PhaseKind::Switch { .. } => {
                if platform != Platform::Azure {
                    count.add(1, 0);
                }
                let target = shape
                    .routes
                    .get(&name)
                    .ok_or_else(|| TranscribeError::ShapeIncomplete(format!("no route for switch `{name}`")))?;
                current = Some(target.clone());
            }
        }
    }
    Ok(true)
}

/// A machine-readable caveat attached to a transcription.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptionNote {
    pub phase: String,
    pub kind: NoteKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteKind {
    /// A sequential loop realised as a map with concurrency 1: every
    /// iteration receives its own array element, never the previous
    /// iteration's result.
    LoopInputNotChained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatformProgram {
    pub platform: Platform,
    pub document: Value,
    /// Activity manifest accompanying the Azure orchestrator payload.
    pub manifest: Option<Value>,
    pub census: StateCensus,
    pub notes: Vec<TranscriptionNote>,
}

impl PlatformProgram {
    /// Rendered document in the platform's structured-text form.
    pub fn text(&self) -> String {
        match self.platform {
            Platform::Azure => self.census.defn.to_canonical(),
            _ => pretty(&self.document),
        }
    }

    pub fn render(&self, encoding: Encoding) -> String {
        match encoding {
            Encoding::Json => self.text(),
            Encoding::Yaml => serde_yaml::to_string(&self.document).expect("documents are plain data"),
        }
    }

    /// Output files: name and content.
    pub fn files(&self) -> Vec<(String, String)> {
        match self.platform {
            Platform::Aws => vec![("state-machine.json".into(), self.text())],
            Platform::Google => {
                vec![("workflow.json".into(), self.text()), ("workflow.yaml".into(), self.render(Encoding::Yaml))]
            }
            Platform::Azure => vec![
                ("orchestrator.json".into(), self.text()),
                ("activities.json".into(), pretty(self.manifest.as_ref().unwrap_or(&Value::Null))),
            ],
        }
    }

    /// Parses the rendered text back and checks it against the platform
    /// grammar.
    pub fn self_check(&self) -> Result<()> {
        match self.platform {
            Platform::Aws => aws::check(&parse_text(self.platform, &self.text())?),
            Platform::Google => {
                let json = parse_text(self.platform, &self.text())?;
                let yaml: Value = serde_yaml::from_str(&self.render(Encoding::Yaml))
                    .map_err(|e| malformed(Platform::Google, e.to_string()))?;
                if json != yaml {
                    return Err(malformed(Platform::Google, "structured and indented encodings differ".into()));
                }
                google::check(&json)
            }
            Platform::Azure => azure::check(&self.text(), self.manifest.as_ref()),
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("documents are plain data");
    s.push('\n');
    s
}

fn parse_text(platform: Platform, text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| malformed(platform, e.to_string()))
}

fn malformed(platform: Platform, reason: String) -> TranscribeError {
    TranscribeError::Malformed { platform, reason }
}

fn untranscribable(phase: &str, reason: impl Into<String>) -> TranscribeError {
    TranscribeError::Untranscribable { phase: phase.to_owned(), reason: reason.into() }
}

pub fn transcribe(defn: &WorkflowDefinition, platform: Platform) -> Result<PlatformProgram> {
    match platform {
        Platform::Aws => to_aws(defn),
        Platform::Google => to_google(defn),
        Platform::Azure => to_azure(defn),
    }
}

/// Platforms ordered by transitions per execution under `shape`, fewest
/// first.
pub fn census_compare(defn: &WorkflowDefinition, shape: &ExecutionShape) -> Result<Vec<(Platform, u64)>> {
    let mut out = Vec::new();
    for platform in Platform::ALL {
        let program = transcribe(defn, platform)?;
        out.push((platform, program.census.transitions_per_execution(shape)?.total()));
    }
    out.sort_by_key(|(p, n)| (*n, *p));
    Ok(out)
}

/// Phases at the top level of a document (outside parallel branches), in
/// the order control first reaches them, then any unreachable ones.
fn top_level_order(defn: &WorkflowDefinition) -> Vec<&str> {
    let members = defn.branch_members();
    scope_order(defn, &defn.root, |p| !members.contains(p))
}

fn scope_order<'a>(defn: &'a WorkflowDefinition, root: &'a str, in_scope: impl Fn(&str) -> bool) -> Vec<&'a str> {
    let mut order = Vec::new();
    let mut seen = BTreeSet::new();
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(name) = queue.pop_front() {
        if !in_scope(name) || !seen.insert(name) {
            continue;
        }
        let Some(phase) = defn.phase(name) else { continue };
        order.push(phase.name.as_str());
        for s in phase.successors() {
            // parallel branch entries belong to the branch scopes
            if !matches!(&phase.kind, PhaseKind::Parallel { branches } if branches.iter().any(|b| b.first().map(String::as_str) == Some(s)))
            {
                queue.push_back(s);
            }
        }
    }
    order
}
