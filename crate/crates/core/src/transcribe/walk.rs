//! Abstract interpreters for rendered AWS and Google documents. They count
//! transitions from the document alone, independently of the definition.

use std::collections::BTreeMap;

use serde_json::Value;

use super::google::{entries, nested, FUNCTION_BASE, PHASE_HEADER};
use super::{malformed, ExecutionShape, Result, TranscribeError, TransitionCount};
use crate::Platform;

const STEP_LIMIT: usize = 1_000_000;

/// What executing a document under one shape did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocumentRun {
    pub transitions: TransitionCount,
    /// `(phase, function)` of every function execution, in visiting order.
    pub executions: Vec<(String, String)>,
    /// False when an uncaught failure stopped the execution.
    pub completed: bool,
}

impl DocumentRun {
    pub fn execution_counts(&self) -> BTreeMap<(String, String), usize> {
        let mut out = BTreeMap::new();
        for e in &self.executions {
            *out.entry(e.clone()).or_insert(0) += 1;
        }
        out
    }
}

struct Walker<'a> {
    shape: &'a ExecutionShape,
    run: DocumentRun,
    steps: usize,
    platform: Platform,
}

impl Walker<'_> {
    fn tick(&mut self) -> Result<()> {
        self.steps += 1;
        if self.steps > STEP_LIMIT {
            return Err(malformed(self.platform, "execution does not terminate".into()));
        }
        Ok(())
    }

    fn width(&self, phase: &str) -> Result<usize> {
        self.shape
            .fanouts
            .get(phase)
            .copied()
            .ok_or_else(|| TranscribeError::ShapeIncomplete(format!("no fan-out for `{phase}`")))
    }

    fn route(&self, switch: &str) -> Result<&str> {
        self.shape
            .routes
            .get(switch)
            .map(String::as_str)
            .ok_or_else(|| TranscribeError::ShapeIncomplete(format!("no route for switch `{switch}`")))
    }
}

/// Executes an AWS state machine: one transition per state entered (two for
/// Parallel states) plus two per execution.
pub fn walk_aws(doc: &Value, shape: &ExecutionShape) -> Result<DocumentRun> {
    let mut w = Walker { shape, run: DocumentRun::default(), steps: 0, platform: Platform::Aws };
    w.run.transitions.internal += 2;
    w.run.completed = aws_scope(&mut w, doc)?;
    Ok(w.run)
}

fn aws_phase<'a>(name: &'a str, state: &'a Value) -> &'a str {
    match state.get("Type").and_then(Value::as_str) {
        Some("Task") => state.get("Comment").and_then(Value::as_str).unwrap_or(name),
        _ => name,
    }
}

fn aws_scope(w: &mut Walker, scope: &Value) -> Result<bool> {
    let missing = |what: &str| malformed(Platform::Aws, format!("missing {what}"));
    let states = scope.get("States").and_then(Value::as_object).ok_or_else(|| missing("States"))?;
    let mut current = scope.get("StartAt").and_then(Value::as_str).ok_or_else(|| missing("StartAt"))?.to_owned();
    loop {
        w.tick()?;
        let state = states.get(&current).ok_or_else(|| missing(&format!("state `{current}`")))?;
        match state.get("Type").and_then(Value::as_str).unwrap_or("") {
            "Task" => {
                w.run.transitions.internal += 1;
                let phase = aws_phase(&current, state).to_owned();
                let func = state
                    .pointer("/Parameters/FunctionName")
                    .and_then(Value::as_str)
                    .ok_or_else(|| missing("FunctionName"))?;
                w.run.executions.push((phase.clone(), func.to_owned()));
                if w.shape.failed.contains(&phase) {
                    match state.pointer("/Catch/0/Next").and_then(Value::as_str) {
                        Some(handler) => {
                            current = handler.to_owned();
                            continue;
                        }
                        None => return Ok(false),
                    }
                }
            }
            "Map" => {
                w.run.transitions.internal += 1;
                let processor = state.get("ItemProcessor").ok_or_else(|| missing("ItemProcessor"))?;
                for _ in 0..w.width(&current)? {
                    if !aws_scope(w, processor)? {
                        return Ok(false);
                    }
                }
            }
            "Parallel" => {
                w.run.transitions.internal += 2;
                for branch in state.get("Branches").and_then(Value::as_array).into_iter().flatten() {
                    if !aws_scope(w, branch)? {
                        return Ok(false);
                    }
                }
            }
            "Choice" => {
                w.run.transitions.internal += 1;
                let target = w.route(&current)?.to_owned();
                let offered = state
                    .get("Choices")
                    .and_then(Value::as_array)
                    .into_iter()
                    .flatten()
                    .filter_map(|c| c.get("Next"))
                    .chain(state.get("Default"))
                    .filter_map(Value::as_str);
                let mut chosen = None;
                for c in offered {
                    if states.get(c).is_some_and(|s| aws_phase(c, s) == target) {
                        chosen = Some(c.to_owned());
                        break;
                    }
                }
                current = chosen.ok_or_else(|| {
                    TranscribeError::ShapeIncomplete(format!("switch `{current}` offers no route to `{target}`"))
                })?;
                continue;
            }
            other => return Err(malformed(Platform::Aws, format!("cannot execute state type `{other}`"))),
        }
        if state.get("End") == Some(&Value::Bool(true)) {
            return Ok(true);
        }
        current = state
            .get("Next")
            .and_then(Value::as_str)
            .ok_or_else(|| missing(&format!("Next of `{current}`")))?
            .to_owned();
    }
}

enum Flow {
    Fallthrough,
    Jump(String),
    End,
    Return,
    Raise,
}

/// Executes a Google workflow: one transition per executed step (a `try`
/// wrapper is not a step of its own) plus the start of the execution; the
/// final `return` supplies the second per-execution transition.
pub fn walk_google(doc: &Value, shape: &ExecutionShape) -> Result<DocumentRun> {
    let mut w = Walker { shape, run: DocumentRun::default(), steps: 0, platform: Platform::Google };
    w.run.transitions.internal += 1;
    let main = doc
        .pointer("/main/steps")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed(Platform::Google, "missing main steps".into()))?;
    w.run.completed = match google_list(&mut w, doc, main)? {
        Flow::Raise => false,
        Flow::Jump(t) => return Err(malformed(Platform::Google, format!("jump to unknown step `{t}`"))),
        _ => true,
    };
    Ok(w.run)
}

fn google_list(w: &mut Walker, doc: &Value, steps: &[Value]) -> Result<Flow> {
    let named: Vec<(&str, &Value)> = entries(steps)
        .map(|e| e.ok_or_else(|| malformed(Platform::Google, "step is not a single-key mapping".into())))
        .collect::<Result<_>>()?;
    let mut idx = 0;
    while idx < named.len() {
        w.tick()?;
        let (name, body) = named[idx];
        let target = match google_step(w, doc, name, body)? {
            Flow::Fallthrough => body.get("next").and_then(Value::as_str).map(str::to_owned),
            Flow::Jump(t) => Some(t),
            other => return Ok(other),
        };
        match target.as_deref() {
            None => idx += 1,
            Some("end") => return Ok(Flow::End),
            Some(t) => match named.iter().position(|(n, _)| *n == t) {
                Some(i) => idx = i,
                None => return Ok(Flow::Jump(t.to_owned())),
            },
        }
    }
    Ok(Flow::Fallthrough)
}

fn google_step(w: &mut Walker, doc: &Value, name: &str, body: &Value) -> Result<Flow> {
    if let Some(inner) = body.pointer("/try/steps").and_then(Value::as_array) {
        return match google_list(w, doc, inner)? {
            Flow::Raise => match body.pointer("/except/steps").and_then(Value::as_array) {
                Some(handler) => match google_list(w, doc, handler)? {
                    Flow::End => Ok(Flow::Fallthrough),
                    other => Ok(other),
                },
                None => Ok(Flow::Raise),
            },
            Flow::End => Ok(Flow::Fallthrough),
            other => Ok(other),
        };
    }
    if let Some(target) = body.get("call").and_then(Value::as_str) {
        if target.starts_with("http.") {
            w.run.transitions.external += 1;
            let phase = body
                .pointer(&format!("/args/headers/{PHASE_HEADER}"))
                .and_then(Value::as_str)
                .unwrap_or(name)
                .to_owned();
            let url = body.pointer("/args/url").and_then(Value::as_str).unwrap_or("");
            let func = url.strip_prefix(FUNCTION_BASE).unwrap_or(url).trim_start_matches('/');
            w.run.executions.push((phase.clone(), func.to_owned()));
            if w.shape.failed.contains(&phase) {
                return Ok(Flow::Raise);
            }
            return Ok(Flow::Fallthrough);
        }
        w.run.transitions.internal += 1;
        let sub = doc
            .get(target)
            .and_then(|s| s.get("steps"))
            .and_then(Value::as_array)
            .ok_or_else(|| malformed(Platform::Google, format!("unknown sub-workflow `{target}`")))?;
        return match google_list(w, doc, sub)? {
            Flow::Raise => Ok(Flow::Raise),
            Flow::Jump(t) => Err(malformed(Platform::Google, format!("jump out of sub-workflow to `{t}`"))),
            _ => Ok(Flow::Fallthrough),
        };
    }
    w.run.transitions.internal += 1;
    if body.get("assign").is_some() {
        return Ok(Flow::Fallthrough);
    }
    if body.get("return").is_some() {
        return Ok(Flow::Return);
    }
    if body.get("raise").is_some() {
        return Ok(Flow::Raise);
    }
    if let Some(conditions) = body.get("switch").and_then(Value::as_array) {
        let target = w.route(name)?.to_owned();
        let offered = conditions.iter().filter_map(|c| c.get("next")).chain(body.get("next")).filter_map(Value::as_str);
        for c in offered {
            if c == target {
                return Ok(Flow::Jump(target));
            }
        }
        return Err(TranscribeError::ShapeIncomplete(format!("switch `{name}` offers no route to `{target}`")));
    }
    let iterate = |w: &mut Walker, n: usize, steps: &[Value]| -> Result<Option<Flow>> {
        for _ in 0..n {
            match google_list(w, doc, steps)? {
                Flow::Raise => return Ok(Some(Flow::Raise)),
                Flow::Return => return Ok(Some(Flow::Return)),
                Flow::Jump(t) => return Err(malformed(Platform::Google, format!("jump out of a loop to `{t}`"))),
                _ => {}
            }
        }
        Ok(None)
    };
    if let Some(steps) = body.pointer("/for/steps").and_then(Value::as_array) {
        let n = w.width(name)?;
        return Ok(iterate(w, n, steps)?.unwrap_or(Flow::Fallthrough));
    }
    if let Some(par) = body.get("parallel") {
        if let Some(steps) = par.pointer("/for/steps").and_then(Value::as_array) {
            let phase = name.strip_suffix("_run").unwrap_or(name);
            let n = w.width(phase)?;
            return Ok(iterate(w, n, steps)?.unwrap_or(Flow::Fallthrough));
        }
        for branch in nested(body) {
            if let Some(flow) = iterate(w, 1, branch)? {
                return Ok(flow);
            }
        }
        return Ok(Flow::Fallthrough);
    }
    Err(malformed(Platform::Google, format!("cannot execute step `{name}`")))
}
