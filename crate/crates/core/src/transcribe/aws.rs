use serde_json::{json, Map, Value};

use super::{
    malformed, scope_order, top_level_order, untranscribable, NoteKind, PlatformProgram, Result, StateCensus,
    TranscriptionNote,
};
use crate::definition::{CaseGuard, Comparator, Guard, Literal, PayloadPath, Phase, PhaseKind, WorkflowDefinition};
use crate::Platform;

const LAMBDA_INVOKE: &str = "arn:aws:states:::lambda:invoke";

pub(super) const LOOP_CAVEAT: &str = "sequential map with MaxConcurrency 1: every iteration receives its own array \
    element, so iteration i+1 cannot read the result of iteration i except through object storage";

/// Emits an Amazon States Language state machine.
pub fn to_aws(defn: &WorkflowDefinition) -> Result<PlatformProgram> {
    let mut notes = Vec::new();
    let order = top_level_order(defn);
    let states = states(defn, &order, &mut notes)?;
    let document = json!({
        "Comment": defn.name,
        "StartAt": entry_state(defn, &defn.root),
        "States": states,
    });
    let state_count = count_states(&document);
    Ok(PlatformProgram {
        platform: Platform::Aws,
        document,
        manifest: None,
        census: StateCensus { platform: Platform::Aws, state_count, defn: defn.clone() },
        notes,
    })
}

/// Name of the first state of a phase; repeats are unrolled into
/// `<phase>_0`, `<phase>_1`, ...
fn entry_state(defn: &WorkflowDefinition, phase: &str) -> String {
    match defn.phase(phase).map(|p| &p.kind) {
        Some(PhaseKind::Repeat { .. }) => format!("{phase}_0"),
        _ => phase.to_owned(),
    }
}

fn json_path(path: &PayloadPath) -> String {
    let mut out = String::from("$");
    for seg in path.segments() {
        if seg.chars().all(|c| c.is_ascii_digit()) {
            out.push_str(&format!("[{seg}]"));
        } else {
            out.push('.');
            out.push_str(seg);
        }
    }
    out
}

fn set_successor(state: &mut Map<String, Value>, defn: &WorkflowDefinition, next: Option<&str>) {
    match next {
        Some(n) => {
            state.insert("Next".into(), Value::String(entry_state(defn, n)));
        }
        None => {
            state.insert("End".into(), Value::Bool(true));
        }
    }
}

fn task_state(phase: &str, func: &str) -> Map<String, Value> {
    let mut state = Map::new();
    state.insert("Type".into(), json!("Task"));
    state.insert("Comment".into(), json!(phase));
    state.insert("Resource".into(), json!(LAMBDA_INVOKE));
    state.insert("Parameters".into(), json!({"FunctionName": func, "Payload.$": "$"}));
    state.insert("OutputPath".into(), json!("$.Payload"));
    state
}

fn states(defn: &WorkflowDefinition, order: &[&str], notes: &mut Vec<TranscriptionNote>) -> Result<Map<String, Value>> {
    let mut out = Map::new();
    for name in order {
        let phase = defn.phase(name).expect("ordered phases exist");
        emit(defn, phase, &mut out, notes)?;
    }
    Ok(out)
}

fn emit(
    defn: &WorkflowDefinition,
    phase: &Phase,
    out: &mut Map<String, Value>,
    notes: &mut Vec<TranscriptionNote>,
) -> Result<()> {
    let name = phase.name.as_str();
    let next = phase.next.as_deref();
    match &phase.kind {
        PhaseKind::Task { func } => {
            let mut state = task_state(name, func);
            set_successor(&mut state, defn, next);
            if let Some(handler) = &phase.catch {
                state.insert(
                    "Catch".into(),
                    json!([{"ErrorEquals": ["States.ALL"], "ResultPath": "$.error", "Next": entry_state(defn, handler)}]),
                );
            }
            out.insert(name.to_owned(), Value::Object(state));
        }
        PhaseKind::Repeat { func, count } => {
            for i in 0..*count {
                let mut state = task_state(name, func);
                if i + 1 < *count {
                    state.insert("Next".into(), json!(format!("{name}_{}", i + 1)));
                } else {
                    set_successor(&mut state, defn, next);
                }
                out.insert(format!("{name}_{i}"), Value::Object(state));
            }
        }
        PhaseKind::Map { body, array, common_parameters } => {
            let mut inner = Map::new();
            for (j, func) in body.iter().enumerate() {
                let mut state = task_state(name, func);
                if j + 1 < body.len() {
                    state.insert("Next".into(), json!(format!("{name}-{}-{}", j + 1, body[j + 1])));
                } else {
                    state.insert("End".into(), json!(true));
                }
                inner.insert(format!("{name}-{j}-{func}"), Value::Object(state));
            }
            let mut state = Map::new();
            state.insert("Type".into(), json!("Map"));
            state.insert("ItemsPath".into(), json!(json_path(array)));
            // 0 leaves concurrency to the service, which caps inline maps at 40
            state.insert("MaxConcurrency".into(), json!(0));
            if let Some(common) = common_parameters {
                state.insert(
                    "ItemSelector".into(),
                    json!({"item.$": "$$.Map.Item.Value", "common.$": json_path(common)}),
                );
            }
            state.insert(
                "ItemProcessor".into(),
                json!({"ProcessorConfig": {"Mode": "INLINE"}, "StartAt": format!("{name}-0-{}", body[0]), "States": inner}),
            );
            set_successor(&mut state, defn, next);
            out.insert(name.to_owned(), Value::Object(state));
        }
        PhaseKind::Loop { func, array } => {
            let step = format!("{name}-0-{func}");
            let mut inner = task_state(name, func);
            inner.insert("End".into(), json!(true));
            let mut state = Map::new();
            state.insert("Type".into(), json!("Map"));
            state.insert("Comment".into(), json!(LOOP_CAVEAT));
            state.insert("ItemsPath".into(), json!(json_path(array)));
            state.insert("MaxConcurrency".into(), json!(1));
            state.insert(
                "ItemProcessor".into(),
                json!({"ProcessorConfig": {"Mode": "INLINE"}, "StartAt": step.clone(), "States": {step: inner}}),
            );
            set_successor(&mut state, defn, next);
            out.insert(name.to_owned(), Value::Object(state));
            notes.push(TranscriptionNote {
                phase: name.to_owned(),
                kind: NoteKind::LoopInputNotChained,
                message: LOOP_CAVEAT.to_owned(),
            });
        }
        PhaseKind::Switch { cases, defaults } => {
            let mut choices = Vec::new();
            for case in cases {
                let guard = match &case.guard {
                    CaseGuard::Single(g) => g,
                    CaseGuard::All(_) => return Err(untranscribable(name, "compound guards are not supported")),
                };
                let target = case
                    .next
                    .as_deref()
                    .ok_or_else(|| untranscribable(name, "a switch case without a target would end the workflow"))?;
                let mut rule = choice_rule(name, guard)?;
                rule.insert("Next".into(), json!(entry_state(defn, target)));
                choices.push(Value::Object(rule));
            }
            let mut state = Map::new();
            state.insert("Type".into(), json!("Choice"));
            state.insert("Choices".into(), Value::Array(choices));
            if let Some(d) = defaults.first() {
                state.insert("Default".into(), json!(entry_state(defn, d)));
            }
            out.insert(name.to_owned(), Value::Object(state));
        }
        PhaseKind::Parallel { branches } => {
            let mut rendered = Vec::new();
            for branch in branches {
                let first = branch.first().ok_or_else(|| untranscribable(name, "empty branch"))?;
                let order = scope_order(defn, first, |p| branch.iter().any(|m| m == p));
                let states = states(defn, &order, notes)?;
                rendered.push(json!({"StartAt": entry_state(defn, first), "States": states}));
            }
            let mut state = Map::new();
            state.insert("Type".into(), json!("Parallel"));
            state.insert("Branches".into(), Value::Array(rendered));
            set_successor(&mut state, defn, next);
            out.insert(name.to_owned(), Value::Object(state));
        }
    }
    Ok(())
}

/// Choice rule for one comparison. Array lengths cannot be read by a Choice
/// state, so `x.length` guards become presence tests on `x[k]`.
fn choice_rule(phase: &str, guard: &Guard) -> Result<Map<String, Value>> {
    let segs = guard.variable.segments();
    if segs.last().map(String::as_str) == Some("length") {
        let base = PayloadPath::parse(&segs[..segs.len() - 1].join(".")).unwrap_or_else(PayloadPath::root);
        let k = match &guard.literal {
            Literal::Number(n) => n.as_i64(),
            Literal::String(_) => None,
        }
        .ok_or_else(|| untranscribable(phase, "length guards need an integer literal"))?;
        return Ok(length_rule(&json_path(&base), guard.comparator, k));
    }
    let var = json_path(&guard.variable);
    let (op, value) = match &guard.literal {
        Literal::Number(n) => {
            let op = match guard.comparator {
                Comparator::Lt => "NumericLessThan",
                Comparator::Le => "NumericLessThanEquals",
                Comparator::Eq | Comparator::Ne => "NumericEquals",
                Comparator::Ge => "NumericGreaterThanEquals",
                Comparator::Gt => "NumericGreaterThan",
            };
            (op, Value::Number(n.clone()))
        }
        Literal::String(s) => {
            if !guard.comparator.is_equality() {
                return Err(untranscribable(phase, "strings only support equality"));
            }
            ("StringEquals", Value::String(s.clone()))
        }
    };
    let mut rule = Map::new();
    rule.insert("Variable".into(), json!(var));
    rule.insert(op.into(), value);
    if guard.comparator == Comparator::Ne {
        return Ok(not(rule));
    }
    Ok(rule)
}

fn not(rule: Map<String, Value>) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("Not".into(), Value::Object(rule));
    m
}

/// `len(base) >= k`.
fn at_least(base: &str, k: i64) -> Map<String, Value> {
    let var = if k <= 0 { base.to_owned() } else { format!("{base}[{}]", k - 1) };
    let mut m = Map::new();
    m.insert("Variable".into(), json!(var));
    m.insert("IsPresent".into(), json!(true));
    m
}

fn length_rule(base: &str, cmp: Comparator, k: i64) -> Map<String, Value> {
    let eq = || {
        let mut m = Map::new();
        m.insert("And".into(), json!([Value::Object(at_least(base, k)), Value::Object(not(at_least(base, k + 1)))]));
        m
    };
    match cmp {
        Comparator::Ge => at_least(base, k),
        Comparator::Gt => at_least(base, k + 1),
        Comparator::Lt => not(at_least(base, k)),
        Comparator::Le => not(at_least(base, k + 1)),
        Comparator::Eq => eq(),
        Comparator::Ne => not(eq()),
    }
}

fn count_states(doc: &Value) -> usize {
    let Some(states) = doc.get("States").and_then(Value::as_object) else { return 0 };
    let mut n = states.len();
    for state in states.values() {
        if let Some(processor) = state.get("ItemProcessor") {
            n += count_states(processor);
        }
        if let Some(branches) = state.get("Branches").and_then(Value::as_array) {
            n += branches.iter().map(count_states).sum::<usize>();
        }
    }
    n
}

/// Grammar check of a state machine: every scope has a `StartAt` naming one
/// of its states, every transfer stays inside its scope, and every
/// non-terminal state has exactly one of `Next` and `End`.
pub(super) fn check(doc: &Value) -> Result<()> {
    check_scope(doc, "top level")
}

fn check_scope(scope: &Value, at: &str) -> Result<()> {
    let bad = |reason: String| Err(malformed(Platform::Aws, reason));
    let Some(states) = scope.get("States").and_then(Value::as_object) else {
        return bad(format!("{at}: missing `States`"));
    };
    let Some(start) = scope.get("StartAt").and_then(Value::as_str) else {
        return bad(format!("{at}: missing `StartAt`"));
    };
    if !states.contains_key(start) {
        return bad(format!("{at}: `StartAt` names missing state `{start}`"));
    }
    let target = |name: &str, t: Option<&Value>| -> Result<()> {
        match t.and_then(Value::as_str) {
            Some(t) if states.contains_key(t) => Ok(()),
            Some(t) => Err(malformed(Platform::Aws, format!("`{name}` transfers to unknown state `{t}`"))),
            None => Err(malformed(Platform::Aws, format!("`{name}` has a non-string transfer"))),
        }
    };
    for (name, state) in states {
        let kind = state.get("Type").and_then(Value::as_str).unwrap_or("");
        match kind {
            "Task" | "Map" | "Parallel" | "Pass" => {
                let has_next = state.get("Next").is_some();
                let has_end = state.get("End") == Some(&Value::Bool(true));
                if has_next == has_end {
                    return bad(format!("`{name}` needs exactly one of `Next` and `End`"));
                }
                if has_next {
                    target(name, state.get("Next"))?;
                }
                for c in state.get("Catch").and_then(Value::as_array).into_iter().flatten() {
                    target(name, c.get("Next"))?;
                }
                if kind == "Task" && state.get("Resource").and_then(Value::as_str).is_none() {
                    return bad(format!("task `{name}` has no `Resource`"));
                }
                if let Some(p) = state.get("ItemProcessor") {
                    check_scope(p, name)?;
                }
                if kind == "Map" && state.get("ItemProcessor").is_none() {
                    return bad(format!("map `{name}` has no `ItemProcessor`"));
                }
                for b in state.get("Branches").and_then(Value::as_array).into_iter().flatten() {
                    check_scope(b, name)?;
                }
            }
            "Choice" => {
                let Some(choices) = state.get("Choices").and_then(Value::as_array) else {
                    return bad(format!("choice `{name}` has no `Choices`"));
                };
                for c in choices {
                    target(name, c.get("Next"))?;
                }
                if let Some(d) = state.get("Default") {
                    target(name, Some(d))?;
                }
            }
            other => return bad(format!("`{name}` has unknown type `{other}`")),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::definition::parse_definition;

    #[test]
    fn single_task_is_one_state() {
        let d = parse_definition(r#"{"name":"one","root":"t","phases":{"t":{"type":"task","func":"f"}}}"#).unwrap();
        let p = to_aws(&d).unwrap();
        assert_eq!(p.census.state_count, 1);
        assert_eq!(p.document["StartAt"], "t");
        assert_eq!(p.document["States"]["t"]["End"], true);
        p.self_check().unwrap();
    }

    #[test]
    fn repeat_unrolls() {
        let d = parse_definition(r#"{"name":"r","root":"r","phases":{"r":{"type":"repeat","func":"f","count":10}}}"#)
            .unwrap();
        let p = to_aws(&d).unwrap();
        assert_eq!(p.census.state_count, 10);
        let states = p.document["States"].as_object().unwrap();
        assert!(states.values().all(|s| s["Type"] == "Task" && s["Parameters"]["FunctionName"] == "f"));
        assert_eq!(states["r_3"]["Next"], "r_4");
        assert_eq!(states["r_9"]["End"], true);
        p.self_check().unwrap();
    }

    #[test]
    fn loop_is_sequential_map_with_note() {
        let d = parse_definition(r#"{"name":"l","root":"l","phases":{"l":{"type":"loop","func":"f","array":"xs"}}}"#)
            .unwrap();
        let p = to_aws(&d).unwrap();
        assert_eq!(p.document["States"]["l"]["MaxConcurrency"], 1);
        assert_eq!(p.notes.len(), 1);
        assert_eq!(p.notes[0].kind, NoteKind::LoopInputNotChained);
    }

    #[test]
    fn length_guard_uses_presence() {
        let d = parse_definition(
            r#"{"name":"s","root":"s","phases":{
                "s":{"type":"switch","cases":[{"var":"data.length","op":"<","value":10,"next":"a"}],"default":"b"},
                "a":{"type":"task","func":"a"},"b":{"type":"task","func":"b"}}}"#,
        )
        .unwrap();
        let p = to_aws(&d).unwrap();
        let rule = &p.document["States"]["s"]["Choices"][0];
        assert_eq!(rule["Not"]["Variable"], "$.data[9]");
        assert_eq!(rule["Not"]["IsPresent"], true);
        assert_eq!(rule["Next"], "a");
        assert_eq!(p.document["States"]["s"]["Default"], "b");
        p.self_check().unwrap();
    }

    #[test]
    fn compound_guard_rejected() {
        let d = parse_definition(
            r#"{"name":"s","root":"s","phases":{
                "s":{"type":"switch","cases":[{"all":[{"var":"x","op":"<","value":1},{"var":"y","op":"<","value":1}],"next":"a"}]},
                "a":{"type":"task","func":"a"}}}"#,
        )
        .unwrap();
        assert!(matches!(to_aws(&d), Err(super::super::TranscribeError::Untranscribable { .. })));
    }

    #[test]
    fn check_rejects_dangling_next() {
        let doc = json!({"StartAt": "a", "States": {"a": {"Type": "Task", "Resource": "x", "Next": "b"}}});
        assert!(check(&doc).is_err());
    }
}
