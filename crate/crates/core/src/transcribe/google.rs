use std::collections::BTreeSet;

use serde_json::{json, Map, Value};

use super::{malformed, scope_order, top_level_order, untranscribable, PlatformProgram, Result, StateCensus};
use crate::definition::{CaseGuard, Guard, Literal, PayloadPath, Phase, PhaseKind, WorkflowDefinition};
use crate::Platform;

/// Base URL of HTTP-triggered functions; deployment substitutes the region
/// and project.
pub(super) const FUNCTION_BASE: &str = "https://REGION-PROJECT.cloudfunctions.net";
/// Header naming the phase a call belongs to.
pub(super) const PHASE_HEADER: &str = "X-Workflow-Phase";
/// Final step of the main workflow.
pub(super) const DONE: &str = "done";

/// Emits a Google Cloud Workflows program. Every map becomes a parallel
/// `for` over a generated sub-workflow whose arguments zip the mapped array
/// with the common parameters by index.
pub fn to_google(defn: &WorkflowDefinition) -> Result<PlatformProgram> {
    let mut subs = Map::new();
    let order = top_level_order(defn);
    let mut steps = scope_steps(defn, &order, DONE, &mut subs)?;
    steps.push(step(DONE, json!({"return": "${payload}"})));
    let mut document = Map::new();
    document.insert("main".into(), json!({"params": ["payload"], "steps": steps}));
    document.extend(subs);
    let document = Value::Object(document);
    let state_count = count_steps(&document);
    Ok(PlatformProgram {
        platform: Platform::Google,
        document,
        manifest: None,
        census: StateCensus { platform: Platform::Google, state_count, defn: defn.clone() },
        notes: Vec::new(),
    })
}

fn step(name: &str, body: Value) -> Value {
    let mut m = Map::new();
    m.insert(name.to_owned(), body);
    Value::Object(m)
}

/// Expression reading a payload path, e.g. `payload.data[2]`; a trailing
/// `length` becomes `len(...)`.
fn expression(root: &str, path: &PayloadPath) -> String {
    let mut segs = path.segments();
    let mut length = false;
    if segs.last().map(String::as_str) == Some("length") {
        length = true;
        segs = &segs[..segs.len() - 1];
    }
    let mut out = root.to_owned();
    for seg in segs {
        if seg.chars().all(|c| c.is_ascii_digit()) {
            out.push_str(&format!("[{seg}]"));
        } else {
            out.push('.');
            out.push_str(seg);
        }
    }
    if length {
        format!("len({out})")
    } else {
        out
    }
}

fn condition(guard: &Guard) -> String {
    let lit = match &guard.literal {
        Literal::Number(n) => n.to_string(),
        Literal::String(s) => Value::String(s.clone()).to_string(),
    };
    format!("${{{} {} {lit}}}", expression("payload", &guard.variable), guard.comparator.symbol())
}

fn call(phase: &str, func: &str, body: Value, result: &str) -> Value {
    json!({
        "call": "http.post",
        "args": {
            "url": format!("{FUNCTION_BASE}/{func}"),
            "headers": {PHASE_HEADER: phase},
            "body": body,
        },
        "result": result,
    })
}

fn parse_step(result: &str, next: Option<&str>) -> Value {
    let mut body = Map::new();
    body.insert("assign".into(), json!([{"payload": format!("${{{result}.body}}")}]));
    if let Some(n) = next {
        body.insert("next".into(), json!(n));
    }
    Value::Object(body)
}

fn with_next(mut body: Value, next: &str) -> Value {
    body.as_object_mut().expect("step bodies are objects").insert("next".into(), json!(next));
    body
}

fn scope_steps(
    defn: &WorkflowDefinition,
    order: &[&str],
    terminal: &str,
    subs: &mut Map<String, Value>,
) -> Result<Vec<Value>> {
    let mut steps = Vec::new();
    for name in order {
        let phase = defn.phase(name).expect("ordered phases exist");
        emit(defn, phase, terminal, &mut steps, subs)?;
    }
    Ok(steps)
}

fn emit(
    defn: &WorkflowDefinition,
    phase: &Phase,
    terminal: &str,
    steps: &mut Vec<Value>,
    subs: &mut Map<String, Value>,
) -> Result<()> {
    let p = phase.name.as_str();
    let next = phase.next.as_deref().unwrap_or(terminal);
    let result = format!("{p}_result");
    match &phase.kind {
        PhaseKind::Task { func } => {
            let invoke = call(p, func, json!("${payload}"), &result);
            match &phase.catch {
                None => steps.push(step(p, invoke)),
                Some(handler) => steps.push(step(
                    p,
                    json!({
                        "try": {"steps": [step(&format!("{p}_call"), invoke)]},
                        "except": {
                            "as": "e",
                            "steps": [step(&format!("{p}_error"), json!({"assign": [{"error": "${e}"}], "next": handler}))],
                        },
                        "next": format!("{p}_parse"),
                    }),
                )),
            }
            steps.push(step(&format!("{p}_parse"), parse_step(&result, Some(next))));
        }
        PhaseKind::Repeat { func, count } => {
            for i in 0..*count {
                let name = if i == 0 { p.to_owned() } else { format!("{p}_{i}") };
                let follow = if i + 1 < *count { format!("{p}_{}", i + 1) } else { next.to_owned() };
                steps.push(step(&name, call(p, func, json!("${payload}"), &result)));
                steps.push(step(&format!("{name}_parse"), parse_step(&result, Some(&follow))));
            }
        }
        PhaseKind::Map { body, array, common_parameters } => {
            let items = format!("{p}_items");
            let common = format!("{p}_common");
            let results = format!("{p}_results");
            let common_expr = match common_parameters {
                Some(c) => format!("${{{}}}", expression("payload", c)),
                None => "${null}".to_owned(),
            };
            steps.push(step(
                p,
                json!({"assign": [{items.clone(): format!("${{{}}}", expression("payload", array))}, {common.clone(): common_expr}]}),
            ));
            steps.push(step(&format!("{p}_init"), json!({"assign": [{results.clone(): []}]})));
            let sub = format!("{p}_body");
            steps.push(step(
                &format!("{p}_run"),
                json!({"parallel": {
                    "shared": [results.clone()],
                    "for": {
                        "value": "i",
                        "range": [0, format!("${{len({items}) - 1}}")],
                        "steps": [
                            step(&format!("{p}_invoke"), json!({
                                "call": sub,
                                "args": {"item": format!("${{{items}[i]}}"), "common": format!("${{{common}}}")},
                                "result": format!("{p}_out"),
                            })),
                            step(&format!("{p}_store"), json!({"assign": [{format!("{results}[i]"): format!("${{{p}_out}}")}]})),
                        ],
                    },
                }}),
            ));
            steps.push(step(
                &format!("{p}_collect"),
                json!({"assign": [{"payload": format!("${{{results}}}")}], "next": next}),
            ));

            let mut body_steps = Vec::new();
            for (j, func) in body.iter().enumerate() {
                let input =
                    if j == 0 { json!({"item": "${item}", "common": "${common}"}) } else { json!("${payload}") };
                let r = format!("{p}_{j}_result");
                body_steps.push(step(&format!("{p}_{j}_call"), call(p, func, input, &r)));
                body_steps.push(step(&format!("{p}_{j}_parse"), parse_step(&r, None)));
            }
            body_steps.push(step(&format!("{p}_return"), json!({"return": "${payload}"})));
            subs.insert(sub, json!({"params": ["item", "common"], "steps": body_steps}));
        }
        PhaseKind::Loop { func, array } => {
            steps.push(step(
                p,
                json!({
                    "for": {
                        "value": "element",
                        "in": format!("${{{}}}", expression("payload", array)),
                        "steps": [
                            step(&format!("{p}_call"), call(p, func, json!("${element}"), &result)),
                            step(&format!("{p}_parse"), json!({"assign": [{format!("{p}_last"): format!("${{{result}.body}}")}]})),
                        ],
                    },
                    "next": next,
                }),
            ));
        }
        PhaseKind::Switch { cases, defaults } => {
            let mut conditions = Vec::new();
            for case in cases {
                let guard = match &case.guard {
                    CaseGuard::Single(g) => g,
                    CaseGuard::All(_) => return Err(untranscribable(p, "compound guards are not supported")),
                };
                let target = case.next.as_deref().ok_or_else(|| untranscribable(p, "switch case without a target"))?;
                conditions.push(json!({"condition": condition(guard), "next": target}));
            }
            match defaults.first() {
                Some(d) => steps.push(step(p, json!({"switch": conditions, "next": d}))),
                None => {
                    let unmatched = format!("{p}_unmatched");
                    steps.push(step(p, json!({"switch": conditions, "next": unmatched.clone()})));
                    steps.push(step(&unmatched, json!({"raise": format!("no case of {p} matched")})));
                }
            }
        }
        PhaseKind::Parallel { branches } => {
            let mut rendered = Vec::new();
            for (i, branch) in branches.iter().enumerate() {
                let first = branch.first().ok_or_else(|| untranscribable(p, "empty branch"))?;
                let order = scope_order(defn, first, |m| branch.iter().any(|b| b == m));
                let inner = scope_steps(defn, &order, "end", subs)?;
                rendered.push(step(&format!("{p}_branch{i}"), json!({"steps": inner})));
            }
            steps.push(step(p, with_next(json!({"parallel": {"branches": rendered}}), next)));
        }
    }
    Ok(())
}

/// Single-key step objects in a step list: `(name, body)`.
pub(super) fn entries(steps: &[Value]) -> impl Iterator<Item = Option<(&str, &Value)>> {
    steps.iter().map(|s| match s.as_object() {
        Some(m) if m.len() == 1 => m.iter().next().map(|(k, v)| (k.as_str(), v)),
        _ => None,
    })
}

/// Step lists nested inside a step body.
pub(super) fn nested<'a>(body: &'a Value) -> Vec<&'a Vec<Value>> {
    let mut out = Vec::new();
    let mut push = |v: Option<&'a Value>| {
        if let Some(list) = v.and_then(|v| v.get("steps")).and_then(Value::as_array) {
            out.push(list);
        }
    };
    push(body.get("for"));
    push(body.get("try"));
    push(body.get("except"));
    if let Some(par) = body.get("parallel") {
        push(par.get("for"));
        for b in par.get("branches").and_then(Value::as_array).into_iter().flatten() {
            if let Some(inner) = b.as_object().and_then(|m| m.values().next()) {
                push(Some(inner));
            }
        }
    }
    out
}

fn count_steps(doc: &Value) -> usize {
    fn list(steps: &[Value]) -> usize {
        entries(steps).flatten().map(|(_, body)| 1 + nested(body).into_iter().map(|l| list(l)).sum::<usize>()).sum()
    }
    doc.as_object()
        .into_iter()
        .flatten()
        .filter_map(|(_, wf)| wf.get("steps").and_then(Value::as_array))
        .map(|s| list(s))
        .sum()
}

/// Grammar check: a `main` workflow, single-key steps with a known kind,
/// `next` targets that exist in an enclosing step list, and calls to either
/// HTTP functions or defined sub-workflows.
pub(super) fn check(doc: &Value) -> Result<()> {
    let bad = |reason: String| Err(malformed(Platform::Google, reason));
    let Some(workflows) = doc.as_object() else { return bad("document is not a mapping".into()) };
    if !workflows.contains_key("main") {
        return bad("missing `main` workflow".into());
    }
    for (name, wf) in workflows {
        let Some(steps) = wf.get("steps").and_then(Value::as_array) else {
            return bad(format!("workflow `{name}` has no steps"));
        };
        check_list(workflows, steps, &[])?;
    }
    Ok(())
}

fn check_list(workflows: &Map<String, Value>, steps: &[Value], outer: &[BTreeSet<&str>]) -> Result<()> {
    let bad = |reason: String| Err(malformed(Platform::Google, reason));
    let mut names = BTreeSet::new();
    for e in entries(steps) {
        match e {
            Some((name, _)) => {
                names.insert(name);
            }
            None => return bad("step is not a single-key mapping".into()),
        }
    }
    let mut scopes = outer.to_vec();
    scopes.push(names);
    for (name, body) in entries(steps).flatten() {
        const KINDS: [&str; 8] = ["call", "assign", "switch", "for", "parallel", "try", "return", "raise"];
        if !KINDS.iter().any(|k| body.get(k).is_some()) {
            return bad(format!("step `{name}` has no known kind"));
        }
        let mut targets: Vec<&str> = body.get("next").and_then(Value::as_str).into_iter().collect();
        for c in body.get("switch").and_then(Value::as_array).into_iter().flatten() {
            match c.get("next").and_then(Value::as_str) {
                Some(t) if c.get("condition").is_some() => targets.push(t),
                _ => return bad(format!("switch `{name}` has a malformed condition")),
            }
        }
        for t in targets {
            if t != "end" && !scopes.iter().any(|s| s.contains(t)) {
                return bad(format!("step `{name}` jumps to unknown step `{t}`"));
            }
        }
        if let Some(target) = body.get("call").and_then(Value::as_str) {
            if !target.starts_with("http.") && !workflows.contains_key(target) {
                return bad(format!("step `{name}` calls unknown workflow `{target}`"));
            }
        }
        for list in nested(body) {
            check_list(workflows, list, &scopes)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::definition::{parse_definition, Encoding};

    #[test]
    fn single_task_is_call_and_assign() {
        let d = parse_definition(r#"{"name":"one","root":"t","phases":{"t":{"type":"task","func":"f"}}}"#).unwrap();
        let p = to_google(&d).unwrap();
        let steps = p.document["main"]["steps"].as_array().unwrap();
        let names: Vec<_> = entries(steps).flatten().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["t", "t_parse", "done"]);
        assert_eq!(steps[0]["t"]["call"], "http.post");
        assert!(steps[1]["t_parse"].get("assign").is_some());
        p.self_check().unwrap();
    }

    #[test]
    fn map_zips_through_subworkflow() {
        let d = parse_definition(
            r#"{"name":"m","root":"m","phases":{"m":{"type":"map","func":"process","array":"$","common_parameters":"cfg"}}}"#,
        )
        .unwrap();
        let p = to_google(&d).unwrap();
        let body = &p.document["m_body"];
        assert_eq!(body["params"], json!(["item", "common"]));
        let run = &p.document["main"]["steps"][2]["m_run"]["parallel"]["for"];
        assert_eq!(run["range"], json!([0, "${len(m_items) - 1}"]));
        assert_eq!(run["steps"][0]["m_invoke"]["args"]["item"], "${m_items[i]}");
        assert_eq!(p.document["main"]["steps"][0]["m"]["assign"][0]["m_items"], "${payload}");
        p.self_check().unwrap();
        let yaml = p.render(Encoding::Yaml);
        assert!(yaml.contains("m_body:"));
    }

    #[test]
    fn switch_condition_text() {
        let d = parse_definition(
            r#"{"name":"s","root":"s","phases":{
                "s":{"type":"switch","cases":[{"var":"data.length","op":"<","value":10,"next":"a"},{"var":"mode","op":"==","value":"x","next":"a"}]},
                "a":{"type":"task","func":"a"}}}"#,
        )
        .unwrap();
        let p = to_google(&d).unwrap();
        let sw = &p.document["main"]["steps"][0]["s"];
        assert_eq!(sw["switch"][0]["condition"], "${len(payload.data) < 10}");
        assert_eq!(sw["switch"][1]["condition"], "${payload.mode == \"x\"}");
        assert_eq!(sw["next"], "s_unmatched");
        p.self_check().unwrap();
    }

    #[test]
    fn check_rejects_unknown_jump() {
        let doc = json!({"main": {"steps": [{"a": {"assign": [], "next": "nowhere"}}]}});
        assert!(check(&doc).is_err());
    }
}
