use serde_json::{json, Value};

use super::{malformed, PlatformProgram, Result, StateCensus};
use crate::definition::{parse_definition, PhaseKind, WorkflowDefinition};
use crate::Platform;

/// Name of the generic orchestrator function that interprets the payload.
pub const ORCHESTRATOR: &str = "flowbench_orchestrator";

/// Emits the payload of the generic Durable Functions orchestrator (the
/// canonical definition itself) and the manifest of activities it spawns.
pub fn to_azure(defn: &WorkflowDefinition) -> Result<PlatformProgram> {
    let text = defn.to_canonical();
    let document: Value = serde_json::from_str(&text).map_err(|e| malformed(Platform::Azure, e.to_string()))?;
    let manifest = manifest(defn);
    Ok(PlatformProgram {
        platform: Platform::Azure,
        document,
        manifest: Some(manifest),
        census: StateCensus { platform: Platform::Azure, state_count: defn.phases.len(), defn: defn.clone() },
        notes: Vec::new(),
    })
}

fn manifest(defn: &WorkflowDefinition) -> Value {
    let activities: Vec<Value> = defn
        .referenced_functions()
        .into_iter()
        .map(|f| {
            let uses: Vec<Value> = defn
                .phases
                .iter()
                .filter(|p| p.kind.functions().contains(&f))
                .map(|p| {
                    let instances = match &p.kind {
                        PhaseKind::Map { array, .. } | PhaseKind::Loop { array, .. } => json!(format!("len({array})")),
                        PhaseKind::Repeat { count, .. } => json!(count),
                        _ => json!(1),
                    };
                    json!({"phase": p.name, "instances": instances})
                })
                .collect();
            let kernel = defn.function(f).map(|s| s.kernel_name().to_owned()).unwrap_or_else(|| f.to_owned());
            json!({"name": f, "kernel": kernel, "uses": uses})
        })
        .collect();
    json!({"orchestrator": ORCHESTRATOR, "workflow": defn.name, "activities": activities})
}

/// The payload must parse back to the definition and the manifest must list
/// each invoked function exactly once.
pub(super) fn check(text: &str, manifest: Option<&Value>) -> Result<()> {
    let defn = parse_definition(text).map_err(|e| malformed(Platform::Azure, e.to_string()))?;
    let Some(activities) = manifest.and_then(|m| m.get("activities")).and_then(Value::as_array) else {
        return Err(malformed(Platform::Azure, "missing activity manifest".into()));
    };
    let listed: Vec<&str> = activities.iter().filter_map(|a| a.get("name").and_then(Value::as_str)).collect();
    if listed != defn.referenced_functions() {
        return Err(malformed(Platform::Azure, format!("manifest lists {listed:?}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_round_trips_and_lists_mapped_function_once() {
        let d = parse_definition(
            r#"{"name":"m","root":"a","phases":{
                "a":{"type":"task","func":"gen","next":"m"},
                "m":{"type":"map","func":"work","array":"items"}}}"#,
        )
        .unwrap();
        let p = to_azure(&d).unwrap();
        assert_eq!(parse_definition(&p.text()).unwrap(), d);
        let acts = p.manifest.as_ref().unwrap()["activities"].as_array().unwrap();
        assert_eq!(acts.len(), 2);
        assert_eq!(acts[1]["name"], "work");
        assert_eq!(acts[1]["uses"][0]["instances"], "len(items)");
        assert_eq!(p.census.state_count, 2);
        p.self_check().unwrap();
    }
}
