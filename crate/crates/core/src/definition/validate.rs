use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{CaseGuard, PhaseKind, WorkflowDefinition};
use crate::platform::Platform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    MissingRoot,
    DuplicatePhase,
    DanglingReference,
    SelfReference,
    Unreachable,
    Cycle,
    SchemaError,
    InvalidCount,
    EmptySwitch,
    TargetlessCase,
    CompoundGuard,
    InvalidGuard,
    EmptyParallel,
    BranchOverlap,
    BranchEscape,
    UnusedFunction,
    ParallelismExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub phase: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.phase {
            Some(p) => write!(f, "{:?} [{p}]: {}", self.kind, self.message),
            None => write!(f, "{:?}: {}", self.kind, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has(&self, kind: DiagnosticKind) -> bool {
        self.errors.iter().chain(&self.warnings).any(|d| d.kind == kind)
    }

    fn error(&mut self, kind: DiagnosticKind, phase: Option<&str>, message: String) {
        self.errors.push(Diagnostic { kind, phase: phase.map(str::to_owned), message });
    }

    fn warn(&mut self, kind: DiagnosticKind, phase: Option<&str>, message: String) {
        self.warnings.push(Diagnostic { kind, phase: phase.map(str::to_owned), message });
    }
}

pub fn validate(defn: &WorkflowDefinition) -> ValidationReport {
    validate_with_fanouts(defn, &BTreeMap::new())
}

/// Validation plus platform fan-out warnings for the given concrete map
/// widths (map width is data-dependent, so it is only known per instance).
pub fn validate_with_fanouts(defn: &WorkflowDefinition, fanouts: &BTreeMap<String, usize>) -> ValidationReport {
    use DiagnosticKind::*;
    let mut report = ValidationReport::default();
    let names: BTreeSet<&str> = defn.phases.iter().map(|p| p.name.as_str()).collect();

    let mut seen = BTreeSet::new();
    for p in &defn.phases {
        if !seen.insert(p.name.as_str()) {
            report.error(DuplicatePhase, Some(&p.name), format!("phase `{}` is declared more than once", p.name));
        }
    }
    if !names.contains(defn.root.as_str()) {
        report.error(MissingRoot, None, format!("root `{}` names no phase", defn.root));
    }

    for phase in &defn.phases {
        let at = Some(phase.name.as_str());
        let reference = |field: &str, target: &str, report: &mut ValidationReport| {
            if !names.contains(target) {
                report.error(DanglingReference, at, format!("`{field}` points to missing phase `{target}`"));
            }
        };
        if let Some(next) = &phase.next {
            if next == &phase.name {
                report.error(SelfReference, at, "phase is its own `next`".into());
            }
            reference("next", next, &mut report);
        }
        if let Some(handler) = &phase.catch {
            reference("catch", handler, &mut report);
            if !matches!(phase.kind, PhaseKind::Task { .. }) {
                report.error(SchemaError, at, "`catch` is only supported on task phases".into());
            }
        }
        match &phase.kind {
            PhaseKind::Repeat { count, .. } if *count < 1 => {
                report.error(InvalidCount, at, format!("repeat count must be at least 1, found {count}"));
            }
            PhaseKind::Map { body, .. } if body.is_empty() => {
                report.error(SchemaError, at, "map phase names no function".into());
            }
            PhaseKind::Switch { cases, defaults } => {
                if cases.is_empty() {
                    report.error(EmptySwitch, at, "switch needs at least one case".into());
                }
                if defaults.len() > 1 {
                    report.error(
                        SchemaError,
                        at,
                        format!("switch declares {} defaults; at most one is allowed", defaults.len()),
                    );
                }
                if phase.next.is_some() {
                    report.error(
                        SchemaError,
                        at,
                        "switch phases route through their cases; `next` is not allowed".into(),
                    );
                }
                for (i, case) in cases.iter().enumerate() {
                    match &case.next {
                        None => report.error(
                            TargetlessCase,
                            at,
                            format!("case {i} has no target; a switch case cannot end the workflow"),
                        ),
                        Some(t) => reference("cases.next", t, &mut report),
                    }
                    match &case.guard {
                        CaseGuard::All(parts) => report.error(
                            CompoundGuard,
                            at,
                            format!(
                                "case {i} combines {} comparisons; only single-comparison guards are supported",
                                parts.len()
                            ),
                        ),
                        CaseGuard::Single(g) if !g.is_well_typed() => report.error(
                            InvalidGuard,
                            at,
                            format!("case {i}: string literals only support == and != (found `{g}`)"),
                        ),
                        CaseGuard::Single(_) => {}
                    }
                }
                for d in defaults {
                    reference("default", d, &mut report);
                }
            }
            PhaseKind::Parallel { branches } => {
                if branches.is_empty() || branches.iter().any(Vec::is_empty) {
                    report.error(EmptyParallel, at, "parallel needs at least one non-empty branch".into());
                }
                for branch in branches {
                    for member in branch {
                        reference("branches", member, &mut report);
                        if member == &phase.name {
                            report.error(SelfReference, at, "parallel phase lists itself as a branch member".into());
                        }
                    }
                }
            }
            _ => {}
        }
    }

    check_branches(defn, &mut report);
    check_reachability(defn, &names, &mut report);
    check_cycles(defn, &names, &mut report);

    let used: BTreeSet<&str> = defn.referenced_functions().into_iter().collect();
    for f in &defn.functions {
        if !used.contains(f.name.as_str()) {
            report.warn(UnusedFunction, None, format!("function `{}` is declared but never invoked", f.name));
        }
    }

    for phase in &defn.phases {
        let width = match &phase.kind {
            PhaseKind::Map { .. } => fanouts.get(&phase.name).copied(),
            PhaseKind::Parallel { branches } => Some(branches.len()),
            _ => None,
        };
        let Some(width) = width else { continue };
        for platform in Platform::ALL {
            if let Some(limit) = platform.max_parallelism() {
                if width > limit {
                    report.warn(
                        ParallelismExceeded,
                        Some(&phase.name),
                        format!("fan-out {width} exceeds {} max parallelism {limit}", platform.display_name()),
                    );
                }
            }
        }
    }
    report
}

/// Branch phases form closed sub-workflows: disjoint across branches, and
/// control never enters or leaves a branch except through its parallel.
fn check_branches(defn: &WorkflowDefinition, report: &mut ValidationReport) {
    let mut owner: BTreeMap<&str, (&str, usize)> = BTreeMap::new();
    for phase in &defn.phases {
        let PhaseKind::Parallel { branches } = &phase.kind else { continue };
        for (bi, branch) in branches.iter().enumerate() {
            for member in branch {
                if let Some((other, obi)) = owner.insert(member.as_str(), (phase.name.as_str(), bi)) {
                    report.error(
                        DiagnosticKind::BranchOverlap,
                        Some(&phase.name),
                        format!("`{member}` belongs to branch {obi} of `{other}` and branch {bi} of `{}`", phase.name),
                    );
                }
            }
        }
    }
    for phase in &defn.phases {
        let from = owner.get(phase.name.as_str()).copied();
        let targets = phase
            .successors()
            .into_iter()
            .filter(|t| !matches!(&phase.kind, PhaseKind::Parallel { branches } if branches.iter().any(|b| b.first().map(String::as_str) == Some(*t))));
        for target in targets {
            let to = owner.get(target).copied();
            if from != to {
                report.error(
                    DiagnosticKind::BranchEscape,
                    Some(&phase.name),
                    format!("transfer to `{target}` crosses a parallel branch boundary"),
                );
            }
        }
    }
}

fn check_reachability(defn: &WorkflowDefinition, names: &BTreeSet<&str>, report: &mut ValidationReport) {
    if !names.contains(defn.root.as_str()) {
        return;
    }
    let mut reached = BTreeSet::new();
    let mut stack = vec![defn.root.as_str()];
    while let Some(name) = stack.pop() {
        if !reached.insert(name) {
            continue;
        }
        if let Some(p) = defn.phase(name) {
            stack.extend(p.successors().into_iter().filter(|s| names.contains(s)));
        }
    }
    for p in &defn.phases {
        if !reached.contains(p.name.as_str()) {
            report.error(
                DiagnosticKind::Unreachable,
                Some(&p.name),
                format!("phase `{}` is not reachable from root `{}`", p.name, defn.root),
            );
        }
    }
}

fn check_cycles(defn: &WorkflowDefinition, names: &BTreeSet<&str>, report: &mut ValidationReport) {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit<'a>(
        defn: &'a WorkflowDefinition,
        names: &BTreeSet<&str>,
        name: &'a str,
        marks: &mut BTreeMap<&'a str, Mark>,
        found: &mut BTreeSet<&'a str>,
    ) {
        match marks.get(name) {
            Some(Mark::Done) => return,
            Some(Mark::Open) => {
                found.insert(name);
                return;
            }
            None => {}
        }
        marks.insert(name, Mark::Open);
        if let Some(p) = defn.phase(name) {
            for s in p.successors() {
                // self-references are reported separately
                if names.contains(s) && s != name {
                    visit(defn, names, s, marks, found);
                }
            }
        }
        marks.insert(name, Mark::Done);
    }
    let mut marks = BTreeMap::new();
    let mut found = BTreeSet::new();
    for p in &defn.phases {
        visit(defn, names, &p.name, &mut marks, &mut found);
    }
    for name in found {
        report.error(
            DiagnosticKind::Cycle,
            Some(name),
            format!("control flow returns to `{name}`; workflows must be acyclic"),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::definition::parse_definition;

    fn doc(phases: &str, root: &str) -> WorkflowDefinition {
        parse_definition(&format!(r#"{{"name":"t","root":"{root}","phases":{{{phases}}}}}"#)).unwrap()
    }

    #[test]
    fn valid_chain() {
        let d = doc(r#""a":{"type":"task","func":"f","next":"b"},"b":{"type":"task","func":"g"}"#, "a");
        let r = validate(&d);
        assert!(r.is_valid(), "{:?}", r.errors);
    }

    #[test]
    fn dangling_next() {
        let d = doc(r#""a":{"type":"task","func":"f","next":"foo"}"#, "a");
        let r = validate(&d);
        assert!(r.has(DiagnosticKind::DanglingReference));
        assert!(r.errors[0].message.contains("foo"));
    }

    #[test]
    fn self_next_and_unreachable() {
        let d = doc(r#""a":{"type":"task","func":"f","next":"a"},"b":{"type":"task","func":"g"}"#, "a");
        let r = validate(&d);
        assert!(r.has(DiagnosticKind::SelfReference));
        assert!(r.has(DiagnosticKind::Unreachable));
    }

    #[test]
    fn duplicate_default_is_schema_error() {
        let d = doc(
            r#""s":{"type":"switch","cases":[{"var":"n","op":"<","value":3,"next":"a"}],"default":"a","default":"b"},
               "a":{"type":"task","func":"f"},"b":{"type":"task","func":"g"}"#,
            "s",
        );
        let r = validate(&d);
        assert!(r.has(DiagnosticKind::SchemaError));
    }

    #[test]
    fn compound_and_targetless_cases() {
        let d = doc(
            r#""s":{"type":"switch","cases":[
                 {"all":[{"var":"a","op":"<","value":1},{"var":"b","op":">","value":2}],"next":"a"},
                 {"var":"c","op":"==","value":1}]},
               "a":{"type":"task","func":"f"}"#,
            "s",
        );
        let r = validate(&d);
        assert!(r.has(DiagnosticKind::CompoundGuard));
        assert!(r.has(DiagnosticKind::TargetlessCase));
    }

    #[test]
    fn repeat_count_zero() {
        let d = doc(r#""r":{"type":"repeat","func":"f","count":0}"#, "r");
        assert!(validate(&d).has(DiagnosticKind::InvalidCount));
    }

    #[test]
    fn map_fanout_warning() {
        let d = doc(r#""m":{"type":"map","func":"f","array":"xs"}"#, "m");
        let r = validate_with_fanouts(&d, &BTreeMap::from([("m".to_string(), 41)]));
        assert!(r.is_valid());
        let w: Vec<_> = r.warnings.iter().map(|w| w.message.as_str()).collect();
        assert!(w.iter().any(|m| m.contains("exceeds AWS max parallelism 40")), "{w:?}");
        assert!(w.iter().any(|m| m.contains("Google max parallelism 20")));
        assert!(!w.iter().any(|m| m.contains("Azure")));
        let r = validate_with_fanouts(&d, &BTreeMap::from([("m".to_string(), 20)]));
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn branch_rules() {
        let d = doc(
            r#""p":{"type":"parallel","branches":[["a"],["a","b"]]},
               "a":{"type":"task","func":"f"},"b":{"type":"task","func":"g","next":"c"},
               "c":{"type":"task","func":"h"}"#,
            "p",
        );
        let r = validate(&d);
        assert!(r.has(DiagnosticKind::BranchOverlap));
        assert!(r.has(DiagnosticKind::BranchEscape));
    }

    #[test]
    fn cycle_detected() {
        let d = doc(r#""a":{"type":"task","func":"f","next":"b"},"b":{"type":"task","func":"g","next":"a"}"#, "a");
        assert!(validate(&d).has(DiagnosticKind::Cycle));
    }

    #[test]
    fn catch_only_on_tasks() {
        let d = doc(r#""r":{"type":"repeat","func":"f","count":2,"catch":"u"},"u":{"type":"task","func":"undo"}"#, "r");
        assert!(validate(&d).has(DiagnosticKind::SchemaError));
    }
}
