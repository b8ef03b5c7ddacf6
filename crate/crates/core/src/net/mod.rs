//! Workflow nets with data built from workflow definitions.
//!
//! Transitions are either coordinators (the platform's orchestrator) or
//! serverless function executions. A net is built per instantiation because
//! map widths depend on the payload.

mod build;
mod export;
mod game;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde_json::Value;
use thiserror::Error;

use crate::definition::{Guard, GuardError};

pub use build::{build_net, Fanouts};
pub use export::export_lines;
pub use game::{replay, token_game, FiringPolicy, FiringSequence, Marking, ReplayChoices, ReplayStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlaceId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransitionId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRef {
    Place(PlaceId),
    Transition(TransitionId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    Coordinator,
    Function,
}

/// Identity of one function execution slot inside a phase instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FunctionSlot {
    pub phase: String,
    pub function: String,
    /// Map element, loop iteration or repeat iteration; 0 for tasks.
    pub slot: u32,
    /// Position in a map chain; 0 otherwise.
    pub step: u32,
}

/// Which outcome of a task with a failure handler this transition models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Success,
    Failure,
}

/// Conjunction `holds ∧ ¬excludes[0] ∧ ¬excludes[1] ...`; ordered switch
/// cases become mutually exclusive guards this way.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardFormula {
    pub holds: Option<Guard>,
    pub excludes: Vec<Guard>,
}

impl GuardFormula {
    pub fn evaluate(&self, data: &Value) -> Result<bool, GuardError> {
        for g in &self.excludes {
            if g.evaluate(data)? {
                return Ok(false);
            }
        }
        match &self.holds {
            Some(g) => g.evaluate(data),
            None => Ok(true),
        }
    }
}

impl fmt::Display for GuardFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.holds.iter().map(|g| g.to_string()).collect();
        parts.extend(self.excludes.iter().map(|g| format!("!({g})")));
        if parts.is_empty() {
            f.write_str("true")
        } else {
            f.write_str(&parts.join(" && "))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub id: TransitionId,
    pub name: String,
    pub kind: TransitionKind,
    /// Owning phase (for coordinators: the phase they schedule, if any).
    pub phase: Option<String>,
    pub slot: Option<FunctionSlot>,
    pub guard: Option<GuardFormula>,
    /// Switch phase and the target this guarded coordinator routes to.
    pub route: Option<(String, String)>,
    pub outcome: Option<Outcome>,
    pub reads: BTreeSet<String>,
    pub writes: BTreeSet<String>,
    pub destroys: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Place {
    pub id: PlaceId,
    pub name: String,
}

/// A boundary between two consecutive phases. Elided boundaries have no
/// coordinator transition; the neighbouring sequential function performs the
/// split or join instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseBoundary {
    pub from: Option<String>,
    pub to: Option<String>,
    pub coordinator: Option<TransitionId>,
}

impl PhaseBoundary {
    pub fn is_elided(&self) -> bool {
        self.coordinator.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("no fan-out supplied for phase `{0}`")]
    FanoutMissing(String),
    #[error("definition refers to unknown phase `{0}`")]
    UnknownPhase(String),
    #[error("unknown transition {0:?}")]
    UnknownTransition(TransitionId),
    #[error("switch case in `{0}` has no target")]
    TargetlessCase(String),
    #[error("compound guard in `{0}` cannot be represented")]
    CompoundGuard(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WfdNet {
    pub name: String,
    places: Vec<Place>,
    transitions: Vec<Transition>,
    arcs: BTreeSet<(NodeRef, NodeRef)>,
    presets: Vec<BTreeSet<PlaceId>>,
    postsets: Vec<BTreeSet<PlaceId>>,
    data: BTreeSet<String>,
    boundaries: Vec<PhaseBoundary>,
}

impl WfdNet {
    pub fn places(&self) -> &[Place] {
        &self.places
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn arcs(&self) -> impl Iterator<Item = &(NodeRef, NodeRef)> {
        self.arcs.iter()
    }

    pub fn data(&self) -> &BTreeSet<String> {
        &self.data
    }

    pub fn boundaries(&self) -> &[PhaseBoundary] {
        &self.boundaries
    }

    pub fn place(&self, id: PlaceId) -> &Place {
        &self.places[id.0 as usize]
    }

    pub fn place_by_name(&self, name: &str) -> Option<PlaceId> {
        self.places.iter().find(|p| p.name == name).map(|p| p.id)
    }

    pub fn transition(&self, id: TransitionId) -> Result<&Transition, NetError> {
        self.transitions.get(id.0 as usize).ok_or(NetError::UnknownTransition(id))
    }

    pub fn transition_by_name(&self, name: &str) -> Option<TransitionId> {
        self.transitions.iter().find(|t| t.name == name).map(|t| t.id)
    }

    pub fn coordinators(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(|t| t.kind == TransitionKind::Coordinator)
    }

    pub fn functions(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(|t| t.kind == TransitionKind::Function)
    }

    /// `•t`: places with an arc into `t`.
    pub fn preset(&self, t: TransitionId) -> Result<&BTreeSet<PlaceId>, NetError> {
        self.presets.get(t.0 as usize).ok_or(NetError::UnknownTransition(t))
    }

    /// `t•`: places `t` has an arc into.
    pub fn postset(&self, t: TransitionId) -> Result<&BTreeSet<PlaceId>, NetError> {
        self.postsets.get(t.0 as usize).ok_or(NetError::UnknownTransition(t))
    }

    pub fn place_names(&self, ids: &BTreeSet<PlaceId>) -> BTreeSet<String> {
        ids.iter().map(|p| self.place(*p).name.clone()).collect()
    }

    fn successors(&self, node: NodeRef) -> Vec<NodeRef> {
        self.arcs
            .range((node, NodeRef::Place(PlaceId(0)))..)
            .take_while(|(from, _)| *from == node)
            .map(|(_, to)| *to)
            .collect()
    }

    fn node_name(&self, node: NodeRef) -> String {
        match node {
            NodeRef::Place(p) => self.place(p).name.clone(),
            NodeRef::Transition(t) => self.transitions[t.0 as usize].name.clone(),
        }
    }

    /// Checks the three workflow-net properties plus the data constraints.
    pub fn check(&self) -> StructuralReport {
        check_workflow_net(self)
    }
}

/// Incrementally assembles a net; also used to build hand-made nets.
#[derive(Debug, Default, Clone)]
pub struct NetBuilder {
    name: String,
    places: Vec<(String, bool)>,
    transitions: Vec<Transition>,
    arcs: BTreeSet<(NodeRef, NodeRef)>,
    data: BTreeSet<String>,
    boundaries: Vec<PhaseBoundary>,
}

impl NetBuilder {
    pub fn new(name: &str) -> NetBuilder {
        NetBuilder { name: name.to_owned(), ..NetBuilder::default() }
    }

    pub fn place(&mut self, name: &str) -> PlaceId {
        self.places.push((name.to_owned(), true));
        PlaceId(self.places.len() as u32 - 1)
    }

    pub fn coordinator(&mut self, name: &str) -> TransitionId {
        self.transition(name, TransitionKind::Coordinator)
    }

    pub fn function(&mut self, name: &str) -> TransitionId {
        self.transition(name, TransitionKind::Function)
    }

    pub fn transition(&mut self, name: &str, kind: TransitionKind) -> TransitionId {
        let id = TransitionId(self.transitions.len() as u32);
        self.transitions.push(Transition {
            id,
            name: name.to_owned(),
            kind,
            phase: None,
            slot: None,
            guard: None,
            route: None,
            outcome: None,
            reads: BTreeSet::new(),
            writes: BTreeSet::new(),
            destroys: BTreeSet::new(),
        });
        id
    }

    pub fn transition_mut(&mut self, id: TransitionId) -> &mut Transition {
        &mut self.transitions[id.0 as usize]
    }

    pub fn input(&mut self, p: PlaceId, t: TransitionId) -> &mut Self {
        self.arcs.insert((NodeRef::Place(p), NodeRef::Transition(t)));
        self
    }

    pub fn output(&mut self, t: TransitionId, p: PlaceId) -> &mut Self {
        self.arcs.insert((NodeRef::Transition(t), NodeRef::Place(p)));
        self
    }

    pub fn data(&mut self, name: &str) -> &mut Self {
        self.data.insert(name.to_owned());
        self
    }

    pub(crate) fn boundary(&mut self, b: PhaseBoundary) {
        self.boundaries.push(b);
    }

    pub(crate) fn producers(&self, p: PlaceId) -> Vec<TransitionId> {
        self.arcs
            .iter()
            .filter_map(|(from, to)| match (from, to) {
                (NodeRef::Transition(t), NodeRef::Place(q)) if *q == p => Some(*t),
                _ => None,
            })
            .collect()
    }

    pub(crate) fn postset_of(&self, t: TransitionId) -> Vec<PlaceId> {
        self.arcs
            .iter()
            .filter_map(|(from, to)| match (from, to) {
                (NodeRef::Transition(s), NodeRef::Place(q)) if *s == t => Some(*q),
                _ => None,
            })
            .collect()
    }

    /// Redirects every arc touching `from` to `into` and drops `from`.
    pub(crate) fn merge_place(&mut self, from: PlaceId, into: PlaceId) {
        if from == into {
            return;
        }
        let moved: Vec<_> = self
            .arcs
            .iter()
            .filter(|(a, b)| *a == NodeRef::Place(from) || *b == NodeRef::Place(from))
            .copied()
            .collect();
        for arc in moved {
            self.arcs.remove(&arc);
            let swap = |n: NodeRef| if n == NodeRef::Place(from) { NodeRef::Place(into) } else { n };
            self.arcs.insert((swap(arc.0), swap(arc.1)));
        }
        self.places[from.0 as usize].1 = false;
    }

    /// Drops merged places and renumbers the rest in creation order.
    pub fn build(self) -> WfdNet {
        let mut remap = BTreeMap::new();
        let mut places = Vec::new();
        for (old, (name, live)) in self.places.into_iter().enumerate() {
            if live {
                let id = PlaceId(places.len() as u32);
                remap.insert(PlaceId(old as u32), id);
                places.push(Place { id, name });
            }
        }
        let fix = |n: NodeRef| match n {
            NodeRef::Place(p) => NodeRef::Place(remap[&p]),
            t => t,
        };
        let arcs: BTreeSet<_> = self.arcs.into_iter().map(|(a, b)| (fix(a), fix(b))).collect();
        let mut presets = vec![BTreeSet::new(); self.transitions.len()];
        let mut postsets = vec![BTreeSet::new(); self.transitions.len()];
        for (a, b) in &arcs {
            match (a, b) {
                (NodeRef::Place(p), NodeRef::Transition(t)) => {
                    presets[t.0 as usize].insert(*p);
                }
                (NodeRef::Transition(t), NodeRef::Place(p)) => {
                    postsets[t.0 as usize].insert(*p);
                }
                _ => {}
            }
        }
        let mut data = self.data;
        for t in &self.transitions {
            data.extend(t.reads.iter().cloned());
            data.extend(t.writes.iter().cloned());
            data.extend(t.destroys.iter().cloned());
        }
        WfdNet {
            name: self.name,
            places,
            transitions: self.transitions,
            arcs,
            presets,
            postsets,
            data,
            boundaries: self.boundaries,
        }
    }
}

/// Outcome of the structural workflow-net check. Every list names the
/// offending nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructuralReport {
    pub sources: Vec<String>,
    pub sinks: Vec<String>,
    /// Nodes that do not lie on a path from the source to the sink.
    pub off_path: Vec<String>,
    /// The first transition after the source is not a coordinator.
    pub initial_transition: Vec<String>,
    /// Guards reading data no predecessor writes, reads after destroy.
    pub data_violations: Vec<String>,
}

impl StructuralReport {
    pub fn unique_source(&self) -> bool {
        self.sources.len() == 1
    }

    pub fn unique_sink(&self) -> bool {
        self.sinks.len() == 1
    }

    pub fn connected(&self) -> bool {
        self.off_path.is_empty()
    }

    pub fn is_workflow_net(&self) -> bool {
        self.unique_source() && self.unique_sink() && self.connected()
    }

    pub fn is_sound_structure(&self) -> bool {
        self.is_workflow_net() && self.initial_transition.is_empty() && self.data_violations.is_empty()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.unique_source() {
            out.push(format!("expected one source place, found {:?}", self.sources));
        }
        if !self.unique_sink() {
            out.push(format!("expected one sink place, found {:?}", self.sinks));
        }
        if !self.connected() {
            out.push(format!("not on a source-to-sink path: {:?}", self.off_path));
        }
        out.extend(
            self.initial_transition.iter().map(|t| format!("`{t}` follows the source but is not a coordinator")),
        );
        out.extend(self.data_violations.iter().cloned());
        out
    }
}

pub fn check_workflow_net(net: &WfdNet) -> StructuralReport {
    let mut has_in = BTreeSet::new();
    let mut has_out = BTreeSet::new();
    for (a, b) in &net.arcs {
        has_out.insert(*a);
        has_in.insert(*b);
    }
    let sources: Vec<PlaceId> =
        net.places.iter().map(|p| p.id).filter(|p| !has_in.contains(&NodeRef::Place(*p))).collect();
    let sinks: Vec<PlaceId> =
        net.places.iter().map(|p| p.id).filter(|p| !has_out.contains(&NodeRef::Place(*p))).collect();

    let mut predecessors: BTreeMap<NodeRef, Vec<NodeRef>> = BTreeMap::new();
    for (a, b) in &net.arcs {
        predecessors.entry(*b).or_default().push(*a);
    }
    let reach = |starts: Vec<NodeRef>, forward: bool| -> BTreeSet<NodeRef> {
        let mut seen = BTreeSet::new();
        let mut stack = starts;
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            if forward {
                stack.extend(net.successors(n));
            } else if let Some(ps) = predecessors.get(&n) {
                stack.extend(ps.iter().copied());
            }
        }
        seen
    };
    // connectivity is measured against the designated source and sink, so an
    // isolated place does not count as lying on its own path
    let designated = |candidates: &[PlaceId], name: &str| -> Vec<NodeRef> {
        net.place_by_name(name).or_else(|| candidates.first().copied()).map(NodeRef::Place).into_iter().collect()
    };
    let from_source = reach(designated(&sources, "start"), true);
    let to_sink = reach(designated(&sinks, "end"), false);
    let all_nodes = net
        .places
        .iter()
        .map(|p| NodeRef::Place(p.id))
        .chain(net.transitions.iter().map(|t| NodeRef::Transition(t.id)));
    let off_path =
        all_nodes.filter(|n| !(from_source.contains(n) && to_sink.contains(n))).map(|n| net.node_name(n)).collect();

    let mut initial_transition = Vec::new();
    for s in &sources {
        for n in net.successors(NodeRef::Place(*s)) {
            if let NodeRef::Transition(t) = n {
                if net.transitions[t.0 as usize].kind != TransitionKind::Coordinator {
                    initial_transition.push(net.transitions[t.0 as usize].name.clone());
                }
            }
        }
    }

    StructuralReport {
        sources: sources.iter().map(|p| net.place(*p).name.clone()).collect(),
        sinks: sinks.iter().map(|p| net.place(*p).name.clone()).collect(),
        off_path,
        initial_transition,
        data_violations: data_violations(net, &predecessors),
    }
}

/// Guarded transitions may only read the workflow input or data written on
/// some path before them, and no path may read an element after destroying
/// it.
fn data_violations(net: &WfdNet, predecessors: &BTreeMap<NodeRef, Vec<NodeRef>>) -> Vec<String> {
    let mut out = Vec::new();
    for t in &net.transitions {
        if t.reads.is_empty() {
            continue;
        }
        let mut written = BTreeSet::new();
        let mut destroyed = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut stack: Vec<NodeRef> = predecessors.get(&NodeRef::Transition(t.id)).cloned().unwrap_or_default();
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            if let NodeRef::Transition(u) = n {
                let u = &net.transitions[u.0 as usize];
                written.extend(u.writes.iter().cloned());
                destroyed.extend(u.destroys.iter().cloned());
            }
            if let Some(ps) = predecessors.get(&n) {
                stack.extend(ps.iter().copied());
            }
        }
        for r in &t.reads {
            if t.guard.is_some() && r != build::INPUT_DATA && !written.contains(r) {
                out.push(format!("`{}` reads `{r}`, which no predecessor writes", t.name));
            }
            if destroyed.contains(r) {
                out.push(format!("`{}` reads `{r}` after it was destroyed", t.name));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-built net from the classic example: t1 splits into two branches
    /// that t4 joins.
    pub(crate) fn example_net() -> WfdNet {
        let mut b = NetBuilder::new("example");
        let start = b.place("start");
        let p: Vec<_> = (1..=4).map(|i| b.place(&format!("p{i}"))).collect();
        let end = b.place("end");
        let t1 = b.coordinator("t1");
        let t2 = b.function("t2");
        let t3 = b.function("t3");
        let t4 = b.function("t4");
        b.input(start, t1).output(t1, p[0]).output(t1, p[1]);
        b.input(p[0], t2).output(t2, p[2]);
        b.input(p[1], t3).output(t3, p[3]);
        b.input(p[2], t4).input(p[3], t4).output(t4, end);
        b.transition_mut(t1).writes.insert("x".into());
        b.transition_mut(t2).reads.insert("x".into());
        b.transition_mut(t3).reads.insert("x".into());
        b.build()
    }

    #[test]
    fn example_preset_postset() {
        let net = example_net();
        let t1 = net.transition_by_name("t1").unwrap();
        assert_eq!(net.place_names(net.preset(t1).unwrap()), BTreeSet::from(["start".to_string()]));
        assert_eq!(net.place_names(net.postset(t1).unwrap()), BTreeSet::from(["p1".to_string(), "p2".to_string()]));
        assert!(net.check().is_sound_structure(), "{:?}", net.check());
    }

    #[test]
    fn unknown_transition() {
        let net = example_net();
        assert_eq!(net.preset(TransitionId(99)), Err(NetError::UnknownTransition(TransitionId(99))));
    }

    #[test]
    fn empty_preset() {
        let mut b = NetBuilder::new("dangling");
        let p = b.place("p");
        let t = b.function("spontaneous");
        b.output(t, p);
        let net = b.build();
        assert!(net.preset(t).unwrap().is_empty());
        let report = net.check();
        // the transition itself is not reachable from the source place
        assert!(report.off_path.contains(&"spontaneous".to_string()));
    }

    #[test]
    fn isolated_place_breaks_connectivity() {
        let mut b = NetBuilder::new("isolated");
        let start = b.place("start");
        let end = b.place("end");
        let lonely = b.place("lonely");
        let _ = lonely;
        let c = b.coordinator("c0");
        b.input(start, c).output(c, end);
        let report = b.build().check();
        // an isolated place is both a source and a sink, and off every path
        assert!(report.off_path.contains(&"lonely".to_string()));
        assert!(!report.connected());
    }

    #[test]
    fn two_sinks() {
        let mut b = NetBuilder::new("forked");
        let start = b.place("start");
        let e1 = b.place("end");
        let e2 = b.place("end2");
        let c = b.coordinator("c0");
        b.input(start, c).output(c, e1).output(c, e2);
        let report = b.build().check();
        assert!(!report.unique_sink());
        assert_eq!(report.sinks, vec!["end".to_string(), "end2".to_string()]);
        assert!(report.unique_source());
    }

    #[test]
    fn read_without_writer_and_after_destroy() {
        let mut b = NetBuilder::new("data");
        let start = b.place("start");
        let p1 = b.place("p1");
        let p2 = b.place("p2");
        let end = b.place("end");
        let c = b.coordinator("c0");
        let f = b.function("f");
        let g = b.function("g");
        b.input(start, c).output(c, p1).input(p1, f).output(f, p2).input(p2, g).output(g, end);
        b.transition_mut(f).writes.insert("x".into());
        b.transition_mut(f).destroys.insert("x".into());
        b.transition_mut(g).reads.insert("x".into());
        b.transition_mut(g).reads.insert("y".into());
        b.transition_mut(g).guard = Some(GuardFormula { holds: None, excludes: Vec::new() });
        let report = b.build().check();
        assert_eq!(report.data_violations.len(), 2, "{:?}", report.data_violations);
        assert!(report.is_workflow_net());
    }
}
