use std::collections::BTreeMap;

use super::{FunctionSlot, GuardFormula, NetBuilder, NetError, Outcome, PhaseBoundary, PlaceId, TransitionId, WfdNet};
use crate::definition::{CaseGuard, Phase, PhaseKind, WorkflowDefinition};

/// Data element standing for the workflow input payload.
pub const INPUT_DATA: &str = "input";

/// Concrete widths of the data-dependent phases (map and loop) for one
/// instantiation.
pub type Fanouts = BTreeMap<String, usize>;

/// One way control can leave a sub-workflow: the places holding its tokens,
/// the data elements carrying its payload and the phase it left from.
#[derive(Debug, Clone)]
struct Alt {
    frontier: Vec<PlaceId>,
    data: Vec<String>,
    last: Option<String>,
}

struct Compiler<'a> {
    defn: &'a WorkflowDefinition,
    fanouts: &'a Fanouts,
    b: NetBuilder,
    coordinators: u32,
    names: BTreeMap<String, u32>,
}

/// Builds the net of one instantiation of `defn`.
///
/// Paths through switches are unfolded, so a phase reachable from several
/// cases is compiled once per path. A coordinator between two phases is left
/// out whenever a neighbouring sequential function can act as the split or
/// join; the boundary is still recorded.
pub fn build_net(defn: &WorkflowDefinition, fanouts: &Fanouts) -> Result<WfdNet, NetError> {
    let mut c = Compiler { defn, fanouts, b: NetBuilder::new(&defn.name), coordinators: 0, names: BTreeMap::new() };
    c.b.data(INPUT_DATA);
    let start = c.b.place("start");
    let end = c.b.place("end");
    let c0 = c.coordinator(Some(&defn.root));
    let p1 = c.b.place("");
    c.b.input(start, c0).output(c0, p1);
    c.b.boundary(PhaseBoundary { from: None, to: Some(defn.root.clone()), coordinator: Some(c0) });
    let alts = c.chain(&defn.root, Alt { frontier: vec![p1], data: vec![INPUT_DATA.to_owned()], last: None })?;
    for alt in alts {
        c.close(alt, end);
    }
    let mut net = c.b.build();
    let mut k = 0;
    for p in net.places.iter_mut() {
        if p.name.is_empty() {
            k += 1;
            p.name = format!("p{k}");
        }
    }
    Ok(net)
}

fn output_data(phase: &str) -> String {
    format!("out:{phase}")
}

impl Compiler<'_> {
    fn coordinator(&mut self, phase: Option<&str>) -> TransitionId {
        let t = self.b.coordinator(&format!("c{}", self.coordinators));
        self.coordinators += 1;
        self.b.transition_mut(t).phase = phase.map(str::to_owned);
        t
    }

    fn unique_name(&mut self, base: String) -> String {
        let n = self.names.entry(base.clone()).or_insert(0);
        *n += 1;
        if *n == 1 {
            base
        } else {
            format!("{base}#{n}")
        }
    }

    fn function(&mut self, slot: FunctionSlot, label: String, input: &Alt) -> TransitionId {
        let name = self.unique_name(label);
        let t = self.b.function(&name);
        let spec = self.defn.function(&slot.function).cloned();
        let tr = self.b.transition_mut(t);
        tr.phase = Some(slot.phase.clone());
        tr.reads.extend(input.data.iter().cloned());
        tr.writes.insert(output_data(&slot.phase));
        if let Some(spec) = spec {
            tr.reads.extend(spec.reads.iter().map(|d| d.name.clone()));
            tr.writes.extend(spec.writes.iter().map(|d| d.name.clone()));
            tr.destroys.extend(spec.destroys.iter().cloned());
        }
        tr.slot = Some(slot);
        t
    }

    fn phase(&self, name: &str) -> Result<&Phase, NetError> {
        self.defn.phase(name).ok_or_else(|| NetError::UnknownPhase(name.to_owned()))
    }

    fn width(&self, phase: &str) -> Result<usize, NetError> {
        self.fanouts.get(phase).copied().ok_or_else(|| NetError::FanoutMissing(phase.to_owned()))
    }

    /// Compiles `name` and everything its `next` chain reaches; returns every
    /// alternative way of finishing.
    fn chain(&mut self, name: &str, entry: Alt) -> Result<Vec<Alt>, NetError> {
        let phase = self.phase(name)?.clone();
        let (cont, mut done) = self.compile(&phase, entry)?;
        for alt in cont {
            match &phase.next {
                Some(next) => done.extend(self.chain(next, alt)?),
                None => done.push(alt),
            }
        }
        Ok(done)
    }

    fn record(&mut self, entry: &Alt, to: &str, coordinator: Option<TransitionId>) {
        if entry.last.is_some() {
            self.b.boundary(PhaseBoundary { from: entry.last.clone(), to: Some(to.to_owned()), coordinator });
        }
    }

    /// Fans the frontier out into `k` places. A lone place whose producer
    /// outputs only to it is widened in place; otherwise a coordinator joins
    /// the frontier and splits again.
    fn split(&mut self, entry: &Alt, to: &str, k: usize) -> Vec<PlaceId> {
        if let [p] = entry.frontier[..] {
            let producers = self.b.producers(p);
            if let [t] = producers[..] {
                if self.b.postset_of(t) == [p] {
                    let mut places = vec![p];
                    for _ in 1..k {
                        let q = self.b.place("");
                        self.b.output(t, q);
                        places.push(q);
                    }
                    self.record(entry, to, None);
                    return places;
                }
            }
        }
        let c = self.coordinator(Some(to));
        for p in &entry.frontier {
            self.b.input(*p, c);
        }
        let places: Vec<_> = (0..k).map(|_| self.b.place("")).collect();
        for q in &places {
            self.b.output(c, *q);
        }
        self.record(entry, to, Some(c));
        places
    }

    /// Returns alternatives that continue with `next` and alternatives that
    /// already finished (switch targets and failure handlers).
    fn compile(&mut self, phase: &Phase, entry: Alt) -> Result<(Vec<Alt>, Vec<Alt>), NetError> {
        let name = phase.name.as_str();
        let pass = |entry: &Alt| Alt {
            frontier: entry.frontier.clone(),
            data: entry.data.clone(),
            last: Some(name.to_owned()),
        };
        match &phase.kind {
            PhaseKind::Task { func } => {
                self.record(&entry, name, None);
                let slot = FunctionSlot { phase: name.to_owned(), function: func.clone(), slot: 0, step: 0 };
                let ok = self.function(slot.clone(), func.clone(), &entry);
                for p in &entry.frontier {
                    self.b.input(*p, ok);
                }
                let q = self.b.place("");
                self.b.output(ok, q);
                let out = Alt { frontier: vec![q], data: vec![output_data(name)], last: Some(name.to_owned()) };
                let Some(handler) = &phase.catch else {
                    return Ok((vec![out], Vec::new()));
                };
                self.b.transition_mut(ok).outcome = Some(Outcome::Success);
                let fail = self.function(slot, format!("{func}!fail"), &entry);
                self.b.transition_mut(fail).outcome = Some(Outcome::Failure);
                for p in &entry.frontier {
                    self.b.input(*p, fail);
                }
                let r = self.b.place("");
                self.b.output(fail, r);
                let failed = Alt { frontier: vec![r], data: entry.data.clone(), last: Some(name.to_owned()) };
                let handled = self.chain(handler, failed)?;
                Ok((vec![out], handled))
            }
            PhaseKind::Loop { func, .. } | PhaseKind::Repeat { func, .. } => {
                let n = match &phase.kind {
                    PhaseKind::Repeat { count, .. } => *count as usize,
                    _ => self.width(name)?,
                };
                if n == 0 {
                    self.record(&entry, name, None);
                    return Ok((vec![pass(&entry)], Vec::new()));
                }
                self.record(&entry, name, None);
                let mut frontier = entry.frontier.clone();
                let mut input = entry.clone();
                for i in 0..n {
                    let slot = FunctionSlot { phase: name.to_owned(), function: func.clone(), slot: i as u32, step: 0 };
                    let t = self.function(slot, format!("{func}[{i}]"), &input);
                    for p in &frontier {
                        self.b.input(*p, t);
                    }
                    let q = self.b.place("");
                    self.b.output(t, q);
                    frontier = vec![q];
                    input.data = vec![output_data(name)];
                }
                Ok((vec![Alt { frontier, data: vec![output_data(name)], last: Some(name.to_owned()) }], Vec::new()))
            }
            PhaseKind::Map { body, .. } => {
                let w = self.width(name)?;
                if w == 0 {
                    self.record(&entry, name, None);
                    return Ok((vec![pass(&entry)], Vec::new()));
                }
                let starts = self.split(&entry, name, w);
                let mut frontier = Vec::with_capacity(w);
                for (i, mut p) in starts.into_iter().enumerate() {
                    let mut input = entry.clone();
                    for (j, func) in body.iter().enumerate() {
                        let slot = FunctionSlot {
                            phase: name.to_owned(),
                            function: func.clone(),
                            slot: i as u32,
                            step: j as u32,
                        };
                        let t = self.function(slot, format!("{func}[{i}]"), &input);
                        let q = self.b.place("");
                        self.b.input(p, t).output(t, q);
                        p = q;
                        input.data = vec![output_data(name)];
                    }
                    frontier.push(p);
                }
                Ok((vec![Alt { frontier, data: vec![output_data(name)], last: Some(name.to_owned()) }], Vec::new()))
            }
            PhaseKind::Parallel { branches } => {
                let starts = self.split(&entry, name, branches.len());
                let mut frontier = Vec::new();
                let mut data = Vec::new();
                for (branch, p) in branches.iter().zip(starts) {
                    let Some(first) = branch.first() else { continue };
                    let inner = Alt { frontier: vec![p], data: entry.data.clone(), last: Some(name.to_owned()) };
                    let mut alts = self.chain(first, inner)?;
                    let alt = if alts.len() == 1 {
                        alts.pop().expect("one alternative")
                    } else {
                        let m = self.b.place("");
                        let mut merged_data = Vec::new();
                        for alt in alts {
                            merged_data.extend(alt.data.iter().cloned());
                            self.close(alt, m);
                        }
                        Alt { frontier: vec![m], data: merged_data, last: None }
                    };
                    frontier.extend(alt.frontier);
                    data.extend(alt.data);
                }
                data.sort();
                data.dedup();
                Ok((vec![Alt { frontier, data, last: Some(name.to_owned()) }], Vec::new()))
            }
            PhaseKind::Switch { cases, defaults } => {
                let mut earlier = Vec::new();
                let mut done = Vec::new();
                let mut first_coordinator = None;
                let mut routes: Vec<(GuardFormula, String)> = Vec::new();
                for case in cases {
                    let guard = match &case.guard {
                        CaseGuard::Single(g) => g.clone(),
                        CaseGuard::All(_) => return Err(NetError::CompoundGuard(name.to_owned())),
                    };
                    let target = case.next.clone().ok_or_else(|| NetError::TargetlessCase(name.to_owned()))?;
                    routes.push((GuardFormula { holds: Some(guard.clone()), excludes: earlier.clone() }, target));
                    earlier.push(guard);
                }
                if let Some(target) = defaults.first() {
                    routes.push((GuardFormula { holds: None, excludes: earlier }, target.clone()));
                }
                for (guard, target) in routes {
                    let c = self.coordinator(Some(name));
                    first_coordinator.get_or_insert(c);
                    {
                        let tr = self.b.transition_mut(c);
                        tr.guard = Some(guard);
                        tr.route = Some((name.to_owned(), target.clone()));
                        tr.reads.extend(entry.data.iter().cloned());
                    }
                    for p in &entry.frontier {
                        self.b.input(*p, c);
                    }
                    let q = self.b.place("");
                    self.b.output(c, q);
                    let routed = Alt { frontier: vec![q], data: entry.data.clone(), last: Some(name.to_owned()) };
                    done.extend(self.chain(&target, routed)?);
                }
                self.record(&entry, name, first_coordinator);
                Ok((Vec::new(), done))
            }
        }
    }

    /// Routes an alternative into `target`: a lone place is merged into it,
    /// several places are joined by a final coordinator.
    fn close(&mut self, alt: Alt, target: PlaceId) {
        if let [p] = alt.frontier[..] {
            self.b.merge_place(p, target);
            if alt.last.is_some() {
                self.b.boundary(PhaseBoundary { from: alt.last, to: None, coordinator: None });
            }
            return;
        }
        let c = self.coordinator(None);
        for p in &alt.frontier {
            self.b.input(*p, c);
        }
        self.b.output(c, target);
        self.b.boundary(PhaseBoundary { from: alt.last, to: None, coordinator: Some(c) });
    }
}
