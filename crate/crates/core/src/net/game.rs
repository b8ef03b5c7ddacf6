use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde_json::Value;
use thiserror::Error;

use super::{FunctionSlot, Outcome, PlaceId, Transition, TransitionId, TransitionKind, WfdNet};
use crate::definition::GuardError;

/// Token count per place; places without tokens are absent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Marking(BTreeMap<PlaceId, u32>);

impl Marking {
    pub fn initial(net: &WfdNet) -> Marking {
        let mut m = Marking::default();
        if let Some(start) = net.place_by_name("start") {
            m.0.insert(start, 1);
        }
        m
    }

    pub fn tokens(&self, p: PlaceId) -> u32 {
        self.0.get(&p).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PlaceId, u32)> + '_ {
        self.0.iter().map(|(p, n)| (*p, *n))
    }

    /// Exactly one token, on `end`.
    pub fn is_final(&self, net: &WfdNet) -> bool {
        match net.place_by_name("end") {
            Some(end) => self.total() == 1 && self.tokens(end) == 1,
            None => false,
        }
    }

    fn covers(&self, net: &WfdNet, t: TransitionId) -> bool {
        net.presets[t.0 as usize].iter().all(|p| self.tokens(*p) > 0)
    }

    fn fire(&mut self, net: &WfdNet, t: TransitionId) {
        for p in &net.presets[t.0 as usize] {
            let n = self.0.get_mut(p).expect("enabled transition has input tokens");
            *n -= 1;
            if *n == 0 {
                self.0.remove(p);
            }
        }
        for p in &net.postsets[t.0 as usize] {
            *self.0.entry(*p).or_insert(0) += 1;
        }
    }

    pub fn describe(&self, net: &WfdNet) -> String {
        let parts: Vec<String> = self.iter().map(|(p, n)| format!("{}:{n}", net.place(p).name)).collect();
        format!("{{{}}}", parts.join(", "))
    }
}

/// How conflicts between simultaneously enabled transitions are resolved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FiringPolicy {
    /// Each step fires every enabled transition in id order, skipping any
    /// that an earlier firing in the same step disabled.
    #[default]
    MaximalStep,
    /// Each step fires only the enabled transition with the lowest id.
    Interleaved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiringSequence {
    pub fired: Vec<TransitionId>,
    pub steps: Vec<Vec<TransitionId>>,
    pub marking: Marking,
    pub complete: bool,
}

impl FiringSequence {
    pub fn names<'a>(&self, net: &'a WfdNet) -> Vec<&'a str> {
        self.fired.iter().map(|t| net.transitions[t.0 as usize].name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("deadlock after {fired} firings with marking {marking}")]
    Deadlock { fired: usize, marking: String },
    #[error("guard of `{transition}` cannot be evaluated: {source}")]
    GuardUnresolvable { transition: String, source: GuardError },
}

fn outcome_allowed(t: &Transition, failing: &BTreeSet<String>) -> bool {
    let fails = t.phase.as_ref().is_some_and(|p| failing.contains(p));
    match t.outcome {
        None => true,
        Some(Outcome::Success) => !fails,
        Some(Outcome::Failure) => fails,
    }
}

/// Plays the token game from one token on `start`. Guards are evaluated
/// against `input`; phases in `failing` take their failure outcome.
pub fn token_game(
    net: &WfdNet,
    input: &Value,
    policy: FiringPolicy,
    failing: &BTreeSet<String>,
) -> Result<FiringSequence, GameError> {
    let mut marking = Marking::initial(net);
    let mut fired = Vec::new();
    let mut steps = Vec::new();
    let enabled = |m: &Marking, t: &Transition| -> Result<bool, GameError> {
        if !m.covers(net, t.id) || !outcome_allowed(t, failing) {
            return Ok(false);
        }
        match &t.guard {
            Some(g) => {
                g.evaluate(input).map_err(|source| GameError::GuardUnresolvable { transition: t.name.clone(), source })
            }
            None => Ok(true),
        }
    };
    // every firing consumes a token from an acyclic net, so this bounds the run
    let limit = net.transitions.len() + 1;
    for _ in 0..limit {
        let mut candidates = Vec::new();
        for t in &net.transitions {
            if enabled(&marking, t)? {
                candidates.push(t.id);
            }
        }
        if candidates.is_empty() {
            break;
        }
        if policy == FiringPolicy::Interleaved {
            candidates.truncate(1);
        }
        let mut step = Vec::new();
        for t in candidates {
            if marking.covers(net, t) {
                marking.fire(net, t);
                step.push(t);
                fired.push(t);
            }
        }
        steps.push(step);
    }
    if !marking.is_final(net) {
        return Err(GameError::Deadlock { fired: fired.len(), marking: marking.describe(net) });
    }
    Ok(FiringSequence { fired, steps, marking, complete: true })
}

/// Resolution of the choices an execution made: the target taken by each
/// switch and the phases whose function failed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayChoices {
    pub routes: BTreeMap<String, String>,
    pub failed: BTreeSet<String>,
}

/// A function execution observed in a trace.
pub type ReplayStep = FunctionSlot;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("event {index} ({event}) does not match an enabled transition; marking {marking}")]
    NotEnabled { index: usize, event: String, marking: String },
    #[error("trace ends with marking {0} instead of a token on `end`")]
    Incomplete(String),
}

impl fmt::Display for FunctionSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}[{}.{}]", self.phase, self.function, self.slot, self.step)
    }
}

/// Checks that the function executions of a trace, in order, form a firing
/// sequence of `net`. Coordinators fire whenever needed, following `choices`
/// at switches.
pub fn replay(net: &WfdNet, events: &[ReplayStep], choices: &ReplayChoices) -> Result<FiringSequence, ReplayError> {
    let mut marking = Marking::initial(net);
    let mut fired = Vec::new();
    let coordinator_allowed = |t: &Transition| {
        t.kind == TransitionKind::Coordinator
            && match &t.route {
                Some((switch, target)) => choices.routes.get(switch).is_none_or(|chosen| chosen == target),
                None => true,
            }
    };
    let next_coordinator =
        |m: &Marking| net.transitions.iter().find(|t| coordinator_allowed(t) && m.covers(net, t.id)).map(|t| t.id);
    for (index, event) in events.iter().enumerate() {
        loop {
            let matching = net.transitions.iter().find(|t| {
                t.slot.as_ref() == Some(event) && outcome_allowed(t, &choices.failed) && marking.covers(net, t.id)
            });
            if let Some(t) = matching {
                marking.fire(net, t.id);
                fired.push(t.id);
                break;
            }
            match next_coordinator(&marking) {
                Some(c) => {
                    marking.fire(net, c);
                    fired.push(c);
                }
                None => {
                    return Err(ReplayError::NotEnabled {
                        index,
                        event: event.to_string(),
                        marking: marking.describe(net),
                    })
                }
            }
        }
    }
    while let Some(c) = next_coordinator(&marking) {
        marking.fire(net, c);
        fired.push(c);
    }
    if !marking.is_final(net) {
        return Err(ReplayError::Incomplete(marking.describe(net)));
    }
    let steps = fired.iter().map(|t| vec![*t]).collect();
    Ok(FiringSequence { fired, steps, marking, complete: true })
}
