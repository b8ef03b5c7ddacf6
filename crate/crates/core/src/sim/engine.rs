//! Discrete-event timing of planned invocations over a shared container pool.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{Latency, PlatformModel};
use super::plan::{NodeKind, Plan};
use super::trace::{CoordinatorEvent, ExecutionTrace, FunctionEvent};

/// Containers of one pool. Containers never expire, so a later burst on the
/// same pool reuses them warm.
#[derive(Debug, Clone, Default)]
struct Pool {
    created: usize,
    idle: BTreeSet<usize>,
    queue: VecDeque<(usize, usize)>,
}

/// All pools of a simulated platform, persistent across bursts.
#[derive(Debug, Clone, Default)]
pub struct Pools {
    pools: BTreeMap<String, Pool>,
}

impl Pools {
    /// Containers ever created, by pool.
    pub fn containers(&self) -> BTreeMap<String, usize> {
        self.pools.iter().map(|(k, p)| (k.clone(), p.created)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Finish,
    Done,
    Ready,
    Request,
}

#[derive(Debug, Clone, Default)]
struct NodeState {
    pending: usize,
    dispatch: u64,
    start: u64,
    end: u64,
    container: Option<usize>,
    cold: bool,
    done: Option<u64>,
}

#[derive(Debug, Clone, Default)]
struct Group {
    active: u32,
    waiting: VecDeque<usize>,
}

struct Engine<'a> {
    model: &'a PlatformModel,
    plans: &'a [Plan],
    seed: u64,
    heap: BinaryHeap<Reverse<(u64, Kind, usize, usize)>>,
    state: Vec<Vec<NodeState>>,
    dependents: Vec<Vec<Vec<usize>>>,
    groups: Vec<Vec<Group>>,
    coordinators: Vec<Vec<CoordinatorEvent>>,
    pools: &'a mut Pools,
}

/// Stream of cold-start draws that depends only on the seed and the
/// position of the execution, never on event order.
fn cold_draw(latency: Latency, seed: u64, invocation: u32, node: usize) -> u64 {
    match latency {
        Latency::Fixed { us } => us,
        Latency::Uniform { min_us, max_us } => {
            let key = seed ^ (u64::from(invocation) << 32 | node as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            ChaCha8Rng::seed_from_u64(key).random_range(min_us..=max_us)
        }
    }
}

impl Engine<'_> {
    fn push(&mut self, time: u64, kind: Kind, inv: usize, node: usize) {
        self.heap.push(Reverse((time, kind, inv, node)));
    }

    fn job(&self, inv: usize, node: usize) -> &super::plan::Job {
        match &self.plans[inv].nodes[node].kind {
            NodeKind::Job(job) => job,
            NodeKind::Control { .. } => unreachable!("only jobs acquire containers"),
        }
    }

    fn ready(&mut self, t: u64, inv: usize, node: usize) {
        match &self.plans[inv].nodes[node].kind {
            NodeKind::Control { label, phase, duration_us } => {
                self.coordinators[inv].push(CoordinatorEvent {
                    invocation: self.plans[inv].invocation,
                    label: label.clone(),
                    phase: phase.clone(),
                    start_us: t,
                    end_us: t + duration_us,
                });
                let end = t + duration_us;
                self.push(end, Kind::Done, inv, node);
            }
            NodeKind::Job(job) => {
                let at = t + job.pre_us + job.stagger_us;
                self.state[inv][node].dispatch = at;
                self.push(at, Kind::Request, inv, node);
            }
        }
    }

    fn request(&mut self, t: u64, inv: usize, node: usize) {
        if let Some(g) = self.job(inv, node).group {
            let limit = self.plans[inv].groups[g];
            let group = &mut self.groups[inv][g];
            if limit.is_some_and(|l| group.active >= l) {
                group.waiting.push_back(node);
                return;
            }
            group.active += 1;
        }
        self.acquire(t, inv, node);
    }

    fn acquire(&mut self, t: u64, inv: usize, node: usize) {
        let cap = self.model.container_cap;
        let key = self.job(inv, node).pool.clone();
        let pool = self.pools.pools.entry(key).or_default();
        let (container, latency, cold) = if let Some(c) = pool.idle.pop_first() {
            (c, self.model.warm_start_us, false)
        } else if cap.is_none_or(|cap| pool.created < cap as usize) {
            pool.created += 1;
            let draw = cold_draw(self.model.cold_start, self.seed, self.plans[inv].invocation, node);
            (pool.created - 1, draw, true)
        } else {
            pool.queue.push_back((inv, node));
            return;
        };
        self.start(t + latency, inv, node, container, cold);
    }

    fn start(&mut self, at: u64, inv: usize, node: usize, container: usize, cold: bool) {
        let run = self.job(inv, node).run_us;
        let s = &mut self.state[inv][node];
        s.start = at;
        s.end = at + run;
        s.container = Some(container);
        s.cold = cold;
        self.push(at + run, Kind::Finish, inv, node);
    }

    fn finish(&mut self, t: u64, inv: usize, node: usize) {
        let job = self.job(inv, node);
        let (key, group, tail) = (job.pool.clone(), job.group, job.return_us + job.post_us);
        let container = self.state[inv][node].container.expect("running job holds a container");
        let pool = self.pools.pools.get_mut(&key).expect("pool exists while a job runs");
        match pool.queue.pop_front() {
            Some((wi, wn)) => {
                let warm = self.model.warm_start_us;
                self.start(t + warm, wi, wn, container, false);
            }
            None => {
                pool.idle.insert(container);
            }
        }
        if let Some(g) = group {
            let group = &mut self.groups[inv][g];
            group.active -= 1;
            if let Some(next) = group.waiting.pop_front() {
                group.active += 1;
                self.acquire(t, inv, next);
            }
        }
        self.push(t + tail, Kind::Done, inv, node);
    }

    fn done(&mut self, t: u64, inv: usize, node: usize) {
        self.state[inv][node].done = Some(t);
        for i in 0..self.dependents[inv][node].len() {
            let d = self.dependents[inv][node][i];
            let s = &mut self.state[inv][d];
            s.pending -= 1;
            if s.pending == 0 {
                self.push(t, Kind::Ready, inv, d);
            }
        }
    }
}

/// Times every plan, all submitted at `origin_us`, against `pools`.
pub(crate) fn execute(
    plans: &[Plan],
    model: &PlatformModel,
    pools: &mut Pools,
    seed: u64,
    origin_us: u64,
    workflow: &str,
) -> Vec<ExecutionTrace> {
    let mut engine = Engine {
        model,
        plans,
        seed,
        heap: BinaryHeap::new(),
        state: Vec::new(),
        dependents: Vec::new(),
        groups: Vec::new(),
        coordinators: vec![Vec::new(); plans.len()],
        pools,
    };
    for plan in plans {
        let mut state = vec![NodeState::default(); plan.nodes.len()];
        let mut dependents = vec![Vec::new(); plan.nodes.len()];
        for (i, n) in plan.nodes.iter().enumerate() {
            state[i].pending = n.deps.len();
            for &d in &n.deps {
                dependents[d].push(i);
            }
        }
        engine.state.push(state);
        engine.dependents.push(dependents);
        engine.groups.push(vec![Group::default(); plan.groups.len()]);
    }
    for (inv, plan) in plans.iter().enumerate() {
        for (i, n) in plan.nodes.iter().enumerate() {
            if n.deps.is_empty() {
                engine.push(origin_us, Kind::Ready, inv, i);
            }
        }
    }
    while let Some(Reverse((t, kind, inv, node))) = engine.heap.pop() {
        match kind {
            Kind::Ready => engine.ready(t, inv, node),
            Kind::Request => engine.request(t, inv, node),
            Kind::Finish => engine.finish(t, inv, node),
            Kind::Done => engine.done(t, inv, node),
        }
    }

    let Engine { state, mut coordinators, .. } = engine;
    plans
        .iter()
        .zip(state)
        .zip(coordinators.iter_mut())
        .map(|((plan, state), coordinators)| {
            let mut events = Vec::new();
            for (i, (node, s)) in plan.nodes.iter().zip(&state).enumerate() {
                let NodeKind::Job(job) = &node.kind else { continue };
                let container = s.container.expect("every job ran");
                events.push(FunctionEvent {
                    invocation: plan.invocation,
                    id: i as u32,
                    function: job.function.clone(),
                    phase: job.phase.clone(),
                    stage: job.stage.clone(),
                    slot: job.slot,
                    step: job.step,
                    dispatch_us: s.dispatch,
                    start_us: s.start,
                    end_us: s.end,
                    container: format!("{}#{container}", job.pool),
                    cold: s.cold,
                    payload_in_bytes: job.payload_in,
                    payload_out_bytes: job.payload_out,
                    failed: job.failed,
                    compensation: job.compensation,
                });
            }
            events.sort_by_key(|e| (e.start_us, e.id));
            coordinators.sort_by(|a, b| (a.start_us, &a.label).cmp(&(b.start_us, &b.label)));
            let completed_us = state.iter().filter_map(|s| s.done).max().unwrap_or(origin_us);
            ExecutionTrace {
                invocation: plan.invocation,
                workflow: workflow.to_owned(),
                model: model.name.clone(),
                interpreter: model.interpreter,
                seed,
                submitted_us: origin_us,
                completed_us,
                events,
                coordinators: std::mem::take(coordinators),
                charged_transitions: plan.charged_transitions,
                fanouts: plan.fanouts.clone(),
                routes: plan.routes.clone(),
                failed: plan.failed.clone(),
                store_ops: plan.store_ops.clone(),
                kv_items: plan.kv_items,
                output: plan.output.clone(),
            }
        })
        .collect()
}
