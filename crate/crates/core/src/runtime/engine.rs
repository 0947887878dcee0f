//! The discrete-event engine.
//!
//! A [`Plan`] holds everything derived from the program once (levels,
//! federate filter, hash); an [`Engine`] is one run of a plan. Tags are
//! processed in order; at each tag the triggered reactions run level by
//! level, and port writes become visible when their level completes.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use thiserror::Error;

use super::clock::PhysicalClock;
use super::clock_script::{self, EntryKind, ScriptEntry};
use super::context::{Callbacks, ReactionCtx};
use super::interp;
use super::queue::{Event, EventKind, EventQueue};
use crate::dsl::ast::ActionOrigin;
use crate::graph::{assign_levels, build_graph, GraphError, LevelMap};
use crate::instance::{Body, ConnectionId, InstanceGraph, ReactionId, TriggerId, TriggerKind, SHUTDOWN, STARTUP};
use crate::time::{timer_next, Deadline, Tag, TimeError, TimeValue};
use crate::trace::{canonicalize, config_digest, Header, PhysRecord, RecordKind, Trace, TraceRecord};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Logical time advances without waiting; the physical clock is virtual.
    Fast,
    /// Logical time waits for the host clock.
    Realtime,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Fast => "fast",
            Mode::Realtime => "realtime",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub workers: usize,
    pub timeout: Option<TimeValue>,
    /// Seeds a random real sleep before each reaction. Never affects the
    /// virtual clock, so fast-mode traces must not change.
    pub jitter_seed: Option<u64>,
    pub clock_script: Vec<ScriptEntry>,
    /// Keep waiting for injections when the event queue is empty.
    pub keepalive: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { mode: Mode::Fast, workers: 1, timeout: None, jitter_seed: None, clock_script: Vec::new(), keepalive: false }
    }
}

impl RunConfig {
    pub fn fast() -> Self {
        Self::default()
    }

    pub fn with_timeout(mut self, t: TimeValue) -> Self {
        self.timeout = Some(t);
        self
    }

    pub fn with_workers(mut self, n: usize) -> Self {
        self.workers = n.max(1);
        self
    }

    pub fn with_script(mut self, script: Vec<ScriptEntry>) -> Self {
        self.clock_script = script;
        self
    }

    pub fn digest(&self) -> String {
        config_digest(self.timeout, &clock_script::canonical(&self.clock_script))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("reaction {reaction} failed at {tag}: {message}")]
    Body { reaction: String, tag: Tag, message: String },
    #[error("no callback registered for extern `{0}`")]
    MissingCallback(String),
    #[error("message for {tag} on `{trigger}` arrived after {current} was processed")]
    LateMessage { trigger: String, tag: Tag, current: Tag },
    #[error("clock script: {0}")]
    Script(String),
    #[error(transparent)]
    Time(#[from] TimeError),
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("{0}")]
    Cycle(#[from] GraphError),
}

/// Immutable per-program data shared by every run.
#[derive(Debug)]
pub struct Plan {
    pub graph: Arc<InstanceGraph>,
    pub levels: Arc<LevelMap>,
    pub max_level: usize,
    /// Restricts execution to one federate's reactors.
    pub local: Option<usize>,
    pub hash: String,
    trigger_local: Vec<bool>,
    reaction_local: Vec<bool>,
}

impl Plan {
    pub fn new(ig: InstanceGraph) -> Result<Plan, PlanError> {
        let levels = assign_levels(&build_graph(&ig))?;
        let hash = ig.program_hash();
        Ok(Plan::build(Arc::new(ig), Arc::new(levels), None, hash))
    }

    /// The same program restricted to one federate.
    pub fn for_federate(&self, federate: usize) -> Plan {
        Plan::build(self.graph.clone(), self.levels.clone(), Some(federate), self.hash.clone())
    }

    fn build(graph: Arc<InstanceGraph>, levels: Arc<LevelMap>, local: Option<usize>, hash: String) -> Plan {
        let max_level = levels.iter().copied().max().unwrap_or(0);
        let trigger_local = (0..graph.triggers.len())
            .map(|t| local.is_none() || graph.triggers[t].reactor.is_none() || graph.federate_of_trigger(t) == local)
            .collect();
        let reaction_local =
            (0..graph.reactions.len()).map(|r| local.is_none() || graph.federate_of_reaction(r) == local).collect();
        Plan { graph, levels, max_level, local, hash, trigger_local, reaction_local }
    }

    pub fn is_local_trigger(&self, t: TriggerId) -> bool {
        self.trigger_local[t]
    }

    pub fn has_physical_actions(&self) -> bool {
        self.graph.triggers.iter().enumerate().any(|(t, tr)| {
            self.trigger_local[t] && matches!(tr.kind, TriggerKind::Action { origin: ActionOrigin::Physical, .. })
        })
    }

    pub fn header(&self, cfg: &RunConfig) -> Header {
        Header { program: self.hash.clone(), config: cfg.digest(), mode: cfg.mode.as_str().into() }
    }
}

/// A value leaving this federate over a delayed connection.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub connection: ConnectionId,
    pub tag: Tag,
    pub value: Value,
    /// Physical time at which the value was sent.
    pub sent: TimeValue,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InjectError {
    #[error("no physical action `{0}`")]
    UnknownAction(String),
    #[error("runtime is shutting down")]
    ShuttingDown,
}

#[derive(Debug, Default)]
struct SharedState {
    current: Option<Tag>,
    inbox: Vec<Event>,
    closed: bool,
    stop_requested: bool,
}

#[derive(Debug)]
struct Shared {
    state: Mutex<SharedState>,
    wake: Condvar,
    clock: PhysicalClock,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, SharedState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Thread-safe entry point for physical actions.
#[derive(Debug, Clone)]
pub struct InjectHandle {
    shared: Arc<Shared>,
    plan: Arc<Plan>,
}

impl InjectHandle {
    /// Tags an external event from the physical clock: `(clock, 0)` when the
    /// clock is ahead of the current tag, otherwise the next microstep.
    pub fn inject(&self, action: &str, value: Value) -> Result<Tag, InjectError> {
        let g = &self.plan.graph;
        let t = g
            .trigger_by_name(action)
            .filter(|&t| matches!(g.triggers[t].kind, TriggerKind::Action { origin: ActionOrigin::Physical, .. }))
            .filter(|&t| self.plan.is_local_trigger(t))
            .ok_or_else(|| InjectError::UnknownAction(action.to_string()))?;
        let TriggerKind::Action { min_delay, .. } = g.triggers[t].kind else { unreachable!() };
        let mut st = self.shared.lock();
        if st.closed {
            return Err(InjectError::ShuttingDown);
        }
        let at = self.shared.clock.read().checked_add(min_delay).unwrap_or(TimeValue::MAX);
        let tag = physical_tag(at, st.current).map_err(|_| InjectError::ShuttingDown)?;
        st.inbox.push(Event::new(tag, t, value));
        self.shared.wake.notify_all();
        Ok(tag)
    }

    /// Asks a kept-alive engine to stop at the next microstep.
    pub fn request_stop(&self) {
        self.shared.lock().stop_requested = true;
        self.shared.wake.notify_all();
    }

    pub fn physical_time(&self) -> TimeValue {
        self.shared.clock.read()
    }
}

fn physical_tag(at: TimeValue, current: Option<Tag>) -> Result<Tag, TimeError> {
    match current {
        Some(c) if at <= c.time => c.next_microstep(),
        _ => Ok(Tag::new(at, 0)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Executed(Tag),
    /// The next tag is beyond the limit.
    Blocked(Tag),
    /// Nothing left to do until something is delivered or injected.
    Idle,
    /// The stop tag was executed, including shutdown.
    Stopped(Tag),
}

#[derive(Debug)]
pub struct RunResult {
    pub trace: Trace,
    pub phys: Vec<PhysRecord>,
    pub error: Option<RunError>,
    pub final_tag: Option<Tag>,
}

struct Job {
    reaction: ReactionId,
    state: Vec<Value>,
    fault: Option<TimeValue>,
    sleep: Option<Duration>,
}

struct Outcome {
    reaction: ReactionId,
    state: Vec<Value>,
    kind: RecordKind,
    inputs: BTreeMap<String, Option<Value>>,
    writes: Vec<(TriggerId, Value)>,
    schedules: Vec<(TriggerId, TimeValue, Value)>,
    logs: Vec<String>,
    stop: bool,
    physical: TimeValue,
    fault: Option<TimeValue>,
    error: Option<String>,
}

pub struct Engine {
    plan: Arc<Plan>,
    callbacks: Arc<Callbacks>,
    cfg: RunConfig,
    shared: Arc<Shared>,
    queue: EventQueue,
    values: Vec<Option<Value>>,
    present: Vec<TriggerId>,
    states: Vec<Vec<Value>>,
    timer_count: Vec<u64>,
    queued: Vec<bool>,
    faults: Vec<Option<TimeValue>>,
    buckets: Vec<Vec<ReactionId>>,
    stop_tag: Option<Tag>,
    last: Option<Tag>,
    script: VecDeque<(ScriptEntry, Option<TriggerId>)>,
    records: Vec<TraceRecord>,
    phys: Vec<PhysRecord>,
    outbox: Vec<Outgoing>,
    pool: Option<rayon::ThreadPool>,
    jitter: Option<StdRng>,
    markers: bool,
    started: bool,
    stopped: bool,
}

impl Engine {
    pub fn new(plan: Arc<Plan>, callbacks: Arc<Callbacks>, cfg: RunConfig) -> Result<Engine, RunError> {
        let clock = match cfg.mode {
            Mode::Fast => PhysicalClock::virtual_at(TimeValue::ZERO),
            Mode::Realtime => PhysicalClock::monotonic(),
        };
        Engine::with_clock(plan, callbacks, cfg, clock)
    }

    pub fn with_clock(
        plan: Arc<Plan>,
        callbacks: Arc<Callbacks>,
        cfg: RunConfig,
        clock: PhysicalClock,
    ) -> Result<Engine, RunError> {
        let g = plan.graph.clone();
        for r in g.reactions.iter().enumerate().filter(|(id, _)| plan.reaction_local[*id]).map(|(_, r)| r) {
            let handlers = r.deadline.iter().map(|(_, b)| b).chain(r.stp.iter().map(|(_, b)| b));
            for body in std::iter::once(&r.body).chain(handlers) {
                if let Body::Extern(name) = body {
                    if callbacks.get(name).is_none() {
                        return Err(RunError::MissingCallback(name.clone()));
                    }
                }
            }
        }
        let mut script = VecDeque::new();
        for e in &cfg.clock_script {
            let target = match &e.kind {
                EntryKind::Stall(_) => None,
                EntryKind::Inject { action, .. } => {
                    let t = g
                        .trigger_by_name(action)
                        .filter(|&t| matches!(g.triggers[t].kind, TriggerKind::Action { origin: ActionOrigin::Physical, .. }))
                        .ok_or_else(|| RunError::Script(format!("no physical action `{action}`")))?;
                    if !plan.is_local_trigger(t) {
                        continue;
                    }
                    Some(t)
                }
            };
            script.push_back((e.clone(), target));
        }
        let pool = (cfg.workers > 1)
            .then(|| rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().ok())
            .flatten();
        let jitter = cfg.jitter_seed.map(StdRng::seed_from_u64);
        let markers = plan.local.is_none();
        Ok(Engine {
            callbacks,
            shared: Arc::new(Shared { state: Mutex::new(SharedState::default()), wake: Condvar::new(), clock }),
            queue: EventQueue::new(),
            values: vec![None; g.triggers.len()],
            present: Vec::new(),
            states: g.reactors.iter().map(|r| r.state.iter().map(|(_, v)| v.clone()).collect()).collect(),
            timer_count: vec![0; g.triggers.len()],
            queued: vec![false; g.reactions.len()],
            faults: vec![None; g.reactions.len()],
            buckets: vec![Vec::new(); plan.max_level + 1],
            stop_tag: None,
            last: None,
            script,
            records: Vec::new(),
            phys: Vec::new(),
            outbox: Vec::new(),
            pool,
            jitter,
            markers,
            started: false,
            stopped: false,
            plan,
            cfg,
        })
    }

    pub fn handle(&self) -> InjectHandle {
        InjectHandle { shared: self.shared.clone(), plan: self.plan.clone() }
    }

    pub fn plan(&self) -> &Arc<Plan> {
        &self.plan
    }

    pub fn physical_time(&self) -> TimeValue {
        self.shared.clock.read()
    }

    /// Moves a virtual physical clock forward; used by simulated networks.
    pub fn advance_clock(&self, t: TimeValue) {
        self.shared.clock.advance_to(t);
    }

    pub fn current_tag(&self) -> Option<Tag> {
        self.last
    }

    /// Runs the whole program: startup, every tag, then shutdown.
    pub fn run(mut self) -> RunResult {
        let status = self.run_inner();
        self.into_result(status.err())
    }

    fn run_inner(&mut self) -> Result<(), RunError> {
        self.start()?;
        loop {
            match self.step(None)? {
                Step::Executed(_) => {}
                Step::Stopped(_) => return Ok(()),
                Step::Blocked(_) => unreachable!("no limit"),
                Step::Idle => {
                    if self.cfg.keepalive && self.wait_for_input() {
                        continue;
                    }
                    break;
                }
            }
        }
        let stop = self.drain_stop_tag()?;
        self.finish(stop)
    }

    /// Shutdown tag once the queue has drained: one microstep after the last
    /// processed tag, or `(0, 0)` when nothing ran.
    pub fn drain_stop_tag(&self) -> Result<Tag, RunError> {
        Ok(match self.last {
            Some(t) => t.next_microstep()?,
            None => Tag::ZERO,
        })
    }

    /// Schedules startup and the first occurrence of every timer.
    pub fn start(&mut self) -> Result<(), RunError> {
        if self.started {
            return Ok(());
        }
        self.started = true;
        if let Some(t) = self.cfg.timeout {
            self.stop_tag = Some(Tag::new(t, 0));
        }
        self.push(Event::new(Tag::ZERO, STARTUP, Value::Unit));
        let g = self.plan.graph.clone();
        for (id, t) in g.triggers.iter().enumerate() {
            if let TriggerKind::Timer { offset, .. } = t.kind {
                if self.plan.is_local_trigger(id) {
                    self.push(Event::new(Tag::new(offset, 0), id, Value::Unit));
                }
            }
        }
        Ok(())
    }

    fn push(&mut self, e: Event) {
        // Only called with tags after the current one.
        self.queue.schedule(e).expect("event scheduled in the past");
    }

    /// Sets the tag at which shutdown runs; later events are discarded. A
    /// tag that has already passed moves to the next microstep.
    pub fn set_stop(&mut self, tag: Tag) {
        let tag = match self.last {
            Some(l) if tag <= l => l.next_microstep().unwrap_or(Tag::FOREVER),
            _ => tag,
        };
        self.stop_tag = Some(self.stop_tag.map_or(tag, |s| s.min(tag)));
    }

    pub fn stop_tag(&self) -> Option<Tag> {
        self.stop_tag
    }

    /// Earliest tag this engine could execute next, counting pending script
    /// injections and the stop tag.
    pub fn next_tag(&mut self) -> Option<Tag> {
        self.drain_inbox();
        let mut next = self.queue.peek_tag();
        if let Some(s) = self.stop_tag {
            next = Some(next.map_or(s, |n| n.min(s)));
        }
        if let Some((entry, _)) = self.script.iter().find(|(_, t)| t.is_some()) {
            let tag = physical_tag(entry.at, self.last).unwrap_or(Tag::FOREVER);
            next = Some(next.map_or(tag, |n| n.min(tag)));
        }
        next
    }

    /// Delivers an event from another federate.
    pub fn deliver(&mut self, event: Event) -> Result<(), RunError> {
        if let Some(current) = self.last {
            if event.tag <= current {
                let trigger = self.plan.graph.triggers[event.trigger].name.clone();
                return Err(RunError::LateMessage { trigger, tag: event.tag, current });
            }
        }
        self.push(event);
        Ok(())
    }

    /// Delivers a message that missed its safe-to-process bound. It is
    /// handled at the next free tag by the receiving reactions' stp handlers.
    pub fn deliver_fault(&mut self, trigger: TriggerId, intended: Tag, value: Value, lateness: TimeValue) -> Result<Tag, RunError> {
        let tag = match self.last {
            Some(cur) if intended <= cur => cur.next_microstep()?,
            _ => intended,
        };
        self.push(Event { tag, trigger, value, kind: EventKind::StpFault { lateness } });
        Ok(tag)
    }

    pub fn take_outbox(&mut self) -> Vec<Outgoing> {
        std::mem::take(&mut self.outbox)
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// Processes at most one tag (or one script entry followed by its tag),
    /// never going beyond `limit`.
    pub fn step(&mut self, limit: Option<Tag>) -> Result<Step, RunError> {
        if self.stopped {
            return Ok(Step::Stopped(self.last.unwrap_or(Tag::ZERO)));
        }
        loop {
            self.drain_inbox();
            if std::mem::take(&mut self.shared.lock().stop_requested) {
                let s = self.last.map_or(Ok(Tag::ZERO), |t| t.next_microstep())?;
                self.set_stop(s);
            }
            let mut next = self.queue.peek_tag();
            if let Some(s) = self.stop_tag {
                next = Some(next.map_or(s, |n| n.min(s)));
            }
            if let Some((entry, _)) = self.script.front() {
                let due = next.is_none_or(|n| entry.at <= n.time);
                let allowed = limit.is_none_or(|l| entry.at <= l.time);
                if due && allowed {
                    if !self.wait_physical(entry.at) {
                        continue;
                    }
                    self.run_script_entry()?;
                    continue;
                }
            }
            let Some(t) = next else { return Ok(Step::Idle) };
            if limit.is_some_and(|l| t > l) {
                return Ok(Step::Blocked(t));
            }
            if !self.wait_physical(t.time) {
                continue;
            }
            if !self.commit(t) {
                continue;
            }
            let stopping = self.stop_tag == Some(t);
            self.execute_tag(t, stopping)?;
            return Ok(if stopping { Step::Stopped(t) } else { Step::Executed(t) });
        }
    }

    /// Executes shutdown at `stop` after everything before it. A stop tag
    /// that has already passed moves to the next microstep.
    pub fn finish(&mut self, stop: Tag) -> Result<(), RunError> {
        self.set_stop(stop);
        loop {
            match self.step(None)? {
                Step::Stopped(_) => return Ok(()),
                Step::Idle | Step::Blocked(_) => unreachable!("stop tag is always pending"),
                Step::Executed(_) => {}
            }
        }
    }

    pub fn into_result(mut self, error: Option<RunError>) -> RunResult {
        self.shared.lock().closed = true;
        let header = self.plan.header(&self.cfg);
        let mut phys = std::mem::take(&mut self.phys);
        phys.sort_by(|a, b| (a.tag, &a.subject).cmp(&(b.tag, &b.subject)));
        RunResult { trace: canonicalize(header, std::mem::take(&mut self.records)), phys, error, final_tag: self.last }
    }

    /// Raw records so far, in execution order.
    pub fn take_records(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.records)
    }

    pub fn take_phys(&mut self) -> Vec<PhysRecord> {
        std::mem::take(&mut self.phys)
    }

    fn drain_inbox(&mut self) {
        let events = std::mem::take(&mut self.shared.lock().inbox);
        for e in events {
            self.push(e);
        }
    }

    /// Makes `t` current unless an injection slipped in ahead of it.
    fn commit(&mut self, t: Tag) -> bool {
        let mut st = self.shared.lock();
        if st.inbox.iter().any(|e| e.tag <= t) {
            return false;
        }
        st.current = Some(t);
        if self.stop_tag == Some(t) {
            st.closed = true;
        }
        true
    }

    /// Waits until the physical clock reaches `at`. Returns false if an
    /// injection arrived first, so the caller re-plans.
    fn wait_physical(&mut self, at: TimeValue) -> bool {
        if self.cfg.mode == Mode::Fast {
            return true;
        }
        let mut st = self.shared.lock();
        loop {
            if !st.inbox.is_empty() || st.stop_requested {
                return false;
            }
            let left = self.shared.clock.until(at);
            if left.is_zero() {
                return true;
            }
            st = self.shared.wake.wait_timeout(st, left).unwrap_or_else(|e| e.into_inner()).0;
        }
    }

    /// Blocks until something is injected or a stop is requested.
    fn wait_for_input(&mut self) -> bool {
        let mut st = self.shared.lock();
        while st.inbox.is_empty() && !st.stop_requested {
            st = self.shared.wake.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        true
    }

    fn run_script_entry(&mut self) -> Result<(), RunError> {
        let (entry, target) = self.script.pop_front().expect("entry present");
        self.shared.clock.advance_to(entry.at);
        match entry.kind {
            EntryKind::Stall(d) => match self.cfg.mode {
                Mode::Fast => self.shared.clock.advance_to(entry.at.checked_add(d)?),
                Mode::Realtime => std::thread::sleep(Duration::from_nanos(d.as_nanos().max(0) as u64)),
            },
            EntryKind::Inject { value, .. } => {
                let t = target.expect("inject entries carry a trigger");
                let TriggerKind::Action { min_delay, .. } = self.plan.graph.triggers[t].kind else { unreachable!() };
                let at = entry.at.checked_add(min_delay)?;
                let tag = physical_tag(at, self.last)?;
                if self.stop_tag.is_none_or(|s| tag <= s) {
                    self.push(Event::new(tag, t, value));
                }
            }
        }
        Ok(())
    }

    fn mark_present(&mut self, t: TriggerId, v: Value) {
        if self.values[t].is_none() {
            self.present.push(t);
        }
        self.values[t] = Some(v);
    }

    fn enqueue_triggered(&mut self, t: TriggerId) {
        let g = self.plan.graph.clone();
        for &r in &g.triggered[t] {
            if self.plan.reaction_local[r] && !self.queued[r] {
                self.queued[r] = true;
                self.buckets[self.plan.levels[r]].push(r);
            }
        }
    }

    fn execute_tag(&mut self, t: Tag, shutdown: bool) -> Result<(), RunError> {
        let batch = match self.queue.peek_tag() {
            Some(q) if q == t => self.queue.pop_batch().map(|(_, b)| b).unwrap_or_default(),
            _ => self.queue.advance(t),
        };
        self.last = Some(t);
        if self.cfg.mode == Mode::Fast {
            self.shared.clock.advance_to(t.time);
        }
        let g = self.plan.graph.clone();
        for e in batch {
            if !self.plan.is_local_trigger(e.trigger) {
                continue;
            }
            if e.trigger == STARTUP && self.markers {
                self.records.push(TraceRecord::marker(RecordKind::Startup, t));
            }
            if let TriggerKind::Timer { offset, period } = g.triggers[e.trigger].kind {
                if period.is_positive() {
                    self.timer_count[e.trigger] += 1;
                    let next = timer_next(offset, period, self.timer_count[e.trigger])?;
                    self.push(Event::new(next, e.trigger, Value::Unit));
                }
            }
            if let EventKind::StpFault { lateness } = e.kind {
                for &r in &g.triggered[e.trigger] {
                    self.faults[r] = Some(lateness);
                }
            }
            self.mark_present(e.trigger, e.value);
            self.enqueue_triggered(e.trigger);
        }
        if shutdown {
            self.stopped = true;
            self.shared.lock().closed = true;
            self.mark_present(SHUTDOWN, Value::Unit);
            self.enqueue_triggered(SHUTDOWN);
        }
        let result = self.run_levels(t);
        for p in std::mem::take(&mut self.present) {
            self.values[p] = None;
        }
        result?;
        if shutdown && self.markers {
            self.records.push(TraceRecord::marker(RecordKind::Shutdown, t));
        }
        Ok(())
    }

    fn run_levels(&mut self, t: Tag) -> Result<(), RunError> {
        let g = self.plan.graph.clone();
        for level in 0..self.buckets.len() {
            if self.buckets[level].is_empty() {
                continue;
            }
            let mut ready = std::mem::take(&mut self.buckets[level]);
            // Nearest deadline first, then name.
            ready.sort_by(|&a, &b| {
                let d = |r: ReactionId| g.reactions[r].deadline.as_ref().map_or(TimeValue::MAX, |(d, _)| *d);
                (d(a), &g.reactions[a].name).cmp(&(d(b), &g.reactions[b].name))
            });
            let jobs: Vec<Job> = ready
                .iter()
                .map(|&r| {
                    self.queued[r] = false;
                    let sleep = self.jitter.as_mut().map(|rng| Duration::from_micros(rng.gen_range(0..200)));
                    Job {
                        reaction: r,
                        state: std::mem::take(&mut self.states[g.reactions[r].reactor]),
                        fault: self.faults[r].take(),
                        sleep,
                    }
                })
                .collect();
            let env = JobEnv { graph: &g, callbacks: &self.callbacks, clock: &self.shared.clock, values: &self.values, tag: t };
            let mut outcomes: Vec<Outcome> = match &self.pool {
                Some(pool) if jobs.len() > 1 => pool.install(|| jobs.into_par_iter().map(|j| env.run(j)).collect()),
                _ => jobs.into_iter().map(|j| env.run(j)).collect(),
            };
            outcomes.sort_by(|a, b| g.reactions[a.reaction].name.cmp(&g.reactions[b.reaction].name));
            let mut failure = None;
            for o in outcomes {
                if let Err(e) = self.apply(t, level, o) {
                    failure.get_or_insert(e);
                }
            }
            if let Some(e) = failure {
                for b in &mut self.buckets {
                    for r in b.drain(..) {
                        self.queued[r] = false;
                    }
                }
                return Err(e);
            }
        }
        Ok(())
    }

    fn apply(&mut self, t: Tag, level: usize, o: Outcome) -> Result<(), RunError> {
        let g = self.plan.graph.clone();
        let reaction = &g.reactions[o.reaction];
        self.states[reaction.reactor] = o.state;
        let mut outputs = BTreeMap::new();
        for (p, v) in &o.writes {
            outputs.insert(g.triggers[*p].name.clone(), v.clone());
        }
        for (a, _, v) in &o.schedules {
            outputs.insert(g.triggers[*a].name.clone(), v.clone());
        }
        let mut notes: Vec<String> = Vec::new();
        if let Some(l) = o.fault {
            notes.push(format!("lateness {l}"));
        }
        notes.extend(o.logs);
        if let Some(e) = &o.error {
            notes.push(format!("error: {e}"));
        }
        self.records.push(TraceRecord {
            tag: t,
            level,
            kind: o.kind,
            subject: reaction.name.clone(),
            inputs: o.inputs,
            outputs,
            note: (!notes.is_empty()).then(|| notes.join("\n")),
        });
        self.phys.push(PhysRecord { tag: t, subject: reaction.name.clone(), physical: o.physical });
        if let Some(message) = o.error {
            return Err(RunError::Body { reaction: reaction.name.clone(), tag: t, message });
        }
        for (p, v) in o.writes {
            self.write_port(t, p, v)?;
        }
        for (a, delay, v) in o.schedules {
            self.schedule_action(t, a, delay, v)?;
        }
        if o.stop {
            self.set_stop(t.next_microstep()?);
        }
        Ok(())
    }

    fn write_port(&mut self, t: Tag, p: TriggerId, v: Value) -> Result<(), RunError> {
        let g = self.plan.graph.clone();
        self.mark_present(p, v.clone());
        self.enqueue_triggered(p);
        for &c in &g.outgoing[p] {
            let conn = &g.connections[c];
            match conn.delay {
                None => {
                    self.mark_present(conn.to, v.clone());
                    self.enqueue_triggered(conn.to);
                }
                Some(d) => {
                    let tag = t.delay(d)?;
                    if self.plan.is_local_trigger(conn.to) {
                        self.push(Event::new(tag, conn.to, v.clone()));
                    } else {
                        let sent = self.shared.clock.read();
                        self.outbox.push(Outgoing { connection: c, tag, value: v.clone(), sent });
                    }
                }
            }
        }
        Ok(())
    }

    fn schedule_action(&mut self, t: Tag, a: TriggerId, delay: TimeValue, v: Value) -> Result<(), RunError> {
        let TriggerKind::Action { origin, min_delay, .. } = self.plan.graph.triggers[a].kind else {
            unreachable!("schedule targets an action")
        };
        let total = min_delay.checked_add(delay)?;
        let tag = match origin {
            ActionOrigin::Logical => t.delay(total)?,
            ActionOrigin::Physical => physical_tag(self.shared.clock.read().checked_add(total)?, Some(t))?,
        };
        self.push(Event::new(tag, a, v));
        Ok(())
    }
}

struct JobEnv<'a> {
    graph: &'a InstanceGraph,
    callbacks: &'a Callbacks,
    clock: &'a PhysicalClock,
    values: &'a [Option<Value>],
    tag: Tag,
}

impl JobEnv<'_> {
    fn run(&self, mut job: Job) -> Outcome {
        let reaction = &self.graph.reactions[job.reaction];
        let inputs = reaction
            .reads
            .iter()
            .map(|b| (self.graph.triggers[b.trigger].name.clone(), self.values[b.trigger].clone()))
            .collect();
        if let Some(d) = job.sleep {
            std::thread::sleep(d);
        }
        let physical = self.clock.read();
        let lag = physical.saturating_sub(self.tag.time);
        let (kind, body) = match (job.fault, &reaction.stp, &reaction.deadline) {
            (Some(_), Some((_, handler)), _) => (RecordKind::StpFault, Some(handler)),
            (Some(_), None, _) => (RecordKind::StpFault, None),
            (None, _, Some((bound, handler))) if Deadline::new(*bound).is_some_and(|d| d.is_violated(lag)) => {
                (RecordKind::DeadlineHandler, Some(handler))
            }
            _ => (RecordKind::Reaction, Some(&reaction.body)),
        };
        let reactor = &self.graph.reactors[reaction.reactor];
        let mut ctx = ReactionCtx {
            reaction,
            reactor,
            triggers: &self.graph.triggers,
            values: self.values,
            state: &mut job.state,
            tag: self.tag,
            physical,
            writes: Vec::new(),
            schedules: Vec::new(),
            logs: Vec::new(),
            stop: false,
        };
        let result = match body {
            None => Ok(()),
            Some(Body::Script(block)) => interp::exec(block, &mut ctx),
            Some(Body::Extern(name)) => match self.callbacks.get(name) {
                Some(cb) => cb(&mut ctx),
                None => Err(format!("no callback registered for extern `{name}`")),
            },
        };
        let ReactionCtx { writes, schedules, logs, stop, .. } = ctx;
        Outcome {
            reaction: job.reaction,
            state: job.state,
            kind,
            inputs,
            writes,
            schedules,
            logs,
            stop,
            physical,
            fault: job.fault,
            error: result.err(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::compile;
    use crate::runtime::clock_script;

    fn ms(v: i64) -> TimeValue {
        TimeValue::from_millis(v)
    }

    fn run_src(src: &str, cfg: RunConfig) -> RunResult {
        crate::runtime::run(compile(src).unwrap(), cfg, Callbacks::new()).unwrap()
    }

    fn tags_of<'a>(r: &'a RunResult, subject: &'a str) -> impl Iterator<Item = Tag> + 'a {
        r.trace.records.iter().filter(move |x| x.subject == subject).map(|x| x.tag)
    }

    #[test]
    fn timer_fires_at_offset_plus_k_periods() {
        let r = run_src(
            "main reactor { timer t(0, 30 ms); state n: int = 0; reaction(t) {= n = n + 1; =} }",
            RunConfig::fast().with_timeout(ms(100)),
        );
        assert_eq!(r.error, None);
        let got: Vec<i64> = tags_of(&r, "main.reaction1").map(|t| t.time.as_nanos()).collect();
        let expected: Vec<i64> = (0..).map(|k| k * 30_000_000).take_while(|&t| t <= 100_000_000).collect();
        assert_eq!(got, expected);
        let last = r.trace.records.last().unwrap();
        assert_eq!((last.kind, last.tag), (RecordKind::Shutdown, Tag::new(ms(100), 0)));
    }

    #[test]
    fn empty_program_starts_and_stops() {
        let r = run_src("main reactor {}", RunConfig::fast());
        let kinds: Vec<_> = r.trace.records.iter().map(|x| (x.kind, x.tag)).collect();
        assert_eq!(kinds, vec![(RecordKind::Startup, Tag::ZERO), (RecordKind::Shutdown, Tag::new(TimeValue::ZERO, 1))]);
        assert_eq!(r.error, None);
    }

    #[test]
    fn delayed_and_zero_delay_propagation() {
        let r = run_src(
            "reactor S { timer t(0, 30 ms); output y: int; reaction(t) -> y {= set(y, microstep() + 7); =} }
             reactor D { input x: int; logical action a: int; reaction(x) -> a {= schedule(a, 0, x); =}
                         reaction(a) {= log(a); =} }
             main reactor { s = new S(); d = new D(); s.y -> d.x after 10 ms }",
            RunConfig::fast().with_timeout(ms(70)),
        );
        let sent: Vec<Tag> = tags_of(&r, "s.reaction1").collect();
        let got: Vec<Tag> = tags_of(&r, "d.reaction1").collect();
        assert_eq!(got.len(), 3);
        for (s, g) in sent.iter().zip(&got) {
            assert_eq!(*g, Tag::new(s.time.checked_add(ms(10)).unwrap(), 0));
        }
        // the last one would land after the stop tag
        let bumped: Vec<Tag> = tags_of(&r, "d.reaction2").collect();
        assert_eq!(bumped, got[..2].iter().map(|t| Tag::new(t.time, t.microstep + 1)).collect::<Vec<_>>());
        let rec = r.trace.records.iter().find(|x| x.subject == "d.reaction2").unwrap();
        assert_eq!(rec.note.as_deref(), Some("7"));
    }

    fn deadline_run(stall_ms: i64) -> RecordKind {
        let script = clock_script::parse(&format!("{{\"at_physical\": \"0 ms\", \"stall\": \"{stall_ms} ms\"}}")).unwrap();
        let r = run_src(
            "main reactor { timer t; reaction(t) {= log(\"body\"); =} deadline(3 ms) {= log(\"late\"); =} }",
            RunConfig::fast().with_script(script),
        );
        r.trace.records.iter().find(|x| x.subject == "main.reaction1").unwrap().kind
    }

    #[test]
    fn deadline_bound_is_strict() {
        assert_eq!(deadline_run(5), RecordKind::DeadlineHandler);
        assert_eq!(deadline_run(1), RecordKind::Reaction);
        assert_eq!(deadline_run(3), RecordKind::Reaction);
    }

    #[test]
    fn physical_tag_rule() {
        assert_eq!(physical_tag(ms(42), Some(Tag::new(ms(30), 0))), Ok(Tag::new(ms(42), 0)));
        assert_eq!(physical_tag(ms(10), Some(Tag::new(ms(10), 3))), Ok(Tag::new(ms(10), 4)));
        assert_eq!(physical_tag(ms(7), None), Ok(Tag::new(ms(7), 0)));
    }

    #[test]
    fn scripted_injection_preempts_later_timer() {
        let script = clock_script::parse("{\"at_physical\": \"20 ms\", \"action\": \"main.b\", \"value\": 1}").unwrap();
        let r = run_src(
            "main reactor { timer t(30 ms); physical action b: int;
               reaction(b) {= log(\"button\"); =} reaction(t) {= log(\"timer\"); =} }",
            RunConfig::fast().with_script(script),
        );
        let order: Vec<_> = r.trace.reaction_records().map(|x| (x.tag.time, x.note.clone().unwrap())).collect();
        assert_eq!(order, vec![(ms(20), "button".into()), (ms(30), "timer".into())]);
    }

    #[test]
    fn body_error_halts_run() {
        let r = run_src(
            "main reactor { timer t(0, 10 ms); state n: int = 3;
               reaction(t) {= n = n - 1; let q = 6 / n; log(q); =} }",
            RunConfig::fast().with_timeout(ms(100)),
        );
        let Some(RunError::Body { tag, message, .. }) = &r.error else { panic!("{:?}", r.error) };
        assert_eq!((*tag, message.as_str()), (Tag::new(ms(20), 0), "division by zero"));
        assert!(r.trace.records.iter().all(|x| x.kind != RecordKind::Shutdown));
    }

    #[test]
    fn request_stop_ends_at_next_microstep() {
        let r = run_src(
            "main reactor { timer t(0, 10 ms); state n: int = 0;
               reaction(t) {= n = n + 1; if n == 3 { request_stop(); } =}
               reaction(shutdown) {= log(n); =} }",
            RunConfig::fast(),
        );
        let last = r.trace.reaction_records().last().unwrap();
        assert_eq!((last.subject.as_str(), last.tag), ("main.reaction2", Tag::new(ms(20), 1)));
        assert_eq!(last.note.as_deref(), Some("3"));
    }

    #[test]
    fn same_level_writes_visible_only_above() {
        let src = "reactor P { input i: int; output o: int; reaction(i) -> o {= set(o, i + 1); =} }
             reactor Src { timer t; output o: int; reaction(t) -> o {= set(o, 1); =} }
             main reactor { s = new Src(); a = new P(); b = new P(); c = new P();
               s.o -> a.i; a.o -> b.i; b.o -> c.i; }";
        let ig = compile(src).unwrap();
        let plan = Plan::new(ig).unwrap();
        let level = |n: &str| plan.levels[plan.graph.reaction_by_name(n).unwrap()];
        assert!(level("s.reaction1") < level("a.reaction1"));
        assert!(level("a.reaction1") < level("b.reaction1") && level("b.reaction1") < level("c.reaction1"));
        let r = run_src(src, RunConfig::fast());
        let c = r.trace.records.iter().find(|x| x.subject == "c.reaction1").unwrap();
        assert_eq!(c.tag, Tag::ZERO);
        assert_eq!(c.outputs.get("c.o"), Some(&Value::Int(4)));
    }

    #[test]
    fn workers_and_jitter_do_not_change_trace() {
        let src = "reactor W { timer t(0, 5 ms); output o: int; state n: int = 0;
                     reaction(t) -> o {= n = n + 1; set(o, n); =} }
                   reactor Sum { input a: int; input b: int; input c: int; state s: int = 0;
                     reaction(a, b, c) {=
                       if present(a) { s = s + a; } if present(b) { s = s + b; } if present(c) { s = s + c; }
                       log(s);
                     =} }
                   main reactor { x = new W(); y = new W(); z = new W(); s = new Sum();
                     x.o -> s.a; y.o -> s.b; z.o -> s.c after 5 ms; }";
        let base = run_src(src, RunConfig::fast().with_timeout(ms(40)));
        assert_eq!(base.error, None);
        for workers in [2, 4] {
            let mut cfg = RunConfig::fast().with_timeout(ms(40)).with_workers(workers);
            cfg.jitter_seed = Some(workers as u64);
            assert_eq!(run_src(src, cfg).trace.to_text(), base.trace.to_text());
        }
    }

    #[test]
    fn injection_from_another_thread() {
        let ig = compile("main reactor { physical action b: int; reaction(b) {= log(b); =} }").unwrap();
        let plan = Arc::new(Plan::new(ig).unwrap());
        let cfg = RunConfig { mode: Mode::Realtime, keepalive: true, ..RunConfig::default() };
        let engine = Engine::new(plan, Arc::new(Callbacks::new()), cfg).unwrap();
        let h = engine.handle();
        assert_eq!(h.inject("nope", Value::Int(1)), Err(InjectError::UnknownAction("nope".into())));
        let runner = std::thread::spawn(move || engine.run());
        std::thread::sleep(Duration::from_millis(5));
        let t1 = h.inject("main.b", Value::Int(1)).unwrap();
        std::thread::sleep(Duration::from_millis(5));
        let t2 = h.inject("main.b", Value::Int(2)).unwrap();
        assert!(t2 > t1);
        std::thread::sleep(Duration::from_millis(5));
        h.request_stop();
        let r = runner.join().unwrap();
        let notes: Vec<_> = r.trace.reaction_records().map(|x| x.note.clone().unwrap()).collect();
        assert_eq!(notes, vec!["1", "2"]);
        assert_eq!(h.inject("main.b", Value::Int(3)), Err(InjectError::ShuttingDown));
    }
}
