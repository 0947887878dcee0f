//! In-process federation over a simulated network.
//!
//! Everything runs on one thread against a virtual timeline, so a run is a
//! pure function of the program, the run configuration and the latency
//! script. Channels are FIFO: a packet never overtakes an earlier one on the
//! same link, whatever latencies the script assigns.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::latency::LatencyScript;
use super::rti::Rti;
use super::wire::WireMessage;
use super::{partition, FederationError, Partition};
use crate::instance::TriggerId;
use crate::runtime::{Callbacks, Engine, Event, Plan, RunConfig, RunError, Step};
use crate::time::{Tag, TimeValue};
use crate::trace::{canonicalize, PhysRecord, RecordKind, Trace, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordination {
    Centralized,
    Decentralized,
}

impl std::str::FromStr for Coordination {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "centralized" => Ok(Coordination::Centralized),
            "decentralized" => Ok(Coordination::Decentralized),
            other => Err(format!("unknown coordination `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Delivery {
    OnTime,
    Fault { lateness: TimeValue },
    /// The receiver had already shut down.
    Dropped,
}

/// One message on a cross-federate connection and what became of it.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageLog {
    pub connection: String,
    pub tag: Tag,
    pub sent: TimeValue,
    pub arrival: TimeValue,
    pub delivery: Delivery,
}

#[derive(Debug)]
pub struct FederationRun {
    /// Records of all federates merged into one canonical trace.
    pub trace: Trace,
    pub phys: Vec<PhysRecord>,
    pub messages: Vec<MessageLog>,
    /// Grants sent to each federate, in order (centralized only).
    pub grants: Vec<Vec<Tag>>,
    pub stop: Option<Tag>,
    pub error: Option<FederationError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Endpoint {
    Rti,
    Fed(usize),
}

#[derive(Debug)]
struct Packet {
    from: Endpoint,
    to: Endpoint,
    msg: WireMessage,
    sent: TimeValue,
}

#[derive(Default)]
struct Network {
    queue: BTreeMap<(TimeValue, u64), Packet>,
    seq: u64,
    last: HashMap<(Endpoint, Endpoint), TimeValue>,
}

impl Network {
    fn send(&mut self, from: Endpoint, to: Endpoint, msg: WireMessage, sent: TimeValue, latency: TimeValue) {
        let earliest = sent.checked_add(latency).unwrap_or(TimeValue::MAX);
        let at = self.last.get(&(from, to)).map_or(earliest, |&l| l.max(earliest));
        self.last.insert((from, to), at);
        self.seq += 1;
        self.queue.insert((at, self.seq), Packet { from, to, msg, sent });
    }

    fn peek_time(&self) -> Option<TimeValue> {
        self.queue.keys().next().map(|k| k.0)
    }

    fn pop(&mut self) -> Option<(TimeValue, Packet)> {
        self.queue.pop_first().map(|((at, _), p)| (at, p))
    }
}

struct Fed {
    name: String,
    engine: Engine,
    grant: Option<Tag>,
    done: bool,
}

struct Sim<'a> {
    plan: &'a Plan,
    part: Partition,
    feds: Vec<Fed>,
    net: Network,
    latency: LatencyScript,
    now: TimeValue,
    messages: Vec<MessageLog>,
    grants: Vec<Vec<Tag>>,
    timeout: Option<TimeValue>,
}

/// Runs a federated program with every federate in this process.
pub fn simulate(
    plan: &Arc<Plan>,
    callbacks: Arc<Callbacks>,
    cfg: &RunConfig,
    latency: LatencyScript,
    mode: Coordination,
) -> Result<FederationRun, FederationError> {
    let part = partition(&plan.graph)?;
    if let Some(c) = latency.connections().find(|c| part.cross_by_id(c).is_none()) {
        let known: Vec<&str> = part.cross.iter().map(|x| x.id.as_str()).collect();
        return Err(FederationError::UnknownConnection(c.to_string(), known.join(", ")));
    }
    let waits = match mode {
        Coordination::Centralized => vec![TimeValue::ZERO; part.len()],
        Coordination::Decentralized => (0..part.len()).map(|f| part.input_stp(f)).collect::<Result<_, _>>()?,
    };
    let mut feds = Vec::new();
    for f in &part.federates {
        let fplan = Arc::new(plan.for_federate(f.index));
        let mut engine = Engine::new(fplan, callbacks.clone(), cfg.clone())
            .map_err(|error| FederationError::Federate { federate: f.name.clone(), error })?;
        engine.start().map_err(|error| FederationError::Federate { federate: f.name.clone(), error })?;
        feds.push(Fed { name: f.name.clone(), engine, grant: None, done: false });
    }
    let n = part.len();
    let mut sim = Sim {
        plan,
        part,
        feds,
        net: Network::default(),
        latency,
        now: TimeValue::ZERO,
        messages: Vec::new(),
        grants: vec![Vec::new(); n],
        timeout: cfg.timeout,
    };
    let outcome = match mode {
        Coordination::Centralized => sim.centralized(),
        Coordination::Decentralized => sim.decentralized(&waits),
    };
    Ok(sim.finish(cfg, outcome))
}

impl Sim<'_> {
    fn fed_error(&self, f: usize, error: RunError) -> FederationError {
        match error {
            RunError::LateMessage { tag, current, .. } => {
                FederationError::Safety { federate: self.feds[f].name.clone(), tag, current }
            }
            error => FederationError::Federate { federate: self.feds[f].name.clone(), error },
        }
    }

    fn trigger_of(&self, connection: &str) -> (usize, TriggerId, Option<TimeValue>) {
        let c = self.part.cross_by_id(connection).expect("messages name known connections");
        (c.to, self.plan.graph.connections[c.connection].to, c.stp)
    }

    fn next_net(&mut self, f: usize) -> Tag {
        if self.feds[f].done {
            return Tag::FOREVER;
        }
        self.feds[f].engine.next_tag().unwrap_or(Tag::FOREVER)
    }

    /// Sends the outputs of a completed tag. In centralized mode they go to
    /// the RTI followed by LTC and NET; otherwise straight to the receiver.
    fn flush(&mut self, f: usize, t: Tag, centralized: bool) {
        for out in self.feds[f].engine.take_outbox() {
            let cross = self.part.cross_by_connection(out.connection).expect("outbox holds cross connections").clone();
            let lat = self.latency.next(&cross.id);
            let sent = self.now.max(out.sent);
            let to = if centralized { Endpoint::Rti } else { Endpoint::Fed(cross.to) };
            let msg = WireMessage::Msg { connection: cross.id, tag: out.tag, value: out.value };
            self.net.send(Endpoint::Fed(f), to, msg, sent, lat);
        }
        if centralized {
            let net = self.next_net(f);
            self.net.send(Endpoint::Fed(f), Endpoint::Rti, WireMessage::Ltc { tag: t }, self.now, TimeValue::ZERO);
            self.net.send(Endpoint::Fed(f), Endpoint::Rti, WireMessage::Net { tag: net }, self.now, TimeValue::ZERO);
        }
    }

    /// A stop requested inside one federate stops all of them; each one
    /// shuts down at that tag or, if already past it, right after its
    /// current tag. Timeout stops need no spreading.
    fn spread_stop(&mut self, f: usize, t: Tag, centralized: bool) {
        if self.timeout.is_some_and(|to| t == Tag::new(to, 0)) {
            return;
        }
        for g in 0..self.feds.len() {
            if g == f || self.feds[g].done {
                continue;
            }
            self.feds[g].engine.set_stop(t);
            if centralized {
                let net = self.next_net(g);
                self.net.send(Endpoint::Fed(g), Endpoint::Rti, WireMessage::Net { tag: net }, self.now, TimeValue::ZERO);
            }
        }
    }

    fn centralized(&mut self) -> Result<Option<Tag>, FederationError> {
        let n = self.feds.len();
        let mut rti = Rti::new(&self.part);
        for f in 0..n {
            let net = self.next_net(f);
            self.net.send(Endpoint::Fed(f), Endpoint::Rti, WireMessage::Hello { federate: f, fed_count: n }, self.now, TimeValue::ZERO);
            self.net.send(Endpoint::Fed(f), Endpoint::Rti, WireMessage::Net { tag: net }, self.now, TimeValue::ZERO);
        }
        loop {
            let mut progress = false;
            for f in 0..n {
                let Some(limit) = self.feds[f].grant else { continue };
                while !self.feds[f].done {
                    match self.feds[f].engine.step(Some(limit)).map_err(|e| self.fed_error(f, e))? {
                        Step::Executed(t) => self.flush(f, t, true),
                        Step::Stopped(t) => {
                            self.feds[f].done = true;
                            self.flush(f, t, true);
                            self.spread_stop(f, t, true);
                        }
                        Step::Blocked(_) | Step::Idle => break,
                    }
                    progress = true;
                }
            }
            if progress {
                continue;
            }
            if let Some((at, p)) = self.net.pop() {
                self.now = self.now.max(at);
                match p.to {
                    Endpoint::Rti => self.at_rti(&mut rti, p)?,
                    Endpoint::Fed(f) => self.at_federate(f, p, at)?,
                }
                continue;
            }
            if self.feds.iter().all(|f| f.done) {
                return Ok(None);
            }
            let Some(stop) = rti.drained() else {
                return Err(FederationError::Stalled(self.feds.iter().filter(|f| !f.done).count()));
            };
            return Ok(Some(stop));
        }
    }

    fn at_rti(&mut self, rti: &mut Rti, p: Packet) -> Result<(), FederationError> {
        let Endpoint::Fed(f) = p.from else { unreachable!("the RTI does not message itself") };
        match p.msg {
            WireMessage::Hello { .. } => {}
            WireMessage::Net { tag } => rti.on_net(f, tag)?,
            WireMessage::Ltc { tag } => rti.on_ltc(f, tag)?,
            WireMessage::Msg { ref connection, tag, .. } => {
                let (dest, _, _) = self.trigger_of(connection);
                rti.on_msg(dest, tag)?;
                self.net.send(Endpoint::Rti, Endpoint::Fed(dest), p.msg, p.sent, TimeValue::ZERO);
            }
            other => return Err(FederationError::Network(format!("unexpected message at RTI: {other:?}"))),
        }
        for (f, g) in rti.new_grants() {
            self.grants[f].push(g);
            self.net.send(Endpoint::Rti, Endpoint::Fed(f), WireMessage::Tag { tag: g }, self.now, TimeValue::ZERO);
        }
        Ok(())
    }

    fn at_federate(&mut self, f: usize, p: Packet, arrival: TimeValue) -> Result<(), FederationError> {
        match p.msg {
            WireMessage::Tag { tag } => self.feds[f].grant = Some(tag),
            WireMessage::Msg { connection, tag, value } => {
                let (_, trigger, _) = self.trigger_of(&connection);
                let delivery = if self.feds[f].done {
                    Delivery::Dropped
                } else {
                    self.feds[f].engine.deliver(Event::new(tag, trigger, value)).map_err(|e| self.fed_error(f, e))?;
                    Delivery::OnTime
                };
                self.messages.push(MessageLog { connection, tag, sent: p.sent, arrival, delivery });
                if !self.feds[f].done {
                    let net = self.next_net(f);
                    self.net.send(Endpoint::Fed(f), Endpoint::Rti, WireMessage::Net { tag: net }, self.now, TimeValue::ZERO);
                }
            }
            other => return Err(FederationError::Network(format!("unexpected message at federate: {other:?}"))),
        }
        Ok(())
    }

    /// Each federate processes tag `t` once its physical clock reaches
    /// `t + stp`, where stp is the largest bound on its inputs. A message
    /// arriving after `tag + stp` of its own connection is a fault.
    fn decentralized(&mut self, waits: &[TimeValue]) -> Result<Option<Tag>, FederationError> {
        loop {
            let mut best: Option<(TimeValue, usize, Tag)> = None;
            for f in 0..self.feds.len() {
                if self.feds[f].done {
                    continue;
                }
                if let Some(t) = self.feds[f].engine.next_tag() {
                    let ready = t.time.checked_add(waits[f]).unwrap_or(TimeValue::MAX);
                    if best.is_none_or(|(r, _, _)| ready < r) {
                        best = Some((ready, f, t));
                    }
                }
            }
            match (best, self.net.peek_time()) {
                (b, Some(a)) if b.is_none_or(|(ready, _, _)| a <= ready) => {
                    let (at, p) = self.net.pop().expect("peeked");
                    self.now = self.now.max(at);
                    let Endpoint::Fed(f) = p.to else { unreachable!("no RTI in decentralized mode") };
                    self.classify(f, p, at, waits[f])?;
                }
                (Some((ready, f, t)), _) => {
                    self.now = self.now.max(ready);
                    self.feds[f].engine.advance_clock(ready);
                    match self.feds[f].engine.step(Some(t)).map_err(|e| self.fed_error(f, e))? {
                        Step::Executed(t) => self.flush(f, t, false),
                        Step::Stopped(t) => {
                            self.feds[f].done = true;
                            self.flush(f, t, false);
                            self.spread_stop(f, t, false);
                        }
                        Step::Blocked(_) | Step::Idle => {}
                    }
                }
                _ => {
                    if self.feds.iter().all(|f| f.done) {
                        return Ok(None);
                    }
                    let last = self.feds.iter().filter_map(|f| f.engine.current_tag()).max();
                    let stop = match last {
                        Some(t) => t.next_microstep().map_err(|e| self.fed_error(0, e.into()))?,
                        None => Tag::ZERO,
                    };
                    return Ok(Some(stop));
                }
            }
        }
    }

    fn classify(&mut self, f: usize, p: Packet, arrival: TimeValue, wait: TimeValue) -> Result<(), FederationError> {
        let WireMessage::Msg { connection, tag, value } = p.msg else {
            return Err(FederationError::Network("only MSG travels between federates".into()));
        };
        let (_, trigger, stp) = self.trigger_of(&connection);
        let stp = stp.unwrap_or(TimeValue::ZERO);
        let deadline = tag.time.checked_add(stp).unwrap_or(TimeValue::MAX);
        let delivery = if self.feds[f].done {
            Delivery::Dropped
        } else if arrival > deadline {
            let lateness = arrival.saturating_sub(deadline);
            let logical_now = arrival.saturating_sub(wait).max(tag.time);
            let intended = Tag::new(logical_now, 0).max(tag);
            self.feds[f]
                .engine
                .deliver_fault(trigger, intended, value, lateness)
                .map_err(|e| self.fed_error(f, e))?;
            Delivery::Fault { lateness }
        } else {
            self.feds[f].engine.deliver(Event::new(tag, trigger, value)).map_err(|e| self.fed_error(f, e))?;
            Delivery::OnTime
        };
        self.messages.push(MessageLog { connection, tag, sent: p.sent, arrival, delivery });
        Ok(())
    }

    fn finish(mut self, cfg: &RunConfig, outcome: Result<Option<Tag>, FederationError>) -> FederationRun {
        let mut error = None;
        let mut stop = None;
        match outcome {
            Ok(drain) => {
                for f in 0..self.feds.len() {
                    if self.feds[f].done {
                        continue;
                    }
                    let s = drain.expect("undone federates only after a drain");
                    if let Err(e) = self.feds[f].engine.finish(s) {
                        error.get_or_insert(self.fed_error(f, e));
                    }
                    self.feds[f].done = true;
                }
                stop = self.feds.iter().filter_map(|f| f.engine.current_tag()).max();
            }
            Err(e) => error = Some(e),
        }
        let mut records: Vec<TraceRecord> = Vec::new();
        let mut phys = Vec::new();
        for f in &mut self.feds {
            records.extend(f.engine.take_records());
            phys.extend(f.engine.take_phys());
        }
        records.push(TraceRecord::marker(RecordKind::Startup, Tag::ZERO));
        if let (Some(s), None) = (stop, &error) {
            records.push(TraceRecord::marker(RecordKind::Shutdown, s));
        }
        phys.sort_by(|a, b| (a.tag, &a.subject).cmp(&(b.tag, &b.subject)));
        FederationRun {
            trace: canonicalize(self.plan.header(cfg), records),
            phys,
            messages: self.messages,
            grants: self.grants,
            stop,
            error,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::compile;
    use crate::runtime::{self, RunConfig};
    use crate::trace::compare;

    fn ms(v: i64) -> TimeValue {
        TimeValue::from_millis(v)
    }

    const PIPE: &str = "
        reactor Src { timer t(0, 10 ms); output o: int; state n: int = 0;
          reaction(t) -> o {= n = n + 1; set(o, n); =} }
        reactor Dst { input i: int; state sum: int = 0;
          reaction(i) {= sum = sum + i; log(sum); =}
          stp(5 ms) {= log(\"late\"); =} }";

    fn federated(src: &str) -> Arc<Plan> {
        Arc::new(Plan::new(compile(src).unwrap()).unwrap())
    }

    #[test]
    fn centralized_matches_single_process() {
        let src = format!("{PIPE} federated reactor {{ a = new Src(); b = new Dst(); a.o -> b.i after 3 ms }}");
        let plan = federated(&src);
        let cfg = RunConfig::fast().with_timeout(ms(50));
        let single = runtime::run(compile(&src).unwrap(), cfg.clone(), Callbacks::new()).unwrap();
        for lat in [0, 2, 8, 30] {
            let run = simulate(
                &plan,
                Arc::new(Callbacks::new()),
                &cfg,
                LatencyScript::constant("a.o->b.i", ms(lat)),
                Coordination::Centralized,
            )
            .unwrap();
            assert_eq!(run.error, None);
            assert_eq!(compare(&single.trace, &run.trace), crate::trace::Comparison::Equal, "latency {lat}");
            for g in &run.grants {
                assert!(g.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn centralized_drain_stops_after_last_tag() {
        let src = "reactor Once { timer t(2 ms); output o: int; reaction(t) -> o {= set(o, 1); =} }
            reactor Sink { input i: int; reaction(i) {= log(i); =} reaction(shutdown) {= log(\"bye\"); =} }
            federated reactor { a = new Once(); b = new Sink(); a.o -> b.i after 4 ms }";
        let single = runtime::run(compile(src).unwrap(), RunConfig::fast(), Callbacks::new()).unwrap();
        let run = simulate(&federated(src), Arc::new(Callbacks::new()), &RunConfig::fast(), LatencyScript::new(), Coordination::Centralized)
            .unwrap();
        assert_eq!(run.stop, Some(Tag::new(ms(6), 1)));
        assert_eq!(run.trace.to_text(), single.trace.to_text());
    }

    #[test]
    fn decentralized_faults_follow_the_bound() {
        let src = format!("{PIPE} federated reactor {{ a = new Src(); b = new Dst(); a.o -> b.i after 3 ms }}");
        let plan = federated(&src);
        let cfg = RunConfig::fast().with_timeout(ms(45));
        for (lat, faults) in [(8, 0usize), (9, 5)] {
            let run =
                simulate(&plan, Arc::new(Callbacks::new()), &cfg, LatencyScript::constant("a.o->b.i", ms(lat)), Coordination::Decentralized)
                    .unwrap();
            assert_eq!(run.error, None);
            // sent at 0, 10, .., 40: tag + 3 ms, deadline tag + 8 ms
            let late: Vec<_> = run.messages.iter().filter(|m| matches!(m.delivery, Delivery::Fault { .. })).collect();
            assert_eq!(late.len(), faults, "latency {lat}");
            assert!(late.iter().all(|m| m.delivery == Delivery::Fault { lateness: ms(1) }));
            let recs = run.trace.records.iter().filter(|r| r.kind == RecordKind::StpFault).count();
            assert_eq!(recs, faults);
        }
    }

    #[test]
    fn decentralized_needs_stp() {
        let src = "reactor S { timer t; output o: int; reaction(t) -> o {= set(o, 1); =} }
            reactor D { input i: int; reaction(i) {= =} }
            federated reactor { a = new S(); b = new D(); a.o -> b.i after 1 ms }";
        let err = simulate(&federated(src), Arc::new(Callbacks::new()), &RunConfig::fast(), LatencyScript::new(), Coordination::Decentralized)
            .unwrap_err();
        assert_eq!(err, FederationError::MissingStp("a.o->b.i".into()));
    }
}
