//! Centralized coordination over TCP.
//!
//! The RTI accepts one connection per federate; each connection starts with
//! HELLO. Federates send MSG, LTC and NET to the RTI, which forwards MSG to
//! the receiver and answers with TAG grants, and with STOP once every
//! federate has run out of events.

use std::io::{self, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;

use super::rti::Rti;
use super::sim::{Delivery, FederationRun, MessageLog};
use super::wire::{read_frame, write_frame, WireMessage};
use super::{partition, FederationError, Partition};
use crate::runtime::{Callbacks, Engine, Event, Plan, RunConfig, RunError, Step};
use crate::time::Tag;
use crate::trace::{canonicalize, PhysRecord, RecordKind, TraceRecord};

fn net_err(e: io::Error) -> FederationError {
    FederationError::Network(e.to_string())
}

/// What the RTI saw during a run.
#[derive(Debug, Default)]
pub struct RtiReport {
    pub grants: Vec<Vec<Tag>>,
    pub stop: Option<Tag>,
}

/// Serves one federation on `listener` and returns when every federate has
/// disconnected.
pub fn serve_rti(listener: TcpListener, part: &Partition) -> Result<RtiReport, FederationError> {
    let n = part.len();
    let (tx, rx) = mpsc::channel::<(usize, Option<WireMessage>)>();
    let mut writers: Vec<Option<BufWriter<TcpStream>>> = (0..n).map(|_| None).collect();
    for _ in 0..n {
        let (stream, _) = listener.accept().map_err(net_err)?;
        stream.set_nodelay(true).map_err(net_err)?;
        let mut reader = BufReader::new(stream.try_clone().map_err(net_err)?);
        let f = match read_frame(&mut reader).map_err(net_err)? {
            Some(WireMessage::Hello { federate, fed_count }) if federate < n && fed_count == n => federate,
            other => return Err(FederationError::Network(format!("expected HELLO, got {other:?}"))),
        };
        if writers[f].is_some() {
            return Err(FederationError::Network(format!("federate {f} connected twice")));
        }
        writers[f] = Some(BufWriter::new(stream));
        let tx = tx.clone();
        thread::spawn(move || loop {
            match read_frame(&mut reader) {
                Ok(Some(m)) => {
                    if tx.send((f, Some(m))).is_err() {
                        return;
                    }
                }
                _ => {
                    let _ = tx.send((f, None));
                    return;
                }
            }
        });
    }
    drop(tx);
    let mut rti = Rti::new(part);
    let mut report = RtiReport { grants: vec![Vec::new(); n], stop: None };
    let mut open = n;
    let send = |writers: &mut Vec<Option<BufWriter<TcpStream>>>, f: usize, m: &WireMessage| {
        // a federate that already shut down no longer listens
        if let Some(w) = writers[f].as_mut() {
            if write_frame(w, m).is_err() {
                writers[f] = None;
            }
        }
    };
    while open > 0 {
        let Ok((f, msg)) = rx.recv() else { break };
        match msg {
            None => {
                open -= 1;
                writers[f] = None;
                rti.on_leave(f);
            }
            Some(WireMessage::Net { tag }) => rti.on_net(f, tag)?,
            Some(WireMessage::Ltc { tag }) => rti.on_ltc(f, tag)?,
            Some(WireMessage::Stop { tag }) => {
                if report.stop.is_none() {
                    report.stop = Some(tag);
                    for g in (0..n).filter(|&g| g != f) {
                        send(&mut writers, g, &WireMessage::Stop { tag });
                    }
                }
            }
            Some(WireMessage::Msg { connection, tag, value }) => {
                let dest = part
                    .cross_by_id(&connection)
                    .ok_or_else(|| FederationError::Network(format!("unknown connection `{connection}`")))?
                    .to;
                rti.on_msg(dest, tag)?;
                send(&mut writers, dest, &WireMessage::Msg { connection, tag, value });
            }
            Some(other) => return Err(FederationError::Network(format!("unexpected message at RTI: {other:?}"))),
        }
        for (g, tag) in rti.new_grants() {
            report.grants[g].push(tag);
            send(&mut writers, g, &WireMessage::Tag { tag });
        }
        if report.stop.is_none() {
            if let Some(stop) = rti.drained() {
                report.stop = Some(stop);
                for g in 0..n {
                    send(&mut writers, g, &WireMessage::Stop { tag: stop });
                }
            }
        }
    }
    Ok(report)
}

/// Result of one federate process.
#[derive(Debug)]
pub struct FederateOutcome {
    pub records: Vec<TraceRecord>,
    pub phys: Vec<PhysRecord>,
    pub messages: Vec<MessageLog>,
    pub final_tag: Option<Tag>,
}

/// Runs federate `index` of `plan` against the RTI at `addr`.
pub fn run_federate(
    addr: impl ToSocketAddrs,
    plan: &Arc<Plan>,
    index: usize,
    callbacks: Arc<Callbacks>,
    cfg: &RunConfig,
) -> Result<FederateOutcome, FederationError> {
    let part = partition(&plan.graph)?;
    let name = part.federates.get(index).map(|f| f.name.clone()).ok_or_else(|| FederationError::UnknownFederate(index.to_string()))?;
    let wrap = |error: RunError| match error {
        RunError::LateMessage { tag, current, .. } => FederationError::Safety { federate: name.clone(), tag, current },
        error => FederationError::Federate { federate: name.clone(), error },
    };
    let mut engine = Engine::new(Arc::new(plan.for_federate(index)), callbacks, cfg.clone()).map_err(wrap)?;
    let stream = TcpStream::connect(addr).map_err(net_err)?;
    stream.set_nodelay(true).map_err(net_err)?;
    let mut reader = BufReader::new(stream.try_clone().map_err(net_err)?);
    let mut w = BufWriter::new(stream.try_clone().map_err(net_err)?);
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || loop {
        let m = read_frame(&mut reader).ok().flatten();
        let end = m.is_none();
        if tx.send(m).is_err() || end {
            return;
        }
    });
    write_frame(&mut w, &WireMessage::Hello { federate: index, fed_count: part.len() }).map_err(net_err)?;
    engine.start().map_err(wrap)?;
    let net = |e: &mut Engine| if e.is_stopped() { Tag::FOREVER } else { e.next_tag().unwrap_or(Tag::FOREVER) };
    let n0 = net(&mut engine);
    write_frame(&mut w, &WireMessage::Net { tag: n0 }).map_err(net_err)?;

    let mut grant: Option<Tag> = None;
    // Messages are logged when sent: one sent at the stop tag may never be
    // read by a receiver that has already finished.
    let mut messages = Vec::new();
    let mut flush = |engine: &mut Engine, w: &mut BufWriter<TcpStream>, t: Tag| -> Result<(), FederationError> {
        let now = engine.physical_time();
        for out in engine.take_outbox() {
            let id = plan.graph.connections[out.connection].id.clone();
            messages.push(MessageLog { connection: id.clone(), tag: out.tag, sent: now, arrival: now, delivery: Delivery::OnTime });
            write_frame(w, &WireMessage::Msg { connection: id, tag: out.tag, value: out.value }).map_err(net_err)?;
        }
        write_frame(w, &WireMessage::Ltc { tag: t }).map_err(net_err)?;
        let n = net(engine);
        write_frame(w, &WireMessage::Net { tag: n }).map_err(net_err)
    };
    'outer: loop {
        if let Some(g) = grant {
            loop {
                match engine.step(Some(g)).map_err(wrap)? {
                    Step::Executed(t) => flush(&mut engine, &mut w, t)?,
                    Step::Stopped(t) => {
                        if cfg.timeout.is_none_or(|to| t != Tag::new(to, 0)) {
                            write_frame(&mut w, &WireMessage::Stop { tag: t }).map_err(net_err)?;
                        }
                        flush(&mut engine, &mut w, t)?;
                        break 'outer;
                    }
                    Step::Blocked(_) | Step::Idle => break,
                }
            }
        }
        match rx.recv().ok().flatten() {
            Some(WireMessage::Tag { tag }) => grant = Some(grant.map_or(tag, |g| g.max(tag))),
            Some(WireMessage::Msg { connection, tag, value }) => {
                let conn = plan
                    .graph
                    .connection_by_id(&connection)
                    .ok_or_else(|| FederationError::Network(format!("unknown connection `{connection}`")))?;
                engine.deliver(Event::new(tag, plan.graph.connections[conn].to, value)).map_err(wrap)?;
                let n = net(&mut engine);
                write_frame(&mut w, &WireMessage::Net { tag: n }).map_err(net_err)?;
            }
            Some(WireMessage::Stop { tag }) => {
                // either everyone ran dry or another federate asked to stop
                engine.set_stop(tag);
                let n = net(&mut engine);
                write_frame(&mut w, &WireMessage::Net { tag: n }).map_err(net_err)?;
            }
            Some(other) => return Err(FederationError::Network(format!("unexpected message at federate: {other:?}"))),
            None => return Err(FederationError::Network("RTI closed the connection".into())),
        }
    }
    let _ = w.flush();
    let _ = w.get_ref().shutdown(Shutdown::Both);
    Ok(FederateOutcome {
        records: engine.take_records(),
        phys: engine.take_phys(),
        messages,
        final_tag: engine.current_tag(),
    })
}

/// Runs the RTI and every federate on loopback TCP inside this process.
pub fn launch(plan: &Arc<Plan>, callbacks: Arc<Callbacks>, cfg: &RunConfig) -> Result<FederationRun, FederationError> {
    let part = partition(&plan.graph)?;
    let listener = TcpListener::bind(("127.0.0.1", 0)).map_err(net_err)?;
    let addr: SocketAddr = listener.local_addr().map_err(net_err)?;
    let rti_part = part.clone();
    let rti = thread::spawn(move || serve_rti(listener, &rti_part));
    let feds: Vec<_> = (0..part.len())
        .map(|i| {
            let (plan, callbacks, cfg) = (plan.clone(), callbacks.clone(), cfg.clone());
            thread::spawn(move || run_federate(addr, &plan, i, callbacks, &cfg))
        })
        .collect();
    let mut error = None;
    let mut records = Vec::new();
    let mut phys = Vec::new();
    let mut messages = Vec::new();
    let mut stop: Option<Tag> = None;
    for h in feds {
        match h.join().unwrap_or_else(|_| Err(FederationError::Network("federate thread panicked".into()))) {
            Ok(o) => {
                records.extend(o.records);
                phys.extend(o.phys);
                messages.extend(o.messages);
                stop = stop.max(o.final_tag);
            }
            Err(e) => {
                error.get_or_insert(e);
            }
        }
    }
    let report = match rti.join().unwrap_or_else(|_| Err(FederationError::Network("RTI thread panicked".into()))) {
        Ok(r) => r,
        Err(e) => {
            error.get_or_insert(e);
            RtiReport::default()
        }
    };
    records.push(TraceRecord::marker(RecordKind::Startup, Tag::ZERO));
    if let (Some(s), None) = (stop, &error) {
        records.push(TraceRecord::marker(RecordKind::Shutdown, s));
    }
    phys.sort_by(|a, b| (a.tag, &a.subject).cmp(&(b.tag, &b.subject)));
    Ok(FederationRun { trace: canonicalize(plan.header(cfg), records), phys, messages, grants: report.grants, stop, error })
}
