//! Federated execution: every top-level reactor of a `federated` program
//! runs as its own engine, and tagged messages cross between them.
//!
//! Two coordination modes are provided. Centralized mode routes everything
//! through an [`Rti`] that hands out tag-advance grants. Decentralized mode
//! has no coordinator; a receiver waits until its physical clock passes
//! `tag + stp` before processing a tag, and a message arriving after that
//! bound is a fault handled by the receiving reaction's `stp` clause.

pub mod latency;
pub mod net;
pub mod rti;
pub mod sim;
pub mod wire;

use thiserror::Error;

use crate::instance::{ConnectionId, InstanceGraph, ReactionId};
use crate::runtime::RunError;
use crate::time::{Tag, TimeValue};

pub use latency::LatencyScript;
pub use rti::{Grant, Rti, RtiError};
pub use sim::{simulate, Coordination, Delivery, FederationRun, MessageLog};
pub use wire::WireMessage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FederateId {
    pub index: usize,
    pub name: String,
}

/// A connection whose ends live in different federates.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossConnection {
    pub connection: ConnectionId,
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub delay: TimeValue,
    pub stp: Option<TimeValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub federates: Vec<FederateId>,
    pub cross: Vec<CrossConnection>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FederationError {
    #[error("program is not federated")]
    NotFederated,
    #[error("cross-federate connection `{0}` needs an stp bound in decentralized mode")]
    MissingStp(String),
    #[error("latency script names `{0}`, which is not a cross-federate connection (known: {1})")]
    UnknownConnection(String, String),
    #[error("no federate named `{0}`")]
    UnknownFederate(String),
    #[error("federate {federate}: {error}")]
    Federate { federate: String, error: RunError },
    #[error(transparent)]
    Protocol(#[from] RtiError),
    #[error("federate {federate} received a message for {tag} after processing {current}")]
    Safety { federate: String, tag: Tag, current: Tag },
    #[error("federation stalled with {0} federates still running")]
    Stalled(usize),
    #[error("network: {0}")]
    Network(String),
}

/// Splits a federated program along its top-level instances.
pub fn partition(ig: &InstanceGraph) -> Result<Partition, FederationError> {
    if !ig.federated {
        return Err(FederationError::NotFederated);
    }
    let federates = ig.federates.iter().map(|f| FederateId { index: f.index, name: f.name.clone() }).collect();
    let cross = ig
        .connections
        .iter()
        .enumerate()
        .filter_map(|(id, c)| {
            let from = ig.federate_of_trigger(c.from)?;
            let to = ig.federate_of_trigger(c.to)?;
            (from != to).then(|| CrossConnection {
                connection: id,
                id: c.id.clone(),
                from,
                to,
                delay: c.delay.expect("cross-federate connections are delayed"),
                stp: c.stp,
            })
        })
        .collect();
    Ok(Partition { federates, cross })
}

impl Partition {
    pub fn len(&self) -> usize {
        self.federates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.federates.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.federates.iter().position(|f| f.name == name)
    }

    /// For each upstream federate of `f`, the smallest delay on any
    /// connection from it into `f`.
    pub fn upstream(&self, f: usize) -> Vec<(usize, TimeValue)> {
        let mut out: Vec<(usize, TimeValue)> = Vec::new();
        for c in self.cross.iter().filter(|c| c.to == f) {
            match out.iter_mut().find(|(u, _)| *u == c.from) {
                Some((_, d)) => *d = (*d).min(c.delay),
                None => out.push((c.from, c.delay)),
            }
        }
        out.sort();
        out
    }

    pub fn cross_by_connection(&self, connection: ConnectionId) -> Option<&CrossConnection> {
        self.cross.iter().find(|c| c.connection == connection)
    }

    pub fn cross_by_id(&self, id: &str) -> Option<&CrossConnection> {
        self.cross.iter().find(|c| c.id == id)
    }

    /// Largest stp bound on the inputs of `f`; how long it waits behind
    /// physical time in decentralized mode.
    pub fn input_stp(&self, f: usize) -> Result<TimeValue, FederationError> {
        let mut w = TimeValue::ZERO;
        for c in self.cross.iter().filter(|c| c.to == f) {
            w = w.max(c.stp.ok_or_else(|| FederationError::MissingStp(c.id.clone()))?);
        }
        Ok(w)
    }

    pub fn reactions_of(&self, ig: &InstanceGraph, f: usize) -> Vec<ReactionId> {
        (0..ig.reactions.len()).filter(|&r| ig.federate_of_reaction(r) == Some(f)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::compile;

    const LINK: &str = "reactor Src { timer t(0, 10 ms); output o: int; reaction(t) -> o {= set(o, 1); =} }
        reactor Mid { input i: int; output o: int; reaction(i) -> o {= set(o, i); =} }
        reactor Dst { input i: int; reaction(i) {= log(i); =} }";

    #[test]
    fn chain_of_three() {
        let ig = compile(&format!(
            "{LINK} federated reactor {{ a = new Src(); b = new Mid(); c = new Dst();
               a.o -> b.i after 5 ms; b.o -> c.i after 5 ms }}"
        ))
        .unwrap();
        let p = partition(&ig).unwrap();
        assert_eq!(p.federates.iter().map(|f| f.name.as_str()).collect::<Vec<_>>(), vec!["a", "b", "c"]);
        assert_eq!(p.cross.len(), 2);
        assert_eq!(p.upstream(2), vec![(1, TimeValue::from_millis(5))]);
        let mut all: Vec<ReactionId> = (0..3).flat_map(|f| p.reactions_of(&ig, f)).collect();
        all.sort();
        assert_eq!(all, (0..ig.reactions.len()).collect::<Vec<_>>());
    }

    #[test]
    fn single_federate() {
        let ig = compile(&format!("{LINK} federated reactor {{ a = new Src() }}")).unwrap();
        let p = partition(&ig).unwrap();
        assert_eq!((p.len(), p.cross.len()), (1, 0));
    }

    #[test]
    fn not_federated() {
        let ig = compile(&format!("{LINK} main reactor {{ a = new Src() }}")).unwrap();
        assert_eq!(partition(&ig), Err(FederationError::NotFederated));
    }
}
