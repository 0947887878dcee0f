//! Tag-advance grant computation for centralized coordination.
//!
//! The RTI tracks each federate's next event tag (NET), its last completed
//! tag (LTC) and the messages it has forwarded but the receiver has not yet
//! completed. From these it bounds the earliest tag at which a message can
//! still reach each federate:
//!
//! ```text
//! eo(u) = min(net(u), bound(u))              earliest output of u
//! bound(f) = min over upstream u of eo(u) delayed by d(u -> f)
//! ```
//!
//! computed as a fixpoint because federates may feed each other. A federate
//! may then process every tag strictly below `bound(f)`, and no later than
//! its own next event.

use thiserror::Error;

use super::Partition;
use crate::time::{Tag, TimeValue};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RtiError {
    #[error("federate {federate} sent NET {net} not after its completed tag {completed}")]
    OutOfOrderNet { federate: usize, net: Tag, completed: Tag },
    #[error("federate {federate} sent LTC {ltc} before its previous LTC {previous}")]
    OutOfOrderLtc { federate: usize, ltc: Tag, previous: Tag },
    #[error("unknown federate {0}")]
    UnknownFederate(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    /// Earliest tag at which a message may still arrive.
    pub bound: Tag,
    /// Largest tag the federate may process.
    pub tag: Tag,
}

#[derive(Debug, Clone)]
pub struct Rti {
    upstream: Vec<Vec<(usize, TimeValue)>>,
    net: Vec<Tag>,
    completed: Vec<Option<Tag>>,
    pending: Vec<Vec<Tag>>,
    granted: Vec<Option<Tag>>,
}

impl Rti {
    pub fn new(p: &Partition) -> Self {
        let n = p.len();
        Rti {
            upstream: (0..n).map(|f| p.upstream(f)).collect(),
            net: vec![Tag::ZERO; n],
            completed: vec![None; n],
            pending: vec![Vec::new(); n],
            granted: vec![None; n],
        }
    }

    fn check(&self, f: usize) -> Result<(), RtiError> {
        if f < self.net.len() {
            Ok(())
        } else {
            Err(RtiError::UnknownFederate(f))
        }
    }

    pub fn on_net(&mut self, f: usize, tag: Tag) -> Result<(), RtiError> {
        self.check(f)?;
        if let Some(c) = self.completed[f] {
            if tag <= c {
                return Err(RtiError::OutOfOrderNet { federate: f, net: tag, completed: c });
            }
        }
        self.net[f] = tag;
        Ok(())
    }

    pub fn on_ltc(&mut self, f: usize, tag: Tag) -> Result<(), RtiError> {
        self.check(f)?;
        if let Some(c) = self.completed[f] {
            if tag < c {
                return Err(RtiError::OutOfOrderLtc { federate: f, ltc: tag, previous: c });
            }
        }
        self.completed[f] = Some(tag);
        self.pending[f].retain(|&m| m > tag);
        // until the next NET arrives, anything after `tag` is possible
        self.net[f] = tag.next_microstep().unwrap_or(Tag::FOREVER);
        Ok(())
    }

    /// Records a message forwarded to `f`.
    pub fn on_msg(&mut self, f: usize, tag: Tag) -> Result<(), RtiError> {
        self.check(f)?;
        self.pending[f].push(tag);
        Ok(())
    }

    /// A federate that disconnected can neither send nor receive.
    pub fn on_leave(&mut self, f: usize) {
        if f < self.net.len() {
            self.net[f] = Tag::FOREVER;
            self.pending[f].clear();
        }
    }

    /// NET of `f`, lowered by any forwarded message it has not completed.
    pub fn effective_net(&self, f: usize) -> Tag {
        self.pending[f].iter().copied().fold(self.net[f], Tag::min)
    }

    pub fn bounds(&self) -> Vec<Tag> {
        let n = self.net.len();
        let mut bound = vec![Tag::FOREVER; n];
        for _ in 0..=n {
            let mut changed = false;
            for f in 0..n {
                let b = self.upstream[f]
                    .iter()
                    .map(|&(u, d)| {
                        let eo = self.effective_net(u).min(bound[u]);
                        if eo.is_forever() {
                            Tag::FOREVER
                        } else {
                            eo.delay(d).unwrap_or(Tag::FOREVER)
                        }
                    })
                    .min()
                    .unwrap_or(Tag::FOREVER);
                if b != bound[f] {
                    bound[f] = b;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        bound
    }

    pub fn grants(&self) -> Vec<Grant> {
        self.bounds()
            .into_iter()
            .enumerate()
            .map(|(f, bound)| {
                let below = if bound.is_forever() { Tag::FOREVER } else { bound.predecessor().unwrap_or(Tag::ZERO) };
                let own = self.effective_net(f);
                Grant { bound, tag: below.min(own) }
            })
            .collect()
    }

    /// Grants that moved forward since the last call. Grants never move
    /// backwards.
    pub fn new_grants(&mut self) -> Vec<(usize, Tag)> {
        let mut out = Vec::new();
        for (f, g) in self.grants().into_iter().enumerate() {
            if self.granted[f].is_none_or(|old| g.tag > old) {
                self.granted[f] = Some(g.tag);
                out.push((f, g.tag));
            }
        }
        out
    }

    pub fn granted(&self, f: usize) -> Option<Tag> {
        self.granted[f]
    }

    /// Once nothing more can happen anywhere, the common shutdown tag.
    pub fn drained(&self) -> Option<Tag> {
        if (0..self.net.len()).any(|f| !self.effective_net(f).is_forever()) {
            return None;
        }
        Some(match self.completed.iter().flatten().max() {
            Some(t) => t.next_microstep().unwrap_or(Tag::FOREVER),
            None => Tag::ZERO,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::{CrossConnection, FederateId};

    fn ms(v: i64) -> TimeValue {
        TimeValue::from_millis(v)
    }

    fn part(n: usize, links: &[(usize, usize, i64)]) -> Partition {
        Partition {
            federates: (0..n).map(|i| FederateId { index: i, name: format!("f{i}") }).collect(),
            cross: links
                .iter()
                .enumerate()
                .map(|(k, &(from, to, d))| CrossConnection {
                    connection: k,
                    id: format!("f{from}.o->f{to}.i{k}"),
                    from,
                    to,
                    delay: ms(d),
                    stp: None,
                })
                .collect(),
        }
    }

    #[test]
    fn downstream_bounded_by_delay() {
        // vision (0) -> robot (1) after 10 ms
        let mut rti = Rti::new(&part(2, &[(0, 1, 10)]));
        rti.on_net(0, Tag::ZERO).unwrap();
        rti.on_net(1, Tag::FOREVER).unwrap();
        let g = rti.grants();
        assert_eq!(g[1].bound, Tag::new(ms(10), 0));
        assert_eq!(g[1].tag, Tag::new(ms(10), 0).predecessor().unwrap());
        // a source federate is limited only by its own events
        assert_eq!(g[0], Grant { bound: Tag::FOREVER, tag: Tag::ZERO });
    }

    #[test]
    fn two_upstreams_take_the_smaller_path() {
        let mut rti = Rti::new(&part(3, &[(0, 2, 5), (1, 2, 7)]));
        for f in 0..2 {
            rti.on_net(f, Tag::ZERO).unwrap();
        }
        rti.on_net(2, Tag::FOREVER).unwrap();
        // brute force over both paths
        let paths = [Tag::ZERO.delay(ms(5)).unwrap(), Tag::ZERO.delay(ms(7)).unwrap()];
        assert_eq!(rti.grants()[2].bound, paths.into_iter().min().unwrap());
        assert_eq!(rti.grants()[2].bound, Tag::new(ms(5), 0));
    }

    #[test]
    fn loops_converge_through_positive_delays() {
        let mut rti = Rti::new(&part(2, &[(0, 1, 3), (1, 0, 4)]));
        rti.on_net(0, Tag::new(ms(1), 0)).unwrap();
        rti.on_net(1, Tag::FOREVER).unwrap();
        let b = rti.bounds();
        assert_eq!(b[1], Tag::new(ms(4), 0));
        assert_eq!(b[0], Tag::new(ms(8), 0));
    }

    #[test]
    fn forwarded_messages_hold_back_grants() {
        let mut rti = Rti::new(&part(2, &[(0, 1, 10)]));
        rti.on_net(0, Tag::FOREVER).unwrap();
        rti.on_net(1, Tag::FOREVER).unwrap();
        assert_eq!(rti.drained(), Some(Tag::ZERO));
        rti.on_msg(1, Tag::new(ms(12), 0)).unwrap();
        assert_eq!(rti.grants()[1].tag, Tag::new(ms(12), 0));
        assert_eq!(rti.drained(), None);
        rti.on_ltc(1, Tag::new(ms(12), 0)).unwrap();
        rti.on_net(1, Tag::FOREVER).unwrap();
        assert_eq!(rti.drained(), Some(Tag::new(ms(12), 1)));
    }

    #[test]
    fn grants_are_monotone_and_nets_checked() {
        let mut rti = Rti::new(&part(2, &[(0, 1, 10)]));
        rti.on_net(0, Tag::ZERO).unwrap();
        rti.on_net(1, Tag::ZERO).unwrap();
        let first = rti.new_grants();
        assert_eq!(first.len(), 2);
        assert!(rti.new_grants().is_empty());
        rti.on_ltc(0, Tag::ZERO).unwrap();
        rti.on_net(0, Tag::new(ms(30), 0)).unwrap();
        rti.on_ltc(1, Tag::ZERO).unwrap();
        rti.on_net(1, Tag::FOREVER).unwrap();
        let next = rti.new_grants();
        assert!(next.iter().all(|&(f, t)| t > first[f].1));
        let err = rti.on_net(0, Tag::ZERO).unwrap_err();
        assert!(matches!(err, RtiError::OutOfOrderNet { federate: 0, .. }));
    }
}
