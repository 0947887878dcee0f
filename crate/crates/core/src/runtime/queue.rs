use std::collections::BTreeMap;

use thiserror::Error;

use crate::instance::TriggerId;
use crate::time::{Tag, TimeValue};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Normal,
    /// A message that arrived later than its connection's stp bound.
    StpFault { lateness: TimeValue },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub tag: Tag,
    pub trigger: TriggerId,
    pub value: Value,
    pub kind: EventKind,
}

impl Event {
    pub fn new(tag: Tag, trigger: TriggerId, value: Value) -> Self {
        Event { tag, trigger, value, kind: EventKind::Normal }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("event at {event} is not after the current tag {current}")]
pub struct TagInPast {
    pub event: Tag,
    pub current: Tag,
}

/// Future events grouped by tag. Equal tags keep insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    events: BTreeMap<Tag, Vec<Event>>,
    current: Option<Tag>,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// The last tag handed out by [`pop_batch`](Self::pop_batch).
    pub fn current(&self) -> Option<Tag> {
        self.current
    }

    pub fn schedule(&mut self, e: Event) -> Result<(), TagInPast> {
        if let Some(current) = self.current {
            if e.tag <= current {
                return Err(TagInPast { event: e.tag, current });
            }
        }
        self.events.entry(e.tag).or_default().push(e);
        Ok(())
    }

    pub fn peek_tag(&self) -> Option<Tag> {
        self.events.keys().next().copied()
    }

    /// Removes all events at the earliest tag and makes it current.
    pub fn pop_batch(&mut self) -> Option<(Tag, Vec<Event>)> {
        let (tag, batch) = self.events.pop_first()?;
        self.current = Some(tag);
        Some((tag, batch))
    }

    /// Marks `tag` as current without events (e.g. a bare shutdown tag).
    pub fn advance(&mut self, tag: Tag) -> Vec<Event> {
        self.current = Some(tag);
        self.events.remove(&tag).unwrap_or_default()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.values().map(Vec::len).sum()
    }
}
