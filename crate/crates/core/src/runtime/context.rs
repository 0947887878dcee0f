//! What a reaction body sees while it runs, and host callbacks.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::instance::{ReactionInstance, ReactorInstance, TriggerId, TriggerInstance, TriggerKind};
use crate::time::{Tag, TimeValue};
use crate::value::{Value, ValueKind};

/// Access to triggers, state and effects of one reaction invocation.
pub struct ReactionCtx<'a> {
    pub(crate) reaction: &'a ReactionInstance,
    pub(crate) reactor: &'a ReactorInstance,
    pub(crate) triggers: &'a [TriggerInstance],
    pub(crate) values: &'a [Option<Value>],
    pub(crate) state: &'a mut [Value],
    pub(crate) tag: Tag,
    pub(crate) physical: TimeValue,
    pub(crate) writes: Vec<(TriggerId, Value)>,
    pub(crate) schedules: Vec<(TriggerId, TimeValue, Value)>,
    pub(crate) logs: Vec<String>,
    pub(crate) stop: bool,
}

impl<'a> ReactionCtx<'a> {
    pub fn reaction_name(&self) -> &str {
        &self.reaction.name
    }

    pub fn reactor_name(&self) -> &str {
        &self.reactor.name
    }

    pub fn tag(&self) -> Tag {
        self.tag
    }

    /// Physical minus logical time when the invocation started.
    pub fn lag(&self) -> TimeValue {
        self.physical.saturating_sub(self.tag.time)
    }

    /// Value of a trigger or source, `None` when absent or not declared.
    pub fn get(&self, local: &str) -> Option<&Value> {
        self.reaction.read(local).and_then(|t| self.values[t].as_ref())
    }

    pub fn is_present(&self, local: &str) -> bool {
        self.get(local).is_some()
    }

    pub(crate) fn read_binding(&self, local: &str) -> Option<Option<&Value>> {
        self.reaction.read(local).map(|t| self.values[t].as_ref())
    }

    /// Writes a declared port effect.
    pub fn set(&mut self, local: &str, value: Value) -> Result<(), String> {
        let t = self.reaction.write(local).ok_or_else(|| format!("`{local}` is not an effect of {}", self.reaction.name))?;
        let kind = self.triggers[t].kind;
        if !kind.is_port() {
            return Err(format!("`{local}` is an action; use schedule"));
        }
        let value = conform(value, kind.value_kind()).map_err(|v| {
            format!("cannot write {} value to `{local}` of type {}", v.kind(), kind.value_kind())
        })?;
        self.writes.retain(|(w, _)| *w != t);
        self.writes.push((t, value));
        Ok(())
    }

    /// Schedules a declared action effect `delay` after the current tag.
    pub fn schedule(&mut self, local: &str, delay: TimeValue, value: Value) -> Result<(), String> {
        let t = self.reaction.write(local).ok_or_else(|| format!("`{local}` is not an effect of {}", self.reaction.name))?;
        let kind = self.triggers[t].kind;
        let TriggerKind::Action { kind: vk, .. } = kind else {
            return Err(format!("`{local}` is a port; use set"));
        };
        if delay < TimeValue::ZERO {
            return Err(format!("negative delay {delay} scheduling `{local}`"));
        }
        let value =
            conform(value, vk).map_err(|v| format!("cannot schedule {} value on `{local}` of type {vk}", v.kind()))?;
        self.schedules.push((t, delay, value));
        Ok(())
    }

    pub fn state(&self, name: &str) -> Option<&Value> {
        let i = self.reactor.state.iter().position(|(n, _)| n == name)?;
        self.state.get(i)
    }

    pub fn set_state(&mut self, name: &str, value: Value) -> Result<(), String> {
        let i = self.reactor.state.iter().position(|(n, _)| n == name).ok_or_else(|| format!("no state variable `{name}`"))?;
        let kind = self.reactor.state[i].1.kind();
        self.state[i] =
            conform(value, kind).map_err(|v| format!("cannot store {} value in state `{name}` of type {kind}", v.kind()))?;
        Ok(())
    }

    pub fn param(&self, name: &str) -> Option<&Value> {
        self.reactor.params.get(name)
    }

    pub fn log(&mut self, text: impl Into<String>) {
        self.logs.push(text.into());
    }

    /// Stops the program at the next microstep.
    pub fn request_stop(&mut self) {
        self.stop = true;
    }
}

fn conform(value: Value, kind: ValueKind) -> Result<Value, Value> {
    match (value, kind) {
        (Value::Int(i), ValueKind::Float) => Ok(Value::Float(i as f64)),
        (v, k) if v.kind() == k => Ok(v),
        (v, _) => Err(v),
    }
}

pub type Callback = Arc<dyn Fn(&mut ReactionCtx<'_>) -> Result<(), String> + Send + Sync>;

/// Host functions backing `extern "name"` bodies.
#[derive(Clone, Default)]
pub struct Callbacks {
    map: HashMap<String, Callback>,
}

impl Callbacks {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, name: impl Into<String>, f: F) -> &mut Self
    where
        F: Fn(&mut ReactionCtx<'_>) -> Result<(), String> + Send + Sync + 'static,
    {
        self.map.insert(name.into(), Arc::new(f));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Callback> {
        self.map.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }
}

impl fmt::Debug for Callbacks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<_> = self.map.keys().collect();
        names.sort();
        f.debug_tuple("Callbacks").field(&names).finish()
    }
}
