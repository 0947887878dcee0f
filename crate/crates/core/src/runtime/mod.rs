//! Discrete-event execution of an elaborated program.

mod clock;
pub mod clock_script;
mod context;
mod engine;
mod interp;
mod queue;

use std::sync::Arc;

pub use clock::PhysicalClock;
pub use clock_script::{EntryKind, ScriptEntry};
pub use context::{Callback, Callbacks, ReactionCtx};
pub use engine::{Engine, InjectError, InjectHandle, Mode, Outgoing, Plan, PlanError, RunConfig, RunError, RunResult, Step};
pub use queue::{Event, EventKind, EventQueue, TagInPast};

use crate::instance::InstanceGraph;

/// Levels the graph and runs it once.
pub fn run(ig: InstanceGraph, cfg: RunConfig, callbacks: Callbacks) -> Result<RunResult, PlanError> {
    let plan = Arc::new(Plan::new(ig)?);
    Ok(match Engine::new(plan.clone(), Arc::new(callbacks), cfg.clone()) {
        Ok(engine) => engine.run(),
        Err(e) => RunResult {
            trace: crate::trace::canonicalize(plan.header(&cfg), Vec::new()),
            phys: Vec::new(),
            error: Some(e),
            final_tag: None,
        },
    })
}
