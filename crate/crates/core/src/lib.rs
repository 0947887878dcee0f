//! Deterministic reactor runtime with a small textual language.
//!
//! Programs are compiled with [`dsl::compile`] into an
//! [`InstanceGraph`](instance::InstanceGraph), analysed by [`graph`], and
//! executed by [`runtime`]. [`federation`] splits a `federated` program
//! across processes, [`bt`] lowers behavior trees to reactors and [`trace`]
//! records and compares canonical traces.

pub mod bt;
pub mod dsl;
pub mod federation;
pub mod graph;
pub mod instance;
pub mod runtime;
pub mod time;
pub mod trace;
pub mod value;

pub use time::{Tag, TimeValue};
pub use value::Value;

/// Example programs shipped with the crate.
pub mod examples {
    pub const VISION_ASSISTANT: &str = include_str!("../examples/vision_assistant.rcl");
    pub const SCREW_STATION: &str = include_str!("../examples/screw_station.rcl");
    pub const FEDERATED_ESTOP: &str = include_str!("../examples/federated_estop.rcl");

    /// `(file name, source)` of every bundled example.
    pub const ALL: [(&str, &str); 3] = [
        ("vision_assistant.rcl", VISION_ASSISTANT),
        ("screw_station.rcl", SCREW_STATION),
        ("federated_estop.rcl", FEDERATED_ESTOP),
    ];

}
