//! Trace reduction pipeline for multi-tier services.
//!
//! Request tracing of a busy multi-tier service drowns in log volume, most
//! of it from requests the first tier answered on its own. This crate
//! generates synthetic three-tier activity logs, learns the first-message
//! size threshold that tells those single-tier requests apart, drops their
//! message records at the source with a per-thread state machine, and
//! correlates what survives into causal paths with before/after accounting.

pub mod codec;
pub mod correlate;
pub mod eliminate;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod simgen;
pub mod threshold;

pub use model::{
    ActivityType, CausalPath, ContextId, Episode, MessageId, PathClass, RawActivityRecord,
    TupleRecord,
};
