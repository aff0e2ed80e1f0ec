//! The transformation stage: raw records become tuple records, optionally
//! filtered by the per-thread elimination state machine.
//!
//! Elimination keys off the first message a thread receives on the
//! first-tier port: small enough and the thread is marked `simple`, after
//! which its message records are skipped; large enough and it is marked
//! `complex`, keeping everything. BEGIN and END always pass through, and the
//! whole decision uses only the node-local stream.

use std::collections::HashMap;

use crate::model::{ActivityType, ContextId, RawActivityRecord, TupleRecord};

/// Lifecycle state of one thread, driven by the record cases below.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadState {
    Start,
    Simple,
    Complex,
    End,
}

/// Per-thread state, mutated only by [`step`].
#[derive(Debug, Default)]
pub struct StateMap {
    states: HashMap<ContextId, ThreadState>,
}

impl StateMap {
    pub fn new() -> Self {
        StateMap::default()
    }

    pub fn get(&self, ctx: &ContextId) -> Option<ThreadState> {
        self.states.get(ctx).copied()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn set(&mut self, ctx: &ContextId, state: ThreadState) {
        self.states.insert(ctx.clone(), state);
    }
}

/// Parameters of the eliminating transform.
#[derive(Debug, Clone, PartialEq)]
pub struct EliminationConfig {
    /// First-message sizes strictly above this survive as complex.
    pub threshold: f64,
    pub first_tier_port: u16,
}

impl EliminationConfig {
    pub fn new(threshold: f64) -> Self {
        EliminationConfig {
            threshold,
            first_tier_port: 80,
        }
    }

    pub fn with_port(threshold: f64, first_tier_port: u16) -> Self {
        EliminationConfig {
            threshold,
            first_tier_port,
        }
    }
}

/// Whether a record survives into the tuple stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Emit,
    Drop,
}

/// Advances the state machine by one record and decides its fate.
///
/// Case 1: BEGIN marks the thread `start` and is emitted.
/// Case 2: a RECEIVE on the first-tier port while the thread is in `start`
/// marks it `complex` (size over the threshold, emitted) or `simple`
/// (dropped).
/// Case 3: END marks the thread `end` and is emitted.
/// Case 4: everything else is emitted only while the thread is `complex`;
/// in `start`, `simple`, or `end` it is dropped. A record whose thread was
/// never seen is emitted, since dropping it could tear a path that began
/// before capture started.
pub fn step(
    states: &mut StateMap,
    record: &RawActivityRecord,
    config: &EliminationConfig,
) -> Action {
    match record.atype {
        ActivityType::Begin => {
            states.set(&record.ctx, ThreadState::Start);
            Action::Emit
        }
        ActivityType::End => {
            states.set(&record.ctx, ThreadState::End);
            Action::Emit
        }
        ActivityType::Receive
            if record.msg.map(|m| m.dst_port) == Some(config.first_tier_port)
                && states.get(&record.ctx) == Some(ThreadState::Start) =>
        {
            if record.size_bytes as f64 > config.threshold {
                states.set(&record.ctx, ThreadState::Complex);
                Action::Emit
            } else {
                states.set(&record.ctx, ThreadState::Simple);
                Action::Drop
            }
        }
        _ => match states.get(&record.ctx) {
            Some(ThreadState::Complex) | None => Action::Emit,
            Some(ThreadState::Start) | Some(ThreadState::Simple) | Some(ThreadState::End) => {
                Action::Drop
            }
        },
    }
}

/// Counters reported by a transform run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransformStats {
    pub records_in: u64,
    pub tuples_out: u64,
    pub dropped: u64,
    /// Case-4 records kept because their thread context was never mapped;
    /// nonzero means the stream started mid-request somewhere.
    pub unmapped_emits: u64,
}

/// Streaming raw-to-tuple transformer, one per node stream.
#[derive(Debug)]
pub struct Transformer {
    config: Option<EliminationConfig>,
    states: StateMap,
    next_seq: u64,
    stats: TransformStats,
}

impl Transformer {
    /// `None` transforms every record; `Some` applies the state machine.
    pub fn new(config: Option<EliminationConfig>) -> Self {
        Transformer {
            config,
            states: StateMap::new(),
            next_seq: 0,
            stats: TransformStats::default(),
        }
    }

    pub fn push(&mut self, record: RawActivityRecord) -> Option<TupleRecord> {
        self.stats.records_in += 1;
        if let Some(config) = &self.config {
            let unmapped_message =
                record.atype.is_message() && self.states.get(&record.ctx).is_none();
            match step(&mut self.states, &record, config) {
                Action::Drop => {
                    self.stats.dropped += 1;
                    return None;
                }
                Action::Emit => {
                    if unmapped_message {
                        self.stats.unmapped_emits += 1;
                    }
                }
            }
        }
        let tuple = TupleRecord::new(self.next_seq, record);
        self.next_seq += 1;
        self.stats.tuples_out += 1;
        Some(tuple)
    }

    pub fn stats(&self) -> TransformStats {
        self.stats
    }

    pub fn states(&self) -> &StateMap {
        &self.states
    }
}

/// Transforms a whole node stream. Without a config every record becomes a
/// tuple (seq 0..n-1); with one, only records the state machine emits
/// survive, with seq assigned in emission order.
pub fn transform_stream<I>(
    records: I,
    config: Option<&EliminationConfig>,
) -> (Vec<TupleRecord>, TransformStats)
where
    I: IntoIterator<Item = RawActivityRecord>,
{
    let mut transformer = Transformer::new(config.cloned());
    let tuples = records
        .into_iter()
        .filter_map(|r| transformer.push(r))
        .collect();
    (tuples, transformer.stats())
}
