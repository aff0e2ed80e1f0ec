//! Core domain types shared by every pipeline stage.

use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four activity kinds captured on a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivityType {
    Begin,
    End,
    Send,
    Receive,
}

impl ActivityType {
    pub fn as_str(self) -> &'static str {
        match self {
            ActivityType::Begin => "BEGIN",
            ActivityType::End => "END",
            ActivityType::Send => "SEND",
            ActivityType::Receive => "RECEIVE",
        }
    }

    pub fn parse(s: &str) -> Option<ActivityType> {
        match s {
            "BEGIN" => Some(ActivityType::Begin),
            "END" => Some(ActivityType::End),
            "SEND" => Some(ActivityType::Send),
            "RECEIVE" => Some(ActivityType::Receive),
            _ => None,
        }
    }

    /// SEND and RECEIVE records carry a message identifier; BEGIN and END do not.
    pub fn is_message(self) -> bool {
        matches!(self, ActivityType::Send | ActivityType::Receive)
    }
}

impl fmt::Display for ActivityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies one worker thread across the whole trace.
///
/// Thread IDs collide across processes and nodes, so the full
/// (hostname, program, pid, tid) quadruple is the thread key everywhere.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContextId {
    pub hostname: String,
    pub program: String,
    pub pid: u32,
    pub tid: u32,
}

impl ContextId {
    pub fn new(
        hostname: impl Into<String>,
        program: impl Into<String>,
        pid: u32,
        tid: u32,
    ) -> Self {
        ContextId {
            hostname: hostname.into(),
            program: program.into(),
            pid,
            tid,
        }
    }
}

impl fmt::Display for ContextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.hostname, self.program, self.pid, self.tid
        )
    }
}

/// Four-endpoint identity of one logical message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MessageId {
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
}

impl MessageId {
    pub fn new(src_ip: Ipv4Addr, src_port: u16, dst_ip: Ipv4Addr, dst_port: u16) -> Self {
        MessageId {
            src_ip,
            src_port,
            dst_ip,
            dst_port,
        }
    }

    /// The identifier of a reply on the same connection.
    pub fn reversed(&self) -> MessageId {
        MessageId {
            src_ip: self.dst_ip,
            src_port: self.dst_port,
            dst_ip: self.src_ip,
            dst_port: self.src_port,
        }
    }
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}->{}:{}",
            self.src_ip, self.src_port, self.dst_ip, self.dst_port
        )
    }
}

/// One instrumented event as logged on a node.
///
/// `msg` is present exactly on SEND/RECEIVE records, and `size_bytes` is 0
/// on BEGIN/END records. The constructors below uphold both invariants.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawActivityRecord {
    pub atype: ActivityType,
    pub timestamp_ns: u64,
    pub ctx: ContextId,
    pub msg: Option<MessageId>,
    pub size_bytes: u64,
}

impl RawActivityRecord {
    pub fn begin(timestamp_ns: u64, ctx: ContextId) -> Self {
        RawActivityRecord {
            atype: ActivityType::Begin,
            timestamp_ns,
            ctx,
            msg: None,
            size_bytes: 0,
        }
    }

    pub fn end(timestamp_ns: u64, ctx: ContextId) -> Self {
        RawActivityRecord {
            atype: ActivityType::End,
            timestamp_ns,
            ctx,
            msg: None,
            size_bytes: 0,
        }
    }

    pub fn send(timestamp_ns: u64, ctx: ContextId, msg: MessageId, size_bytes: u64) -> Self {
        RawActivityRecord {
            atype: ActivityType::Send,
            timestamp_ns,
            ctx,
            msg: Some(msg),
            size_bytes,
        }
    }

    pub fn receive(timestamp_ns: u64, ctx: ContextId, msg: MessageId, size_bytes: u64) -> Self {
        RawActivityRecord {
            atype: ActivityType::Receive,
            timestamp_ns,
            ctx,
            msg: Some(msg),
            size_bytes,
        }
    }

    /// True when the field combination is expressible in the log formats.
    pub fn is_well_formed(&self) -> bool {
        let msg_ok = self.msg.is_some() == self.atype.is_message();
        let size_ok = self.atype.is_message() || self.size_bytes == 0;
        msg_ok && size_ok
    }
}

/// An activity in normalized tuple form, tagged with its per-node emission index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TupleRecord {
    pub seq: u64,
    pub record: RawActivityRecord,
}

impl TupleRecord {
    pub fn new(seq: u64, record: RawActivityRecord) -> Self {
        TupleRecord { seq, record }
    }

    /// Sort key that is unique within one node's stream.
    pub fn order_key(&self) -> (u64, u64) {
        (self.record.timestamp_ns, self.seq)
    }
}

/// Whether a causal path stays on one tier or crosses at least two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PathClass {
    Simple,
    Complex,
}

impl PathClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PathClass::Simple => "SIMPLE",
            PathClass::Complex => "COMPLEX",
        }
    }

    pub fn parse(s: &str) -> Option<PathClass> {
        match s {
            "SIMPLE" => Some(PathClass::Simple),
            "COMPLEX" => Some(PathClass::Complex),
            _ => None,
        }
    }
}

impl fmt::Display for PathClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One thread's records from a BEGIN to its matching END, inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub ctx: ContextId,
    pub records: Vec<TupleRecord>,
}

impl Episode {
    pub fn new(ctx: ContextId, records: Vec<TupleRecord>) -> Self {
        Episode { ctx, records }
    }

    pub fn hostname(&self) -> &str {
        &self.ctx.hostname
    }

    pub fn first(&self) -> &TupleRecord {
        &self.records[0]
    }

    /// Checks the episode shape: non-empty, uniform context, leading BEGIN,
    /// no interior BEGIN/END, END only in last position, timestamps
    /// non-decreasing. A trailing END may be absent (truncated capture).
    pub fn is_well_formed(&self) -> bool {
        if self.records.is_empty() {
            return false;
        }
        if self.records.iter().any(|r| r.record.ctx != self.ctx) {
            return false;
        }
        if self.records[0].record.atype != ActivityType::Begin {
            return false;
        }
        let last = self.records.len() - 1;
        for (i, r) in self.records.iter().enumerate() {
            if i > 0 && r.record.atype == ActivityType::Begin {
                return false;
            }
            if r.record.atype == ActivityType::End && i != last {
                return false;
            }
            if i > 0 && r.record.timestamp_ns < self.records[i - 1].record.timestamp_ns {
                return false;
            }
        }
        true
    }
}

/// A subtree of the causal path: one episode plus the episodes it caused,
/// each linked through the SEND record that spawned it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathNode {
    pub episode: Episode,
    pub children: Vec<PathChild>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathChild {
    pub send: TupleRecord,
    pub node: PathNode,
}

impl PathNode {
    pub fn leaf(episode: Episode) -> Self {
        PathNode {
            episode,
            children: Vec::new(),
        }
    }

    fn collect_flat(&self, out: &mut Vec<TupleRecord>) {
        out.extend(self.episode.records.iter().cloned());
        for child in &self.children {
            child.node.collect_flat(out);
        }
    }
}

/// All activities caused by one client request, as a tree of episodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalPath {
    pub root: PathNode,
    /// Depth-first concatenation of episode records; within each episode the
    /// records keep their (timestamp, seq) order.
    pub flat: Vec<TupleRecord>,
    /// Hostnames touched, in order of first appearance in `flat`.
    pub tiers: Vec<String>,
    pub class: PathClass,
}

impl CausalPath {
    /// Derives the flat sequence, tier list, and class from an episode tree.
    pub fn from_root(root: PathNode) -> Result<CausalPath, ModelError> {
        let mut flat = Vec::new();
        root.collect_flat(&mut flat);
        let class = classify_records(&flat)?;
        let mut tiers: Vec<String> = Vec::new();
        for rec in &flat {
            let host = &rec.record.ctx.hostname;
            if !tiers.iter().any(|t| t == host) {
                tiers.push(host.clone());
            }
        }
        Ok(CausalPath {
            root,
            flat,
            tiers,
            class,
        })
    }

    pub fn n_records(&self) -> usize {
        self.flat.len()
    }

    /// A path with no SEND/RECEIVE left is degenerate: nothing connects it
    /// to anything, so it carries no interaction information.
    pub fn has_message_records(&self) -> bool {
        self.flat.iter().any(|r| r.record.atype.is_message())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("cannot classify an empty path")]
    EmptyPath,
}

/// Classifies a record sequence by the number of distinct hostnames it touches:
/// one tier is SIMPLE, two or more is COMPLEX.
pub fn classify_records(records: &[TupleRecord]) -> Result<PathClass, ModelError> {
    let mut first_host: Option<&str> = None;
    for rec in records {
        let host = rec.record.ctx.hostname.as_str();
        match first_host {
            None => first_host = Some(host),
            Some(h) if h != host => return Ok(PathClass::Complex),
            Some(_) => {}
        }
    }
    if first_host.is_none() {
        return Err(ModelError::EmptyPath);
    }
    Ok(PathClass::Simple)
}

/// Recomputes a path's class from its flat record sequence.
pub fn classify_path(path: &CausalPath) -> Result<PathClass, ModelError> {
    classify_records(&path.flat)
}

/// Projects the thread key a record belongs to.
pub fn thread_key(record: &RawActivityRecord) -> &ContextId {
    &record.ctx
}
