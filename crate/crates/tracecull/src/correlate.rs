//! Correlates tuple records from all nodes into causal paths.
//!
//! Records are grouped into per-thread episodes, SEND/RECEIVE pairs are
//! matched into edges, and episodes are linked into trees rooted at the
//! episodes nobody sent to (the client side is uninstrumented, so first-tier
//! episodes become roots on their own). The result is deterministic and
//! independent of input file or line order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec;
use crate::model::{
    ActivityType, CausalPath, ContextId, Episode, MessageId, PathChild, PathClass, PathNode,
    TupleRecord,
};

/// A matched SEND/RECEIVE pair, as indices into the input tuple slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageEdge {
    pub send: usize,
    pub recv: usize,
}

/// Output of message matching.
#[derive(Debug, Default)]
pub struct MatchResult {
    pub edges: Vec<MessageEdge>,
    /// SEND/RECEIVE records left without a partner, e.g. the client side of
    /// an exchange that only one instrumented node saw.
    pub unmatched: Vec<usize>,
}

/// One thread's episode, as indices into the input tuple slice, ordered by
/// (timestamp, seq).
#[derive(Debug, Clone)]
pub struct EpisodeSpan {
    pub ctx: ContextId,
    pub records: Vec<usize>,
}

impl EpisodeSpan {
    pub fn materialize(&self, tuples: &[TupleRecord]) -> Episode {
        Episode::new(
            self.ctx.clone(),
            self.records.iter().map(|&i| tuples[i].clone()).collect(),
        )
    }
}

/// Output of episode building.
#[derive(Debug, Default)]
pub struct EpisodeSplit {
    pub episodes: Vec<EpisodeSpan>,
    /// Records outside any BEGIN..END span.
    pub orphans: Vec<usize>,
}

/// Why a record could not be placed in any path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrphanReason {
    NoEnclosingEpisode,
    UnmatchedMessage,
}

impl OrphanReason {
    pub fn as_str(self) -> &'static str {
        match self {
            OrphanReason::NoEnclosingEpisode => "no enclosing episode",
            OrphanReason::UnmatchedMessage => "unmatched message",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Orphan {
    pub record: TupleRecord,
    pub reason: OrphanReason,
}

/// Everything the correlator produced from one tuple set.
#[derive(Debug, Default)]
pub struct PathSet {
    /// Paths in canonical order (root episode start, then context, then seq).
    pub paths: Vec<CausalPath>,
    pub orphans: Vec<Orphan>,
    /// Message-less paths discarded because of `drop_degenerate`.
    pub degenerate_dropped: u64,
    /// Records inside those discarded paths, kept for conservation checks.
    pub degenerate_records: u64,
    /// Total SEND/RECEIVE records that found no partner anywhere.
    pub unmatched_messages: u64,
    pub input_records: u64,
}

impl PathSet {
    pub fn class_count(&self, class: PathClass) -> u64 {
        self.paths.iter().filter(|p| p.class == class).count() as u64
    }

    /// Records in paths + orphans + records in dropped degenerate paths;
    /// always equals `input_records`.
    pub fn record_count(&self) -> u64 {
        let in_paths: u64 = self.paths.iter().map(|p| p.n_records() as u64).sum();
        in_paths + self.orphans.len() as u64 + self.degenerate_records
    }

    pub fn summary(&self, input_bytes: u64) -> CorrelateSummary {
        CorrelateSummary {
            paths: self.paths.len() as u64,
            simple: self.class_count(PathClass::Simple),
            complex: self.class_count(PathClass::Complex),
            degenerate_dropped: self.degenerate_dropped,
            orphans: self.orphans.len() as u64,
            input_records: self.input_records,
            input_bytes,
        }
    }
}

#[derive(Debug, Error)]
pub enum CorrelateError {
    #[error("internal consistency violated: {0}")]
    Inconsistent(String),
}

/// Groups records by thread context, orders them by (timestamp, seq), and
/// splits at BEGIN boundaries. A span runs from its BEGIN through the next
/// END (inclusive); records before any BEGIN, or between an END and the next
/// BEGIN, fall out as orphans.
pub fn build_episodes(tuples: &[TupleRecord]) -> EpisodeSplit {
    let mut by_ctx: BTreeMap<&ContextId, Vec<usize>> = BTreeMap::new();
    for (i, t) in tuples.iter().enumerate() {
        by_ctx.entry(&t.record.ctx).or_default().push(i);
    }

    let mut split = EpisodeSplit::default();
    for (ctx, mut indices) in by_ctx {
        indices.sort_by_key(|&i| tuples[i].order_key());
        let mut current: Option<Vec<usize>> = None;
        for i in indices {
            match tuples[i].record.atype {
                ActivityType::Begin => {
                    if let Some(records) = current.take() {
                        split.episodes.push(EpisodeSpan {
                            ctx: ctx.clone(),
                            records,
                        });
                    }
                    current = Some(vec![i]);
                }
                ActivityType::End => match current.take() {
                    Some(mut records) => {
                        records.push(i);
                        split.episodes.push(EpisodeSpan {
                            ctx: ctx.clone(),
                            records,
                        });
                    }
                    None => split.orphans.push(i),
                },
                _ => match current.as_mut() {
                    Some(records) => records.push(i),
                    None => split.orphans.push(i),
                },
            }
        }
        if let Some(records) = current {
            // Truncated capture: BEGIN seen, END not.
            split.episodes.push(EpisodeSpan {
                ctx: ctx.clone(),
                records,
            });
        }
    }
    split
}

/// Matches SENDs to RECEIVEs per message identifier, first-in-first-out in
/// (timestamp, seq) order. A RECEIVE earlier than every remaining SEND of
/// its identifier cannot be caused by any of them and stays unmatched, which
/// keeps every edge ordered send-before-receive.
pub fn match_messages(tuples: &[TupleRecord]) -> MatchResult {
    let mut by_id: BTreeMap<MessageId, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, t) in tuples.iter().enumerate() {
        if let Some(msg) = t.record.msg {
            let entry = by_id.entry(msg).or_default();
            match t.record.atype {
                ActivityType::Send => entry.0.push(i),
                ActivityType::Receive => entry.1.push(i),
                _ => {}
            }
        }
    }

    let mut result = MatchResult::default();
    for (_, (mut sends, mut recvs)) in by_id {
        sends.sort_by_key(|&i| tuples[i].order_key());
        recvs.sort_by_key(|&i| tuples[i].order_key());
        let (mut si, mut ri) = (0, 0);
        while si < sends.len() && ri < recvs.len() {
            let send_ts = tuples[sends[si]].record.timestamp_ns;
            let recv_ts = tuples[recvs[ri]].record.timestamp_ns;
            if recv_ts < send_ts {
                result.unmatched.push(recvs[ri]);
                ri += 1;
            } else {
                result.edges.push(MessageEdge {
                    send: sends[si],
                    recv: recvs[ri],
                });
                si += 1;
                ri += 1;
            }
        }
        result.unmatched.extend(&sends[si..]);
        result.unmatched.extend(&recvs[ri..]);
    }
    result
}

/// Options for path assembly.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Discard paths whose flat sequence has no SEND/RECEIVE at all. Those
    /// appear when elimination strips a request down to BEGIN/END.
    pub drop_degenerate: bool,
}

/// Links episodes into trees along matched edges and assembles the paths.
///
/// An episode's trigger is its first RECEIVE: the message that put the
/// thread to work. The episode becomes a child of the episode holding the
/// trigger's SEND; with no trigger, or a trigger nothing instrumented sent
/// (the client side), it roots its own tree. Later RECEIVEs are replies to
/// the episode's own requests and never establish parentage. Children are
/// ordered by their spawning SEND.
pub fn build_paths(
    tuples: &[TupleRecord],
    split: &EpisodeSplit,
    matches: &MatchResult,
    options: BuildOptions,
) -> Result<PathSet, CorrelateError> {
    let mut record_episode: Vec<Option<usize>> = vec![None; tuples.len()];
    for (e, span) in split.episodes.iter().enumerate() {
        for &i in &span.records {
            record_episode[i] = Some(e);
        }
    }

    let mut send_of_recv: HashMap<usize, usize> = HashMap::new();
    for edge in &matches.edges {
        send_of_recv.insert(edge.recv, edge.send);
    }

    // The matched send behind each episode's trigger receive, if any.
    let mut inbound: Vec<Option<usize>> = vec![None; split.episodes.len()];
    for (e, span) in split.episodes.iter().enumerate() {
        let trigger = span
            .records
            .iter()
            .copied()
            .find(|&i| tuples[i].record.atype == ActivityType::Receive);
        let Some(trigger) = trigger else { continue };
        let Some(&send_idx) = send_of_recv.get(&trigger) else {
            continue;
        };
        match record_episode[send_idx] {
            Some(send_ep) if send_ep != e => inbound[e] = Some(send_idx),
            _ => {}
        }
    }

    let mut children: Vec<Vec<(u64, u64, usize)>> = vec![Vec::new(); split.episodes.len()];
    let mut roots = Vec::new();
    for (e, slot) in inbound.iter().enumerate() {
        match *slot {
            Some(send_idx) => {
                let parent = record_episode[send_idx].expect("send inside an episode");
                let key = tuples[send_idx].order_key();
                children[parent].push((key.0, key.1, e));
            }
            None => roots.push(e),
        }
    }
    for list in &mut children {
        list.sort_unstable();
    }

    fn build_node(
        episode: usize,
        tuples: &[TupleRecord],
        split: &EpisodeSplit,
        children: &[Vec<(u64, u64, usize)>],
        inbound: &[Option<usize>],
        visited: &mut usize,
    ) -> PathNode {
        *visited += 1;
        let mut node = PathNode::leaf(split.episodes[episode].materialize(tuples));
        for &(_, _, child) in &children[episode] {
            let send_idx = inbound[child].expect("child has an inbound edge");
            node.children.push(PathChild {
                send: tuples[send_idx].clone(),
                node: build_node(child, tuples, split, children, inbound, visited),
            });
        }
        node
    }

    let mut visited = 0usize;
    let mut paths = Vec::with_capacity(roots.len());
    for root in roots {
        let node = build_node(root, tuples, split, &children, &inbound, &mut visited);
        let path = CausalPath::from_root(node)
            .map_err(|e| CorrelateError::Inconsistent(format!("empty root episode: {e}")))?;
        paths.push(path);
    }
    if visited != split.episodes.len() {
        return Err(CorrelateError::Inconsistent(format!(
            "{} of {} episodes unreachable from any root (episode dependency cycle)",
            split.episodes.len() - visited,
            split.episodes.len()
        )));
    }

    paths.sort_by_key(path_sort_key);

    let mut set = PathSet {
        input_records: tuples.len() as u64,
        unmatched_messages: matches.unmatched.len() as u64,
        ..PathSet::default()
    };
    for path in paths {
        if options.drop_degenerate && !path.has_message_records() {
            set.degenerate_dropped += 1;
            set.degenerate_records += path.n_records() as u64;
        } else {
            set.paths.push(path);
        }
    }

    let unmatched: HashSet<usize> = matches.unmatched.iter().copied().collect();
    let mut orphans: Vec<&usize> = split.orphans.iter().collect();
    orphans.sort_by_key(|&&i| orphan_sort_key(&tuples[i]));
    for &i in orphans {
        let record = tuples[i].clone();
        let reason = if record.record.atype.is_message() && unmatched.contains(&i) {
            OrphanReason::UnmatchedMessage
        } else {
            OrphanReason::NoEnclosingEpisode
        };
        set.orphans.push(Orphan { record, reason });
    }

    Ok(set)
}

fn path_sort_key(path: &CausalPath) -> (u64, ContextId, u64) {
    let first = path.root.episode.first();
    (
        first.record.timestamp_ns,
        first.record.ctx.clone(),
        first.seq,
    )
}

fn orphan_sort_key(t: &TupleRecord) -> (u64, ContextId, u64) {
    (t.record.timestamp_ns, t.record.ctx.clone(), t.seq)
}

/// Full correlation over a merged tuple set.
pub fn correlate(tuples: &[TupleRecord], drop_degenerate: bool) -> Result<PathSet, CorrelateError> {
    let split = build_episodes(tuples);
    let matches = match_messages(tuples);
    build_paths(tuples, &split, &matches, BuildOptions { drop_degenerate })
}

/// Order-insensitive identity of a path: its flat records reduced to the
/// fields that survive re-transformation (no seq, no timestamps).
pub fn path_signature(
    path: &CausalPath,
) -> Vec<(ActivityType, ContextId, Option<MessageId>, u64)> {
    path.flat
        .iter()
        .map(|t| {
            (
                t.record.atype,
                t.record.ctx.clone(),
                t.record.msg,
                t.record.size_bytes,
            )
        })
        .collect()
}

/// One path, as written to the JSONL output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathLine {
    pub path_id: u64,
    pub class: PathClass,
    pub tiers: Vec<String>,
    pub n_records: u64,
    /// Tuple fields of each record, in flat order.
    pub records: Vec<Vec<String>>,
}

/// Trailing summary line of the JSONL output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryLine {
    pub summary: CorrelateSummary,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelateSummary {
    pub paths: u64,
    pub simple: u64,
    pub complex: u64,
    pub degenerate_dropped: u64,
    pub orphans: u64,
    /// Tuple records read, across all input files.
    pub input_records: u64,
    /// Bytes read, across all input files.
    pub input_bytes: u64,
}

/// Writes one JSON object per path plus a final summary line; returns the
/// bytes written.
pub fn write_paths_jsonl<W: Write>(
    mut w: W,
    set: &PathSet,
    input_bytes: u64,
) -> io::Result<u64> {
    let mut bytes = 0u64;
    for (id, path) in set.paths.iter().enumerate() {
        let line = PathLine {
            path_id: id as u64,
            class: path.class,
            tiers: path.tiers.clone(),
            n_records: path.n_records() as u64,
            records: path
                .flat
                .iter()
                .map(|t| codec::tuple_fields(t).to_vec())
                .collect(),
        };
        let json = serde_json::to_string(&line).expect("path line serializes");
        w.write_all(json.as_bytes())?;
        w.write_all(b"\n")?;
        bytes += json.len() as u64 + 1;
    }
    let summary = SummaryLine {
        summary: set.summary(input_bytes),
    };
    let json = serde_json::to_string(&summary).expect("summary serializes");
    w.write_all(json.as_bytes())?;
    w.write_all(b"\n")?;
    bytes += json.len() as u64 + 1;
    Ok(bytes)
}

#[derive(Debug, Error)]
pub enum ReadPathsError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("missing summary line")]
    MissingSummary,
    #[error("unexpected line {line} after the summary")]
    TrailingLine { line: usize },
}

/// Reads a paths JSONL file back into its lines and summary.
pub fn read_paths_jsonl<R: BufRead>(
    reader: R,
) -> Result<(Vec<PathLine>, CorrelateSummary), ReadPathsError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum JsonlLine {
        Path(PathLine),
        Summary(SummaryLine),
    }

    let mut paths = Vec::new();
    let mut summary: Option<CorrelateSummary> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if summary.is_some() {
            return Err(ReadPathsError::TrailingLine { line: idx + 1 });
        }
        let parsed: JsonlLine =
            serde_json::from_str(&line).map_err(|source| ReadPathsError::Json {
                line: idx + 1,
                source,
            })?;
        match parsed {
            JsonlLine::Path(p) => paths.push(p),
            JsonlLine::Summary(s) => summary = Some(s.summary),
        }
    }
    match summary {
        Some(s) => Ok((paths, s)),
        None => Err(ReadPathsError::MissingSummary),
    }
}
