//! Deterministic synthetic workload generator for a three-tier service.
//!
//! Emits per-node raw activity logs for a web/app/db deployment plus a
//! ground-truth table of every request, so downstream stages can be checked
//! against what was actually generated. A fixed seed reproduces the output
//! byte for byte.

use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

use crate::codec;
use crate::model::{ContextId, MessageId, PathClass, RawActivityRecord};

/// Tier hostnames, first tier first.
pub const HOSTS: [&str; 3] = ["web1", "app1", "db1"];
/// The node that receives client requests directly.
pub const FIRST_TIER_HOST: &str = "web1";

const PROGRAMS: [&str; 3] = ["httpd", "jboss", "mysqld"];
const PIDS: [u32; 3] = [100, 200, 300];
const TIER_IPS: [&str; 3] = ["10.0.0.1", "10.0.0.2", "10.0.0.3"];
const CLIENT_IP: &str = "10.0.0.9";
const APP_PORT: u16 = 8080;
const DB_PORT: u16 = 3306;
const EPHEMERAL_LO: u16 = 40000;
const EPHEMERAL_HI: u16 = 65000;

const WEB: usize = 0;
const APP: usize = 1;
const DB: usize = 2;

/// Mean and standard deviation of a message-size distribution, in bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeDist {
    pub mean: f64,
    pub stddev: f64,
}

impl SizeDist {
    pub fn new(mean: f64, stddev: f64) -> Self {
        SizeDist { mean, stddev }
    }
}

#[derive(Debug, Clone)]
pub struct WorkloadConfig {
    pub n_requests: u64,
    /// Fraction of requests served entirely by the first tier.
    pub simple_frac: f64,
    pub seed: u64,
    pub first_tier_port: u16,
    pub simple_size_dist: SizeDist,
    pub complex_size_dist: SizeDist,
    pub threads_per_tier: u32,
    pub mean_interarrival_ns: u64,
    pub service_time_ns: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            n_requests: 1000,
            simple_frac: 0.8,
            seed: 0,
            first_tier_port: 80,
            simple_size_dist: SizeDist::new(200.0, 20.0),
            complex_size_dist: SizeDist::new(800.0, 50.0),
            threads_per_tier: 8,
            mean_interarrival_ns: 1_000_000,
            service_time_ns: 100_000,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), SimgenError> {
        if !(0.0..=1.0).contains(&self.simple_frac) || self.simple_frac.is_nan() {
            return Err(SimgenError::InvalidFraction(self.simple_frac));
        }
        if self.threads_per_tier == 0 {
            return Err(SimgenError::NonPositive("threads_per_tier"));
        }
        if self.mean_interarrival_ns == 0 {
            return Err(SimgenError::NonPositive("mean_interarrival_ns"));
        }
        if self.service_time_ns == 0 {
            return Err(SimgenError::NonPositive("service_time_ns"));
        }
        if self.simple_size_dist.stddev < 0.0 || self.complex_size_dist.stddev < 0.0 {
            return Err(SimgenError::NonPositive("size stddev"));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimgenError {
    #[error("simple_frac must be within [0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

/// What one generated request looked like.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthEntry {
    pub request_id: u64,
    pub kind: PathClass,
    /// Size of the first message from the client, in bytes.
    pub first_size: u64,
    /// Handling thread contexts, one per tier touched.
    pub contexts: Vec<ContextId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub entries: Vec<GroundTruthEntry>,
}

/// Extremes of the first-message sizes, per request kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Separation {
    pub max_simple: u64,
    pub min_complex: u64,
}

impl Separation {
    /// True when every complex first message is strictly larger than every
    /// simple one, so a single threshold can split them perfectly.
    pub fn is_clean(&self) -> bool {
        self.min_complex > self.max_simple
    }
}

impl GroundTruth {
    pub fn count(&self, kind: PathClass) -> u64 {
        self.entries.iter().filter(|e| e.kind == kind).count() as u64
    }

    /// None when either kind is absent.
    pub fn separation(&self) -> Option<Separation> {
        let max_simple = self
            .entries
            .iter()
            .filter(|e| e.kind == PathClass::Simple)
            .map(|e| e.first_size)
            .max()?;
        let min_complex = self
            .entries
            .iter()
            .filter(|e| e.kind == PathClass::Complex)
            .map(|e| e.first_size)
            .min()?;
        Some(Separation {
            max_simple,
            min_complex,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "request_id,kind,first_size")?;
        for e in &self.entries {
            writeln!(w, "{},{},{}", e.request_id, e.kind, e.first_size)?;
        }
        Ok(())
    }

    /// Reads the CSV form back. Thread contexts are not persisted, so the
    /// `contexts` fields come back empty.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<GroundTruth, GroundTruthError> {
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if idx == 0 {
                if line != "request_id,kind,first_size" {
                    return Err(GroundTruthError::Malformed {
                        line: 1,
                        message: format!("unexpected header {line:?}"),
                    });
                }
                continue;
            }
            let malformed = |message: String| GroundTruthError::Malformed {
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(malformed(format!("expected 3 fields, found {}", fields.len())));
            }
            let request_id = fields[0]
                .parse()
                .map_err(|_| malformed(format!("bad request id {:?}", fields[0])))?;
            let kind = PathClass::parse(fields[1])
                .ok_or_else(|| malformed(format!("bad kind {:?}", fields[1])))?;
            let first_size = fields[2]
                .parse()
                .map_err(|_| malformed(format!("bad first size {:?}", fields[2])))?;
            entries.push(GroundTruthEntry {
                request_id,
                kind,
                first_size,
                contexts: Vec::new(),
            });
        }
        Ok(GroundTruth { entries })
    }
}

#[derive(Debug, Error)]
pub enum GroundTruthError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("ground truth line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// A generated workload: per-node raw logs (time sorted) plus ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticTrace {
    /// `(hostname, records)` in `HOSTS` order.
    pub node_logs: Vec<(String, Vec<RawActivityRecord>)>,
    pub ground_truth: GroundTruth,
}

impl SyntheticTrace {
    pub fn node(&self, hostname: &str) -> Option<&[RawActivityRecord]> {
        self.node_logs
            .iter()
            .find(|(h, _)| h == hostname)
            .map(|(_, r)| r.as_slice())
    }

    /// Writes `<host>.log` per node plus `ground_truth.csv`; returns the
    /// written paths with their byte sizes.
    pub fn write_dir(&self, dir: &Path) -> io::Result<Vec<(PathBuf, u64)>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (host, records) in &self.node_logs {
            let path = dir.join(format!("{host}.log"));
            let mut w = BufWriter::new(File::create(&path)?);
            let bytes = codec::write_raw(&mut w, records)?;
            w.flush()?;
            written.push((path, bytes));
        }
        let gt_path = dir.join("ground_truth.csv");
        let mut w = BufWriter::new(File::create(&gt_path)?);
        self.ground_truth.write_csv(&mut w)?;
        w.flush()?;
        let bytes = std::fs::metadata(&gt_path)?.len();
        written.push((gt_path, bytes));
        Ok(written)
    }
}

/// Deterministic request mix: exactly `round(simple_frac * n)` simple
/// requests, the rest complex, in a seed-determined order.
pub fn request_mix(n_requests: u64, simple_frac: f64, seed: u64) -> Vec<PathClass> {
    let n = n_requests as usize;
    let quota = (simple_frac * n_requests as f64).round() as usize;
    let quota = quota.min(n);
    let mut kinds = vec![PathClass::Simple; quota];
    kinds.resize(n, PathClass::Complex);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kinds.shuffle(&mut rng);
    kinds
}

struct PortAllocator {
    next: u16,
}

impl PortAllocator {
    fn new() -> Self {
        PortAllocator { next: EPHEMERAL_LO }
    }

    fn alloc(&mut self) -> u16 {
        let port = self.next;
        self.next = if self.next == EPHEMERAL_HI {
            EPHEMERAL_LO
        } else {
            self.next + 1
        };
        port
    }
}

struct SizeSampler {
    rng: ChaCha8Rng,
    simple: Normal<f64>,
    complex: Normal<f64>,
}

impl SizeSampler {
    fn draw(&mut self, kind: PathClass) -> u64 {
        let dist = match kind {
            PathClass::Simple => &self.simple,
            PathClass::Complex => &self.complex,
        };
        let v = dist.sample(&mut self.rng).round();
        if v < 1.0 {
            1
        } else {
            v as u64
        }
    }
}

/// Generates the full workload in memory.
///
/// Request arrivals are Poisson with the configured mean gap; every record on
/// a thread is spaced `service_time_ns` apart, a thread only starts its next
/// episode after the previous one ended, and a RECEIVE is always strictly
/// later than its SEND. All of it runs on one logical clock with zero skew.
pub fn generate_workload(config: &WorkloadConfig) -> Result<SyntheticTrace, SimgenError> {
    config.validate()?;

    let kinds = request_mix(config.n_requests, config.simple_frac, config.seed);

    let mut size_rng = ChaCha8Rng::seed_from_u64(config.seed);
    size_rng.set_stream(1);
    let mut arrival_rng = ChaCha8Rng::seed_from_u64(config.seed);
    arrival_rng.set_stream(2);

    let mut sizes = SizeSampler {
        rng: size_rng,
        simple: Normal::new(config.simple_size_dist.mean, config.simple_size_dist.stddev)
            .expect("validated stddev"),
        complex: Normal::new(config.complex_size_dist.mean, config.complex_size_dist.stddev)
            .expect("validated stddev"),
    };
    let interarrival = Exp::new(1.0 / config.mean_interarrival_ns as f64).expect("validated mean");

    let threads = config.threads_per_tier as usize;
    let mut free_at = vec![vec![0u64; threads]; HOSTS.len()];
    let mut logs: Vec<Vec<RawActivityRecord>> = vec![Vec::new(); HOSTS.len()];
    let mut ports = PortAllocator::new();
    let step = config.service_time_ns;

    let tier_ip = |tier: usize| TIER_IPS[tier].parse().expect("static ip");
    let client_ip = CLIENT_IP.parse().expect("static ip");
    let ctx_for = |tier: usize, thread: usize| {
        ContextId::new(HOSTS[tier], PROGRAMS[tier], PIDS[tier], thread as u32)
    };

    let mut clock = 0u64;
    let mut entries = Vec::with_capacity(kinds.len());

    for (rid, &kind) in kinds.iter().enumerate() {
        let gap = interarrival.sample(&mut arrival_rng).round().max(1.0) as u64;
        clock += gap;
        let arrival = clock;

        let thread = rid % threads;
        let web_ctx = ctx_for(WEB, thread);
        let first_size = sizes.draw(kind);

        // First message from the client, always aimed at the first-tier port.
        let client_msg = MessageId::new(
            client_ip,
            ports.alloc(),
            tier_ip(WEB),
            config.first_tier_port,
        );

        match kind {
            PathClass::Simple => {
                let reply_size = sizes.draw(kind);
                let b = arrival.max(free_at[WEB][thread]);
                let r = b + step;
                let s = r + step;
                let e = s + step;
                logs[WEB].extend([
                    RawActivityRecord::begin(b, web_ctx.clone()),
                    RawActivityRecord::receive(r, web_ctx.clone(), client_msg, first_size),
                    RawActivityRecord::send(s, web_ctx.clone(), client_msg.reversed(), reply_size),
                    RawActivityRecord::end(e, web_ctx.clone()),
                ]);
                free_at[WEB][thread] = e + 1;
                entries.push(GroundTruthEntry {
                    request_id: rid as u64,
                    kind,
                    first_size,
                    contexts: vec![web_ctx],
                });
            }
            PathClass::Complex => {
                let app_ctx = ctx_for(APP, thread);
                let db_ctx = ctx_for(DB, thread);
                let web_app = MessageId::new(tier_ip(WEB), ports.alloc(), tier_ip(APP), APP_PORT);
                let app_db = MessageId::new(tier_ip(APP), ports.alloc(), tier_ip(DB), DB_PORT);
                let sz_web_app = sizes.draw(kind);
                let sz_app_db = sizes.draw(kind);
                let sz_db_app = sizes.draw(kind);
                let sz_app_web = sizes.draw(kind);
                let sz_reply = sizes.draw(kind);

                // Web tier until it forwards to the app tier.
                let b1 = arrival.max(free_at[WEB][thread]);
                let r1 = b1 + step;
                let s1 = r1 + step;
                // App tier until it queries the database.
                let b2 = (s1 + step).max(free_at[APP][thread]);
                let r2 = b2 + step;
                let s2 = r2 + step;
                // Database tier round trip.
                let b3 = (s2 + step).max(free_at[DB][thread]);
                let r3 = b3 + step;
                let s3 = r3 + step;
                let e3 = s3 + step;
                // App tier resumes once the reply arrives.
                let r4 = s3 + step;
                let s4 = r4 + step;
                let e4 = s4 + step;
                // Web tier resumes and answers the client.
                let r5 = s4 + step;
                let s5 = r5 + step;
                let e5 = s5 + step;

                logs[WEB].extend([
                    RawActivityRecord::begin(b1, web_ctx.clone()),
                    RawActivityRecord::receive(r1, web_ctx.clone(), client_msg, first_size),
                    RawActivityRecord::send(s1, web_ctx.clone(), web_app, sz_web_app),
                    RawActivityRecord::receive(r5, web_ctx.clone(), web_app.reversed(), sz_app_web),
                    RawActivityRecord::send(s5, web_ctx.clone(), client_msg.reversed(), sz_reply),
                    RawActivityRecord::end(e5, web_ctx.clone()),
                ]);
                logs[APP].extend([
                    RawActivityRecord::begin(b2, app_ctx.clone()),
                    RawActivityRecord::receive(r2, app_ctx.clone(), web_app, sz_web_app),
                    RawActivityRecord::send(s2, app_ctx.clone(), app_db, sz_app_db),
                    RawActivityRecord::receive(r4, app_ctx.clone(), app_db.reversed(), sz_db_app),
                    RawActivityRecord::send(s4, app_ctx.clone(), web_app.reversed(), sz_app_web),
                    RawActivityRecord::end(e4, app_ctx.clone()),
                ]);
                logs[DB].extend([
                    RawActivityRecord::begin(b3, db_ctx.clone()),
                    RawActivityRecord::receive(r3, db_ctx.clone(), app_db, sz_app_db),
                    RawActivityRecord::send(s3, db_ctx.clone(), app_db.reversed(), sz_db_app),
                    RawActivityRecord::end(e3, db_ctx.clone()),
                ]);
                free_at[WEB][thread] = e5 + 1;
                free_at[APP][thread] = e4 + 1;
                free_at[DB][thread] = e3 + 1;
                entries.push(GroundTruthEntry {
                    request_id: rid as u64,
                    kind,
                    first_size,
                    contexts: vec![web_ctx, app_ctx, db_ctx],
                });
            }
        }
    }

    let node_logs = HOSTS
        .iter()
        .zip(logs)
        .map(|(host, mut records)| {
            records.sort_by_key(|r| r.timestamp_ns);
            (host.to_string(), records)
        })
        .collect();

    Ok(SyntheticTrace {
        node_logs,
        ground_truth: GroundTruth { entries },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ActivityType;
    use std::collections::BTreeMap;

    #[test]
    fn mix_meets_the_quota_exactly() {
        let kinds = request_mix(1000, 0.8, 42);
        assert_eq!(kinds.iter().filter(|k| **k == PathClass::Simple).count(), 800);
        assert_eq!(kinds.iter().filter(|k| **k == PathClass::Complex).count(), 200);
    }

    #[test]
    fn mix_boundaries() {
        let kinds = request_mix(10, 0.5, 7);
        assert_eq!(kinds.iter().filter(|k| **k == PathClass::Simple).count(), 5);
        let all_complex = request_mix(10, 0.0, 7);
        assert!(all_complex.iter().all(|k| *k == PathClass::Complex));
        let all_simple = request_mix(10, 1.0, 7);
        assert!(all_simple.iter().all(|k| *k == PathClass::Simple));
    }

    #[test]
    fn mix_matches_reported_experiment_scale() {
        let kinds = request_mix(12373, 0.8386, 7);
        assert_eq!(
            kinds.iter().filter(|k| **k == PathClass::Simple).count(),
            10376
        );
        assert_eq!(
            kinds.iter().filter(|k| **k == PathClass::Complex).count(),
            1997
        );
    }

    #[test]
    fn single_complex_request_record_counts() {
        let config = WorkloadConfig {
            n_requests: 1,
            simple_frac: 0.0,
            seed: 1,
            ..WorkloadConfig::default()
        };
        let trace = generate_workload(&config).unwrap();
        assert_eq!(trace.node("web1").unwrap().len(), 6);
        assert_eq!(trace.node("app1").unwrap().len(), 6);
        assert_eq!(trace.node("db1").unwrap().len(), 4);
    }

    #[test]
    fn simple_request_shape_on_the_first_tier() {
        let config = WorkloadConfig {
            n_requests: 1,
            simple_frac: 1.0,
            seed: 3,
            ..WorkloadConfig::default()
        };
        let trace = generate_workload(&config).unwrap();
        let web = trace.node("web1").unwrap();
        assert_eq!(web.len(), 4);
        assert!(trace.node("app1").unwrap().is_empty());
        assert!(trace.node("db1").unwrap().is_empty());
        let types: Vec<ActivityType> = web.iter().map(|r| r.atype).collect();
        assert_eq!(
            types,
            vec![
                ActivityType::Begin,
                ActivityType::Receive,
                ActivityType::Send,
                ActivityType::End
            ]
        );
        assert_eq!(web[1].msg.unwrap().dst_port, 80);
        assert!(web.windows(2).all(|w| w[0].timestamp_ns < w[1].timestamp_ns));
        assert_eq!(
            trace.ground_truth.entries[0].first_size,
            web[1].size_bytes
        );
    }

    #[test]
    fn identical_config_reproduces_identical_bytes() {
        let config = WorkloadConfig {
            n_requests: 50,
            seed: 99,
            ..WorkloadConfig::default()
        };
        let render = |trace: &SyntheticTrace| {
            let mut out = Vec::new();
            for (_, records) in &trace.node_logs {
                codec::write_raw(&mut out, records).unwrap();
            }
            trace.ground_truth.write_csv(&mut out).unwrap();
            out
        };
        let a = generate_workload(&config).unwrap();
        let b = generate_workload(&config).unwrap();
        assert_eq!(render(&a), render(&b));
    }

    #[test]
    fn sends_and_receives_pair_up_between_nodes() {
        let config = WorkloadConfig {
            n_requests: 200,
            seed: 11,
            ..WorkloadConfig::default()
        };
        let trace = generate_workload(&config).unwrap();
        let mut sends: BTreeMap<MessageId, Vec<u64>> = BTreeMap::new();
        let mut recvs: BTreeMap<MessageId, Vec<u64>> = BTreeMap::new();
        let mut all: Vec<&RawActivityRecord> = Vec::new();
        for (_, records) in &trace.node_logs {
            all.extend(records.iter());
        }
        let node_ips: Vec<std::net::Ipv4Addr> =
            TIER_IPS.iter().map(|ip| ip.parse().unwrap()).collect();
        for r in &all {
            if let Some(m) = r.msg {
                let inter_node = node_ips.contains(&m.src_ip) && node_ips.contains(&m.dst_ip);
                if !inter_node {
                    continue;
                }
                match r.atype {
                    ActivityType::Send => sends.entry(m).or_default().push(r.timestamp_ns),
                    ActivityType::Receive => recvs.entry(m).or_default().push(r.timestamp_ns),
                    _ => {}
                }
            }
        }
        let n_complex = trace.ground_truth.count(PathClass::Complex);
        let total_sends: usize = sends.values().map(Vec::len).sum();
        assert_eq!(total_sends as u64, 4 * n_complex);
        assert_eq!(sends.len(), recvs.len());
        for (id, mut s) in sends {
            let mut r = recvs.remove(&id).expect("receive for every send");
            assert_eq!(s.len(), r.len());
            s.sort_unstable();
            r.sort_unstable();
            for (ts_s, ts_r) in s.iter().zip(&r) {
                assert!(ts_r > ts_s, "receive must be strictly after send");
            }
        }
    }

    #[test]
    fn per_thread_records_form_clean_episodes() {
        let config = WorkloadConfig {
            n_requests: 120,
            threads_per_tier: 3,
            seed: 5,
            ..WorkloadConfig::default()
        };
        let trace = generate_workload(&config).unwrap();
        for (_, records) in &trace.node_logs {
            let mut by_ctx: BTreeMap<&ContextId, Vec<&RawActivityRecord>> = BTreeMap::new();
            for r in records {
                by_ctx.entry(&r.ctx).or_default().push(r);
            }
            for (_, recs) in by_ctx {
                let mut open = false;
                let mut last_ts = 0u64;
                for r in recs {
                    assert!(r.timestamp_ns > last_ts || last_ts == 0);
                    last_ts = r.timestamp_ns;
                    match r.atype {
                        ActivityType::Begin => {
                            assert!(!open, "episode started while previous still open");
                            open = true;
                        }
                        ActivityType::End => {
                            assert!(open, "END without BEGIN");
                            open = false;
                        }
                        _ => assert!(open, "message record outside an episode"),
                    }
                }
                assert!(!open, "unterminated episode");
            }
        }
    }

    #[test]
    fn default_distributions_separate_cleanly() {
        let config = WorkloadConfig {
            n_requests: 1000,
            seed: 42,
            ..WorkloadConfig::default()
        };
        let trace = generate_workload(&config).unwrap();
        let sep = trace.ground_truth.separation().unwrap();
        assert!(sep.is_clean(), "expected clean separation, got {sep:?}");
    }

    #[test]
    fn zero_requests_yield_empty_output() {
        let config = WorkloadConfig {
            n_requests: 0,
            ..WorkloadConfig::default()
        };
        let trace = generate_workload(&config).unwrap();
        assert!(trace.node_logs.iter().all(|(_, r)| r.is_empty()));
        assert!(trace.ground_truth.entries.is_empty());
    }

    #[test]
    fn rejects_bad_fractions() {
        let config = WorkloadConfig {
            simple_frac: 1.5,
            ..WorkloadConfig::default()
        };
        assert_eq!(
            generate_workload(&config).unwrap_err(),
            SimgenError::InvalidFraction(1.5)
        );
    }

    #[test]
    fn ground_truth_csv_round_trips() {
        let config = WorkloadConfig {
            n_requests: 25,
            seed: 8,
            ..WorkloadConfig::default()
        };
        let trace = generate_workload(&config).unwrap();
        let mut buf = Vec::new();
        trace.ground_truth.write_csv(&mut buf).unwrap();
        let back = GroundTruth::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.entries.len(), 25);
        for (a, b) in trace.ground_truth.entries.iter().zip(&back.entries) {
            assert_eq!(a.request_id, b.request_id);
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.first_size, b.first_size);
        }
    }
}
