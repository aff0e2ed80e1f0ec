//! End-to-end run: generate (or reuse) logs, learn the threshold, transform
//! with and without elimination, correlate both branches, and compare.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec;
use crate::correlate::{correlate, write_paths_jsonl, CorrelateSummary};
use crate::eliminate::{transform_stream, EliminationConfig, TransformStats};
use crate::model::RawActivityRecord;
use crate::report::{summarize, BranchStats, ReductionReport};
use crate::simgen::{generate_workload, WorkloadConfig, FIRST_TIER_HOST, HOSTS};
use crate::threshold::{compute_threshold, extract_first_sizes, DEFAULT_MAX_ITERS};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub workload: WorkloadConfig,
    /// Reuse raw logs from this directory instead of generating.
    pub input_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Skip threshold learning and use this value.
    pub threshold_override: Option<f64>,
    pub max_iters: u32,
}

impl PipelineConfig {
    pub fn new(workload: WorkloadConfig, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            workload,
            input_dir: None,
            out_dir: out_dir.into(),
            threshold_override: None,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

/// What a pipeline run produced, beyond the files on disk.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub report: ReductionReport,
    /// Learned (or overridden) threshold; None when there was nothing to
    /// learn from and nothing to eliminate.
    pub threshold: Option<f64>,
    /// True when the generated first-message sizes overlap across kinds, so
    /// no threshold can separate them perfectly.
    pub separation_warning: bool,
    /// Case-4 records kept because their thread was never mapped.
    pub unmapped_emits: u64,
    pub report_path: PathBuf,
}

#[derive(Debug, Error)]
#[error("stage {stage} failed: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

fn stage<T, E>(name: &'static str, result: Result<T, E>) -> Result<T, PipelineError>
where
    E: std::error::Error + Send + Sync + 'static,
{
    result.map_err(|e| PipelineError {
        stage: name,
        source: Box::new(e),
    })
}

struct BranchFiles {
    tuple_bytes: u64,
    tuple_count: u64,
    summary: CorrelateSummary,
    stats: TransformStats,
}

fn run_branch(
    node_logs: &[(String, Vec<RawActivityRecord>)],
    dir: &Path,
    eliminate_first_tier: Option<&EliminationConfig>,
    drop_degenerate: bool,
) -> Result<BranchFiles, PipelineError> {
    stage("transform", fs::create_dir_all(dir))?;
    let mut merged = Vec::new();
    let mut tuple_bytes = 0u64;
    let mut stats = TransformStats::default();
    for (host, records) in node_logs {
        let config = (host == FIRST_TIER_HOST)
            .then_some(eliminate_first_tier)
            .flatten();
        let (tuples, node_stats) = transform_stream(records.iter().cloned(), config);
        let path = dir.join(format!("{host}.tup"));
        let mut w = BufWriter::new(stage("transform", File::create(&path))?);
        tuple_bytes += stage("transform", codec::write_tuples(&mut w, &tuples))?;
        stage("transform", std::io::Write::flush(&mut w))?;
        stats.records_in += node_stats.records_in;
        stats.tuples_out += node_stats.tuples_out;
        stats.dropped += node_stats.dropped;
        stats.unmapped_emits += node_stats.unmapped_emits;
        merged.extend(tuples);
    }

    let tuple_count = merged.len() as u64;
    let set = stage("correlate", correlate(&merged, drop_degenerate))?;
    let paths_file = dir.join("paths.jsonl");
    let mut w = BufWriter::new(stage("correlate", File::create(&paths_file))?);
    stage("correlate", write_paths_jsonl(&mut w, &set, tuple_bytes))?;
    stage("correlate", std::io::Write::flush(&mut w))?;

    Ok(BranchFiles {
        tuple_bytes,
        tuple_count,
        summary: set.summary(tuple_bytes),
        stats,
    })
}

/// Runs the three-step flow and writes every intermediate file plus
/// `report.json` under `config.out_dir`. Deterministic for a fixed seed.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    stage("setup", fs::create_dir_all(&config.out_dir))?;

    // Step 1: sample a workload, or reuse captured logs.
    let (node_logs, separation_warning, log_dir) = match &config.input_dir {
        Some(dir) => {
            let mut logs = Vec::new();
            for host in HOSTS {
                let path = dir.join(format!("{host}.log"));
                logs.push((host.to_string(), stage("load", codec::read_raw_file(&path))?));
            }
            (logs, false, dir.clone())
        }
        None => {
            let trace = stage("gen", generate_workload(&config.workload))?;
            stage("gen", trace.write_dir(&config.out_dir))?;
            let warning = trace
                .ground_truth
                .separation()
                .map(|s| !s.is_clean())
                .unwrap_or(false);
            (trace.node_logs, warning, config.out_dir.clone())
        }
    };
    let mut raw_bytes = 0u64;
    for host in HOSTS {
        let path = log_dir.join(format!("{host}.log"));
        raw_bytes += stage("setup", fs::metadata(&path))?.len();
    }

    // Step 2: learn the threshold from the first-tier log.
    let first_tier = node_logs
        .iter()
        .find(|(h, _)| h == FIRST_TIER_HOST)
        .map(|(_, r)| r.as_slice())
        .unwrap_or(&[]);
    let threshold = match config.threshold_override {
        Some(t) => Some(t),
        None => {
            let sizes: Vec<f64> =
                extract_first_sizes(first_tier, config.workload.first_tier_port)
                    .into_iter()
                    .map(|s| s as f64)
                    .collect();
            if sizes.is_empty() {
                None
            } else {
                Some(stage("threshold", compute_threshold(&sizes))?.value)
            }
        }
    };

    // Step 3: both branches, then the comparison.
    let elim_config = threshold.map(|t| {
        EliminationConfig::with_port(t, config.workload.first_tier_port)
    });
    let plain = run_branch(&node_logs, &config.out_dir.join("noelim"), None, false)?;
    let reduced = run_branch(
        &node_logs,
        &config.out_dir.join("elim"),
        elim_config.as_ref(),
        true,
    )?;

    let before = BranchStats::from_correlate(raw_bytes, &plain.summary);
    let after = BranchStats::from_correlate(raw_bytes, &reduced.summary);
    let report = stage("report", summarize(&before, &after))?;
    let report_path = config.out_dir.join("report.json");
    let mut w = BufWriter::new(stage("report", File::create(&report_path))?);
    stage("report", report.write_json(&mut w))?;
    stage("report", std::io::Write::flush(&mut w))?;

    debug_assert_eq!(plain.tuple_count, plain.summary.input_records);
    debug_assert_eq!(reduced.tuple_bytes, reduced.summary.input_bytes);

    Ok(PipelineOutcome {
        report,
        threshold,
        separation_warning,
        unmapped_emits: reduced.stats.unmapped_emits,
        report_path,
    })
}
