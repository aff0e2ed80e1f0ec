use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use tracecull::codec;
use tracecull::correlate::{correlate, read_paths_jsonl, write_paths_jsonl};
use tracecull::eliminate::{transform_stream, EliminationConfig};
use tracecull::pipeline::{run_pipeline, PipelineConfig};
use tracecull::report::{summarize, BranchStats};
use tracecull::simgen::{generate_workload, SizeDist, WorkloadConfig};
use tracecull::threshold::{extract_first_sizes, kmeans2, DEFAULT_MAX_ITERS};

/// Exit code for empty or unusable inputs, as opposed to stage failures.
const EXIT_EMPTY_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "tracecull", version, about = "Reduce multi-tier trace logs to the causal paths worth keeping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic per-node activity logs plus ground truth
    Gen(GenArgs),
    /// Learn the first-message size threshold from a first-tier log
    Threshold(ThresholdArgs),
    /// Transform a raw log into tuple records, optionally eliminating
    Transform(TransformArgs),
    /// Correlate tuple files into causal paths
    Correlate(CorrelateArgs),
    /// Compare two correlated runs and write the reduction report
    Report(ReportArgs),
    /// Run the whole flow: gen, threshold, transform, correlate, report
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct WorkloadArgs {
    /// Number of requests to generate
    #[arg(long)]
    requests: u64,
    /// Fraction of requests answered by the first tier alone
    #[arg(long, default_value_t = 0.8)]
    simple_frac: f64,
    /// RNG seed; identical seeds reproduce identical bytes
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// First-message size distribution of simple requests, as MEAN,STDDEV
    #[arg(long, value_parser = parse_size_dist, default_value = "200,20")]
    simple_size: SizeDist,
    /// First-message size distribution of complex requests, as MEAN,STDDEV
    #[arg(long, value_parser = parse_size_dist, default_value = "800,50")]
    complex_size: SizeDist,
    /// Worker threads per tier
    #[arg(long, default_value_t = 8)]
    threads_per_tier: u32,
    /// Service port of the first tier
    #[arg(long, default_value_t = 80)]
    first_tier_port: u16,
    /// Mean request interarrival gap in nanoseconds
    #[arg(long, default_value_t = 1_000_000)]
    mean_interarrival_ns: u64,
    /// Gap between consecutive records of one thread, in nanoseconds
    #[arg(long, default_value_t = 100_000)]
    service_time_ns: u64,
}

impl WorkloadArgs {
    fn to_config(&self) -> WorkloadConfig {
        WorkloadConfig {
            n_requests: self.requests,
            simple_frac: self.simple_frac,
            seed: self.seed,
            first_tier_port: self.first_tier_port,
            simple_size_dist: self.simple_size,
            complex_size_dist: self.complex_size,
            threads_per_tier: self.threads_per_tier,
            mean_interarrival_ns: self.mean_interarrival_ns,
            service_time_ns: self.service_time_ns,
        }
    }
}

fn parse_size_dist(value: &str) -> Result<SizeDist, String> {
    let (mean, stddev) = value
        .split_once(',')
        .ok_or_else(|| format!("expected MEAN,STDDEV, got {value:?}"))?;
    let mean: f64 = mean.trim().parse().map_err(|_| format!("bad mean {mean:?}"))?;
    let stddev: f64 = stddev
        .trim()
        .parse()
        .map_err(|_| format!("bad stddev {stddev:?}"))?;
    Ok(SizeDist::new(mean, stddev))
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    /// Output directory for <host>.log files and ground_truth.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ThresholdArgs {
    /// First-tier raw log
    #[arg(long)]
    input: PathBuf,
    /// First-tier service port
    #[arg(long, default_value_t = 80)]
    port: u16,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: u32,
}

#[derive(Args)]
struct TransformArgs {
    /// Raw log to transform
    #[arg(long)]
    input: PathBuf,
    /// Tuple file to write
    #[arg(long)]
    out: PathBuf,
    /// Apply the elimination state machine (first-tier streams only)
    #[arg(long, requires = "threshold")]
    eliminate: bool,
    /// Size threshold separating simple from complex first messages
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 80)]
    first_tier_port: u16,
}

#[derive(Args)]
struct CorrelateArgs {
    /// Tuple files, one per node
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Paths file to write (JSON lines)
    #[arg(long)]
    out: PathBuf,
    /// Discard paths left with no SEND/RECEIVE records
    #[arg(long)]
    drop_degenerate: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// paths.jsonl of the branch without elimination
    #[arg(long)]
    before: PathBuf,
    /// paths.jsonl of the eliminated branch
    #[arg(long)]
    after: PathBuf,
    /// Raw log files both branches consumed, for byte accounting
    #[arg(long, num_args = 1..)]
    raw: Vec<PathBuf>,
    /// Report file to write; defaults to report.json beside --after
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    /// Output directory for every stage's files
    #[arg(long)]
    out: PathBuf,
    /// Reuse <host>.log files from this directory instead of generating
    #[arg(long, name = "in")]
    r#in: Option<PathBuf>,
    /// Skip threshold learning and use this value
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: u32,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Gen(args) => gen(args),
        Command::Threshold(args) => threshold(args),
        Command::Transform(args) => transform(args),
        Command::Correlate(args) => correlate_cmd(args),
        Command::Report(args) => report_cmd(args),
        Command::Pipeline(args) => pipeline_cmd(args),
    }
}

fn gen(args: GenArgs) -> anyhow::Result<ExitCode> {
    let config = args.workload.to_config();
    let trace = generate_workload(&config).context("generating workload")?;
    let written = trace
        .write_dir(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    for (path, bytes) in &written {
        println!("wrote {} ({bytes} bytes)", path.display());
    }
    if let Some(sep) = trace.ground_truth.separation() {
        if !sep.is_clean() {
            eprintln!(
                "warning: first-message sizes overlap (max simple {} >= min complex {}); \
                 no threshold can separate this run perfectly",
                sep.max_simple, sep.min_complex
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn threshold(args: ThresholdArgs) -> anyhow::Result<ExitCode> {
    let records = codec::read_raw_file(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let sizes: Vec<f64> = extract_first_sizes(&records, args.port)
        .into_iter()
        .map(|s| s as f64)
        .collect();
    if sizes.is_empty() {
        eprintln!(
            "no first messages on port {} found in {}",
            args.port,
            args.input.display()
        );
        return Ok(ExitCode::from(EXIT_EMPTY_INPUT));
    }
    let clusters = kmeans2(&sizes, args.max_iters).context("clustering sizes")?;
    println!("threshold={}", (clusters.c_low + clusters.c_high) / 2.0);
    println!(
        "samples={} c_low={} (n={}) c_high={} (n={}) iterations={} sse={}",
        sizes.len(),
        clusters.c_low,
        clusters.low_count(),
        clusters.c_high,
        clusters.high_count(),
        clusters.iterations,
        clusters.sse
    );
    Ok(ExitCode::SUCCESS)
}

fn transform(args: TransformArgs) -> anyhow::Result<ExitCode> {
    let records = codec::read_raw_file(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let config = args
        .eliminate
        .then(|| {
            EliminationConfig::with_port(
                args.threshold.expect("clap enforces --threshold"),
                args.first_tier_port,
            )
        });
    let (tuples, stats) = transform_stream(records, config.as_ref());
    let mut w = BufWriter::new(
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    );
    let tuple_bytes = codec::write_tuples(&mut w, &tuples)?;
    w.flush()?;
    let raw_bytes = fs::metadata(&args.input)?.len();
    println!(
        "records_in={} tuples_out={} dropped={} unmapped_emits={}",
        stats.records_in, stats.tuples_out, stats.dropped, stats.unmapped_emits
    );
    println!("raw_bytes={raw_bytes} tuple_bytes={tuple_bytes}");
    if stats.unmapped_emits > 0 {
        eprintln!(
            "warning: {} records from unmapped thread contexts were kept conservatively",
            stats.unmapped_emits
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn correlate_cmd(args: CorrelateArgs) -> anyhow::Result<ExitCode> {
    let mut tuples = Vec::new();
    let mut input_bytes = 0u64;
    for path in &args.inputs {
        tuples.extend(
            codec::read_tuple_file(path).with_context(|| format!("reading {}", path.display()))?,
        );
        input_bytes += fs::metadata(path)?.len();
    }
    let set = correlate(&tuples, args.drop_degenerate).context("correlating")?;
    let mut w = BufWriter::new(
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    );
    write_paths_jsonl(&mut w, &set, input_bytes)?;
    w.flush()?;
    let summary = set.summary(input_bytes);
    println!(
        "paths={} simple={} complex={} degenerate_dropped={} orphans={}",
        summary.paths, summary.simple, summary.complex, summary.degenerate_dropped, summary.orphans
    );
    for orphan in &set.orphans {
        eprintln!(
            "orphan ({}): {}",
            orphan.reason.as_str(),
            codec::serialize_tuple(&orphan.record)
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn report_cmd(args: ReportArgs) -> anyhow::Result<ExitCode> {
    let read_summary = |path: &PathBuf| -> anyhow::Result<_> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let (_, summary) = read_paths_jsonl(std::io::BufReader::new(file))
            .with_context(|| format!("reading {}", path.display()))?;
        Ok(summary)
    };
    let before_summary = read_summary(&args.before)?;
    let after_summary = read_summary(&args.after)?;
    let mut raw_bytes = 0u64;
    for path in &args.raw {
        raw_bytes += fs::metadata(path)
            .with_context(|| format!("sizing {}", path.display()))?
            .len();
    }
    let before = BranchStats::from_correlate(raw_bytes, &before_summary);
    let after = BranchStats::from_correlate(raw_bytes, &after_summary);
    let report = summarize(&before, &after).context("comparing branches")?;
    print!("{}", report.render_table());
    let out = args.out.unwrap_or_else(|| {
        args.after
            .parent()
            .map(|p| p.join("report.json"))
            .unwrap_or_else(|| PathBuf::from("report.json"))
    });
    let mut w = BufWriter::new(File::create(&out)?);
    report.write_json(&mut w)?;
    w.flush()?;
    println!("report written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn pipeline_cmd(args: PipelineArgs) -> anyhow::Result<ExitCode> {
    let config = PipelineConfig {
        workload: args.workload.to_config(),
        input_dir: args.r#in,
        out_dir: args.out,
        threshold_override: args.threshold,
        max_iters: args.max_iters,
    };
    let outcome = run_pipeline(&config)?;
    if let Some(t) = outcome.threshold {
        println!("threshold={t}");
    } else {
        println!("no first-tier samples; elimination skipped");
    }
    if outcome.separation_warning {
        eprintln!("warning: first-message sizes overlap; the threshold cannot be exact");
    }
    if outcome.unmapped_emits > 0 {
        eprintln!(
            "warning: {} records from unmapped thread contexts were kept conservatively",
            outcome.unmapped_emits
        );
    }
    print!("{}", outcome.report.render_table());
    println!("report written to {}", outcome.report_path.display());
    Ok(ExitCode::SUCCESS)
}
