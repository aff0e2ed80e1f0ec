//! Before/after reduction accounting and table rendering.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::correlate::CorrelateSummary;

/// Byte and count totals of one pipeline branch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BranchStats {
    /// On-disk size of the raw logs the branch consumed.
    pub raw_bytes: u64,
    /// On-disk size of the branch's tuple files.
    pub tuple_bytes: u64,
    pub tuple_count: u64,
    pub path_count: u64,
    pub simple_paths: u64,
    pub complex_paths: u64,
    pub degenerate_dropped: u64,
}

impl BranchStats {
    pub fn from_correlate(raw_bytes: u64, summary: &CorrelateSummary) -> Self {
        BranchStats {
            raw_bytes,
            tuple_bytes: summary.input_bytes,
            tuple_count: summary.input_records,
            path_count: summary.paths,
            simple_paths: summary.simple,
            complex_paths: summary.complex,
            degenerate_dropped: summary.degenerate_dropped,
        }
    }
}

/// The two-row comparison between the plain and the eliminating branch.
#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport {
    pub raw_bytes: u64,
    pub tuple_bytes_before: u64,
    pub tuple_bytes_after: u64,
    pub tuple_count_before: u64,
    pub tuple_count_after: u64,
    pub path_count_before: u64,
    pub path_count_after: u64,
    pub simple_paths_before: u64,
    pub complex_paths_before: u64,
    pub simple_paths_after: u64,
    pub complex_paths_after: u64,
    pub degenerate_dropped: u64,
    /// 100 * (before - after) / before, rounded to two decimals; 0 when
    /// before is 0.
    pub tuple_reduction_pct: f64,
    pub path_reduction_pct: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("branches consumed different raw logs: {before} bytes vs {after} bytes")]
    MismatchedInputs { before: u64, after: u64 },
}

fn reduction_pct(before: u64, after: u64) -> f64 {
    if before == 0 {
        return 0.0;
    }
    let pct = 100.0 * (before as f64 - after as f64) / before as f64;
    (pct * 100.0).round() / 100.0
}

/// Builds the reduction report from the two branches of one run.
pub fn summarize(before: &BranchStats, after: &BranchStats) -> Result<ReductionReport, ReportError> {
    if before.raw_bytes != after.raw_bytes {
        return Err(ReportError::MismatchedInputs {
            before: before.raw_bytes,
            after: after.raw_bytes,
        });
    }
    Ok(ReductionReport {
        raw_bytes: before.raw_bytes,
        tuple_bytes_before: before.tuple_bytes,
        tuple_bytes_after: after.tuple_bytes,
        tuple_count_before: before.tuple_count,
        tuple_count_after: after.tuple_count,
        path_count_before: before.path_count,
        path_count_after: after.path_count,
        simple_paths_before: before.simple_paths,
        complex_paths_before: before.complex_paths,
        simple_paths_after: after.simple_paths,
        complex_paths_after: after.complex_paths,
        degenerate_dropped: after.degenerate_dropped,
        tuple_reduction_pct: reduction_pct(before.tuple_bytes, after.tuple_bytes),
        path_reduction_pct: reduction_pct(before.path_count, after.path_count),
    })
}

impl ReductionReport {
    /// Reduction percentages rounded to whole percent, e.g. `"84%"`.
    pub fn tuple_reduction_display(&self) -> String {
        format!("{}%", self.tuple_reduction_pct.round() as i64)
    }

    pub fn path_reduction_display(&self) -> String {
        format!("{}%", self.path_reduction_pct.round() as i64)
    }

    /// Renders the three-column comparison table plus the reduction lines.
    pub fn render_table(&self) -> String {
        let rows = [
            (
                "No elimination",
                self.tuple_bytes_before,
                self.tuple_count_before,
                self.path_count_before,
                self.simple_paths_before,
                self.complex_paths_before,
            ),
            (
                "Elimination",
                self.tuple_bytes_after,
                self.tuple_count_after,
                self.path_count_after,
                self.simple_paths_after,
                self.complex_paths_after,
            ),
        ];
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>16} {:>24} {:>20}",
            "", "Original logs", "Tuple Records", "Causal Paths"
        );
        for (label, tuple_bytes, tuple_count, paths, simple, complex) in rows {
            let _ = writeln!(
                out,
                "{:<16} {:>16} {:>24} {:>20}",
                label,
                format!("{} B", self.raw_bytes),
                format!("{} B ({})", tuple_bytes, tuple_count),
                format!("{} [{}S/{}C]", paths, simple, complex),
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "tuple reduction: {} ({:.2}%)",
            self.tuple_reduction_display(),
            self.tuple_reduction_pct
        );
        let _ = writeln!(
            out,
            "path reduction:  {} ({:.2}%)",
            self.path_reduction_display(),
            self.path_reduction_pct
        );
        if self.degenerate_dropped > 0 {
            let _ = writeln!(
                out,
                "degenerate paths dropped after elimination: {}",
                self.degenerate_dropped
            );
        }
        out
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        w.write_all(json.as_bytes())?;
        w.write_all(b"\n")
    }
}
