//! Multi-seed evaluation: sample → legalize → measure, then aggregate.
//!
//! Each seed runs the full pipeline independently: draw a placement with
//! guided reverse diffusion, legalize it greedily, then record the exact
//! wirelength of the legal layout, its residual overlap (zero when
//! legalization holds its contract), and the Manhattan displacement paid by
//! legalization. Seeds are embarrassingly parallel and run on a rayon pool;
//! per-seed results keep their input order, so the report list is
//! deterministic even though scheduling is not.
//!
//! The summary aggregates mean and *sample* standard deviation (n−1
//! denominator) over the successful seeds. A single success leaves the
//! standard deviation undefined; it is reported as 0 with the
//! `std_undefined` flag raised rather than silently. Per-seed failures never
//! abort the batch — they are recorded alongside the reports.
//!
//! The text rendering scales wirelength by 1e6 and displacement by 1e3,
//! matching the column conventions of published placement tables.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use diffplace_core::diffusion::DiffusionSchedule;
use diffplace_core::legalize::{legalize, overlap_area_exact};
use diffplace_core::netlist::Netlist;
use diffplace_core::objectives::hpwl_exact;
use diffplace_core::sampler::{sample, GuidanceConfig, NoisePredictor};

use crate::error::CliError;

/// Everything measured for one seed's sample→legalize→measure run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    /// Exact HPWL of the legalized placement, canvas units.
    pub hpwl_exact: f64,
    /// Exact pairwise overlap of the legalized placement; 0 when legal.
    pub overlap_area: f64,
    /// Total Manhattan displacement paid by legalization.
    pub displacement: f64,
    /// Macros legalization had to move at all.
    pub moved_count: usize,
    /// Wall-clock seconds for this seed (sampling + legalization + metrics).
    pub runtime_seconds: f64,
    pub config_hash: String,
}

/// A seed whose pipeline failed, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub seed: u64,
    pub error: String,
}

/// Mean and sample standard deviation of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Aggregate over all requested seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub config_hash: String,
    /// Seeds requested (successes + failures).
    pub num_seeds: usize,
    /// True when fewer than two seeds succeeded, so the sample standard
    /// deviation is undefined and reported as 0.
    pub std_undefined: bool,
    pub hpwl: MeanStd,
    pub overlap: MeanStd,
    pub displacement: MeanStd,
    pub reports: Vec<EvalReport>,
    pub failures: Vec<EvalFailure>,
}

/// Mean and sample standard deviation (n−1). Fewer than two values leave the
/// deviation undefined; both degenerate cases return 0 for the second slot.
pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd { mean: 0.0, std: 0.0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanStd { mean, std: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    MeanStd { mean, std: var.sqrt() }
}

/// Run one seed end to end.
pub fn evaluate_seed<P: NoisePredictor + ?Sized>(
    netlist: &Netlist,
    predictor: &P,
    sched: &DiffusionSchedule,
    guidance: &GuidanceConfig,
    seed: u64,
    config_hash: &str,
) -> Result<EvalReport, CliError> {
    let clock = Instant::now();
    let (raw, _trajectory) = sample(netlist, predictor, sched, guidance, seed)?;
    let legal = legalize(netlist, &raw)?;
    let hpwl = hpwl_exact(netlist, &legal.placement)?;
    let overlap = overlap_area_exact(netlist, &legal.placement)?;
    Ok(EvalReport {
        seed,
        hpwl_exact: hpwl,
        overlap_area: overlap,
        displacement: legal.displacement_total,
        moved_count: legal.moved_count,
        runtime_seconds: clock.elapsed().as_secs_f64(),
        config_hash: config_hash.to_string(),
    })
}

/// Evaluate every seed in parallel and aggregate. Per-seed failures are
/// recorded, not propagated; only an invalid netlist aborts up front.
pub fn evaluate<P: NoisePredictor + Sync + ?Sized>(
    netlist: &Netlist,
    predictor: &P,
    sched: &DiffusionSchedule,
    guidance: &GuidanceConfig,
    seeds: &[u64],
    config_hash: &str,
) -> Result<EvalSummary, CliError> {
    netlist.validate()?;
    let outcomes: Vec<(u64, Result<EvalReport, CliError>)> = seeds
        .par_iter()
        .map(|&seed| (seed, evaluate_seed(netlist, predictor, sched, guidance, seed, config_hash)))
        .collect();

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(report) => {
                if report.overlap_area > 0.0 {
                    failures.push(EvalFailure {
                        seed,
                        error: format!(
                            "legalized placement kept overlap area {}",
                            report.overlap_area
                        ),
                    });
                } else {
                    reports.push(report);
                }
            }
            Err(e) => failures.push(EvalFailure { seed, error: e.to_string() }),
        }
    }
    Ok(summarize(reports, failures, seeds.len(), config_hash))
}

/// Aggregate reports into a summary (pure; exposed for tests and callers
/// that produced reports elsewhere).
pub fn summarize(
    reports: Vec<EvalReport>,
    failures: Vec<EvalFailure>,
    num_seeds: usize,
    config_hash: &str,
) -> EvalSummary {
    let hpwl: Vec<f64> = reports.iter().map(|r| r.hpwl_exact).collect();
    let overlap: Vec<f64> = reports.iter().map(|r| r.overlap_area).collect();
    let disp: Vec<f64> = reports.iter().map(|r| r.displacement).collect();
    EvalSummary {
        config_hash: config_hash.to_string(),
        num_seeds,
        std_undefined: reports.len() < 2,
        hpwl: mean_std(&hpwl),
        overlap: mean_std(&overlap),
        displacement: mean_std(&disp),
        reports,
        failures,
    }
}

/// Render the summary as an aligned text table. Wirelength is printed ×1e−6
/// ("HPWL (x1e6)") and displacement ×1e−3, the usual table units; the final
/// row shows mean ± sample std per metric.
pub fn summary_table(summary: &EvalSummary) -> String {
    let header = ["seed", "HPWL (x1e6)", "overlap", "disp (x1e3)", "moved", "time (s)"];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in &summary.reports {
        rows.push(vec![
            r.seed.to_string(),
            format!("{:.6}", r.hpwl_exact / 1e6),
            format!("{:.6}", r.overlap_area),
            format!("{:.6}", r.displacement / 1e3),
            r.moved_count.to_string(),
            format!("{:.3}", r.runtime_seconds),
        ]);
    }
    rows.push(vec![
        "mean ± std".to_string(),
        format!("{:.6} ± {:.6}", summary.hpwl.mean / 1e6, summary.hpwl.std / 1e6),
        format!("{:.6} ± {:.6}", summary.overlap.mean, summary.overlap.std),
        format!(
            "{:.6} ± {:.6}",
            summary.displacement.mean / 1e3,
            summary.displacement.std / 1e3
        ),
        String::new(),
        String::new(),
    ]);

    let cols = header.len();
    let mut widths = vec![0usize; cols];
    for row in &rows {
        for (c, cell) in row.iter().enumerate() {
            widths[c] = widths[c].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in &rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            for _ in cell.chars().count()..widths[c] {
                line.push(' ');
            }
            line.push_str(cell);
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    if summary.std_undefined {
        out.push_str("std undefined for fewer than two successful seeds; reported as 0\n");
    }
    for f in &summary.failures {
        out.push_str(&format!("seed {} failed: {}\n", f.seed, f.error));
    }
    out.push_str(&format!(
        "config {}  seeds {}  ok {}  failed {}\n",
        summary.config_hash,
        summary.num_seeds,
        summary.reports.len(),
        summary.failures.len()
    ));
    out
}
