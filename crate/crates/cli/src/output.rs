//! Rendering for the three output formats.
//!
//! Table mode prints floats with 12 significant digits for human eyes;
//! json and csv print the shortest round-trip representation so parsing
//! the output recovers the exact bits. Each report renders to one string
//! and is written in a single call that treats a closed downstream pipe
//! as a quiet exit rather than a panic.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use ccp_core::identities::IdentityReport;
use ccp_core::simulator::SimulationReport;

use crate::FormatArg;

/// Write a rendered report to stdout, dying quietly on a closed pipe
/// (e.g. `ccp ... | head`) like any well-behaved filter.
fn emit(text: &str) {
    use std::io::Write as _;
    let mut out = std::io::stdout().lock();
    let outcome = out.write_all(text.as_bytes()).and_then(|()| out.flush());
    if let Err(e) = outcome {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("failed writing to stdout: {e}");
    }
}

/// `x` with `sig` significant digits, plain notation where readable.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return format!("{:.*}", sig - 1, 0.0);
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    if exponent < -4 || exponent >= sig as i32 {
        format!("{:.*e}", sig - 1, x)
    } else {
        let decimals = (sig as i32 - 1 - exponent).max(0) as usize;
        format!("{:.*}", decimals, x)
    }
}

fn fmt12(x: f64) -> String {
    fmt_sig(x, 12)
}

fn opt_raw(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// The single-object moment answer shared by `mean`, `variance`, and
/// `moments`; absent fields serialize as null.
#[derive(Debug, Serialize, Deserialize)]
pub struct MomentsOutput {
    pub n: usize,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub second_moment_poissonized: Option<f64>,
    pub method: String,
    pub elapsed_ms: f64,
}

fn render_moments(out: &MomentsOutput, format: FormatArg) -> String {
    let mut text = String::new();
    match format {
        FormatArg::Table => {
            let _ = writeln!(text, "{:<26} {}", "n", out.n);
            let _ = writeln!(text, "{:<26} {}", "method", out.method);
            if let Some(mean) = out.mean {
                let _ = writeln!(text, "{:<26} {}", "mean", fmt12(mean));
            }
            if let Some(variance) = out.variance {
                let _ = writeln!(text, "{:<26} {}", "variance", fmt12(variance));
            }
            if let Some(second) = out.second_moment_poissonized {
                let _ = writeln!(text, "{:<26} {}", "second_moment_poissonized", fmt12(second));
            }
            let _ = writeln!(text, "{:<26} {:.3}", "elapsed_ms", out.elapsed_ms);
        }
        FormatArg::Json => {
            let _ = writeln!(
                text,
                "{}",
                serde_json::to_string(out).expect("plain struct serializes")
            );
        }
        FormatArg::Csv => {
            let _ = writeln!(text, "n,mean,variance,second_moment_poissonized,method,elapsed_ms");
            let _ = writeln!(
                text,
                "{},{},{},{},{},{}",
                out.n,
                opt_raw(out.mean),
                opt_raw(out.variance),
                opt_raw(out.second_moment_poissonized),
                out.method,
                out.elapsed_ms
            );
        }
    }
    text
}

pub fn print_moments(out: &MomentsOutput, format: FormatArg) {
    emit(&render_moments(out, format));
}

fn render_simulation(
    report: &SimulationReport,
    histogram_path: Option<&str>,
    elapsed_ms: f64,
    format: FormatArg,
) -> String {
    let mut text = String::new();
    match format {
        FormatArg::Table => {
            let _ = writeln!(text, "{:<26} {}", "trials", report.trials);
            let _ = writeln!(text, "{:<26} {}", "sample_mean", fmt12(report.sample_mean));
            let _ = writeln!(
                text,
                "{:<26} {}",
                "sample_variance",
                fmt12(report.sample_variance)
            );
            let _ = writeln!(
                text,
                "{:<26} {}",
                "std_error_of_mean",
                fmt12(report.std_error_of_mean)
            );
            let _ = writeln!(text, "{:<26} {}", "min_draws", report.min_draws);
            let _ = writeln!(text, "{:<26} {}", "max_draws", report.max_draws);
            let _ = writeln!(text, "{:<26} {:.3}", "elapsed_ms", elapsed_ms);
            if let (Some(path), Some(hist)) = (histogram_path, report.histogram.as_ref()) {
                let _ = writeln!(
                    text,
                    "{:<26} written to {path} ({} bins)",
                    "histogram",
                    hist.len()
                );
            }
        }
        FormatArg::Json => {
            let _ = writeln!(
                text,
                "{}",
                serde_json::to_string(report).expect("plain struct serializes")
            );
        }
        FormatArg::Csv => {
            let _ = writeln!(
                text,
                "trials,sample_mean,sample_variance,std_error_of_mean,min_draws,max_draws"
            );
            let _ = writeln!(
                text,
                "{},{},{},{},{},{}",
                report.trials,
                report.sample_mean,
                report.sample_variance,
                report.std_error_of_mean,
                report.min_draws,
                report.max_draws
            );
        }
    }
    text
}

pub fn print_simulation(
    report: &SimulationReport,
    histogram_path: Option<&str>,
    elapsed_ms: f64,
    format: FormatArg,
) {
    emit(&render_simulation(report, histogram_path, elapsed_ms, format));
}

pub fn render_histogram_csv(histogram: &BTreeMap<u64, u64>) -> String {
    let mut text = String::from("draws,count\n");
    for (draws, count) in histogram {
        let _ = writeln!(text, "{draws},{count}");
    }
    text
}

#[derive(Debug, Serialize)]
pub struct RouteRow {
    pub route: &'static str,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Serialize)]
pub struct SimulationCheck {
    #[serde(flatten)]
    pub report: SimulationReport,
    pub reference_mean: f64,
    pub deviation_in_std_errors: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct VerifyOutput {
    pub n: usize,
    pub routes: Vec<RouteRow>,
    pub simulation: Option<SimulationCheck>,
    pub max_pairwise_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub elapsed_ms: f64,
}

fn render_verify(out: &VerifyOutput, format: FormatArg) -> String {
    let mut text = String::new();
    match format {
        FormatArg::Table => {
            let _ = writeln!(text, "{:<22} {:<18} {:<18}", "route", "mean", "variance");
            for row in &out.routes {
                let _ = writeln!(
                    text,
                    "{:<22} {:<18} {:<18}",
                    row.route,
                    fmt12(row.mean),
                    fmt12(row.variance)
                );
            }
            if let Some(sim) = &out.simulation {
                let _ = writeln!(
                    text,
                    "{:<22} {:<18} {:<18} ({:.1} standard errors from {}, limit 5: {})",
                    "simulation",
                    fmt12(sim.report.sample_mean),
                    fmt12(sim.report.sample_variance),
                    sim.deviation_in_std_errors,
                    fmt12(sim.reference_mean),
                    if sim.passed { "PASS" } else { "FAIL" }
                );
            }
            let _ = writeln!(
                text,
                "max pairwise deviation {:.3e} (tolerance {:.1e}): {}",
                out.max_pairwise_deviation,
                out.tolerance,
                if out.passed { "PASS" } else { "FAIL" }
            );
        }
        FormatArg::Json => {
            let _ = writeln!(
                text,
                "{}",
                serde_json::to_string(out).expect("plain struct serializes")
            );
        }
        FormatArg::Csv => {
            let _ = writeln!(text, "route,mean,variance");
            for row in &out.routes {
                let _ = writeln!(text, "{},{},{}", row.route, row.mean, row.variance);
            }
            if let Some(sim) = &out.simulation {
                let _ = writeln!(
                    text,
                    "simulation,{},{}",
                    sim.report.sample_mean, sim.report.sample_variance
                );
            }
        }
    }
    text
}

pub fn print_verify(out: &VerifyOutput, format: FormatArg) {
    emit(&render_verify(out, format));
    if matches!(format, FormatArg::Csv) {
        // The csv body stays strictly tabular; the verdict goes to stderr
        // (the exit status carries it for machines).
        eprintln!(
            "max pairwise deviation {:.3e} (tolerance {:.1e}): {}",
            out.max_pairwise_deviation,
            out.tolerance,
            if out.passed { "PASS" } else { "FAIL" }
        );
    }
}

#[derive(Debug, Serialize)]
pub struct IdentitiesOutput {
    pub n: u64,
    pub tolerance: f64,
    pub reports: Vec<IdentityReport>,
    pub passed: bool,
    pub elapsed_ms: f64,
}

fn render_identities(out: &IdentitiesOutput, format: FormatArg) -> String {
    let mut text = String::new();
    match format {
        FormatArg::Table => {
            let _ = writeln!(
                text,
                "{:<22} {:>5} {:>2} {:<18} {:<18} {:>10} {:>10} {}",
                "name", "n", "r", "lhs", "rhs", "abs_diff", "rel_diff", "passed"
            );
            for r in &out.reports {
                let _ = writeln!(
                    text,
                    "{:<22} {:>5} {:>2} {:<18} {:<18} {:>10.2e} {:>10.2e} {}",
                    r.name,
                    r.n,
                    r.r,
                    fmt12(r.lhs),
                    fmt12(r.rhs),
                    r.abs_diff,
                    r.rel_diff,
                    r.passed
                );
            }
            let _ = writeln!(
                text,
                "identities at tolerance {:.1e}: {}",
                out.tolerance,
                if out.passed { "PASS" } else { "FAIL" }
            );
        }
        FormatArg::Json => {
            let _ = writeln!(
                text,
                "{}",
                serde_json::to_string(out).expect("plain struct serializes")
            );
        }
        FormatArg::Csv => {
            let _ = writeln!(text, "name,n,r,lhs,rhs,abs_diff,rel_diff,passed");
            for r in &out.reports {
                let _ = writeln!(
                    text,
                    "{},{},{},{},{},{},{},{}",
                    r.name, r.n, r.r, r.lhs, r.rhs, r.abs_diff, r.rel_diff, r.passed
                );
            }
        }
    }
    text
}

pub fn print_identities(out: &IdentitiesOutput, format: FormatArg) {
    emit(&render_identities(out, format));
}
