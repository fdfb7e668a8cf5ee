//! Monte Carlo simulation of the collection process.
//!
//! Two samplers cover the two probability shapes:
//!
//! * [`AliasTable`] (Vose construction) draws coupons from an arbitrary
//!   distribution in O(1) per draw and counts draws until every type has
//!   been seen.
//! * [`sample_equal_fast`] exploits the equal-probability stage
//!   decomposition: the waiting time between the m-th and (m+1)-th
//!   distinct coupon is geometric with success probability `(n-m)/n`, so
//!   one trial costs O(n) inversions instead of O(n log n) draws.
//!
//! Reproducibility contract: trial `t` always runs on stream `t` of a
//! ChaCha cipher seeded with the configured seed, and trials are reduced
//! in fixed-size batches in index order. Reports are therefore bitwise
//! identical for a given `(seed, trials, first_trial)` regardless of how
//! many worker threads execute them.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ProbabilityVector;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SimulationError {
    #[error("at least one trial is required, got {trials}")]
    TooFewTrials { trials: u64 },
    #[error("reports cannot be merged: {reason}")]
    IncompatibleReports { reason: String },
    #[error("could not build the worker pool: {reason}")]
    WorkerPoolUnavailable { reason: String },
}

impl SimulationError {
    /// Stable identifier used on the CLI diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            SimulationError::TooFewTrials { .. } => "TooFewTrials",
            SimulationError::IncompatibleReports { .. } => "IncompatibleReports",
            SimulationError::WorkerPoolUnavailable { .. } => "WorkerPoolUnavailable",
        }
    }
}

/// Summary statistics over completed trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub trials: u64,
    pub sample_mean: f64,
    /// Unbiased (n-1 denominator) sample variance.
    pub sample_variance: f64,
    pub std_error_of_mean: f64,
    pub min_draws: u64,
    pub max_draws: u64,
    /// Draw-count frequencies, present when requested in the config.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<BTreeMap<u64, u64>>,
}

/// What to run: trial count, seed, and execution shape.
#[derive(Clone, Debug)]
pub struct TrialConfig {
    pub trials: u64,
    pub seed: u64,
    /// 0 means "use the current rayon pool"; any other value builds a
    /// dedicated pool of that many threads.
    pub workers: usize,
    pub want_histogram: bool,
    /// Global index of the first trial; lets one logical run be split
    /// across processes on disjoint `[first_trial, first_trial+trials)`
    /// ranges and merged afterwards.
    pub first_trial: u64,
}

impl TrialConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            workers: 0,
            want_histogram: false,
            first_trial: 0,
        }
    }
}

/// O(1) sampling from a fixed discrete distribution (Vose's alias method).
#[derive(Clone, Debug)]
pub struct AliasTable {
    threshold: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub fn new(pv: &ProbabilityVector) -> Self {
        let n = pv.n();
        let mut scaled: Vec<f64> = pv.probs().iter().map(|p| p * n as f64).collect();
        let mut threshold = vec![0.0f64; n];
        let mut alias = vec![0u32; n];
        let mut small: Vec<usize> = Vec::with_capacity(n);
        let mut large: Vec<usize> = Vec::with_capacity(n);
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        // Pop pairwise only while both stacks are nonempty; popping from
        // a tuple pattern would silently drop an index when one side runs
        // dry, leaving that cell's threshold at zero.
        while !small.is_empty() && !large.is_empty() {
            let s = small.pop().expect("checked nonempty");
            let l = large.pop().expect("checked nonempty");
            threshold[s] = scaled[s];
            alias[s] = l as u32;
            // Donate the slack of cell s from bucket l.
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        // Leftovers are exactly 1 up to rounding; saturate them.
        for l in large {
            threshold[l] = 1.0;
        }
        for s in small {
            threshold[s] = 1.0;
        }
        Self { threshold, alias }
    }

    pub fn n(&self) -> usize {
        self.threshold.len()
    }

    /// One coupon draw.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let cell = rng.random_range(0..self.threshold.len());
        if rng.random::<f64>() < self.threshold[cell] {
            cell
        } else {
            self.alias[cell] as usize
        }
    }

    /// Draws coupons until every type has appeared; returns the count.
    pub fn collection_length<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut missing = n;
        let mut draws: u64 = 0;
        while missing > 0 {
            let coupon = self.sample(rng);
            draws += 1;
            if !seen[coupon] {
                seen[coupon] = true;
                missing -= 1;
            }
        }
        draws
    }
}

/// One-shot convenience: a single collection-length trial for `pv`.
pub fn sample_collection_length<R: Rng + ?Sized>(pv: &ProbabilityVector, rng: &mut R) -> u64 {
    AliasTable::new(pv).collection_length(rng)
}

/// One collection-length trial for `n` equally likely coupons, as a sum
/// of inverse-transform geometric stage lengths.
pub fn sample_equal_fast<R: Rng + ?Sized>(n: usize, rng: &mut R) -> u64 {
    assert!(n >= 1, "need at least one coupon type");
    let nf = n as f64;
    // The first draw is always new.
    let mut total: u64 = 1;
    for seen in 1..n {
        // Stage misses with probability seen/n; the stage length is
        // ceil(ln u / ln(seen/n)) for u uniform on (0, 1].
        let miss_log = (seen as f64 / nf).ln();
        let u = 1.0 - rng.random::<f64>();
        let g = (u.ln() / miss_log).ceil();
        total += if g >= 1.0 { g as u64 } else { 1 };
    }
    total
}

/// Welford accumulator with Chan's parallel merge rule.
#[derive(Clone, Debug)]
struct MomentAcc {
    count: u64,
    mean: f64,
    m2: f64,
    min: u64,
    max: u64,
    histogram: Option<BTreeMap<u64, u64>>,
}

impl MomentAcc {
    fn new(want_histogram: bool) -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            min: u64::MAX,
            max: 0,
            histogram: want_histogram.then(BTreeMap::new),
        }
    }

    fn push(&mut self, draws: u64) {
        self.count += 1;
        let x = draws as f64;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(draws);
        self.max = self.max.max(draws);
        if let Some(h) = &mut self.histogram {
            *h.entry(draws).or_insert(0) += 1;
        }
    }

    fn merge(mut self, other: MomentAcc) -> MomentAcc {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * (other.count as f64 / total as f64);
        let m2 = self.m2
            + other.m2
            + delta * delta * (self.count as f64 * other.count as f64 / total as f64);
        let histogram = match (self.histogram.take(), other.histogram) {
            (Some(mut a), Some(b)) => {
                for (draws, freq) in b {
                    *a.entry(draws).or_insert(0) += freq;
                }
                Some(a)
            }
            _ => None,
        };
        MomentAcc {
            count: total,
            mean,
            m2,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
            histogram,
        }
    }

    fn from_report(report: &SimulationReport) -> Self {
        Self {
            count: report.trials,
            mean: report.sample_mean,
            m2: report.sample_variance * (report.trials.saturating_sub(1)) as f64,
            min: report.min_draws,
            max: report.max_draws,
            histogram: report.histogram.clone(),
        }
    }

    fn into_report(self) -> SimulationReport {
        let sample_variance = if self.count >= 2 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        };
        SimulationReport {
            trials: self.count,
            sample_mean: self.mean,
            sample_variance,
            std_error_of_mean: (sample_variance / self.count as f64).sqrt(),
            min_draws: self.min,
            max_draws: self.max,
            histogram: self.histogram,
        }
    }
}

/// Trials per reduction batch. Fixed (not derived from the worker count)
/// so the Welford/Chan reduction tree, and therefore every output bit,
/// is the same no matter how the batches are scheduled.
const BATCH: u64 = 16_384;

fn run_batches<F>(config: &TrialConfig, sampler: F) -> Result<SimulationReport, SimulationError>
where
    F: Fn(&mut ChaCha8Rng) -> u64 + Sync,
{
    if config.trials == 0 {
        return Err(SimulationError::TooFewTrials { trials: 0 });
    }
    let base = ChaCha8Rng::seed_from_u64(config.seed);
    let batches = config.trials.div_ceil(BATCH);
    let run = || {
        (0..batches)
            .into_par_iter()
            .map(|b| {
                let lo = config.first_trial + b * BATCH;
                let hi = (config.first_trial + config.trials).min(lo + BATCH);
                let mut acc = MomentAcc::new(config.want_histogram);
                for trial in lo..hi {
                    // Stream t of the pristine base cipher: substreams are
                    // independent and indexed by the global trial id.
                    let mut rng = base.clone();
                    rng.set_stream(trial);
                    acc.push(sampler(&mut rng));
                }
                acc
            })
            .collect::<Vec<MomentAcc>>()
            .into_iter()
            .fold(MomentAcc::new(config.want_histogram), MomentAcc::merge)
    };
    let acc = if config.workers == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| SimulationError::WorkerPoolUnavailable {
                reason: e.to_string(),
            })?
            .install(run)
    };
    Ok(acc.into_report())
}

/// Runs collection-length trials for an arbitrary probability vector.
pub fn run_trials(
    pv: &ProbabilityVector,
    config: &TrialConfig,
) -> Result<SimulationReport, SimulationError> {
    let table = AliasTable::new(pv);
    run_batches(config, |rng| table.collection_length(rng))
}

/// Runs collection-length trials for `n` equally likely coupons using the
/// geometric stage sampler.
pub fn run_trials_equal(n: usize, config: &TrialConfig) -> Result<SimulationReport, SimulationError> {
    assert!(n >= 1, "need at least one coupon type");
    run_batches(config, |rng| sample_equal_fast(n, rng))
}

/// Combines reports from disjoint trial ranges of the same experiment.
pub fn merge_reports(
    a: &SimulationReport,
    b: &SimulationReport,
) -> Result<SimulationReport, SimulationError> {
    if a.histogram.is_some() != b.histogram.is_some() {
        return Err(SimulationError::IncompatibleReports {
            reason: "one report carries a histogram and the other does not".into(),
        });
    }
    Ok(MomentAcc::from_report(a)
        .merge(MomentAcc::from_report(b))
        .into_report())
}
