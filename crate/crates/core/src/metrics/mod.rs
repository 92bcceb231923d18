//! Ground-truth-aware scoring of hypothesized blindspots.
//!
//! Hypotheses and true blindspots are plain image-id sets, so the metrics are
//! agnostic to how either side was produced.

mod aggregate;
mod failures;

pub use aggregate::{
    aggregate, aggregate_with, factor_grouping, Aggregate, BlindspotRecord, IntervalBasis,
};
pub use failures::{aggregate_failures, failure_breakdown, FailureBreakdown, TruthFailure};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::scenegen::ImageId;

pub type ImageSet = BTreeSet<ImageId>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricThresholds {
    pub lambda_p: f64,
    pub lambda_r: f64,
}

impl Default for MetricThresholds {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl MetricThresholds {
    pub const fn synthetic() -> Self {
        MetricThresholds {
            lambda_p: 0.8,
            lambda_r: 0.8,
        }
    }

    /// More lenient thresholds for real-image ground truth.
    pub const fn real_data() -> Self {
        MetricThresholds {
            lambda_p: 0.5,
            lambda_r: 0.5,
        }
    }

    pub const fn uniform(lambda: f64) -> Self {
        MetricThresholds {
            lambda_p: lambda,
            lambda_r: lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |l: f64| l > 0.0 && l <= 1.0;
        if ok(self.lambda_p) && ok(self.lambda_r) {
            Ok(())
        } else {
            Err(Error::Invalid(format!("thresholds {self:?} outside (0, 1]")))
        }
    }
}

/// Blindspot precision |hyp ∩ truth| / |hyp|.
pub fn bp(hyp: &ImageSet, truth: &ImageSet) -> Result<f64> {
    if hyp.is_empty() {
        return Err(Error::EmptyHypothesis);
    }
    Ok(hyp.intersection(truth).count() as f64 / hyp.len() as f64)
}

/// Recall of `truth` by the union of the hypotheses that belong to it.
pub fn br(hyps: &[ImageSet], truth: &ImageSet, lambda_p: f64) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let mut covered = ImageSet::new();
    for h in hyps {
        if bp(h, truth)? >= lambda_p {
            covered.extend(h.intersection(truth));
        }
    }
    Ok(covered.len() as f64 / truth.len() as f64)
}

pub fn covers(hyps: &[ImageSet], truth: &ImageSet, th: &MetricThresholds) -> Result<bool> {
    Ok(br(hyps, truth, th.lambda_p)? >= th.lambda_r)
}

/// Fraction of true blindspots covered.
pub fn dr(hyps: &[ImageSet], truths: &[ImageSet], th: &MetricThresholds) -> Result<f64> {
    if truths.is_empty() {
        return Err(Error::Invalid("discovery rate needs at least one true blindspot".into()));
    }
    let mut hits = 0usize;
    for t in truths {
        if covers(hyps, t, th)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / truths.len() as f64)
}

/// Length of the shortest prefix of `hyps` reaching the full list's DR, or
/// `None` when nothing is discovered.
pub fn top_u(hyps: &[ImageSet], truths: &[ImageSet], th: &MetricThresholds) -> Result<Option<usize>> {
    let full = dr(hyps, truths, th)?;
    if full == 0.0 {
        return Ok(None);
    }
    for u in 1..=hyps.len() {
        if dr(&hyps[..u], truths, th)? == full {
            return Ok(Some(u));
        }
    }
    unreachable!("the full list reaches its own DR")
}

/// Share of the top-u hypotheses that belong to no true blindspot; absent when DR is 0.
pub fn fdr(hyps: &[ImageSet], truths: &[ImageSet], th: &MetricThresholds) -> Result<Option<f64>> {
    let Some(u) = top_u(hyps, truths, th)? else {
        return Ok(None);
    };
    let mut false_hits = 0usize;
    for h in &hyps[..u] {
        let mut best = 0.0f64;
        for t in truths {
            best = best.max(bp(h, t)?);
        }
        if best < th.lambda_p {
            false_hits += 1;
        }
    }
    Ok(Some(false_hits as f64 / u as f64))
}

/// All metrics for one hypothesis list against one set of true blindspots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub thresholds: MetricThresholds,
    pub n_hypotheses: usize,
    /// Per true blindspot.
    pub recall: Vec<f64>,
    pub covered: Vec<bool>,
    pub dr: f64,
    pub fdr: Option<f64>,
    pub top_u: Option<usize>,
    /// Per hypothesis, the best precision against any true blindspot.
    pub best_precision: Vec<f64>,
    /// Failure categories for every uncovered true blindspot.
    pub failures: Vec<TruthFailure>,
}

pub fn evaluate(hyps: &[ImageSet], truths: &[ImageSet], th: &MetricThresholds) -> Result<MetricReport> {
    th.validate()?;
    let recall = truths
        .iter()
        .map(|t| br(hyps, t, th.lambda_p))
        .collect::<Result<Vec<_>>>()?;
    let covered: Vec<bool> = recall.iter().map(|&r| r >= th.lambda_r).collect();
    let best_precision = hyps
        .iter()
        .map(|h| {
            truths
                .iter()
                .map(|t| bp(h, t))
                .try_fold(0.0f64, |acc, p| p.map(|p| acc.max(p)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport {
        thresholds: *th,
        n_hypotheses: hyps.len(),
        dr: dr(hyps, truths, th)?,
        fdr: fdr(hyps, truths, th)?,
        top_u: top_u(hyps, truths, th)?,
        recall,
        covered,
        best_precision,
        failures: failure_breakdown(hyps, truths, th)?,
    })
}
