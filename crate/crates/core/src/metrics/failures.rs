use serde::{Deserialize, Serialize};

use super::{aggregate, bp, br, ImageSet, MetricThresholds};
use crate::error::Result;

/// Fractions of an uncovered true blindspot's images in each failure category.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FailureBreakdown {
    pub not_returned: f64,
    pub found: f64,
    pub merged: f64,
    pub impure: f64,
}

impl FailureBreakdown {
    pub fn total(&self) -> f64 {
        self.not_returned + self.found + self.merged + self.impure
    }

    fn as_array(&self) -> [f64; 4] {
        [self.not_returned, self.found, self.merged, self.impure]
    }

    fn from_array(a: [f64; 4]) -> Self {
        FailureBreakdown {
            not_returned: a[0],
            found: a[1],
            merged: a[2],
            impure: a[3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthFailure {
    pub truth: usize,
    pub breakdown: FailureBreakdown,
}

/// Categorizes every image of every uncovered true blindspot by the first
/// matching rule: not returned, found, merged, impure.
pub fn failure_breakdown(
    hyps: &[ImageSet],
    truths: &[ImageSet],
    th: &MetricThresholds,
) -> Result<Vec<TruthFailure>> {
    let union: ImageSet = truths.iter().flatten().copied().collect();
    let mut out = Vec::new();
    for (m, truth) in truths.iter().enumerate() {
        if br(hyps, truth, th.lambda_p)? >= th.lambda_r {
            continue;
        }
        let belongs = hyps
            .iter()
            .map(|h| bp(h, truth).map(|p| p >= th.lambda_p))
            .collect::<Result<Vec<_>>>()?;
        let merges = hyps
            .iter()
            .map(|h| bp(h, &union).map(|p| p >= th.lambda_p))
            .collect::<Result<Vec<_>>>()?;
        let mut counts = [0usize; 4];
        for i in truth {
            let holders: Vec<usize> = (0..hyps.len()).filter(|&k| hyps[k].contains(i)).collect();
            let category = if holders.is_empty() {
                0
            } else if holders.iter().any(|&k| belongs[k]) {
                1
            } else if holders.iter().any(|&k| merges[k]) {
                2
            } else {
                3
            };
            counts[category] += 1;
        }
        let n = truth.len() as f64;
        out.push(TruthFailure {
            truth: m,
            breakdown: FailureBreakdown::from_array(counts.map(|c| c as f64 / n)),
        });
    }
    Ok(out)
}

/// Averages over the uncovered truths of each EC, then over the ECs that
/// have at least one. ECs with every truth covered contribute nothing.
pub fn aggregate_failures(per_ec: &[Vec<TruthFailure>]) -> Option<FailureBreakdown> {
    let ec_means: Vec<[f64; 4]> = per_ec
        .iter()
        .filter(|f| !f.is_empty())
        .map(|f| {
            let mut s = [0.0; 4];
            for tf in f {
                for (acc, v) in s.iter_mut().zip(tf.breakdown.as_array()) {
                    *acc += v;
                }
            }
            s.map(|v| v / f.len() as f64)
        })
        .collect();
    if ec_means.is_empty() {
        return None;
    }
    let mean = |c: usize| aggregate(&ec_means.iter().map(|m| m[c]).collect::<Vec<_>>()).mean;
    Some(FailureBreakdown::from_array([mean(0), mean(1), mean(2), mean(3)]))
}
