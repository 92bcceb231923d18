use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::blindspots::BlindspotSpec;

/// Which spread the 95% interval is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalBasis {
    #[default]
    StandardError,
    StandardDeviation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub standard_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean, sample standard deviation, standard error and mean ± 1.96·SE.
pub fn aggregate(values: &[f64]) -> Aggregate {
    aggregate_with(values, IntervalBasis::StandardError)
}

pub fn aggregate_with(values: &[f64], basis: IntervalBasis) -> Aggregate {
    assert!(!values.is_empty(), "aggregate of an empty sample");
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    // A single observation has no spread estimate; report zero.
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let standard_error = sd / (n as f64).sqrt();
    let half = 1.96
        * match basis {
            IntervalBasis::StandardError => standard_error,
            IntervalBasis::StandardDeviation => sd,
        };
    Aggregate {
        n,
        mean,
        sd,
        standard_error,
        ci_low: mean - half,
        ci_high: mean + half,
    }
}

/// Cover outcome of one true blindspot in one EC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindspotRecord {
    pub ec_id: String,
    pub blindspot: BlindspotSpec,
    pub covered: bool,
    pub blindspots_in_ec: usize,
}

/// Covered-fraction per group. Every requested key is reported; groups with no
/// records are `None` rather than zero.
pub fn factor_grouping<K, F>(records: &[BlindspotRecord], keys: &[K], predicate: F) -> Vec<(K, Option<Aggregate>)>
where
    K: Ord + Clone,
    F: Fn(&BlindspotRecord) -> K,
{
    let mut groups: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry(predicate(r))
            .or_default()
            .push(if r.covered { 1.0 } else { 0.0 });
    }
    keys.iter()
        .map(|k| (k.clone(), groups.get(k).map(|v| aggregate(v))))
        .collect()
}
