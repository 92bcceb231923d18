use serde::{Deserialize, Serialize};

use super::{LabeledSplit, Model};
use crate::blindspots::{matches, BlindspotSet};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum VerificationMode {
    /// Accuracy outside all blindspots at least `tau_out`, inside each at most `tau_in`.
    Synthetic { tau_out: f64, tau_in: f64 },
    /// Positive-class recall drops by at least `tau_gap` inside each blindspot.
    RecallGap { tau_gap: f64 },
}

impl Default for VerificationMode {
    fn default() -> Self {
        VerificationMode::Synthetic {
            tau_out: 0.97,
            tau_in: 0.05,
        }
    }
}

impl VerificationMode {
    pub fn real_data() -> Self {
        VerificationMode::RecallGap { tau_gap: 0.20 }
    }

    pub fn verdict(&self, outside: f64, inside: f64) -> bool {
        match *self {
            VerificationMode::Synthetic { tau_out, tau_in } => outside >= tau_out && inside <= tau_in,
            // small slack so a gap that is exactly tau_gap in decimal still passes
            VerificationMode::RecallGap { tau_gap } => outside - inside >= tau_gap - 1e-12,
        }
    }
}

/// Outside/inside scores are accuracies against clean labels in synthetic
/// mode and positive-class recalls in recall-gap mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductionReport {
    pub mode: VerificationMode,
    pub accuracy_outside: f64,
    /// Per blindspot; `None` when the split holds no image of it.
    pub accuracy_inside: Vec<Option<f64>>,
    pub verified: Vec<bool>,
}

impl InductionReport {
    pub fn all_verified(&self) -> bool {
        self.verified.iter().all(|&v| v)
    }
}

fn score(hits: &[bool]) -> Option<f64> {
    (!hits.is_empty()).then(|| hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

pub fn verify_induction(
    model: &dyn Model,
    val: &LabeledSplit,
    blindspots: &BlindspotSet,
    mode: VerificationMode,
) -> Result<InductionReport> {
    let recall = matches!(mode, VerificationMode::RecallGap { .. });
    let pool: Vec<usize> = if recall {
        val.positives()
    } else {
        (0..val.len()).collect()
    };
    let out = model.infer(val, &pool)?;
    let correct: Vec<bool> = pool
        .iter()
        .zip(&out.confidences)
        .map(|(&i, &c)| (c >= 0.5) == val.clean[i])
        .collect();

    let outside: Vec<bool> = pool
        .iter()
        .zip(&correct)
        .filter(|(&i, _)| !blindspots.any_match(&val.scenes[i]))
        .map(|(_, &c)| c)
        .collect();
    let accuracy_outside = score(&outside).unwrap_or(0.0);

    let accuracy_inside: Vec<Option<f64>> = blindspots
        .iter()
        .map(|b| {
            let inside: Vec<bool> = pool
                .iter()
                .zip(&correct)
                .filter(|(&i, _)| matches(b, &val.scenes[i]))
                .map(|(_, &c)| c)
                .collect();
            score(&inside)
        })
        .collect();
    let verified = accuracy_inside
        .iter()
        .map(|a| a.is_some_and(|a| mode.verdict(accuracy_outside, a)))
        .collect();
    Ok(InductionReport {
        mode,
        accuracy_outside,
        accuracy_inside,
        verified,
    })
}
