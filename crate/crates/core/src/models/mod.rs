//! Blindspot induction by label flipping, the model abstraction, a small
//! trainable classifier, a deterministic oracle, and induction checks.

mod cnn;
mod oracle;
mod outputs;
mod train;
mod verify;

pub use cnn::{bce_with_logit, pack_images, sigmoid, Architecture, ConvLayer, ConvNet, ForwardCache, Real};
pub use oracle::{oracle_model, OracleConfig, OracleModel};
pub use outputs::ModelOutputs;
pub use train::{train_classifier, EpochStats, TrainConfig, TrainedModel};
pub use verify::{verify_induction, InductionReport, VerificationMode};

use serde::{Deserialize, Serialize};

use crate::blindspots::BlindspotSet;
use crate::error::Result;
use crate::scenegen::{label_of, render, RenderConfig, RgbImage, SceneDescription};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

/// Scenes of one split with clean and (possibly flipped) training labels.
/// `images` is either empty (scene-only consumers such as the oracle) or
/// parallel to `scenes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplit {
    pub tag: SplitTag,
    pub scenes: Vec<SceneDescription>,
    pub images: Vec<RgbImage>,
    pub clean: Vec<bool>,
    pub labels: Vec<bool>,
}

impl LabeledSplit {
    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn has_images(&self) -> bool {
        !self.scenes.is_empty() && self.images.len() == self.scenes.len()
    }

    /// Renders every scene; a no-op when images are already present.
    pub fn render_images(&mut self, cfg: &RenderConfig) -> Result<()> {
        if !self.has_images() {
            self.images = self.scenes.iter().map(|s| render(s, cfg)).collect::<Result<_>>()?;
        }
        Ok(())
    }

    /// Indices of clean-positive scenes.
    pub fn positives(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.clean[i]).collect()
    }

    /// A split restricted to `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> LabeledSplit {
        LabeledSplit {
            tag: self.tag,
            scenes: indices.iter().map(|&i| self.scenes[i].clone()).collect(),
            images: if self.has_images() {
                indices.iter().map(|&i| self.images[i].clone()).collect()
            } else {
                Vec::new()
            },
            clean: indices.iter().map(|&i| self.clean[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Flips every label whose scene falls in any blindspot.
pub fn flip_labels(labels: &[bool], scenes: &[SceneDescription], blindspots: &BlindspotSet) -> Vec<bool> {
    labels
        .iter()
        .zip(scenes)
        .map(|(&l, s)| l ^ blindspots.any_match(s))
        .collect()
}

/// Training label = clean label XOR blindspot membership, except on the test
/// split which always stays clean.
pub fn induce_labels(
    tag: SplitTag,
    scenes: Vec<SceneDescription>,
    images: Vec<RgbImage>,
    blindspots: &BlindspotSet,
) -> LabeledSplit {
    let clean: Vec<bool> = scenes.iter().map(label_of).collect();
    let labels = match tag {
        SplitTag::Test => clean.clone(),
        _ => flip_labels(&clean, &scenes, blindspots),
    };
    LabeledSplit {
        tag,
        scenes,
        images,
        clean,
        labels,
    }
}

/// Anything exposing a representation and a positive-class confidence.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    fn representation_dim(&self) -> usize;

    /// Outputs for the scenes at `indices` of `split`, rows in that order.
    fn infer(&self, split: &LabeledSplit, indices: &[usize]) -> Result<ModelOutputs>;

    fn infer_all(&self, split: &LabeledSplit) -> Result<ModelOutputs> {
        let all: Vec<usize> = (0..split.len()).collect();
        self.infer(split, &all)
    }
}
