use ndarray::Array2;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{LabeledSplit, Model, ModelOutputs};
use crate::blindspots::BlindspotSet;
use crate::error::{Error, Result};
use crate::rng;
use crate::scenegen::{label_of, AttributeKey, DatasetSpec, SceneDescription};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Confidence margin: correct predictions get 1 - epsilon.
    pub epsilon: f64,
    /// Standard deviation of the Gaussian jitter on each coordinate.
    pub jitter: f64,
    /// Standard deviation of additive confidence noise (clamped to [0, 1]).
    pub confidence_noise: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            epsilon: 0.0,
            jitter: 0.05,
            confidence_noise: 0.0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.epsilon) {
            return Err(Error::Invalid(format!("epsilon {} outside [0, 0.5]", self.epsilon)));
        }
        if !(self.jitter >= 0.0 && self.confidence_noise >= 0.0) {
            return Err(Error::Invalid("noise scales must be non-negative".into()));
        }
        Ok(())
    }
}

/// A ground-truth stand-in: it errs on exactly the blindspot images and its
/// representation spells out each image's attribute values.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleModel {
    keys: Vec<AttributeKey>,
    blindspots: BlindspotSet,
    cfg: OracleConfig,
    seed: u64,
}

pub fn oracle_model(
    spec: &DatasetSpec,
    blindspots: &BlindspotSet,
    cfg: OracleConfig,
    seed: u64,
) -> Result<OracleModel> {
    cfg.validate()?;
    Ok(OracleModel {
        keys: spec.blindspot_keys().into_iter().collect(),
        blindspots: blindspots.clone(),
        cfg,
        seed,
    })
}

impl OracleModel {
    /// -1 for Default, +1 for Alternative; meta-attributes use their signed position.
    fn coordinate(key: AttributeKey, scene: &SceneDescription) -> f64 {
        let v = scene.value(key);
        match v.position() {
            Some(p) => f64::from(p),
            None if v == key.default_value() => -1.0,
            None => 1.0,
        }
    }

    pub fn represent(&self, scene: &SceneDescription) -> Vec<f64> {
        let mut r = rng::rng(rng::derive(self.seed, "oracle-jitter", scene.image_id));
        let noise = Normal::new(0.0, self.cfg.jitter).unwrap();
        self.keys
            .iter()
            .map(|&k| Self::coordinate(k, scene) + noise.sample(&mut r))
            .collect()
    }

    pub fn confidence(&self, scene: &SceneDescription) -> f64 {
        let eps = self.cfg.epsilon;
        let predicts_positive = label_of(scene) ^ self.blindspots.any_match(scene);
        let c = if predicts_positive { 1.0 - eps } else { eps };
        if self.cfg.confidence_noise == 0.0 {
            return c;
        }
        let mut r = rng::rng(rng::derive(self.seed, "oracle-confidence", scene.image_id));
        let noise = Normal::new(0.0, self.cfg.confidence_noise).unwrap();
        (c + noise.sample(&mut r)).clamp(0.0, 1.0)
    }
}

impl Model for OracleModel {
    fn name(&self) -> &str {
        "oracle"
    }

    fn representation_dim(&self) -> usize {
        self.keys.len()
    }

    fn infer(&self, split: &LabeledSplit, indices: &[usize]) -> Result<ModelOutputs> {
        let d = self.keys.len();
        let mut reps = Array2::<f64>::zeros((indices.len(), d));
        let mut conf = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            let scene = &split.scenes[i];
            for (j, v) in self.represent(scene).into_iter().enumerate() {
                reps[[row, j]] = v;
            }
            conf.push(self.confidence(scene));
        }
        let ids = indices.iter().map(|&i| split.scenes[i].image_id).collect();
        ModelOutputs::new(ids, reps, conf)
    }
}
