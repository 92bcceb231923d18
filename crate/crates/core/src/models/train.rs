use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::cnn::{bce_with_logit, pack_images, sigmoid, Architecture, ConvNet};
use super::{LabeledSplit, Model, ModelOutputs};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation-loss improvement.
    pub patience: Option<usize>,
    /// Loss weight of training examples whose label was flipped by induction.
    pub flipped_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: Architecture::default(),
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            max_epochs: 20,
            patience: None,
            flipped_weight: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.arch;
        if a.channels.len() < 2 || a.channels[0] != 3 || a.channels.contains(&0) {
            return Err(Error::Invalid("channels must start at 3 and be positive".into()));
        }
        if a.resolution == 0 || !a.resolution.is_multiple_of(1 << a.n_conv()) {
            return Err(Error::Invalid(format!(
                "resolution {} not divisible by {}",
                a.resolution,
                1 << a.n_conv()
            )));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Invalid("learning rate must be positive and momentum in [0, 1)".into()));
        }
        if !(self.flipped_weight > 0.0 && self.flipped_weight.is_finite()) {
            return Err(Error::Invalid("flipped-example weight must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Invalid("batch size and epoch budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// A trained classifier: the selected weights plus the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub net: ConvNet<f32>,
    pub history: Vec<EpochStats>,
    pub selected_epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct StoredModel {
    arch: Architecture,
    history: Vec<EpochStats>,
    selected_epoch: usize,
    params: Vec<f32>,
}

const INFER_BATCH: usize = 256;

fn batch_input(split: &LabeledSplit, idx: &[usize], side: usize) -> Vec<f32> {
    let imgs: Vec<&[u8]> = idx.iter().map(|&i| split.images[i].data.as_slice()).collect();
    pack_images(&imgs, side)
}

fn check_split(split: &LabeledSplit, side: usize, what: &str) -> Result<()> {
    if split.is_empty() {
        return Err(Error::Invalid(format!("{what} split is empty")));
    }
    if !split.has_images() {
        return Err(Error::Invalid(format!("{what} split has no rendered images")));
    }
    if let Some(img) = split
        .images
        .iter()
        .find(|im| im.width as usize != side || im.height as usize != side)
    {
        return Err(Error::Invalid(format!(
            "{what} image is {}x{}, expected {side}x{side}",
            img.width, img.height
        )));
    }
    Ok(())
}

/// Mean loss and accuracy against the training labels.
fn evaluate(net: &ConvNet<f32>, split: &LabeledSplit) -> (f64, f64) {
    let side = net.arch.resolution;
    let all: Vec<usize> = (0..split.len()).collect();
    let (mut loss, mut correct) = (0.0f64, 0usize);
    for chunk in all.chunks(INFER_BATCH) {
        let cache = net.forward(&batch_input(split, chunk, side), chunk.len());
        for (&z, &i) in cache.logits.iter().zip(chunk) {
            loss += f64::from(bce_with_logit(z, split.labels[i]));
            correct += usize::from((z >= 0.0) == split.labels[i]);
        }
    }
    (loss / split.len() as f64, correct as f64 / split.len() as f64)
}

/// Minibatch SGD with momentum; the returned weights are those of the epoch
/// with the lowest validation loss.
pub fn train_classifier(
    train: &LabeledSplit,
    val: &LabeledSplit,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let side = cfg.arch.resolution;
    check_split(train, side, "training")?;
    check_split(val, side, "validation")?;

    let mut net = ConvNet::<f32>::init(cfg.arch.clone(), rng::derive(seed, "init", 0));
    let mut velocity = net.zeros_like();
    let lr = cfg.learning_rate as f32;
    let mu = cfg.momentum as f32;
    let flipped = cfg.flipped_weight as f32;

    let mut best: Option<(f64, usize, ConvNet<f32>)> = None;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng::rng(rng::derive(seed, "shuffle", epoch as u64)));
        let mut total = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let input = batch_input(train, chunk, side);
            let targets: Vec<bool> = chunk.iter().map(|&i| train.labels[i]).collect();
            let weights: Vec<f32> = chunk
                .iter()
                .map(|&i| if train.labels[i] != train.clean[i] { flipped } else { 1.0 })
                .collect();
            let cache = net.forward(&input, chunk.len());
            let (loss, grad) = net.backward_weighted(&cache, &targets, &weights);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    loss: f64::from(loss),
                });
            }
            total += f64::from(loss) * chunk.len() as f64;
            for ((p, v), g) in net
                .params_mut()
                .into_iter()
                .zip(velocity.params_mut())
                .zip(grad.params())
            {
                for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = mu * *v + g;
                    *p -= lr * *v;
                }
            }
        }
        let train_loss = total / train.len() as f64;
        let (val_loss, val_accuracy) = evaluate(&net, val);
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: val_loss });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(l, _, _)| val_loss < *l) {
            best = Some((val_loss, epoch, net.clone()));
        }
        let since_best = epoch - best.as_ref().unwrap().1;
        if cfg.patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }
    let (_, selected_epoch, net) = best.expect("at least one epoch");
    Ok(TrainedModel {
        net,
        history,
        selected_epoch,
    })
}

impl TrainedModel {
    pub fn selected(&self) -> &EpochStats {
        &self.history[self.selected_epoch - 1]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let stored = StoredModel {
            arch: self.net.arch.clone(),
            history: self.history.clone(),
            selected_epoch: self.selected_epoch,
            params: self.net.to_flat(),
        };
        let json = serde_json::to_vec(&stored)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let stored: StoredModel = serde_json::from_slice(&bytes)?;
        let mut net = ConvNet::<f32>::init(stored.arch, 0);
        if !net.load_flat(&stored.params) {
            return Err(Error::Invalid(format!(
                "{}: parameter count does not match the architecture",
                path.display()
            )));
        }
        Ok(TrainedModel {
            net,
            history: stored.history,
            selected_epoch: stored.selected_epoch,
        })
    }
}

impl Model for TrainedModel {
    fn name(&self) -> &str {
        "cnn"
    }

    fn representation_dim(&self) -> usize {
        self.net.arch.feature_dim()
    }

    fn infer(&self, split: &LabeledSplit, indices: &[usize]) -> Result<ModelOutputs> {
        let side = self.net.arch.resolution;
        check_split(split, side, "inference")?;
        let d = self.representation_dim();
        let mut reps = Array2::<f64>::zeros((indices.len(), d));
        let mut conf = Vec::with_capacity(indices.len());
        let mut row = 0;
        for chunk in indices.chunks(INFER_BATCH) {
            let cache = self.net.forward(&batch_input(split, chunk, side), chunk.len());
            for b in 0..chunk.len() {
                for c in 0..d {
                    reps[[row, c]] = f64::from(cache.features[[c, b]]);
                }
                conf.push(f64::from(sigmoid(cache.logits[b])));
                row += 1;
            }
        }
        let ids = indices.iter().map(|&i| split.scenes[i].image_id).collect();
        ModelOutputs::new(ids, reps, conf)
    }
}
