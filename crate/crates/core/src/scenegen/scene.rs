use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::dataset::DatasetSpec;
use super::render::RenderConfig;
use super::vocab::{Attribute, AttributeKey, Layer, Value, ValueAssignment};
use crate::error::{Error, Result};
use crate::rng;

pub type ImageId = u64;

/// Maximum anchor draws per object before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Minimum gap in pixels between object bounding boxes.
pub const PLACEMENT_MARGIN: u32 = 1;

/// Top-left anchor of one rendered object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub layer: Layer,
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub image_id: ImageId,
    pub seed: u64,
    /// Rollable triplets followed by meta-attributes, sorted by key.
    pub triplets: Vec<ValueAssignment>,
    pub placements: Vec<Placement>,
}

/// Effective visual attributes of one object layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectStyle {
    pub present: bool,
    pub size: Value,
    pub color: Value,
    pub texture: Value,
    pub count: usize,
}

impl SceneDescription {
    /// The value of `key`, falling back to its Default when the key is absent.
    pub fn value(&self, key: AttributeKey) -> Value {
        self.triplets
            .iter()
            .find(|t| t.key() == key)
            .map(|t| t.value)
            .unwrap_or_else(|| key.default_value())
    }

    pub fn contains(&self, t: &ValueAssignment) -> bool {
        self.triplets.contains(t)
    }

    pub fn background_color(&self) -> Value {
        self.value(AttributeKey::new(Layer::Background, Attribute::Color))
    }

    pub fn background_texture(&self) -> Value {
        self.value(AttributeKey::new(Layer::Background, Attribute::Texture))
    }

    pub fn object_style(&self, layer: Layer) -> ObjectStyle {
        let v = |a| self.value(AttributeKey::new(layer, a));
        let count = if layer == Layer::Square && v(Attribute::Number) == Value::Two {
            2
        } else {
            1
        };
        ObjectStyle {
            present: v(Attribute::Presence) == Value::True,
            size: v(Attribute::Size),
            color: v(Attribute::Color),
            texture: v(Attribute::Texture),
            count,
        }
    }
}

fn boxes_clash(a: (u32, u32, u32, u32), b: (u32, u32, u32, u32)) -> bool {
    let (ax, ay, aw, ah) = a;
    let (bx, by, bw, bh) = b;
    let m = PLACEMENT_MARGIN;
    ax < bx + bw + m && bx < ax + aw + m && ay < by + bh + m && by < ay + ah + m
}

/// Draws a value for every rollable key, places the present objects without
/// overlap, then appends the meta-attributes.
pub fn sample_scene(
    spec: &DatasetSpec,
    image_id: ImageId,
    seed: u64,
    cfg: &RenderConfig,
) -> Result<SceneDescription> {
    let mut r = rng::rng(seed);
    let mut triplets: Vec<ValueAssignment> = spec
        .rollable
        .iter()
        .map(|&k| {
            let v = if r.random_bool(0.5) {
                k.alternative_value()
            } else {
                k.default_value()
            };
            ValueAssignment::new(k, v)
        })
        .collect();

    let mut scene = SceneDescription {
        image_id,
        seed,
        triplets: triplets.clone(),
        placements: Vec::new(),
    };

    let mut boxes: Vec<(u32, u32, u32, u32)> = Vec::new();
    for layer in spec.object_layers() {
        let style = scene.object_style(layer);
        if !style.present {
            continue;
        }
        let (w, h) = cfg.object_size(layer, style.size);
        if w > cfg.resolution || h > cfg.resolution {
            return Err(Error::Geometry(format!("{layer} larger than the frame")));
        }
        for _ in 0..style.count {
            let mut placed = None;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let x = r.random_range(0..=cfg.resolution - w);
                let y = r.random_range(0..=cfg.resolution - h);
                if boxes.iter().all(|&b| !boxes_clash((x, y, w, h), b)) {
                    placed = Some((x, y));
                    break;
                }
            }
            let (x, y) = placed.ok_or_else(|| Error::PlacementFailure {
                layer: layer.to_string(),
                attempts: MAX_PLACEMENT_ATTEMPTS,
            })?;
            boxes.push((x, y, w, h));
            scene.placements.push(Placement { layer, x, y });
        }
    }

    triplets.extend(compute_meta_attributes(&scene, cfg));
    triplets.sort();
    scene.triplets = triplets;
    Ok(scene)
}

/// Relative position of the (first-placed) square against the horizontal centerline.
pub fn compute_meta_attributes(scene: &SceneDescription, cfg: &RenderConfig) -> Vec<ValueAssignment> {
    let value = match scene.placements.iter().find(|p| p.layer == Layer::Square) {
        None => Value::NoSquare,
        Some(p) => {
            let (_, side) = cfg.object_size(Layer::Square, scene.object_style(Layer::Square).size);
            // center row = y + side/2; compare doubled to stay in integers
            if 2 * p.y + side < cfg.resolution {
                Value::Above
            } else {
                Value::Below
            }
        }
    };
    vec![ValueAssignment::new(AttributeKey::RELATIVE_POSITION, value)]
}

/// The classification label: is a square present.
pub fn label_of(scene: &SceneDescription) -> bool {
    scene.contains(&ValueAssignment::new(
        AttributeKey::presence(Layer::Square),
        Value::True,
    ))
}
