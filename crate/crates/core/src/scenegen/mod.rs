//! Synthetic scene vocabulary, dataset and scene sampling, and rendering.

mod dataset;
mod font;
mod render;
mod scene;
mod vocab;

pub use dataset::{sample_dataset_spec, sample_dataset_spec_with, DatasetRanges, DatasetSpec};
pub use render::{
    object_masks, render, ColorTable, GeometryTable, ObjectMask, RenderConfig, Rgb, RgbImage,
    ShapeSizes,
};
pub use scene::{
    compute_meta_attributes, label_of, sample_scene, ImageId, ObjectStyle, Placement,
    SceneDescription, MAX_PLACEMENT_ATTEMPTS, PLACEMENT_MARGIN,
};
pub use vocab::{Attribute, AttributeKey, Layer, Value, ValueAssignment};

#[cfg(test)]
mod tests;
