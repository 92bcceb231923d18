//! Hard-edged, integer-only rasterization of scene descriptions.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use super::font;
use super::scene::{ObjectStyle, SceneDescription};
use super::vocab::{Layer, Value};
use crate::error::{Error, Result};
use crate::rng;

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorTable {
    pub white: Rgb,
    pub grey: Rgb,
    pub blue: Rgb,
    pub orange: Rgb,
    pub noise_dark: Rgb,
    pub noise_light: Rgb,
}

impl Default for ColorTable {
    fn default() -> Self {
        ColorTable {
            white: [255, 255, 255],
            grey: [128, 128, 128],
            blue: [30, 100, 220],
            orange: [245, 130, 30],
            noise_dark: [0, 0, 0],
            noise_light: [255, 255, 255],
        }
    }
}

impl ColorTable {
    pub fn of(&self, v: Value) -> Rgb {
        match v {
            Value::White => self.white,
            Value::Grey => self.grey,
            Value::Blue => self.blue,
            Value::Orange => self.orange,
            other => panic!("{other} is not a color"),
        }
    }
}

/// Width and height in pixels for the Normal and Small variant of one shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeSizes {
    pub normal: (u32, u32),
    pub small: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometryTable {
    pub square: ShapeSizes,
    pub rectangle: ShapeSizes,
    pub circle: ShapeSizes,
    pub text: ShapeSizes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub resolution: u32,
    pub colors: ColorTable,
    pub geometry: GeometryTable,
    pub stripe_width: u32,
    /// Fraction of background pixels replaced by noise; half dark, half light.
    pub noise_fraction: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig::desk()
    }
}

impl RenderConfig {
    /// Geometry defined at 224 px and scaled linearly to `resolution`.
    pub fn scaled(resolution: u32) -> Self {
        let s = |px: u32| ((px * resolution) as f64 / 224.0).round() as u32;
        let sizes = |w: u32, h: u32| ShapeSizes {
            normal: (s(w), s(h)),
            small: (s(w / 2), s(h / 2)),
        };
        RenderConfig {
            resolution,
            colors: ColorTable::default(),
            geometry: GeometryTable {
                square: sizes(56, 56),
                rectangle: sizes(56, 28),
                circle: sizes(56, 56),
                text: sizes(56, 28),
            },
            stripe_width: (resolution / 56).max(1),
            noise_fraction: 0.10,
        }
    }

    pub fn desk() -> Self {
        Self::scaled(64)
    }

    /// The 224 px geometry every scaled config derives from.
    pub fn full_size() -> Self {
        Self::scaled(224)
    }

    pub fn shape_sizes(&self, layer: Layer) -> ShapeSizes {
        match layer {
            Layer::Square => self.geometry.square,
            Layer::Rectangle => self.geometry.rectangle,
            Layer::Circle => self.geometry.circle,
            Layer::Text => self.geometry.text,
            Layer::Background => panic!("background has no geometry"),
        }
    }

    pub fn object_size(&self, layer: Layer, size: Value) -> (u32, u32) {
        let s = self.shape_sizes(layer);
        match size {
            Value::Small => s.small,
            _ => s.normal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Geometry(m));
        if self.resolution < 32 {
            return fail(format!("resolution {} < 32", self.resolution));
        }
        if self.stripe_width == 0 {
            return fail("stripe width must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return fail(format!("noise fraction {} outside [0,1]", self.noise_fraction));
        }
        for layer in [Layer::Square, Layer::Rectangle, Layer::Circle, Layer::Text] {
            let s = self.shape_sizes(layer);
            let ok = s.normal.0 > s.small.0
                && s.normal.1 > s.small.1
                && s.small.0 >= 4
                && s.small.1 >= 4
                && s.normal.0 <= self.resolution
                && s.normal.1 <= self.resolution;
            if !ok {
                return fail(format!("{layer} sizes {s:?} violate normal > small >= 4"));
            }
        }
        Ok(())
    }
}

/// 8-bit RGB raster in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        let data = color
            .iter()
            .copied()
            .cycle()
            .take((width * height * 3) as usize)
            .collect();
        RgbImage {
            width,
            height,
            data,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = ((y * self.width + x) * 3) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, c: Rgb) {
        let i = ((y * self.width + x) * 3) as usize;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc
                .write_header()
                .map_err(|e| Error::Serde(e.to_string()))?;
            w.write_image_data(&self.data)
                .map_err(|e| Error::Serde(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let dec = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = dec.read_info().map_err(|e| Error::Serde(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::Serde("png too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::Serde(e.to_string()))?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Serde("expected 8-bit RGB png".into()));
        }
        buf.truncate(info.buffer_size());
        Ok(RgbImage {
            width: info.width,
            height: info.height,
            data: buf,
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }
}

/// Pixels covered by one rendered object, with the color painted at each.
#[derive(Debug, Clone)]
pub struct ObjectMask {
    pub placement: usize,
    pub layer: Layer,
    pub pixels: Vec<(u32, u32, Rgb)>,
}

fn average(a: Rgb, b: Rgb) -> Rgb {
    [0, 1, 2].map(|i| ((u16::from(a[i]) + u16::from(b[i])) / 2) as u8)
}

fn shape_contains(layer: Layer, w: u32, h: u32, dx: u32, dy: u32) -> bool {
    match layer {
        Layer::Square | Layer::Rectangle => true,
        Layer::Circle => {
            // Integer disk test on pixel centers: (2dx+1-d)^2 + (2dy+1-d)^2 <= d^2.
            let d = i64::from(w);
            let cx = 2 * i64::from(dx) + 1 - d;
            let cy = 2 * i64::from(dy) + 1 - d;
            cx * cx + cy * cy <= d * d
        }
        Layer::Text => font::text_pixel(w, h, dx, dy),
        Layer::Background => false,
    }
}

/// Per-object pixel sets. Fails if any placement leaves the frame.
pub fn object_masks(scene: &SceneDescription, cfg: &RenderConfig) -> Result<Vec<ObjectMask>> {
    let bg_base = cfg.colors.of(scene.background_color());
    let mut masks = Vec::with_capacity(scene.placements.len());
    for (i, p) in scene.placements.iter().enumerate() {
        let style: ObjectStyle = scene.object_style(p.layer);
        let (w, h) = cfg.object_size(p.layer, style.size);
        if p.x + w > cfg.resolution || p.y + h > cfg.resolution {
            return Err(Error::Geometry(format!(
                "{} at ({}, {}) with size {w}x{h} exceeds the {}px frame",
                p.layer, p.x, p.y, cfg.resolution
            )));
        }
        let main = cfg.colors.of(style.color);
        let secondary = average(main, bg_base);
        let striped = style.texture == Value::VerticalStripes;
        let mut pixels = Vec::new();
        for dy in 0..h {
            for dx in 0..w {
                if !shape_contains(p.layer, w, h, dx, dy) {
                    continue;
                }
                let band = (dx / cfg.stripe_width) % 2;
                let c = if striped && band == 1 { secondary } else { main };
                pixels.push((p.x + dx, p.y + dy, c));
            }
        }
        masks.push(ObjectMask {
            placement: i,
            layer: p.layer,
            pixels,
        });
    }
    Ok(masks)
}

/// Paints the background (color, then noise) and each placed object in order.
pub fn render(scene: &SceneDescription, cfg: &RenderConfig) -> Result<RgbImage> {
    cfg.validate()?;
    let res = cfg.resolution;
    let mut img = RgbImage::filled(res, res, cfg.colors.of(scene.background_color()));
    if scene.background_texture() == Value::SaltAndPepper {
        let mut r = rng::rng(rng::derive(scene.seed, "noise", scene.image_id));
        let half = cfg.noise_fraction / 2.0;
        for y in 0..res {
            for x in 0..res {
                let u: f64 = r.random();
                if u < half {
                    img.put(x, y, cfg.colors.noise_dark);
                } else if u < cfg.noise_fraction {
                    img.put(x, y, cfg.colors.noise_light);
                }
            }
        }
    }
    for mask in object_masks(scene, cfg)? {
        for (x, y, c) in mask.pixels {
            img.put(x, y, c);
        }
    }
    Ok(img)
}
