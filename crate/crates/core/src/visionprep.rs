//! Vision inputs for both model profiles: single random frame, uniform
//! k-frame sampling, and meme images expanded into pseudo-videos.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::item::{MediaItem, MediaKind, VisionSource};
use crate::seed;

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("item {0:?} has no frames")]
    EmptyMedia(String),
    #[error("item {item_id:?}: expected a {expected}")]
    WrongKind {
        item_id: String,
        expected: &'static str,
    },
    #[error("item {item_id:?}: cannot decode image {path}: {message}")]
    Undecodable {
        item_id: String,
        path: PathBuf,
        message: String,
    },
    #[error("item {item_id:?}: frame {index} of {path} needs frame extraction before use")]
    NeedsExtraction {
        item_id: String,
        path: PathBuf,
        index: u32,
    },
    #[error("item {item_id:?}: frame directory {dir} holds {found} frames, index {index} requested")]
    MissingFrame {
        item_id: String,
        dir: PathBuf,
        found: usize,
        index: u32,
    },
    #[error("invalid augmentation config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: encode failed: {message}")]
    Encode { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugConfig {
    pub rotation_deg_max: f64,
    pub crop_area_min: f64,
    pub hflip_prob: f64,
    pub brightness_jitter: f64,
    pub k: u32,
    pub seed: u64,
    /// Resize the source to this `(width, height)` before augmenting;
    /// `None` keeps the source dimensions.
    pub output_size: Option<(u32, u32)>,
}

impl Default for AugConfig {
    fn default() -> Self {
        AugConfig {
            rotation_deg_max: 15.0,
            crop_area_min: 0.8,
            hflip_prob: 0.5,
            brightness_jitter: 0.1,
            k: 16,
            seed: 0,
            output_size: None,
        }
    }
}

impl AugConfig {
    /// Every transform disabled; frames are copies of the source.
    pub fn identity(k: u32, seed: u64) -> Self {
        AugConfig {
            rotation_deg_max: 0.0,
            crop_area_min: 1.0,
            hflip_prob: 0.0,
            brightness_jitter: 0.0,
            k,
            seed,
            output_size: None,
        }
    }

    pub fn validate(&self) -> Result<(), VisionError> {
        let bad = |m: String| Err(VisionError::Config(m));
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return bad(format!("hflip_prob must lie in [0, 1], got {}", self.hflip_prob));
        }
        if !(self.crop_area_min > 0.0 && self.crop_area_min <= 1.0) {
            return bad(format!("crop_area_min must lie in (0, 1], got {}", self.crop_area_min));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(0.0..=180.0).contains(&self.rotation_deg_max) {
            return bad(format!("rotation_deg_max must lie in [0, 180], got {}", self.rotation_deg_max));
        }
        if !(0.0..1.0).contains(&self.brightness_jitter) {
            return bad(format!("brightness_jitter must lie in [0, 1), got {}", self.brightness_jitter));
        }
        if let Some((w, h)) = self.output_size {
            if w == 0 || h == 0 {
                return bad("output_size must be non-zero".into());
            }
        }
        Ok(())
    }
}

/// Where a frame's pixels come from. Paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSource {
    Image(PathBuf),
    FrameDir(PathBuf),
    VideoFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub item_id: String,
    pub frame_index: u32,
    pub source: FrameSource,
}

impl FrameRef {
    fn for_item(item: &MediaItem, frame_index: u32) -> Self {
        let source = match &item.vision {
            VisionSource::Image(p) => FrameSource::Image(p.clone()),
            VisionSource::FrameDir { dir, .. } => FrameSource::FrameDir(dir.clone()),
            VisionSource::VideoFile { path, .. } => FrameSource::VideoFile(path.clone()),
        };
        FrameRef {
            item_id: item.item_id.clone(),
            frame_index,
            source,
        }
    }

    /// The image file holding this frame. Frame directories are listed in
    /// lexicographic order; video containers are not decoded here.
    pub fn resolve_file(&self, root: &Path) -> Result<PathBuf, VisionError> {
        match &self.source {
            FrameSource::Image(p) => Ok(root.join(p)),
            FrameSource::FrameDir(dir) => {
                let dir = root.join(dir);
                let frames = list_frames(&dir)?;
                frames
                    .get(self.frame_index as usize)
                    .cloned()
                    .ok_or_else(|| VisionError::MissingFrame {
                        item_id: self.item_id.clone(),
                        dir: dir.clone(),
                        found: frames.len(),
                        index: self.frame_index,
                    })
            }
            FrameSource::VideoFile(path) => Err(VisionError::NeedsExtraction {
                item_id: self.item_id.clone(),
                path: root.join(path),
                index: self.frame_index,
            }),
        }
    }
}

/// Image files in `dir`, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, VisionError> {
    let io = |source| VisionError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
            .unwrap_or(false);
        if is_image && path.is_file() {
            frames.push(path);
        }
    }
    frames.sort();
    Ok(frames)
}

fn require_video(video: &MediaItem) -> Result<u32, VisionError> {
    if video.kind != MediaKind::Video {
        return Err(VisionError::WrongKind {
            item_id: video.item_id.clone(),
            expected: "video",
        });
    }
    match video.frame_count() {
        0 => Err(VisionError::EmptyMedia(video.item_id.clone())),
        f => Ok(f),
    }
}

/// One frame index drawn uniformly from `[0, F)`. The draw is keyed on
/// `(seed, item_id)` so each item gets its own stream.
pub fn sample_single_frame(video: &MediaItem, seed: u64) -> Result<FrameRef, VisionError> {
    let frames = require_video(video)?;
    let mut rng = seed::rng(seed::item_seed(seed, &video.item_id));
    let index = rng.gen_range(0..frames);
    Ok(FrameRef::for_item(video, index))
}

/// Uniform index for position `i` of `k` over `frames` frames:
/// `round(i * (F - 1) / (k - 1))`, rounding half up.
pub fn uniform_index(i: u32, k: u32, frames: u32) -> u32 {
    if k <= 1 {
        return 0;
    }
    let num = 2 * i as u64 * (frames as u64 - 1) + (k as u64 - 1);
    (num / (2 * (k as u64 - 1))) as u32
}

/// `k` evenly spaced frames including the first and last.
pub fn sample_k_frames(video: &MediaItem, k: u32) -> Result<Vec<FrameRef>, VisionError> {
    let frames = require_video(video)?;
    if k == 0 {
        return Err(VisionError::Config("k must be at least 1".into()));
    }
    Ok((0..k)
        .map(|i| FrameRef::for_item(video, uniform_index(i, k, frames)))
        .collect())
}

/// Interleaved 8-bit raster with 1-4 channels.
#[derive(Debug, Clone, PartialEq)]
struct Raster {
    width: u32,
    height: u32,
    channels: usize,
    data: Vec<u8>,
}

impl Raster {
    fn from_image(image: &DynamicImage) -> Self {
        let (channels, data, (width, height)) = match image {
            DynamicImage::ImageLuma8(b) => (1, b.as_raw().clone(), b.dimensions()),
            DynamicImage::ImageLumaA8(b) => (2, b.as_raw().clone(), b.dimensions()),
            DynamicImage::ImageRgb8(b) => (3, b.as_raw().clone(), b.dimensions()),
            DynamicImage::ImageRgba8(b) => (4, b.as_raw().clone(), b.dimensions()),
            other if other.color().has_alpha() => {
                let b = other.to_rgba8();
                (4, b.as_raw().clone(), b.dimensions())
            }
            other => {
                let b = other.to_rgb8();
                (3, b.as_raw().clone(), b.dimensions())
            }
        };
        Raster {
            width,
            height,
            channels,
            data,
        }
    }

    fn into_image(self) -> DynamicImage {
        let (w, h) = (self.width, self.height);
        let err = "raster size matches dimensions";
        match self.channels {
            1 => DynamicImage::ImageLuma8(ImageBuffer::from_raw(w, h, self.data).expect(err)),
            2 => DynamicImage::ImageLumaA8(ImageBuffer::from_raw(w, h, self.data).expect(err)),
            3 => DynamicImage::ImageRgb8(ImageBuffer::from_raw(w, h, self.data).expect(err)),
            _ => DynamicImage::ImageRgba8(ImageBuffer::from_raw(w, h, self.data).expect(err)),
        }
    }

    fn alpha_channel(&self) -> Option<usize> {
        match self.channels {
            2 => Some(1),
            4 => Some(3),
            _ => None,
        }
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integers), clamped to the edge.
    fn sample(&self, x: f64, y: f64, out: &mut [f64]) {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as u32;
        let y0 = y0 as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let c = self.channels;
        let at = |px: u32, py: u32, ch: usize| {
            self.data[(py as usize * self.width as usize + px as usize) * c + ch] as f64
        };
        for (ch, slot) in out.iter_mut().enumerate().take(c) {
            let top = at(x0, y0, ch) * (1.0 - fx) + at(x1, y0, ch) * fx;
            let bottom = at(x0, y1, ch) * (1.0 - fx) + at(x1, y1, ch) * fx;
            *slot = top * (1.0 - fy) + bottom * fy;
        }
    }

    fn resized(&self, width: u32, height: u32) -> Raster {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut data = Vec::with_capacity(width as usize * height as usize * self.channels);
        let mut px = [0.0f64; 4];
        for y in 0..height {
            for x in 0..width {
                self.sample((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5, &mut px);
                data.extend(px[..self.channels].iter().map(|v| to_u8(*v)));
            }
        }
        Raster {
            width,
            height,
            channels: self.channels,
            data,
        }
    }
}

fn to_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// sin and cos by Taylor series. Only IEEE add/mul/div are used, so the
/// result is bit-identical everywhere, unlike the platform libm.
fn sin_cos(x: f64) -> (f64, f64) {
    let x2 = x * x;
    let mut sin = 0.0;
    let mut cos = 0.0;
    let mut s_term = x;
    let mut c_term = 1.0;
    for n in 0..30u32 {
        sin += s_term;
        cos += c_term;
        let a = (2 * n + 2) as f64;
        let b = (2 * n + 3) as f64;
        s_term = -s_term * x2 / (a * b);
        c_term = -c_term * x2 / ((2 * n + 1) as f64 * a);
    }
    (sin, cos)
}

/// Parameters of one augmented frame, drawn in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FrameParams {
    crop_scale: f64,
    crop_u: f64,
    crop_v: f64,
    angle_rad: f64,
    flip: bool,
    brightness: f64,
}

impl FrameParams {
    fn draw(cfg: &AugConfig, frame_seed: u64) -> Self {
        let mut rng = seed::rng(frame_seed);
        let mut unit = || rng.gen::<f64>();
        let area = cfg.crop_area_min + (1.0 - cfg.crop_area_min) * unit();
        let crop_u = unit();
        let crop_v = unit();
        let angle_deg = cfg.rotation_deg_max * (2.0 * unit() - 1.0);
        let flip = unit() < cfg.hflip_prob;
        let brightness = 1.0 + cfg.brightness_jitter * (2.0 * unit() - 1.0);
        FrameParams {
            crop_scale: area.sqrt(),
            crop_u,
            crop_v,
            angle_rad: angle_deg * std::f64::consts::PI / 180.0,
            flip,
            brightness,
        }
    }
}

/// Crop (then resize back), rotate about the center, flip, scale brightness.
fn render_frame(src: &Raster, p: &FrameParams) -> Raster {
    let (w, h) = (src.width as f64, src.height as f64);
    let crop_w = w * p.crop_scale;
    let crop_h = h * p.crop_scale;
    let origin_x = p.crop_u * (w - crop_w);
    let origin_y = p.crop_v * (h - crop_h);
    let (sin, cos) = if p.angle_rad == 0.0 {
        (0.0, 1.0)
    } else {
        sin_cos(p.angle_rad)
    };
    let (cx, cy) = (w / 2.0, h / 2.0);
    let alpha = src.alpha_channel();
    let mut data = Vec::with_capacity(src.data.len());
    let mut px = [0.0f64; 4];
    for y in 0..src.height {
        for x in 0..src.width {
            let mut ox = x as f64 + 0.5;
            let oy = y as f64 + 0.5;
            if p.flip {
                ox = w - ox;
            }
            let (dx, dy) = (ox - cx, oy - cy);
            let rx = cos * dx + sin * dy + cx;
            let ry = cos * dy - sin * dx + cy;
            let sx = origin_x + rx * p.crop_scale;
            let sy = origin_y + ry * p.crop_scale;
            src.sample(sx - 0.5, sy - 0.5, &mut px);
            for (ch, v) in px[..src.channels].iter().enumerate() {
                let v = if Some(ch) == alpha { *v } else { *v * p.brightness };
                data.push(to_u8(v));
            }
        }
    }
    Raster {
        width: src.width,
        height: src.height,
        channels: src.channels,
        data,
    }
}

/// Expand one meme image into `cfg.k` augmented frames. Frame `j` is
/// seeded from `(cfg.seed, item_id, j)`, so output depends only on the
/// image, the config and the item id.
pub fn augment_to_pseudo_video(
    image: &DynamicImage,
    item_id: &str,
    cfg: &AugConfig,
) -> Result<Vec<DynamicImage>, VisionError> {
    cfg.validate()?;
    if image.width() == 0 || image.height() == 0 {
        return Err(VisionError::EmptyMedia(item_id.to_string()));
    }
    let mut canonical = Raster::from_image(image);
    if let Some((w, h)) = cfg.output_size {
        canonical = canonical.resized(w, h);
    }
    Ok((0..cfg.k)
        .map(|j| {
            let params = FrameParams::draw(cfg, seed::frame_seed(cfg.seed, item_id, j));
            render_frame(&canonical, &params).into_image()
        })
        .collect())
}

pub fn load_image(item_id: &str, path: &Path) -> Result<DynamicImage, VisionError> {
    image::open(path).map_err(|e| VisionError::Undecodable {
        item_id: item_id.to_string(),
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// File name of pseudo-frame `j`.
pub fn frame_file_name(j: u32) -> String {
    format!("frame_{j:04}.png")
}

/// Write frames as `<out_dir>/<item_id>/frame_<j:04>.png` plus an
/// `index.txt` listing them in order. Returns the frame paths relative to
/// `out_dir`.
pub fn write_pseudo_video(
    frames: &[DynamicImage],
    out_dir: &Path,
    item_id: &str,
) -> Result<Vec<PathBuf>, VisionError> {
    let dir = out_dir.join(item_id);
    fs::create_dir_all(&dir).map_err(|source| VisionError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut rel = Vec::with_capacity(frames.len());
    let mut index = String::new();
    for (j, frame) in frames.iter().enumerate() {
        let name = frame_file_name(j as u32);
        let path = dir.join(&name);
        frame
            .save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| VisionError::Encode {
                path: path.clone(),
                message: e.to_string(),
            })?;
        index.push_str(item_id);
        index.push('/');
        index.push_str(&name);
        index.push('\n');
        rel.push(Path::new(item_id).join(name));
    }
    let index_path = dir.join("index.txt");
    fs::write(&index_path, index).map_err(|source| VisionError::Io {
        path: index_path,
        source,
    })?;
    Ok(rel)
}
