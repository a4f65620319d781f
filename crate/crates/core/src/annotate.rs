//! Paired ground truth: YOLO boxes, region crops and the JSON-lines manifest.
//!
//! Dataset layout under a root directory:
//!
//! ```text
//! manifest.jsonl        one DatasetRecord per line
//! images/000000.png     generated image
//! masks/000000.png      occupancy (255 = fire), absent for unmasked arms
//! labels/000000.txt     YOLO rows, one per mask component
//! composites/000000.png backend input
//! ```
//!
//! Every path stored in the manifest is relative to the root.

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::maskgen::{connected_components, AugmentedMask, BoundingBox, MaskFamily, Occupancy};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const DEFAULT_FIRE_CLASS: u32 = 0;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("mask has no active pixels")]
    EmptyMask,
    #[error("image is {image:?} but mask is {mask:?}")]
    DimensionMismatch { image: (u32, u32), mask: (u32, u32) },
    #[error("pad must be finite and >= 0 (got {0})")]
    InvalidPad(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("{path}:{line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("dataset path `{0}` must be relative and stay inside the root")]
    UnsafePath(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnnotateError + '_ {
    move |source| AnnotateError::Io {
        path: path.to_owned(),
        source,
    }
}

/// One YOLO annotation row: class id, then centre and size normalised to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoloBox {
    pub class: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl YoloBox {
    pub fn from_pixel_box(class: u32, b: &BoundingBox, width: u32, height: u32) -> Self {
        let (cw, ch) = (f64::from(width), f64::from(height));
        Self {
            class,
            cx: (f64::from(b.x) + f64::from(b.width) / 2.0) / cw,
            cy: (f64::from(b.y) + f64::from(b.height) / 2.0) / ch,
            w: f64::from(b.width) / cw,
            h: f64::from(b.height) / ch,
        }
    }

    /// Pixel box on a `width` x `height` image, clamped to the frame.
    /// `None` when the clamped box is empty.
    pub fn to_pixel_box(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let (cw, ch) = (f64::from(width), f64::from(height));
        let x0 = ((self.cx - self.w / 2.0) * cw).round().clamp(0.0, cw) as u32;
        let x1 = ((self.cx + self.w / 2.0) * cw).round().clamp(0.0, cw) as u32;
        let y0 = ((self.cy - self.h / 2.0) * ch).round().clamp(0.0, ch) as u32;
        let y1 = ((self.cy + self.h / 2.0) * ch).round().clamp(0.0, ch) as u32;
        (x1 > x0 && y1 > y0).then(|| BoundingBox {
            x: x0,
            y: y0,
            width: x1 - x0,
            height: y1 - y0,
        })
    }

    pub fn parse(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(format!("expected 5 fields, found {}", fields.len()));
        }
        let class = fields[0]
            .parse::<u32>()
            .map_err(|_| format!("bad class id `{}`", fields[0]))?;
        let mut vals = [0.0; 4];
        for (v, f) in vals.iter_mut().zip(&fields[1..]) {
            *v = f.parse::<f64>().map_err(|_| format!("bad number `{f}`"))?;
            if !(0.0..=1.0).contains(v) {
                return Err(format!("value `{f}` outside [0, 1]"));
            }
        }
        let [cx, cy, w, h] = vals;
        Ok(Self { class, cx, cy, w, h })
    }
}

impl std::fmt::Display for YoloBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:.6} {:.6} {:.6} {:.6}",
            self.class, self.cx, self.cy, self.w, self.h
        )
    }
}

/// One YOLO row per connected component of the mask.
pub fn boxes_from_mask(mask: &AugmentedMask, class: u32) -> Result<Vec<YoloBox>, AnnotateError> {
    if mask.regions.is_empty() || mask.occupancy.count() == 0 {
        return Err(AnnotateError::EmptyMask);
    }
    Ok(mask
        .regions
        .iter()
        .map(|b| YoloBox::from_pixel_box(class, b, mask.width(), mask.height()))
        .collect())
}

/// Box grown by `pad` times its size on every side, clipped to the canvas.
pub fn padded_box(b: &BoundingBox, pad: f64, width: u32, height: u32) -> BoundingBox {
    let px = (pad * f64::from(b.width)).round() as i64;
    let py = (pad * f64::from(b.height)).round() as i64;
    let x0 = (i64::from(b.x) - px).max(0);
    let y0 = (i64::from(b.y) - py).max(0);
    let x1 = (i64::from(b.x1()) + px).min(i64::from(width));
    let y1 = (i64::from(b.y1()) + py).min(i64::from(height));
    BoundingBox {
        x: x0 as u32,
        y: y0 as u32,
        width: (x1 - x0) as u32,
        height: (y1 - y0) as u32,
    }
}

/// One patch per mask region covering its padded bounding box.
pub fn crop_regions(
    image: &RgbImage,
    mask: &AugmentedMask,
    pad: f64,
) -> Result<Vec<RgbImage>, AnnotateError> {
    if image.dimensions() != (mask.width(), mask.height()) {
        return Err(AnnotateError::DimensionMismatch {
            image: image.dimensions(),
            mask: (mask.width(), mask.height()),
        });
    }
    if !(pad.is_finite() && pad >= 0.0) {
        return Err(AnnotateError::InvalidPad(pad));
    }
    Ok(mask
        .regions
        .iter()
        .map(|b| {
            let p = padded_box(b, pad, image.width(), image.height());
            image::imageops::crop_imm(image, p.x, p.y, p.width, p.height).to_image()
        })
        .collect())
}

/// Every seed that fed one dataset item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedChain {
    pub item: u64,
    pub mask: u64,
    pub style: u64,
    pub generate: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub schema_version: u32,
    pub index: u64,
    pub arm: String,
    pub image_path: String,
    pub mask_path: Option<String>,
    pub label_path: Option<String>,
    pub composite_path: String,
    pub boxes: Vec<YoloBox>,
    pub family: Option<MaskFamily>,
    pub seeds: SeedChain,
    pub prompt: String,
    pub style_source: String,
}

/// A record together with the rasters it points at.
#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub record: DatasetRecord,
    pub image: RgbImage,
    pub composite: RgbImage,
    pub occupancy: Option<Occupancy>,
}

/// Standard relative paths for item `index`.
pub fn item_paths(index: u64, masked: bool) -> (String, Option<String>, Option<String>, String) {
    let stem = format!("{index:06}");
    (
        format!("images/{stem}.png"),
        masked.then(|| format!("masks/{stem}.png")),
        masked.then(|| format!("labels/{stem}.txt")),
        format!("composites/{stem}.png"),
    )
}

/// Resolves a manifest path against `root`, refusing absolute or escaping paths.
pub fn resolve(root: &Path, rel: &str) -> Result<PathBuf, AnnotateError> {
    let p = Path::new(rel);
    let safe = p
        .components()
        .all(|c| matches!(c, std::path::Component::Normal(_)));
    if !safe || rel.is_empty() {
        return Err(AnnotateError::UnsafePath(rel.to_string()));
    }
    Ok(root.join(p))
}

/// Streams items to a dataset root. Single writer per root.
pub struct DatasetWriter {
    root: PathBuf,
    manifest: BufWriter<File>,
}

impl DatasetWriter {
    pub fn create(root: &Path) -> Result<Self, AnnotateError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        let path = root.join(MANIFEST_FILE);
        let file = File::create(&path).map_err(io_err(&path))?;
        Ok(Self {
            root: root.to_owned(),
            manifest: BufWriter::new(file),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, item: &DatasetItem) -> Result<(), AnnotateError> {
        let rec = &item.record;
        save_rgb(&resolve(&self.root, &rec.image_path)?, &item.image)?;
        save_rgb(&resolve(&self.root, &rec.composite_path)?, &item.composite)?;
        if let (Some(mask_path), Some(occ)) = (&rec.mask_path, &item.occupancy) {
            save_gray(&resolve(&self.root, mask_path)?, &occ.to_gray())?;
        }
        if let Some(label_path) = &rec.label_path {
            let path = resolve(&self.root, label_path)?;
            let mut text = String::new();
            for b in &rec.boxes {
                text.push_str(&b.to_string());
                text.push('\n');
            }
            write_file(&path, text.as_bytes())?;
        }
        let line = serde_json::to_string(rec).expect("records always serialise");
        let manifest_path = self.root.join(MANIFEST_FILE);
        writeln!(self.manifest, "{line}").map_err(io_err(&manifest_path))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, AnnotateError> {
        let path = self.root.join(MANIFEST_FILE);
        self.manifest.flush().map_err(io_err(&path))?;
        Ok(path)
    }
}

fn ensure_parent(path: &Path) -> Result<(), AnnotateError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), AnnotateError> {
    ensure_parent(path)?;
    fs::write(path, bytes).map_err(io_err(path))
}

fn save_rgb(path: &Path, img: &RgbImage) -> Result<(), AnnotateError> {
    ensure_parent(path)?;
    img.save(path).map_err(|source| AnnotateError::Image {
        path: path.to_owned(),
        source,
    })
}

fn save_gray(path: &Path, img: &GrayImage) -> Result<(), AnnotateError> {
    ensure_parent(path)?;
    img.save(path).map_err(|source| AnnotateError::Image {
        path: path.to_owned(),
        source,
    })
}

/// Writes every item and returns the manifest path.
pub fn write_dataset(items: &[DatasetItem], root: &Path) -> Result<PathBuf, AnnotateError> {
    let mut writer = DatasetWriter::create(root)?;
    for item in items {
        writer.write(item)?;
    }
    writer.finish()
}

pub fn read_manifest(path: &Path) -> Result<Vec<DatasetRecord>, AnnotateError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| AnnotateError::Manifest {
                path: path.to_owned(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(AnnotateError::Manifest {
                path: path.to_owned(),
                line: i + 1,
                reason: format!("unsupported schema_version {}", rec.schema_version),
            });
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn load_rgb(path: &Path) -> Result<RgbImage, AnnotateError> {
    Ok(image::open(path)
        .map_err(|source| AnnotateError::Image {
            path: path.to_owned(),
            source,
        })?
        .to_rgb8())
}

/// Reloads a record's mask as a binary [`AugmentedMask`]. `None` for unmasked records.
pub fn load_mask(root: &Path, rec: &DatasetRecord) -> Result<Option<AugmentedMask>, AnnotateError> {
    let Some(rel) = &rec.mask_path else {
        return Ok(None);
    };
    let path = resolve(root, rel)?;
    let gray = image::open(&path)
        .map_err(|source| AnnotateError::Image {
            path: path.clone(),
            source,
        })?
        .to_luma8();
    let occ = Occupancy::from_gray(&gray);
    if connected_components(&occ).is_empty() {
        return Err(AnnotateError::EmptyMask);
    }
    AugmentedMask::from_occupancy(occ)
        .map(Some)
        .map_err(|_| AnnotateError::EmptyMask)
}
