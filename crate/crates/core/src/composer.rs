//! Pixel-space fusion of style images with augmented masks.

use image::{imageops, DynamicImage, Rgb, RgbImage};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::maskgen::AugmentedMask;

pub const DEFAULT_CANVAS: (u32, u32) = (512, 512);
pub const NEUTRAL_GRAY: [u8; 3] = [128, 128, 128];

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("style is {style:?} but mask is {mask:?}")]
    DimensionMismatch { style: (u32, u32), mask: (u32, u32) },
    #[error("alpha must lie in [0, 1] (got {0})")]
    InvalidAlpha(f64),
    #[error("target dimensions must be non-zero (got {0}x{1})")]
    ZeroTarget(u32, u32),
    #[error("cannot decode {path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleImage {
    pub rgb: RgbImage,
    pub source_id: String,
}

impl StyleImage {
    pub fn dims(&self) -> (u32, u32) {
        self.rgb.dimensions()
    }

    /// Flat neutral-gray stand-in used when no real style image is wanted.
    pub fn neutral(dims: (u32, u32)) -> Self {
        Self {
            rgb: RgbImage::from_pixel(dims.0, dims.1, Rgb(NEUTRAL_GRAY)),
            source_id: "neutral-gray".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeImage {
    pub rgb: RgbImage,
    pub mask_ref: Option<String>,
    pub style_ref: String,
}

impl CompositeImage {
    /// A style image sent on unmodified (no mask fused).
    pub fn unmasked(style: &StyleImage) -> Self {
        Self {
            rgb: style.rgb.clone(),
            mask_ref: None,
            style_ref: style.source_id.clone(),
        }
    }
}

/// Saturating element-wise addition `style + alpha * mask`.
pub fn fuse(style: &StyleImage, mask: &AugmentedMask, alpha: f64) -> Result<CompositeImage, ComposeError> {
    let mask_dims = (mask.width(), mask.height());
    if style.dims() != mask_dims {
        return Err(ComposeError::DimensionMismatch {
            style: style.dims(),
            mask: mask_dims,
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ComposeError::InvalidAlpha(alpha));
    }
    let mut rgb = style.rgb.clone();
    for (x, y, p) in rgb.enumerate_pixels_mut() {
        if !mask.occupancy.get(x, y) {
            continue;
        }
        let m = mask.rgb.get_pixel(x, y);
        for (c, add) in p.0.iter_mut().zip(m.0) {
            let v = f64::from(*c) + alpha * f64::from(add);
            *c = v.round().min(255.0) as u8;
        }
    }
    Ok(CompositeImage {
        rgb,
        mask_ref: Some(mask.id()),
        style_ref: style.source_id.clone(),
    })
}

/// Centre-crops `raw` to the target aspect ratio, then resizes bilinearly.
pub fn prepare_style(raw: &DynamicImage, source_id: &str, target: (u32, u32)) -> Result<StyleImage, ComposeError> {
    let (tw, th) = target;
    if tw == 0 || th == 0 {
        return Err(ComposeError::ZeroTarget(tw, th));
    }
    let rgb = raw.to_rgb8();
    let (w, h) = rgb.dimensions();
    let out = if (w, h) == target {
        rgb
    } else {
        // largest crop with the target aspect: compare w/h against tw/th exactly
        let (cw, ch) = if u64::from(w) * u64::from(th) > u64::from(h) * u64::from(tw) {
            ((u64::from(h) * u64::from(tw) / u64::from(th)).max(1) as u32, h)
        } else {
            (w, (u64::from(w) * u64::from(th) / u64::from(tw)).max(1) as u32)
        };
        let x0 = (w - cw) / 2;
        let y0 = (h - ch) / 2;
        let cropped = imageops::crop_imm(&rgb, x0, y0, cw, ch).to_image();
        if (cw, ch) == target {
            cropped
        } else {
            imageops::resize(&cropped, tw, th, imageops::FilterType::Triangle)
        }
    };
    Ok(StyleImage {
        rgb: out,
        source_id: source_id.to_string(),
    })
}

/// Decodes `path` and prepares it; the path (as given) becomes the provenance id.
pub fn load_style(path: &Path, source_id: &str, target: (u32, u32)) -> Result<StyleImage, ComposeError> {
    let raw = image::open(path).map_err(|source| ComposeError::Decode {
        path: path.to_owned(),
        source,
    })?;
    prepare_style(&raw, source_id, target)
}
