//! Geometric fire masks and their augmentation families.
//!
//! A mask moves through `Binary -> Colored -> {Noise | Perlin}`; each step
//! rejects inputs that are not at the expected stage.

mod augment;
mod palette;
mod raster;
mod shapes;

pub use augment::{add_gaussian, apply_perlin, colorize, PerlinMaskParams, DEFAULT_JITTER};
pub use palette::{build_palette, FirePalette, PaletteOptions};
pub(crate) use palette::list_images;
pub use raster::{connected_components, AugmentedMask, BoundingBox, Component, Occupancy};
pub use shapes::{
    gen_binary_mask, random_mask_spec, MaskConstraints, MaskLimits, MaskSpec, ShapeKind,
    ShapeSpec,
};

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

use crate::noisefield::{mix64, NoiseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskFamily {
    Binary,
    Colored,
    Noise,
    Perlin,
}

impl MaskFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskFamily::Binary => "binary",
            MaskFamily::Colored => "colored",
            MaskFamily::Noise => "noise",
            MaskFamily::Perlin => "perlin",
        }
    }
}

impl std::fmt::Display for MaskFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("invalid mask spec: {0}")]
    InvalidSpec(String),
    #[error("unsatisfiable mask constraints: {0}")]
    Unsatisfiable(String),
    #[error("expected a {expected} mask, got {found}")]
    WrongFamily {
        expected: MaskFamily,
        found: MaskFamily,
    },
    #[error("fire palette is empty")]
    EmptyPalette,
    #[error("no fire-class boxes found under {0}")]
    EmptySource(PathBuf),
    #[error("{path}:{line}: malformed annotation row: {reason}")]
    MalformedAnnotation {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("sigma must be finite and >= 0 (got {0})")]
    NegativeSigma(f64),
    #[error("mask has no active pixels")]
    EmptyMask,
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to decode {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// Runs the full augmentation chain described by `spec`.
///
/// Sub-seeds for colouring and noise are derived from `spec.rng_seed`. A Perlin
/// spec without explicit parameters uses [`PerlinMaskParams::for_mask`].
pub fn gen_augmented(spec: &MaskSpec, palette: &FirePalette) -> Result<AugmentedMask, MaskError> {
    let binary = gen_binary_mask(spec)?;
    if spec.family == MaskFamily::Binary {
        return Ok(binary);
    }
    let colored = colorize(&binary, palette, sub_seed(spec.rng_seed, 1), DEFAULT_JITTER)?;
    match spec.family {
        MaskFamily::Noise => add_gaussian(&colored, spec.sigma, sub_seed(spec.rng_seed, 2)),
        MaskFamily::Perlin => {
            let params = match &spec.perlin {
                Some(p) => p.clone(),
                None => PerlinMaskParams::for_mask(&binary, sub_seed(spec.rng_seed, 3)),
            };
            apply_perlin(&colored, &params)
        }
        _ => Ok(colored),
    }
}

pub(crate) fn sub_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream))
}
