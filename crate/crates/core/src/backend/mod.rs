//! Denoising and embedding backends.
//!
//! [`Backend`] is implemented by [`MockBackend`] (deterministic, in-process)
//! and [`HttpBackend`] (JSON over HTTP). [`MockServer`] exposes any backend
//! over the same wire protocol:
//!
//! | route              | request                                   | response                    |
//! |--------------------|-------------------------------------------|-----------------------------|
//! | `POST /v1/generate`   | `{init_png_b64, prompt, negative_prompt, strength, guidance, steps, seed}` | `{image_png_b64, backend_id}` |
//! | `POST /v1/embed/image`| `{image_png_b64, space}`                   | `{values, dim}`             |
//! | `POST /v1/embed/text` | `{text}`                                   | `{values, dim}`             |
//! | `GET /v1/health`      |                                            | `{backend_id, models}`      |
//!
//! Errors are returned with a non-2xx status and `{"error": "..."}`.

mod http;
mod mock;
mod server;

pub use http::{HttpBackend, HttpConfig};
pub use mock::{MockBackend, MockConfig};
pub use server::{MockServer, ServerStats};

use base64::Engine;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use std::io::Cursor;
use thiserror::Error;

use crate::composer::CompositeImage;

pub const CLIP_DIM: usize = 512;
pub const INCEPTION_DIM: usize = 2048;
pub const DEFAULT_STEPS: u32 = 30;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend returned {status}: {message}")]
    Remote { status: u16, message: String },
    #[error("request timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("backend returned {got:?}, expected {expected:?}")]
    DimensionMismatch { expected: (u32, u32), got: (u32, u32) },
}

impl BackendError {
    /// Transport failures and temporary unavailability may be retried; the
    /// seed makes a retried call idempotent.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::Transport(_) | BackendError::Remote { status: 503, .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSpace {
    ClipImage,
    ClipText,
    Inception,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub space: EmbeddingSpace,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(space: EmbeddingSpace, values: Vec<f64>) -> Result<Self, BackendError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::InvalidResponse(format!(
                "{space:?} embedding must be non-empty and finite"
            )));
        }
        Ok(Self { space, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRequest {
    pub init_image: CompositeImage,
    pub prompt: String,
    pub negative_prompt: String,
    pub denoise_strength: f64,
    pub guidance_scale: f64,
    pub steps: u32,
    pub seed: u64,
}

impl GenRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        let s = self.denoise_strength;
        if !(s > 0.0 && s <= 1.0) {
            return Err(BackendError::InvalidRequest(format!(
                "denoise strength {s} outside (0, 1]"
            )));
        }
        if !(self.guidance_scale.is_finite() && self.guidance_scale >= 0.0) {
            return Err(BackendError::InvalidRequest(format!(
                "guidance scale {} must be >= 0",
                self.guidance_scale
            )));
        }
        if self.steps < 1 {
            return Err(BackendError::InvalidRequest("steps must be >= 1".into()));
        }
        let (w, h) = self.init_image.rgb.dimensions();
        if w == 0 || h == 0 {
            return Err(BackendError::InvalidRequest("init image is empty".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> (u32, u32) {
        self.init_image.rgb.dimensions()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenResult {
    pub image: RgbImage,
    pub backend_id: String,
    pub latency_ms: u64,
}

pub trait Backend: Send + Sync {
    fn backend_id(&self) -> String;
    fn generate(&self, req: &GenRequest) -> Result<GenResult, BackendError>;
    fn embed_image(&self, image: &RgbImage) -> Result<EmbeddingVector, BackendError>;
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, BackendError>;
    fn embed_inception(&self, image: &RgbImage) -> Result<EmbeddingVector, BackendError>;
}

// Wire records. Field names are part of the protocol.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateBody {
    pub init_png_b64: String,
    pub prompt: String,
    pub negative_prompt: String,
    pub strength: f64,
    pub guidance: f64,
    pub steps: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateReply {
    pub image_png_b64: String,
    pub backend_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedImageBody {
    pub image_png_b64: String,
    pub space: EmbeddingSpace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedTextBody {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingReply {
    pub values: Vec<f64>,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorReply {
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthReply {
    pub backend_id: String,
    pub models: Vec<String>,
}

impl EmbeddingReply {
    pub(crate) fn into_vector(self, space: EmbeddingSpace) -> Result<EmbeddingVector, BackendError> {
        if self.values.len() != self.dim {
            return Err(BackendError::InvalidResponse(format!(
                "dim {} but {} values",
                self.dim,
                self.values.len()
            )));
        }
        EmbeddingVector::new(space, self.values)
    }
}

pub fn encode_png_b64(img: &RgbImage) -> String {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .expect("encoding to memory cannot fail");
    base64::engine::general_purpose::STANDARD.encode(buf.into_inner())
}

pub fn decode_png_b64(data: &str) -> Result<RgbImage, String> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(data)
        .map_err(|e| format!("bad base64: {e}"))?;
    image::load_from_memory(&bytes)
        .map(|img| img.to_rgb8())
        .map_err(|e| format!("bad image: {e}"))
}
