use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::time::Instant;

use super::{Backend, BackendError, EmbeddingSpace, EmbeddingVector, GenRequest, GenResult};
use super::{CLIP_DIM, INCEPTION_DIM};

/// Noise standard deviation, in channel units, at strength 1.
const NOISE_AT_FULL_STRENGTH: f64 = 48.0;
const STAT_GRID: u32 = 8;
const STAT_LEN: usize = (STAT_GRID * STAT_GRID * 3) as usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub seed: u64,
    pub clip_dim: usize,
    pub inception_dim: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            clip_dim: CLIP_DIM,
            inception_dim: INCEPTION_DIM,
        }
    }
}

/// Deterministic stand-in for the model server.
///
/// `generate` adds seeded Gaussian noise scaled by strength, then applies a
/// 3x3 box blur `round(strength * 4)` times. Image embeddings are fixed random
/// projections of an 8x8 grid of mean colours; text embeddings hash word
/// unigrams and bigrams into signed buckets. Everything is a pure function of
/// the request content and `MockConfig::seed`.
pub struct MockBackend {
    config: MockConfig,
    clip_projection: Vec<f64>,
    inception_projection: Vec<f64>,
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Self {
        let clip_projection = projection(config.seed, b"clip_image", config.clip_dim);
        let inception_projection = projection(config.seed, b"inception", config.inception_dim);
        Self {
            config,
            clip_projection,
            inception_projection,
        }
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    fn request_seed(&self, req: &GenRequest) -> u64 {
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        let (w, hgt) = req.dims();
        h.update(w.to_le_bytes());
        h.update(hgt.to_le_bytes());
        h.update(req.init_image.rgb.as_raw());
        for s in [&req.prompt, &req.negative_prompt] {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        }
        h.update(req.denoise_strength.to_bits().to_le_bytes());
        h.update(req.guidance_scale.to_bits().to_le_bytes());
        h.update(req.steps.to_le_bytes());
        h.update(req.seed.to_le_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().unwrap())
    }

    fn project(&self, img: &RgbImage, space: EmbeddingSpace) -> Result<EmbeddingVector, BackendError> {
        if img.width() == 0 || img.height() == 0 {
            return Err(BackendError::InvalidRequest("empty image".into()));
        }
        let stats = grid_means(img);
        let (matrix, dim) = match space {
            EmbeddingSpace::Inception => (&self.inception_projection, self.config.inception_dim),
            _ => (&self.clip_projection, self.config.clip_dim),
        };
        let mut values: Vec<f64> = matrix
            .chunks_exact(STAT_LEN)
            .take(dim)
            .map(|row| row.iter().zip(&stats).map(|(a, b)| a * b).sum())
            .collect();
        if space == EmbeddingSpace::ClipImage {
            normalize(&mut values);
        }
        EmbeddingVector::new(space, values)
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new(MockConfig::default())
    }
}

impl Backend for MockBackend {
    fn backend_id(&self) -> String {
        format!("mock-{:016x}", self.config.seed)
    }

    fn generate(&self, req: &GenRequest) -> Result<GenResult, BackendError> {
        req.validate()?;
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(self.request_seed(req));
        let std = req.denoise_strength * NOISE_AT_FULL_STRENGTH;
        let (w, h) = req.dims();
        let mut buf: Vec<f64> = req
            .init_image
            .rgb
            .as_raw()
            .iter()
            .map(|&c| {
                let n: f64 = StandardNormal.sample(&mut rng);
                f64::from(c) + std * n
            })
            .collect();
        let passes = (req.denoise_strength * 4.0).round() as usize;
        for _ in 0..passes {
            buf = box_blur(&buf, w as usize, h as usize);
        }
        let raw: Vec<u8> = buf.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        let image = RgbImage::from_raw(w, h, raw).expect("buffer sized from request");
        Ok(GenResult {
            image,
            backend_id: self.backend_id(),
            latency_ms: start.elapsed().as_millis() as u64,
        })
    }

    fn embed_image(&self, image: &RgbImage) -> Result<EmbeddingVector, BackendError> {
        self.project(image, EmbeddingSpace::ClipImage)
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        let dim = self.config.clip_dim;
        let mut values = vec![0.0; dim];
        let tokens: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect();
        let bigrams = tokens.windows(2).map(|w| format!("{} {}", w[0], w[1]));
        for feature in tokens.iter().cloned().chain(bigrams) {
            let mut h = Sha256::new();
            h.update(self.config.seed.to_le_bytes());
            h.update(feature.as_bytes());
            let d = h.finalize();
            let bucket = u64::from_le_bytes(d[..8].try_into().unwrap()) as usize % dim;
            let sign = if d[8] & 1 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
        }
        if tokens.is_empty() {
            // a fixed direction for empty text keeps the vector well defined
            values[0] = 1.0;
        }
        normalize(&mut values);
        EmbeddingVector::new(EmbeddingSpace::ClipText, values)
    }

    fn embed_inception(&self, image: &RgbImage) -> Result<EmbeddingVector, BackendError> {
        self.project(image, EmbeddingSpace::Inception)
    }
}

fn projection(seed: u64, tag: &[u8], dim: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag);
    let d = h.finalize();
    let mut rng = ChaCha8Rng::from_seed(d.into());
    let scale = 1.0 / (STAT_LEN as f64).sqrt();
    (0..dim * STAT_LEN)
        .map(|_| {
            let n: f64 = StandardNormal.sample(&mut rng);
            n * scale
        })
        .collect()
}

/// Mean colour of each cell in an 8x8 grid, scaled to [0, 1].
fn grid_means(img: &RgbImage) -> Vec<f64> {
    let (w, h) = img.dimensions();
    let mut out = Vec::with_capacity(STAT_LEN);
    for gy in 0..STAT_GRID {
        let y0 = gy * h / STAT_GRID;
        let y1 = ((gy + 1) * h / STAT_GRID).max(y0 + 1).min(h);
        for gx in 0..STAT_GRID {
            let x0 = gx * w / STAT_GRID;
            let x1 = ((gx + 1) * w / STAT_GRID).max(x0 + 1).min(w);
            let mut sum = [0u64; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = img.get_pixel(x, y).0;
                    for c in 0..3 {
                        sum[c] += u64::from(p[c]);
                    }
                }
            }
            let n = f64::from((x1 - x0) * (y1 - y0)) * 255.0;
            out.extend(sum.iter().map(|&s| s as f64 / n));
        }
    }
    out
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// 3x3 box blur over an interleaved RGB buffer with clamped edges.
fn box_blur(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for dy in [-1isize, 0, 1] {
                    for dx in [-1isize, 0, 1] {
                        let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                        let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                        acc += src[(sy * w + sx) * 3 + c];
                    }
                }
                out[(y * w + x) * 3 + c] = acc / 9.0;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composer::CompositeImage;
    use image::Rgb;

    fn request(strength: f64) -> GenRequest {
        GenRequest {
            init_image: CompositeImage {
                rgb: RgbImage::from_fn(48, 32, |x, y| Rgb([(x * 5) as u8, (y * 7) as u8, 120])),
                mask_ref: None,
                style_ref: "t".into(),
            },
            prompt: "wildfire".into(),
            negative_prompt: String::new(),
            denoise_strength: strength,
            guidance_scale: 5.0,
            steps: 30,
            seed: 9,
        }
    }

    fn mean_abs_diff(a: &RgbImage, b: &RgbImage) -> f64 {
        let s: f64 = a
            .as_raw()
            .iter()
            .zip(b.as_raw())
            .map(|(x, y)| (f64::from(*x) - f64::from(*y)).abs())
            .sum();
        s / a.as_raw().len() as f64
    }

    #[test]
    fn tiny_strength_barely_changes_input() {
        let mock = MockBackend::default();
        let req = request(0.01);
        let out = mock.generate(&req).unwrap();
        assert!(mean_abs_diff(&out.image, &req.init_image.rgb) <= 2.0);
    }

    #[test]
    fn perturbation_grows_with_strength() {
        let mock = MockBackend::default();
        let diffs: Vec<f64> = [0.1, 0.5, 0.99]
            .iter()
            .map(|&s| {
                let req = request(s);
                mean_abs_diff(&mock.generate(&req).unwrap().image, &req.init_image.rgb)
            })
            .collect();
        assert!(diffs[0] < diffs[1] && diffs[1] < diffs[2], "{diffs:?}");
    }

    #[test]
    fn generate_is_deterministic() {
        let mock = MockBackend::default();
        let a = mock.generate(&request(0.5)).unwrap();
        let b = mock.generate(&request(0.5)).unwrap();
        assert_eq!(a.image, b.image);
        let other = MockBackend::new(MockConfig { seed: 1, ..MockConfig::default() });
        assert_ne!(other.generate(&request(0.5)).unwrap().image, a.image);
    }

    #[test]
    fn baseline_strength_accepted() {
        let out = MockBackend::default().generate(&request(0.99)).unwrap();
        assert_eq!(out.image.dimensions(), (48, 32));
    }

    #[test]
    fn embeddings_are_stable_and_sensitive() {
        let mock = MockBackend::default();
        let img = request(0.5).init_image.rgb;
        let a = mock.embed_image(&img).unwrap();
        assert_eq!(a, mock.embed_image(&img).unwrap());
        let mut tweaked = img.clone();
        tweaked.put_pixel(3, 3, Rgb([0, 0, 0]));
        assert_ne!(a.values, mock.embed_image(&tweaked).unwrap().values);
        assert_eq!(a.dim(), CLIP_DIM);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(mock.embed_inception(&img).unwrap().dim(), INCEPTION_DIM);
    }

    #[test]
    fn text_embedding_contract() {
        let mock = MockBackend::default();
        let v = mock.embed_text("a photo of fire").unwrap();
        assert_eq!(v.dim(), 512);
        assert_eq!(v.space, EmbeddingSpace::ClipText);
        assert_eq!(v, mock.embed_text("a photo of fire").unwrap());
        assert_ne!(v, mock.embed_text("a photo of a lake").unwrap());
        assert!(mock.embed_text("").unwrap().norm() > 0.0);
    }
}
