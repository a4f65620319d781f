//! Seeded 2-D gradient noise, fractal octave accumulation and domain warping.
//!
//! Domain coordinates are unitless: a point `(x, y)` lands on lattice
//! coordinates `(x * frequency, y * frequency)`, so `frequency` counts noise
//! cells per unit of domain. [`render_field`] maps a raster onto the domain by
//! dividing pixel centres by the raster width, which makes `frequency` read as
//! "cells across the image width".

use serde::{Deserialize, Serialize};
use thiserror::Error;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The eight gradients of the classic permutation-table construction.
const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 1.0),
    (-1.0, 1.0),
    (1.0, -1.0),
    (-1.0, -1.0),
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("invalid noise parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("raster must have non-zero area (got {width}x{height})")]
    ZeroArea { width: u32, height: u32 },
}

/// SplitMix64 finalizer. A bijection on `u64`.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed used for octave `octave` of an fBm stack. Octave 0 uses `seed` itself.
pub fn octave_seed(seed: u64, octave: u32) -> u64 {
    seed.wrapping_add(u64::from(octave).wrapping_mul(GOLDEN_GAMMA))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerlinParams {
    pub seed: u64,
    /// Lattice cells per unit of domain.
    pub frequency: f64,
    pub octaves: u32,
    pub lacunarity: f64,
    pub persistence: f64,
    /// Displacement applied by [`domain_warp`], in domain units when called
    /// directly and in pixels when passed to [`render_field`].
    pub warp_amplitude: f64,
    /// Offsets decorrelating the x and y warp sub-fields.
    pub warp_offsets: [[f64; 2]; 2],
}

impl Default for PerlinParams {
    fn default() -> Self {
        Self {
            seed: 0,
            frequency: 4.0,
            octaves: 4,
            lacunarity: 2.0,
            persistence: 0.5,
            warp_amplitude: 0.0,
            warp_offsets: [[5.2, 1.3], [1.7, 9.2]],
        }
    }
}

impl PerlinParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let bad = |name, reason: &str| {
            Err(NoiseError::InvalidParam {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return bad("frequency", "must be finite and > 0");
        }
        if self.octaves < 1 {
            return bad("octaves", "must be >= 1");
        }
        if !(self.lacunarity.is_finite() && self.lacunarity > 1.0) {
            return bad("lacunarity", "must be finite and > 1");
        }
        if !(self.persistence > 0.0 && self.persistence <= 1.0) {
            return bad("persistence", "must lie in (0, 1]");
        }
        if !(self.warp_amplitude.is_finite() && self.warp_amplitude >= 0.0) {
            return bad("warp_amplitude", "must be finite and >= 0");
        }
        if self.warp_offsets.iter().flatten().any(|v| !v.is_finite()) {
            return bad("warp_offsets", "must be finite");
        }
        Ok(())
    }

    /// Sum of octave weights, used to keep fBm inside [-1, 1].
    fn weight_sum(&self) -> f64 {
        (0..self.octaves)
            .map(|i| self.persistence.powi(i as i32))
            .sum()
    }
}

/// Single-octave gradient noise over lattice coordinates.
#[derive(Clone)]
pub struct GradientNoise {
    perm: [u8; 512],
}

impl GradientNoise {
    /// Builds the permutation table with a Fisher-Yates shuffle of `0..256`
    /// driven by a SplitMix64 stream started at `seed`.
    pub fn new(seed: u64) -> Self {
        let mut table: [u8; 256] = std::array::from_fn(|i| i as u8);
        let mut state = seed;
        for i in (1..256usize).rev() {
            state = state.wrapping_add(GOLDEN_GAMMA);
            let j = (mix64(state) % (i as u64 + 1)) as usize;
            table.swap(i, j);
        }
        let mut perm = [0u8; 512];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = table[i & 255];
        }
        Self { perm }
    }

    /// Noise at lattice coordinates. Zero at integer points, bounded by 1.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let xi = (x0 as i64).rem_euclid(256) as usize;
        let yi = (y0 as i64).rem_euclid(256) as usize;

        let corner = |cx: usize, cy: usize, dx: f64, dy: f64| {
            let h = self.perm[self.perm[cx] as usize + cy] as usize & 7;
            let (gx, gy) = GRADIENTS[h];
            gx * dx + gy * dy
        };
        let n00 = corner(xi, yi, fx, fy);
        let n10 = corner(xi + 1, yi, fx - 1.0, fy);
        let n01 = corner(xi, yi + 1, fx, fy - 1.0);
        let n11 = corner(xi + 1, yi + 1, fx - 1.0, fy - 1.0);

        let u = fade(fx);
        let v = fade(fy);
        let nx0 = lerp(n00, n10, u);
        let nx1 = lerp(n01, n11, u);
        lerp(nx0, nx1, v).clamp(-1.0, 1.0)
    }
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Precomputed octave stack for repeated fBm evaluation.
#[derive(Clone)]
pub struct Fbm {
    octaves: Vec<GradientNoise>,
    frequency: f64,
    lacunarity: f64,
    persistence: f64,
    norm: f64,
}

impl Fbm {
    pub fn new(params: &PerlinParams) -> Self {
        Self {
            octaves: (0..params.octaves)
                .map(|i| GradientNoise::new(octave_seed(params.seed, i)))
                .collect(),
            frequency: params.frequency,
            lacunarity: params.lacunarity,
            persistence: params.persistence,
            norm: params.weight_sum(),
        }
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let mut sum = 0.0;
        let mut amp = 1.0;
        let mut freq = self.frequency;
        for noise in &self.octaves {
            sum += amp * noise.sample(x * freq, y * freq);
            amp *= self.persistence;
            freq *= self.lacunarity;
        }
        (sum / self.norm).clamp(-1.0, 1.0)
    }
}

/// Single-octave Perlin noise at `(x * frequency, y * frequency)`.
pub fn perlin2(x: f64, y: f64, params: &PerlinParams) -> f64 {
    GradientNoise::new(params.seed).sample(x * params.frequency, y * params.frequency)
}

/// Normalised fractal sum of `params.octaves` Perlin octaves.
pub fn fbm(x: f64, y: f64, params: &PerlinParams) -> f64 {
    Fbm::new(params).sample(x, y)
}

/// Evaluates `field` at `(x, y)` displaced by two fBm sub-fields.
pub fn domain_warp<F>(field: F, x: f64, y: f64, params: &PerlinParams) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    if params.warp_amplitude == 0.0 {
        return field(x, y);
    }
    let warp = Fbm::new(params);
    warp_with(&warp, &field, x, y, params.warp_amplitude, &params.warp_offsets)
}

fn warp_with<F>(
    warp: &Fbm,
    field: &F,
    x: f64,
    y: f64,
    amplitude: f64,
    offsets: &[[f64; 2]; 2],
) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    let [o1, o2] = offsets;
    let dx = warp.sample(x + o1[0], y + o1[1]);
    let dy = warp.sample(x + o2[0], y + o2[1]);
    field(x + amplitude * dx, y + amplitude * dy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }
}

/// Domain coordinates of the centre of pixel `(px, py)` in a raster `width` wide.
pub fn pixel_to_domain(px: u32, py: u32, width: u32) -> (f64, f64) {
    let w = f64::from(width);
    ((f64::from(px) + 0.5) / w, (f64::from(py) + 0.5) / w)
}

/// Per-pixel evaluation of the fields [`render_field`] rasterises, for
/// callers that only need a sparse set of pixels.
pub struct FieldSampler {
    base: Fbm,
    width: u32,
    amplitude: f64,
    offsets: [[f64; 2]; 2],
}

impl FieldSampler {
    /// `params.warp_amplitude` is read in pixels and converted to domain
    /// units by dividing by `width`.
    pub fn new(width: u32, params: &PerlinParams) -> Result<Self, NoiseError> {
        if width == 0 {
            return Err(NoiseError::ZeroArea { width, height: 0 });
        }
        params.validate()?;
        Ok(Self {
            base: Fbm::new(params),
            width,
            amplitude: params.warp_amplitude / f64::from(width),
            offsets: params.warp_offsets,
        })
    }

    pub fn plain(&self, px: u32, py: u32) -> f64 {
        let (x, y) = pixel_to_domain(px, py, self.width);
        self.base.sample(x, y)
    }

    pub fn warped(&self, px: u32, py: u32) -> f64 {
        if self.amplitude == 0.0 {
            return self.plain(px, py);
        }
        let (x, y) = pixel_to_domain(px, py, self.width);
        let field = |x: f64, y: f64| self.base.sample(x, y);
        warp_with(&self.base, &field, x, y, self.amplitude, &self.offsets)
    }
}

/// Rasterises fBm over a `width` x `height` grid, optionally domain-warped.
///
/// `params.warp_amplitude` is read in pixels here and converted to domain
/// units by dividing by `width`.
pub fn render_field(
    width: u32,
    height: u32,
    params: &PerlinParams,
    warped: bool,
) -> Result<ScalarField, NoiseError> {
    if width == 0 || height == 0 {
        return Err(NoiseError::ZeroArea { width, height });
    }
    let sampler = FieldSampler::new(width, params)?;
    let mut values = Vec::with_capacity(width as usize * height as usize);
    for py in 0..height {
        for px in 0..width {
            values.push(if warped {
                sampler.warped(px, py)
            } else {
                sampler.plain(px, py)
            });
        }
    }
    Ok(ScalarField {
        width,
        height,
        values,
    })
}
