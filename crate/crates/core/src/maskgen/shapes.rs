use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::raster::{AugmentedMask, Occupancy};
use super::{MaskError, MaskFamily, PerlinMaskParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Rectangle,
    Circle,
    Ellipse,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Rectangle, ShapeKind::Circle, ShapeKind::Ellipse];
}

/// A shape in canvas pixel space. `extents` are full width and height before
/// rotation; a circle has equal extents (its diameter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub center: [f64; 2],
    pub extents: [f64; 2],
    pub rotation: f64,
}

impl ShapeSpec {
    pub fn area(&self) -> f64 {
        let [w, h] = self.extents;
        match self.kind {
            ShapeKind::Rectangle => w * h,
            ShapeKind::Circle | ShapeKind::Ellipse => PI * w * h / 4.0,
        }
    }

    /// Half-widths of the axis-aligned box around the rotated shape.
    pub fn half_bounds(&self) -> [f64; 2] {
        let [w, h] = self.extents;
        let (s, c) = self.rotation.sin_cos();
        match self.kind {
            ShapeKind::Rectangle => [
                (w * c.abs() + h * s.abs()) / 2.0,
                (w * s.abs() + h * c.abs()) / 2.0,
            ],
            ShapeKind::Circle => [w / 2.0, h / 2.0],
            ShapeKind::Ellipse => {
                let (a, b) = (w / 2.0, h / 2.0);
                [
                    (a * a * c * c + b * b * s * s).sqrt(),
                    (a * a * s * s + b * b * c * c).sqrt(),
                ]
            }
        }
    }

    /// Whether the point `(px, py)` (canvas coordinates) lies inside.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let dx = px - self.center[0];
        let dy = py - self.center[1];
        let (s, c) = self.rotation.sin_cos();
        // rotate into the shape frame
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        let (hw, hh) = (self.extents[0] / 2.0, self.extents[1] / 2.0);
        match self.kind {
            ShapeKind::Rectangle => u.abs() < hw && v.abs() < hh,
            ShapeKind::Circle | ShapeKind::Ellipse => (u / hw).powi(2) + (v / hh).powi(2) <= 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskLimits {
    pub max_regions: usize,
    /// Minimum shape area in square pixels.
    pub min_area: f64,
}

impl Default for MaskLimits {
    fn default() -> Self {
        Self {
            max_regions: 3,
            min_area: 32.0 * 32.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub canvas_w: u32,
    pub canvas_h: u32,
    pub regions: Vec<ShapeSpec>,
    pub family: MaskFamily,
    pub sigma: f64,
    pub perlin: Option<PerlinMaskParams>,
    pub rng_seed: u64,
    /// Limits the spec was drawn under; [`MaskSpec::validate`] checks them.
    #[serde(default)]
    pub limits: MaskLimits,
}

impl MaskSpec {
    pub fn validate(&self) -> Result<(), MaskError> {
        self.validate_with(&self.limits)
    }

    pub fn validate_with(&self, limits: &MaskLimits) -> Result<(), MaskError> {
        let invalid = |msg: String| Err(MaskError::InvalidSpec(msg));
        if self.canvas_w == 0 || self.canvas_h == 0 {
            return invalid(format!("zero-area canvas {}x{}", self.canvas_w, self.canvas_h));
        }
        if self.regions.is_empty() {
            return invalid("region list is empty".into());
        }
        if self.regions.len() > limits.max_regions {
            return invalid(format!(
                "{} regions exceeds the maximum of {}",
                self.regions.len(),
                limits.max_regions
            ));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(MaskError::NegativeSigma(self.sigma));
        }
        if self.family != MaskFamily::Noise && self.sigma != 0.0 {
            return invalid(format!("sigma must be 0 for a {} mask", self.family));
        }
        if let Some(p) = &self.perlin {
            p.noise.validate()?;
        }
        let (cw, ch) = (f64::from(self.canvas_w), f64::from(self.canvas_h));
        for (i, shape) in self.regions.iter().enumerate() {
            let [w, h] = shape.extents;
            if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
                return invalid(format!("region {i}: extents must be positive"));
            }
            if shape.kind == ShapeKind::Circle && w != h {
                return invalid(format!("region {i}: circle extents differ ({w} vs {h})"));
            }
            if shape.area() < limits.min_area {
                return invalid(format!(
                    "region {i}: area {:.1} below minimum {:.1}",
                    shape.area(),
                    limits.min_area
                ));
            }
            let [hx, hy] = shape.half_bounds();
            let [cx, cy] = shape.center;
            if cx - hx < 0.0 || cy - hy < 0.0 || cx + hx > cw || cy + hy > ch {
                return invalid(format!("region {i}: bounding box leaves the canvas"));
            }
        }
        Ok(())
    }
}

/// Rasterises the union of the spec's shapes, sampling at pixel centres.
pub fn gen_binary_mask(spec: &MaskSpec) -> Result<AugmentedMask, MaskError> {
    spec.validate()?;
    let mut occ = Occupancy::new(spec.canvas_w, spec.canvas_h);
    for shape in &spec.regions {
        let [hx, hy] = shape.half_bounds();
        let x0 = (shape.center[0] - hx).floor().max(0.0) as u32;
        let y0 = (shape.center[1] - hy).floor().max(0.0) as u32;
        let x1 = ((shape.center[0] + hx).ceil() as u32).min(spec.canvas_w);
        let y1 = ((shape.center[1] + hy).ceil() as u32).min(spec.canvas_h);
        for y in y0..y1 {
            for x in x0..x1 {
                if shape.contains(f64::from(x) + 0.5, f64::from(y) + 0.5) {
                    occ.set(x, y, true);
                }
            }
        }
    }
    AugmentedMask::from_occupancy(occ)
}

/// Bounds on random mask layouts. Sizes are fractions of the canvas width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskConstraints {
    pub min_regions: usize,
    pub max_regions: usize,
    pub min_size_frac: f64,
    pub max_size_frac: f64,
    pub kinds: Vec<ShapeKind>,
    pub min_area: f64,
}

impl Default for MaskConstraints {
    fn default() -> Self {
        Self {
            min_regions: 1,
            max_regions: 3,
            min_size_frac: 0.05,
            max_size_frac: 0.25,
            kinds: ShapeKind::ALL.to_vec(),
            min_area: MaskLimits::default().min_area,
        }
    }
}

impl MaskConstraints {
    pub fn limits(&self) -> MaskLimits {
        MaskLimits {
            max_regions: self.max_regions,
            min_area: self.min_area,
        }
    }

    fn check(&self, canvas: (u32, u32)) -> Result<(f64, f64), MaskError> {
        let fail = |msg: String| Err(MaskError::Unsatisfiable(msg));
        if self.min_regions == 0 || self.min_regions > self.max_regions {
            return fail(format!(
                "region count range {}..={} is empty",
                self.min_regions, self.max_regions
            ));
        }
        if self.kinds.is_empty() {
            return fail("no shape kinds allowed".into());
        }
        if !(self.min_size_frac > 0.0 && self.min_size_frac <= self.max_size_frac) {
            return fail(format!(
                "size fractions {}..{} are invalid",
                self.min_size_frac, self.max_size_frac
            ));
        }
        let width = f64::from(canvas.0);
        let lo = self.min_size_frac * width;
        let hi = self.max_size_frac * width;
        if hi > f64::from(canvas.0.min(canvas.1)) {
            return fail(format!("maximum extent {hi:.1}px exceeds the canvas"));
        }
        for kind in &self.kinds {
            let needed = match kind {
                ShapeKind::Rectangle => self.min_area / hi,
                ShapeKind::Circle | ShapeKind::Ellipse => 4.0 * self.min_area / (PI * hi),
            };
            if needed.max(lo) > hi {
                return fail(format!(
                    "a {kind:?} of at most {hi:.1}px cannot reach the minimum area {:.0}",
                    self.min_area
                ));
            }
        }
        // Rotated shapes must still fit: the diagonal of the largest box.
        if hi * std::f64::consts::SQRT_2 > f64::from(canvas.0.min(canvas.1)) {
            return fail(format!("rotated extent {hi:.1}px cannot fit the canvas"));
        }
        Ok((lo, hi))
    }
}

/// Samples a valid mask layout: region count, shape kinds, sizes, rotations
/// and positions are drawn uniformly within `constraints`.
pub fn random_mask_spec(
    canvas: (u32, u32),
    family: MaskFamily,
    constraints: &MaskConstraints,
    seed: u64,
) -> Result<MaskSpec, MaskError> {
    if canvas.0 == 0 || canvas.1 == 0 {
        return Err(MaskError::Unsatisfiable("zero-area canvas".into()));
    }
    let (lo, hi) = constraints.check(canvas)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(constraints.min_regions..=constraints.max_regions);
    let min_area = constraints.min_area;
    let mut regions = Vec::with_capacity(count);
    for _ in 0..count {
        let kind = constraints.kinds[rng.random_range(0..constraints.kinds.len())];
        let (extents, rotation) = match kind {
            ShapeKind::Rectangle => {
                let w = uniform(&mut rng, lo.max(min_area / hi), hi);
                let h = uniform(&mut rng, lo.max(min_area / w), hi);
                ([w, h], rng.random_range(0.0..PI))
            }
            ShapeKind::Circle => {
                let d = uniform(&mut rng, lo.max(2.0 * (min_area / PI).sqrt()), hi);
                ([d, d], 0.0)
            }
            ShapeKind::Ellipse => {
                let w = uniform(&mut rng, lo.max(4.0 * min_area / (PI * hi)), hi);
                let h = uniform(&mut rng, lo.max(4.0 * min_area / (PI * w)), hi);
                ([w, h], rng.random_range(0.0..PI))
            }
        };
        let mut shape = ShapeSpec {
            kind,
            center: [0.0, 0.0],
            extents,
            rotation,
        };
        let [hx, hy] = shape.half_bounds();
        shape.center = [
            uniform(&mut rng, hx, f64::from(canvas.0) - hx),
            uniform(&mut rng, hy, f64::from(canvas.1) - hy),
        ];
        regions.push(shape);
    }
    let spec = MaskSpec {
        canvas_w: canvas.0,
        canvas_h: canvas.1,
        regions,
        family,
        sigma: 0.0,
        perlin: None,
        rng_seed: seed,
        limits: constraints.limits(),
    };
    spec.validate()?;
    Ok(spec)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}
