use image::{GrayImage, Luma, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{MaskError, MaskFamily};

/// Axis-aligned pixel box, `[x, x + width) x [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl BoundingBox {
    pub fn x1(&self) -> u32 {
        self.x + self.width
    }

    pub fn y1(&self) -> u32 {
        self.y + self.height
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x1() && y >= self.y && y < self.y1()
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        BoundingBox {
            x,
            y,
            width: self.x1().max(other.x1()) - x,
            height: self.y1().max(other.y1()) - y,
        }
    }
}

/// Binary raster; `true` marks an active mask pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occupancy {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Occupancy {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    /// 8-bit grayscale rendering: 255 on active pixels, 0 elsewhere.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    /// Any non-zero pixel counts as active.
    pub fn from_gray(img: &GrayImage) -> Self {
        let mut occ = Self::new(img.width(), img.height());
        for (x, y, p) in img.enumerate_pixels() {
            occ.set(x, y, p.0[0] != 0);
        }
        occ
    }
}

/// One 8-connected group of active pixels.
#[derive(Debug, Clone)]
pub struct Component {
    pub bbox: BoundingBox,
    pub pixels: Vec<(u32, u32)>,
}

/// Labels 8-connected components in raster-scan order of their first pixel.
pub fn connected_components(occ: &Occupancy) -> Vec<Component> {
    let (w, h) = (occ.width, occ.height);
    let mut seen = vec![false; occ.data.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = occ.index(x, y);
            if !occ.data[i] || seen[i] {
                continue;
            }
            seen[i] = true;
            stack.push((x, y));
            let mut pixels = Vec::new();
            let (mut x0, mut y0, mut x1, mut y1) = (x, y, x, y);
            while let Some((cx, cy)) = stack.pop() {
                pixels.push((cx, cy));
                x0 = x0.min(cx);
                y0 = y0.min(cy);
                x1 = x1.max(cx);
                y1 = y1.max(cy);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let nx = i64::from(cx) + dx;
                        let ny = i64::from(cy) + dy;
                        if nx < 0 || ny < 0 || nx >= i64::from(w) || ny >= i64::from(h) {
                            continue;
                        }
                        let j = occ.index(nx as u32, ny as u32);
                        if occ.data[j] && !seen[j] {
                            seen[j] = true;
                            stack.push((nx as u32, ny as u32));
                        }
                    }
                }
            }
            pixels.sort_unstable_by_key(|&(px, py)| (py, px));
            out.push(Component {
                bbox: BoundingBox {
                    x: x0,
                    y: y0,
                    width: x1 - x0 + 1,
                    height: y1 - y0 + 1,
                },
                pixels,
            });
        }
    }
    out
}

/// The augmented mask: colour raster, occupancy and per-component boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedMask {
    pub rgb: RgbImage,
    pub occupancy: Occupancy,
    pub regions: Vec<BoundingBox>,
    pub family: MaskFamily,
}

impl AugmentedMask {
    /// White binary mask over `occupancy`, with regions recomputed.
    pub fn from_occupancy(occupancy: Occupancy) -> Result<Self, MaskError> {
        let rgb = RgbImage::from_fn(occupancy.width, occupancy.height, |x, y| {
            if occupancy.get(x, y) {
                image::Rgb([255, 255, 255])
            } else {
                image::Rgb([0, 0, 0])
            }
        });
        let mut mask = Self {
            rgb,
            occupancy,
            regions: Vec::new(),
            family: MaskFamily::Binary,
        };
        mask.refresh_regions()?;
        Ok(mask)
    }

    pub fn width(&self) -> u32 {
        self.occupancy.width
    }

    pub fn height(&self) -> u32 {
        self.occupancy.height
    }

    pub(crate) fn refresh_regions(&mut self) -> Result<(), MaskError> {
        self.regions = connected_components(&self.occupancy)
            .into_iter()
            .map(|c| c.bbox)
            .collect();
        if self.regions.is_empty() {
            return Err(MaskError::EmptyMask);
        }
        Ok(())
    }

    /// Bounding box of all regions together.
    pub fn extent(&self) -> Option<BoundingBox> {
        let mut it = self.regions.iter();
        let first = *it.next()?;
        Some(it.fold(first, |acc, b| acc.union(b)))
    }

    /// Content digest, used to reference the mask from composites.
    pub fn id(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.width().to_le_bytes());
        hasher.update(self.height().to_le_bytes());
        hasher.update(self.family.as_str().as_bytes());
        hasher.update(self.rgb.as_raw());
        let bits: Vec<u8> = self.occupancy.data.iter().map(|&b| b as u8).collect();
        hasher.update(&bits);
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
