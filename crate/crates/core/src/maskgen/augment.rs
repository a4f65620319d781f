use image::Rgb;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::raster::{connected_components, AugmentedMask, Occupancy};
use super::{FirePalette, MaskError, MaskFamily};
use crate::noisefield::{FieldSampler, PerlinParams};

/// Per-pixel brightness jitter used by colouring (+/-10%).
pub const DEFAULT_JITTER: f64 = 0.10;

fn expect_family(mask: &AugmentedMask, expected: MaskFamily) -> Result<(), MaskError> {
    if mask.family != expected {
        return Err(MaskError::WrongFamily {
            expected,
            found: mask.family,
        });
    }
    Ok(())
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Fills each connected region with one palette colour and applies a
/// per-pixel brightness factor drawn from `[1 - jitter, 1 + jitter]`.
pub fn colorize(
    mask: &AugmentedMask,
    palette: &FirePalette,
    seed: u64,
    jitter: f64,
) -> Result<AugmentedMask, MaskError> {
    expect_family(mask, MaskFamily::Binary)?;
    if palette.colors.is_empty() {
        return Err(MaskError::EmptyPalette);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = mask.clone();
    for component in connected_components(&mask.occupancy) {
        let color = palette.pick(&mut rng);
        for &(x, y) in &component.pixels {
            let k = if jitter > 0.0 {
                rng.random_range(1.0 - jitter..=1.0 + jitter)
            } else {
                1.0
            };
            let px = Rgb(color.map(|c| to_u8(f64::from(c) * k)));
            out.rgb.put_pixel(x, y, px);
        }
    }
    out.family = MaskFamily::Colored;
    Ok(out)
}

/// Adds zero-mean Gaussian noise with standard deviation `sigma` (on the
/// normalised `[0, 1]` channel scale) to every active pixel.
pub fn add_gaussian(mask: &AugmentedMask, sigma: f64, seed: u64) -> Result<AugmentedMask, MaskError> {
    expect_family(mask, MaskFamily::Colored)?;
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(MaskError::NegativeSigma(sigma));
    }
    let mut out = mask.clone();
    out.family = MaskFamily::Noise;
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if !mask.occupancy.get(x, y) {
                continue;
            }
            let p = out.rgb.get_pixel_mut(x, y);
            for c in p.0.iter_mut() {
                let v = f64::from(*c) / 255.0 + normal.sample(&mut rng);
                *c = to_u8(v.clamp(0.0, 1.0) * 255.0);
            }
        }
    }
    Ok(out)
}

/// Parameters for the Perlin family.
///
/// Noise is rendered over the mask's overall bounding box, so
/// `noise.frequency` counts cells across that box and `noise.warp_amplitude`
/// is in pixels. A pixel survives erosion when
/// `warped + depth >= cut_threshold`, where `depth` runs from 0 on the
/// region boundary to 1 at its deepest pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerlinMaskParams {
    pub noise: PerlinParams,
    pub cut_threshold: f64,
}

impl PerlinMaskParams {
    pub const DEFAULT_CUT: f64 = 0.0;
    pub const DEFAULT_WARP_FRACTION: f64 = 0.25;

    /// Defaults scaled to the mask: 4 cells and a warp of a quarter of the
    /// bounding-box width.
    pub fn for_mask(mask: &AugmentedMask, seed: u64) -> Self {
        let width = mask.extent().map_or(1, |b| b.width);
        Self {
            noise: PerlinParams {
                warp_amplitude: Self::DEFAULT_WARP_FRACTION * f64::from(width),
                ..PerlinParams::with_seed(seed)
            },
            cut_threshold: Self::DEFAULT_CUT,
        }
    }
}

/// Modulates intensity by `(1 + fbm) / 2` and erodes the boundary with a
/// domain-warped field. Erosion is relaxed per region rather than emptying it.
pub fn apply_perlin(mask: &AugmentedMask, params: &PerlinMaskParams) -> Result<AugmentedMask, MaskError> {
    expect_family(mask, MaskFamily::Colored)?;
    params.noise.validate()?;
    let extent = mask.extent().ok_or(MaskError::EmptyMask)?;
    let sampler = FieldSampler::new(extent.width, &params.noise)?;
    let depth = normalized_depth(&mask.occupancy);

    let mut occupancy = mask.occupancy.clone();
    let width = mask.width() as usize;
    let mut plain = vec![0.0; width * mask.height() as usize];
    for component in connected_components(&mask.occupancy) {
        let scores: Vec<f64> = component
            .pixels
            .iter()
            .map(|&(x, y)| {
                let (lx, ly) = (x - extent.x, y - extent.y);
                let i = y as usize * width + x as usize;
                plain[i] = sampler.plain(lx, ly);
                sampler.warped(lx, ly) + depth[i]
            })
            .collect();
        let mut threshold = params.cut_threshold;
        while !scores.iter().any(|&s| s >= threshold) {
            threshold -= 0.25;
        }
        for (&(x, y), &s) in component.pixels.iter().zip(&scores) {
            occupancy.set(x, y, s >= threshold);
        }
    }
    drop_specks(&mut occupancy, mask.occupancy.count());

    let mut out = mask.clone();
    out.occupancy = occupancy;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let p = out.rgb.get_pixel_mut(x, y);
            if !out.occupancy.get(x, y) {
                *p = Rgb([0, 0, 0]);
                continue;
            }
            let t = (1.0 + plain[y as usize * width + x as usize]) / 2.0;
            *p = Rgb(p.0.map(|c| to_u8(f64::from(c) * t)));
        }
    }
    out.family = MaskFamily::Perlin;
    out.refresh_regions()?;
    Ok(out)
}

/// Removes fragments smaller than 1% of the original mask area (at least
/// 16 px), always keeping the largest component.
fn drop_specks(occ: &mut Occupancy, original_area: usize) {
    let min_size = (original_area / 100).max(16);
    let components = connected_components(occ);
    let largest = components
        .iter()
        .enumerate()
        .max_by_key(|(i, c)| (c.pixels.len(), std::cmp::Reverse(*i)))
        .map(|(i, _)| i);
    for (i, c) in components.iter().enumerate() {
        if c.pixels.len() < min_size && Some(i) != largest {
            for &(x, y) in &c.pixels {
                occ.set(x, y, false);
            }
        }
    }
}

/// Chamfer (3-4) distance to the nearest inactive pixel or canvas edge,
/// scaled per component so the deepest pixel reads 1.
fn normalized_depth(occ: &Occupancy) -> Vec<f64> {
    let (w, h) = (occ.width() as usize, occ.height() as usize);
    const INF: u32 = u32::MAX / 2;
    let mut d = vec![0u32; w * h];
    for y in 0..h {
        for x in 0..w {
            if occ.get(x as u32, y as u32) {
                d[y * w + x] = INF;
            }
        }
    }
    // outside the canvas counts as inactive
    let at = |d: &[u32], x: isize, y: isize| -> u32 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0
        } else {
            d[y as usize * w + x as usize]
        }
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            if d[i] == 0 {
                continue;
            }
            let best = [
                at(&d, x - 1, y) + 3,
                at(&d, x, y - 1) + 3,
                at(&d, x - 1, y - 1) + 4,
                at(&d, x + 1, y - 1) + 4,
            ]
            .into_iter()
            .min()
            .unwrap();
            d[i] = d[i].min(best);
        }
    }
    for y in (0..h as isize).rev() {
        for x in (0..w as isize).rev() {
            let i = y as usize * w + x as usize;
            if d[i] == 0 {
                continue;
            }
            let best = [
                at(&d, x + 1, y) + 3,
                at(&d, x, y + 1) + 3,
                at(&d, x + 1, y + 1) + 4,
                at(&d, x - 1, y + 1) + 4,
            ]
            .into_iter()
            .min()
            .unwrap();
            d[i] = d[i].min(best);
        }
    }
    let mut depth = vec![0.0; w * h];
    for c in connected_components(occ) {
        let max = c
            .pixels
            .iter()
            .map(|&(x, y)| d[y as usize * w + x as usize])
            .max()
            .unwrap_or(1)
            .max(1);
        for &(x, y) in &c.pixels {
            let i = y as usize * w + x as usize;
            depth[i] = f64::from(d[i]) / f64::from(max);
        }
    }
    depth
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskgen::{gen_binary_mask, MaskSpec, ShapeKind, ShapeSpec};
    use image::RgbImage;

    fn circle_mask(r: f64) -> AugmentedMask {
        let spec = MaskSpec {
            canvas_w: 256,
            canvas_h: 256,
            regions: vec![ShapeSpec {
                kind: ShapeKind::Circle,
                center: [128.0, 128.0],
                extents: [2.0 * r, 2.0 * r],
                rotation: 0.0,
            }],
            family: MaskFamily::Binary,
            sigma: 0.0,
            perlin: None,
            rng_seed: 0,
            limits: Default::default(),
        };
        gen_binary_mask(&spec).unwrap()
    }

    fn flat(mask: &AugmentedMask, color: [u8; 3]) -> AugmentedMask {
        colorize(mask, &FirePalette::new(vec![color]).unwrap(), 0, 0.0).unwrap()
    }

    #[test]
    fn single_colour_without_jitter() {
        let m = circle_mask(40.0);
        let c = flat(&m, [200, 80, 10]);
        for (x, y, p) in c.rgb.enumerate_pixels() {
            if c.occupancy.get(x, y) {
                assert_eq!(p.0, [200, 80, 10]);
            } else {
                assert_eq!(p.0, [0, 0, 0]);
            }
        }
        assert_eq!(c.occupancy, m.occupancy);
        assert_eq!(c.family, MaskFamily::Colored);
    }

    #[test]
    fn jitter_is_unbiased() {
        let m = circle_mask(64.0);
        let palette = FirePalette::new(vec![[180, 90, 40]]).unwrap();
        let c = colorize(&m, &palette, 5, DEFAULT_JITTER).unwrap();
        let mut sum = [0.0f64; 3];
        let mut n = 0.0;
        for (x, y, p) in c.rgb.enumerate_pixels() {
            if c.occupancy.get(x, y) {
                for k in 0..3 {
                    sum[k] += f64::from(p.0[k]);
                }
                n += 1.0;
            }
        }
        assert!(n > 10_000.0);
        for (k, target) in [180.0, 90.0, 40.0].iter().enumerate() {
            let mean = sum[k] / n;
            assert!((mean - target).abs() / target < 0.02, "channel {k}: {mean}");
        }
    }

    #[test]
    fn empty_palette_rejected() {
        let m = circle_mask(40.0);
        let empty = FirePalette {
            colors: vec![],
            source_count: 0,
        };
        assert!(matches!(colorize(&m, &empty, 0, 0.0), Err(MaskError::EmptyPalette)));
    }

    #[test]
    fn family_chain_is_enforced() {
        let m = circle_mask(40.0);
        assert!(matches!(add_gaussian(&m, 0.1, 0), Err(MaskError::WrongFamily { .. })));
        let c = flat(&m, [10, 20, 30]);
        assert!(colorize(&c, &FirePalette::new(vec![[1, 1, 1]]).unwrap(), 0, 0.0).is_err());
        let n = add_gaussian(&c, 0.1, 0).unwrap();
        assert!(apply_perlin(&n, &PerlinMaskParams::for_mask(&n, 0)).is_err());
    }

    #[test]
    fn zero_sigma_is_identity() {
        let c = flat(&circle_mask(40.0), [201, 99, 3]);
        let n = add_gaussian(&c, 0.0, 42).unwrap();
        assert_eq!(n.rgb, c.rgb);
        assert_eq!(n.occupancy, c.occupancy);
        assert_eq!(n.family, MaskFamily::Noise);
    }

    #[test]
    fn negative_sigma_rejected() {
        let c = flat(&circle_mask(40.0), [201, 99, 3]);
        assert!(matches!(add_gaussian(&c, -0.1, 0), Err(MaskError::NegativeSigma(_))));
    }

    #[test]
    fn sweep_grid_accepted() {
        let c = flat(&circle_mask(40.0), [128, 128, 128]);
        for sigma in [0.01, 0.05, 0.1, 0.5] {
            let n = add_gaussian(&c, sigma, 1).unwrap();
            assert_eq!(n.occupancy, c.occupancy);
            for (x, y, p) in n.rgb.enumerate_pixels() {
                if !n.occupancy.get(x, y) {
                    assert_eq!(p.0, [0, 0, 0]);
                }
            }
        }
    }

    #[test]
    fn gaussian_std_matches_sigma() {
        let mut occ = Occupancy::new(1000, 1000);
        for y in 0..1000 {
            for x in 0..1000 {
                occ.set(x, y, true);
            }
        }
        let mut mask = AugmentedMask::from_occupancy(occ).unwrap();
        mask.rgb = RgbImage::from_pixel(1000, 1000, Rgb([128, 128, 128]));
        mask.family = MaskFamily::Colored;
        let n = add_gaussian(&mask, 0.1, 2024).unwrap();
        let vals: Vec<f64> = n
            .rgb
            .pixels()
            .map(|p| (f64::from(p.0[0]) - 128.0) / 255.0)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        let std = var.sqrt();
        assert!((std - 0.1).abs() / 0.1 < 0.02, "std {std}");
    }

    #[test]
    fn no_erosion_configuration_keeps_occupancy() {
        let c = flat(&circle_mask(50.0), [220, 120, 30]);
        let params = PerlinMaskParams {
            noise: PerlinParams {
                octaves: 1,
                warp_amplitude: 0.0,
                ..PerlinParams::with_seed(4)
            },
            cut_threshold: -1.0,
        };
        let p = apply_perlin(&c, &params).unwrap();
        assert_eq!(p.occupancy, c.occupancy);
        assert_ne!(p.rgb, c.rgb);
        assert_eq!(p.family, MaskFamily::Perlin);
    }

    #[test]
    fn perlin_is_deterministic_and_clean() {
        let c = flat(&circle_mask(64.0), [220, 120, 30]);
        let params = PerlinMaskParams::for_mask(&c, 77);
        let a = apply_perlin(&c, &params).unwrap();
        let b = apply_perlin(&c, &params).unwrap();
        assert_eq!(a, b);
        assert!(a.occupancy.count() > 0);
        assert!(a.occupancy.count() < c.occupancy.count());
        for (x, y, p) in a.rgb.enumerate_pixels() {
            if !a.occupancy.get(x, y) {
                assert_eq!(p.0, [0, 0, 0]);
            }
            // erosion never grows the mask
            if a.occupancy.get(x, y) {
                assert!(c.occupancy.get(x, y));
            }
        }
    }

    #[test]
    fn depth_peaks_at_one() {
        let m = circle_mask(30.0);
        let d = normalized_depth(&m.occupancy);
        let max = d.iter().cloned().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
        assert_eq!(d[0], 0.0);
    }
}
