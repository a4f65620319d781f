use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use super::MaskError;
use crate::annotate::YoloBox;

/// RGB values sampled from fire-annotated reference pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirePalette {
    pub colors: Vec<[u8; 3]>,
    pub source_count: usize,
}

impl FirePalette {
    pub fn new(colors: Vec<[u8; 3]>) -> Result<Self, MaskError> {
        if colors.is_empty() {
            return Err(MaskError::EmptyPalette);
        }
        Ok(Self {
            colors,
            source_count: 0,
        })
    }

    pub fn pick<R: Rng>(&self, rng: &mut R) -> [u8; 3] {
        self.colors[rng.random_range(0..self.colors.len())]
    }

    pub fn load(path: &Path) -> Result<Self, MaskError> {
        let text = fs::read_to_string(path).map_err(|source| MaskError::Io {
            path: path.to_owned(),
            source,
        })?;
        let palette: FirePalette = serde_json::from_str(&text).map_err(|e| {
            MaskError::InvalidSpec(format!("{}: bad palette JSON: {e}", path.display()))
        })?;
        if palette.colors.is_empty() {
            return Err(MaskError::EmptyPalette);
        }
        Ok(palette)
    }

    pub fn save(&self, path: &Path) -> Result<(), MaskError> {
        let text = serde_json::to_string_pretty(self).expect("palettes serialise");
        fs::write(path, text + "\n").map_err(|source| MaskError::Io {
            path: path.to_owned(),
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaletteOptions {
    pub fire_class: u32,
    pub max_pixels: usize,
    pub seed: u64,
}

impl Default for PaletteOptions {
    fn default() -> Self {
        Self {
            fire_class: 0,
            max_pixels: 100_000,
            seed: 0,
        }
    }
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

pub(crate) fn list_images(dir: &Path) -> Result<Vec<PathBuf>, MaskError> {
    let io_err = |source| MaskError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut images: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    images.sort_by(|a, b| (a.file_stem(), a.extension()).cmp(&(b.file_stem(), b.extension())));
    Ok(images)
}

/// Samples fire colours from every image under `root` that has a same-stem
/// YOLO `.txt` file. Images are visited in lexicographic stem order and the
/// result is reservoir-sampled down to `opts.max_pixels`.
pub fn build_palette(root: &Path, opts: &PaletteOptions) -> Result<FirePalette, MaskError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut reservoir: Vec<[u8; 3]> = Vec::new();
    let mut seen: u64 = 0;
    let mut sources = 0;

    for image_path in list_images(root)? {
        let label_path = image_path.with_extension("txt");
        if !label_path.is_file() {
            continue;
        }
        let text = fs::read_to_string(&label_path).map_err(|source| MaskError::Io {
            path: label_path.clone(),
            source,
        })?;
        let mut fire = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = YoloBox::parse(line).map_err(|reason| MaskError::MalformedAnnotation {
                path: label_path.clone(),
                line: idx + 1,
                reason,
            })?;
            if row.class == opts.fire_class {
                fire.push(row);
            }
        }
        if fire.is_empty() {
            continue;
        }
        let img = image::open(&image_path)
            .map_err(|source| MaskError::Image {
                path: image_path.clone(),
                source,
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let mut taken = vec![false; w as usize * h as usize];
        let before = seen;
        for b in fire.iter().filter_map(|r| r.to_pixel_box(w, h)) {
            for y in b.y..b.y1() {
                for x in b.x..b.x1() {
                    let i = y as usize * w as usize + x as usize;
                    if taken[i] {
                        continue;
                    }
                    taken[i] = true;
                    let px = img.get_pixel(x, y).0;
                    seen += 1;
                    if reservoir.len() < opts.max_pixels {
                        reservoir.push(px);
                    } else {
                        let j = rng.random_range(0..seen);
                        if (j as usize) < opts.max_pixels {
                            reservoir[j as usize] = px;
                        }
                    }
                }
            }
        }
        if seen > before {
            sources += 1;
        }
    }
    if reservoir.is_empty() {
        return Err(MaskError::EmptySource(root.to_owned()));
    }
    Ok(FirePalette {
        colors: reservoir,
        source_count: sources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn write(dir: &Path, stem: &str, img: &RgbImage, labels: &str) {
        img.save(dir.join(format!("{stem}.png"))).unwrap();
        fs::write(dir.join(format!("{stem}.txt")), labels).unwrap();
    }

    #[test]
    fn single_colour_source() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_pixel(2, 2, Rgb([255, 0, 0]));
        write(dir.path(), "a", &img, "0 0.5 0.5 1.0 1.0\n");
        let p = build_palette(dir.path(), &PaletteOptions::default()).unwrap();
        assert_eq!(p.colors, vec![[255, 0, 0]; 4]);
        assert_eq!(p.source_count, 1);
    }

    #[test]
    fn only_pixels_inside_fire_boxes() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_fn(8, 4, |x, _| {
            if x < 4 {
                Rgb([230, 20, 0])
            } else {
                Rgb([0, 200, 0])
            }
        });
        // fire box over the left half, a smoke box (class 1) over the right
        write(dir.path(), "a", &img, "0 0.25 0.5 0.5 1.0\n1 0.75 0.5 0.5 1.0\n");
        let p = build_palette(dir.path(), &PaletteOptions::default()).unwrap();
        // direct scan of the fixture's left half
        let expected: Vec<[u8; 3]> = (0..4)
            .flat_map(|y| (0..4).map(move |x| (x, y)))
            .map(|(x, y)| img.get_pixel(x, y).0)
            .collect();
        assert_eq!(p.colors.len(), expected.len());
        assert!(p.colors.iter().all(|c| *c == [230, 20, 0]));
    }

    #[test]
    fn reservoir_caps_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_fn(32, 32, |x, y| Rgb([x as u8 * 8, y as u8 * 8, 7]));
        write(dir.path(), "b", &img, "0 0.5 0.5 1 1\n");
        let opts = PaletteOptions {
            max_pixels: 50,
            seed: 3,
            ..PaletteOptions::default()
        };
        let a = build_palette(dir.path(), &opts).unwrap();
        let b = build_palette(dir.path(), &opts).unwrap();
        assert_eq!(a.colors.len(), 50);
        assert_eq!(a, b);
    }

    #[test]
    fn no_fire_boxes_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_pixel(4, 4, Rgb([1, 2, 3]));
        write(dir.path(), "a", &img, "1 0.5 0.5 1 1\n");
        assert!(matches!(
            build_palette(dir.path(), &PaletteOptions::default()),
            Err(MaskError::EmptySource(_))
        ));
    }

    #[test]
    fn malformed_row_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_pixel(4, 4, Rgb([1, 2, 3]));
        write(dir.path(), "a", &img, "0 0.5 0.5 1 1\n0 0.5 oops 1 1\n");
        match build_palette(dir.path(), &PaletteOptions::default()) {
            Err(MaskError::MalformedAnnotation { path, line, .. }) => {
                assert!(path.ends_with("a.txt"));
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
