#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use flameforge::maskgen::{BoundingBox, Occupancy};
use flameforge::ExperimentConfig;
use image::{Rgb, RgbImage};

/// Component boxes by flood fill, 8-connected, sorted by (y, x).
pub fn component_boxes(occ: &Occupancy) -> Vec<BoundingBox> {
    let (w, h) = (occ.width() as i64, occ.height() as i64);
    let mut seen = vec![false; (w * h) as usize];
    let mut boxes = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            let i = (sy * w + sx) as usize;
            if seen[i] || !occ.get(sx as u32, sy as u32) {
                continue;
            }
            seen[i] = true;
            let mut stack = vec![(sx, sy)];
            let (mut x0, mut y0, mut x1, mut y1) = (sx, sy, sx, sy);
            while let Some((x, y)) = stack.pop() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let j = (ny * w + nx) as usize;
                        if !seen[j] && occ.get(nx as u32, ny as u32) {
                            seen[j] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            boxes.push(BoundingBox {
                x: x0 as u32,
                y: y0 as u32,
                width: (x1 - x0 + 1) as u32,
                height: (y1 - y0 + 1) as u32,
            });
        }
    }
    boxes.sort_by_key(|b| (b.y, b.x, b.width, b.height));
    boxes
}

pub fn sorted(mut boxes: Vec<BoundingBox>) -> Vec<BoundingBox> {
    boxes.sort_by_key(|b| (b.y, b.x, b.width, b.height));
    boxes
}

/// A few smooth synthetic "photos" of different sizes and aspect ratios.
pub fn write_style_images(dir: &Path, n: usize) {
    fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        let (w, h) = [(320, 240), (256, 256), (600, 300)][i % 3];
        let img = RgbImage::from_fn(w, h, |x, y| {
            let k = i as u32 * 37;
            Rgb([
                ((x * 255 / w + k) % 256) as u8,
                ((y * 255 / h + 2 * k) % 256) as u8,
                (((x + y) * 128 / (w + h) + 3 * k) % 256) as u8,
            ])
        });
        img.save(dir.join(format!("style_{i:02}.png"))).unwrap();
    }
}

/// Mock-backend experiment with three arms of `count` images each.
pub fn fixture_config(root: &Path, count: usize) -> ExperimentConfig {
    let styles = root.join("styles");
    write_style_images(&styles, 5);
    let text = format!(
        r#"
style_dir = "{styles}"
output_root = "{out}"

[backend]
kind = "mock"
max_in_flight = 4

[[arms]]
name = "perlin"
family = "perlin"
count = {count}
base_seed = 11

[[arms]]
name = "noise"
family = "noise"
sigma = 0.1
count = {count}
base_seed = 12

[[arms]]
name = "baseline"
family = "baseline"
count = {count}
base_seed = 13
"#,
        styles = styles.display(),
        out = root.join("out").display(),
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

/// Every regular file under `root`, keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}
