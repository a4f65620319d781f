use std::fs;
use std::path::{Path, PathBuf};

use super::config::{ArmConfig, ArmFamily, ExperimentConfig};
use super::seeds::{seed_chain, style_schedule};
use super::{io_err, ordered_map, PipelineError};
use crate::annotate::{
    boxes_from_mask, item_paths, DatasetItem, DatasetRecord, DatasetWriter, DEFAULT_FIRE_CLASS,
    MANIFEST_FILE, SCHEMA_VERSION,
};
use crate::backend::{Backend, BackendError, GenRequest};
use crate::composer::{fuse, load_style, CompositeImage, StyleImage};
use crate::maskgen::{
    build_palette, gen_augmented, gen_binary_mask, list_images, random_mask_spec, sub_seed,
    FirePalette, PaletteOptions,
};

/// Flame and ember tones used when no palette source is configured.
const FALLBACK_COLORS: [[u8; 3]; 8] = [
    [255, 244, 186],
    [255, 214, 92],
    [255, 176, 38],
    [252, 136, 20],
    [238, 96, 16],
    [214, 62, 12],
    [176, 38, 10],
    [120, 24, 8],
];

pub fn default_palette() -> FirePalette {
    FirePalette::new(FALLBACK_COLORS.to_vec()).expect("non-empty")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub manifest: PathBuf,
    pub written: usize,
    pub failed: usize,
}

fn load_palette(config: &ExperimentConfig) -> Result<FirePalette, PipelineError> {
    let p = &config.palette;
    if let Some(file) = &p.file {
        if !file.is_file() {
            return Err(PipelineError::Config(format!("palette file {} not found", file.display())));
        }
        return Ok(FirePalette::load(file)?);
    }
    if let Some(dir) = &p.dir {
        if !dir.is_dir() {
            return Err(PipelineError::Config(format!("palette dir {} not found", dir.display())));
        }
        let opts = PaletteOptions {
            fire_class: p.fire_class,
            max_pixels: p.max_pixels,
            seed: p.seed,
        };
        return Ok(build_palette(dir, &opts)?);
    }
    Ok(default_palette())
}

fn style_pool(config: &ExperimentConfig, arm: &ArmConfig) -> Result<Vec<PathBuf>, PipelineError> {
    if !arm.use_style_image {
        return Ok(Vec::new());
    }
    let Some(dir) = &config.style_dir else {
        log::warn!("arm `{}`: no style_dir configured, using the neutral canvas", arm.name);
        return Ok(Vec::new());
    };
    if !dir.is_dir() {
        return Err(PipelineError::Config(format!("style dir {} not found", dir.display())));
    }
    let pool = list_images(dir)?;
    if pool.is_empty() {
        return Err(PipelineError::Config(format!("style dir {} has no images", dir.display())));
    }
    Ok(pool)
}

fn clear_outputs(dir: &Path) -> Result<(), PipelineError> {
    for sub in ["images", "masks", "labels", "composites"] {
        let p = dir.join(sub);
        if p.is_dir() {
            fs::remove_dir_all(&p).map_err(io_err(&p))?;
        }
    }
    for file in [MANIFEST_FILE, super::REPORT_FILE] {
        let p = dir.join(file);
        if p.is_file() {
            fs::remove_file(&p).map_err(io_err(&p))?;
        }
    }
    Ok(())
}

struct ArmContext<'a> {
    config: &'a ExperimentConfig,
    arm: &'a ArmConfig,
    backend: &'a dyn Backend,
    palette: &'a FirePalette,
    styles: &'a [PathBuf],
    schedule: &'a [usize],
}

impl ArmContext<'_> {
    fn style(&self, index: usize) -> Result<StyleImage, PipelineError> {
        let canvas = self.config.canvas();
        if self.styles.is_empty() {
            return Ok(StyleImage::neutral(canvas));
        }
        let path = &self.styles[self.schedule[index]];
        let id = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        Ok(load_style(path, &id, canvas)?)
    }

    fn item(&self, index: usize) -> Result<DatasetItem, PipelineError> {
        let arm = self.arm;
        let chain = seed_chain(arm.base_seed, index as u64, self.styles.len());
        let style = self.style(index)?;
        let family = arm.family.mask_family();

        let (composite, mask) = match family {
            None => (CompositeImage::unmasked(&style), None),
            Some(family) => {
                let mut spec = random_mask_spec(self.config.canvas(), family, &self.config.masks, chain.mask)?;
                spec.sigma = arm.sigma;
                if arm.family == ArmFamily::Perlin {
                    let binary = gen_binary_mask(&spec)?;
                    spec.perlin = Some(arm.perlin.resolve(&binary, sub_seed(chain.mask, 3)));
                }
                let mask = gen_augmented(&spec, self.palette)?;
                (fuse(&style, &mask, arm.alpha)?, Some(mask))
            }
        };

        let req = GenRequest {
            init_image: composite,
            prompt: arm.prompt.clone(),
            negative_prompt: arm.negative_prompt.clone(),
            denoise_strength: arm.strength(),
            guidance_scale: arm.guidance,
            steps: arm.steps,
            seed: chain.generate,
        };
        let out = self.backend.generate(&req)?;
        if out.image.dimensions() != req.dims() {
            return Err(BackendError::DimensionMismatch {
                expected: req.dims(),
                got: out.image.dimensions(),
            }
            .into());
        }

        let (image_path, mask_path, label_path, composite_path) =
            item_paths(index as u64, mask.is_some());
        let boxes = match &mask {
            Some(m) => boxes_from_mask(m, DEFAULT_FIRE_CLASS)?,
            None => Vec::new(),
        };
        Ok(DatasetItem {
            record: DatasetRecord {
                schema_version: SCHEMA_VERSION,
                index: index as u64,
                arm: arm.name.clone(),
                image_path,
                mask_path,
                label_path,
                composite_path,
                boxes,
                family,
                seeds: chain,
                prompt: arm.prompt.clone(),
                style_source: style.source_id,
            },
            image: out.image,
            composite: req.init_image.rgb,
            occupancy: mask.map(|m| m.occupancy),
        })
    }
}

/// Generates every item of `arm_name` into `<output_root>/<arm>/`.
///
/// Items run on `backend.max_in_flight` workers and are written in index
/// order by a single writer. Backend failures are logged and skipped; the run
/// fails once they exceed `max_failure_rate` of the arm's count.
pub fn run_generate(
    config: &ExperimentConfig,
    arm_name: &str,
    backend: &dyn Backend,
) -> Result<GenerateSummary, PipelineError> {
    let arm = config.arm(arm_name)?;
    let palette = load_palette(config)?;
    let styles = style_pool(config, arm)?;
    let schedule = style_schedule(arm.base_seed, styles.len(), arm.count);
    if let Some(family) = arm.family.mask_family() {
        // Surface impossible mask constraints as a config problem up front.
        random_mask_spec(config.canvas(), family, &config.masks, 0)?;
    }

    let dir = config.arm_dir(&arm.name);
    clear_outputs(&dir)?;
    let mut writer = DatasetWriter::create(&dir)?;
    let ctx = ArmContext {
        config,
        arm,
        backend,
        palette: &palette,
        styles: &styles,
        schedule: &schedule,
    };

    let total = arm.count;
    let budget = config.max_failure_rate * total as f64;
    let mut failed = 0usize;
    let mut written = 0usize;
    let too_many = |failed: usize, last: String| PipelineError::TooManyFailures {
        failed,
        total,
        limit: config.max_failure_rate * 100.0,
        last,
    };
    ordered_map(
        total,
        config.backend.max_in_flight,
        |i| ctx.item(i),
        |i, out| match out {
            Ok(item) => {
                writer.write(&item)?;
                written += 1;
                Ok(())
            }
            Err(PipelineError::Backend(e)) => {
                failed += 1;
                log::warn!("arm `{}` item {i}: {e}", arm.name);
                if failed as f64 > budget {
                    return Err(too_many(failed, e.to_string()));
                }
                Ok(())
            }
            Err(e) => Err(e),
        },
    )?;
    let manifest = writer.finish()?;
    log::info!("arm `{}`: wrote {written} items, {failed} failed", arm.name);
    Ok(GenerateSummary {
        manifest,
        written,
        failed,
    })
}
