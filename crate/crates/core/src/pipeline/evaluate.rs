use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::{io_err, ordered_map, PipelineError};
use crate::annotate::{crop_regions, load_mask, load_rgb, read_manifest, resolve, MANIFEST_FILE};
use crate::backend::{Backend, EmbeddingVector};
use crate::composer::load_style;
use crate::maskgen::list_images;
use crate::metrics::{
    aggregate, clip_confidence, clip_score, fit_gaussian, frechet_distance, summary_csv,
    ArmResults, ImageScores, MetricsReport,
};

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.csv";

fn missing(what: String) -> PipelineError {
    PipelineError::MissingInput(what)
}

fn real_embeddings(
    config: &ExperimentConfig,
    dir: &Path,
    backend: &dyn Backend,
) -> Result<Vec<EmbeddingVector>, PipelineError> {
    if !dir.is_dir() {
        return Err(missing(format!("real image dir {} not found", dir.display())));
    }
    let paths = list_images(dir)?;
    if paths.len() < 2 {
        return Err(missing(format!(
            "real image dir {} needs at least 2 images, found {}",
            dir.display(),
            paths.len()
        )));
    }
    let mut out = Vec::with_capacity(paths.len());
    ordered_map(
        paths.len(),
        config.backend.max_in_flight,
        |i| -> Result<EmbeddingVector, PipelineError> {
            let style = load_style(&paths[i], "real", config.canvas())?;
            Ok(backend.embed_inception(&style.rgb)?)
        },
        |_, v| {
            out.push(v?);
            Ok(())
        },
    )?;
    Ok(out)
}

struct ImageEval {
    inception: EmbeddingVector,
    scores: ImageScores,
}

/// Embeds and scores every generated image of one arm.
fn evaluate_arm(
    config: &ExperimentConfig,
    name: &str,
    backend: &dyn Backend,
    texts: &HashMap<String, EmbeddingVector>,
) -> Result<Vec<ImageEval>, PipelineError> {
    let dir = config.arm_dir(name);
    let manifest = dir.join(MANIFEST_FILE);
    if !manifest.is_file() {
        return Err(missing(format!(
            "no manifest for arm `{name}` at {} (run generate first)",
            manifest.display()
        )));
    }
    let records = read_manifest(&manifest)?;
    let m = &config.metrics;
    let (fire, nonfire) = (&texts[&m.fire_prompt], &texts[&m.nonfire_prompt]);
    let mut out = Vec::with_capacity(records.len());
    ordered_map(
        records.len(),
        config.backend.max_in_flight,
        |i| -> Result<ImageEval, PipelineError> {
            let rec = &records[i];
            let image = load_rgb(&resolve(&dir, &rec.image_path)?)?;
            let inception = backend.embed_inception(&image)?;
            let clip = backend.embed_image(&image)?;
            let clip_score = clip_score(&clip, &texts[&rec.prompt])?;
            let mut region_confidences = Vec::new();
            if let Some(mask) = load_mask(&dir, rec)? {
                for patch in crop_regions(&image, &mask, m.crop_pad)? {
                    let e = backend.embed_image(&patch)?;
                    region_confidences.push(clip_confidence(&e, fire, nonfire, m.temperature)?);
                }
            }
            Ok(ImageEval {
                inception,
                scores: ImageScores {
                    clip_score,
                    region_confidences,
                },
            })
        },
        |_, r| {
            out.push(r?);
            Ok(())
        },
    )?;
    if out.len() < 2 {
        return Err(missing(format!(
            "arm `{name}` has {} images; FID needs at least 2",
            out.len()
        )));
    }
    Ok(out)
}

fn prompt_embeddings(
    config: &ExperimentConfig,
    arms: &[String],
    backend: &dyn Backend,
) -> Result<HashMap<String, EmbeddingVector>, PipelineError> {
    let mut texts = HashMap::new();
    let m = &config.metrics;
    let mut wanted = vec![m.fire_prompt.clone(), m.nonfire_prompt.clone()];
    for a in arms {
        wanted.push(config.arm(a)?.prompt.clone());
    }
    // Manifests may carry prompts from older configs; embed those too.
    for a in arms {
        let manifest = config.arm_dir(a).join(MANIFEST_FILE);
        if manifest.is_file() {
            wanted.extend(read_manifest(&manifest)?.into_iter().map(|r| r.prompt));
        }
    }
    for t in wanted {
        if !texts.contains_key(&t) {
            let e = backend.embed_text(&t)?;
            texts.insert(t, e);
        }
    }
    Ok(texts)
}

fn write_json(path: &Path, report: &MetricsReport) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(report).expect("reports serialise");
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Scores `arms` (all configured arms when empty) against the real set.
///
/// Writes `<root>/<arm>/report.json` per arm and `<root>/summary.csv` in
/// config order. `real_dir` overrides `metrics.real_dir`.
pub fn run_metrics(
    config: &ExperimentConfig,
    arms: &[String],
    real_dir: Option<&Path>,
    backend: &dyn Backend,
) -> Result<Vec<MetricsReport>, PipelineError> {
    let mut selected: Vec<String> = if arms.is_empty() {
        config.arms.iter().map(|a| a.name.clone()).collect()
    } else {
        for a in arms {
            config.arm(a)?;
        }
        arms.to_vec()
    };
    selected.sort_by_key(|a| config.arms.iter().position(|c| &c.name == a));
    selected.dedup();
    for a in &selected {
        let manifest = config.arm_dir(a).join(MANIFEST_FILE);
        if !manifest.is_file() {
            return Err(missing(format!(
                "no manifest for arm `{a}` at {} (run generate first)",
                manifest.display()
            )));
        }
    }
    let real_dir = real_dir
        .map(Path::to_path_buf)
        .or_else(|| config.metrics.real_dir.clone())
        .ok_or_else(|| missing("no real image dir (set metrics.real_dir or --real-dir)".into()))?;

    let real = fit_gaussian(&real_embeddings(config, &real_dir, backend)?)?;
    let texts = prompt_embeddings(config, &selected, backend)?;
    let mut reports = Vec::with_capacity(selected.len());
    for name in &selected {
        let evals = evaluate_arm(config, name, backend, &texts)?;
        let inception: Vec<EmbeddingVector> = evals.iter().map(|e| e.inception.clone()).collect();
        let fid = frechet_distance(&real, &fit_gaussian(&inception)?)?;
        let report = aggregate(&ArmResults {
            arm: name.clone(),
            fid,
            normalization_mode: config.metrics.normalization,
            reference: config.metrics.reference,
            images: evals.into_iter().map(|e| e.scores).collect(),
            real_count: real.n,
        })?;
        write_json(&config.arm_dir(name).join(REPORT_FILE), &report)?;
        log::info!("arm `{name}`: fid {:.4}, nfid {:.4}", report.fid, report.nfid);
        reports.push(report);
    }
    write_summary(config, &reports)?;
    Ok(reports)
}

fn write_summary(config: &ExperimentConfig, reports: &[MetricsReport]) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(&config.output_root).map_err(io_err(&config.output_root))?;
    let path = config.output_root.join(SUMMARY_FILE);
    fs::write(&path, summary_csv(reports)).map_err(io_err(&path))?;
    Ok(path)
}

/// Collects every configured arm's `report.json` into `summary.csv`, in the
/// order the config lists the arms.
pub fn merge_reports(config: &ExperimentConfig) -> Result<(PathBuf, Vec<MetricsReport>), PipelineError> {
    let mut reports = Vec::with_capacity(config.arms.len());
    for arm in &config.arms {
        let path = config.arm_dir(&arm.name).join(REPORT_FILE);
        let text = fs::read_to_string(&path).map_err(|_| {
            missing(format!("no report for arm `{}` at {} (run evaluate first)", arm.name, path.display()))
        })?;
        let report: MetricsReport = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        reports.push(report);
    }
    let path = write_summary(config, &reports)?;
    Ok((path, reports))
}
