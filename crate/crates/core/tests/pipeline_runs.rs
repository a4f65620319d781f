mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use image::RgbImage;

use flameforge::annotate::{read_manifest, resolve, MANIFEST_FILE};
use flameforge::backend::{
    Backend, BackendError, EmbeddingVector, GenRequest, GenResult, MockBackend, MockConfig,
};
use flameforge::maskgen::{MaskConstraints, ShapeKind};
use flameforge::metrics::summary_csv;
use flameforge::pipeline::{merge_reports, run_generate, run_metrics, PipelineError, REPORT_FILE};
use flameforge::ExperimentConfig;

/// Mock that refuses every request whose seed is divisible by `every`.
struct Flaky {
    inner: MockBackend,
    every: u64,
    refused: AtomicUsize,
}

impl Backend for Flaky {
    fn backend_id(&self) -> String {
        "flaky".into()
    }
    fn generate(&self, req: &GenRequest) -> Result<GenResult, BackendError> {
        if req.seed % self.every == 0 {
            self.refused.fetch_add(1, Ordering::SeqCst);
            return Err(BackendError::Remote {
                status: 503,
                message: "busy".into(),
            });
        }
        self.inner.generate(req)
    }
    fn embed_image(&self, image: &RgbImage) -> Result<EmbeddingVector, BackendError> {
        self.inner.embed_image(image)
    }
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        self.inner.embed_text(text)
    }
    fn embed_inception(&self, image: &RgbImage) -> Result<EmbeddingVector, BackendError> {
        self.inner.embed_inception(image)
    }
}

fn small(root: &std::path::Path, count: usize) -> ExperimentConfig {
    let mut c = common::fixture_config(root, count);
    c.canvas = [128, 128];
    c.masks.min_area = 256.0;
    c
}

#[test]
fn failures_within_budget_are_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = small(tmp.path(), 40);
    config.max_failure_rate = 0.5;
    let flaky = Flaky {
        inner: MockBackend::default(),
        every: 3,
        refused: AtomicUsize::new(0),
    };
    let s = run_generate(&config, "perlin", &flaky).unwrap();
    assert_eq!(s.failed, flaky.refused.load(Ordering::SeqCst));
    assert!(s.failed > 0);
    assert_eq!(s.written + s.failed, 40);
    let recs = read_manifest(&s.manifest).unwrap();
    assert_eq!(recs.len(), s.written);
    assert!(recs.windows(2).all(|w| w[0].index < w[1].index));
}

#[test]
fn failures_over_budget_abort_with_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small(tmp.path(), 40);
    let flaky = Flaky {
        inner: MockBackend::default(),
        every: 3,
        refused: AtomicUsize::new(0),
    };
    let e = run_generate(&config, "perlin", &flaky).unwrap_err();
    assert!(matches!(e, PipelineError::TooManyFailures { .. }), "{e}");
    assert_eq!(e.exit_code(), 3);
}

#[test]
fn no_style_arm_fuses_onto_neutral_gray() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = small(tmp.path(), 3);
    config.arms[0].use_style_image = false;
    config.arms[0].family = flameforge::pipeline::ArmFamily::Binary;
    let s = run_generate(&config, "perlin", &MockBackend::default()).unwrap();
    let dir = config.arm_dir("perlin");
    for rec in read_manifest(&s.manifest).unwrap() {
        assert_eq!(rec.style_source, "neutral-gray");
        let comp = image::open(resolve(&dir, &rec.composite_path).unwrap()).unwrap().to_rgb8();
        let mask = image::open(resolve(&dir, rec.mask_path.as_ref().unwrap()).unwrap()).unwrap().to_luma8();
        for (x, y, p) in comp.enumerate_pixels() {
            // White binary mask saturates the gray canvas.
            let want = if mask.get_pixel(x, y).0[0] > 0 { 255 } else { 128 };
            assert_eq!(p.0, [want; 3]);
        }
    }
}

#[test]
fn baseline_sends_the_style_image_unfused() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small(tmp.path(), 4);
    let s = run_generate(&config, "baseline", &MockBackend::default()).unwrap();
    let recs = read_manifest(&s.manifest).unwrap();
    let dir = config.arm_dir("baseline");
    let mut sources = Vec::new();
    for rec in &recs {
        assert!(rec.mask_path.is_none() && rec.label_path.is_none() && rec.family.is_none());
        assert!(rec.boxes.is_empty());
        let comp = image::open(resolve(&dir, &rec.composite_path).unwrap()).unwrap().to_rgb8();
        let style = flameforge::composer::load_style(
            &tmp.path().join("styles").join(&rec.style_source),
            "x",
            (128, 128),
        )
        .unwrap();
        assert_eq!(comp, style.rgb);
        sources.push(rec.style_source.clone());
    }
    sources.sort();
    sources.dedup();
    assert_eq!(sources.len(), 4, "first epoch should not repeat a style");
}

#[test]
fn labels_match_boxes_and_regions() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small(tmp.path(), 6);
    let s = run_generate(&config, "perlin", &MockBackend::default()).unwrap();
    let dir = config.arm_dir("perlin");
    for rec in read_manifest(&s.manifest).unwrap() {
        let text = std::fs::read_to_string(resolve(&dir, rec.label_path.as_ref().unwrap()).unwrap()).unwrap();
        assert_eq!(text.lines().count(), rec.boxes.len());
        let mask = flameforge::annotate::load_mask(&dir, &rec).unwrap().unwrap();
        assert_eq!(mask.regions.len(), rec.boxes.len());
        for b in &rec.boxes {
            for v in [b.cx, b.cy, b.w, b.h] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}

#[test]
fn unsatisfiable_masks_are_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = small(tmp.path(), 2);
    config.masks = MaskConstraints {
        kinds: vec![ShapeKind::Rectangle],
        min_area: 1e6,
        ..MaskConstraints::default()
    };
    let e = run_generate(&config, "perlin", &MockBackend::default()).unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");
}

#[test]
fn metrics_need_a_manifest_and_real_images() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small(tmp.path(), 2);
    let mock = MockBackend::default();
    let e = run_metrics(&config, &[], Some(tmp.path()), &mock).unwrap_err();
    assert_eq!(e.exit_code(), 4);
    assert!(e.to_string().contains("manifest"), "{e}");

    run_generate(&config, "perlin", &mock).unwrap();
    let e = run_metrics(&config, &["perlin".into()], None, &mock).unwrap_err();
    assert_eq!(e.exit_code(), 4);
    let e = merge_reports(&config).unwrap_err();
    assert_eq!(e.exit_code(), 4);
}

#[test]
fn reports_merge_in_config_order() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small(tmp.path(), 4);
    let mock = MockBackend::new(MockConfig {
        inception_dim: 64,
        ..MockConfig::default()
    });
    for arm in ["baseline", "noise", "perlin"] {
        run_generate(&config, arm, &mock).unwrap();
    }
    let real = tmp.path().join("styles");
    // Evaluate out of order, one arm at a time.
    for arm in ["baseline", "perlin", "noise"] {
        run_metrics(&config, &[arm.into()], Some(&real), &mock).unwrap();
        assert!(config.arm_dir(arm).join(REPORT_FILE).is_file());
    }
    let (path, reports) = merge_reports(&config).unwrap();
    let names: Vec<_> = reports.iter().map(|r| r.arm.as_str()).collect();
    assert_eq!(names, ["perlin", "noise", "baseline"]);
    let csv = std::fs::read_to_string(path).unwrap();
    assert_eq!(csv, summary_csv(&reports));
    let rows: Vec<_> = csv.lines().collect();
    assert_eq!(rows[0], "arm,nFID,CLIP Score,CLIP Conf.");
    assert!(rows[1].starts_with("perlin,") && rows[3].starts_with("baseline,"));
    assert!(rows[3].ends_with(",NA"));
    assert!(config.arm_dir("perlin").join(MANIFEST_FILE).is_file());
}
