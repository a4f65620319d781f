use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::PipelineError;
use crate::backend::{Backend, HttpBackend, HttpConfig, MockBackend, MockConfig, DEFAULT_STEPS};
use crate::maskgen::{AugmentedMask, MaskConstraints, MaskFamily, PerlinMaskParams};
use crate::metrics::{NormalizationMode, DEFAULT_FIRE_PROMPT, DEFAULT_NONFIRE_PROMPT, DEFAULT_TEMPERATURE};
use crate::noisefield::PerlinParams;

pub const DEFAULT_PROMPT: &str =
    "wildfire with flame and smoke, drone view, photo realistic, high resolution, 4k, HD.";
pub const DEFAULT_STRENGTH: f64 = 0.5;
pub const BASELINE_STRENGTH: f64 = 0.99;
pub const DEFAULT_GUIDANCE: f64 = 5.0;

pub const ENV_BACKEND_URL: &str = "FLAMEFORGE_BACKEND_URL";
pub const ENV_OUTPUT_ROOT: &str = "FLAMEFORGE_OUTPUT_ROOT";

/// What an arm fuses into the style image. `Baseline` sends the style image
/// with no mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmFamily {
    #[serde(alias = "none")]
    Baseline,
    Binary,
    Colored,
    Noise,
    Perlin,
}

impl ArmFamily {
    pub fn mask_family(self) -> Option<MaskFamily> {
        match self {
            ArmFamily::Baseline => None,
            ArmFamily::Binary => Some(MaskFamily::Binary),
            ArmFamily::Colored => Some(MaskFamily::Colored),
            ArmFamily::Noise => Some(MaskFamily::Noise),
            ArmFamily::Perlin => Some(MaskFamily::Perlin),
        }
    }
}

/// Perlin settings for an arm. The warp defaults to a fraction of the mask's
/// bounding-box width unless an absolute pixel amplitude is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerlinSettings {
    pub frequency: f64,
    pub octaves: u32,
    pub lacunarity: f64,
    pub persistence: f64,
    pub warp_fraction: f64,
    pub warp_amplitude: Option<f64>,
    pub cut_threshold: f64,
}

impl Default for PerlinSettings {
    fn default() -> Self {
        let p = PerlinParams::default();
        Self {
            frequency: p.frequency,
            octaves: p.octaves,
            lacunarity: p.lacunarity,
            persistence: p.persistence,
            warp_fraction: PerlinMaskParams::DEFAULT_WARP_FRACTION,
            warp_amplitude: None,
            cut_threshold: PerlinMaskParams::DEFAULT_CUT,
        }
    }
}

impl PerlinSettings {
    pub fn resolve(&self, mask: &AugmentedMask, seed: u64) -> PerlinMaskParams {
        let width = mask.extent().map_or(1, |b| b.width);
        PerlinMaskParams {
            noise: PerlinParams {
                seed,
                frequency: self.frequency,
                octaves: self.octaves,
                lacunarity: self.lacunarity,
                persistence: self.persistence,
                warp_amplitude: self
                    .warp_amplitude
                    .unwrap_or(self.warp_fraction * f64::from(width)),
                ..PerlinParams::default()
            },
            cut_threshold: self.cut_threshold,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let probe = PerlinParams {
            frequency: self.frequency,
            octaves: self.octaves,
            lacunarity: self.lacunarity,
            persistence: self.persistence,
            warp_amplitude: self.warp_amplitude.unwrap_or(self.warp_fraction),
            ..PerlinParams::default()
        };
        probe.validate().map_err(|e| e.to_string())?;
        if !self.cut_threshold.is_finite() {
            return Err("cut_threshold must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub name: String,
    pub family: ArmFamily,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub perlin: PerlinSettings,
    #[serde(default = "yes")]
    pub use_style_image: bool,
    #[serde(default = "one")]
    pub alpha: f64,
    /// Defaults to 0.5, or 0.99 for the baseline.
    #[serde(default)]
    pub strength: Option<f64>,
    #[serde(default = "default_guidance")]
    pub guidance: f64,
    #[serde(default = "default_steps")]
    pub steps: u32,
    #[serde(default = "default_prompt")]
    pub prompt: String,
    #[serde(default)]
    pub negative_prompt: String,
    pub count: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn default_guidance() -> f64 {
    DEFAULT_GUIDANCE
}
fn default_steps() -> u32 {
    DEFAULT_STEPS
}
fn default_prompt() -> String {
    DEFAULT_PROMPT.to_string()
}

impl ArmConfig {
    pub fn strength(&self) -> f64 {
        self.strength.unwrap_or(match self.family {
            ArmFamily::Baseline => BASELINE_STRENGTH,
            _ => DEFAULT_STRENGTH,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub kind: BackendKind,
    pub url: String,
    pub timeout_secs: f64,
    pub retries: u32,
    pub max_in_flight: usize,
    pub mock: MockConfig,
}

impl Default for BackendSettings {
    fn default() -> Self {
        let http = HttpConfig::default();
        Self {
            kind: BackendKind::Mock,
            url: http.url,
            timeout_secs: http.timeout_secs,
            retries: http.retries,
            max_in_flight: 4,
            mock: MockConfig::default(),
        }
    }
}

impl BackendSettings {
    pub fn build(&self) -> Result<Arc<dyn Backend>, PipelineError> {
        Ok(match self.kind {
            BackendKind::Mock => Arc::new(MockBackend::new(self.mock.clone())),
            BackendKind::Http => Arc::new(
                HttpBackend::new(HttpConfig {
                    url: self.url.clone(),
                    timeout_secs: self.timeout_secs,
                    retries: self.retries,
                    ..HttpConfig::default()
                })
                .map_err(|e| PipelineError::Config(e.to_string()))?,
            ),
        })
    }

    /// Points the pipeline at a real server.
    pub fn use_url(&mut self, url: &str) {
        self.kind = BackendKind::Http;
        self.url = url.to_string();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaletteSettings {
    /// JSON palette written by `palette build`.
    pub file: Option<PathBuf>,
    /// Reference images with YOLO labels, sampled at run time.
    pub dir: Option<PathBuf>,
    pub fire_class: u32,
    pub max_pixels: usize,
    pub seed: u64,
}

impl Default for PaletteSettings {
    fn default() -> Self {
        Self {
            file: None,
            dir: None,
            fire_class: 0,
            max_pixels: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSettings {
    pub normalization: NormalizationMode,
    pub reference: f64,
    pub fire_prompt: String,
    pub nonfire_prompt: String,
    pub temperature: f64,
    pub crop_pad: f64,
    pub real_dir: Option<PathBuf>,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        Self {
            normalization: NormalizationMode::None,
            reference: 1.0,
            fire_prompt: DEFAULT_FIRE_PROMPT.to_string(),
            nonfire_prompt: DEFAULT_NONFIRE_PROMPT.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            crop_pad: 0.1,
            real_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub style_dir: Option<PathBuf>,
    pub output_root: PathBuf,
    #[serde(default = "default_canvas")]
    pub canvas: [u32; 2],
    #[serde(default = "default_failure_rate")]
    pub max_failure_rate: f64,
    #[serde(default)]
    pub palette: PaletteSettings,
    #[serde(default)]
    pub masks: MaskConstraints,
    #[serde(default)]
    pub backend: BackendSettings,
    #[serde(default)]
    pub metrics: MetricsSettings,
    pub arms: Vec<ArmConfig>,
}

fn default_canvas() -> [u32; 2] {
    [512, 512]
}
fn default_failure_rate() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            PipelineError::Config(e.to_string().lines().collect::<Vec<_>>().join(" "))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, resolves relative paths against its directory and
    /// applies environment overrides.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply_env();
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_root);
        for p in [
            self.style_dir.as_mut(),
            self.palette.file.as_mut(),
            self.palette.dir.as_mut(),
            self.metrics.real_dir.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(ENV_BACKEND_URL) {
            if !url.is_empty() {
                self.backend.use_url(&url);
            }
        }
        if let Ok(root) = std::env::var(ENV_OUTPUT_ROOT) {
            if !root.is_empty() {
                self.output_root = PathBuf::from(root);
            }
        }
    }

    pub fn canvas(&self) -> (u32, u32) {
        (self.canvas[0], self.canvas[1])
    }

    pub fn arm(&self, name: &str) -> Result<&ArmConfig, PipelineError> {
        self.arms
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| PipelineError::UnknownArm(name.to_string()))
    }

    pub fn arm_dir(&self, name: &str) -> PathBuf {
        self.output_root.join(name)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(m));
        if self.canvas[0] == 0 || self.canvas[1] == 0 {
            return err("canvas dimensions must be non-zero".into());
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return err("max_failure_rate must lie in [0, 1]".into());
        }
        if self.backend.max_in_flight == 0 {
            return err("backend.max_in_flight must be >= 1".into());
        }
        if self.metrics.normalization == NormalizationMode::DivideByReference
            && !(self.metrics.reference > 0.0)
        {
            return err("metrics.reference must be > 0 for divide_by_reference".into());
        }
        if !(self.metrics.temperature > 0.0) {
            return err("metrics.temperature must be > 0".into());
        }
        if !(self.metrics.crop_pad >= 0.0) {
            return err("metrics.crop_pad must be >= 0".into());
        }
        if self.arms.is_empty() {
            return err("no arms configured".into());
        }
        let mut names = HashSet::new();
        for arm in &self.arms {
            let valid_name = !arm.name.is_empty()
                && arm.name != "."
                && arm.name != ".."
                && arm
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
            if !valid_name {
                return err(format!("arm name `{}` must use [A-Za-z0-9._-]", arm.name));
            }
            if !names.insert(arm.name.as_str()) {
                return err(format!("duplicate arm name `{}`", arm.name));
            }
            if arm.count == 0 {
                return err(format!("arm `{}`: count must be >= 1", arm.name));
            }
            let s = arm.strength();
            if !(s > 0.0 && s <= 1.0) {
                return err(format!("arm `{}`: strength {s} outside (0, 1]", arm.name));
            }
            if !(arm.guidance >= 0.0) || arm.steps == 0 {
                return err(format!("arm `{}`: guidance must be >= 0 and steps >= 1", arm.name));
            }
            if !(0.0..=1.0).contains(&arm.alpha) {
                return err(format!("arm `{}`: alpha must lie in [0, 1]", arm.name));
            }
            if arm.family == ArmFamily::Noise {
                if !(arm.sigma >= 0.0 && arm.sigma.is_finite()) {
                    return err(format!("arm `{}`: sigma must be >= 0", arm.name));
                }
            } else if arm.sigma != 0.0 {
                return err(format!("arm `{}`: sigma only applies to the noise family", arm.name));
            }
            if arm.family == ArmFamily::Perlin {
                arm.perlin
                    .validate()
                    .map_err(|m| PipelineError::Config(format!("arm `{}`: {m}", arm.name)))?;
            }
        }
        Ok(())
    }
}
