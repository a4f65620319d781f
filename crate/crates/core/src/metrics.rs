//! Fréchet distance between Gaussian fits, CLIP Score and CLIP Confidence.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{EmbeddingSpace, EmbeddingVector};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TEMPERATURE: f64 = 100.0;
pub const DEFAULT_FIRE_PROMPT: &str = "a photo of fire";
pub const DEFAULT_NONFIRE_PROMPT: &str = "a photo of a landscape with no fire";

const SYMMETRY_TOL: f64 = 1e-9;
const EIGEN_CLIP_TOL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("mixed embedding spaces: {0:?} and {1:?}")]
    MixedSpaces(EmbeddingSpace, EmbeddingSpace),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("statistics contain non-finite values")]
    NonFinite,
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("covariance has eigenvalue {0:e} below tolerance")]
    NotPositiveSemidefinite(f64),
    #[error("expected {expected:?} embedding, got {found:?}")]
    WrongSpace {
        expected: EmbeddingSpace,
        found: EmbeddingSpace,
    },
    #[error("normalisation reference must be > 0 (got {0})")]
    InvalidReference(f64),
    #[error("temperature must be > 0 (got {0})")]
    InvalidTemperature(f64),
}

/// Sample mean and unbiased covariance of a set of embeddings.
///
/// When there are no more samples than dimensions the scaled, centred
/// samples are kept as well (`cov = factorᵀ · factor`) so the distance can be
/// computed exactly in the much smaller sample space.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub n: usize,
    factor: Option<DMatrix<f64>>,
}

impl GaussianStats {
    /// Stats from explicit moments. The covariance must be symmetric within
    /// 1e-9 and is re-symmetrised.
    pub fn from_moments(mean: DVector<f64>, covariance: DMatrix<f64>, n: usize) -> Result<Self, MetricsError> {
        if n < 2 {
            return Err(MetricsError::TooFewSamples(n));
        }
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(MetricsError::DimensionMismatch(d, covariance.nrows()));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(MetricsError::Asymmetric(asym));
        }
        let covariance = (&covariance + covariance.transpose()) * 0.5;
        Ok(Self {
            mean,
            covariance,
            n,
            factor: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn has_factor(&self) -> bool {
        self.factor.is_some()
    }

    /// Same statistics without the low-rank factor (forces the dense route).
    pub fn dense(&self) -> Self {
        Self {
            factor: None,
            ..self.clone()
        }
    }
}

pub fn fit_gaussian(embeddings: &[EmbeddingVector]) -> Result<GaussianStats, MetricsError> {
    let n = embeddings.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    let first = &embeddings[0];
    let d = first.dim();
    for e in embeddings {
        if e.space != first.space {
            return Err(MetricsError::MixedSpaces(first.space, e.space));
        }
        if e.dim() != d {
            return Err(MetricsError::DimensionMismatch(d, e.dim()));
        }
        if e.values.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
    }
    let data = DMatrix::from_fn(n, d, |i, j| embeddings[i].values[j]);
    let mean = DVector::from_fn(d, |j, _| data.column(j).mean());
    let mut centred = data;
    for mut row in centred.row_iter_mut() {
        row -= mean.transpose();
    }
    let factor = centred / ((n - 1) as f64).sqrt();
    let cov = factor.transpose() * &factor;
    let covariance = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianStats {
        mean,
        covariance,
        n,
        factor: (n <= d).then_some(factor),
    })
}

fn clipped_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, MetricsError> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.amax().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -EIGEN_CLIP_TOL * scale {
        return Err(MetricsError::NotPositiveSemidefinite(min));
    }
    Ok(eig)
}

/// Principal square root of a symmetric positive semi-definite matrix via
/// symmetric eigendecomposition; slightly negative eigenvalues are clipped.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricsError> {
    if m.nrows() != m.ncols() {
        return Err(MetricsError::DimensionMismatch(m.nrows(), m.ncols()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = clipped_eigen(&sym)?;
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// `Tr((Σa Σb)^{1/2})` through `Σa^{1/2} Σb Σa^{1/2}`, which is symmetric
/// and shares its spectrum with `Σa Σb`.
fn trace_sqrt_dense(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64, MetricsError> {
    let root = sqrtm_psd(a)?;
    let inner = &root * b * &root;
    let inner = (&inner + inner.transpose()) * 0.5;
    let eig = clipped_eigen(&inner)?;
    Ok(eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum())
}

/// With `Σ = Fᵀ F`, the non-zero spectrum of `Σa Σb` is the squared singular
/// values of `Fa Fbᵀ`, so the trace of the root is its nuclear norm.
fn trace_sqrt_factored(fa: &DMatrix<f64>, fb: &DMatrix<f64>) -> f64 {
    let cross = fa * fb.transpose();
    cross.singular_values().iter().sum()
}

/// `Σa = Faᵀ Fa` only: the spectrum of `Fa Σb Faᵀ` matches `Σa Σb`.
fn trace_sqrt_half_factored(fa: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64, MetricsError> {
    let inner = fa * b * fa.transpose();
    let inner = (&inner + inner.transpose()) * 0.5;
    let eig = clipped_eigen(&inner)?;
    Ok(eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum())
}

fn check_pair(a: &GaussianStats, b: &GaussianStats) -> Result<(), MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::DimensionMismatch(a.dim(), b.dim()));
    }
    let finite = |s: &GaussianStats| s.mean.iter().chain(s.covariance.iter()).all(|v| v.is_finite());
    if !finite(a) || !finite(b) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

fn assemble(a: &GaussianStats, b: &GaussianStats, trace_sqrt: f64) -> f64 {
    let diff = &a.mean - &b.mean;
    let d = diff.dot(&diff) + a.covariance.trace() + b.covariance.trace() - 2.0 * trace_sqrt;
    if d < -1e-6 {
        log::warn!("Fréchet distance {d:e} is negative beyond tolerance; clamping");
    }
    d.max(0.0)
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^{1/2})`.
///
/// Uses the sample-space route whenever a low-rank factor is available and
/// the dense eigendecomposition route otherwise.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64, MetricsError> {
    check_pair(a, b)?;
    let t = match (&a.factor, &b.factor) {
        (Some(fa), Some(fb)) => trace_sqrt_factored(fa, fb),
        (Some(fa), None) => trace_sqrt_half_factored(fa, &b.covariance)?,
        (None, Some(fb)) => trace_sqrt_half_factored(fb, &a.covariance)?,
        (None, None) => trace_sqrt_dense(&a.covariance, &b.covariance)?,
    };
    Ok(assemble(a, b, t))
}

/// Always takes the dense eigendecomposition route.
pub fn frechet_distance_dense(a: &GaussianStats, b: &GaussianStats) -> Result<f64, MetricsError> {
    check_pair(a, b)?;
    let t = trace_sqrt_dense(&a.covariance, &b.covariance)?;
    Ok(assemble(a, b, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    #[default]
    None,
    DivideByReference,
}

pub fn normalize_fid(fid: f64, mode: NormalizationMode, reference: f64) -> Result<f64, MetricsError> {
    match mode {
        NormalizationMode::None => Ok(fid),
        NormalizationMode::DivideByReference => {
            if !(reference.is_finite() && reference > 0.0) {
                return Err(MetricsError::InvalidReference(reference));
            }
            Ok(fid / reference)
        }
    }
}

fn expect_space(v: &EmbeddingVector, space: EmbeddingSpace) -> Result<(), MetricsError> {
    if v.space != space {
        return Err(MetricsError::WrongSpace {
            expected: space,
            found: v.space,
        });
    }
    Ok(())
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// `100 · max(0, cos(image, text))`.
pub fn clip_score(img: &EmbeddingVector, txt: &EmbeddingVector) -> Result<f64, MetricsError> {
    expect_space(img, EmbeddingSpace::ClipImage)?;
    expect_space(txt, EmbeddingSpace::ClipText)?;
    if img.dim() != txt.dim() {
        return Err(MetricsError::DimensionMismatch(img.dim(), txt.dim()));
    }
    Ok(100.0 * cosine(&img.values, &txt.values).max(0.0))
}

/// Fire-class probability of a two-way softmax over temperature-scaled cosines.
pub fn clip_confidence(
    patch: &EmbeddingVector,
    fire_txt: &EmbeddingVector,
    nonfire_txt: &EmbeddingVector,
    temperature: f64,
) -> Result<f64, MetricsError> {
    expect_space(patch, EmbeddingSpace::ClipImage)?;
    expect_space(fire_txt, EmbeddingSpace::ClipText)?;
    expect_space(nonfire_txt, EmbeddingSpace::ClipText)?;
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(MetricsError::InvalidTemperature(temperature));
    }
    for t in [fire_txt, nonfire_txt] {
        if t.dim() != patch.dim() {
            return Err(MetricsError::DimensionMismatch(patch.dim(), t.dim()));
        }
    }
    let fire = cosine(&patch.values, &fire_txt.values);
    let nonfire = cosine(&patch.values, &nonfire_txt.values);
    Ok(confidence_from_cosines(fire, nonfire, temperature))
}

pub fn confidence_from_cosines(fire: f64, nonfire: f64, temperature: f64) -> f64 {
    1.0 / (1.0 + (temperature * (nonfire - fire)).exp())
}

/// Scores for one generated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScores {
    pub clip_score: f64,
    /// One confidence per mask region; empty for unmasked images.
    pub region_confidences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub images: usize,
    pub regions: usize,
    pub real: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub arm: String,
    pub fid: f64,
    pub nfid: f64,
    pub clip_score_mean: f64,
    pub clip_confidence_mean: Option<f64>,
    pub counts: ReportCounts,
    pub normalization_mode: NormalizationMode,
}

#[derive(Debug, Clone)]
pub struct ArmResults {
    pub arm: String,
    pub fid: f64,
    pub normalization_mode: NormalizationMode,
    pub reference: f64,
    pub images: Vec<ImageScores>,
    pub real_count: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Image confidence is the mean over its regions; arm values are means over
/// images. Confidence is absent when no image has regions.
pub fn aggregate(results: &ArmResults) -> Result<MetricsReport, MetricsError> {
    let nfid = normalize_fid(results.fid, results.normalization_mode, results.reference)?;
    let clip_score_mean = mean(results.images.iter().map(|i| i.clip_score)).unwrap_or(0.0);
    let clip_confidence_mean = mean(
        results
            .images
            .iter()
            .filter_map(|i| mean(i.region_confidences.iter().copied())),
    );
    Ok(MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        arm: results.arm.clone(),
        fid: results.fid,
        nfid,
        clip_score_mean,
        clip_confidence_mean,
        counts: ReportCounts {
            images: results.images.len(),
            regions: results.images.iter().map(|i| i.region_confidences.len()).sum(),
            real: results.real_count,
        },
        normalization_mode: results.normalization_mode,
    })
}

/// Summary table with one row per report, in the given order.
pub fn summary_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("arm,nFID,CLIP Score,CLIP Conf.\n");
    for r in reports {
        let conf = r
            .clip_confidence_mean
            .map_or_else(|| "NA".to_string(), |c| format!("{c:.4}"));
        out.push_str(&format!("{},{:.4},{:.4},{}\n", r.arm, r.nfid, r.clip_score_mean, conf));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn emb(space: EmbeddingSpace, values: Vec<f64>) -> EmbeddingVector {
        EmbeddingVector { space, values }
    }

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(d, d) * 0.1
    }

    fn samples(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> Vec<EmbeddingVector> {
        (0..n)
            .map(|_| {
                let v = (0..d)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(rng);
                        z * (1.0 + j as f64 * 0.1) + shift
                    })
                    .collect();
                emb(EmbeddingSpace::Inception, v)
            })
            .collect()
    }

    #[test]
    fn identical_vectors_have_zero_covariance() {
        let v = emb(EmbeddingSpace::Inception, vec![1.0, -2.0, 3.0]);
        let s = fit_gaussian(&[v.clone(), v]).unwrap();
        assert_eq!(s.covariance, DMatrix::zeros(3, 3));
    }

    #[test]
    fn one_dimensional_hand_arithmetic() {
        let s = fit_gaussian(&[
            emb(EmbeddingSpace::Inception, vec![0.0]),
            emb(EmbeddingSpace::Inception, vec![2.0]),
        ])
        .unwrap();
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.covariance[(0, 0)], 2.0);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let a = emb(EmbeddingSpace::Inception, vec![0.0, 1.0]);
        let b = emb(EmbeddingSpace::ClipImage, vec![0.0, 1.0]);
        assert!(matches!(fit_gaussian(&[a.clone()]), Err(MetricsError::TooFewSamples(1))));
        assert!(matches!(fit_gaussian(&[a.clone(), b]), Err(MetricsError::MixedSpaces(..))));
        let c = emb(EmbeddingSpace::Inception, vec![0.0]);
        assert!(matches!(fit_gaussian(&[a, c]), Err(MetricsError::DimensionMismatch(..))));
    }

    #[test]
    fn fit_recovers_generating_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mu = [2.0, -1.0];
        let sd = [1.5, 0.5];
        let data: Vec<EmbeddingVector> = (0..1000)
            .map(|_| {
                let v = (0..2)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mu[j] + sd[j] * z
                    })
                    .collect();
                emb(EmbeddingSpace::Inception, v)
            })
            .collect();
        let s = fit_gaussian(&data).unwrap();
        for j in 0..2 {
            assert!((s.mean[j] - mu[j]).abs() < 0.05 * mu[j].abs());
            let var = sd[j] * sd[j];
            assert!((s.covariance[(j, j)] - var).abs() < 0.05 * var);
        }
        assert!(s.covariance[(0, 1)].abs() < 0.05 * sd[0] * sd[1]);
    }

    #[test]
    fn univariate_closed_form() {
        let a = GaussianStats::from_moments(DVector::from_vec(vec![0.0]), DMatrix::from_vec(1, 1, vec![1.0]), 10).unwrap();
        let b = GaussianStats::from_moments(DVector::from_vec(vec![3.0]), DMatrix::from_vec(1, 1, vec![4.0]), 10).unwrap();
        let d = frechet_distance(&a, &b).unwrap();
        assert!((d - 10.0).abs() < 1e-9, "{d}");
    }

    #[test]
    fn self_distance_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = 16;
        let a = GaussianStats::from_moments(DVector::from_fn(d, |_, _| rng.random()), random_spd(&mut rng, d), 50).unwrap();
        let b = GaussianStats::from_moments(DVector::from_fn(d, |_, _| rng.random()), random_spd(&mut rng, d), 50).unwrap();
        assert!(frechet_distance(&a, &a).unwrap() <= 1e-8);
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        assert!((ab - ba).abs() <= 1e-8, "{ab} vs {ba}");
    }

    #[test]
    fn sqrtm_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_spd(&mut rng, 64);
        let r = sqrtm_psd(&s).unwrap();
        let err = (&r * &r - &s).norm() / s.norm();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn sqrtm_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(sqrtm_psd(&m), Err(MetricsError::NotPositiveSemidefinite(_))));
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            GaussianStats::from_moments(DVector::zeros(2), m, 5),
            Err(MetricsError::Asymmetric(_))
        ));
    }

    #[test]
    fn low_rank_route_matches_dense_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = fit_gaussian(&samples(&mut rng, 10, 32, 0.0)).unwrap();
        let b = fit_gaussian(&samples(&mut rng, 12, 32, 0.3)).unwrap();
        assert!(a.has_factor() && b.has_factor());
        let fast = frechet_distance(&a, &b).unwrap();
        let half = frechet_distance(&a, &b.dense()).unwrap();
        let dense = frechet_distance_dense(&a, &b).unwrap();
        assert!((fast - dense).abs() < 1e-6 * dense.max(1.0), "{fast} vs {dense}");
        assert!((half - dense).abs() < 1e-6 * dense.max(1.0), "{half} vs {dense}");
    }

    #[test]
    fn low_rank_self_distance_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = fit_gaussian(&samples(&mut rng, 16, 2048, 0.0)).unwrap();
        assert!(frechet_distance(&a, &a).unwrap() <= 1e-6);
    }

    #[test]
    fn dim_mismatch_rejected() {
        let a = GaussianStats::from_moments(DVector::zeros(2), DMatrix::identity(2, 2), 3).unwrap();
        let b = GaussianStats::from_moments(DVector::zeros(3), DMatrix::identity(3, 3), 3).unwrap();
        assert!(matches!(frechet_distance(&a, &b), Err(MetricsError::DimensionMismatch(2, 3))));
    }

    #[test]
    fn normalisation_modes() {
        assert_eq!(normalize_fid(37.5, NormalizationMode::None, 0.0).unwrap(), 37.5);
        assert_eq!(normalize_fid(50.0, NormalizationMode::DivideByReference, 100.0).unwrap(), 0.5);
        assert!(normalize_fid(50.0, NormalizationMode::DivideByReference, 0.0).is_err());
    }

    #[test]
    fn clip_score_cases() {
        let img = |v: Vec<f64>| emb(EmbeddingSpace::ClipImage, v);
        let txt = |v: Vec<f64>| emb(EmbeddingSpace::ClipText, v);
        assert!((clip_score(&img(vec![1.0, 2.0]), &txt(vec![2.0, 4.0])).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(clip_score(&img(vec![1.0, 0.0]), &txt(vec![0.0, 3.0])).unwrap(), 0.0);
        assert_eq!(clip_score(&img(vec![1.0, 0.0]), &txt(vec![-1.0, 0.0])).unwrap(), 0.0);
        assert!(clip_score(&txt(vec![1.0]), &txt(vec![1.0])).is_err());
    }

    #[test]
    fn confidence_cases() {
        let img = emb(EmbeddingSpace::ClipImage, vec![1.0, 0.0]);
        let fire = emb(EmbeddingSpace::ClipText, vec![1.0, 0.0]);
        let nonfire = emb(EmbeddingSpace::ClipText, vec![0.0, 1.0]);
        let c = clip_confidence(&img, &fire, &nonfire, 100.0).unwrap();
        assert!((c - 1.0).abs() < 1e-10);
        let diag = emb(EmbeddingSpace::ClipImage, vec![1.0, 1.0]);
        assert!((clip_confidence(&diag, &fire, &nonfire, 100.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(clip_confidence(&img, &fire, &nonfire, 0.0).is_err());
    }

    #[test]
    fn confidence_monotone_in_temperature() {
        let values: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&t| confidence_from_cosines(0.3, 0.2, t))
            .collect();
        assert!(values[0] < values[1] && values[1] < values[2]);
    }

    #[test]
    fn aggregate_means() {
        let r = aggregate(&ArmResults {
            arm: "x".into(),
            fid: 12.0,
            normalization_mode: NormalizationMode::None,
            reference: 1.0,
            images: vec![
                ImageScores { clip_score: 30.0, region_confidences: vec![0.2] },
                ImageScores { clip_score: 20.0, region_confidences: vec![0.7, 0.9] },
            ],
            real_count: 5,
        })
        .unwrap();
        assert_eq!(r.clip_score_mean, 25.0);
        assert!((r.clip_confidence_mean.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(r.counts, ReportCounts { images: 2, regions: 3, real: 5 });
    }

    #[test]
    fn baseline_has_no_confidence() {
        let r = aggregate(&ArmResults {
            arm: "baseline".into(),
            fid: 1.0,
            normalization_mode: NormalizationMode::None,
            reference: 1.0,
            images: vec![ImageScores { clip_score: 30.0, region_confidences: vec![] }],
            real_count: 2,
        })
        .unwrap();
        assert_eq!(r.clip_confidence_mean, None);
        assert!(summary_csv(&[r]).ends_with("baseline,1.0000,30.0000,NA\n"));
    }
}
