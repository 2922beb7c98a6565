//! End-to-end runs: sweep, fit, readout, filtering, fusion and
//! evaluation, plus the loss comparison built on top of them.

use serde::{Deserialize, Serialize};

use crate::evalmetrics::{evaluate_point_clouds, CloudMetrics};
use crate::geometry::{CameraModel, DepthHypothesisSet, SamplingMode};
use crate::inference::{confidence_map, ConfidenceMap, DepthMap};
use crate::optimizer::{fit_volume, FitConfig, LossKind};
use crate::postproc::{
    fuse_point_cloud, geometric_filter, photometric_filter, ConsistencyParams, FusionParams, PointCloud,
};
use crate::scenegen::{generate_scene, SceneSpec};
use crate::volume::{build_cost_volume, extract_features, smooth_scores, ImageGrid, ScoreVolume, SCORE_SENTINEL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub patch_radius: usize,
    /// Box-filter radius applied to the score volume; 0 disables it.
    pub smooth_radius: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { patch_radius: 1, smooth_radius: 1 }
    }
}

/// Score volume of `reference` against `sources`.
pub fn sweep_view(
    images: &[ImageGrid],
    cams: &[CameraModel],
    reference: usize,
    sources: &[usize],
    hyp: &DepthHypothesisSet,
    cfg: &SweepConfig,
) -> Result<ScoreVolume> {
    if images.len() != cams.len() {
        return Err(Error::ShapeMismatch(format!("{} images for {} cameras", images.len(), cams.len())));
    }
    if reference >= cams.len() || sources.iter().any(|&s| s >= cams.len() || s == reference) {
        return Err(Error::InvalidArgument("view indices out of range".into()));
    }
    let ref_feat = extract_features(&images[reference], cfg.patch_radius);
    let src_feats: Vec<_> = sources.iter().map(|&s| extract_features(&images[s], cfg.patch_radius)).collect();
    let view_cams: Vec<_> =
        std::iter::once(reference).chain(sources.iter().copied()).map(|i| cams[i].clone()).collect();
    let scores = build_cost_volume(&ref_feat, &src_feats, &view_cams, hyp)?;
    Ok(if cfg.smooth_radius > 0 { smooth_scores(&scores, cfg.smooth_radius) } else { scores })
}

/// Starting point of the per-pixel fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitMode {
    Zeros,
    /// Sweep scores scaled by `gain`, with per-pixel normalization so the
    /// best hypothesis scores 0 and the spread is independent of texture.
    Sweep {
        gain: f64,
    },
}

/// Rescale each pixel's scores to `gain * (s - max) / (max - min)`.
/// Sentinel cells keep the per-pixel minimum.
pub fn normalize_scores(scores: &ScoreVolume, gain: f64) -> ScoreVolume {
    let mut out = scores.clone();
    let n = out.depth();
    for row in out.data_mut().chunks_mut(n) {
        let seen = || row.iter().copied().filter(|&s| s > SCORE_SENTINEL);
        let hi = seen().fold(f64::NEG_INFINITY, f64::max);
        let lo = seen().fold(f64::INFINITY, f64::min);
        let span = hi - lo;
        for s in row.iter_mut() {
            *s = if !hi.is_finite() || span <= 0.0 {
                0.0
            } else if *s > SCORE_SENTINEL {
                gain * (*s - hi) / span
            } else {
                -gain
            };
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructConfig {
    pub planes: usize,
    pub sampling: SamplingMode,
    pub fit: FitConfig,
    pub init: InitMode,
    pub sweep: SweepConfig,
    pub conf_threshold: f64,
    pub consistency: ConsistencyParams,
    pub dedup: bool,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            planes: 64,
            sampling: SamplingMode::Uniform,
            fit: FitConfig::default(),
            init: InitMode::Zeros,
            sweep: SweepConfig::default(),
            conf_threshold: 0.25,
            consistency: ConsistencyParams::default(),
            dedup: true,
        }
    }
}

impl ReconstructConfig {
    pub fn fusion(&self) -> FusionParams {
        FusionParams { pixel_tol: self.consistency.pixel_tol, depth_tol: self.consistency.depth_tol, dedup: self.dedup }
    }
}

/// Inputs shared by every view of one reconstruction.
#[derive(Debug, Clone, Copy)]
pub struct Views<'a> {
    pub images: &'a [ImageGrid],
    pub cams: &'a [CameraModel],
    pub gt_depths: &'a [DepthMap],
    /// Source views per reference view.
    pub sources: &'a [Vec<usize>],
}

#[derive(Debug, Clone)]
pub struct ViewEstimate {
    pub depth: DepthMap,
    pub confidence: ConfidenceMap,
    pub final_loss: Option<f64>,
}

/// Fit one view against its ground truth and read out depth and confidence.
pub fn estimate_view(
    views: &Views,
    reference: usize,
    hyp: &DepthHypothesisSet,
    cfg: &ReconstructConfig,
) -> Result<ViewEstimate> {
    let cam = &views.cams[reference];
    let init = match cfg.init {
        InitMode::Zeros => ScoreVolume::zeros(cam.height(), cam.width(), hyp.len()),
        InitMode::Sweep { gain } => {
            let scores = sweep_view(views.images, views.cams, reference, &views.sources[reference], hyp, &cfg.sweep)?;
            normalize_scores(&scores, gain)
        }
    };
    let fit_cfg = FitConfig { seed: cfg.fit.seed.wrapping_add(reference as u64), ..cfg.fit.clone() };
    let state = fit_volume(&init, &views.gt_depths[reference], hyp, &fit_cfg)?;
    let depth = state.depth(fit_cfg.readout(), hyp)?;
    let confidence = confidence_map(&state.probabilities(), hyp)?;
    Ok(ViewEstimate { depth, confidence, final_loss: state.loss_history.last().copied() })
}

/// Photometric then geometric filtering of every view.
pub fn filter_views(
    estimates: &[ViewEstimate],
    cams: &[CameraModel],
    cfg: &ReconstructConfig,
) -> Result<Vec<DepthMap>> {
    let photometric = estimates
        .iter()
        .map(|e| photometric_filter(&e.depth, &e.confidence, cfg.conf_threshold))
        .collect::<Result<Vec<_>>>()?;
    (0..cams.len()).map(|i| geometric_filter(&photometric, cams, i, &cfg.consistency)).collect()
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub estimates: Vec<ViewEstimate>,
    pub filtered: Vec<DepthMap>,
    pub cloud: PointCloud,
}

pub fn reconstruct(views: &Views, cfg: &ReconstructConfig, d_range: (f64, f64)) -> Result<Reconstruction> {
    let hyp = DepthHypothesisSet::sample(d_range.0, d_range.1, cfg.planes, cfg.sampling)?;
    let estimates = (0..views.cams.len()).map(|i| estimate_view(views, i, &hyp, cfg)).collect::<Result<Vec<_>>>()?;
    let filtered = filter_views(&estimates, views.cams, cfg)?;
    let cloud = fuse_point_cloud(&filtered, views.cams, &cfg.fusion())?;
    Ok(Reconstruction { estimates, filtered, cloud })
}

/// Reference cloud: the fused ground-truth depths.
pub fn ground_truth_cloud(gt_depths: &[DepthMap], cams: &[CameraModel], fusion: &FusionParams) -> Result<PointCloud> {
    fuse_point_cloud(gt_depths, cams, fusion)
}

/// A loss variant under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossVariant {
    pub kind: LossKind,
    pub offsets: bool,
}

impl LossVariant {
    pub const TABLE: [LossVariant; 4] = [
        LossVariant { kind: LossKind::Regression, offsets: false },
        LossVariant { kind: LossKind::Classification, offsets: false },
        LossVariant { kind: LossKind::Classification, offsets: true },
        LossVariant { kind: LossKind::Adaptive, offsets: true },
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub loss: String,
    pub offsets: bool,
    pub seed: u64,
    pub points: usize,
    pub accuracy: f64,
    pub completeness: f64,
    pub overall: f64,
    pub fscore: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub reconstruct: ReconstructConfig,
    pub variants: Vec<LossVariant>,
    pub fscore_threshold: f64,
    pub outlier_cap: Option<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            reconstruct: ReconstructConfig { planes: 32, ..ReconstructConfig::default() },
            variants: LossVariant::TABLE.to_vec(),
            fscore_threshold: 0.02,
            outlier_cap: None,
        }
    }
}

/// Metrics of one reconstruction against the ground-truth cloud. An empty
/// reconstruction scores zero F-score and infinite distances.
pub fn score_cloud(pred: &PointCloud, gt: &PointCloud, threshold: f64, cap: Option<f64>) -> Result<CloudMetrics> {
    if pred.is_empty() {
        return Ok(CloudMetrics {
            accuracy: f64::INFINITY,
            completeness: f64::INFINITY,
            overall: f64::INFINITY,
            precision: 0.0,
            recall: 0.0,
            fscore: 0.0,
            threshold,
        });
    }
    evaluate_point_clouds(pred, gt, threshold, cap)
}

/// Run every loss variant on `views`; rows come out in variant order.
pub fn bench_views(views: &Views, d_range: (f64, f64), seed: u64, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let base = &cfg.reconstruct;
    let gt_cloud = ground_truth_cloud(views.gt_depths, views.cams, &base.fusion())?;
    cfg.variants
        .iter()
        .map(|v| {
            let fit = FitConfig { loss_kind: v.kind, classification_offsets: v.offsets, seed, ..base.fit.clone() };
            let rc = ReconstructConfig { fit, ..base.clone() };
            let rec = reconstruct(views, &rc, d_range)?;
            let m = score_cloud(&rec.cloud, &gt_cloud, cfg.fscore_threshold, cfg.outlier_cap)?;
            Ok(BenchRow {
                loss: v.kind.name().to_string(),
                offsets: rc.fit.trains_offsets(),
                seed,
                points: rec.cloud.len(),
                accuracy: m.accuracy,
                completeness: m.completeness,
                overall: m.overall,
                fscore: m.fscore,
            })
        })
        .collect()
}

/// Generate one scene per seed and benchmark every variant on it.
pub fn bench_losses(spec: &SceneSpec, seeds: &[u64], cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let scene = generate_scene(spec, seed)?;
        let sources: Vec<Vec<usize>> =
            (0..scene.cams.len()).map(|i| (0..scene.cams.len()).filter(|&j| j != i).collect()).collect();
        let views = Views { images: &scene.images, cams: &scene.cams, gt_depths: &scene.gt_depths, sources: &sources };
        rows.extend(bench_views(&views, spec.depth_range, seed, cfg)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::SceneKind;

    #[test]
    fn normalized_scores_span_gain() {
        let mut s = ScoreVolume::zeros(1, 2, 3);
        s.data_mut().copy_from_slice(&[-3.0, -1.0, -2.0, SCORE_SENTINEL, -5.0, -5.0]);
        let n = normalize_scores(&s, 4.0);
        assert_eq!(&n.data()[..3], &[-4.0, 0.0, -2.0]);
        assert_eq!(&n.data()[3..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn exact_estimates_reconstruct_the_surface() {
        let spec = SceneSpec { width: 32, height: 24, focal: 30.0, ..SceneSpec::new(SceneKind::Plane) };
        let scene = generate_scene(&spec, 0).unwrap();
        let fusion = FusionParams::default();
        let gt = ground_truth_cloud(&scene.gt_depths, &scene.cams, &fusion).unwrap();
        assert!(gt.len() >= 32 * 24);
        let m = score_cloud(&gt, &gt, 0.01, None).unwrap();
        assert_eq!((m.overall, m.fscore), (0.0, 1.0));
        assert!(score_cloud(&PointCloud::default(), &gt, 0.01, None).unwrap().overall.is_infinite());
    }
}
