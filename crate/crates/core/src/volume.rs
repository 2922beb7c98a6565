//! Dense grids, plane-sweep cost volumes and the softmax probability volume.

use std::ops::{Deref, DerefMut};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{plane_homography, warp_image, CameraModel, DepthHypothesisSet};
use crate::{Error, Result};

/// Score assigned to cells that no source view observes. Finite so that
/// softmax stays well defined, and low enough to carry zero probability mass
/// next to any real score.
pub const SCORE_SENTINEL: f64 = -1.0e6;

/// Dense `height × width × channels` scalar image, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!("{} values for a {width}x{height}x{channels} image", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("image values must be finite".into()));
        }
        Ok(Self { width, height, channels, data })
    }

    /// Single-channel image from a function of pixel coordinates.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, channels: 1, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let start = (y * self.width + x) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Channel-averaged single-channel copy.
    pub fn to_gray(&self) -> ImageGrid {
        if self.channels == 1 {
            return self.clone();
        }
        let c = self.channels as f64;
        let data = self.data.chunks(self.channels).map(|px| px.iter().sum::<f64>() / c).collect();
        ImageGrid { width: self.width, height: self.height, channels: 1, data }
    }

    /// Bilinear sample at a continuous pixel position. Returns `false` and
    /// leaves `out` untouched when the position falls outside the grid of
    /// pixel centers.
    pub fn sample_bilinear(&self, u: f64, v: f64, out: &mut [f64]) -> bool {
        const EDGE_EPS: f64 = 1e-9;
        let max_u = (self.width - 1) as f64;
        let max_v = (self.height - 1) as f64;
        if !(u >= -EDGE_EPS && u <= max_u + EDGE_EPS && v >= -EDGE_EPS && v <= max_v + EDGE_EPS) {
            return false;
        }
        let u = u.clamp(0.0, max_u);
        let v = v.clamp(0.0, max_v);
        let x0 = (u.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (v.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w10 = fx * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        let (p00, p10, p01, p11) = (self.pixel(x0, y0), self.pixel(x1, y0), self.pixel(x0, y1), self.pixel(x1, y1));
        for c in 0..self.channels {
            out[c] = w00 * p00[c] + w10 * p10[c] + w01 * p01[c] + w11 * p11[c];
        }
        true
    }
}

/// Dense `height × width × depth` scalar field shared by the score,
/// probability and offset volumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Volume3 {
    height: usize,
    width: usize,
    depth: usize,
    data: Vec<f64>,
}

impl Volume3 {
    pub fn zeros(height: usize, width: usize, depth: usize) -> Self {
        Self { height, width, depth, data: vec![0.0; height * width * depth] }
    }

    pub fn from_vec(height: usize, width: usize, depth: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * depth {
            return Err(Error::ShapeMismatch(format!("{} values for a {height}x{width}x{depth} volume", data.len())));
        }
        Ok(Self { height, width, depth, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of depth hypotheses.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.depth)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize, s: usize) -> f64 {
        self.data[(y * self.width + x) * self.depth + s]
    }

    pub fn set(&mut self, y: usize, x: usize, s: usize, value: f64) {
        self.data[(y * self.width + x) * self.depth + s] = value;
    }

    /// Hypothesis row of pixel `(y, x)`.
    pub fn row(&self, y: usize, x: usize) -> &[f64] {
        let start = (y * self.width + x) * self.depth;
        &self.data[start..start + self.depth]
    }

    pub fn row_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let start = (y * self.width + x) * self.depth;
        &mut self.data[start..start + self.depth]
    }

    /// Rows in raster order.
    pub fn rows(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.depth)
    }

    pub fn same_shape(&self, other: &Volume3) -> bool {
        self.shape() == other.shape()
    }
}

macro_rules! volume_newtype {
    ($name:ident) => {
        impl Deref for $name {
            type Target = Volume3;
            fn deref(&self) -> &Volume3 {
                &self.0
            }
        }

        impl From<$name> for Volume3 {
            fn from(v: $name) -> Volume3 {
                v.0
            }
        }
    };
}

/// Unnormalized per-hypothesis scores (logits); larger means a better match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVolume(pub Volume3);
volume_newtype!(ScoreVolume);

impl DerefMut for ScoreVolume {
    fn deref_mut(&mut self) -> &mut Volume3 {
        &mut self.0
    }
}

impl ScoreVolume {
    pub fn zeros(height: usize, width: usize, depth: usize) -> Self {
        Self(Volume3::zeros(height, width, depth))
    }
}

/// Per-hypothesis depth offsets in scene units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetVolume(pub Volume3);
volume_newtype!(OffsetVolume);

impl DerefMut for OffsetVolume {
    fn deref_mut(&mut self) -> &mut Volume3 {
        &mut self.0
    }
}

impl OffsetVolume {
    pub fn zeros(height: usize, width: usize, depth: usize) -> Self {
        Self(Volume3::zeros(height, width, depth))
    }
}

/// Per-pixel discrete depth distribution. Every row sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVolume(Volume3);
volume_newtype!(ProbabilityVolume);

impl ProbabilityVolume {
    /// Normalization tolerance enforced on every pixel row.
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(volume: Volume3) -> Result<Self> {
        for row in volume.rows() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidArgument("probabilities must lie in [0, 1]".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
                return Err(Error::InvalidDistribution(sum));
            }
        }
        Ok(Self(volume))
    }
}

/// Source features warped onto every depth plane of the reference frustum.
#[derive(Debug, Clone)]
pub struct FeatureVolume {
    height: usize,
    width: usize,
    depth: usize,
    channels: usize,
    data: Vec<f64>,
    mask: Vec<bool>,
}

impl FeatureVolume {
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.height, self.width, self.depth, self.channels)
    }

    /// Feature vector at `(y, x, s)`, or `None` where the warp fell outside
    /// the source image.
    pub fn sample(&self, y: usize, x: usize, s: usize) -> Option<&[f64]> {
        let cell = (y * self.width + x) * self.depth + s;
        if !self.mask[cell] {
            return None;
        }
        Some(&self.data[cell * self.channels..(cell + 1) * self.channels])
    }
}

/// Warp a source feature map onto each hypothesis plane of the reference
/// camera.
pub fn warp_feature_volume(
    src_feat: &ImageGrid,
    ref_cam: &CameraModel,
    src_cam: &CameraModel,
    hyp: &DepthHypothesisSet,
) -> Result<FeatureVolume> {
    let (w, h, c) = (ref_cam.width(), ref_cam.height(), src_feat.channels());
    let n = hyp.len();
    let mut data = vec![0.0; h * w * n * c];
    let mut mask = vec![false; h * w * n];
    for (s, &d) in hyp.values().iter().enumerate() {
        let homography = plane_homography(ref_cam, src_cam, d)?;
        let warped = warp_image(src_feat, &homography, (w, h))?;
        for y in 0..h {
            for x in 0..w {
                let px = y * w + x;
                if warped.valid[px] {
                    let cell = px * n + s;
                    mask[cell] = true;
                    data[cell * c..(cell + 1) * c].copy_from_slice(warped.image.pixel(x, y));
                }
            }
        }
    }
    Ok(FeatureVolume { height: h, width: w, depth: n, channels: c, data, mask })
}

/// Patch descriptors: the `(2r+1)²` grayscale neighborhood of each pixel,
/// minus the mean of its in-image samples. Out-of-image samples read as 0.
pub fn extract_features(image: &ImageGrid, patch_radius: usize) -> ImageGrid {
    let gray = image.to_gray();
    let (w, h) = (gray.width(), gray.height());
    let r = patch_radius as isize;
    let side = 2 * patch_radius + 1;
    let channels = side * side;
    let mut out = ImageGrid::zeros(w, h, channels);
    out.data.par_chunks_mut(w * channels).enumerate().for_each(|(y, row)| {
        let mut patch = vec![None; channels];
        for x in 0..w {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (k, slot) in patch.iter_mut().enumerate() {
                let dx = (k % side) as isize - r;
                let dy = (k / side) as isize - r;
                let (sx, sy) = (x as isize + dx, y as isize + dy);
                *slot = if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                    let v = gray.get(sx as usize, sy as usize, 0);
                    sum += v;
                    count += 1;
                    Some(v)
                } else {
                    None
                };
            }
            let mean = sum / count as f64;
            let desc = &mut row[x * channels..(x + 1) * channels];
            for (d, v) in desc.iter_mut().zip(&patch) {
                *d = v.map_or(0.0, |v| v - mean);
            }
        }
    });
    out
}

/// Mean over channels of the population variance across the valid samples.
pub fn variance_cost(samples: &[Option<&[f64]>]) -> Result<f64> {
    let valid: Vec<&[f64]> = samples.iter().flatten().copied().collect();
    let first = valid.first().ok_or(Error::UndefinedCost)?;
    let channels = first.len();
    if valid.iter().any(|s| s.len() != channels) {
        return Err(Error::ShapeMismatch("samples differ in channel count".into()));
    }
    if channels == 0 {
        return Ok(0.0);
    }
    let m = valid.len() as f64;
    let mut total = 0.0;
    for c in 0..channels {
        let mean = valid.iter().map(|s| s[c]).sum::<f64>() / m;
        total += valid.iter().map(|s| (s[c] - mean).powi(2)).sum::<f64>() / m;
    }
    Ok(total / channels as f64)
}

/// Variance-metric score volume for the reference view `cams[0]`.
///
/// `src_feats[i]` is observed by `cams[i + 1]`. Each cell's score is the
/// negated [`variance_cost`] over the reference feature and every source
/// feature whose warp lands inside its image; cells seen by no source get
/// [`SCORE_SENTINEL`].
pub fn build_cost_volume(
    ref_feat: &ImageGrid,
    src_feats: &[ImageGrid],
    cams: &[CameraModel],
    hyp: &DepthHypothesisSet,
) -> Result<ScoreVolume> {
    if src_feats.is_empty() {
        return Err(Error::InvalidArgument("at least one source view is required".into()));
    }
    if cams.len() != src_feats.len() + 1 {
        return Err(Error::ShapeMismatch(format!("{} cameras for {} views", cams.len(), src_feats.len() + 1)));
    }
    let channels = ref_feat.channels();
    if src_feats.iter().any(|f| f.channels() != channels) {
        return Err(Error::ShapeMismatch("feature channel counts differ".into()));
    }
    let ref_cam = &cams[0];
    let (w, h, n) = (ref_feat.width(), ref_feat.height(), hyp.len());
    if (w, h) != (ref_cam.width(), ref_cam.height()) {
        return Err(Error::ShapeMismatch("reference features do not match the camera size".into()));
    }

    let mut scores = ScoreVolume::zeros(h, w, n);
    for (s, &d) in hyp.values().iter().enumerate() {
        let warped = src_feats
            .iter()
            .zip(&cams[1..])
            .map(|(feat, cam)| {
                let homography = plane_homography(ref_cam, cam, d)?;
                warp_image(feat, &homography, (w, h))
            })
            .collect::<Result<Vec<_>>>()?;

        let slice: Vec<f64> = (0..w * h)
            .into_par_iter()
            .map(|px| {
                let (x, y) = (px % w, px / w);
                let mut samples: Vec<Option<&[f64]>> = Vec::with_capacity(warped.len() + 1);
                samples.push(Some(ref_feat.pixel(x, y)));
                let mut any_source = false;
                for view in &warped {
                    if view.valid[px] {
                        any_source = true;
                        samples.push(Some(view.image.pixel(x, y)));
                    }
                }
                if !any_source {
                    return SCORE_SENTINEL;
                }
                -variance_cost(&samples).expect("reference sample is always valid")
            })
            .collect();
        for (px, score) in slice.into_iter().enumerate() {
            scores.0.data[px * n + s] = score;
        }
    }
    Ok(scores)
}

/// Box filter over `(u, v)` applied independently to each hypothesis
/// slice. Windows average over in-image, non-sentinel cells only; a cell
/// whose whole window is sentinel stays sentinel.
pub fn smooth_scores(scores: &ScoreVolume, radius: usize) -> ScoreVolume {
    if radius == 0 {
        return scores.clone();
    }
    let (h, w, n) = scores.shape();
    let mut data = vec![0.0; h * w * n];
    data.par_chunks_mut(w * n).enumerate().for_each(|(y, row)| {
        let ys = y.saturating_sub(radius)..=(y + radius).min(h - 1);
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for x in 0..w {
            sum.iter_mut().for_each(|v| *v = 0.0);
            count.iter_mut().for_each(|v| *v = 0);
            for yy in ys.clone() {
                for xx in x.saturating_sub(radius)..=(x + radius).min(w - 1) {
                    for (s, &v) in scores.row(yy, xx).iter().enumerate() {
                        if v > SCORE_SENTINEL {
                            sum[s] += v;
                            count[s] += 1;
                        }
                    }
                }
            }
            for s in 0..n {
                row[x * n + s] = if count[s] > 0 { sum[s] / count[s] as f64 } else { SCORE_SENTINEL };
            }
        }
    });
    ScoreVolume(Volume3 { height: h, width: w, depth: n, data })
}

/// Per-pixel softmax along the hypothesis axis, with max subtraction.
pub fn softmax_depth(scores: &ScoreVolume) -> ProbabilityVolume {
    let (h, w, n) = scores.shape();
    let mut data = scores.data().to_vec();
    data.par_chunks_mut(n.max(1)).for_each(softmax_in_place);
    ProbabilityVolume(Volume3 { height: h, width: w, depth: n, data })
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
