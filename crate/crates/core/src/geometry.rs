//! Pinhole cameras, depth hypotheses, plane-induced homographies and
//! bilinear warping.
//!
//! A camera maps a world point `X` to camera coordinates `R X + t`, then to
//! pixels through `K`. Pixel centers sit at integer coordinates with the
//! origin at the top-left pixel.

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::volume::ImageGrid;
use crate::{Error, Result};

const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    intrinsics: Matrix3<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    width: usize,
    height: usize,
    intrinsics_inv: Matrix3<f64>,
}

impl CameraModel {
    pub fn new(
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image size must be at least 1x1".into()));
        }
        let k = &intrinsics;
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(Error::InvalidArgument("intrinsics must be upper triangular".into()));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0 && k[(2, 2)] > 0.0) {
            return Err(Error::InvalidArgument("focal entries must be positive".into()));
        }
        if intrinsics.iter().chain(rotation.iter()).chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("camera parameters must be finite".into()));
        }
        let orth_err = (rotation * rotation.transpose() - Matrix3::identity()).amax();
        if orth_err > ROTATION_TOL || (rotation.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidArgument("rotation must be orthonormal with determinant +1".into()));
        }
        let intrinsics_inv =
            intrinsics.try_inverse().ok_or_else(|| Error::InvalidArgument("intrinsics are singular".into()))?;
        Ok(Self { intrinsics, rotation, translation, width, height, intrinsics_inv })
    }

    /// Camera at `center` looking at `target`. `up` is the world direction
    /// that should appear upward in the image.
    pub fn look_at(
        intrinsics: Matrix3<f64>,
        center: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - center)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("camera center coincides with target".into()))?;
        let down = (-up + forward * up.dot(&forward))
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("up vector is parallel to the view direction".into()))?;
        let right = down.cross(&forward);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * center);
        Self::new(intrinsics, rotation, translation, width, height)
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Optical center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn world_to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// Unit-z ray through a pixel, in camera coordinates.
    pub fn pixel_ray(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        self.intrinsics_inv * Vector3::new(pixel.x, pixel.y, 1.0)
    }

    /// World-space direction of the ray through a pixel (not normalized).
    pub fn pixel_direction_world(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        self.rotation.transpose() * self.pixel_ray(pixel)
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0 && pixel.y >= 0.0 && pixel.x <= (self.width - 1) as f64 && pixel.y <= (self.height - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    Uniform,
    InverseDepth,
    /// Hand-supplied values with uneven spacing.
    Explicit,
}

/// Ordered set of fronto-parallel depth planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthHypothesisSet {
    values: Vec<f64>,
    mode: SamplingMode,
}

impl DepthHypothesisSet {
    /// `n` depths from `d_min` to `d_max` inclusive, evenly spaced in depth
    /// or in inverse depth.
    pub fn sample(d_min: f64, d_max: f64, n: usize, mode: SamplingMode) -> Result<Self> {
        if !(d_min > 0.0 && d_min.is_finite()) {
            return Err(Error::InvalidArgument(format!("d_min must be positive, got {d_min}")));
        }
        if !(d_max > d_min && d_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("empty depth range [{d_min}, {d_max}]")));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 hypotheses, got {n}")));
        }
        let last = (n - 1) as f64;
        let mut values: Vec<f64> = match mode {
            SamplingMode::Explicit => {
                return Err(Error::InvalidArgument("explicit hypotheses come from from_values".into()))
            }
            SamplingMode::Uniform => {
                let step = (d_max - d_min) / last;
                (0..n).map(|k| d_min + k as f64 * step).collect()
            }
            SamplingMode::InverseDepth => {
                let (inv_near, inv_far) = (1.0 / d_min, 1.0 / d_max);
                let step = (inv_far - inv_near) / last;
                (0..n).map(|k| 1.0 / (inv_near + k as f64 * step)).collect()
            }
        };
        values[0] = d_min;
        values[n - 1] = d_max;
        Ok(Self { values, mode })
    }

    /// Arbitrary strictly increasing hypotheses. Unlike [`Self::sample`] this
    /// does not require positive values, so loss fixtures on abstract axes
    /// (e.g. `{0, 1}`) can be expressed; geometric uses still need depth > 0.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument("need at least 2 hypotheses".into()));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("hypotheses must be finite and strictly increasing".into()));
        }
        let step = values[1] - values[0];
        let uniform = values.windows(2).all(|w| ((w[1] - w[0]) - step).abs() <= 1e-12 * step.abs().max(1.0));
        let mode = if uniform { SamplingMode::Uniform } else { SamplingMode::Explicit };
        Ok(Self { values, mode })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn d_min(&self) -> f64 {
        self.values[0]
    }

    pub fn d_max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Mean gap between hypothesis `k` and its neighbors.
    pub fn local_spacing(&self, k: usize) -> f64 {
        let n = self.values.len();
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(n - 1);
        (self.values[hi] - self.values[lo]) / (hi - lo) as f64
    }

    /// Mean gap over the whole set.
    pub fn mean_spacing(&self) -> f64 {
        (self.d_max() - self.d_min()) / (self.values.len() - 1) as f64
    }

    /// Index of the hypothesis closest to `depth`; ties go to the lower index.
    pub fn nearest_index(&self, depth: f64) -> usize {
        let upper = self.values.partition_point(|&v| v < depth);
        if upper == 0 {
            return 0;
        }
        if upper == self.values.len() {
            return upper - 1;
        }
        let below = depth - self.values[upper - 1];
        let above = self.values[upper] - depth;
        if above < below {
            upper
        } else {
            upper - 1
        }
    }
}

pub fn sample_depth_hypotheses(d_min: f64, d_max: f64, n: usize, mode: SamplingMode) -> Result<DepthHypothesisSet> {
    DepthHypothesisSet::sample(d_min, d_max, n, mode)
}

/// Homography taking reference pixels to source pixels for the
/// fronto-parallel plane at `depth` in the reference frame:
/// `K_src (R_rel + t_rel nᵀ / depth) K_ref⁻¹` with `n = (0, 0, 1)`.
pub fn plane_homography(reference: &CameraModel, source: &CameraModel, depth: f64) -> Result<Matrix3<f64>> {
    if !(depth > 0.0) {
        return Err(Error::InvalidArgument(format!("plane depth must be positive, got {depth}")));
    }
    let r_rel = source.rotation * reference.rotation.transpose();
    let t_rel = source.translation - r_rel * reference.translation;
    let normal = Vector3::new(0.0, 0.0, 1.0);
    let plane = r_rel + t_rel * normal.transpose() / depth;
    let mut h = source.intrinsics * plane * reference.intrinsics_inv;
    let corner = h[(2, 2)];
    if corner != 0.0 {
        h /= corner;
    }
    Ok(h)
}

/// Output of [`warp_image`]: resampled image plus per-pixel validity.
#[derive(Debug, Clone)]
pub struct WarpedImage {
    pub image: ImageGrid,
    pub valid: Vec<bool>,
}

/// Resample `src` so that output pixel `p` takes the bilinear value at
/// `H p`. Samples that land outside `src` are invalid and left at zero.
pub fn warp_image(src: &ImageGrid, h: &Matrix3<f64>, out_size: (usize, usize)) -> Result<WarpedImage> {
    let scale = h.norm();
    if !(scale > 0.0) || (h.determinant() / scale.powi(3)).abs() < 1e-12 {
        return Err(Error::DegenerateWarp);
    }
    let (w, ht) = out_size;
    let c = src.channels();
    let mut image = ImageGrid::zeros(w, ht, c);
    let mut valid = vec![false; w * ht];
    image.data_mut().par_chunks_mut(w * c).zip(valid.par_chunks_mut(w)).enumerate().for_each(
        |(y, (row, row_valid))| {
            for x in 0..w {
                let p = h * Vector3::new(x as f64, y as f64, 1.0);
                if p.z <= 0.0 {
                    continue;
                }
                row_valid[x] = src.sample_bilinear(p.x / p.z, p.y / p.z, &mut row[x * c..(x + 1) * c]);
            }
        },
    );
    Ok(WarpedImage { image, valid })
}

/// Perspective projection; returns the pixel and the camera-frame depth.
pub fn project_point(cam: &CameraModel, x: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
    let xc = cam.world_to_camera(x);
    if !(xc.z > 0.0) {
        return Err(Error::BehindCamera(xc.z));
    }
    let p = cam.intrinsics * xc;
    Ok((Vector2::new(p.x / p.z, p.y / p.z), xc.z))
}

/// World point seen at `pixel` with camera-frame depth `depth`.
pub fn backproject_pixel(cam: &CameraModel, pixel: &Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
    if !(depth > 0.0) {
        return Err(Error::InvalidArgument(format!("depth must be positive, got {depth}")));
    }
    let xc = cam.pixel_ray(pixel) * depth;
    Ok(cam.rotation.transpose() * (xc - cam.translation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Rotation3, Vector4};
    use proptest::prelude::*;

    fn kmat(f: f64, cx: f64, cy: f64) -> Matrix3<f64> {
        Matrix3::new(f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0)
    }

    fn identity_cam() -> CameraModel {
        CameraModel::new(Matrix3::identity(), Matrix3::identity(), Vector3::zeros(), 10, 10).unwrap()
    }

    fn offset_cam() -> CameraModel {
        let r = Rotation3::from_euler_angles(0.1, -0.2, 0.05).into_inner();
        CameraModel::new(kmat(120.0, 32.0, 24.0), r, Vector3::new(0.3, -0.1, 1.2), 64, 48).unwrap()
    }

    /// Full projective chain with 4x4 extrinsics, computed independently of
    /// the camera methods.
    fn chain_project(cam: &CameraModel, x: &Vector3<f64>) -> (Vector2<f64>, f64) {
        let mut ext = Matrix4::identity();
        ext.fixed_view_mut::<3, 3>(0, 0).copy_from(cam.rotation());
        ext.fixed_view_mut::<3, 1>(0, 3).copy_from(cam.translation());
        let mut k4 = Matrix4::identity();
        k4.fixed_view_mut::<3, 3>(0, 0).copy_from(cam.intrinsics());
        let p = k4 * ext * Vector4::new(x.x, x.y, x.z, 1.0);
        (Vector2::new(p.x / p.z, p.y / p.z), p.z)
    }

    #[test]
    fn uniform_sampling_examples() {
        let h = sample_depth_hypotheses(425.0, 935.0, 192, SamplingMode::Uniform).unwrap();
        assert_eq!(h.len(), 192);
        assert_eq!(h.d_min(), 425.0);
        assert_eq!(h.d_max(), 935.0);
        let step = (935.0 - 425.0) / 191.0;
        for w in h.values().windows(2) {
            assert!(((w[1] - w[0]) - step).abs() < 1e-12);
        }
        let two = sample_depth_hypotheses(1.0, 4.0, 2, SamplingMode::Uniform).unwrap();
        assert_eq!(two.values(), &[1.0, 4.0]);
    }

    #[test]
    fn inverse_sampling_example() {
        let h = sample_depth_hypotheses(1.0, 4.0, 3, SamplingMode::InverseDepth).unwrap();
        assert_eq!(h.values()[0], 1.0);
        assert!((h.values()[1] - 1.6).abs() < 1e-15);
        assert_eq!(h.values()[2], 4.0);
    }

    #[test]
    fn sampling_errors() {
        for (a, b, n) in [(0.0, 1.0, 4), (-1.0, 1.0, 4), (2.0, 1.0, 4), (1.0, 2.0, 1)] {
            assert!(matches!(sample_depth_hypotheses(a, b, n, SamplingMode::Uniform), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn nearest_index_ties_low() {
        let h = DepthHypothesisSet::from_values(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(h.nearest_index(1.7), 1);
        assert_eq!(h.nearest_index(1.5), 0);
        assert_eq!(h.nearest_index(0.2), 0);
        assert_eq!(h.nearest_index(9.0), 2);
        assert_eq!(h.nearest_index(3.0), 2);
    }

    #[test]
    fn camera_rejects_bad_rotation() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = -1.0; // reflection
        assert!(CameraModel::new(Matrix3::identity(), r, Vector3::zeros(), 4, 4).is_err());
        assert!(CameraModel::new(Matrix3::identity(), Matrix3::identity() * 1.01, Vector3::zeros(), 4, 4).is_err());
    }

    #[test]
    fn homography_same_camera_is_identity() {
        let cam = offset_cam();
        for d in [0.5, 2.0, 100.0] {
            let h = plane_homography(&cam, &cam, d).unwrap();
            assert!((h - Matrix3::identity()).amax() < 1e-12);
        }
        assert!(plane_homography(&cam, &cam, 0.0).is_err());
    }

    #[test]
    fn homography_baseline_shift() {
        let reference = identity_cam();
        let src =
            CameraModel::new(Matrix3::identity(), Matrix3::identity(), Vector3::new(-1.0, 0.0, 0.0), 10, 10).unwrap();
        let h = plane_homography(&reference, &src, 2.0).unwrap();
        // oracle: backproject at depth 2, reproject into the source
        for (u, v) in [(0.0, 0.0), (0.3, -0.7), (1.5, 2.0)] {
            let x = backproject_pixel(&reference, &Vector2::new(u, v), 2.0).unwrap();
            let (q, _) = project_point(&src, &x).unwrap();
            let p = h * Vector3::new(u, v, 1.0);
            assert!((p.x / p.z - q.x).abs() < 1e-12 && (p.y / p.z - q.y).abs() < 1e-12);
            assert!((q.x - (u - 0.5)).abs() < 1e-12 && (q.y - v).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_only_homography_is_depth_independent() {
        let reference = offset_cam();
        let r = Rotation3::from_euler_angles(-0.05, 0.1, 0.02).into_inner() * reference.rotation();
        // same optical center, different orientation
        let t = -(r * reference.center());
        let src = CameraModel::new(kmat(100.0, 30.0, 20.0), r, t, 64, 48).unwrap();
        let h1 = plane_homography(&reference, &src, 1.0).unwrap();
        let h2 = plane_homography(&reference, &src, 7.5).unwrap();
        assert!((h1 - h2).amax() < 1e-9);
    }

    #[test]
    fn homographies_differ_with_baseline() {
        let reference = identity_cam();
        let src = offset_cam();
        let h1 = plane_homography(&reference, &src, 1.0).unwrap();
        let h2 = plane_homography(&reference, &src, 1.5).unwrap();
        assert!((h1 - h2).amax() > 1e-6);
    }

    #[test]
    fn warp_identity_and_translation() {
        let img = ImageGrid::from_fn(8, 5, |x, y| (x * 3 + y * 11) as f64 * 0.01);
        let id = warp_image(&img, &Matrix3::identity(), (8, 5)).unwrap();
        assert!(id.valid.iter().all(|&v| v));
        assert_eq!(id.image, img);

        let shift = Matrix3::new(1.0, 0.0, 3.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let out = warp_image(&img, &shift, (8, 5)).unwrap();
        for y in 0..5 {
            for x in 0..8 {
                // direct index oracle
                if x + 3 < 8 {
                    assert!(out.valid[y * 8 + x]);
                    assert!((out.image.get(x, y, 0) - img.get(x + 3, y, 0)).abs() < 1e-15);
                } else {
                    assert!(!out.valid[y * 8 + x]);
                }
            }
        }
        assert_eq!(out.valid.iter().filter(|v| !**v).count(), 3 * 5);
    }

    #[test]
    fn warp_half_pixel_averages_neighbors() {
        let img = ImageGrid::from_fn(6, 3, |x, y| 2.0 * x as f64 + 0.5 * y as f64);
        let shift = Matrix3::new(1.0, 0.0, 0.5, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let out = warp_image(&img, &shift, (6, 3)).unwrap();
        for y in 0..3 {
            for x in 0..5 {
                assert!(out.valid[y * 6 + x]);
                let avg = 0.5 * (img.get(x, y, 0) + img.get(x + 1, y, 0));
                assert!((out.image.get(x, y, 0) - avg).abs() < 1e-12);
            }
            assert!(!out.valid[y * 6 + 5]);
        }
    }

    #[test]
    fn warp_rejects_singular() {
        let img = ImageGrid::from_fn(4, 4, |_, _| 1.0);
        let singular = Matrix3::new(1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(warp_image(&img, &singular, (4, 4)), Err(Error::DegenerateWarp)));
    }

    #[test]
    fn project_examples() {
        let cam = CameraModel::new(Matrix3::identity(), Matrix3::identity(), Vector3::zeros(), 4, 4).unwrap();
        let (p, d) = project_point(&cam, &Vector3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!((p.x, p.y, d), (0.0, 0.0, 5.0));
        assert_eq!(backproject_pixel(&cam, &Vector2::zeros(), 5.0).unwrap(), Vector3::new(0.0, 0.0, 5.0));
        assert!(matches!(project_point(&cam, &Vector3::new(0.0, 0.0, -1.0)), Err(Error::BehindCamera(_))));
        assert!(backproject_pixel(&cam, &Vector2::zeros(), 0.0).is_err());
    }

    #[test]
    fn offset_camera_matches_matrix_chain() {
        let cam = offset_cam();
        let x = Vector3::new(0.4, -0.2, 3.0);
        let (p, d) = project_point(&cam, &x).unwrap();
        let (q, dq) = chain_project(&cam, &x);
        assert!((p - q).amax() < 1e-9 && (d - dq).abs() < 1e-12);
        let back = backproject_pixel(&cam, &q, dq).unwrap();
        assert!((back - x).amax() < 1e-9);
    }

    #[test]
    fn look_at_points_forward() {
        let cam = CameraModel::look_at(
            kmat(50.0, 16.0, 12.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 0.0, 4.0),
            Vector3::new(0.0, -1.0, 0.0),
            32,
            24,
        )
        .unwrap();
        let (p, d) = project_point(&cam, &Vector3::new(0.0, 0.0, 4.0)).unwrap();
        assert!((p.x - 16.0).abs() < 1e-9 && (p.y - 12.0).abs() < 1e-9);
        assert!((d - 17.0_f64.sqrt()).abs() < 1e-12);
        assert!((cam.center() - Vector3::new(1.0, 0.0, 0.0)).amax() < 1e-12);
    }

    proptest! {
        #[test]
        fn project_backproject_round_trip(u in 0.0..64.0f64, v in 0.0..48.0f64, d in 0.5..20.0f64) {
            let cam = offset_cam();
            let x = backproject_pixel(&cam, &Vector2::new(u, v), d).unwrap();
            let (p, dp) = project_point(&cam, &x).unwrap();
            prop_assert!((p.x - u).abs() < 1e-9 && (p.y - v).abs() < 1e-9);
            prop_assert!((dp - d).abs() < 1e-9);
            let (q, _) = chain_project(&cam, &x);
            prop_assert!((p - q).amax() < 1e-9);
        }

        #[test]
        fn warp_inverse_restores_linear_images(
            a in -0.1..0.1f64, b in -0.1..0.1f64, tx in -2.0..2.0f64, ty in -2.0..2.0f64,
            gx in -1.0..1.0f64, gy in -1.0..1.0f64,
        ) {
            let img = ImageGrid::from_fn(20, 16, |x, y| 0.3 + gx * x as f64 + gy * y as f64);
            let h = Matrix3::new(1.0 + a, b, tx, -b, 1.0 - a, ty, 0.0, 0.0, 1.0);
            let fwd = warp_image(&img, &h, (20, 16)).unwrap();
            let back = warp_image(&fwd.image, &h.try_inverse().unwrap(), (20, 16)).unwrap();
            let hinv = h.try_inverse().unwrap();
            for y in 0..16 {
                for x in 0..20 {
                    if !back.valid[y * 20 + x] {
                        continue;
                    }
                    // the second warp reads from fwd; require its four taps valid
                    let p = hinv * Vector3::new(x as f64, y as f64, 1.0);
                    let (u, v) = (p.x / p.z, p.y / p.z);
                    let taps = [(u.floor(), v.floor()), (u.ceil(), v.floor()), (u.floor(), v.ceil()), (u.ceil(), v.ceil())];
                    if taps.iter().all(|&(tu, tv)| fwd.valid[(tv.clamp(0.0, 15.0) as usize) * 20 + tu.clamp(0.0, 19.0) as usize]) {
                        prop_assert!((back.image.get(x, y, 0) - img.get(x, y, 0)).abs() < 1e-6);
                    }
                }
            }
        }

        #[test]
        fn spacing_properties(d_min in 0.1..5.0f64, span in 0.1..50.0f64, n in 3usize..64) {
            let inv = sample_depth_hypotheses(d_min, d_min + span, n, SamplingMode::InverseDepth).unwrap();
            for w in inv.values().windows(3) {
                prop_assert!(w[2] - w[1] > w[1] - w[0]);
            }
            let uni = sample_depth_hypotheses(d_min, d_min + span, n, SamplingMode::Uniform).unwrap();
            let step = span / (n - 1) as f64;
            for w in uni.values().windows(2) {
                prop_assert!(((w[1] - w[0]) - step).abs() < 1e-12);
            }
        }
    }
}
