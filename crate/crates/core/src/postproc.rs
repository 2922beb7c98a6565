//! Photometric and geometric filtering of per-view depth maps, and
//! mean-average fusion into a point cloud.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{backproject_pixel, project_point, CameraModel};
use crate::inference::{ConfidenceMap, DepthMap};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points, colors: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Thresholds of the multi-view reprojection check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyParams {
    /// Round-trip pixel error bound (strict).
    pub pixel_tol: f64,
    /// Relative depth error bound (strict).
    pub depth_tol: f64,
    /// Consistent source views required for a pixel to survive.
    pub min_views: usize,
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        Self { pixel_tol: 1.0, depth_tol: 0.01, min_views: 3 }
    }
}

/// Invalidate pixels whose confidence is strictly below `threshold`.
pub fn photometric_filter(depth: &DepthMap, conf: &ConfidenceMap, threshold: f64) -> Result<DepthMap> {
    if (depth.width(), depth.height()) != (conf.width(), conf.height()) {
        return Err(Error::ShapeMismatch("depth and confidence maps differ in size".into()));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("confidence threshold {threshold} outside [0, 1]")));
    }
    let mut out = depth.clone();
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            if conf.get(x, y) < threshold {
                out.invalidate(x, y);
            }
        }
    }
    Ok(out)
}

/// A source view agreeing with a reference pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    /// Source depth carried back into the reference camera.
    pub reprojected_depth: f64,
    /// Nearest source pixel to the projection.
    pub source_pixel: (usize, usize),
}

/// Project a reference pixel into a source view, look up the source depth
/// there, and carry that point back. The pair agrees when both the pixel
/// round trip and the relative depth change are strictly under tolerance.
pub fn check_consistency(
    ref_cam: &CameraModel,
    pixel: (usize, usize),
    ref_depth: f64,
    src_cam: &CameraModel,
    src_depth: &DepthMap,
    pixel_tol: f64,
    depth_tol: f64,
) -> Option<Agreement> {
    let p = Vector2::new(pixel.0 as f64, pixel.1 as f64);
    let world = backproject_pixel(ref_cam, &p, ref_depth).ok()?;
    let (q, _) = project_point(src_cam, &world).ok()?;
    let d_src = src_depth.sample(q.x, q.y)?;
    let back = backproject_pixel(src_cam, &q, d_src).ok()?;
    let (p2, d2) = project_point(ref_cam, &back).ok()?;
    let pixel_err = (p2 - p).norm();
    let depth_err = (d2 - ref_depth).abs() / ref_depth;
    (pixel_err < pixel_tol && depth_err < depth_tol)
        .then(|| Agreement { reprojected_depth: d2, source_pixel: (q.x.round() as usize, q.y.round() as usize) })
}

fn check_inputs(depths: &[DepthMap], cams: &[CameraModel]) -> Result<()> {
    if depths.len() != cams.len() {
        return Err(Error::ShapeMismatch(format!("{} depth maps for {} cameras", depths.len(), cams.len())));
    }
    for (d, c) in depths.iter().zip(cams) {
        if (d.width(), d.height()) != (c.width(), c.height()) {
            return Err(Error::ShapeMismatch("depth map size differs from its camera".into()));
        }
    }
    Ok(())
}

/// Keep reference pixels that at least `min_views` other views agree with.
pub fn geometric_filter(
    depths: &[DepthMap],
    cams: &[CameraModel],
    ref_index: usize,
    params: &ConsistencyParams,
) -> Result<DepthMap> {
    check_inputs(depths, cams)?;
    if depths.len() < 2 {
        return Err(Error::InvalidArgument("geometric filtering needs at least two views".into()));
    }
    if ref_index >= depths.len() {
        return Err(Error::InvalidArgument(format!("reference index {ref_index} out of range")));
    }
    if !(params.pixel_tol > 0.0 && params.depth_tol > 0.0) {
        return Err(Error::InvalidArgument("consistency tolerances must be positive".into()));
    }
    let reference = &depths[ref_index];
    let ref_cam = &cams[ref_index];
    let (w, h) = (reference.width(), reference.height());
    let keep: Vec<bool> = (0..w * h)
        .into_par_iter()
        .map(|px| {
            let (x, y) = (px % w, px / w);
            let Some(d) = reference.get(x, y) else { return false };
            let agreeing = (0..depths.len())
                .filter(|&j| j != ref_index)
                .filter(|&j| {
                    check_consistency(ref_cam, (x, y), d, &cams[j], &depths[j], params.pixel_tol, params.depth_tol)
                        .is_some()
                })
                .count();
            agreeing >= params.min_views
        })
        .collect();
    let mut out = reference.clone();
    for (px, k) in keep.into_iter().enumerate() {
        if !k {
            out.invalidate(px % w, px / w);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub pixel_tol: f64,
    pub depth_tol: f64,
    /// Mark agreeing source pixels as consumed so each surface point is
    /// emitted once. The first reference view in input order wins.
    pub dedup: bool,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self { pixel_tol: 1.0, depth_tol: 0.01, dedup: true }
    }
}

/// Mean-average fusion. Every view serves once as reference, in input
/// order; each remaining valid pixel becomes one point whose depth is the
/// mean of its own depth and all agreeing views' reprojected depths.
pub fn fuse_point_cloud(filtered: &[DepthMap], cams: &[CameraModel], params: &FusionParams) -> Result<PointCloud> {
    check_inputs(filtered, cams)?;
    let mut consumed: Vec<Vec<bool>> = filtered.iter().map(|d| vec![false; d.width() * d.height()]).collect();
    let mut points = Vec::new();
    for (i, reference) in filtered.iter().enumerate() {
        let (w, h) = (reference.width(), reference.height());
        for y in 0..h {
            for x in 0..w {
                if consumed[i][y * w + x] {
                    continue;
                }
                let Some(d) = reference.get(x, y) else { continue };
                let mut estimates = vec![d];
                for j in (0..filtered.len()).filter(|&j| j != i) {
                    if let Some(a) = check_consistency(
                        &cams[i],
                        (x, y),
                        d,
                        &cams[j],
                        &filtered[j],
                        params.pixel_tol,
                        params.depth_tol,
                    ) {
                        estimates.push(a.reprojected_depth);
                        if params.dedup {
                            let (sx, sy) = a.source_pixel;
                            consumed[j][sy * filtered[j].width() + sx] = true;
                        }
                    }
                }
                // canonical summation order keeps the mean independent of view order
                estimates[1..].sort_by(f64::total_cmp);
                let fused = estimates.iter().sum::<f64>() / estimates.len() as f64;
                points.push(backproject_pixel(&cams[i], &Vector2::new(x as f64, y as f64), fused)?);
            }
        }
    }
    Ok(PointCloud::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn cam_at(cx: f64, w: usize, h: usize) -> CameraModel {
        let k = Matrix3::new(20.0, 0.0, (w / 2) as f64, 0.0, 20.0, (h / 2) as f64, 0.0, 0.0, 1.0);
        CameraModel::look_at(
            k,
            Vector3::new(cx, 0.0, 0.0),
            Vector3::new(0.0, 0.0, 10.0),
            Vector3::new(0.0, -1.0, 0.0),
            w,
            h,
        )
        .unwrap()
    }

    /// Depth of the plane z = 10 seen from `cam`.
    fn plane_depth(cam: &CameraModel) -> DepthMap {
        let (w, h) = (cam.width(), cam.height());
        let mut d = DepthMap::empty(w, h);
        for y in 0..h {
            for x in 0..w {
                let dir = cam.pixel_direction_world(&Vector2::new(x as f64, y as f64));
                let t = (10.0 - cam.center().z) / dir.z;
                let pt = cam.center() + dir * t;
                d.set(x, y, cam.world_to_camera(&pt).z);
            }
        }
        d
    }

    #[test]
    fn photometric_boundary_is_inclusive() {
        let depth = DepthMap::from_depths(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let conf = ConfidenceMap::new(3, 1, vec![0.30, 0.25, 0.2499]).unwrap();
        let out = photometric_filter(&depth, &conf, 0.25).unwrap();
        assert_eq!(out.get(0, 0), Some(1.0));
        assert_eq!(out.get(1, 0), Some(2.0));
        assert_eq!(out.get(2, 0), None);
        let all = ConfidenceMap::new(3, 1, vec![1.0; 3]).unwrap();
        assert_eq!(photometric_filter(&depth, &all, 0.25).unwrap(), depth);
    }

    #[test]
    fn exact_depths_survive_geometric_filter() {
        let cams: Vec<_> = [0.0, 0.5, -0.5, 1.0].iter().map(|&c| cam_at(c, 16, 12)).collect();
        let depths: Vec<_> = cams.iter().map(plane_depth).collect();
        let params = ConsistencyParams { min_views: 3, ..Default::default() };
        let out = geometric_filter(&depths, &cams, 0, &params).unwrap();
        // every pixel that all three other views can see survives
        let mut visible = 0;
        for y in 0..12 {
            for x in 0..16 {
                let world =
                    backproject_pixel(&cams[0], &Vector2::new(x as f64, y as f64), depths[0].get(x, y).unwrap())
                        .unwrap();
                let seen = cams[1..]
                    .iter()
                    .filter(|c| project_point(c, &world).map(|(q, _)| c.contains(&q)).unwrap_or(false))
                    .count();
                if seen >= 3 {
                    visible += 1;
                    assert!(out.get(x, y).is_some(), "pixel ({x},{y}) dropped");
                }
            }
        }
        assert!(visible > 0);
    }

    #[test]
    fn pixel_tolerance_is_strict() {
        let cams = [cam_at(0.0, 8, 8), cam_at(0.0, 8, 8)];
        let depths = [
            DepthMap::from_depths(8, 8, vec![10.0; 64]).unwrap(),
            DepthMap::from_depths(8, 8, vec![10.0; 64]).unwrap(),
        ];
        // identical cameras give an exact round trip
        assert!(check_consistency(&cams[0], (3, 3), 10.0, &cams[1], &depths[1], 1e-12, 0.01).is_some());
        let a = check_consistency(&cams[0], (3, 3), 10.0, &cams[1], &depths[1], 1.0, 0.01).unwrap();
        assert_eq!(a.reprojected_depth, 10.0);
        // relative depth error of exactly depth_tol is rejected
        let far = DepthMap::from_depths(8, 8, vec![10.5; 64]).unwrap();
        assert!(check_consistency(&cams[0], (3, 3), 10.0, &cams[1], &far, 1.0, 0.05).is_none());
        assert!(check_consistency(&cams[0], (3, 3), 10.0, &cams[1], &far, 1.0, 0.0500001).is_some());
    }

    #[test]
    fn single_view_fusion_backprojects_valid_pixels() {
        let cam = cam_at(0.0, 4, 3);
        let mut d = DepthMap::from_depths(4, 3, vec![5.0; 12]).unwrap();
        d.invalidate(1, 1);
        let cloud =
            fuse_point_cloud(std::slice::from_ref(&d), std::slice::from_ref(&cam), &FusionParams::default()).unwrap();
        assert_eq!(cloud.len(), 11);
        let expected = backproject_pixel(&cam, &Vector2::new(0.0, 0.0), 5.0).unwrap();
        assert_eq!(cloud.points[0], expected);
    }

    #[test]
    fn fusion_averages_consistent_depths() {
        let cams = [cam_at(0.0, 8, 8), cam_at(0.0, 8, 8)];
        let a = DepthMap::from_depths(8, 8, vec![10.0; 64]).unwrap();
        let b = DepthMap::from_depths(8, 8, vec![10.2; 64]).unwrap();
        let params = FusionParams { depth_tol: 0.05, ..Default::default() };
        let cloud = fuse_point_cloud(&[a, b], &cams, &params).unwrap();
        // view 1 is fully consumed by view 0
        assert_eq!(cloud.len(), 64);
        let p = cams[0].world_to_camera(&cloud.points[0]);
        assert!((p.z - 10.1).abs() < 1e-12);
    }
}
