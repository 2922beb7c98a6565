//! Point-cloud accuracy, completeness and F-score.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::postproc::PointCloud;
use crate::{Error, Result};

/// Below this many points nearest-neighbour queries scan linearly.
pub const BRUTE_FORCE_LIMIT: usize = 256;
const LEAF_SIZE: usize = 8;

/// Exact nearest-neighbour distances over a static point set.
#[derive(Debug, Clone)]
pub struct NearestNeighbors {
    points: Vec<[f64; 3]>,
    // split axis of the median element of each subtree, indexed by that element
    axes: Vec<u8>,
    brute: bool,
}

impl NearestNeighbors {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut pts: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut axes = vec![0u8; pts.len()];
        let brute = pts.len() < BRUTE_FORCE_LIMIT;
        if !brute {
            build(&mut pts, &mut axes);
        }
        Self { points: pts, axes, brute }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Euclidean distance to the closest stored point, or infinity when empty.
    pub fn nearest_distance(&self, q: &Vector3<f64>) -> f64 {
        let q = [q.x, q.y, q.z];
        let mut best = f64::INFINITY;
        if self.brute {
            scan(&self.points, &q, &mut best);
        } else {
            self.search(0, self.points.len(), &q, &mut best);
        }
        best.sqrt()
    }

    fn search(&self, lo: usize, hi: usize, q: &[f64; 3], best: &mut f64) {
        if hi - lo <= LEAF_SIZE {
            scan(&self.points[lo..hi], q, best);
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = &self.points[mid];
        let d2 = dist2(p, q);
        if d2 < *best {
            *best = d2;
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(near.0, near.1, q, best);
        if diff * diff < *best {
            self.search(far.0, far.1, q, best);
        }
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

fn scan(points: &[[f64; 3]], q: &[f64; 3], best: &mut f64) {
    for p in points {
        let d2 = dist2(p, q);
        if d2 < *best {
            *best = d2;
        }
    }
}

fn build(pts: &mut [[f64; 3]], axes: &mut [u8]) {
    if pts.len() <= LEAF_SIZE {
        return;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in pts.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
    let mid = pts.len() / 2;
    pts.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
    axes[mid] = axis as u8;
    let (left, rest) = pts.split_at_mut(mid);
    let (left_axes, rest_axes) = axes.split_at_mut(mid);
    build(left, left_axes);
    build(&mut rest[1..], &mut rest_axes[1..]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudMetrics {
    /// Mean distance from predicted points to the ground truth.
    pub accuracy: f64,
    /// Mean distance from ground-truth points to the prediction.
    pub completeness: f64,
    pub overall: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub threshold: f64,
}

fn distances(from: &[Vector3<f64>], to: &NearestNeighbors) -> Vec<f64> {
    from.par_iter().map(|p| to.nearest_distance(p)).collect()
}

/// Mean of the distances not exceeding `cap`. When every distance is
/// beyond the cap the cap itself is returned.
fn capped_mean(d: &[f64], cap: Option<f64>) -> f64 {
    let (sum, n) = d.iter().filter(|&&x| cap.is_none_or(|c| x <= c)).fold((0.0, 0usize), |(s, n), &x| (s + x, n + 1));
    match (n, cap) {
        (0, Some(c)) => c,
        _ => sum / n as f64,
    }
}

fn fraction_within(d: &[f64], threshold: f64) -> f64 {
    d.iter().filter(|&&x| x <= threshold).count() as f64 / d.len() as f64
}

/// Compare a reconstruction against ground truth. Distances above
/// `outlier_cap`, when given, are left out of the accuracy and
/// completeness means but still count against precision and recall.
pub fn evaluate_point_clouds(
    pred: &PointCloud,
    gt: &PointCloud,
    fscore_threshold: f64,
    outlier_cap: Option<f64>,
) -> Result<CloudMetrics> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty point cloud".into()));
    }
    if !(fscore_threshold > 0.0 && fscore_threshold.is_finite()) {
        return Err(Error::InvalidArgument(format!("F-score threshold {fscore_threshold} must be positive")));
    }
    if let Some(c) = outlier_cap {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!("outlier cap {c} must be positive")));
        }
    }
    let to_pred = distances(&pred.points, &NearestNeighbors::new(&gt.points));
    let to_gt = distances(&gt.points, &NearestNeighbors::new(&pred.points));
    let accuracy = capped_mean(&to_pred, outlier_cap);
    let completeness = capped_mean(&to_gt, outlier_cap);
    let precision = fraction_within(&to_pred, fscore_threshold);
    let recall = fraction_within(&to_gt, fscore_threshold);
    let fscore = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(CloudMetrics {
        accuracy,
        completeness,
        overall: 0.5 * (accuracy + completeness),
        precision,
        recall,
        fscore,
        threshold: fscore_threshold,
    })
}
