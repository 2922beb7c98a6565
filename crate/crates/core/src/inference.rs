//! Depth and confidence readout from probability and offset volumes.

use serde::{Deserialize, Serialize};

use crate::geometry::DepthHypothesisSet;
use crate::volume::{OffsetVolume, ProbabilityVolume};
use crate::{Error, Result};

/// Per-pixel depth with a validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Map with every pixel invalid.
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, depth: vec![0.0; width * height], valid: vec![false; width * height] }
    }

    pub fn new(width: usize, height: usize, depth: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if depth.len() != width * height || valid.len() != width * height {
            return Err(Error::ShapeMismatch(format!("depth map buffers do not match {width}x{height}")));
        }
        if depth.iter().zip(&valid).any(|(d, &ok)| ok && !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidArgument("valid depths must be finite and positive".into()));
        }
        Ok(Self { width, height, depth, valid })
    }

    /// Every finite positive entry is valid, everything else invalid.
    pub fn from_depths(width: usize, height: usize, depth: Vec<f64>) -> Result<Self> {
        let valid = depth.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        let depth = depth.into_iter().map(|d| if d.is_finite() && d > 0.0 { d } else { 0.0 }).collect();
        Self::new(width, height, depth, valid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depths(&self) -> &[f64] {
        &self.depth
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    /// Depth at `(x, y)` if valid.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.depth[i])
    }

    pub fn set(&mut self, x: usize, y: usize, depth: f64) {
        let i = y * self.width + x;
        self.depth[i] = depth;
        self.valid[i] = depth.is_finite() && depth > 0.0;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        self.valid[i] = false;
        self.depth[i] = 0.0;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Bilinear depth lookup; requires the four taps to be valid, otherwise
    /// falls back to the nearest pixel when that one is valid.
    pub fn sample(&self, u: f64, v: f64) -> Option<f64> {
        let max_u = (self.width - 1) as f64;
        let max_v = (self.height - 1) as f64;
        if !(u >= 0.0 && v >= 0.0 && u <= max_u && v <= max_v) {
            return None;
        }
        let x0 = (u.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (v.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        if let (Some(a), Some(b), Some(c), Some(d)) =
            (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1))
        {
            let fx = u - x0 as f64;
            let fy = v - y0 as f64;
            return Some(a * (1.0 - fx) * (1.0 - fy) + b * fx * (1.0 - fy) + c * (1.0 - fx) * fy + d * fx * fy);
        }
        self.get(u.round() as usize, v.round() as usize)
    }
}

/// Peak probability per pixel, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ConfidenceMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::ShapeMismatch("confidence buffer does not match its size".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("confidence values must lie in [0, 1]".into()));
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// First index of the row maximum.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_hyp(probs: &ProbabilityVolume, hyp: &DepthHypothesisSet) -> Result<()> {
    if probs.depth() != hyp.len() {
        return Err(Error::ShapeMismatch(format!("{} hypotheses for a volume of depth {}", hyp.len(), probs.depth())));
    }
    Ok(())
}

/// Soft-argmin readout `Σ_s d_s P(d_s)`.
pub fn depth_expectation(probs: &ProbabilityVolume, hyp: &DepthHypothesisSet) -> Result<DepthMap> {
    check_hyp(probs, hyp)?;
    let depth: Vec<f64> = probs.rows().map(|row| row.iter().zip(hyp.values()).map(|(p, d)| p * d).sum()).collect();
    let valid = depth.iter().map(|d| d.is_finite() && *d > 0.0).collect();
    Ok(DepthMap { width: probs.width(), height: probs.height(), depth, valid })
}

/// Winner-take-all readout, plus the selected hypothesis's offset when
/// `offsets` is given.
pub fn depth_mode_offset(
    probs: &ProbabilityVolume,
    offsets: Option<&OffsetVolume>,
    hyp: &DepthHypothesisSet,
) -> Result<DepthMap> {
    check_hyp(probs, hyp)?;
    if let Some(off) = offsets {
        if !off.same_shape(probs) {
            return Err(Error::ShapeMismatch("offset and probability volumes differ in shape".into()));
        }
    }
    let depth: Vec<f64> = probs
        .rows()
        .enumerate()
        .map(|(px, row)| {
            let k = argmax(row);
            let base = hyp.values()[k];
            match offsets {
                Some(off) => base + off.data()[px * hyp.len() + k],
                None => base,
            }
        })
        .collect();
    let valid = depth.iter().map(|d| d.is_finite() && *d > 0.0).collect();
    Ok(DepthMap { width: probs.width(), height: probs.height(), depth, valid })
}

/// Probability of the winner-take-all hypothesis.
pub fn confidence_map(probs: &ProbabilityVolume, hyp: &DepthHypothesisSet) -> Result<ConfidenceMap> {
    check_hyp(probs, hyp)?;
    let values = probs.rows().map(|row| row[argmax(row)].clamp(0.0, 1.0)).collect();
    Ok(ConfidenceMap { width: probs.width(), height: probs.height(), values })
}
