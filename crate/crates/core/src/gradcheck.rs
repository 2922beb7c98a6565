//! Central finite-difference verification of the analytic loss gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{DepthHypothesisSet, SamplingMode};
use crate::inference::DepthMap;
use crate::losses::{one_hot_occupancy, LossConfig};
use crate::optimizer::{evaluate_loss, FitConfig, LossKind};
use crate::volume::{OffsetVolume, ScoreVolume};
use crate::Result;

pub const SCORE_STEP: f64 = 1e-5;
pub const OFFSET_STEP: f64 = 1e-4;
/// Denominator floor of the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-3;
/// For p = 1, pixels with some |d_s + o_s - gt| below this are skipped:
/// the loss has a kink there that a finite step straddles.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub loss: LossKind,
    pub p: f64,
    pub max_relative_error: f64,
    pub checked: usize,
    pub skipped_pixels: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Random fixture: scores in [-2, 2], offsets within a third of the
/// spacing, ground truth uniform over the hypothesis range.
pub fn random_fixture(
    shape: (usize, usize, usize),
    seed: u64,
) -> Result<(ScoreVolume, OffsetVolume, DepthMap, DepthHypothesisSet)> {
    let (h, w, n) = shape;
    let hyp = DepthHypothesisSet::sample(2.0, 4.0, n, SamplingMode::Uniform)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = ScoreVolume::zeros(h, w, n);
    scores.data_mut().iter_mut().for_each(|s| *s = rng.random_range(-2.0..2.0));
    let bound = hyp.mean_spacing() / 3.0;
    let mut offsets = OffsetVolume::zeros(h, w, n);
    offsets.data_mut().iter_mut().for_each(|o| *o = rng.random_range(-bound..bound));
    let gt = DepthMap::from_depths(w, h, (0..h * w).map(|_| rng.random_range(2.0..4.0)).collect())?;
    Ok((scores, offsets, gt, hyp))
}

/// Compare analytic and central-difference gradients of `kind` on a random
/// volume of `shape`, for every score and (when used) every offset.
pub fn check_gradients(kind: LossKind, p: f64, shape: (usize, usize, usize), seed: u64) -> Result<GradCheckReport> {
    let (scores, offsets, gt, hyp) = random_fixture(shape, seed)?;
    let occ = one_hot_occupancy(&gt, &hyp);
    let cfg = FitConfig {
        loss_kind: kind,
        loss_config: LossConfig { p, ..LossConfig::default() },
        classification_offsets: true,
        ..FitConfig::default()
    };
    let eval = |s: &ScoreVolume, o: &OffsetVolume| evaluate_loss(&cfg, s, o, &hyp, &gt, &occ);
    let analytic = eval(&scores, &offsets)?;
    let n = shape.2;

    let mut skip = vec![false; shape.0 * shape.1];
    for (px, flag) in skip.iter_mut().enumerate() {
        let g = gt.depths()[px];
        let near_kink = |d: f64| (d - g).abs() < KINK_MARGIN;
        *flag = match kind {
            LossKind::Wasserstein | LossKind::Adaptive if p == 1.0 => {
                hyp.values().iter().zip(offsets.row(px / shape.1, px % shape.1)).any(|(d, o)| near_kink(d + o))
            }
            LossKind::Classification => {
                occ.labels()[px].is_some_and(|k| near_kink(hyp.values()[k] + offsets.data()[px * n + k]))
            }
            _ => false,
        };
    }

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..scores.data().len() {
        if skip[i / n] {
            continue;
        }
        let mut plus = scores.clone();
        let mut minus = scores.clone();
        plus.data_mut()[i] += SCORE_STEP;
        minus.data_mut()[i] -= SCORE_STEP;
        let numeric = (eval(&plus, &offsets)?.value - eval(&minus, &offsets)?.value) / (2.0 * SCORE_STEP);
        worst = worst.max(relative_error(analytic.d_scores.data()[i], numeric));
        checked += 1;
    }
    if cfg.trains_offsets() {
        for i in 0..offsets.data().len() {
            if skip[i / n] {
                continue;
            }
            let mut plus = offsets.clone();
            let mut minus = offsets.clone();
            plus.data_mut()[i] += OFFSET_STEP;
            minus.data_mut()[i] -= OFFSET_STEP;
            let numeric = (eval(&scores, &plus)?.value - eval(&scores, &minus)?.value) / (2.0 * OFFSET_STEP);
            worst = worst.max(relative_error(analytic.d_offsets.data()[i], numeric));
            checked += 1;
        }
    }
    let skipped_pixels = skip.iter().filter(|&&s| s).count();
    Ok(GradCheckReport { loss: kind, p, max_relative_error: worst, checked, skipped_pixels })
}
