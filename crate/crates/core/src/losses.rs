//! Depth losses over probability and offset volumes, with analytic
//! gradients with respect to the pre-softmax scores and the offsets.
//!
//! Every loss is a sum of independent per-pixel terms over the supervised
//! pixels. Per-pixel terms are evaluated in parallel and reduced in raster
//! order, so values are bit-reproducible regardless of thread count.
//!
//! * regression: `|Σ_s d_s P_s − d̂|` (soft argmin + L1);
//! * classification: `−Σ_s Q_s ln P_s` with `Q` the one-hot occupancy;
//! * Wasserstein-p against a Dirac at `d̂`: `(Σ_s P_s |d_s + o_s − d̂|^p)^{1/p}`;
//! * adaptive Wasserstein: Wasserstein plus `lambda_cla ×` classification.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::DepthHypothesisSet;
use crate::inference::DepthMap;
use crate::volume::{OffsetVolume, ProbabilityVolume, Volume3};
use crate::{Error, Result};

/// Lower clamp applied to probabilities inside the cross-entropy log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Below this inner sum the outer `(·)^{1/p − 1}` factor of the p > 1
/// Wasserstein gradient is taken as zero.
pub const WASSERSTEIN_GRAD_GUARD: f64 = 1e-30;

/// Tolerance on `Σ P = 1` accepted by [`wasserstein_pixel`].
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

/// One-hot ground-truth occupancy over the hypotheses, stored as the hot
/// index per pixel (`None` for unsupervised pixels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyVolume {
    height: usize,
    width: usize,
    depth: usize,
    labels: Vec<Option<usize>>,
}

impl OccupancyVolume {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.depth)
    }

    pub fn label(&self, y: usize, x: usize) -> Option<usize> {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    /// Indicator value `Q(y, x, s)`.
    pub fn get(&self, y: usize, x: usize, s: usize) -> f64 {
        if self.label(y, x) == Some(s) {
            1.0
        } else {
            0.0
        }
    }

    pub fn valid_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }
}

/// Nearest-hypothesis one-hot encoding of a ground-truth depth map. Pixels
/// that are masked or fall outside `[d_min, d_max]` stay unlabeled.
pub fn one_hot_occupancy(gt: &DepthMap, hyp: &DepthHypothesisSet) -> OccupancyVolume {
    let labels = gt
        .depths()
        .iter()
        .zip(gt.valid_mask())
        .map(|(&d, &ok)| (ok && d >= hyp.d_min() && d <= hyp.d_max()).then(|| hyp.nearest_index(d)))
        .collect();
    OccupancyVolume { height: gt.height(), width: gt.width(), depth: hyp.len(), labels }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Wasserstein exponent, at least 1.
    pub p: f64,
    /// Weight of the classification term in the adaptive loss.
    pub lambda_cla: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { p: 1.0, lambda_cla: 1.0 }
    }
}

impl LossConfig {
    pub fn new(p: f64, lambda_cla: f64) -> Result<Self> {
        let cfg = Self { p, lambda_cla };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidArgument(format!("Wasserstein exponent must be >= 1, got {}", self.p)));
        }
        if !(self.lambda_cla >= 0.0 && self.lambda_cla.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda_cla must be >= 0, got {}", self.lambda_cla)));
        }
        Ok(())
    }
}

/// Loss value with gradients shaped like the input volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValueAndGradient {
    pub value: f64,
    pub d_scores: Volume3,
    pub d_offsets: Volume3,
}

impl LossValueAndGradient {
    /// Adds `weight × other` into `self`.
    pub fn add_scaled(&mut self, other: &LossValueAndGradient, weight: f64) {
        self.value += weight * other.value;
        for (a, b) in self.d_scores.data_mut().iter_mut().zip(other.d_scores.data()) {
            *a += weight * b;
        }
        for (a, b) in self.d_offsets.data_mut().iter_mut().zip(other.d_offsets.data()) {
            *a += weight * b;
        }
    }
}

/// Chain a probability-space gradient through softmax:
/// `∂L/∂z_s = P_s (g_s − Σ_t P_t g_t)`.
fn softmax_backward(probs: &[f64], grad_p: &[f64], out: &mut [f64]) {
    let mean: f64 = probs.iter().zip(grad_p).map(|(p, g)| p * g).sum();
    for ((o, p), g) in out.iter_mut().zip(probs).zip(grad_p) {
        *o = p * (g - mean);
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluate a per-pixel term over the volume. `term(px, d_scores, d_offsets)`
/// writes its gradient rows and returns `None` for unsupervised pixels.
fn accumulate<F>(shape: (usize, usize, usize), term: F) -> Result<LossValueAndGradient>
where
    F: Fn(usize, &mut [f64], &mut [f64]) -> Option<f64> + Sync,
{
    let (h, w, n) = shape;
    let mut d_scores = Volume3::zeros(h, w, n);
    let mut d_offsets = Volume3::zeros(h, w, n);
    let per_pixel: Vec<Option<f64>> = d_scores
        .data_mut()
        .par_chunks_mut(n)
        .zip(d_offsets.data_mut().par_chunks_mut(n))
        .enumerate()
        .map(|(px, (gs, go))| term(px, gs, go))
        .collect();
    let mut value = 0.0;
    let mut supervised = 0usize;
    for v in per_pixel.into_iter().flatten() {
        value += v;
        supervised += 1;
    }
    if supervised == 0 {
        return Err(Error::EmptySupervision);
    }
    Ok(LossValueAndGradient { value, d_scores, d_offsets })
}

fn check_gt(probs: &ProbabilityVolume, hyp: &DepthHypothesisSet, gt: &DepthMap) -> Result<()> {
    if probs.depth() != hyp.len() {
        return Err(Error::ShapeMismatch(format!("{} hypotheses for volume depth {}", hyp.len(), probs.depth())));
    }
    if (gt.height(), gt.width()) != (probs.height(), probs.width()) {
        return Err(Error::ShapeMismatch("ground truth and volume differ in size".into()));
    }
    Ok(())
}

/// Soft-argmin regression: L1 between the expectation depth and the ground
/// truth, summed over valid ground-truth pixels. No offset dependence.
pub fn loss_regression(
    probs: &ProbabilityVolume,
    hyp: &DepthHypothesisSet,
    gt: &DepthMap,
) -> Result<LossValueAndGradient> {
    check_gt(probs, hyp, gt)?;
    let n = hyp.len();
    let d = hyp.values();
    accumulate(probs.shape(), |px, gs, _| {
        if !gt.valid_mask()[px] {
            return None;
        }
        let p = &probs.data()[px * n..(px + 1) * n];
        let expectation: f64 = p.iter().zip(d).map(|(p, d)| p * d).sum();
        let residual = expectation - gt.depths()[px];
        let s = sign(residual);
        for ((g, p), d) in gs.iter_mut().zip(p).zip(d) {
            *g = s * p * (d - expectation);
        }
        Some(residual.abs())
    })
}

/// Cross entropy `−Σ_s Q_s ln max(P_s, LOG_CLAMP)` over labeled pixels. The
/// score gradient is `P − Q`.
pub fn loss_classification(probs: &ProbabilityVolume, occ: &OccupancyVolume) -> Result<LossValueAndGradient> {
    if probs.shape() != occ.shape() {
        return Err(Error::ShapeMismatch("occupancy and probability volumes differ in shape".into()));
    }
    let n = probs.depth();
    accumulate(probs.shape(), |px, gs, _| {
        let k = occ.labels[px]?;
        let p = &probs.data()[px * n..(px + 1) * n];
        gs.copy_from_slice(p);
        gs[k] -= 1.0;
        Some(-p[k].max(LOG_CLAMP).ln())
    })
}

/// Writes `∂W/∂P` and `∂W/∂o` for one pixel and returns `W`.
fn wasserstein_row(
    probs: &[f64],
    offsets: &[f64],
    hyp: &[f64],
    gt: f64,
    p: f64,
    grad_p: &mut [f64],
    grad_off: &mut [f64],
) -> f64 {
    if p == 1.0 {
        let mut w = 0.0;
        for s in 0..probs.len() {
            let delta = hyp[s] + offsets[s] - gt;
            w += probs[s] * delta.abs();
            grad_p[s] = delta.abs();
            grad_off[s] = probs[s] * sign(delta);
        }
        return w;
    }
    let mut inner = 0.0;
    for s in 0..probs.len() {
        let delta = hyp[s] + offsets[s] - gt;
        inner += probs[s] * delta.abs().powf(p);
    }
    let w = inner.powf(1.0 / p);
    if inner < WASSERSTEIN_GRAD_GUARD {
        grad_p.fill(0.0);
        grad_off.fill(0.0);
        return w;
    }
    let outer = inner.powf(1.0 / p - 1.0);
    for s in 0..probs.len() {
        let delta = hyp[s] + offsets[s] - gt;
        let mag = delta.abs();
        grad_p[s] = outer * mag.powf(p) / p;
        grad_off[s] = outer * probs[s] * mag.powf(p - 1.0) * sign(delta);
    }
    w
}

/// Wasserstein-p distance between one pixel's offset-shifted distribution
/// and a Dirac at `gt_depth`.
pub fn wasserstein_pixel(
    p_row: &[f64],
    offsets_row: &[f64],
    hyp: &DepthHypothesisSet,
    gt_depth: f64,
    p: f64,
) -> Result<f64> {
    if p_row.len() != hyp.len() || offsets_row.len() != hyp.len() {
        return Err(Error::ShapeMismatch("row lengths must match the hypothesis count".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("Wasserstein exponent must be >= 1, got {p}")));
    }
    let sum: f64 = p_row.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE || p_row.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidDistribution(sum));
    }
    let hv = hyp.values();
    let inner: f64 = (0..hv.len()).map(|s| p_row[s] * (hv[s] + offsets_row[s] - gt_depth).abs().powf(p)).sum();
    Ok(if p == 1.0 { inner } else { inner.powf(1.0 / p) })
}

/// Sum of per-pixel Wasserstein distances over valid ground-truth pixels.
pub fn loss_wasserstein(
    probs: &ProbabilityVolume,
    offsets: &OffsetVolume,
    hyp: &DepthHypothesisSet,
    gt: &DepthMap,
    cfg: &LossConfig,
) -> Result<LossValueAndGradient> {
    cfg.validate()?;
    check_gt(probs, hyp, gt)?;
    if !offsets.same_shape(probs) {
        return Err(Error::ShapeMismatch("offset and probability volumes differ in shape".into()));
    }
    let n = hyp.len();
    accumulate(probs.shape(), |px, gs, go| {
        if !gt.valid_mask()[px] {
            return None;
        }
        let p = &probs.data()[px * n..(px + 1) * n];
        let o = &offsets.data()[px * n..(px + 1) * n];
        let mut grad_p = vec![0.0; n];
        let w = wasserstein_row(p, o, hyp.values(), gt.depths()[px], cfg.p, &mut grad_p, go);
        softmax_backward(p, &grad_p, gs);
        Some(w)
    })
}

/// Wasserstein loss plus `lambda_cla ×` cross entropy.
pub fn loss_adaptive_wasserstein(
    probs: &ProbabilityVolume,
    offsets: &OffsetVolume,
    hyp: &DepthHypothesisSet,
    gt: &DepthMap,
    occ: &OccupancyVolume,
    cfg: &LossConfig,
) -> Result<LossValueAndGradient> {
    let mut total = loss_wasserstein(probs, offsets, hyp, gt, cfg)?;
    let cla = loss_classification(probs, occ)?;
    total.add_scaled(&cla, cfg.lambda_cla);
    Ok(total)
}

/// L1 on the offset-corrected depth at the occupancy index,
/// `|d_k + o_k − d̂|`. Trains offsets alongside the classification loss.
pub fn loss_offset_regression(
    offsets: &OffsetVolume,
    hyp: &DepthHypothesisSet,
    gt: &DepthMap,
    occ: &OccupancyVolume,
) -> Result<LossValueAndGradient> {
    if offsets.shape() != occ.shape() || offsets.depth() != hyp.len() {
        return Err(Error::ShapeMismatch("offset and occupancy volumes differ in shape".into()));
    }
    accumulate(offsets.shape(), |px, _, go| {
        let k = occ.labels[px]?;
        let residual = hyp.values()[k] + offsets.data()[px * hyp.len() + k] - gt.depths()[px];
        go[k] = sign(residual);
        Some(residual.abs())
    })
}

/// Fraction of offsets whose magnitude exceeds half the local hypothesis
/// spacing.
pub fn offset_out_of_range_fraction(offsets: &OffsetVolume, hyp: &DepthHypothesisSet) -> f64 {
    let n = hyp.len();
    let total = offsets.data().len();
    if total == 0 {
        return 0.0;
    }
    let outside = offsets.data().iter().enumerate().filter(|(i, o)| o.abs() > 0.5 * hyp.local_spacing(i % n)).count();
    outside as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{softmax_depth, ScoreVolume};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_pixel(p: &[f64]) -> ProbabilityVolume {
        ProbabilityVolume::new(Volume3::from_vec(1, 1, p.len(), p.to_vec()).unwrap()).unwrap()
    }

    fn gt1(d: f64) -> DepthMap {
        DepthMap::from_depths(1, 1, vec![d]).unwrap()
    }

    fn offsets1(o: &[f64]) -> OffsetVolume {
        OffsetVolume(Volume3::from_vec(1, 1, o.len(), o.to_vec()).unwrap())
    }

    /// Direct summation oracle, independent of the gradient path.
    fn wasserstein_oracle(p: &[f64], o: &[f64], d: &[f64], gt: f64, exp: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..p.len() {
            acc += p[i] * (d[i] + o[i] - gt).abs().powf(exp);
        }
        acc.powf(1.0 / exp)
    }

    struct Fixture {
        scores: ScoreVolume,
        offsets: OffsetVolume,
        hyp: DepthHypothesisSet,
        gt: DepthMap,
    }

    fn random_fixture(seed: u64, h: usize, w: usize, n: usize) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hyp = DepthHypothesisSet::sample(2.0, 4.0, n, crate::SamplingMode::Uniform).unwrap();
        let scores: Vec<f64> = (0..h * w * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let spacing = hyp.mean_spacing();
        let offsets: Vec<f64> = (0..h * w * n).map(|_| rng.random_range(-spacing..spacing)).collect();
        let gt: Vec<f64> = (0..h * w).map(|_| rng.random_range(2.05..3.95)).collect();
        Fixture {
            scores: ScoreVolume(Volume3::from_vec(h, w, n, scores).unwrap()),
            offsets: OffsetVolume(Volume3::from_vec(h, w, n, offsets).unwrap()),
            hyp,
            gt: DepthMap::from_depths(w, h, gt).unwrap(),
        }
    }

    /// Central-difference check of both gradients. Returns the max relative
    /// error with a unit-free floor of 1e-3 in the denominator.
    fn fd_check(
        fx: &Fixture,
        f: impl Fn(&ScoreVolume, &OffsetVolume) -> LossValueAndGradient,
        skip_offset: impl Fn(usize) -> bool,
    ) -> f64 {
        let base = f(&fx.scores, &fx.offsets);
        let mut worst = 0.0f64;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-3);
        for i in 0..fx.scores.data().len() {
            let (h, mut plus, mut minus) = (1e-5, fx.scores.clone(), fx.scores.clone());
            plus.data_mut()[i] += h;
            minus.data_mut()[i] -= h;
            let num = (f(&plus, &fx.offsets).value - f(&minus, &fx.offsets).value) / (2.0 * h);
            worst = worst.max(rel(base.d_scores.data()[i], num));
        }
        for i in 0..fx.offsets.data().len() {
            if skip_offset(i) {
                continue;
            }
            let (h, mut plus, mut minus) = (1e-4, fx.offsets.clone(), fx.offsets.clone());
            plus.data_mut()[i] += h;
            minus.data_mut()[i] -= h;
            let num = (f(&fx.scores, &plus).value - f(&fx.scores, &minus).value) / (2.0 * h);
            worst = worst.max(rel(base.d_offsets.data()[i], num));
        }
        worst
    }

    fn near_kink(fx: &Fixture, i: usize) -> bool {
        let n = fx.hyp.len();
        let delta = fx.hyp.values()[i % n] + fx.offsets.data()[i] - fx.gt.depths()[i / n];
        delta.abs() < 1e-3
    }

    #[test]
    fn occupancy_examples() {
        let hyp = DepthHypothesisSet::from_values(vec![1.0, 2.0, 3.0]).unwrap();
        let gt = DepthMap::from_depths(4, 1, vec![2.0, 1.7, 0.5, -1.0]).unwrap();
        let occ = one_hot_occupancy(&gt, &hyp);
        assert_eq!(occ.labels(), &[Some(1), Some(1), None, None]);
        assert_eq!(occ.get(0, 1, 1), 1.0);
        assert_eq!(occ.get(0, 1, 0), 0.0);
        assert_eq!(occ.valid_count(), 2);
    }

    #[test]
    fn regression_examples() {
        let hyp = DepthHypothesisSet::from_values(vec![40.0, 60.0]).unwrap();
        let exact = loss_regression(&one_pixel(&[0.0, 1.0]), &hyp, &gt1(60.0)).unwrap();
        assert_eq!(exact.value, 0.0);
        let bimodal = loss_regression(&one_pixel(&[0.5, 0.5]), &hyp, &gt1(60.0)).unwrap();
        assert_eq!(bimodal.value, 10.0);
        assert!(bimodal.d_offsets.data().iter().all(|&g| g == 0.0));
        let none = DepthMap::empty(1, 1);
        assert!(matches!(loss_regression(&one_pixel(&[0.5, 0.5]), &hyp, &none), Err(Error::EmptySupervision)));
    }

    #[test]
    fn classification_examples() {
        let hyp = DepthHypothesisSet::from_values(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let occ = one_hot_occupancy(&gt1(3.0), &hyp);
        let hit = loss_classification(&one_pixel(&[0.0, 0.0, 1.0, 0.0]), &occ).unwrap();
        assert_eq!(hit.value, 0.0);
        let uniform = loss_classification(&one_pixel(&[0.25; 4]), &occ).unwrap();
        assert!((uniform.value - 4.0_f64.ln()).abs() < 1e-15);
        assert_eq!(uniform.d_scores.data(), &[0.25, 0.25, -0.75, 0.25]);
        // a collapsed probability hits the log clamp instead of infinity
        let miss = loss_classification(&one_pixel(&[1.0, 0.0, 0.0, 0.0]), &occ).unwrap();
        assert!((miss.value - (-LOG_CLAMP.ln())).abs() < 1e-9);
    }

    #[test]
    fn wasserstein_pixel_examples() {
        let hyp = DepthHypothesisSet::from_values(vec![0.0, 1.0]).unwrap();
        let w1 = wasserstein_pixel(&[0.5, 0.5], &[0.0, 0.0], &hyp, 0.0, 1.0).unwrap();
        assert_eq!(w1, 0.5);
        let w2 = wasserstein_pixel(&[0.5, 0.5], &[0.0, 0.0], &hyp, 0.0, 2.0).unwrap();
        assert!((w2 - 0.5_f64.sqrt()).abs() < 1e-15);
        let hyp3 = DepthHypothesisSet::from_values(vec![1.0, 2.0, 3.0]).unwrap();
        let zero = wasserstein_pixel(&[0.0, 1.0, 0.0], &[0.0, 0.37, 0.0], &hyp3, 2.37, 1.0).unwrap();
        assert!(zero.abs() <= 1e-12);
        assert!(matches!(
            wasserstein_pixel(&[0.5, 0.6], &[0.0, 0.0], &hyp, 0.0, 1.0),
            Err(Error::InvalidDistribution(_))
        ));
    }

    #[test]
    fn wasserstein_loss_hand_gradients() {
        let hyp = DepthHypothesisSet::from_values(vec![0.0, 1.0]).unwrap();
        // d̂ = 0 is not a valid depth for a DepthMap, so shift the axis by 5
        let hyp_shifted = DepthHypothesisSet::from_values(vec![5.0, 6.0]).unwrap();
        let r = loss_wasserstein(
            &one_pixel(&[0.5, 0.5]),
            &offsets1(&[0.0, 0.0]),
            &hyp_shifted,
            &gt1(5.0),
            &LossConfig::default(),
        )
        .unwrap();
        assert_eq!(r.value, 0.5);
        assert_eq!(r.d_offsets.data(), &[0.0, 0.5]);
        // matches the pixel-level function on the unshifted axis
        assert_eq!(wasserstein_pixel(&[0.5, 0.5], &[0.0, 0.0], &hyp, 0.0, 1.0).unwrap(), r.value);
    }

    #[test]
    fn perfectly_compensated_has_zero_loss_and_gradient() {
        let hyp = DepthHypothesisSet::from_values(vec![1.0, 2.0, 3.0]).unwrap();
        let gt = DepthMap::from_depths(2, 1, vec![2.2, 2.9]).unwrap();
        let probs =
            ProbabilityVolume::new(Volume3::from_vec(1, 2, 3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        let offsets = OffsetVolume(Volume3::from_vec(1, 2, 3, vec![0.0, 0.2, 0.0, 0.0, 0.0, -0.1]).unwrap());
        for p in [1.0, 2.0] {
            let r = loss_wasserstein(&probs, &offsets, &hyp, &gt, &LossConfig::new(p, 1.0).unwrap()).unwrap();
            assert!(r.value.abs() < 1e-12);
            assert!(r.d_scores.data().iter().chain(r.d_offsets.data()).all(|g| g.abs() < 1e-12));
        }
        let occ = one_hot_occupancy(&gt, &hyp);
        let ada = loss_adaptive_wasserstein(&probs, &offsets, &hyp, &gt, &occ, &LossConfig::default()).unwrap();
        assert!(ada.value.abs() < 1e-12);
    }

    #[test]
    fn adaptive_bimodal_example() {
        let hyp = DepthHypothesisSet::from_values(vec![5.0, 6.0]).unwrap();
        let gt = gt1(5.0);
        let occ = one_hot_occupancy(&gt, &hyp);
        let r = loss_adaptive_wasserstein(
            &one_pixel(&[0.5, 0.5]),
            &offsets1(&[0.0, 0.0]),
            &hyp,
            &gt,
            &occ,
            &LossConfig::default(),
        )
        .unwrap();
        assert!((r.value - (0.5 + 2.0_f64.ln())).abs() < 1e-15);
        assert!((r.value - 1.1931).abs() < 1e-4);
    }

    #[test]
    fn adaptive_is_sum_of_components() {
        let fx = random_fixture(7, 3, 4, 6);
        let probs = softmax_depth(&fx.scores);
        let occ = one_hot_occupancy(&fx.gt, &fx.hyp);
        let cfg = LossConfig::new(2.0, 0.7).unwrap();
        let ada = loss_adaptive_wasserstein(&probs, &fx.offsets, &fx.hyp, &fx.gt, &occ, &cfg).unwrap();
        let w = loss_wasserstein(&probs, &fx.offsets, &fx.hyp, &fx.gt, &cfg).unwrap();
        let c = loss_classification(&probs, &occ).unwrap();
        assert!((ada.value - (w.value + 0.7 * c.value)).abs() < 1e-12);
        for i in 0..w.d_scores.data().len() {
            let expected = w.d_scores.data()[i] + 0.7 * c.d_scores.data()[i];
            assert!((ada.d_scores.data()[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let fx = random_fixture(11, 4, 4, 8);
        let occ = one_hot_occupancy(&fx.gt, &fx.hyp);
        let reg = fd_check(&fx, |s, _| loss_regression(&softmax_depth(s), &fx.hyp, &fx.gt).unwrap(), |_| false);
        assert!(reg < 1e-6, "regression {reg}");
        let cla = fd_check(&fx, |s, _| loss_classification(&softmax_depth(s), &occ).unwrap(), |_| false);
        assert!(cla < 1e-6, "classification {cla}");
        for p in [1.0, 2.0] {
            let cfg = LossConfig::new(p, 1.0).unwrap();
            let skip = |i| p == 1.0 && near_kink(&fx, i);
            let was =
                fd_check(&fx, |s, o| loss_wasserstein(&softmax_depth(s), o, &fx.hyp, &fx.gt, &cfg).unwrap(), skip);
            assert!(was < 1e-6, "wasserstein p={p}: {was}");
            let ada = fd_check(
                &fx,
                |s, o| loss_adaptive_wasserstein(&softmax_depth(s), o, &fx.hyp, &fx.gt, &occ, &cfg).unwrap(),
                skip,
            );
            assert!(ada < 1e-6, "adaptive p={p}: {ada}");
        }
        let off =
            fd_check(&fx, |_, o| loss_offset_regression(o, &fx.hyp, &fx.gt, &occ).unwrap(), |i| near_kink(&fx, i));
        assert!(off < 1e-6, "offset regression {off}");
    }

    #[test]
    fn classification_gradient_sums_to_zero() {
        let fx = random_fixture(3, 5, 5, 12);
        let occ = one_hot_occupancy(&fx.gt, &fx.hyp);
        let r = loss_classification(&softmax_depth(&fx.scores), &occ).unwrap();
        for row in r.d_scores.rows() {
            assert!(row.iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_range_diagnostic() {
        let hyp = DepthHypothesisSet::from_values(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(offset_out_of_range_fraction(&offsets1(&[0.1, -0.6, 0.5, 2.0]), &hyp), 0.5);
    }

    proptest! {
        #[test]
        fn wasserstein_matches_oracle_and_is_nonnegative(
            raw in prop::collection::vec(0.0..1.0f64, 6),
            off in prop::collection::vec(-1.0..1.0f64, 6),
            gt in 0.5..7.0f64,
            p in 1.0..4.0f64,
        ) {
            let total: f64 = raw.iter().sum::<f64>() + 1e-9;
            let probs: Vec<f64> = raw.iter().map(|v| (v + 1e-9 / 6.0) / total).collect();
            let hyp = DepthHypothesisSet::from_values((0..6).map(|k| 1.0 + k as f64).collect()).unwrap();
            let w = wasserstein_pixel(&probs, &off, &hyp, gt, p).unwrap();
            prop_assert!(w >= 0.0);
            let oracle = wasserstein_oracle(&probs, &off, hyp.values(), gt, p);
            prop_assert!((w - oracle).abs() <= 1e-12 * oracle.max(1.0));
        }

        #[test]
        fn moving_an_offset_toward_target_never_increases_loss(
            scores in prop::collection::vec(-2.0..2.0f64, 5),
            off in prop::collection::vec(-1.0..1.0f64, 5),
            k in 0usize..5, frac in 0.0..1.0f64, gt in 1.5..5.5f64, p in prop::sample::select(vec![1.0, 2.0, 3.0]),
        ) {
            let hyp = DepthHypothesisSet::from_values((0..5).map(|i| 1.0 + i as f64).collect()).unwrap();
            let probs = softmax_depth(&ScoreVolume(Volume3::from_vec(1, 1, 5, scores).unwrap()));
            let cfg = LossConfig::new(p, 1.0).unwrap();
            let before = loss_wasserstein(&probs, &offsets1(&off), &hyp, &gt1(gt), &cfg).unwrap().value;
            let mut moved = off.clone();
            let target = gt - hyp.values()[k];
            moved[k] += frac * (target - moved[k]);
            let after = loss_wasserstein(&probs, &offsets1(&moved), &hyp, &gt1(gt), &cfg).unwrap().value;
            prop_assert!(after <= before + 1e-12);
        }

        #[test]
        fn losses_are_nonnegative(seed in 0u64..1000) {
            let fx = random_fixture(seed, 2, 3, 5);
            let probs = softmax_depth(&fx.scores);
            let occ = one_hot_occupancy(&fx.gt, &fx.hyp);
            let cfg = LossConfig::default();
            prop_assert!(loss_regression(&probs, &fx.hyp, &fx.gt).unwrap().value >= 0.0);
            prop_assert!(loss_classification(&probs, &occ).unwrap().value >= 0.0);
            prop_assert!(loss_wasserstein(&probs, &fx.offsets, &fx.hyp, &fx.gt, &cfg).unwrap().value >= 0.0);
            prop_assert!(loss_adaptive_wasserstein(&probs, &fx.offsets, &fx.hyp, &fx.gt, &occ, &cfg).unwrap().value >= 0.0);
        }
    }

    #[test]
    fn p1_equals_expected_absolute_error_under_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let probs = [0.1, 0.4, 0.3, 0.2];
        let off = [0.3, -0.2, 0.1, 0.45];
        let hyp = DepthHypothesisSet::from_values(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let gt = 2.6;
        let exact = wasserstein_pixel(&probs, &off, &hyp, gt, 1.0).unwrap();
        let n = 100_000;
        let dist = rand::distr::weighted::WeightedIndex::new(probs).unwrap();
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let s = rng.sample(&dist);
                (hyp.values()[s] + off[s] - gt).abs()
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "mc {mean} exact {exact} se {se}");
    }
}
