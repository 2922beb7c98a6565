//! Direct per-pixel fitting of score and offset volumes.
//!
//! This replaces network training at desk scale: instead of learning
//! weights that produce the volumes, the volumes themselves are the
//! parameters, updated by Adam against the chosen loss. Every pixel is an
//! independent problem, so the fit exercises the losses exactly as a
//! network's output layer would see them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::DepthHypothesisSet;
use crate::inference::{depth_expectation, depth_mode_offset, DepthMap};
use crate::losses::{
    loss_adaptive_wasserstein, loss_classification, loss_offset_regression, loss_regression, loss_wasserstein,
    one_hot_occupancy, LossConfig, LossValueAndGradient, OccupancyVolume,
};
use crate::volume::{softmax_depth, OffsetVolume, ProbabilityVolume, ScoreVolume};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Soft argmin + L1.
    Regression,
    /// Cross entropy over the one-hot occupancy.
    Classification,
    /// Wasserstein-p with offsets.
    Wasserstein,
    /// Wasserstein-p with offsets plus weighted cross entropy.
    Adaptive,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Regression => "l1",
            LossKind::Classification => "ce",
            LossKind::Wasserstein => "wasserstein",
            LossKind::Adaptive => "adaptive",
        }
    }
}

/// How a fitted volume is turned into a depth map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    Expectation,
    Mode,
    ModeOffset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub loss_kind: LossKind,
    pub steps: usize,
    pub learning_rate: f64,
    pub loss_config: LossConfig,
    pub seed: u64,
    /// Train offsets with an auxiliary L1 term at the occupancy index.
    /// Only read for [`LossKind::Classification`]; the Wasserstein losses
    /// always train offsets and regression never does.
    pub classification_offsets: bool,
    /// Step decay: the learning rate is multiplied by `lr_decay` every
    /// `decay_every` steps.
    pub lr_decay: f64,
    pub decay_every: usize,
    /// Half-width of the uniform jitter added to the initial scores.
    pub init_noise: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            loss_kind: LossKind::Adaptive,
            steps: 2000,
            learning_rate: 1e-3,
            loss_config: LossConfig::default(),
            seed: 0,
            classification_offsets: false,
            lr_decay: 0.9,
            decay_every: 100,
            init_noise: 0.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.decay_every == 0 {
            return Err(Error::InvalidArgument("lr_decay must be in (0, 1] with decay_every >= 1".into()));
        }
        if !(self.init_noise >= 0.0) {
            return Err(Error::InvalidArgument("init_noise must be non-negative".into()));
        }
        self.loss_config.validate()
    }

    pub fn trains_offsets(&self) -> bool {
        match self.loss_kind {
            LossKind::Regression => false,
            LossKind::Classification => self.classification_offsets,
            LossKind::Wasserstein | LossKind::Adaptive => true,
        }
    }

    /// Readout matching the loss: expectation for regression, the mode for
    /// plain classification, and mode plus offset otherwise.
    pub fn readout(&self) -> Readout {
        match self.loss_kind {
            LossKind::Regression => Readout::Expectation,
            _ if self.trains_offsets() => Readout::ModeOffset,
            _ => Readout::Mode,
        }
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((step / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitState {
    pub scores: ScoreVolume,
    pub offsets: OffsetVolume,
    pub step_count: usize,
    /// Total loss evaluated before each update.
    pub loss_history: Vec<f64>,
}

impl FitState {
    pub fn probabilities(&self) -> ProbabilityVolume {
        softmax_depth(&self.scores)
    }

    pub fn depth(&self, readout: Readout, hyp: &DepthHypothesisSet) -> Result<DepthMap> {
        let probs = self.probabilities();
        match readout {
            Readout::Expectation => depth_expectation(&probs, hyp),
            Readout::Mode => depth_mode_offset(&probs, None, hyp),
            Readout::ModeOffset => depth_mode_offset(&probs, Some(&self.offsets), hyp),
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn all_finite(r: &LossValueAndGradient) -> bool {
    r.value.is_finite()
        && r.d_scores.data().iter().all(|v| v.is_finite())
        && r.d_offsets.data().iter().all(|v| v.is_finite())
}

/// Value and gradients of the loss selected by `cfg`, taken with respect
/// to the scores (through the softmax) and the offsets.
pub fn evaluate_loss(
    cfg: &FitConfig,
    scores: &ScoreVolume,
    offsets: &OffsetVolume,
    hyp: &DepthHypothesisSet,
    gt: &DepthMap,
    occ: &OccupancyVolume,
) -> Result<LossValueAndGradient> {
    let probs = softmax_depth(scores);
    let lc = &cfg.loss_config;
    match cfg.loss_kind {
        LossKind::Regression => loss_regression(&probs, hyp, gt),
        LossKind::Classification => {
            let mut r = loss_classification(&probs, occ)?;
            if cfg.trains_offsets() {
                r.add_scaled(&loss_offset_regression(offsets, hyp, gt, occ)?, 1.0);
            }
            Ok(r)
        }
        LossKind::Wasserstein => loss_wasserstein(&probs, offsets, hyp, gt, lc),
        LossKind::Adaptive => loss_adaptive_wasserstein(&probs, offsets, hyp, gt, occ, lc),
    }
}

/// Fit scores (and offsets where the loss uses them) to a ground-truth
/// depth map. Offsets start at zero; scores start at `init` plus seeded
/// jitter of half-width `cfg.init_noise`.
pub fn fit_volume(init: &ScoreVolume, gt: &DepthMap, hyp: &DepthHypothesisSet, cfg: &FitConfig) -> Result<FitState> {
    cfg.validate()?;
    let (h, w, n) = init.shape();
    if n != hyp.len() {
        return Err(Error::ShapeMismatch(format!("{} hypotheses for volume depth {n}", hyp.len())));
    }
    if (gt.height(), gt.width()) != (h, w) {
        return Err(Error::ShapeMismatch("ground truth and score volume differ in size".into()));
    }

    let mut scores = init.clone();
    if cfg.init_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for s in scores.data_mut() {
            *s += rng.random_range(-cfg.init_noise..=cfg.init_noise);
        }
    }
    let mut offsets = OffsetVolume::zeros(h, w, n);
    let occ = one_hot_occupancy(gt, hyp);
    let train_offsets = cfg.trains_offsets();
    let mut adam_scores = Adam::new(scores.data().len());
    let mut adam_offsets = Adam::new(if train_offsets { offsets.data().len() } else { 0 });
    let mut loss_history = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let result = evaluate_loss(cfg, &scores, &offsets, hyp, gt, &occ)?;
        if !all_finite(&result) {
            return Err(Error::Divergence(step));
        }
        loss_history.push(result.value);
        let lr = cfg.learning_rate_at(step);
        adam_scores.step(scores.data_mut(), result.d_scores.data(), lr);
        if train_offsets {
            adam_offsets.step(offsets.data_mut(), result.d_offsets.data(), lr);
        }
        if scores.data().iter().chain(offsets.data()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence(step));
        }
    }

    Ok(FitState { scores, offsets, step_count: cfg.steps, loss_history })
}
