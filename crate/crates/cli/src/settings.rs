use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use wassmvs::geometry::{DepthHypothesisSet, SamplingMode};
use wassmvs::io::DepthLine;
use wassmvs::losses::LossConfig;
use wassmvs::optimizer::{FitConfig, LossKind, Readout};
use wassmvs::pipeline::{InitMode, ReconstructConfig, SweepConfig};
use wassmvs::postproc::ConsistencyParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossArg {
    L1,
    Ce,
    Wasserstein,
    Adaptive,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::L1 => LossKind::Regression,
            LossArg::Ce => LossKind::Classification,
            LossArg::Wasserstein => LossKind::Wasserstein,
            LossArg::Adaptive => LossKind::Adaptive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingArg {
    Uniform,
    Inverse,
}

impl From<SamplingArg> for SamplingMode {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::Uniform => SamplingMode::Uniform,
            SamplingArg::Inverse => SamplingMode::InverseDepth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    Zeros,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadoutArg {
    Expectation,
    Mode,
    ModeOffset,
}

impl From<ReadoutArg> for Readout {
    fn from(r: ReadoutArg) -> Self {
        match r {
            ReadoutArg::Expectation => Readout::Expectation,
            ReadoutArg::Mode => Readout::Mode,
            ReadoutArg::ModeOffset => Readout::ModeOffset,
        }
    }
}

/// Fully resolved run settings. A JSON config file may give any subset of
/// these fields; command-line flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub loss: LossArg,
    pub offsets: bool,
    pub p: f64,
    pub lambda_cla: f64,
    pub planes: Option<usize>,
    pub sampling: SamplingArg,
    pub conf_threshold: f64,
    pub pixel_tol: f64,
    pub depth_tol: f64,
    pub min_views: usize,
    pub seed: u64,
    pub steps: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub init: InitArg,
    pub sweep_gain: f64,
    pub patch_radius: usize,
    pub smooth_radius: usize,
    pub fscore_threshold: f64,
    pub outlier_cap: Option<f64>,
    pub dedup: bool,
}

impl Default for Settings {
    fn default() -> Self {
        let fit = FitConfig::default();
        let cons = ConsistencyParams::default();
        let sweep = SweepConfig::default();
        Self {
            loss: LossArg::Adaptive,
            offsets: false,
            p: fit.loss_config.p,
            lambda_cla: fit.loss_config.lambda_cla,
            planes: None,
            sampling: SamplingArg::Uniform,
            conf_threshold: 0.25,
            pixel_tol: cons.pixel_tol,
            depth_tol: cons.depth_tol,
            min_views: cons.min_views,
            seed: 0,
            steps: fit.steps,
            lr: fit.learning_rate,
            lr_decay: fit.lr_decay,
            decay_every: fit.decay_every,
            init: InitArg::Zeros,
            sweep_gain: 4.0,
            patch_radius: sweep.patch_radius,
            smooth_radius: sweep.smooth_radius,
            fscore_threshold: 0.02,
            outlier_cap: None,
            dedup: true,
        }
    }
}

/// Pipeline flags shared by the subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// JSON settings file; flags given on the command line take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training loss [default: adaptive]
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Train offsets with the cross-entropy loss
    #[arg(long)]
    pub offsets: bool,
    /// Wasserstein order [default: 1]
    #[arg(long)]
    pub p: Option<f64>,
    /// Weight of the cross-entropy term in the adaptive loss [default: 1]
    #[arg(long)]
    pub lambda_cla: Option<f64>,
    /// Number of depth hypotheses [default: taken from the camera files]
    #[arg(long)]
    pub planes: Option<usize>,
    /// Hypothesis spacing [default: uniform]
    #[arg(long, value_enum)]
    pub sampling: Option<SamplingArg>,
    /// Photometric confidence threshold [default: 0.25]
    #[arg(long)]
    pub conf_threshold: Option<f64>,
    /// Reprojection pixel tolerance [default: 1]
    #[arg(long)]
    pub pixel_tol: Option<f64>,
    /// Relative depth tolerance [default: 0.01]
    #[arg(long)]
    pub depth_tol: Option<f64>,
    /// Consistent source views required [default: 3]
    #[arg(long)]
    pub min_views: Option<usize>,
    /// Random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Optimizer steps [default: 2000]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning-rate decay factor [default: 0.9]
    #[arg(long)]
    pub lr_decay: Option<f64>,
    /// Steps between learning-rate decays [default: 100]
    #[arg(long)]
    pub decay_every: Option<usize>,
    /// Score initialization [default: zeros]
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Scale of sweep-initialized scores [default: 4]
    #[arg(long)]
    pub sweep_gain: Option<f64>,
    /// Patch descriptor radius [default: 1]
    #[arg(long)]
    pub patch_radius: Option<usize>,
    /// Score smoothing radius [default: 1]
    #[arg(long)]
    pub smooth_radius: Option<usize>,
    /// F-score distance threshold [default: 0.02]
    #[arg(long)]
    pub fscore_threshold: Option<f64>,
    /// Drop distances above this from accuracy and completeness
    #[arg(long)]
    pub outlier_cap: Option<f64>,
}

macro_rules! overlay {
    ($s:ident, $o:ident: $($f:ident => $t:ident),* $(,)?) => {
        $( if let Some(v) = $o.$f { $s.$t = v; } )*
    };
}

impl Opts {
    pub fn resolve(&self) -> Result<Settings> {
        self.resolve_over(Settings::default())
    }

    /// Overlay the flags on `base`, or on the config file when one is given.
    pub fn resolve_over(&self, base: Settings) -> Result<Settings> {
        let mut s = match &self.config {
            Some(path) => load_settings(path)?,
            None => base,
        };
        overlay!(s, self:
            loss => loss, p => p, lambda_cla => lambda_cla, sampling => sampling,
            conf_threshold => conf_threshold, pixel_tol => pixel_tol, depth_tol => depth_tol,
            min_views => min_views, seed => seed, steps => steps, lr => lr, lr_decay => lr_decay,
            decay_every => decay_every, init => init, sweep_gain => sweep_gain,
            patch_radius => patch_radius, smooth_radius => smooth_radius,
            fscore_threshold => fscore_threshold,
        );
        if self.offsets {
            s.offsets = true;
        }
        if self.planes.is_some() {
            s.planes = self.planes;
        }
        if self.outlier_cap.is_some() {
            s.outlier_cap = self.outlier_cap;
        }
        Ok(s)
    }
}

impl Settings {
    pub fn fit(&self) -> FitConfig {
        FitConfig {
            loss_kind: self.loss.into(),
            steps: self.steps,
            learning_rate: self.lr,
            loss_config: LossConfig { p: self.p, lambda_cla: self.lambda_cla },
            seed: self.seed,
            classification_offsets: self.offsets,
            lr_decay: self.lr_decay,
            decay_every: self.decay_every,
            init_noise: 0.0,
        }
    }

    pub fn reconstruct(&self, planes: usize) -> ReconstructConfig {
        ReconstructConfig {
            planes,
            sampling: self.sampling.into(),
            fit: self.fit(),
            init: match self.init {
                InitArg::Zeros => InitMode::Zeros,
                InitArg::Sweep => InitMode::Sweep { gain: self.sweep_gain },
            },
            sweep: self.sweep(),
            conf_threshold: self.conf_threshold,
            consistency: ConsistencyParams {
                pixel_tol: self.pixel_tol,
                depth_tol: self.depth_tol,
                min_views: self.min_views,
            },
            dedup: self.dedup,
        }
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig { patch_radius: self.patch_radius, smooth_radius: self.smooth_radius }
    }

    pub fn hypotheses(&self, line: &DepthLine) -> Result<DepthHypothesisSet> {
        Ok(line.hypotheses(self.planes, self.sampling.into())?)
    }
}

pub fn load_settings(path: &Path) -> Result<Settings> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
