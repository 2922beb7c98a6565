//! `wassmvs` command-line front end.

mod settings;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use wassmvs::evalmetrics::CloudMetrics;
use wassmvs::gradcheck::check_gradients;
use wassmvs::inference::{confidence_map, ConfidenceMap, DepthMap};
use wassmvs::io::{self, PlyFormat, SceneData};
use wassmvs::optimizer::{fit_volume, FitState, LossKind, Readout};
use wassmvs::pipeline::{
    bench_losses, bench_views, ground_truth_cloud, normalize_scores, score_cloud, sweep_view, BenchConfig, BenchRow,
    InitMode, Views,
};
use wassmvs::postproc::{fuse_point_cloud, geometric_filter, photometric_filter, PointCloud};
use wassmvs::scenegen::{generate_scene, SceneKind, SceneSpec};
use wassmvs::volume::{OffsetVolume, ScoreVolume};
use wassmvs::DepthHypothesisSet;

use settings::{Opts, ReadoutArg, Settings};

#[derive(Debug, Parser)]
#[command(
    name = "wassmvs",
    version,
    about = "Plane-sweep MVS with regression, classification and adaptive Wasserstein losses"
)]
struct Cli {
    /// Worker threads (0 = one per core)
    #[arg(long, global = true, env = "WASSMVS_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Plane,
    Steps,
    SphereOnPlane,
}

impl From<KindArg> for SceneKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Plane => SceneKind::Plane,
            KindArg::Steps => SceneKind::Steps,
            KindArg::SphereOnPlane => SceneKind::SphereOnPlane,
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
struct SceneArgs {
    #[arg(long, value_enum, default_value = "steps")]
    kind: KindArg,
    #[arg(long, default_value_t = 5)]
    views: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 48)]
    height: usize,
    /// Focal length in pixels [default: 0.9375 x width]
    #[arg(long)]
    focal: Option<f64>,
    #[arg(long, default_value_t = 0.6)]
    ring_radius: f64,
    #[arg(long, default_value_t = 5.0)]
    look_at: f64,
    #[arg(long, default_value_t = 3.5)]
    d_min: f64,
    #[arg(long, default_value_t = 7.0)]
    d_max: f64,
    /// Slope of the plane scene
    #[arg(long, default_value_t = 0.0)]
    tilt: f64,
}

impl SceneArgs {
    fn spec(&self) -> SceneSpec {
        SceneSpec {
            n_views: self.views,
            width: self.width,
            height: self.height,
            focal: self.focal.unwrap_or(self.width as f64 * 0.9375),
            ring_radius: self.ring_radius,
            look_at_depth: self.look_at,
            depth_range: (self.d_min, self.d_max),
            plane_tilt: self.tilt,
            ..SceneSpec::new(self.kind.into())
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic scene directory
    Scenegen {
        #[command(flatten)]
        scene: SceneArgs,
        /// Hypothesis count recorded in the camera files
        #[arg(long, default_value_t = 64)]
        planes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build plane-sweep score volumes
    Sweep {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only this reference view
        #[arg(long)]
        view: Option<usize>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Fit score and offset volumes to the ground-truth depths
    Fit {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Read depth and confidence maps out of fitted volumes
    Infer {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        run: PathBuf,
        /// Readout rule [default: matches the loss]
        #[arg(long, value_enum)]
        readout: Option<ReadoutArg>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Photometric and geometric filtering of the inferred depth maps
    Filter {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Fuse filtered depth maps into a point cloud
    Fuse {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        binary: bool,
        #[command(flatten)]
        opts: Opts,
    },
    /// Compare a run's point cloud with the fused ground truth
    Eval {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Compare the loss variants end to end
    BenchLosses {
        /// Use this scene directory instead of generating one per seed
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[command(flatten)]
        scene_args: SceneArgs,
        /// CSV output path [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Check the analytic loss gradients against finite differences
    Gradcheck {
        /// Wasserstein orders to check
        #[arg(long = "p", default_values_t = [1.0, 2.0])]
        p: Vec<f64>,
        /// Volume shape as HxWxN
        #[arg(long, default_value = "8x8x16")]
        size: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a T,
}

fn write_manifest<T: Serialize>(path: &Path, command: &str, seed: u64, config: &T) -> Result<()> {
    let m = Manifest { tool: "wassmvs", version: env!("CARGO_PKG_VERSION"), command, seed, config };
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn settings_path(run: &Path) -> PathBuf {
    run.join("settings.json")
}

/// Flags over the settings a previous stage stored in the run directory.
fn run_settings(run: &Path, opts: &Opts) -> Result<Settings> {
    let stored = settings_path(run);
    let base = if stored.exists() { settings::load_settings(&stored)? } else { Settings::default() };
    opts.resolve_over(base)
}

fn view_file(dir: &Path, sub: &str, i: usize, ext: &str) -> PathBuf {
    dir.join(sub).join(format!("{i:08}.{ext}"))
}

fn load_scene(dir: &Path) -> Result<SceneData> {
    io::read_scene_dir(dir).with_context(|| format!("reading scene directory {}", dir.display()))
}

fn gt_depths(scene: &SceneData) -> Result<&[DepthMap]> {
    scene.gt_depths.as_deref().context("scene has no gt_depths directory")
}

fn hypotheses(settings: &Settings, scene: &SceneData) -> Result<Vec<DepthHypothesisSet>> {
    scene.depth_lines.iter().map(|l| settings.hypotheses(l)).collect()
}

fn write_confidence(path: &Path, conf: &ConfidenceMap) -> Result<()> {
    let map = DepthMap::from_depths(conf.width(), conf.height(), conf.values().to_vec())?;
    Ok(io::write_pfm(path, &map)?)
}

fn read_confidence(path: &Path) -> Result<ConfidenceMap> {
    let map = io::read_pfm(path)?;
    let values = map.depths().iter().zip(map.valid_mask()).map(|(&d, &v)| if v { d } else { 0.0 }).collect();
    Ok(ConfidenceMap::new(map.width(), map.height(), values)?)
}

fn create_dirs(root: &Path, subs: &[&str]) -> Result<()> {
    for s in subs {
        fs::create_dir_all(root.join(s)).with_context(|| format!("creating {}", root.join(s).display()))?;
    }
    Ok(())
}

fn cmd_scenegen(args: &SceneArgs, planes: usize, seed: u64, out: &Path) -> Result<()> {
    let spec = args.spec();
    let scene = generate_scene(&spec, seed)?;
    let hyp = spec.hypotheses(planes, wassmvs::SamplingMode::Uniform)?;
    io::write_scene_dir(out, &scene, &hyp)?;
    write_manifest(&out.join("manifest.json"), "scenegen", seed, &(spec, planes))?;
    println!("wrote {} views to {}", scene.cams.len(), out.display());
    Ok(())
}

fn cmd_sweep(scene_dir: &Path, out: &Path, view: Option<usize>, opts: &Opts) -> Result<()> {
    let s = opts.resolve()?;
    let scene = load_scene(scene_dir)?;
    let hyps = hypotheses(&s, &scene)?;
    create_dirs(out, &["scores"])?;
    let views: Vec<usize> = match view {
        Some(v) if v >= scene.len() => bail!("view {v} out of range"),
        Some(v) => vec![v],
        None => (0..scene.len()).collect(),
    };
    for i in views {
        let scores = sweep_view(&scene.images, &scene.cams, i, &scene.sources(i), &hyps[i], &s.sweep())?;
        io::write_volume(&view_file(out, "scores", i, "vol"), &scores)?;
    }
    write_manifest(&out.join("manifest.json"), "sweep", s.seed, &s)?;
    Ok(())
}

fn readout(state: &FitState, kind: Readout, hyp: &DepthHypothesisSet) -> Result<(DepthMap, ConfidenceMap)> {
    Ok((state.depth(kind, hyp)?, confidence_map(&state.probabilities(), hyp)?))
}

fn cmd_fit(scene_dir: &Path, out: &Path, opts: &Opts) -> Result<()> {
    let s = opts.resolve()?;
    let scene = load_scene(scene_dir)?;
    let gt = gt_depths(&scene)?;
    let hyps = hypotheses(&s, &scene)?;
    create_dirs(out, &["scores", "offsets", "depths", "confidence"])?;
    let mut log = csv::Writer::from_path(out.join("fit.csv"))?;
    log.write_record(["view", "loss", "steps", "final_loss"])?;
    for i in 0..scene.len() {
        let cam = &scene.cams[i];
        let cfg = s.reconstruct(hyps[i].len());
        let init = match cfg.init {
            InitMode::Zeros => ScoreVolume::zeros(cam.height(), cam.width(), hyps[i].len()),
            InitMode::Sweep { gain } => normalize_scores(
                &sweep_view(&scene.images, &scene.cams, i, &scene.sources(i), &hyps[i], &cfg.sweep)?,
                gain,
            ),
        };
        let fit = wassmvs::FitConfig { seed: s.seed.wrapping_add(i as u64), ..cfg.fit.clone() };
        let state = fit_volume(&init, &gt[i], &hyps[i], &fit)?;
        io::write_volume(&view_file(out, "scores", i, "vol"), &state.scores)?;
        io::write_volume(&view_file(out, "offsets", i, "vol"), &state.offsets)?;
        let (depth, conf) = readout(&state, fit.readout(), &hyps[i])?;
        io::write_pfm(&view_file(out, "depths", i, "pfm"), &depth)?;
        write_confidence(&view_file(out, "confidence", i, "pfm"), &conf)?;
        let last = state.loss_history.last().map_or(String::new(), |v| v.to_string());
        log.write_record([i.to_string(), LossKind::from(s.loss).name().to_string(), s.steps.to_string(), last])?;
    }
    log.flush()?;
    fs::write(settings_path(out), serde_json::to_string_pretty(&s)? + "\n")?;
    write_manifest(&out.join("manifest.json"), "fit", s.seed, &s)?;
    Ok(())
}

fn cmd_infer(scene_dir: &Path, run: &Path, readout_arg: Option<ReadoutArg>, opts: &Opts) -> Result<()> {
    let s = run_settings(run, opts)?;
    let scene = load_scene(scene_dir)?;
    let hyps = hypotheses(&s, &scene)?;
    create_dirs(run, &["depths", "confidence"])?;
    let rule = readout_arg.map(Readout::from).unwrap_or_else(|| s.reconstruct(0).fit.readout());
    for (i, hyp) in hyps.iter().enumerate() {
        let scores = ScoreVolume(io::read_volume(&view_file(run, "scores", i, "vol"))?);
        let offsets_path = view_file(run, "offsets", i, "vol");
        let offsets = if offsets_path.exists() {
            OffsetVolume(io::read_volume(&offsets_path)?)
        } else {
            let (h, w, n) = scores.shape();
            OffsetVolume::zeros(h, w, n)
        };
        let state = FitState { scores, offsets, step_count: 0, loss_history: Vec::new() };
        let (depth, conf) = readout(&state, rule, hyp)?;
        io::write_pfm(&view_file(run, "depths", i, "pfm"), &depth)?;
        write_confidence(&view_file(run, "confidence", i, "pfm"), &conf)?;
    }
    write_manifest(&run.join("infer.manifest.json"), "infer", s.seed, &(&s, rule))?;
    Ok(())
}

fn filter_run(scene: &SceneData, run: &Path, s: &Settings) -> Result<Vec<DepthMap>> {
    let mut photometric = Vec::with_capacity(scene.len());
    for i in 0..scene.len() {
        let depth = io::read_pfm(&view_file(run, "depths", i, "pfm"))?;
        let conf = read_confidence(&view_file(run, "confidence", i, "pfm"))?;
        photometric.push(photometric_filter(&depth, &conf, s.conf_threshold)?);
    }
    let cfg = s.reconstruct(0);
    let filtered = (0..scene.len())
        .map(|i| geometric_filter(&photometric, &scene.cams, i, &cfg.consistency))
        .collect::<wassmvs::Result<Vec<_>>>()?;
    create_dirs(run, &["filtered"])?;
    for (i, f) in filtered.iter().enumerate() {
        io::write_pfm(&view_file(run, "filtered", i, "pfm"), f)?;
    }
    Ok(filtered)
}

fn fuse_run(scene: &SceneData, run: &Path, s: &Settings, filtered: &[DepthMap], binary: bool) -> Result<PointCloud> {
    let cloud = fuse_point_cloud(filtered, &scene.cams, &s.reconstruct(0).fusion())?;
    let format = if binary { PlyFormat::BinaryLittleEndian } else { PlyFormat::Ascii };
    io::write_ply(&cloud, &run.join("cloud.ply"), format)?;
    Ok(cloud)
}

fn read_filtered(scene: &SceneData, run: &Path) -> Result<Vec<DepthMap>> {
    (0..scene.len())
        .map(|i| {
            let path = view_file(run, "filtered", i, "pfm");
            io::read_pfm(&path).with_context(|| format!("reading {} (run `filter` first)", path.display()))
        })
        .collect()
}

fn write_metrics(path: &Path, m: &CloudMetrics, points: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["points", "accuracy", "completeness", "overall", "precision", "recall", "fscore", "threshold"])?;
    w.write_record([
        points.to_string(),
        m.accuracy.to_string(),
        m.completeness.to_string(),
        m.overall.to_string(),
        m.precision.to_string(),
        m.recall.to_string(),
        m.fscore.to_string(),
        m.threshold.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

fn cmd_eval(scene_dir: &Path, run: &Path, opts: &Opts) -> Result<()> {
    let s = run_settings(run, opts)?;
    let scene = load_scene(scene_dir)?;
    let cloud_path = run.join("cloud.ply");
    let cloud = if cloud_path.exists() {
        io::read_ply(&cloud_path)?
    } else {
        let filtered =
            if run.join("filtered").is_dir() { read_filtered(&scene, run)? } else { filter_run(&scene, run, &s)? };
        fuse_run(&scene, run, &s, &filtered, false)?
    };
    let gt = ground_truth_cloud(gt_depths(&scene)?, &scene.cams, &s.reconstruct(0).fusion())?;
    let m = score_cloud(&cloud, &gt, s.fscore_threshold, s.outlier_cap)?;
    write_metrics(&run.join("metrics.csv"), &m, cloud.len())?;
    if cloud.is_empty() {
        eprintln!("warning: empty point cloud; no pixel passed the confidence threshold {}", s.conf_threshold);
    }
    println!(
        "points {} accuracy {:.6} completeness {:.6} overall {:.6} fscore {:.4}",
        cloud.len(),
        m.accuracy,
        m.completeness,
        m.overall,
        m.fscore
    );
    Ok(())
}

fn write_rows(rows: &[BenchRow], out: Option<&Path>) -> Result<()> {
    let sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_bench(
    scene_dir: Option<&Path>,
    seeds: u64,
    scene_args: &SceneArgs,
    out: Option<&Path>,
    opts: &Opts,
) -> Result<()> {
    let s = opts.resolve()?;
    let seeds: Vec<u64> = (0..seeds).map(|k| s.seed + k).collect();
    let rows = match scene_dir {
        Some(dir) => {
            let scene = load_scene(dir)?;
            let hyp = hypotheses(&s, &scene)?.swap_remove(0);
            let cfg = BenchConfig {
                reconstruct: s.reconstruct(hyp.len()),
                fscore_threshold: s.fscore_threshold,
                outlier_cap: s.outlier_cap,
                ..BenchConfig::default()
            };
            let sources: Vec<Vec<usize>> = (0..scene.len()).map(|i| scene.sources(i)).collect();
            let views =
                Views { images: &scene.images, cams: &scene.cams, gt_depths: gt_depths(&scene)?, sources: &sources };
            let mut rows = Vec::new();
            for &seed in &seeds {
                rows.extend(bench_views(&views, (hyp.d_min(), hyp.d_max()), seed, &cfg)?);
            }
            rows
        }
        None => {
            let spec = scene_args.spec();
            let cfg = BenchConfig {
                reconstruct: s.reconstruct(s.planes.unwrap_or(32)),
                fscore_threshold: s.fscore_threshold,
                outlier_cap: s.outlier_cap,
                ..BenchConfig::default()
            };
            bench_losses(&spec, &seeds, &cfg)?
        }
    };
    write_rows(&rows, out)?;
    if let Some(p) = out {
        write_manifest(&p.with_extension("manifest.json"), "bench-losses", s.seed, &(&s, scene_args.spec(), &seeds))?;
    }
    Ok(())
}

fn parse_size(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<usize> =
        s.split('x').map(str::parse).collect::<std::result::Result<_, _>>().context("size must look like 8x8x16")?;
    match parts.as_slice() {
        &[h, w, n] if h > 0 && w > 0 && n >= 2 => Ok((h, w, n)),
        _ => bail!("size must be HxWxN with N >= 2"),
    }
}

fn cmd_gradcheck(ps: &[f64], size: &str, seed: u64, tolerance: f64) -> Result<bool> {
    let shape = parse_size(size)?;
    let mut ok = true;
    println!("loss,p,max_relative_error,checked,skipped_pixels");
    for &p in ps {
        for kind in [LossKind::Regression, LossKind::Classification, LossKind::Wasserstein, LossKind::Adaptive] {
            let r = check_gradients(kind, p, shape, seed)?;
            println!("{},{},{:e},{},{}", kind.name(), p, r.max_relative_error, r.checked, r.skipped_pixels);
            ok &= r.max_relative_error <= tolerance;
        }
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    }
    match &cli.command {
        Command::Scenegen { scene, planes, seed, out } => cmd_scenegen(scene, *planes, *seed, out)?,
        Command::Sweep { scene, out, view, opts } => cmd_sweep(scene, out, *view, opts)?,
        Command::Fit { scene, out, opts } => cmd_fit(scene, out, opts)?,
        Command::Infer { scene, run, readout, opts } => cmd_infer(scene, run, *readout, opts)?,
        Command::Filter { scene, run, opts } => {
            let s = run_settings(run, opts)?;
            let scene = load_scene(scene)?;
            let kept: usize = filter_run(&scene, run, &s)?.iter().map(DepthMap::valid_count).sum();
            println!("{kept} pixels kept");
        }
        Command::Fuse { scene, run, binary, opts } => {
            let s = run_settings(run, opts)?;
            let scene = load_scene(scene)?;
            let filtered = read_filtered(&scene, run)?;
            let cloud = fuse_run(&scene, run, &s, &filtered, *binary)?;
            println!("{} points", cloud.len());
        }
        Command::Eval { scene, run, opts } => cmd_eval(scene, run, opts)?,
        Command::BenchLosses { scene, seeds, scene_args, out, opts } => {
            cmd_bench(scene.as_deref(), *seeds, scene_args, out.as_deref(), opts)?
        }
        Command::Gradcheck { p, size, seed, tolerance } => {
            if !cmd_gradcheck(p, size, *seed, *tolerance)? {
                eprintln!("gradient check failed: error above {tolerance:e}");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
