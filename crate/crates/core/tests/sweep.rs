use wassmvs::pipeline::{
    ground_truth_cloud, reconstruct, score_cloud, sweep_view, ReconstructConfig, SweepConfig, Views,
};
use wassmvs::{generate_scene, LossKind, SamplingMode, SceneKind, SceneSpec, ScoreVolume};

const MARGIN: usize = 6;

/// Fraction of interior pixels whose best-scoring plane is within `slack`
/// planes of the plane nearest the true depth.
fn argmax_hit_rate(n: usize, slack: usize) -> f64 {
    let spec = SceneSpec::new(SceneKind::Plane);
    let scene = generate_scene(&spec, 0).unwrap();
    let hyp = spec.hypotheses(n, SamplingMode::Uniform).unwrap();
    let sources: Vec<usize> = (1..scene.cams.len()).collect();
    let scores: ScoreVolume =
        sweep_view(&scene.images, &scene.cams, 0, &sources, &hyp, &SweepConfig::default()).unwrap();
    let gt = &scene.gt_depths[0];
    let (mut hit, mut total) = (0, 0);
    for y in MARGIN..spec.height - MARGIN {
        for x in MARGIN..spec.width - MARGIN {
            let row = scores.row(y, x);
            let best = (0..n).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            total += 1;
            if best.abs_diff(hyp.nearest_index(gt.get(x, y).unwrap())) <= slack {
                hit += 1;
            }
        }
    }
    hit as f64 / total as f64
}

#[test]
fn plane_sweep_argmax_finds_fronto_parallel_plane() {
    for n in [8, 12] {
        let rate = argmax_hit_rate(n, 0);
        assert!(rate >= 0.99, "{n} planes: {rate}");
    }
}

#[test]
fn dense_sweep_lands_within_one_plane() {
    let rate = argmax_hit_rate(64, 1);
    assert!(rate >= 0.99, "{rate}");
}

#[test]
fn adaptive_reconstruction_of_a_plane() {
    let spec = SceneSpec { width: 48, height: 36, focal: 45.0, ..SceneSpec::new(SceneKind::Plane) };
    let scene = generate_scene(&spec, 2).unwrap();
    let sources: Vec<Vec<usize>> =
        (0..scene.cams.len()).map(|i| (0..scene.cams.len()).filter(|&j| j != i).collect()).collect();
    let views = Views { images: &scene.images, cams: &scene.cams, gt_depths: &scene.gt_depths, sources: &sources };
    let mut cfg = ReconstructConfig { planes: 32, ..ReconstructConfig::default() };
    cfg.fit.loss_kind = LossKind::Adaptive;
    cfg.fit.steps = 300;
    cfg.fit.learning_rate = 0.05;
    cfg.fit.decay_every = 50;
    let rec = reconstruct(&views, &cfg, spec.depth_range).unwrap();
    let gt = ground_truth_cloud(&scene.gt_depths, &scene.cams, &cfg.fusion()).unwrap();
    let m = score_cloud(&rec.cloud, &gt, 0.02, None).unwrap();
    assert!(rec.cloud.len() > 1000, "{} points", rec.cloud.len());
    assert!(m.overall < 0.03, "{m:?}");
    assert!(m.fscore > 0.8, "{m:?}");
}
