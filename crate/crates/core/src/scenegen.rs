//! Deterministic synthetic scenes rendered by analytic ray casting.
//!
//! The reference camera (view 0) sits at the world origin looking down +z,
//! so its ground-truth depth equals world z. The remaining views lie on a
//! ring of `ring_radius` around it in the z = 0 plane, all aimed at
//! `(0, 0, look_at_depth)`, with a seeded rotation of the ring.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, DepthHypothesisSet, SamplingMode};
use crate::inference::DepthMap;
use crate::volume::ImageGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    /// A single plane, fronto-parallel unless tilted.
    Plane,
    /// A slanted plane with a raised band, giving two depth discontinuities.
    Steps,
    /// A sphere floating in front of a slanted backdrop.
    SphereOnPlane,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane" => Ok(Self::Plane),
            "steps" => Ok(Self::Steps),
            "sphere-on-plane" => Ok(Self::SphereOnPlane),
            other => Err(Error::InvalidSpec(format!("unknown scene kind '{other}'"))),
        }
    }
}

/// Band-limited texture: a sum of plane waves in world space squashed into
/// (0, 1). Wavelengths are given in pixels at the look-at depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    pub waves: usize,
    pub min_wavelength_px: f64,
    pub max_wavelength_px: f64,
    pub contrast: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self { waves: 16, min_wavelength_px: 5.0, max_wavelength_px: 20.0, contrast: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub texture: TextureSpec,
    pub n_views: usize,
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels; the principal point is the image center.
    pub focal: f64,
    pub ring_radius: f64,
    pub look_at_depth: f64,
    pub depth_range: (f64, f64),
    /// Slope dz/dx of the plane scene; 0 makes it fronto-parallel.
    pub plane_tilt: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self::new(SceneKind::Steps)
    }
}

impl SceneSpec {
    pub fn new(kind: SceneKind) -> Self {
        Self {
            kind,
            texture: TextureSpec::default(),
            n_views: 5,
            width: 64,
            height: 48,
            focal: 60.0,
            ring_radius: 0.6,
            look_at_depth: 5.0,
            depth_range: (3.5, 7.0),
            plane_tilt: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.n_views < 2 {
            return bad("a scene needs at least two views");
        }
        if self.width < 2 || self.height < 2 {
            return bad("image must be at least 2x2");
        }
        if !(self.focal > 0.0 && self.ring_radius > 0.0 && self.look_at_depth > 0.0) {
            return bad("focal length, ring radius and look-at depth must be positive");
        }
        let (lo, hi) = self.depth_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return bad("depth range must satisfy 0 < d_min < d_max");
        }
        let t = &self.texture;
        if t.waves == 0
            || !(t.min_wavelength_px > 0.0 && t.max_wavelength_px >= t.min_wavelength_px && t.contrast > 0.0)
        {
            return bad("texture needs at least one wave and positive wavelengths");
        }
        if !self.plane_tilt.is_finite() {
            return bad("plane tilt must be finite");
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        Matrix3::new(self.focal, 0.0, cx, 0.0, self.focal, cy, 0.0, 0.0, 1.0)
    }

    pub fn cameras(&self) -> Result<Vec<CameraModel>> {
        self.ring_cameras(0.0)
    }

    /// Cameras with the source ring rotated by `phase` radians.
    pub fn ring_cameras(&self, phase: f64) -> Result<Vec<CameraModel>> {
        let k = self.intrinsics();
        let target = Vector3::new(0.0, 0.0, self.look_at_depth);
        let up = Vector3::new(0.0, -1.0, 0.0);
        let ring = self.n_views - 1;
        (0..self.n_views)
            .map(|i| {
                let center = if i == 0 {
                    Vector3::zeros()
                } else {
                    let a = phase + std::f64::consts::TAU * (i - 1) as f64 / ring as f64;
                    Vector3::new(self.ring_radius * a.cos(), self.ring_radius * a.sin(), 0.0)
                };
                CameraModel::look_at(k, center, target, up, self.width, self.height)
            })
            .collect()
    }

    pub fn hypotheses(&self, n: usize, mode: SamplingMode) -> Result<DepthHypothesisSet> {
        DepthHypothesisSet::sample(self.depth_range.0, self.depth_range.1, n, mode)
    }

    /// World-space half width of the reference view at the look-at depth.
    fn half_width(&self) -> f64 {
        self.look_at_depth * (self.width as f64 / 2.0) / self.focal
    }
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    k: Vector3<f64>,
    phase: f64,
}

#[derive(Debug, Clone)]
struct Texture {
    waves: Vec<Wave>,
    amplitude: f64,
    contrast: f64,
}

impl Texture {
    fn new(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Self {
        let t = &spec.texture;
        let pixel = spec.look_at_depth / spec.focal;
        let waves = (0..t.waves)
            .map(|_| {
                let dir = loop {
                    let v = Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    let n = v.norm();
                    if n > 1e-3 && n <= 1.0 {
                        break v / n;
                    }
                };
                let wavelength = pixel * rng.random_range(t.min_wavelength_px..=t.max_wavelength_px);
                Wave {
                    k: dir * (std::f64::consts::TAU / wavelength),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect();
        Self { waves, amplitude: (2.0 / t.waves as f64).sqrt(), contrast: t.contrast }
    }

    fn intensity(&self, p: &Vector3<f64>) -> f64 {
        let s: f64 = self.waves.iter().map(|w| (w.k.dot(p) + w.phase).sin()).sum();
        0.5 + 0.5 * (self.contrast * self.amplitude * s / 2.0).tanh()
    }
}

/// Nearest positive ray parameter of the scene surface.
fn intersect(spec: &SceneSpec, o: &Vector3<f64>, r: &Vector3<f64>) -> Option<f64> {
    let d = spec.look_at_depth;
    // plane z = z0 + sx x + sy y
    let plane = |z0: f64, sx: f64, sy: f64| {
        let denom = r.z - sx * r.x - sy * r.y;
        let t = (z0 + sx * o.x + sy * o.y - o.z) / denom;
        (denom.abs() > 1e-12 && t > 0.0).then_some(t)
    };
    let mut best: Option<f64> = None;
    let mut offer = |t: f64| {
        if best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    match spec.kind {
        SceneKind::Plane => {
            if let Some(t) = plane(d, spec.plane_tilt, 0.0) {
                offer(t);
            }
        }
        SceneKind::Steps => {
            let (sx, sy) = (0.2, 0.1);
            let a = spec.half_width() / 3.0;
            let rise = 0.12 * d;
            let inside = |x: f64| (-a..a).contains(&x);
            if let Some(t) = plane(d, sx, sy) {
                if !inside(o.x + t * r.x) {
                    offer(t);
                }
            }
            if let Some(t) = plane(d - rise, sx, sy) {
                if inside(o.x + t * r.x) {
                    offer(t);
                }
            }
            if r.x.abs() > 1e-12 {
                for wall in [-a, a] {
                    let t = (wall - o.x) / r.x;
                    if t <= 0.0 {
                        continue;
                    }
                    let p = o + r * t;
                    let base = d + sx * p.x + sy * p.y;
                    if p.z >= base - rise && p.z <= base {
                        offer(t);
                    }
                }
            }
        }
        SceneKind::SphereOnPlane => {
            if let Some(t) = plane(1.1 * d, 0.0, 0.1) {
                offer(t);
            }
            let c = Vector3::new(0.0, 0.0, 0.9 * d);
            let radius = 0.3 * spec.half_width();
            let oc = o - c;
            let b = oc.dot(r);
            let disc = b * b - r.norm_squared() * (oc.norm_squared() - radius * radius);
            if disc >= 0.0 {
                let t = (-b - disc.sqrt()) / r.norm_squared();
                if t > 0.0 {
                    offer(t);
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub seed: u64,
    pub images: Vec<ImageGrid>,
    pub cams: Vec<CameraModel>,
    pub gt_depths: Vec<DepthMap>,
}

fn render(spec: &SceneSpec, cam: &CameraModel, texture: &Texture) -> Result<(ImageGrid, DepthMap)> {
    let (w, h) = (spec.width, spec.height);
    let origin = cam.center();
    let samples: Vec<Option<(f64, f64)>> = (0..w * h)
        .into_par_iter()
        .map(|px| {
            let pixel = nalgebra::Vector2::new((px % w) as f64, (px / w) as f64);
            let dir = cam.pixel_direction_world(&pixel);
            let t = intersect(spec, &origin, &dir)?;
            let hit = origin + dir * t;
            Some((texture.intensity(&hit), cam.world_to_camera(&hit).z))
        })
        .collect();
    let mut intensity = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    let (lo, hi) = spec.depth_range;
    for (px, s) in samples.into_iter().enumerate() {
        let (i, z) = s.ok_or_else(|| Error::InvalidSpec(format!("pixel {} of a view misses the scene", px)))?;
        if !(lo..=hi).contains(&z) {
            return Err(Error::InvalidSpec(format!("scene depth {z:.4} outside depth range [{lo}, {hi}]")));
        }
        intensity.push(i);
        depth.push(z);
    }
    Ok((ImageGrid::from_vec(w, h, 1, intensity)?, DepthMap::from_depths(w, h, depth)?))
}

/// Render every view of `spec`. The same seed always yields bit-identical
/// scenes; the seed drives the texture and the rotation of the camera ring.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = Texture::new(spec, &mut rng);
    let phase = rng.random_range(0.0..std::f64::consts::TAU / (spec.n_views - 1) as f64);
    let cams = spec.ring_cameras(phase)?;
    let mut images = Vec::with_capacity(cams.len());
    let mut gt_depths = Vec::with_capacity(cams.len());
    for cam in &cams {
        let (img, depth) = render(spec, cam, &texture)?;
        images.push(img);
        gt_depths.push(depth);
    }
    Ok(Scene { spec: *spec, seed, images, cams, gt_depths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{backproject_pixel, project_point};
    use nalgebra::Vector2;

    #[test]
    fn fronto_parallel_plane_has_constant_reference_depth() {
        let spec = SceneSpec { look_at_depth: 4.7, ..SceneSpec::new(SceneKind::Plane) };
        let scene = generate_scene(&spec, 1).unwrap();
        assert!(scene.gt_depths[0].depths().iter().all(|&d| (d - 4.7).abs() < 1e-12));
        assert_eq!(scene.gt_depths[0].valid_count(), 64 * 48);
    }

    #[test]
    fn seeds_control_texture() {
        let spec = SceneSpec::default();
        let a = generate_scene(&spec, 7).unwrap();
        let b = generate_scene(&spec, 7).unwrap();
        let c = generate_scene(&spec, 8).unwrap();
        for i in 0..spec.n_views {
            assert_eq!(a.images[i].data(), b.images[i].data());
            assert_eq!(a.gt_depths[i], b.gt_depths[i]);
        }
        assert_ne!(a.images[0].data(), c.images[0].data());
        assert_eq!(a.gt_depths[0], c.gt_depths[0]);
    }

    #[test]
    fn depth_range_must_contain_geometry() {
        let spec = SceneSpec { depth_range: (5.5, 9.0), ..SceneSpec::default() };
        assert!(matches!(generate_scene(&spec, 0), Err(Error::InvalidSpec(_))));
        let spec = SceneSpec { n_views: 1, ..SceneSpec::default() };
        assert!(matches!(generate_scene(&spec, 0), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn steps_scene_has_discontinuities() {
        let scene = generate_scene(&SceneSpec::default(), 0).unwrap();
        let d = &scene.gt_depths[0];
        let row = 24;
        let jumps = (1..64).filter(|&x| (d.get(x, row).unwrap() - d.get(x - 1, row).unwrap()).abs() > 0.3).count();
        assert_eq!(jumps, 2);
    }

    fn photo_consistency(kind: SceneKind) -> (f64, usize) {
        let scene = generate_scene(&SceneSpec::new(kind), 3).unwrap();
        let reference = &scene.images[0];
        let (lo, hi) = reference.data().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for i in 1..scene.cams.len() {
            let (mut err, mut n) = (0.0, 0usize);
            for y in 0..48 {
                for x in 0..64 {
                    let d = scene.gt_depths[0].get(x, y).unwrap();
                    let world = backproject_pixel(&scene.cams[0], &Vector2::new(x as f64, y as f64), d).unwrap();
                    let (q, z) = project_point(&scene.cams[i], &world).unwrap();
                    let Some(ds) = scene.gt_depths[i].sample(q.x, q.y) else { continue };
                    if (ds - z).abs() > 1e-3 * z {
                        continue; // occluded in the source view
                    }
                    let mut v = [0.0];
                    if scene.images[i].sample_bilinear(q.x, q.y, &mut v) {
                        err += (v[0] - reference.get(x, y, 0)).abs();
                        n += 1;
                    }
                }
            }
            worst = worst.max(err / n as f64 / (hi - lo));
            count += n;
        }
        (worst, count)
    }

    #[test]
    fn gt_warp_reproduces_reference() {
        for kind in [SceneKind::Plane, SceneKind::Steps, SceneKind::SphereOnPlane] {
            let (err, n) = photo_consistency(kind);
            assert!(n > 1000);
            assert!(err < 0.02, "{kind:?}: relative error {err}");
        }
    }

    #[test]
    fn gt_depths_are_multiview_consistent() {
        let scene = generate_scene(&SceneSpec::new(SceneKind::SphereOnPlane), 0).unwrap();
        let (lo, hi) = scene.spec.depth_range;
        for i in 0..scene.cams.len() {
            assert!(scene.gt_depths[i].depths().iter().all(|d| (lo..=hi).contains(d)));
            for j in 0..scene.cams.len() {
                if i == j {
                    continue;
                }
                for y in 0..48 {
                    for x in 0..64 {
                        let d = scene.gt_depths[i].get(x, y).unwrap();
                        let p = Vector2::new(x as f64, y as f64);
                        let world = backproject_pixel(&scene.cams[i], &p, d).unwrap();
                        let (q, z) = project_point(&scene.cams[j], &world).unwrap();
                        if !scene.cams[j].contains(&q) {
                            continue;
                        }
                        // view j's own ray through q, cast against the analytic surface
                        let cj = &scene.cams[j];
                        let t = intersect(&scene.spec, &cj.center(), &cj.pixel_direction_world(&q)).unwrap();
                        let zj = cj.world_to_camera(&(cj.center() + cj.pixel_direction_world(&q) * t)).z;
                        if (zj - z).abs() > 1e-6 * z {
                            continue; // occluded
                        }
                        let back = backproject_pixel(cj, &q, zj).unwrap();
                        let (p2, _) = project_point(&scene.cams[i], &back).unwrap();
                        assert!((p2 - p).norm() < 1e-6);
                    }
                }
            }
        }
    }
}
