//! File formats: MVSNet-style camera text, PFM depth maps, PGM images,
//! PLY point clouds, view-selection lists, raw volumes, and the scene
//! directory layout that bundles them.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{CameraModel, DepthHypothesisSet, SamplingMode};
use crate::inference::DepthMap;
use crate::postproc::PointCloud;
use crate::scenegen::Scene;
use crate::volume::{ImageGrid, Volume3};
use crate::{Error, Result};

/// The trailing depth line of a camera file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthLine {
    /// `d_min d_interval`, optionally followed by `N d_max`.
    Interval { d_min: f64, interval: f64, planes: Option<usize> },
    /// `d_min d_max`; the plane count comes from the caller.
    Range { d_min: f64, d_max: f64 },
}

impl DepthLine {
    pub fn from_hypotheses(hyp: &DepthHypothesisSet) -> Self {
        let n = hyp.len();
        DepthLine::Interval {
            d_min: hyp.d_min(),
            interval: (hyp.d_max() - hyp.d_min()) / (n - 1) as f64,
            planes: Some(n),
        }
    }

    /// Resolve to `(d_min, d_max, n)`. An explicit `planes` argument wins
    /// over a count stored in the file.
    pub fn resolve(&self, planes: Option<usize>) -> Result<(f64, f64, usize)> {
        match *self {
            DepthLine::Interval { d_min, interval, planes: stored } => {
                let n = planes
                    .or(stored)
                    .ok_or_else(|| Error::InvalidArgument("depth line gives no plane count".into()))?;
                if n < 2 {
                    return Err(Error::InvalidArgument("need at least two planes".into()));
                }
                Ok((d_min, d_min + interval * (n - 1) as f64, n))
            }
            DepthLine::Range { d_min, d_max } => {
                let n = planes
                    .ok_or_else(|| Error::InvalidArgument("a d_min d_max depth line needs a plane count".into()))?;
                Ok((d_min, d_max, n))
            }
        }
    }

    pub fn hypotheses(&self, planes: Option<usize>, mode: SamplingMode) -> Result<DepthHypothesisSet> {
        let (lo, hi, n) = self.resolve(planes)?;
        DepthHypothesisSet::sample(lo, hi, n, mode)
    }
}

struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty()).collect();
        Self { lines, pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(1, |l| l.0)
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let l = self.lines.get(self.pos).copied().ok_or_else(|| Error::Parse {
            line: self.last_line(),
            msg: format!("unexpected end of file, expected {what}"),
        })?;
        self.pos += 1;
        Ok(l)
    }

    fn expect_keyword(&mut self, keyword: &str) -> Result<()> {
        match self.lines.get(self.pos) {
            Some(&(_, l)) if l == keyword => {
                self.pos += 1;
                Ok(())
            }
            Some(&(n, l)) => Err(Error::Parse { line: n, msg: format!("missing {keyword} block (found '{l}')") }),
            None => Err(Error::Parse { line: self.last_line(), msg: format!("missing {keyword} block") }),
        }
    }

    fn numbers(&mut self, count: usize, what: &str) -> Result<(usize, Vec<f64>)> {
        let (n, l) = self.next(what)?;
        let values = parse_numbers(l, n)?;
        if values.len() != count {
            return Err(Error::Parse {
                line: n,
                msg: format!("{what}: expected {count} numbers, found {}", values.len()),
            });
        }
        Ok((n, values))
    }
}

fn parse_numbers(line: &str, n: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { line: n, msg: format!("invalid number '{t}'") }))
        .collect()
}

/// Nearest rotation to a nearly orthonormal matrix, as stored with
/// limited precision in calibration files.
fn nearest_rotation(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let r = svd.u? * svd.v_t?;
    ((r - m).abs().max() < 1e-3 && r.determinant() > 0.0).then_some(r)
}

/// Parse camera text. Image dimensions are not stored in the file and
/// must come from the matching image.
pub fn parse_camera(text: &str, width: usize, height: usize) -> Result<(CameraModel, DepthLine)> {
    let mut lines = Lines::new(text);
    let ext_line = lines.lines.first().map_or(1, |l| l.0);
    lines.expect_keyword("extrinsic")?;
    let mut ext = [[0.0; 4]; 4];
    let mut last_row_line = 0;
    for row in ext.iter_mut() {
        let (n, v) = lines.numbers(4, "extrinsic row")?;
        row.copy_from_slice(&v);
        last_row_line = n;
    }
    if ext[3] != [0.0, 0.0, 0.0, 1.0] {
        return Err(Error::Parse { line: last_row_line, msg: "extrinsic last row must be 0 0 0 1".into() });
    }
    lines.expect_keyword("intrinsic")?;
    let mut k = Matrix3::zeros();
    for r in 0..3 {
        let (_, v) = lines.numbers(3, "intrinsic row")?;
        for c in 0..3 {
            k[(r, c)] = v[c];
        }
    }
    let (n, depth) = lines.next("depth line")?;
    let v = parse_numbers(depth, n)?;
    let depth_line = match v.as_slice() {
        [_, second] if *second <= 0.0 => {
            return Err(Error::Parse { line: n, msg: "depth line second value must be positive".into() });
        }
        // a second value beyond d_min is read as d_max, otherwise as the interval
        [d_min, second] if *second > *d_min => DepthLine::Range { d_min: *d_min, d_max: *second },
        [d_min, interval] => DepthLine::Interval { d_min: *d_min, interval: *interval, planes: None },
        [d_min, interval, planes, ..] if *planes >= 2.0 && planes.fract() == 0.0 => {
            DepthLine::Interval { d_min: *d_min, interval: *interval, planes: Some(*planes as usize) }
        }
        _ => return Err(Error::Parse { line: n, msg: "malformed depth line".into() }),
    };
    let mut rot = Matrix3::zeros();
    for r in 0..3 {
        for c in 0..3 {
            rot[(r, c)] = ext[r][c];
        }
    }
    let t = Vector3::new(ext[0][3], ext[1][3], ext[2][3]);
    let rot = if (rot * rot.transpose() - Matrix3::identity()).abs().max() > 1e-9 {
        nearest_rotation(&rot)
            .ok_or_else(|| Error::Parse { line: ext_line, msg: "extrinsic rotation is not orthonormal".into() })?
    } else {
        rot
    };
    let cam =
        CameraModel::new(k, rot, t, width, height).map_err(|e| Error::Parse { line: ext_line, msg: e.to_string() })?;
    Ok((cam, depth_line))
}

pub fn format_camera(cam: &CameraModel, depth: &DepthLine) -> String {
    let mut s = String::from("extrinsic\n");
    let (r, t, k) = (cam.rotation(), cam.translation(), cam.intrinsics());
    for i in 0..3 {
        let _ = writeln!(s, "{} {} {} {}", r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]);
    }
    s.push_str("0 0 0 1\n\nintrinsic\n");
    for i in 0..3 {
        let _ = writeln!(s, "{} {} {}", k[(i, 0)], k[(i, 1)], k[(i, 2)]);
    }
    s.push('\n');
    let _ = match *depth {
        DepthLine::Interval { d_min, interval, planes: Some(n) } => {
            writeln!(s, "{} {} {} {}", d_min, interval, n, d_min + interval * (n - 1) as f64)
        }
        DepthLine::Interval { d_min, interval, planes: None } => writeln!(s, "{d_min} {interval}"),
        DepthLine::Range { d_min, d_max } => writeln!(s, "{d_min} {d_max}"),
    };
    s
}

pub fn read_camera(path: &Path, width: usize, height: usize) -> Result<(CameraModel, DepthLine)> {
    parse_camera(&fs::read_to_string(path)?, width, height)
}

pub fn write_camera(path: &Path, cam: &CameraModel, depth: &DepthLine) -> Result<()> {
    fs::write(path, format_camera(cam, depth))?;
    Ok(())
}

/// Encode a depth map as little-endian grayscale PFM. Invalid pixels
/// are stored as 0.
pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = (depth.width(), depth.height());
    let mut out = format!("Pf\n{w} {h}\n-1\n").into_bytes();
    out.reserve(w * h * 4);
    // rows run bottom to top
    for y in (0..h).rev() {
        for x in 0..w {
            let v = depth.get(x, y).unwrap_or(0.0) as f32;
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PFM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| Error::Format("non-ASCII PFM header".into()))?);
    }
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    match fields[0] {
        "Pf" => {}
        "PF" => return Err(Error::Format("color PFM is not a depth map".into())),
        m => return Err(Error::Format(format!("bad PFM magic '{m}'"))),
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PFM dimension '{s}'")));
    let (w, h) = (dim(fields[1])?, dim(fields[2])?);
    let scale: f64 = fields[3].parse().map_err(|_| Error::Format(format!("bad PFM scale '{}'", fields[3])))?;
    if scale > 0.0 {
        return Err(Error::UnsupportedEndianness);
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format("PFM scale must be nonzero".into()));
    }
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != w * h * 4 {
        return Err(Error::Format(format!("PFM payload has {} bytes, expected {}", payload.len(), w * h * 4)));
    }
    let mut depth = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
        let (x, y) = (i % w, h - 1 - i / w);
        if v != 0.0 && v.is_finite() {
            depth[y * w + x] = v;
            valid[y * w + x] = true;
        }
    }
    DepthMap::new(w, h, depth, valid)
}

pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    fs::write(path, encode_pfm(depth))?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    decode_pfm(&fs::read(path)?)
}

/// Write a single-channel image in [0, 1] as a 16-bit binary PGM.
pub fn encode_pgm(img: &ImageGrid) -> Result<Vec<u8>> {
    if img.channels() != 1 {
        return Err(Error::InvalidArgument("PGM output needs a single-channel image".into()));
    }
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    out.reserve(img.data().len() * 2);
    for &v in img.data() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, img: &ImageGrid) -> Result<()> {
    fs::write(path, encode_pgm(img)?)?;
    Ok(())
}

/// Read any grayscale or color image the `image` crate understands,
/// converted to a single channel in [0, 1].
pub fn read_pgm(path: &Path) -> Result<ImageGrid> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect();
    ImageGrid::from_vec(w as usize, h as usize, 1, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

pub fn encode_ply(cloud: &PointCloud, format: PlyFormat) -> Result<Vec<u8>> {
    if let Some(c) = &cloud.colors {
        if c.len() != cloud.points.len() {
            return Err(Error::ShapeMismatch("color count differs from point count".into()));
        }
    }
    if cloud.points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::InvalidArgument("point cloud contains non-finite coordinates".into()));
    }
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!("ply\nformat {fmt} 1.0\nelement vertex {}\n", cloud.len());
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    for (i, p) in cloud.points.iter().enumerate() {
        let xyz = [p.x as f32, p.y as f32, p.z as f32];
        let rgb = cloud.colors.as_ref().map(|c| c[i]);
        match format {
            PlyFormat::Ascii => {
                let mut line = format!("{} {} {}", xyz[0], xyz[1], xyz[2]);
                if let Some([r, g, b]) = rgb {
                    let _ = write!(line, " {r} {g} {b}");
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
            PlyFormat::BinaryLittleEndian => {
                for v in xyz {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(c) = rgb {
                    out.extend_from_slice(&c);
                }
            }
        }
    }
    Ok(out)
}

pub fn write_ply(cloud: &PointCloud, path: &Path, format: PlyFormat) -> Result<()> {
    let bytes = encode_ply(cloud, format)?;
    let mut f = BufWriter::new(fs::File::create(path)?);
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

/// Read back the vertex positions of a PLY file in the layout
/// `encode_ply` produces.
pub fn decode_ply(bytes: &[u8]) -> Result<PointCloud> {
    let end = b"end_header\n";
    let split = bytes
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| Error::Format("PLY header not terminated".into()))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::Format("non-ASCII PLY header".into()))?;
    let body = &bytes[split + end.len()..];
    let mut count = None;
    let mut binary = false;
    let mut props = 0;
    for line in header.lines() {
        let t: Vec<_> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", "ascii", _] => binary = false,
            ["format", "binary_little_endian", _] => binary = true,
            ["format", other, _] => return Err(Error::Format(format!("unsupported PLY format {other}"))),
            ["element", "vertex", n] => count = n.parse::<usize>().ok(),
            ["property", ..] => props += 1,
            _ => {}
        }
    }
    let n = count.ok_or_else(|| Error::Format("PLY header has no vertex count".into()))?;
    let has_color = props == 6;
    let mut points = Vec::with_capacity(n);
    let mut colors = Vec::new();
    if binary {
        let stride = 12 + if has_color { 3 } else { 0 };
        if body.len() != n * stride {
            return Err(Error::Format("PLY payload size mismatch".into()));
        }
        for rec in body.chunks_exact(stride) {
            let f = |o: usize| f32::from_le_bytes([rec[o], rec[o + 1], rec[o + 2], rec[o + 3]]) as f64;
            points.push(Vector3::new(f(0), f(4), f(8)));
            if has_color {
                colors.push([rec[12], rec[13], rec[14]]);
            }
        }
    } else {
        let text = std::str::from_utf8(body).map_err(|_| Error::Format("non-ASCII PLY body".into()))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let v = parse_numbers(line, 0).map_err(|_| Error::Format(format!("bad PLY vertex '{line}'")))?;
            if v.len() < 3 {
                return Err(Error::Format(format!("bad PLY vertex '{line}'")));
            }
            points.push(Vector3::new(v[0], v[1], v[2]));
            if has_color && v.len() >= 6 {
                colors.push([v[3] as u8, v[4] as u8, v[5] as u8]);
            }
        }
        if points.len() != n {
            return Err(Error::Format("PLY vertex count mismatch".into()));
        }
    }
    Ok(PointCloud { points, colors: has_color.then_some(colors) })
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    decode_ply(&fs::read(path)?)
}

/// One entry of a view-selection list.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub reference: usize,
    pub sources: Vec<(usize, f64)>,
}

pub fn format_pairs(pairs: &[ViewPair]) -> String {
    let mut s = format!("{}\n", pairs.len());
    for p in pairs {
        let _ = writeln!(s, "{}", p.reference);
        let _ = write!(s, "{}", p.sources.len());
        for (id, score) in &p.sources {
            let _ = write!(s, " {id} {score}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_pairs(text: &str) -> Result<Vec<ViewPair>> {
    let mut lines = Lines::new(text);
    let (n0, head) = lines.next("view count")?;
    let count: usize =
        head.parse().map_err(|_| Error::Parse { line: n0, msg: format!("invalid view count '{head}'") })?;
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, r) = lines.next("reference index")?;
        let reference = r.parse().map_err(|_| Error::Parse { line: n, msg: format!("invalid view index '{r}'") })?;
        let (n, l) = lines.next("source list")?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        let bad = || Error::Parse { line: n, msg: "malformed source list".into() };
        let k: usize = tok.first().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
        if tok.len() != 1 + 2 * k {
            return Err(bad());
        }
        let sources = tok[1..]
            .chunks_exact(2)
            .map(|c| Ok((c[0].parse().map_err(|_| bad())?, c[1].parse().map_err(|_| bad())?)))
            .collect::<Result<_>>()?;
        pairs.push(ViewPair { reference, sources });
    }
    Ok(pairs)
}

const VOLUME_MAGIC: &[u8; 8] = b"MVSVOL1\n";

/// Raw volume: magic, then `height width depth` as u64 and the data as
/// f64, all little-endian.
pub fn encode_volume(v: &Volume3) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + v.data().len() * 8);
    out.extend_from_slice(VOLUME_MAGIC);
    for d in [v.height(), v.width(), v.depth()] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for x in v.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume3> {
    if bytes.len() < 32 || &bytes[..8] != VOLUME_MAGIC {
        return Err(Error::Format("not a volume file".into()));
    }
    let dim = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
    let (h, w, n) = (dim(0), dim(1), dim(2));
    let expected = h.checked_mul(w).and_then(|x| x.checked_mul(n)).and_then(|x| x.checked_mul(8));
    if expected != Some(bytes.len() - 32) {
        return Err(Error::Format("volume payload size mismatch".into()));
    }
    let data = bytes[32..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Volume3::from_vec(h, w, n, data)
}

pub fn write_volume(path: &Path, v: &Volume3) -> Result<()> {
    fs::write(path, encode_volume(v))?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<Volume3> {
    decode_volume(&fs::read(path)?)
}

/// Contents of a scene directory.
#[derive(Debug, Clone)]
pub struct SceneData {
    pub images: Vec<ImageGrid>,
    pub cams: Vec<CameraModel>,
    pub depth_lines: Vec<DepthLine>,
    pub pairs: Vec<ViewPair>,
    pub gt_depths: Option<Vec<DepthMap>>,
}

impl SceneData {
    pub fn len(&self) -> usize {
        self.cams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cams.is_empty()
    }

    /// Source views of `reference`, from the pair list when it has an
    /// entry, otherwise every other view.
    pub fn sources(&self, reference: usize) -> Vec<usize> {
        self.pairs
            .iter()
            .find(|p| p.reference == reference)
            .map(|p| p.sources.iter().map(|s| s.0).collect())
            .unwrap_or_else(|| (0..self.len()).filter(|&j| j != reference).collect())
    }
}

pub fn image_path(dir: &Path, i: usize) -> PathBuf {
    dir.join("images").join(format!("{i:08}.pgm"))
}

pub fn camera_path(dir: &Path, i: usize) -> PathBuf {
    dir.join("cams").join(format!("{i:08}_cam.txt"))
}

pub fn gt_depth_path(dir: &Path, i: usize) -> PathBuf {
    dir.join("gt_depths").join(format!("{i:08}.pfm"))
}

/// Every other view, ordered by camera-center distance.
pub fn ring_pairs(cams: &[CameraModel]) -> Vec<ViewPair> {
    (0..cams.len())
        .map(|i| {
            let mut sources: Vec<(usize, f64)> = (0..cams.len())
                .filter(|&j| j != i)
                .map(|j| (j, 1.0 / (1.0 + (cams[i].center() - cams[j].center()).norm())))
                .collect();
            sources.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            ViewPair { reference: i, sources }
        })
        .collect()
}

pub fn write_scene_dir(dir: &Path, scene: &Scene, hyp: &DepthHypothesisSet) -> Result<()> {
    for sub in ["images", "cams", "gt_depths"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let line = DepthLine::from_hypotheses(hyp);
    for (i, cam) in scene.cams.iter().enumerate() {
        write_pgm(&image_path(dir, i), &scene.images[i])?;
        write_camera(&camera_path(dir, i), cam, &line)?;
        write_pfm(&gt_depth_path(dir, i), &scene.gt_depths[i])?;
    }
    fs::write(dir.join("pair.txt"), format_pairs(&ring_pairs(&scene.cams)))?;
    Ok(())
}

fn indices(dir: &Path, suffix: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(suffix) {
            if stem.len() == 8 {
                if let Ok(i) = stem.parse() {
                    out.push(i);
                }
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

pub fn read_scene_dir(dir: &Path) -> Result<SceneData> {
    let image_ids = indices(&dir.join("images"), ".pgm")?;
    let cam_ids = indices(&dir.join("cams"), "_cam.txt")?;
    if image_ids != cam_ids {
        return Err(Error::Format("image and camera index sets differ".into()));
    }
    if image_ids.is_empty() || image_ids.iter().enumerate().any(|(k, &i)| k != i) {
        return Err(Error::Format("view indices must run 0..n without gaps".into()));
    }
    let mut images = Vec::new();
    let mut cams = Vec::new();
    let mut depth_lines = Vec::new();
    for &i in &image_ids {
        let img = read_pgm(&image_path(dir, i))?;
        let (cam, line) = read_camera(&camera_path(dir, i), img.width(), img.height())?;
        images.push(img);
        cams.push(cam);
        depth_lines.push(line);
    }
    let pair_file = dir.join("pair.txt");
    let pairs = if pair_file.exists() { parse_pairs(&fs::read_to_string(pair_file)?)? } else { Vec::new() };
    let n = cams.len();
    for p in &pairs {
        if p.reference >= n || p.sources.iter().any(|s| s.0 >= n || s.0 == p.reference) {
            return Err(Error::Format(format!("pair.txt references a missing view near reference {}", p.reference)));
        }
    }
    let gt_depths = if dir.join("gt_depths").is_dir() {
        let maps = image_ids.iter().map(|&i| read_pfm(&gt_depth_path(dir, i))).collect::<Result<Vec<_>>>()?;
        Some(maps)
    } else {
        None
    };
    Ok(SceneData { images, cams, depth_lines, pairs, gt_depths })
}
