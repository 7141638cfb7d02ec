//! Synthetic depth-layered scenes rendered under known camera translation,
//! with matching accelerometer traces and block-level ground truth.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};

use crate::blockmatch::SMALL_BLOCK;
use crate::depthmap::DepthMap;
use crate::error::{Error, Result};
use crate::exec::{for_each_chunk_mut, Execution};
use crate::frame::{read_pgm, Frame};
use crate::geometry::{translational_mv, CameraIntrinsics, PixelDisplacement};
use crate::sensor::{frame_time, SensorSample, SensorTrace, Velocity};

pub const DEFAULT_WIDTH: usize = 512;
pub const DEFAULT_HEIGHT: usize = 256;
pub const DEFAULT_SENSOR_RATE: f64 = 1000.0;
pub const DEFAULT_FRAME_RATE: f64 = 60.0;

/// Textured scene made of fronto-parallel planes.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    width: usize,
    height: usize,
    texture: Vec<u8>,
    depth: Vec<f64>,
    noise: Option<Noise>,
}

/// Additive Gaussian pixel noise applied to every rendered frame of a
/// sequence, independently per frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Noise {
    /// Standard deviation in grey levels.
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub z: f64,
}

impl Scene {
    pub fn new(width: usize, height: usize, texture: Vec<u8>, depth: Vec<f64>) -> Result<Self> {
        if texture.len() != width * height || depth.len() != width * height {
            return Err(Error::InvalidScene(format!(
                "texture/depth sizes {}/{} for a {width}x{height} scene",
                texture.len(),
                depth.len()
            )));
        }
        if let Some(z) = depth.iter().find(|z| !(z.is_finite() && **z > 0.0)) {
            return Err(Error::InvalidScene(format!("non-positive depth {z}")));
        }
        Ok(Self {
            width,
            height,
            texture,
            depth,
            noise: None,
        })
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidScene(format!("noise sigma {sigma} must be non-negative")));
        }
        self.noise = (sigma > 0.0).then_some(Noise { sigma, seed });
        Ok(self)
    }

    pub fn noise(&self) -> Option<Noise> {
        self.noise
    }

    /// Background plane at `background` with rectangles painted over it in order.
    pub fn layered(width: usize, height: usize, texture: Vec<u8>, background: f64, rects: &[DepthRect]) -> Result<Self> {
        let mut depth = vec![background; width * height];
        for r in rects {
            for y in r.y..(r.y + r.h).min(height) {
                for x in r.x..(r.x + r.w).min(width) {
                    depth[y * width + x] = r.z;
                }
            }
        }
        Self::new(width, height, texture, depth)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn texture(&self) -> &[u8] {
        &self.texture
    }
    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    /// Distinct plane depths, nearest first.
    pub fn planes(&self) -> Vec<f64> {
        let mut planes = self.depth.clone();
        planes.sort_by(f64::total_cmp);
        planes.dedup();
        planes
    }
}

/// Multi-octave value noise with amplitude growing with feature size, so the
/// image has both broad structure and fine detail.
pub fn procedural_texture(width: usize, height: usize, seed: u64) -> Vec<u8> {
    noise_texture(width, height, seed, 0.75)
}

#[doc(hidden)]
pub fn noise_texture(width: usize, height: usize, seed: u64, exponent: f64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0f64; width * height];
    let mut period = 256usize;
    while period >= 2 {
        let amp = (period as f64).powf(exponent);
        let gw = width / period + 2;
        let gh = height / period + 2;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
        for y in 0..height {
            let fy = y as f64 / period as f64;
            let (gy, ty) = (fy.floor() as usize, smooth(fy.fract()));
            for x in 0..width {
                let fx = x as f64 / period as f64;
                let (gx, tx) = (fx.floor() as usize, smooth(fx.fract()));
                let l = |i: usize, j: usize| lattice[j * gw + i];
                let top = l(gx, gy) + (l(gx + 1, gy) - l(gx, gy)) * tx;
                let bottom = l(gx, gy + 1) + (l(gx + 1, gy + 1) - l(gx, gy + 1)) * tx;
                acc[y * width + x] += amp * (top + (bottom - top) * ty);
            }
        }
        period /= 2;
    }
    let lo = acc.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = if hi > lo { 224.0 / (hi - lo) } else { 0.0 };
    acc.iter().map(|v| (16.0 + (v - lo) * scale).round() as u8).collect()
}

#[inline]
fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

#[inline]
fn round_shift(intrinsics: CameraIntrinsics, d: f64, z: f64) -> i64 {
    (intrinsics.focal_length_px() * d / z).round() as i64
}

/// A rendered view: the frame and the depth seen at each pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub frame: Frame,
    pub depth: Vec<f64>,
}

/// Renders the scene from a camera translated by `cumulative_d` meters.
///
/// Each output pixel takes the scene sample at its position minus the
/// parallax of that sample's plane, rounded to whole pixels; the nearest
/// plane wins where several land on one pixel. Pixels nothing lands on copy
/// the nearest covered pixel of their row (left on ties), or of the nearest
/// covered row.
pub fn render_view(scene: &Scene, cumulative_d: (f64, f64), intrinsics: CameraIntrinsics, exec: Execution) -> Result<View> {
    let (w, h) = (scene.width, scene.height);
    let planes: Vec<(f64, i64, i64)> = scene
        .planes()
        .into_iter()
        .map(|z| (z, round_shift(intrinsics, cumulative_d.0, z), round_shift(intrinsics, cumulative_d.1, z)))
        .collect();
    for &(_, sh, sv) in &planes {
        let limit_h = (w / 4) as i64;
        let limit_v = (h / 4) as i64;
        if sh.abs() >= limit_h {
            return Err(Error::ExcessiveDisplacement { shift: sh, limit: limit_h });
        }
        if sv.abs() >= limit_v {
            return Err(Error::ExcessiveDisplacement { shift: sv, limit: limit_v });
        }
    }

    // (luma, depth) per pixel; depth 0 marks an uncovered pixel
    let mut px = vec![(0u8, 0.0f64); w * h];
    for_each_chunk_mut(&mut px, w, exec, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            for &(z, sh, sv) in &planes {
                let sx = x as i64 - sh;
                let sy = y as i64 - sv;
                if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
                    continue;
                }
                let i = sy as usize * w + sx as usize;
                if scene.depth[i] == z {
                    *out = (scene.texture[i], z);
                    break;
                }
            }
        }
        fill_row(row);
    });
    let covered: Vec<bool> = px.chunks(w).map(|r| r[0].1 > 0.0).collect();
    if covered.iter().any(|c| !c) {
        if !covered.iter().any(|c| *c) {
            return Err(Error::InvalidScene("render covered no pixel".into()));
        }
        for y in 0..h {
            if !covered[y] {
                let src = nearest_true(&covered, y);
                let (a, b) = px.split_at_mut(y.max(src) * w);
                if src < y {
                    b[..w].copy_from_slice(&a[src * w..src * w + w]);
                } else {
                    a[y * w..y * w + w].copy_from_slice(&b[..w]);
                }
            }
        }
    }
    let frame = Frame::new(w, h, px.iter().map(|p| p.0).collect())?;
    Ok(View {
        frame,
        depth: px.iter().map(|p| p.1).collect(),
    })
}

pub fn render(scene: &Scene, cumulative_d: (f64, f64), intrinsics: CameraIntrinsics) -> Result<Frame> {
    Ok(render_view(scene, cumulative_d, intrinsics, Execution::default())?.frame)
}

fn fill_row(row: &mut [(u8, f64)]) {
    let covered: Vec<bool> = row.iter().map(|p| p.1 > 0.0).collect();
    if covered.iter().all(|c| *c) || !covered.iter().any(|c| *c) {
        return;
    }
    for x in 0..row.len() {
        if !covered[x] {
            row[x] = row[nearest_true(&covered, x)];
        }
    }
}

fn nearest_true(flags: &[bool], at: usize) -> usize {
    for k in 1..flags.len() {
        if at >= k && flags[at - k] {
            return at - k;
        }
        if at + k < flags.len() && flags[at + k] {
            return at + k;
        }
    }
    at
}

/// Most frequent depth of each 4×4 block, nearer on ties.
pub fn block_depths(depth: &[f64], width: usize, height: usize) -> DepthMap {
    let bs = SMALL_BLOCK;
    let (cols, rows) = (width / bs, height / bs);
    let mut out = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let mut vals: Vec<f64> = (0..bs * bs)
                .map(|k| depth[(r * bs + k / bs) * width + c * bs + k % bs])
                .collect();
            vals.sort_by(f64::total_cmp);
            let mut best = (0usize, 0.0);
            let mut i = 0;
            while i < vals.len() {
                let j = vals[i..].iter().take_while(|v| **v == vals[i]).count();
                if j > best.0 {
                    best = (j, vals[i]);
                }
                i += j;
            }
            out.push(best.1);
        }
    }
    DepthMap::from_depths(bs, cols, rows, out).expect("grid sized from frame")
}

/// Camera translation per frame interval.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySpec {
    /// Translation (d_h, d_v) in meters from frame k to k + 1.
    pub displacements: Vec<(f64, f64)>,
    pub frame_rate: f64,
    pub sensor_rate: f64,
}

impl TrajectorySpec {
    pub fn new(displacements: Vec<(f64, f64)>, frame_rate: f64, sensor_rate: f64) -> Result<Self> {
        let spec = Self {
            displacements,
            frame_rate,
            sensor_rate,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn constant(intervals: usize, d: (f64, f64)) -> Self {
        Self {
            displacements: vec![d; intervals],
            frame_rate: DEFAULT_FRAME_RATE,
            sensor_rate: DEFAULT_SENSOR_RATE,
        }
    }

    pub fn frames(&self) -> usize {
        self.displacements.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::InvalidTrajectory(format!("frame rate {}", self.frame_rate)));
        }
        if !(self.sensor_rate.is_finite() && self.sensor_rate >= 2.0 * self.frame_rate) {
            return Err(Error::InvalidTrajectory(format!(
                "sensor rate {} must be at least twice the frame rate {}",
                self.sensor_rate, self.frame_rate
            )));
        }
        if self.displacements.iter().any(|(h, v)| !h.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidTrajectory("non-finite displacement".into()));
        }
        Ok(())
    }

    /// Cumulative translation at each frame.
    pub fn positions(&self) -> Vec<(f64, f64)> {
        let mut pos = vec![(0.0, 0.0)];
        let mut acc = (0.0, 0.0);
        for &(h, v) in &self.displacements {
            acc = (acc.0 + h, acc.1 + v);
            pos.push(acc);
        }
        pos
    }

    /// Plain-text form: `fps`, `sensor_rate`, then `move <count> <dh> <dv>` lines.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        Self::parse_with_defaults(text, path, DEFAULT_FRAME_RATE, DEFAULT_SENSOR_RATE)
    }

    /// As [`TrajectorySpec::parse`], with the rates used when the file omits them.
    pub fn parse_with_defaults(text: &str, path: &Path, frame_rate: f64, sensor_rate: f64) -> Result<Self> {
        let mut fps = frame_rate;
        let mut rate = sensor_rate;
        let mut displacements = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: &str| Error::parse(path, i + 1, msg.to_string());
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(path, i + 1, format!("{s:?}: {e}")));
            match (toks[0], toks.len()) {
                ("fps", 2) => fps = num(toks[1])?,
                ("sensor_rate", 2) => rate = num(toks[1])?,
                ("move", 4) => {
                    let n = toks[1]
                        .parse::<usize>()
                        .map_err(|e| Error::parse(path, i + 1, format!("{:?}: {e}", toks[1])))?;
                    let d = (num(toks[2])?, num(toks[3])?);
                    displacements.extend(std::iter::repeat_n(d, n));
                }
                ("fps" | "sensor_rate" | "move", _) => return Err(bad("wrong number of fields")),
                (key, _) => return Err(bad(&format!("unknown key {key:?}"))),
            }
        }
        Self::new(displacements, fps, rate).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// Accelerometer trace reproducing the trajectory.
///
/// Sample amplitudes are the minimum-energy solution of the linear system
/// "double integral over frame interval k equals displacement k", so velocity
/// stays bounded whatever the ratio of sensor to frame rate. The camera starts
/// and ends at rest: the first sample is zero and one extra row pins the
/// velocity at the last frame to zero. A few refinement passes
/// against the trace integrator remove rounding left by the solve.
pub fn synthesize_trace(spec: &TrajectorySpec) -> Result<SensorTrace> {
    spec.validate()?;
    let n = spec.displacements.len();
    let end = frame_time(n, spec.frame_rate);
    let last = ((end * spec.sensor_rate).ceil() as usize + 1).max(1);
    let times: Vec<f64> = (0..=last).map(|i| i as f64 / spec.sensor_rate).collect();
    let bounds: Vec<f64> = (0..=n).map(|k| frame_time(k, spec.frame_rate)).collect();

    let build = |ah: &[f64], av: &[f64]| {
        let samples = times
            .iter()
            .enumerate()
            .map(|(i, &t)| SensorSample {
                timestamp: t,
                accel_h: if i == 0 { 0.0 } else { ah[i - 1] },
                accel_v: if i == 0 { 0.0 } else { av[i - 1] },
                ..Default::default()
            })
            .collect();
        SensorTrace::new(samples).expect("uniform timestamps")
    };
    let zeros = vec![0.0; last];
    if n == 0 || spec.displacements.iter().all(|&(h, v)| h == 0.0 && v == 0.0) {
        return Ok(build(&zeros, &zeros));
    }

    // Column i: per-interval displacement caused by a unit hat at sample i + 1.
    let hat_response = |i: usize, t: f64| -> f64 {
        let (ta, tc, tb) = (times[i - 1], times[i], times[(i + 1).min(last)]);
        if t <= ta {
            0.0
        } else if t >= tb && i < last {
            (tc - ta) * (t - tc)
        } else {
            let cube = |u: f64| if u > 0.0 { u * u * u / 6.0 } else { 0.0 };
            let h = tc - ta;
            (cube(t - ta) - 2.0 * cube(t - tc) + cube(t - tb)) / h
        }
    };
    // Velocity at time t caused by a unit hat at sample i.
    let hat_area = |i: usize, t: f64| -> f64 {
        let (ta, tc, tb) = (times[i - 1], times[i], times[(i + 1).min(last)]);
        if t >= tb && i < last {
            tc - ta
        } else {
            let sq = |u: f64| if u > 0.0 { u * u / 2.0 } else { 0.0 };
            (sq(t - ta) - 2.0 * sq(t - tc) + sq(t - tb)) / (tc - ta)
        }
    };
    // Rows 0..n: interval displacements; row n: velocity at the last frame.
    let a = DMatrix::from_fn(n + 1, last, |k, j| {
        if k < n {
            hat_response(j + 1, bounds[k + 1]) - hat_response(j + 1, bounds[k])
        } else {
            hat_area(j + 1, end)
        }
    });
    let qr = a.transpose().qr();
    let (q, r) = (qr.q(), qr.r());
    if (0..=n).any(|k| r[(k, k)] == 0.0) {
        return Err(Error::InvalidTrajectory("sensor samples cannot resolve every frame interval".into()));
    }
    let solve = |rhs: &DVector<f64>| -> DVector<f64> {
        let y = r.transpose().solve_lower_triangular(rhs).expect("non-singular triangle");
        &q * y
    };

    let target = |sel: fn(&(f64, f64)) -> f64| {
        DVector::from_iterator(n + 1, spec.displacements.iter().map(sel).chain(std::iter::once(0.0)))
    };
    let (target_h, target_v) = (target(|d| d.0), target(|d| d.1));
    let mut amp_h = solve(&target_h);
    let mut amp_v = solve(&target_v);
    for _ in 0..3 {
        let trace = build(amp_h.as_slice(), amp_v.as_slice());
        let mut carry = Velocity::default();
        let mut res_h = DVector::zeros(n + 1);
        let mut res_v = DVector::zeros(n + 1);
        for k in 0..n {
            let step = trace.integrate_accel(bounds[k], bounds[k + 1], carry)?;
            res_h[k] = target_h[k] - step.d_h;
            res_v[k] = target_v[k] - step.d_v;
            carry = step.exit_velocity;
        }
        res_h[n] = -carry.h;
        res_v[n] = -carry.v;
        amp_h += solve(&res_h);
        amp_v += solve(&res_v);
    }
    Ok(build(amp_h.as_slice(), amp_v.as_slice()))
}

/// Block-level ground truth for a rendered sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// Per frame, the depth of each 4×4 block as seen in that frame.
    pub depth: Vec<DepthMap>,
    /// Per frame interval `k`, the exact parallax of each block of frame
    /// `k + 1` (before rounding).
    pub displacement: Vec<Vec<PixelDisplacement>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub frames: Vec<Frame>,
    pub trace: SensorTrace,
    pub truth: GroundTruth,
}

pub fn make_sequence(scene: &Scene, spec: &TrajectorySpec, intrinsics: CameraIntrinsics, exec: Execution) -> Result<Sequence> {
    spec.validate()?;
    let mut frames = Vec::with_capacity(spec.frames());
    let mut depth = Vec::with_capacity(spec.frames());
    for (k, pos) in spec.positions().into_iter().enumerate() {
        let view = render_view(scene, pos, intrinsics, exec)?;
        depth.push(block_depths(&view.depth, scene.width, scene.height));
        frames.push(match scene.noise {
            Some(noise) => add_noise(&view.frame, noise, k as u64)?,
            None => view.frame,
        });
    }
    let mut displacement = Vec::with_capacity(spec.displacements.len());
    for (k, &(dh, dv)) in spec.displacements.iter().enumerate() {
        let field = depth[k + 1]
            .iter()
            .map(|z| {
                let z = z.expect("rendered depth is positive");
                Ok(PixelDisplacement::new(
                    translational_mv(intrinsics, dh, z)?,
                    translational_mv(intrinsics, dv, z)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        displacement.push(field);
    }
    Ok(Sequence {
        frames,
        trace: synthesize_trace(spec)?,
        truth: GroundTruth { depth, displacement },
    })
}

/// Adds rounded, clamped Gaussian noise; frame `k` draws from its own stream
/// so the result does not depend on rendering order.
pub fn add_noise(frame: &Frame, noise: Noise, k: u64) -> Result<Frame> {
    let normal = Normal::new(0.0, noise.sigma).map_err(|e| Error::InvalidScene(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    rng.set_stream(k);
    let luma = frame
        .luma()
        .iter()
        .map(|&p| (p as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)
        .collect();
    Frame::new(frame.width(), frame.height(), luma)
}

#[derive(Clone, Debug, PartialEq)]
pub enum TextureSource {
    Noise(u64),
    Pgm(PathBuf),
}

/// Scene description file.
///
/// ```text
/// width 512
/// height 256
/// seed 7                # or: texture relative/or/absolute.pgm
/// depth 8.0             # background plane
/// rect 96 64 160 128 2  # x y w h z, painted in order
/// noise 0.5 3           # per-frame Gaussian noise: sigma, seed
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub texture: TextureSource,
    pub background: f64,
    pub rects: Vec<DepthRect>,
    pub noise: Option<Noise>,
}

impl SceneSpec {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut spec = SceneSpec {
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
            texture: TextureSource::Noise(0),
            background: 10.0,
            rects: Vec::new(),
            noise: None,
        };
        let base = path.parent().unwrap_or(Path::new(""));
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: String| Error::parse(path, i + 1, msg);
            let uint = |s: &str| s.parse::<usize>().map_err(|e| err(format!("{s:?}: {e}")));
            let real = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
            match (toks[0], toks.len()) {
                ("width", 2) => spec.width = uint(toks[1])?,
                ("height", 2) => spec.height = uint(toks[1])?,
                ("seed", 2) => {
                    spec.texture = TextureSource::Noise(toks[1].parse::<u64>().map_err(|e| err(format!("{:?}: {e}", toks[1])))?)
                }
                ("texture", 2) => spec.texture = TextureSource::Pgm(base.join(toks[1])),
                ("depth", 2) => spec.background = real(toks[1])?,
                ("rect", 6) => {
                    let z = real(toks[5])?;
                    if !(z > 0.0) {
                        return Err(err(format!("rect depth {z} must be positive")));
                    }
                    spec.rects.push(DepthRect {
                        x: uint(toks[1])?,
                        y: uint(toks[2])?,
                        w: uint(toks[3])?,
                        h: uint(toks[4])?,
                        z,
                    });
                }
                ("noise", 3) => {
                    let sigma = real(toks[1])?;
                    if !(sigma >= 0.0) {
                        return Err(err(format!("noise sigma {sigma} must be non-negative")));
                    }
                    let seed = toks[2].parse::<u64>().map_err(|e| err(format!("{:?}: {e}", toks[2])))?;
                    spec.noise = (sigma > 0.0).then_some(Noise { sigma, seed });
                }
                ("width" | "height" | "seed" | "texture" | "depth" | "rect" | "noise", _) => {
                    return Err(err("wrong number of fields".into()))
                }
                (key, _) => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        if !(spec.background > 0.0) {
            return Err(Error::format(path, "background depth must be positive"));
        }
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn build(&self) -> Result<Scene> {
        let texture = match &self.texture {
            TextureSource::Noise(seed) => procedural_texture(self.width, self.height, *seed),
            TextureSource::Pgm(p) => {
                let (w, h, data) = read_pgm(p)?;
                if (w, h) != (self.width, self.height) {
                    return Err(Error::format(p, format!("texture is {w}x{h}, scene is {}x{}", self.width, self.height)));
                }
                data
            }
        };
        let scene = Scene::layered(self.width, self.height, texture, self.background, &self.rects)?;
        match self.noise {
            Some(n) => scene.with_noise(n.sigma, n.seed),
            None => Ok(scene),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(f: f64) -> CameraIntrinsics {
        CameraIntrinsics::new(f).unwrap()
    }

    fn flat_scene(z: f64) -> Scene {
        Scene::layered(128, 64, procedural_texture(128, 64, 3), z, &[]).unwrap()
    }

    #[test]
    fn identity_pose_renders_texture() {
        let scene = flat_scene(10.0);
        let f = render(&scene, (0.0, 0.0), cam(1000.0)).unwrap();
        assert_eq!(f.luma(), scene.texture());
    }

    #[test]
    fn uniform_parallax_is_exact_shift() {
        let scene = flat_scene(10.0);
        let f = render(&scene, (0.05, 0.0), cam(1000.0)).unwrap();
        for y in 0..64 {
            for x in 0..128usize {
                let want = scene.texture()[y * 128 + x.saturating_sub(5)];
                assert_eq!(f.get(x, y), want);
            }
        }
        let up = render(&scene, (0.0, -0.03), cam(1000.0)).unwrap();
        for y in 0..64 {
            for x in 0..128 {
                assert_eq!(up.get(x, y), scene.texture()[(y + 3).min(63) * 128 + x]);
            }
        }
    }

    #[test]
    fn near_plane_moves_more_and_occludes() {
        let rect = DepthRect {
            x: 40,
            y: 16,
            w: 32,
            h: 32,
            z: 5.0,
        };
        let scene = Scene::layered(128, 64, procedural_texture(128, 64, 4), 20.0, &[rect]).unwrap();
        let d = 0.05;
        let view = render_view(&scene, (d, 0.0), cam(1000.0), Execution::Sequential).unwrap();
        let near = translational_mv(cam(1000.0), d, 5.0).unwrap().round() as usize;
        let far = translational_mv(cam(1000.0), d, 20.0).unwrap().round() as usize;
        assert_eq!((near, far), (10, 3));
        // inside the moved rectangle: near texture shifted by 10
        for y in 16..48 {
            for x in 50..82 {
                assert_eq!(view.frame.get(x, y), scene.texture()[y * 128 + x - near]);
                assert_eq!(view.depth[y * 128 + x], 5.0);
            }
        }
        // far content away from the rectangle shifted by 3
        for x in 3..128 {
            assert_eq!(view.frame.get(x, 2), scene.texture()[2 * 128 + x - far]);
        }
    }

    #[test]
    fn render_parallel_matches_sequential() {
        let rect = DepthRect {
            x: 10,
            y: 0,
            w: 50,
            h: 40,
            z: 2.0,
        };
        let scene = Scene::layered(128, 64, procedural_texture(128, 64, 5), 9.0, &[rect]).unwrap();
        let a = render_view(&scene, (0.03, 0.01), cam(700.0), Execution::Sequential).unwrap();
        let b = render_view(&scene, (0.03, 0.01), cam(700.0), Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn excessive_displacement_is_rejected() {
        let scene = flat_scene(1.0);
        assert!(matches!(
            render(&scene, (0.05, 0.0), cam(1000.0)),
            Err(Error::ExcessiveDisplacement { .. })
        ));
    }

    #[test]
    fn block_depth_mode_prefers_nearer_on_ties() {
        let mut depth = vec![8.0; 8 * 4];
        for y in 0..4 {
            for x in 0..2 {
                depth[y * 8 + x] = 2.0;
            }
            depth[y * 8 + 4] = 3.0;
        }
        let map = block_depths(&depth, 8, 4);
        assert_eq!(map.iter().collect::<Vec<_>>(), vec![Some(2.0), Some(8.0)]);
    }

    #[test]
    fn zero_trajectory_gives_zero_trace() {
        let trace = synthesize_trace(&TrajectorySpec::constant(5, (0.0, 0.0))).unwrap();
        assert!(trace.samples().iter().all(|s| s.accel_h == 0.0 && s.accel_v == 0.0 && s.gyro_h == 0.0));
        let single = synthesize_trace(&TrajectorySpec::constant(0, (0.0, 0.0))).unwrap();
        assert!(single.len() >= 2);
    }

    fn roundtrip(spec: &TrajectorySpec) -> Vec<(f64, f64)> {
        let trace = synthesize_trace(spec).unwrap();
        let mut carry = Velocity::default();
        (0..spec.displacements.len())
            .map(|k| {
                let m = trace.motion_for_frame(k, spec.frame_rate, &mut carry).unwrap();
                (m.d_h, m.d_v)
            })
            .collect()
    }

    #[test]
    fn constant_and_alternating_roundtrips() {
        let spec = TrajectorySpec::constant(30, (0.01, 0.0));
        for (dh, dv) in roundtrip(&spec) {
            assert!((dh - 0.01).abs() < 1e-9 && dv.abs() < 1e-9);
        }
        let alt: Vec<(f64, f64)> = (0..30).map(|k| (if k % 2 == 0 { 0.01 } else { -0.01 }, 0.0)).collect();
        let spec = TrajectorySpec::new(alt.clone(), 60.0, 1000.0).unwrap();
        for (got, want) in roundtrip(&spec).iter().zip(&alt) {
            assert!((got.0 - want.0).abs() < 1e-9);
        }
        let trace = synthesize_trace(&spec).unwrap();
        let mut carry = Velocity::default();
        for k in 0..30 {
            trace.motion_for_frame(k, 60.0, &mut carry).unwrap();
            assert!(carry.h.abs() <= 0.01 * 60.0);
        }
        assert!(carry.h.abs() < 1e-9, "camera comes to rest at the last frame");
    }

    #[test]
    fn minimum_sensor_rate_still_roundtrips() {
        let spec = TrajectorySpec::new(vec![(0.004, -0.002), (0.001, 0.0), (-0.003, 0.005)], 60.0, 120.0).unwrap();
        for (got, want) in roundtrip(&spec).iter().zip(&spec.displacements) {
            assert!((got.0 - want.0).abs() < 1e-9 && (got.1 - want.1).abs() < 1e-9);
        }
        assert!(TrajectorySpec::new(vec![], 60.0, 100.0).is_err());
    }

    #[test]
    fn sequence_ground_truth_is_consistent() {
        let rect = DepthRect {
            x: 32,
            y: 16,
            w: 48,
            h: 32,
            z: 2.0,
        };
        let scene = Scene::layered(128, 64, procedural_texture(128, 64, 6), 8.0, &[rect]).unwrap();
        let spec = TrajectorySpec::constant(3, (0.004, 0.0));
        let seq = make_sequence(&scene, &spec, cam(1000.0), Execution::default()).unwrap();
        assert_eq!(seq.frames.len(), 4);
        assert_eq!(seq.truth.displacement.len(), 3);
        for map in &seq.truth.depth {
            assert!(map.iter().all(|z| z == Some(2.0) || z == Some(8.0)));
        }
        for (k, field) in seq.truth.displacement.iter().enumerate() {
            for (p, z) in field.iter().zip(seq.truth.depth[k + 1].iter()) {
                assert_eq!(p.dp_h, translational_mv(cam(1000.0), 0.004, z.unwrap()).unwrap());
            }
        }
        let one = make_sequence(&scene, &TrajectorySpec::constant(0, (0.0, 0.0)), cam(1000.0), Execution::default()).unwrap();
        assert_eq!(one.frames.len(), 1);
        assert_eq!(one.frames[0].luma(), scene.texture());
    }

    #[test]
    fn scene_spec_parsing() {
        let p = Path::new("/tmp/scene.txt");
        let spec = SceneSpec::parse("width 128\nheight 64\nseed 9\ndepth 12\nrect 1 2 3 4 2.5 # near\n", p).unwrap();
        assert_eq!(spec.texture, TextureSource::Noise(9));
        assert_eq!(spec.rects, vec![DepthRect { x: 1, y: 2, w: 3, h: 4, z: 2.5 }]);
        let scene = spec.build().unwrap();
        assert_eq!(scene.planes(), vec![2.5, 12.0]);
        let tex = SceneSpec::parse("texture t.pgm\n", p).unwrap();
        assert_eq!(tex.texture, TextureSource::Pgm(PathBuf::from("/tmp/t.pgm")));

        let err = SceneSpec::parse("width 128\nrect 1 2 3\n", p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = SceneSpec::parse("\n\ncolour red\n", p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(SceneSpec::parse("rect 0 0 1 1 -2\n", p).is_err());

        let noisy = SceneSpec::parse("noise 0.5 3\n", p).unwrap();
        assert_eq!(noisy.noise, Some(Noise { sigma: 0.5, seed: 3 }));
        assert_eq!(SceneSpec::parse("noise 0 3\n", p).unwrap().noise, None);
        assert!(SceneSpec::parse("noise -1 3\n", p).is_err());
        assert!(SceneSpec::parse("noise 1\n", p).is_err());
    }

    #[test]
    fn noise_is_seeded_per_frame() {
        let flat = Frame::filled(128, 128, 128).unwrap();
        let n = Noise { sigma: 2.0, seed: 5 };
        let a = add_noise(&flat, n, 0).unwrap();
        assert_eq!(a, add_noise(&flat, n, 0).unwrap());
        assert_ne!(a, add_noise(&flat, n, 1).unwrap());
        let px = a.luma().len() as f64;
        let mean = a.luma().iter().map(|&p| p as f64).sum::<f64>() / px;
        let var = a.luma().iter().map(|&p| (p as f64 - mean).powi(2)).sum::<f64>() / px;
        // rounding adds 1/12 of a grey level squared
        assert!((mean - 128.0).abs() < 0.05, "{mean}");
        assert!((var - (4.0 + 1.0 / 12.0)).abs() < 0.15, "{var}");
        assert!(flat_scene(5.0).with_noise(-1.0, 0).is_err());
    }

    #[test]
    fn trajectory_parsing() {
        let p = Path::new("traj.txt");
        let spec = TrajectorySpec::parse("fps 30\nsensor_rate 600\nmove 2 0.01 0\nmove 1 -0.01 0.002\n", p).unwrap();
        assert_eq!(spec.frame_rate, 30.0);
        assert_eq!(spec.displacements, vec![(0.01, 0.0), (0.01, 0.0), (-0.01, 0.002)]);
        assert!(matches!(
            TrajectorySpec::parse("move x 0 0\n", p),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(TrajectorySpec::parse("fps 60\nsensor_rate 90\n", p).is_err());
    }

    #[test]
    fn texture_is_seeded() {
        assert_eq!(procedural_texture(64, 64, 1), procedural_texture(64, 64, 1));
        assert_ne!(procedural_texture(64, 64, 1), procedural_texture(64, 64, 2));
    }
}
