//! Scripted synthetic sessions: overhead frames, tip trace, sensor log and
//! the ground truth they were rendered from.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{apply_character_tiers, tilt_projection, FusionError, DEFAULT_N_TIERS};
use crate::ingest::{canvas_rect, encode_pgm, FrameManifest, FrameRef, Size, SENSOR_HEADER, TIP_HEADER};
use crate::model::{
    normalize_yaw, ContactInterval, EnrichedPoint, Orientation, Role, Session, Stroke, Vec2,
    PRESSURE_MAX, SCHEMA_VERSION,
};

pub const GAP_DOWN_PX: f64 = 2.0;
pub const GAP_UP_PX: f64 = 30.0;
const STAMP_STEP_PX: f64 = 0.25;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("script has no strokes")]
    EmptyScript,
    #[error("stroke {stroke}: {msg}")]
    BadProfile { stroke: usize, msg: String },
    #[error("bad options: {0}")]
    BadOptions(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeedProfile {
    #[default]
    Uniform,
    EaseInOut,
}

impl SpeedProfile {
    /// Fraction of path length covered at time fraction `u`.
    fn progress(self, u: f64) -> f64 {
        match self {
            SpeedProfile::Uniform => u,
            SpeedProfile::EaseInOut => (1.0 - (std::f64::consts::PI * u).cos()) / 2.0,
        }
    }

    fn rate(self, u: f64) -> f64 {
        match self {
            SpeedProfile::Uniform => 1.0,
            SpeedProfile::EaseInOut => std::f64::consts::FRAC_PI_2 * (std::f64::consts::PI * u).sin(),
        }
    }
}

/// `(arc_pos, value)` breakpoints, linearly interpolated and clamped at the ends.
pub type Profile = Vec<(f64, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrokeScript {
    pub path: Vec<Vec2>,
    pub duration_ms: i64,
    #[serde(default)]
    pub speed_profile: SpeedProfile,
    pub pressure_profile: Profile,
    pub yaw_profile: Profile,
    pub pitch_profile: Profile,
    pub roll_profile: Profile,
    pub brush_radius_px: f64,
    /// Pen-up time before this stroke; the last stroke's value is also used
    /// as the tail after it.
    pub inter_stroke_pause_ms: i64,
}

fn profile_at(p: &[(f64, f64)], a: f64) -> f64 {
    let j = p.partition_point(|&(x, _)| x <= a);
    if j == 0 {
        return p[0].1;
    }
    if j == p.len() {
        return p[p.len() - 1].1;
    }
    let ((x0, y0), (x1, y1)) = (p[j - 1], p[j]);
    y0 + (y1 - y0) * (a - x0) / (x1 - x0)
}

impl StrokeScript {
    fn check(&self, stroke: usize) -> Result<(), SynthError> {
        let bad = |msg: &str| SynthError::BadProfile {
            stroke,
            msg: msg.to_string(),
        };
        if self.path.len() < 2 {
            return Err(bad("path needs at least 2 points"));
        }
        if self.path.iter().any(|p| !p.is_finite()) {
            return Err(bad("path has a non-finite point"));
        }
        if self.path.windows(2).map(|w| w[0].dist(w[1])).sum::<f64>() <= 0.0 {
            return Err(bad("path has zero length"));
        }
        if self.duration_ms <= 0 {
            return Err(bad("duration_ms must be positive"));
        }
        if self.inter_stroke_pause_ms < 0 {
            return Err(bad("inter_stroke_pause_ms must be >= 0"));
        }
        if !(self.brush_radius_px.is_finite() && self.brush_radius_px > 0.0) {
            return Err(bad("brush_radius_px must be positive"));
        }
        for (name, p) in [
            ("pressure_profile", &self.pressure_profile),
            ("yaw_profile", &self.yaw_profile),
            ("pitch_profile", &self.pitch_profile),
            ("roll_profile", &self.roll_profile),
        ] {
            if p.is_empty() {
                return Err(bad(&format!("{name} is empty")));
            }
            if p.iter().any(|&(a, v)| !(0.0..=1.0).contains(&a) || !v.is_finite()) {
                return Err(bad(&format!("{name} breakpoint outside [0, 1] or not finite")));
            }
            if p.windows(2).any(|w| w[1].0 < w[0].0) {
                return Err(bad(&format!("{name} arc positions decrease")));
            }
        }
        if self.pressure_profile.iter().any(|&(_, v)| v < 0.0 || v > f64::from(PRESSURE_MAX)) {
            return Err(bad("pressure outside [0, 1023]"));
        }
        if self.pitch_profile.iter().any(|&(_, v)| v.abs() > 90.0) {
            return Err(bad("pitch outside [-90, 90]"));
        }
        Ok(())
    }

    fn orientation_at(&self, a: f64) -> (f64, f64, f64) {
        (
            profile_at(&self.yaw_profile, a),
            profile_at(&self.pitch_profile, a),
            profile_at(&self.roll_profile, a),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Noise {
    pub gap_px_sd: f64,
    pub pressure_sd: f64,
    pub angle_sd_deg: f64,
}

/// Brush shadow: every `every_frames` frames (while the brush is down) the
/// ink around the tip is hidden for `k_frames` frames, then revealed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub k_frames: usize,
    pub every_frames: usize,
}

impl Occlusion {
    pub fn new(k_frames: usize) -> Self {
        Occlusion {
            k_frames,
            every_frames: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub fps: u32,
    pub sensor_hz: u32,
    pub noise: Noise,
    pub seed: u64,
    pub canvas: Size,
    pub occlusion: Option<Occlusion>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            fps: 30,
            sensor_hz: 100,
            noise: Noise::default(),
            seed: 0,
            canvas: Size { w: 256, h: 256 },
            occlusion: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub t_ms: i64,
    pub pos: Vec2,
    pub speed_px_s: f64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    pub pressure: f64,
    /// yaw change since the stroke started
    pub rotation_deg: f64,
    pub arc_pos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthStroke {
    pub index: usize,
    pub contact: ContactInterval,
    pub brush_radius_px: f64,
    pub samples: Vec<TruthSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub fps: u32,
    pub sensor_hz: u32,
    pub seed: u64,
    pub canvas_w: u32,
    pub canvas_h: u32,
    pub strokes: Vec<TruthStroke>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("truth serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| SynthError::BadOptions(format!("{}: {e}", path.display())))
    }
}

/// Everything a synthetic run produces, before it is written out.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest: FrameManifest,
    pub frames: Vec<GrayImage>,
    pub sensor_csv: String,
    pub tip_csv: String,
    pub truth: GroundTruth,
    /// Pixels first inked by each stroke.
    pub stamp_sets: Vec<Vec<(u32, u32)>>,
}

struct Timed<'a> {
    script: &'a StrokeScript,
    start: i64,
    end: i64,
    cum: Vec<f64>,
}

impl Timed<'_> {
    fn length(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    fn u(&self, t: f64) -> f64 {
        ((t - self.start as f64) / self.script.duration_ms as f64).clamp(0.0, 1.0)
    }

    /// Distance along the path at time `t`.
    fn s_at(&self, t: f64) -> f64 {
        self.script.speed_profile.progress(self.u(t)) * self.length()
    }

    fn pos_at_s(&self, s: f64) -> Vec2 {
        let path = &self.script.path;
        let s = s.clamp(0.0, self.length());
        let j = self.cum.partition_point(|&c| c <= s).clamp(1, path.len() - 1);
        let seg = self.cum[j] - self.cum[j - 1];
        if seg <= 0.0 {
            return path[j];
        }
        path[j - 1].lerp(path[j], (s - self.cum[j - 1]) / seg)
    }

    fn speed_at(&self, t: f64) -> f64 {
        self.script.speed_profile.rate(self.u(t)) * self.length() / self.script.duration_ms as f64 * 1000.0
    }

    fn contains(&self, t: i64) -> bool {
        t >= self.start && t <= self.end
    }
}

fn timeline(script: &[StrokeScript]) -> (Vec<Timed<'_>>, i64) {
    let mut t = 0;
    let mut out = Vec::with_capacity(script.len());
    for s in script {
        let start = t + s.inter_stroke_pause_ms;
        let end = start + s.duration_ms;
        let mut cum = vec![0.0];
        for w in s.path.windows(2) {
            cum.push(cum[cum.len() - 1] + w[0].dist(w[1]));
        }
        out.push(Timed {
            script: s,
            start,
            end,
            cum,
        });
        t = end;
    }
    let tail = script.last().map_or(0, |s| s.inter_stroke_pause_ms);
    (out, t + tail)
}

fn grid_times(hz: u32, total: i64) -> Vec<i64> {
    (0..)
        .map(|k: i64| (k as f64 * 1000.0 / f64::from(hz)).round() as i64)
        .take_while(|&t| t <= total)
        .collect()
}

struct Canvas {
    w: u32,
    h: u32,
    /// stroke index that first inked each pixel
    owner: Vec<Option<usize>>,
}

impl Canvas {
    /// Stamps a disc; returns the bounding box it touched.
    fn stamp(&mut self, c: Vec2, r: f64, stroke: usize) -> Option<(u32, u32, u32, u32)> {
        let x0 = (c.x - r - 0.5).floor().max(0.0) as i64;
        let y0 = (c.y - r - 0.5).floor().max(0.0) as i64;
        let x1 = ((c.x + r - 0.5).ceil() as i64).min(i64::from(self.w) - 1);
        let y1 = ((c.y + r - 0.5).ceil() as i64).min(i64::from(self.h) - 1);
        if x0 > x1 || y0 > y1 {
            return None;
        }
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = Vec2::new(x as f64 + 0.5, y as f64 + 0.5).dist(c);
                if d <= r {
                    let o = &mut self.owner[(y * i64::from(self.w) + x) as usize];
                    if o.is_none() {
                        *o = Some(stroke);
                    }
                }
            }
        }
        Some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
    }
}

type BBox = (u32, u32, u32, u32);

fn union(a: Option<BBox>, b: BBox) -> BBox {
    match a {
        None => b,
        Some(a) => (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)),
    }
}

fn render_frames(strokes: &[Timed<'_>], frame_times: &[i64], opts: &SynthOptions) -> (Vec<GrayImage>, Canvas) {
    let mut canvas = Canvas {
        w: opts.canvas.w,
        h: opts.canvas.h,
        owner: vec![None; (opts.canvas.w * opts.canvas.h) as usize],
    };
    let mut frames = Vec::with_capacity(frame_times.len());
    // (first hidden frame, bbox accumulated during the episode)
    let mut episode: Option<(usize, Option<BBox>)> = None;
    for (k, &t) in frame_times.iter().enumerate() {
        let t_prev = if k == 0 { i64::MIN } else { frame_times[k - 1] };
        if let (Some(occ), None) = (opts.occlusion, &episode) {
            let down = strokes.iter().any(|s| s.start < t && t < s.end);
            if down && k % occ.every_frames == occ.every_frames / 2 {
                episode = Some((k, None));
            }
        }
        for (i, s) in strokes.iter().enumerate() {
            let ta = s.start.max(t_prev);
            let tb = s.end.min(t);
            if ta > tb || (k > 0 && tb <= t_prev) {
                continue;
            }
            let (sa, sb) = (s.s_at(ta as f64), s.s_at(tb as f64));
            let n = ((sb - sa) / STAMP_STEP_PX).ceil().max(0.0) as usize + 1;
            for j in 0..n {
                let sj = if n == 1 { sa } else { sa + (sb - sa) * j as f64 / (n - 1) as f64 };
                let touched = canvas.stamp(s.pos_at_s(sj), s.script.brush_radius_px, i);
                if let (Some((_, bb)), Some(b)) = (episode.as_mut(), touched) {
                    *bb = Some(union(*bb, b));
                }
            }
        }
        let mut img = GrayImage::from_pixel(canvas.w, canvas.h, Luma([255]));
        let hidden = match (&episode, opts.occlusion) {
            (Some((f0, bb)), Some(occ)) if k < f0 + occ.k_frames => *bb,
            _ => None,
        };
        for y in 0..canvas.h {
            for x in 0..canvas.w {
                if canvas.owner[(y * canvas.w + x) as usize].is_none() {
                    continue;
                }
                let shadowed = hidden.is_some_and(|(x0, y0, x1, y1)| {
                    x + 1 >= x0 && x <= x1 + 1 && y + 1 >= y0 && y <= y1 + 1
                });
                if !shadowed {
                    img.put_pixel(x, y, Luma([0]));
                }
            }
        }
        frames.push(img);
        if let (Some((f0, _)), Some(occ)) = (&episode, opts.occlusion) {
            if k + 1 >= f0 + occ.k_frames {
                episode = None;
            }
        }
    }
    (frames, canvas)
}

fn truth_strokes(strokes: &[Timed<'_>], hz: u32) -> Vec<TruthStroke> {
    let grid = grid_times(hz, strokes.last().map_or(0, |s| s.end));
    strokes
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let mut times: Vec<i64> = grid.iter().copied().filter(|&t| s.contains(t)).collect();
            if times.first() != Some(&s.start) {
                times.insert(0, s.start);
            }
            if times.last() != Some(&s.end) {
                times.push(s.end);
            }
            let yaw0 = profile_at(&s.script.yaw_profile, 0.0);
            let samples = times
                .iter()
                .map(|&t| {
                    let sd = s.s_at(t as f64);
                    let a = sd / s.length();
                    let (yaw, pitch, roll) = s.script.orientation_at(a);
                    TruthSample {
                        t_ms: t,
                        pos: s.pos_at_s(sd),
                        speed_px_s: s.speed_at(t as f64),
                        yaw_deg: yaw,
                        pitch_deg: pitch,
                        roll_deg: roll,
                        pressure: profile_at(&s.script.pressure_profile, a),
                        rotation_deg: yaw - yaw0,
                        arc_pos: a,
                    }
                })
                .collect();
            TruthStroke {
                index,
                contact: ContactInterval {
                    index,
                    start_ms: s.start,
                    end_ms: s.end,
                },
                brush_radius_px: s.script.brush_radius_px,
                samples,
            }
        })
        .collect()
}

fn side_streams(strokes: &[Timed<'_>], total: i64, opts: &SynthOptions) -> Result<(String, String), SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| SynthError::BadOptions(e.to_string()));
    let gap_n = normal(opts.noise.gap_px_sd)?;
    let p_n = normal(opts.noise.pressure_sd)?;
    let a_n = normal(opts.noise.angle_sd_deg)?;
    let times = grid_times(opts.sensor_hz, total);

    let mut tip = TIP_HEADER.join(",") + "\n";
    for &t in &times {
        let base = if strokes.iter().any(|s| s.contains(t)) { GAP_DOWN_PX } else { GAP_UP_PX };
        let g = (base + gap_n.sample(&mut rng)).max(0.0);
        tip.push_str(&format!("{t},{g:.3}\n"));
    }

    let mut sensor = SENSOR_HEADER.join(",") + "\n";
    for &t in &times {
        // Held orientation between strokes: end of the last stroke, or the
        // start of the first one before any ink.
        let (script, a, down) = match strokes.iter().position(|s| s.contains(t)) {
            Some(i) => (strokes[i].script, strokes[i].s_at(t as f64) / strokes[i].length(), true),
            None => match strokes.iter().rev().find(|s| s.end < t) {
                Some(s) => (s.script, 1.0, false),
                None => (strokes[0].script, 0.0, false),
            },
        };
        let (yaw, pitch, roll) = script.orientation_at(a);
        let pressure = if down { profile_at(&script.pressure_profile, a) } else { 0.0 };
        let yaw = normalize_yaw(yaw + a_n.sample(&mut rng));
        let pitch = (pitch + a_n.sample(&mut rng)).clamp(-90.0, 90.0);
        let roll = normalize_yaw(roll + a_n.sample(&mut rng));
        let p = (pressure + p_n.sample(&mut rng)).round().clamp(0.0, f64::from(PRESSURE_MAX)) as u16;
        sensor.push_str(&format!("{t},{yaw:.3},{pitch:.3},{roll:.3},{p}\n"));
    }
    Ok((sensor, tip))
}

pub fn frame_file_name(k: usize) -> String {
    format!("frames/{k:05}.pgm")
}

/// Renders a scripted session in memory.
pub fn generate_session(script: &[StrokeScript], opts: &SynthOptions) -> Result<SynthOutput, SynthError> {
    if script.is_empty() {
        return Err(SynthError::EmptyScript);
    }
    if opts.fps == 0 || opts.sensor_hz == 0 {
        return Err(SynthError::BadOptions("fps and sensor_hz must be positive".into()));
    }
    if opts.canvas.w == 0 || opts.canvas.h == 0 {
        return Err(SynthError::BadOptions("canvas must be non-empty".into()));
    }
    if let Some(o) = opts.occlusion {
        if o.k_frames == 0 || o.every_frames <= o.k_frames {
            return Err(SynthError::BadOptions("occlusion needs 0 < k_frames < every_frames".into()));
        }
    }
    for (i, s) in script.iter().enumerate() {
        s.check(i)?;
    }
    let (strokes, total) = timeline(script);
    let frame_times = grid_times(opts.fps, total);
    let (frames, canvas) = render_frames(&strokes, &frame_times, opts);
    let mut stamp_sets = vec![Vec::new(); strokes.len()];
    for (i, o) in canvas.owner.iter().enumerate() {
        if let Some(s) = o {
            stamp_sets[*s].push((i as u32 % canvas.w, i as u32 / canvas.w));
        }
    }
    let (sensor_csv, tip_csv) = side_streams(&strokes, total, opts)?;
    let manifest = FrameManifest {
        frames: frame_times
            .iter()
            .enumerate()
            .map(|(k, &t_ms)| FrameRef {
                file: PathBuf::from(frame_file_name(k)),
                t_ms,
            })
            .collect(),
        paper_quad: Some(canvas_rect(opts.canvas.w, opts.canvas.h)),
        dst_size: opts.canvas,
        sensor_log: PathBuf::from("sensor.csv"),
        tip_trace: PathBuf::from("tip.csv"),
        sensor_clock_offset_ms: 0,
        tip_clock_offset_ms: 0,
    };
    Ok(SynthOutput {
        manifest,
        frames,
        sensor_csv,
        tip_csv,
        truth: GroundTruth {
            fps: opts.fps,
            sensor_hz: opts.sensor_hz,
            seed: opts.seed,
            canvas_w: opts.canvas.w,
            canvas_h: opts.canvas.h,
            strokes: truth_strokes(&strokes, opts.sensor_hz),
        },
        stamp_sets,
    })
}

/// Writes frames, `manifest.json`, `sensor.csv`, `tip.csv` and `truth.json` into `dir`.
pub fn write_session(dir: &Path, out: &SynthOutput) -> Result<(), SynthError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(io(&frames_dir))?;
    out.manifest
        .frames
        .par_iter()
        .zip(out.frames.par_iter())
        .try_for_each(|(r, img)| {
            let p = dir.join(&r.file);
            std::fs::write(&p, encode_pgm(img)).map_err(io(&p))
        })?;
    let mut manifest = serde_json::to_string_pretty(&out.manifest).expect("manifest serializes");
    manifest.push('\n');
    for (name, body) in [
        ("manifest.json", manifest.as_str()),
        ("sensor.csv", out.sensor_csv.as_str()),
        ("tip.csv", out.tip_csv.as_str()),
        ("truth.json", out.truth.to_json().as_str()),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(io(&p))?;
    }
    Ok(())
}

pub fn read_script(path: &Path) -> Result<Vec<StrokeScript>, SynthError> {
    let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| SynthError::BadProfile {
        stroke: 0,
        msg: format!("{}: {e}", path.display()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMetrics {
    pub stroke_count_match: bool,
    pub skeleton_rmse_px: f64,
    pub speed_corr: f64,
    pub rotation_mae_deg: f64,
    pub contact_iou: f64,
}

fn nearest<'a>(samples: &'a [TruthSample], t: i64) -> &'a TruthSample {
    let j = samples.partition_point(|s| s.t_ms < t);
    if j == 0 {
        return &samples[0];
    }
    if j == samples.len() {
        return &samples[j - 1];
    }
    let (a, b) = (&samples[j - 1], &samples[j]);
    if t - a.t_ms <= b.t_ms - t {
        a
    } else {
        b
    }
}

/// Pearson correlation; with a constant series it is 1 for identical series, else 0.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    sab / (saa * sbb).sqrt()
}

fn iou(a: &ContactInterval, b: &ContactInterval) -> f64 {
    let inter = (a.end_ms.min(b.end_ms) - a.start_ms.max(b.start_ms)).max(0);
    let uni = a.end_ms.max(b.end_ms) - a.start_ms.min(b.start_ms);
    if uni <= 0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    inter as f64 / uni as f64
}

/// Scores a processed session against the truth it was rendered from. Points
/// are matched to the truth sample nearest in time within the same stroke;
/// rotations are compared relative to the truth yaw at the session stroke's
/// first point.
pub fn score_against_truth(session: &Session, truth: &GroundTruth) -> TruthMetrics {
    let (mut sq, mut n_pts) = (0.0, 0usize);
    let (mut rot_err, mut n_rot) = (0.0, 0usize);
    let (mut sp_s, mut sp_t) = (Vec::new(), Vec::new());
    for (s, ts) in session.strokes.iter().zip(&truth.strokes) {
        if ts.samples.is_empty() || s.skeleton.is_empty() {
            continue;
        }
        let yaw_ref = nearest(&ts.samples, s.skeleton[0].t_ms).yaw_deg;
        for p in &s.skeleton {
            let q = nearest(&ts.samples, p.t_ms);
            sq += p.pos.dist(q.pos).powi(2);
            n_pts += 1;
            sp_s.push(p.speed_px_s);
            sp_t.push(q.speed_px_s);
            rot_err += normalize_yaw(p.rotation_deg - (q.yaw_deg - yaw_ref)).abs();
            n_rot += 1;
        }
    }
    let contact_iou = if truth.strokes.is_empty() {
        0.0
    } else {
        truth
            .strokes
            .iter()
            .enumerate()
            .map(|(i, ts)| session.strokes.get(i).map_or(0.0, |s| iou(&s.contact, &ts.contact)))
            .sum::<f64>()
            / truth.strokes.len() as f64
    };
    let mean = |sum: f64, n: usize| if n == 0 { f64::INFINITY } else { sum / n as f64 };
    TruthMetrics {
        stroke_count_match: session.strokes.len() == truth.strokes.len(),
        skeleton_rmse_px: mean(sq, n_pts).sqrt(),
        speed_corr: pearson(&sp_s, &sp_t),
        rotation_mae_deg: mean(rot_err, n_rot),
        contact_iou,
    }
}

/// A session whose skeletons are the truth samples themselves.
pub fn session_from_truth(truth: &GroundTruth, id: &str, role: Role) -> Result<Session, SynthError> {
    let mut strokes: Vec<Stroke> = truth
        .strokes
        .iter()
        .map(|ts| {
            let skeleton = ts
                .samples
                .iter()
                .map(|s| {
                    let o = Orientation {
                        yaw_deg: normalize_yaw(s.yaw_deg),
                        pitch_deg: s.pitch_deg,
                        roll_deg: s.roll_deg,
                    };
                    EnrichedPoint {
                        pos: s.pos,
                        t_ms: s.t_ms,
                        speed_px_s: s.speed_px_s,
                        pressure_raw: s.pressure.round().clamp(0.0, f64::from(PRESSURE_MAX)) as u16,
                        pressure_tier: 0,
                        speed_tier: 0,
                        tilt_proj: tilt_projection(&o),
                        rotation_deg: s.rotation_deg,
                        arc_pos: s.arc_pos,
                    }
                })
                .collect();
            Stroke {
                index: ts.index,
                contact: ts.contact,
                skeleton,
                pixel_count: 0,
            }
        })
        .collect();
    apply_character_tiers(&mut strokes, DEFAULT_N_TIERS)?;
    Ok(Session {
        schema_version: SCHEMA_VERSION.to_string(),
        id: id.to_string(),
        role,
        character_label: String::new(),
        canvas_w: truth.canvas_w,
        canvas_h: truth.canvas_h,
        frame_count: 0,
        config_fingerprint: String::new(),
        glyph_mask: None,
        frames_dir: None,
        strokes,
    })
}
