//! Sensor-to-skeleton alignment and the derived per-point encodings: tilt
//! projection, per-stroke relative rotation, and tiered pressure/speed.
//!
//! Yaw is carried as integer micro-degrees once it leaves the sensor log.
//! Unwrapping, interpolation and the rotation differences are then exact, so
//! a constant yaw offset in the log leaves every rotation bit-identical.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ContactInterval, EnrichedPoint, Orientation, Role, SensorStream, Session, Stroke, Vec2,
    PRESSURE_MAX, SCHEMA_VERSION,
};
use crate::skeleton::{arc_length_positions, compute_speed, RawSkeleton};

pub const DEFAULT_N_TIERS: u32 = 5;

const MICRO: i64 = 1_000_000;
const HALF_TURN: i64 = 180 * MICRO;
const FULL_TURN: i64 = 360 * MICRO;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FusionError {
    #[error("sensor stream is empty")]
    EmptyStream,
    #[error("length mismatch: {what} has {got} entries, expected {want}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        want: usize,
    },
    #[error("cannot build a tier scale from no values")]
    EmptyValues,
    #[error("invalid fusion config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub n_tiers: u32,
    /// Skeleton points used to estimate the first stroke's initial direction.
    pub ref_window_points: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            n_tiers: DEFAULT_N_TIERS,
            ref_window_points: 3,
        }
    }
}

impl FusionConfig {
    pub fn check(&self) -> Result<(), FusionError> {
        if self.n_tiers < 2 {
            return Err(FusionError::BadConfig("n_tiers must be >= 2".into()));
        }
        if self.ref_window_points < 2 {
            return Err(FusionError::BadConfig("ref_window_points must be >= 2".into()));
        }
        Ok(())
    }
}

/// Degrees to integer micro-degrees.
pub fn to_micro_deg(deg: f64) -> i64 {
    (deg * MICRO as f64).round() as i64
}

/// Wraps a micro-degree difference onto (-180, 180].
fn wrap_micro(d: i64) -> i64 {
    let r = d.rem_euclid(FULL_TURN);
    if r > HALF_TURN {
        r - FULL_TURN
    } else {
        r
    }
}

fn wrap_deg(d: f64) -> f64 {
    let r = d.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Integer division rounding half away from zero.
fn div_round(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    if num >= 0 {
        (num + den / 2) / den
    } else {
        -((-num + den / 2) / den)
    }
}

/// Sensor values interpolated at one skeleton time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttachedSample {
    /// Unwrapped yaw in micro-degrees, continuous along the whole stream.
    pub yaw_micro_deg: i64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    pub pressure: f64,
    /// The time was outside the stream and the nearest sample was used.
    pub extrapolated: bool,
}

impl AttachedSample {
    pub fn yaw_deg(&self) -> f64 {
        self.yaw_micro_deg as f64 / MICRO as f64
    }

    pub fn orientation(&self) -> Orientation {
        Orientation {
            yaw_deg: crate::model::normalize_yaw(self.yaw_deg()),
            pitch_deg: self.pitch_deg,
            roll_deg: self.roll_deg,
        }
    }

    pub fn pressure_raw(&self) -> u16 {
        self.pressure.round().clamp(0.0, f64::from(PRESSURE_MAX)) as u16
    }
}

struct Unwrapped {
    t: Vec<i64>,
    yaw: Vec<i64>,
    pitch: Vec<f64>,
    roll: Vec<f64>,
    pressure: Vec<f64>,
}

fn unwrap_stream(stream: &SensorStream) -> Unwrapped {
    let s = &stream.samples;
    let mut u = Unwrapped {
        t: Vec::with_capacity(s.len()),
        yaw: Vec::with_capacity(s.len()),
        pitch: Vec::with_capacity(s.len()),
        roll: Vec::with_capacity(s.len()),
        pressure: Vec::with_capacity(s.len()),
    };
    for (i, smp) in s.iter().enumerate() {
        let o = smp.orientation;
        let y = to_micro_deg(o.yaw_deg);
        if i == 0 {
            u.yaw.push(y);
            u.pitch.push(o.pitch_deg);
            u.roll.push(o.roll_deg);
        } else {
            let py = to_micro_deg(s[i - 1].orientation.yaw_deg);
            u.yaw.push(u.yaw[i - 1] + wrap_micro(y - py));
            u.pitch.push(u.pitch[i - 1] + wrap_deg(o.pitch_deg - s[i - 1].orientation.pitch_deg));
            u.roll.push(u.roll[i - 1] + wrap_deg(o.roll_deg - s[i - 1].orientation.roll_deg));
        }
        u.t.push(smp.t_ms);
        u.pressure.push(f64::from(smp.pressure_raw));
    }
    u
}

/// Samples the sensor stream at each time: linear between bracketing
/// samples (angles on their unwrapped series), nearest sample outside.
pub fn attach_sensor_at(times: &[i64], stream: &SensorStream) -> Result<Vec<AttachedSample>, FusionError> {
    if stream.is_empty() {
        return Err(FusionError::EmptyStream);
    }
    let u = unwrap_stream(stream);
    let last = u.t.len() - 1;
    Ok(times
        .iter()
        .map(|&t| {
            let at = |i: usize, extrapolated| AttachedSample {
                yaw_micro_deg: u.yaw[i],
                pitch_deg: u.pitch[i],
                roll_deg: u.roll[i],
                pressure: u.pressure[i],
                extrapolated,
            };
            if t <= u.t[0] {
                return at(0, t < u.t[0]);
            }
            if t >= u.t[last] {
                return at(last, t > u.t[last]);
            }
            // u.t[i] <= t < u.t[i + 1]
            let i = u.t.partition_point(|&x| x <= t) - 1;
            if u.t[i] == t {
                return at(i, false);
            }
            let num = i128::from(t - u.t[i]);
            let den = i128::from(u.t[i + 1] - u.t[i]);
            let w = num as f64 / den as f64;
            let lerp = |v: &[f64]| v[i] + (v[i + 1] - v[i]) * w;
            AttachedSample {
                yaw_micro_deg: u.yaw[i] + div_round(i128::from(u.yaw[i + 1] - u.yaw[i]) * num, den) as i64,
                pitch_deg: lerp(&u.pitch),
                roll_deg: lerp(&u.roll),
                pressure: lerp(&u.pressure),
                extrapolated: false,
            }
        })
        .collect())
}

pub fn attach_sensor(sk: &RawSkeleton, stream: &SensorStream) -> Result<Vec<AttachedSample>, FusionError> {
    attach_sensor_at(&sk.times(), stream)
}

/// Brush axis `Rz(yaw) Ry(pitch) Rx(roll) e_z` projected onto the paper.
pub fn tilt_projection(o: &Orientation) -> Vec2 {
    let (sy, cy) = o.yaw_deg.to_radians().sin_cos();
    let (sp, _) = o.pitch_deg.to_radians().sin_cos();
    let (sr, cr) = o.roll_deg.to_radians().sin_cos();
    Vec2::new(cy * sp * cr + sy * sr, sy * sp * cr - cy * sr)
}

/// Rotation relative to the first point, from yaw in micro-degrees.
pub fn relative_rotation_micro(yaws: &[i64]) -> Vec<f64> {
    let mut acc = 0i64;
    yaws.iter()
        .enumerate()
        .map(|(i, &y)| {
            if i > 0 {
                acc += wrap_micro(y - yaws[i - 1]);
            }
            acc as f64 / MICRO as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrokeRotation {
    pub rotation_deg: Vec<f64>,
    /// Display zero direction for arrow glyphs: the reverse of the first
    /// stroke's initial advance. Only set for the first stroke.
    pub zero_direction: Option<Vec2>,
}

/// Reverse of the initial advance direction over the first `window` points.
pub fn initial_reference_direction(sk: &RawSkeleton, window: usize) -> Option<Vec2> {
    let p = &sk.points;
    if p.len() < 2 {
        return None;
    }
    let k = window.min(p.len()).max(2) - 1;
    let d = p[0].centroid - p[k].centroid;
    let n = d.norm();
    (n > 0.0).then(|| d * (1.0 / n))
}

/// Per-stroke rotation calibrated to zero at the stroke's first point.
pub fn relative_rotation(
    yaws_deg: &[f64],
    stroke_skeleton: &RawSkeleton,
    is_first_stroke: bool,
    cfg: &FusionConfig,
) -> Result<StrokeRotation, FusionError> {
    if yaws_deg.len() != stroke_skeleton.len() {
        return Err(FusionError::LengthMismatch {
            what: "yaws",
            got: yaws_deg.len(),
            want: stroke_skeleton.len(),
        });
    }
    let micro: Vec<i64> = yaws_deg.iter().map(|&y| to_micro_deg(y)).collect();
    Ok(StrokeRotation {
        rotation_deg: relative_rotation_micro(&micro),
        zero_direction: if is_first_stroke {
            initial_reference_direction(stroke_skeleton, cfg.ref_window_points)
        } else {
            None
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TierScope {
    Character,
    Stroke,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierScale {
    pub lo: f64,
    pub hi: f64,
    pub n: u32,
    pub scope: TierScope,
}

impl TierScale {
    pub fn to_doc(&self) -> crate::model::ScaleDoc {
        crate::model::ScaleDoc {
            lo: self.lo,
            hi: self.hi,
            n: self.n,
        }
    }
}

pub fn make_tier_scale<I>(values: I, scope: TierScope, n: u32) -> Result<TierScale, FusionError>
where
    I: IntoIterator<Item = f64>,
{
    if n < 2 {
        return Err(FusionError::BadConfig("tier count must be >= 2".into()));
    }
    let mut it = values.into_iter().filter(|v| v.is_finite());
    let first = it.next().ok_or(FusionError::EmptyValues)?;
    let (lo, hi) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok(TierScale { lo, hi, n, scope })
}

/// `floor((v - lo) / (hi - lo) * n)` clamped to `[0, n - 1]`; a flat scale gives 0.
pub fn tier(v: f64, scale: &TierScale) -> u32 {
    if scale.hi == scale.lo {
        return 0;
    }
    let f = ((v - scale.lo) / (scale.hi - scale.lo) * f64::from(scale.n)).floor();
    f.clamp(0.0, f64::from(scale.n - 1)) as u32
}

/// One stroke's geometry before enrichment.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeParts {
    pub contact: ContactInterval,
    pub skeleton: RawSkeleton,
    pub pixel_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionMeta {
    pub id: String,
    pub role: Role,
    pub character_label: String,
    pub canvas_w: u32,
    pub canvas_h: u32,
    pub frame_count: usize,
    pub config_fingerprint: String,
    pub glyph_mask: Option<String>,
    pub frames_dir: Option<String>,
}

/// Assembles a session: attaches sensors, derives tilt, rotation, speed and
/// arc position per point, and tiers pressure and speed over the whole
/// character.
pub fn enrich(
    meta: SessionMeta,
    strokes: Vec<StrokeParts>,
    stream: &SensorStream,
    cfg: &FusionConfig,
) -> Result<Session, FusionError> {
    cfg.check()?;
    let mut out = Vec::with_capacity(strokes.len());
    for (index, parts) in strokes.into_iter().enumerate() {
        let sk = &parts.skeleton;
        let attached = attach_sensor(sk, stream)?;
        let speeds = compute_speed(sk);
        let arc = arc_length_positions(sk);
        let yaws: Vec<i64> = attached.iter().map(|a| a.yaw_micro_deg).collect();
        let rotation = relative_rotation_micro(&yaws);
        let skeleton = sk
            .points
            .iter()
            .enumerate()
            .map(|(j, p)| EnrichedPoint {
                pos: p.centroid,
                t_ms: p.t_ms,
                speed_px_s: speeds[j],
                pressure_raw: attached[j].pressure_raw(),
                pressure_tier: 0,
                speed_tier: 0,
                tilt_proj: tilt_projection(&attached[j].orientation()),
                rotation_deg: rotation[j],
                arc_pos: arc.values[j],
            })
            .collect();
        out.push(Stroke {
            index,
            contact: ContactInterval {
                index,
                ..parts.contact
            },
            skeleton,
            pixel_count: parts.pixel_count,
        });
    }
    apply_character_tiers(&mut out, cfg.n_tiers)?;
    Ok(Session {
        schema_version: SCHEMA_VERSION.to_string(),
        id: meta.id,
        role: meta.role,
        character_label: meta.character_label,
        canvas_w: meta.canvas_w,
        canvas_h: meta.canvas_h,
        frame_count: meta.frame_count,
        config_fingerprint: meta.config_fingerprint,
        glyph_mask: meta.glyph_mask,
        frames_dir: meta.frames_dir,
        strokes: out,
    })
}

/// Character-scope scales for pressure and speed over every point of every stroke.
pub fn character_scales(strokes: &[Stroke], n: u32) -> Result<(TierScale, TierScale), FusionError> {
    let pts = || strokes.iter().flat_map(|s| s.skeleton.iter());
    Ok((
        make_tier_scale(pts().map(|p| f64::from(p.pressure_raw)), TierScope::Character, n)?,
        make_tier_scale(pts().map(|p| p.speed_px_s), TierScope::Character, n)?,
    ))
}

pub fn apply_character_tiers(strokes: &mut [Stroke], n: u32) -> Result<(), FusionError> {
    let (ps, ss) = character_scales(strokes, n)?;
    for p in strokes.iter_mut().flat_map(|s| s.skeleton.iter_mut()) {
        p.pressure_tier = tier(f64::from(p.pressure_raw), &ps);
        p.speed_tier = tier(p.speed_px_s, &ss);
    }
    Ok(())
}
