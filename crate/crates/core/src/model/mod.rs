//! Core domain types shared by every pipeline stage.
//!
//! All coordinates live in the rectified top-down canvas (pixels, `y` grows
//! downward) and all times are integer milliseconds on the unified session
//! clock, whose origin is the first overhead frame.

mod report;
mod session;

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{
    ComparisonReport, ExtremityBox, GlyphComparison, MiZiGe, PressureComparison, ProgressPair,
    ProgressRowDoc, Rect, ScaleDoc, SpeedComparison, StrokeMismatch, StrokePair, TierScales,
};
pub use session::{serialize_session, validate_session, validate_session_with, ValidationLimits};

/// Version tag written into every session document.
pub const SCHEMA_VERSION: &str = "1";

/// Largest value the 10-bit pressure ADC can report.
pub const PRESSURE_MAX: u16 = 1023;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("schema error at `{path}`: {msg}")]
    Schema { path: String, msg: String },
    #[error("invariant violated at `{path}`: {msg}")]
    Invariant { path: String, msg: String },
}

impl ModelError {
    pub(crate) fn invariant(path: impl Into<String>, msg: impl Into<String>) -> Self {
        ModelError::Invariant {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn path(&self) -> &str {
        match self {
            ModelError::Schema { path, .. } | ModelError::Invariant { path, .. } => path,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn lerp(self, other: Vec2, w: f64) -> Vec2 {
        Vec2::new(
            self.x + (other.x - self.x) * w,
            self.y + (other.y - self.y) * w,
        )
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Maps any finite angle in degrees onto (-180, 180].
pub fn normalize_yaw(deg: f64) -> f64 {
    let y = deg.rem_euclid(360.0);
    if y > 180.0 {
        y - 360.0
    } else {
        y
    }
}

/// Brush-head attitude as reported by the IMU, intrinsic Z-Y-X Euler angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
}

impl Orientation {
    pub fn new(yaw_deg: f64, pitch_deg: f64, roll_deg: f64) -> Result<Self, ModelError> {
        if !(yaw_deg.is_finite() && pitch_deg.is_finite() && roll_deg.is_finite()) {
            return Err(ModelError::invariant("orientation", "non-finite angle"));
        }
        if !(-90.0..=90.0).contains(&pitch_deg) {
            return Err(ModelError::invariant(
                "orientation.pitch_deg",
                format!("pitch {pitch_deg} outside [-90, 90]"),
            ));
        }
        Ok(Orientation {
            yaw_deg: normalize_yaw(yaw_deg),
            pitch_deg,
            roll_deg,
        })
    }

    pub const fn level() -> Self {
        Orientation {
            yaw_deg: 0.0,
            pitch_deg: 0.0,
            roll_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSample {
    pub t_ms: i64,
    pub orientation: Orientation,
    pub pressure_raw: u16,
}

impl SensorSample {
    pub fn new(t_ms: i64, orientation: Orientation, pressure_raw: u16) -> Result<Self, ModelError> {
        if pressure_raw > PRESSURE_MAX {
            return Err(ModelError::invariant(
                "pressure_raw",
                format!("{pressure_raw} outside [0, {PRESSURE_MAX}]"),
            ));
        }
        Ok(SensorSample {
            t_ms,
            orientation,
            pressure_raw,
        })
    }
}

/// Time-ordered orientation and pressure samples from the brush.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorStream {
    pub samples: Vec<SensorSample>,
}

impl SensorStream {
    /// Builds a stream, rejecting non-increasing timestamps.
    pub fn new(samples: Vec<SensorSample>) -> Result<Self, ModelError> {
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].t_ms <= w[0].t_ms {
                return Err(ModelError::invariant(
                    format!("samples[{}].t_ms", i + 1),
                    "sensor times must be strictly increasing",
                ));
            }
        }
        Ok(SensorStream { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Shifts every timestamp by `offset_ms`.
    pub fn shifted(&self, offset_ms: i64) -> SensorStream {
        SensorStream {
            samples: self
                .samples
                .iter()
                .map(|s| SensorSample {
                    t_ms: s.t_ms + offset_ms,
                    ..*s
                })
                .collect(),
        }
    }
}

/// One pen-down interval; `index` is the 0-based stroke order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactInterval {
    pub index: usize,
    pub start_ms: i64,
    pub end_ms: i64,
}

impl ContactInterval {
    pub fn duration_ms(&self) -> i64 {
        self.end_ms - self.start_ms
    }

    pub fn contains(&self, t_ms: i64) -> bool {
        (self.start_ms..=self.end_ms).contains(&t_ms)
    }
}

/// An ink pixel with the time it first appeared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimedPixel {
    pub x: u32,
    pub y: u32,
    pub t_ms: i64,
}

impl TimedPixel {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(f64::from(self.x), f64::from(self.y))
    }
}

/// A skeleton point carrying every per-point measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnrichedPoint {
    pub pos: Vec2,
    pub t_ms: i64,
    pub speed_px_s: f64,
    pub pressure_raw: u16,
    pub pressure_tier: u32,
    pub speed_tier: u32,
    /// Brush axis projected onto the paper; magnitude is sin(tilt from vertical).
    pub tilt_proj: Vec2,
    /// Spin about the handle relative to the stroke's first point.
    pub rotation_deg: f64,
    pub arc_pos: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stroke {
    pub index: usize,
    pub contact: ContactInterval,
    pub skeleton: Vec<EnrichedPoint>,
    pub pixel_count: usize,
}

impl Stroke {
    pub fn duration_ms(&self) -> i64 {
        match (self.skeleton.first(), self.skeleton.last()) {
            (Some(a), Some(b)) => b.t_ms - a.t_ms,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Teacher,
    Student,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Teacher => "teacher",
            Role::Student => "student",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "teacher" => Ok(Role::Teacher),
            "student" => Ok(Role::Student),
            other => Err(format!("unknown role `{other}` (expected teacher or student)")),
        }
    }
}

/// One processed writing of one character.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub schema_version: String,
    pub id: String,
    pub role: Role,
    pub character_label: String,
    pub canvas_w: u32,
    pub canvas_h: u32,
    pub frame_count: usize,
    pub config_fingerprint: String,
    /// Sidecar glyph mask file name, relative to the session file.
    pub glyph_mask: Option<String>,
    /// Directory of retained rectified frames, relative to the session file.
    pub frames_dir: Option<String>,
    pub strokes: Vec<Stroke>,
}

impl Session {
    pub fn point_count(&self) -> usize {
        self.strokes.iter().map(|s| s.skeleton.len()).sum()
    }
}
