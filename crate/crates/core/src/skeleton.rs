//! Stroke central axis from per-frame ink increments, plus speed and
//! arc-length position along it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{TimedPixel, Vec2};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SkeletonError {
    #[error("stroke has no frame with enough new ink")]
    EmptyStroke,
    #[error("invalid skeleton config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkeletonConfig {
    /// Frames adding fewer pixels than this are skipped.
    pub min_increment_px: usize,
    /// A centroid further than this from the previous accepted one is an
    /// occlusion artifact.
    pub max_jump_px: f64,
    /// Odd moving-average width.
    pub smooth_window: usize,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        SkeletonConfig {
            min_increment_px: 4,
            max_jump_px: 40.0,
            smooth_window: 3,
        }
    }
}

impl SkeletonConfig {
    pub fn check(&self) -> Result<(), SkeletonError> {
        if self.min_increment_px < 1 {
            return Err(SkeletonError::BadConfig("min_increment_px must be >= 1".into()));
        }
        if !(self.max_jump_px > 0.0) {
            return Err(SkeletonError::BadConfig("max_jump_px must be > 0".into()));
        }
        if self.smooth_window == 0 || self.smooth_window % 2 == 0 {
            return Err(SkeletonError::BadConfig("smooth_window must be odd and >= 1".into()));
        }
        Ok(())
    }
}

/// Pixels that first became ink in one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameIncrement {
    pub t_ms: i64,
    pub pixels: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletonPoint {
    pub centroid: Vec2,
    pub t_ms: i64,
    /// Increment size; 0 for points filled in by interpolation.
    pub n_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawSkeleton {
    pub points: Vec<SkeletonPoint>,
}

impl RawSkeleton {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> Vec<i64> {
        self.points.iter().map(|p| p.t_ms).collect()
    }
}

/// Splits a stroke's timed pixels into one increment per frame, including
/// empty increments for frames inside the stroke's time span.
pub fn increments_by_frame(pixels: &[TimedPixel], frame_times: &[i64]) -> Vec<FrameIncrement> {
    let (Some(lo), Some(hi)) = (
        pixels.iter().map(|p| p.t_ms).min(),
        pixels.iter().map(|p| p.t_ms).max(),
    ) else {
        return Vec::new();
    };
    let mut out: Vec<FrameIncrement> = frame_times
        .iter()
        .filter(|&&t| (lo..=hi).contains(&t))
        .map(|&t_ms| FrameIncrement {
            t_ms,
            pixels: Vec::new(),
        })
        .collect();
    for p in pixels {
        if let Ok(i) = out.binary_search_by_key(&p.t_ms, |f| f.t_ms) {
            out[i].pixels.push((p.x, p.y));
        }
    }
    out
}

/// Mean of pixel centers (`+0.5` on each axis).
pub fn centroid(pixels: &[(u32, u32)]) -> Option<Vec2> {
    if pixels.is_empty() {
        return None;
    }
    let n = pixels.len() as f64;
    let (sx, sy) = pixels.iter().fold((0.0, 0.0), |(ax, ay), &(x, y)| {
        (ax + f64::from(x), ay + f64::from(y))
    });
    Some(Vec2::new(sx / n + 0.5, sy / n + 0.5))
}

/// Centered moving average; the window shrinks symmetrically at the ends so
/// the endpoints are kept as-is.
pub fn smooth(points: &[SkeletonPoint], window: usize) -> Vec<SkeletonPoint> {
    let half = window / 2;
    let n = points.len();
    (0..n)
        .map(|i| {
            let k = half.min(i).min(n - 1 - i);
            let span = &points[i - k..=i + k];
            let sum = span.iter().fold(Vec2::ZERO, |acc, p| acc + p.centroid);
            SkeletonPoint {
                centroid: sum * (1.0 / span.len() as f64),
                ..points[i]
            }
        })
        .collect()
}

/// Centroid skeleton of one stroke.
///
/// Small increments are skipped, centroids jumping more than `max_jump_px`
/// from the last accepted point are rejected, interior gaps are filled by
/// linear interpolation at the skipped frame times, and the result is
/// smoothed.
pub fn extract_skeleton(
    frames: &[FrameIncrement],
    cfg: &SkeletonConfig,
) -> Result<RawSkeleton, SkeletonError> {
    cfg.check()?;
    let mut accepted: Vec<(usize, SkeletonPoint)> = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        if f.pixels.len() < cfg.min_increment_px {
            continue;
        }
        let c = centroid(&f.pixels).expect("non-empty increment");
        if let Some((_, last)) = accepted.last() {
            if c.dist(last.centroid) > cfg.max_jump_px {
                log::debug!("rejecting centroid {c} at t={} (jump)", f.t_ms);
                continue;
            }
        }
        accepted.push((
            i,
            SkeletonPoint {
                centroid: c,
                t_ms: f.t_ms,
                n_pixels: f.pixels.len(),
            },
        ));
    }
    if accepted.is_empty() {
        return Err(SkeletonError::EmptyStroke);
    }

    let mut points = Vec::with_capacity(frames.len());
    for pair in accepted.windows(2) {
        let (ia, a) = pair[0];
        let (ib, b) = pair[1];
        points.push(a);
        let span = (b.t_ms - a.t_ms) as f64;
        for f in &frames[ia + 1..ib] {
            let w = (f.t_ms - a.t_ms) as f64 / span;
            points.push(SkeletonPoint {
                centroid: a.centroid.lerp(b.centroid, w),
                t_ms: f.t_ms,
                n_pixels: 0,
            });
        }
    }
    points.push(accepted[accepted.len() - 1].1);

    Ok(RawSkeleton {
        points: smooth(&points, cfg.smooth_window),
    })
}

/// Point-wise speed in px/s; the first point copies the second.
pub fn compute_speed(sk: &RawSkeleton) -> Vec<f64> {
    let p = &sk.points;
    let mut out = vec![0.0; p.len()];
    for i in 1..p.len() {
        let dt = (p[i].t_ms - p[i - 1].t_ms) as f64 / 1000.0;
        out[i] = p[i].centroid.dist(p[i - 1].centroid) / dt;
    }
    if p.len() > 1 {
        out[0] = out[1];
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArcPositions {
    pub values: Vec<f64>,
    /// Set when every point coincides; all values are then 0.
    pub degenerate: bool,
}

/// Cumulative chord length normalized to [0, 1].
pub fn arc_length_positions(sk: &RawSkeleton) -> ArcPositions {
    let p = &sk.points;
    let mut cum = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for (i, pt) in p.iter().enumerate() {
        if i > 0 {
            acc += pt.centroid.dist(p[i - 1].centroid);
        }
        cum.push(acc);
    }
    if acc > 0.0 {
        ArcPositions {
            values: cum.into_iter().map(|c| c / acc).collect(),
            degenerate: false,
        }
    } else {
        ArcPositions {
            values: vec![0.0; p.len()],
            degenerate: p.len() > 1,
        }
    }
}
