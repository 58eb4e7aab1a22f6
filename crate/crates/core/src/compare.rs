//! Teacher/student analytics: glyph extremity boxes, drag-overlay
//! transforms, stroke pairing, arc-position curve resampling, pressure
//! difference profiles and time-progress rows.

use thiserror::Error;

use crate::fusion::{make_tier_scale, FusionError, TierScope};
use crate::ingest::InkMask;
use crate::model::{
    ComparisonReport, ExtremityBox, GlyphComparison, MiZiGe, PressureComparison, ProgressPair,
    ProgressRowDoc, Rect, Role, Session, SpeedComparison, Stroke, StrokeMismatch, StrokePair,
    TierScales, Vec2,
};

pub const DEFAULT_SAMPLES: usize = 100;
pub const DEFAULT_GRID_MS: i64 = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("glyph has no ink")]
    EmptyGlyph,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("stroke is degenerate: {0}")]
    DegenerateStroke(String),
    #[error("{0} session has no strokes")]
    EmptySession(Role),
    #[error("need at least 2 curve samples and a positive grid step")]
    BadSampling,
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

/// Extremity ink pixels of a glyph: topmost (ties to smallest x), bottommost
/// (ties to smallest x), leftmost (ties to smallest y), rightmost (ties to
/// smallest y), and the rectangle spanned by them.
pub fn extremity_box(glyph: &InkMask) -> Result<ExtremityBox, CompareError> {
    let mut it = glyph.ink_pixels();
    let first = it.next().ok_or(CompareError::EmptyGlyph)?;
    let (mut top, mut bottom, mut left, mut right) = (first, first, first, first);
    // Row-major order: the first hit per row wins x ties, the first row wins y ties.
    for (x, y) in it {
        if y > bottom.1 {
            bottom = (x, y);
        }
        if x < left.0 {
            left = (x, y);
        }
        if x > right.0 {
            right = (x, y);
        }
        let _ = &mut top;
    }
    let v = |(x, y): (u32, u32)| Vec2::new(f64::from(x), f64::from(y));
    Ok(ExtremityBox {
        top: v(top),
        bottom: v(bottom),
        left: v(left),
        right: v(right),
        rect: Rect {
            left: f64::from(left.0),
            top: f64::from(top.1),
            right: f64::from(right.0),
            bottom: f64::from(bottom.1),
        },
    })
}

/// Pure translation applied to the student glyph when dragged over the teacher's.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OverlayTransform {
    pub dx: f64,
    pub dy: f64,
}

impl OverlayTransform {
    pub fn is_identity(&self) -> bool {
        self.dx == 0.0 && self.dy == 0.0
    }

    pub fn then(&self, next: &OverlayTransform) -> OverlayTransform {
        OverlayTransform {
            dx: self.dx + next.dx,
            dy: self.dy + next.dy,
        }
    }

    pub fn inverse(&self) -> OverlayTransform {
        OverlayTransform {
            dx: -self.dx,
            dy: -self.dy,
        }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        p + Vec2::new(self.dx, self.dy)
    }

    pub fn apply_box(&self, b: &ExtremityBox) -> ExtremityBox {
        b.translated(Vec2::new(self.dx, self.dy))
    }
}

pub fn overlay_transform(dx: f64, dy: f64) -> OverlayTransform {
    OverlayTransform { dx, dy }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    pub pairs: Vec<(usize, usize)>,
    pub mismatch: Vec<StrokeMismatch>,
}

/// Pairs strokes by order; unmatched strokes are reported, not errors.
pub fn pair_strokes(t: &Session, s: &Session) -> Pairing {
    let n = t.strokes.len().min(s.strokes.len());
    let extra = |side: Role, count: usize| {
        (n..count).map(move |index| StrokeMismatch { side, index })
    };
    Pairing {
        pairs: (0..n).map(|i| (i, i)).collect(),
        mismatch: extra(Role::Teacher, t.strokes.len())
            .chain(extra(Role::Student, s.strokes.len()))
            .collect(),
    }
}

/// Values on a uniform grid of arc positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub positions: Vec<f64>,
    pub values: Vec<f64>,
    /// The source stroke had no length; `values` is its mean.
    pub degenerate: bool,
}

fn uniform_positions(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Linear interpolation of `values` over non-decreasing `arc_pos`, sampled at
/// `n` uniform positions. Repeated positions resolve to the last value there.
pub fn resample_curve(arc_pos: &[f64], values: &[f64], n: usize) -> Result<Curve, CompareError> {
    if arc_pos.len() != values.len() {
        return Err(CompareError::LengthMismatch(arc_pos.len(), values.len()));
    }
    if n < 2 {
        return Err(CompareError::BadSampling);
    }
    if arc_pos.is_empty() {
        return Err(CompareError::DegenerateStroke("no points".into()));
    }
    let positions = uniform_positions(n);
    if arc_pos.iter().all(|&a| a == 0.0) {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        return Ok(Curve {
            values: vec![mean; n],
            positions,
            degenerate: true,
        });
    }
    let last = arc_pos.len() - 1;
    let values = positions
        .iter()
        .map(|&x| {
            let j = arc_pos.partition_point(|&a| a <= x);
            if j == 0 {
                return values[0];
            }
            let j = j - 1;
            if j == last {
                return values[last];
            }
            let w = (x - arc_pos[j]) / (arc_pos[j + 1] - arc_pos[j]);
            values[j] + (values[j + 1] - values[j]) * w
        })
        .collect();
    Ok(Curve {
        positions,
        values,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffProfile {
    /// student minus teacher
    pub diff: Curve,
    pub max_abs_diff: f64,
    pub argmax_pos: f64,
}

pub fn pressure_diff_profile(tc: &Curve, sc: &Curve) -> Result<DiffProfile, CompareError> {
    if tc.values.len() != sc.values.len() {
        return Err(CompareError::LengthMismatch(tc.values.len(), sc.values.len()));
    }
    let values: Vec<f64> = sc.values.iter().zip(&tc.values).map(|(s, t)| s - t).collect();
    let mut best = 0;
    for (i, d) in values.iter().enumerate() {
        if d.abs() > values[best].abs() {
            best = i;
        }
    }
    Ok(DiffProfile {
        max_abs_diff: values.get(best).map_or(0.0, |d| d.abs()),
        argmax_pos: tc.positions.get(best).copied().unwrap_or(0.0),
        diff: Curve {
            positions: tc.positions.clone(),
            values,
            degenerate: tc.degenerate || sc.degenerate,
        },
    })
}

/// Arc position sampled on a uniform time grid from the stroke's own start.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressRow {
    pub grid_ms: i64,
    pub times: Vec<i64>,
    pub arc_positions: Vec<f64>,
}

impl ProgressRow {
    pub fn to_doc(&self) -> ProgressRowDoc {
        ProgressRowDoc {
            grid_ms: self.grid_ms,
            arc: self.arc_positions.clone(),
        }
    }
}

/// Samples at `0, grid, 2 grid, ...` up to the first grid time at or past the
/// stroke duration; times past the end read arc position 1.
pub fn progress_row(stroke: &Stroke, grid_ms: i64) -> Result<ProgressRow, CompareError> {
    if grid_ms <= 0 {
        return Err(CompareError::BadSampling);
    }
    let pts = &stroke.skeleton;
    let duration = stroke.duration_ms();
    if pts.len() < 2 || duration <= 0 {
        return Err(CompareError::DegenerateStroke(format!(
            "stroke {} has no duration",
            stroke.index
        )));
    }
    let t0 = pts[0].t_ms;
    let steps = (duration + grid_ms - 1) / grid_ms;
    let times: Vec<i64> = (0..=steps).map(|k| k * grid_ms).collect();
    let arc_positions = times
        .iter()
        .map(|&rel| {
            let t = t0 + rel;
            let j = pts.partition_point(|p| p.t_ms <= t);
            if j >= pts.len() {
                return pts[pts.len() - 1].arc_pos;
            }
            let (a, b) = (&pts[j - 1], &pts[j]);
            let w = (t - a.t_ms) as f64 / (b.t_ms - a.t_ms) as f64;
            a.arc_pos + (b.arc_pos - a.arc_pos) * w
        })
        .collect();
    Ok(ProgressRow {
        grid_ms,
        times,
        arc_positions,
    })
}

pub fn progress_rows(
    t_stroke: &Stroke,
    s_stroke: &Stroke,
    grid_ms: i64,
) -> Result<(ProgressRow, ProgressRow), CompareError> {
    Ok((progress_row(t_stroke, grid_ms)?, progress_row(s_stroke, grid_ms)?))
}

/// A processed session together with its glyph mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphSession {
    pub session: Session,
    pub glyph: InkMask,
}

fn stroke_curve(
    stroke: &Stroke,
    n: usize,
    value: impl Fn(&crate::model::EnrichedPoint) -> f64,
) -> Result<Curve, CompareError> {
    let arc: Vec<f64> = stroke.skeleton.iter().map(|p| p.arc_pos).collect();
    let vals: Vec<f64> = stroke.skeleton.iter().map(value).collect();
    resample_curve(&arc, &vals, n)
}

fn row_or_stub(stroke: &Stroke, grid_ms: i64) -> Result<ProgressRowDoc, CompareError> {
    match progress_row(stroke, grid_ms) {
        Ok(r) => Ok(r.to_doc()),
        Err(CompareError::DegenerateStroke(_)) => Ok(ProgressRowDoc {
            grid_ms,
            arc: vec![0.0],
        }),
        Err(e) => Err(e),
    }
}

fn pair_report(
    index: usize,
    t: &Stroke,
    s: &Stroke,
    n: usize,
    grid_ms: i64,
    n_tiers: u32,
) -> Result<StrokePair, CompareError> {
    let pressure = |p: &crate::model::EnrichedPoint| f64::from(p.pressure_raw);
    let speed = |p: &crate::model::EnrichedPoint| p.speed_px_s;
    let tp = stroke_curve(t, n, pressure)?;
    let sp = stroke_curve(s, n, pressure)?;
    let diff = pressure_diff_profile(&tp, &sp)?;
    let tv = stroke_curve(t, n, speed)?;
    let sv = stroke_curve(s, n, speed)?;
    let both = || t.skeleton.iter().chain(s.skeleton.iter());
    let pressure_scale = make_tier_scale(both().map(pressure), TierScope::Stroke, n_tiers)?;
    let speed_scale = make_tier_scale(both().map(speed), TierScope::Stroke, n_tiers)?;
    Ok(StrokePair {
        index,
        pressure: PressureComparison {
            teacher: tp.values,
            student: sp.values,
            diff: diff.diff.values,
            max_abs_diff: diff.max_abs_diff,
            argmax_pos: diff.argmax_pos,
        },
        speed: SpeedComparison {
            teacher: tv.values,
            student: sv.values,
        },
        progress: ProgressPair {
            teacher: row_or_stub(t, grid_ms)?,
            student: row_or_stub(s, grid_ms)?,
        },
        tiers: TierScales {
            pressure_scale: pressure_scale.to_doc(),
            speed_scale: speed_scale.to_doc(),
        },
    })
}

/// Builds the full comparison report for a teacher/student pair.
pub fn build_report(
    t: &GlyphSession,
    s: &GlyphSession,
    n: usize,
    grid_ms: i64,
) -> Result<ComparisonReport, CompareError> {
    build_report_with_tiers(t, s, n, grid_ms, crate::fusion::DEFAULT_N_TIERS)
}

pub fn build_report_with_tiers(
    t: &GlyphSession,
    s: &GlyphSession,
    n: usize,
    grid_ms: i64,
    n_tiers: u32,
) -> Result<ComparisonReport, CompareError> {
    if n < 2 || grid_ms <= 0 {
        return Err(CompareError::BadSampling);
    }
    if t.session.strokes.is_empty() {
        return Err(CompareError::EmptySession(Role::Teacher));
    }
    if s.session.strokes.is_empty() {
        return Err(CompareError::EmptySession(Role::Student));
    }
    let pairing = pair_strokes(&t.session, &s.session);
    let pairs = pairing
        .pairs
        .iter()
        .map(|&(i, j)| {
            pair_report(
                i,
                &t.session.strokes[i],
                &s.session.strokes[j],
                n,
                grid_ms,
                n_tiers,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ComparisonReport {
        teacher_id: t.session.id.clone(),
        student_id: s.session.id.clone(),
        stroke_count: pairs.len(),
        mismatch: pairing.mismatch,
        pairs,
        glyph: GlyphComparison {
            teacher_box: extremity_box(&t.glyph)?,
            student_box: extremity_box(&s.glyph)?,
            mizige: MiZiGe {
                size: t.session.canvas_w.max(t.session.canvas_h),
            },
        },
    })
}
