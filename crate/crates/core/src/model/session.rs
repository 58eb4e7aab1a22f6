//! Session JSON document (schema v"1"): closed wire format, validation and
//! byte-stable serialization.

use serde::{Deserialize, Serialize};

use super::{
    ContactInterval, EnrichedPoint, ModelError, Role, Session, Stroke, Vec2, PRESSURE_MAX,
    SCHEMA_VERSION,
};

const TILT_SLACK: f64 = 1e-9;

/// Bounds that depend on the processing configuration rather than on the
/// document itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationLimits {
    /// Skeleton points may precede their contact start by this much.
    pub pre_ms: i64,
    /// Skeleton points may trail their contact end by this much (pen-up slack).
    pub post_ms: i64,
    pub n_tiers: u32,
}

impl Default for ValidationLimits {
    fn default() -> Self {
        ValidationLimits {
            pre_ms: 0,
            post_ms: crate::segment::DEFAULT_SLACK_MS,
            n_tiers: crate::fusion::DEFAULT_N_TIERS,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionDoc {
    schema_version: String,
    id: String,
    role: Role,
    character_label: String,
    canvas: CanvasDoc,
    frame_count: u64,
    config_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    glyph_mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frames_dir: Option<String>,
    strokes: Vec<StrokeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanvasDoc {
    w: u32,
    h: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrokeDoc {
    index: u64,
    contact: ContactDoc,
    skeleton: Vec<PointDoc>,
    pixel_count: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContactDoc {
    start_ms: i64,
    end_ms: i64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointDoc {
    x: f64,
    y: f64,
    t_ms: i64,
    speed_px_s: f64,
    pressure_raw: u16,
    pressure_tier: u32,
    speed_tier: u32,
    tilt: TiltDoc,
    rotation_deg: f64,
    arc_pos: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TiltDoc {
    dx: f64,
    dy: f64,
}

/// Parses and validates a session document with default limits.
pub fn validate_session(doc: &str) -> Result<Session, ModelError> {
    validate_session_with(doc, &ValidationLimits::default())
}

pub fn validate_session_with(doc: &str, limits: &ValidationLimits) -> Result<Session, ModelError> {
    let de = &mut serde_json::Deserializer::from_str(doc);
    let parsed: SessionDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ModelError::Schema {
            path,
            msg: e.into_inner().to_string(),
        }
    })?;
    let session = from_doc(parsed)?;
    check_session(&session, limits)?;
    Ok(session)
}

/// Serializes with fixed key order, two-space indentation and a trailing LF.
pub fn serialize_session(s: &Session) -> String {
    let mut out = serde_json::to_string_pretty(&to_doc(s)).expect("session doc serializes");
    out.push('\n');
    out
}

fn from_doc(doc: SessionDoc) -> Result<Session, ModelError> {
    if doc.schema_version != SCHEMA_VERSION {
        return Err(ModelError::Schema {
            path: "schema_version".into(),
            msg: format!(
                "unsupported schema version `{}` (expected `{SCHEMA_VERSION}`)",
                doc.schema_version
            ),
        });
    }
    let strokes = doc
        .strokes
        .into_iter()
        .map(|s| Stroke {
            index: s.index as usize,
            contact: ContactInterval {
                index: s.index as usize,
                start_ms: s.contact.start_ms,
                end_ms: s.contact.end_ms,
            },
            skeleton: s
                .skeleton
                .into_iter()
                .map(|p| EnrichedPoint {
                    pos: Vec2::new(p.x, p.y),
                    t_ms: p.t_ms,
                    speed_px_s: p.speed_px_s,
                    pressure_raw: p.pressure_raw,
                    pressure_tier: p.pressure_tier,
                    speed_tier: p.speed_tier,
                    tilt_proj: Vec2::new(p.tilt.dx, p.tilt.dy),
                    rotation_deg: p.rotation_deg,
                    arc_pos: p.arc_pos,
                })
                .collect(),
            pixel_count: s.pixel_count as usize,
        })
        .collect();
    Ok(Session {
        schema_version: doc.schema_version,
        id: doc.id,
        role: doc.role,
        character_label: doc.character_label,
        canvas_w: doc.canvas.w,
        canvas_h: doc.canvas.h,
        frame_count: doc.frame_count as usize,
        config_fingerprint: doc.config_fingerprint,
        glyph_mask: doc.glyph_mask,
        frames_dir: doc.frames_dir,
        strokes,
    })
}

fn to_doc(s: &Session) -> SessionDoc {
    SessionDoc {
        schema_version: s.schema_version.clone(),
        id: s.id.clone(),
        role: s.role,
        character_label: s.character_label.clone(),
        canvas: CanvasDoc {
            w: s.canvas_w,
            h: s.canvas_h,
        },
        frame_count: s.frame_count as u64,
        config_fingerprint: s.config_fingerprint.clone(),
        glyph_mask: s.glyph_mask.clone(),
        frames_dir: s.frames_dir.clone(),
        strokes: s
            .strokes
            .iter()
            .map(|st| StrokeDoc {
                index: st.index as u64,
                contact: ContactDoc {
                    start_ms: st.contact.start_ms,
                    end_ms: st.contact.end_ms,
                },
                skeleton: st
                    .skeleton
                    .iter()
                    .map(|p| PointDoc {
                        x: p.pos.x,
                        y: p.pos.y,
                        t_ms: p.t_ms,
                        speed_px_s: p.speed_px_s,
                        pressure_raw: p.pressure_raw,
                        pressure_tier: p.pressure_tier,
                        speed_tier: p.speed_tier,
                        tilt: TiltDoc {
                            dx: p.tilt_proj.x,
                            dy: p.tilt_proj.y,
                        },
                        rotation_deg: p.rotation_deg,
                        arc_pos: p.arc_pos,
                    })
                    .collect(),
                pixel_count: st.pixel_count as u64,
            })
            .collect(),
    }
}

/// Checks every session-level and per-point invariant.
pub(crate) fn check_session(s: &Session, limits: &ValidationLimits) -> Result<(), ModelError> {
    if s.canvas_w == 0 || s.canvas_h == 0 {
        return Err(ModelError::invariant("canvas", "canvas dimensions must be positive"));
    }
    if s.strokes.is_empty() {
        return Err(ModelError::invariant("strokes", "at least one stroke is required"));
    }
    let mut prev_contact: Option<ContactInterval> = None;
    for (i, st) in s.strokes.iter().enumerate() {
        let base = format!("strokes[{i}]");
        if st.index != i {
            return Err(ModelError::invariant(
                format!("{base}.index"),
                format!("stroke index gap: expected {i}, found {}", st.index),
            ));
        }
        if st.contact.start_ms >= st.contact.end_ms {
            return Err(ModelError::invariant(
                format!("{base}.contact"),
                "contact start_ms must precede end_ms",
            ));
        }
        if let Some(prev) = prev_contact {
            if st.contact.start_ms <= prev.end_ms {
                return Err(ModelError::invariant(
                    format!("{base}.contact"),
                    "contact overlaps or precedes the previous stroke",
                ));
            }
        }
        prev_contact = Some(st.contact);
        check_skeleton(&base, st, limits)?;
    }
    Ok(())
}

fn check_skeleton(base: &str, st: &Stroke, limits: &ValidationLimits) -> Result<(), ModelError> {
    let pts = &st.skeleton;
    if pts.is_empty() {
        return Err(ModelError::invariant(format!("{base}.skeleton"), "skeleton is empty"));
    }
    let lo = st.contact.start_ms - limits.pre_ms;
    let hi = st.contact.end_ms + limits.post_ms;
    let all_zero_arc = pts.iter().all(|p| p.arc_pos == 0.0);
    for (j, p) in pts.iter().enumerate() {
        let path = format!("{base}.skeleton[{j}]");
        let finite = p.pos.is_finite()
            && p.speed_px_s.is_finite()
            && p.tilt_proj.is_finite()
            && p.rotation_deg.is_finite()
            && p.arc_pos.is_finite();
        if !finite {
            return Err(ModelError::invariant(path, "non-finite value"));
        }
        if p.speed_px_s < 0.0 {
            return Err(ModelError::invariant(format!("{path}.speed_px_s"), "speed must be >= 0"));
        }
        if p.pressure_raw > PRESSURE_MAX {
            return Err(ModelError::invariant(
                format!("{path}.pressure_raw"),
                format!("pressure outside [0, {PRESSURE_MAX}]"),
            ));
        }
        if p.pressure_tier >= limits.n_tiers {
            return Err(ModelError::invariant(format!("{path}.pressure_tier"), "tier out of range"));
        }
        if p.speed_tier >= limits.n_tiers {
            return Err(ModelError::invariant(format!("{path}.speed_tier"), "tier out of range"));
        }
        if p.tilt_proj.norm() > 1.0 + TILT_SLACK {
            return Err(ModelError::invariant(format!("{path}.tilt"), "tilt projection longer than 1"));
        }
        if !(0.0..=1.0).contains(&p.arc_pos) {
            return Err(ModelError::invariant(format!("{path}.arc_pos"), "arc_pos outside [0, 1]"));
        }
        if p.t_ms < lo || p.t_ms > hi {
            return Err(ModelError::invariant(
                format!("{path}.t_ms"),
                format!("time {} outside contact window [{lo}, {hi}]", p.t_ms),
            ));
        }
        if j > 0 {
            let prev = &pts[j - 1];
            if p.t_ms <= prev.t_ms {
                return Err(ModelError::invariant(
                    format!("{path}.t_ms"),
                    "skeleton times must be strictly increasing",
                ));
            }
            if p.arc_pos < prev.arc_pos {
                return Err(ModelError::invariant(format!("{path}.arc_pos"), "arc_pos decreases"));
            }
        }
    }
    if pts[0].arc_pos != 0.0 {
        return Err(ModelError::invariant(format!("{base}.skeleton[0].arc_pos"), "first arc_pos must be 0"));
    }
    let last = pts.len() - 1;
    if last > 0 && !all_zero_arc && pts[last].arc_pos != 1.0 {
        return Err(ModelError::invariant(
            format!("{base}.skeleton[{last}].arc_pos"),
            "last arc_pos must be 1",
        ));
    }
    Ok(())
}
