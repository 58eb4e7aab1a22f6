//! End-to-end processing of one capture: manifest in, session file and glyph
//! mask out. Also loads processed sessions back for comparison.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::compare::GlyphSession;
use crate::fusion::{enrich, FusionConfig, FusionError, SessionMeta, StrokeParts};
use crate::ingest::{
    binarize, encode_png, load_inputs, read_gray, write_pgm, FrameManifest, IngestError, InkMask,
    DEFAULT_INK_THRESHOLD,
};
use crate::model::{serialize_session, validate_session_with, ModelError, Role, Session, ValidationLimits};
use crate::segment::{
    detect_contacts, group_strokes, timestamp_pixels, ContactConfig, SegmentConfig, SegmentError,
};
use crate::skeleton::{extract_skeleton, increments_by_frame, SkeletonConfig, SkeletonError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub ink_threshold: u8,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            ink_threshold: DEFAULT_INK_THRESHOLD,
        }
    }
}

/// Every tunable of the pipeline, loadable from one JSON file.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub ingest: IngestConfig,
    pub contact: ContactConfig,
    pub segment: SegmentConfig,
    pub skeleton: SkeletonConfig,
    pub fusion: FusionConfig,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: PipelineConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| PipelineError::Config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let cfg = |e: String| PipelineError::Config(e);
        if self.ingest.ink_threshold == 0 {
            return Err(cfg("ingest.ink_threshold must be > 0".into()));
        }
        self.contact.check().map_err(|e| cfg(e.to_string()))?;
        if self.segment.slack_ms < 0 {
            return Err(cfg("segment.slack_ms must be >= 0".into()));
        }
        self.skeleton.check().map_err(|e| cfg(e.to_string()))?;
        self.fusion.check().map_err(|e| cfg(e.to_string()))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validation_limits(&self) -> ValidationLimits {
        ValidationLimits {
            pre_ms: 0,
            post_ms: self.segment.slack_ms,
            n_tiers: self.fusion.n_tiers,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("segment: {0}")]
    Segment(#[from] SegmentError),
    #[error("skeleton: {0}")]
    Skeleton(String),
    #[error("fusion: {0}")]
    Fusion(#[from] FusionError),
    #[error("output: {0}")]
    Output(String),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Ingest(_) => "ingest",
            PipelineError::Segment(_) => "segment",
            PipelineError::Skeleton(_) => "skeleton",
            PipelineError::Fusion(_) => "fusion",
            PipelineError::Output(_) => "output",
        }
    }

    /// Bad or missing inputs, as opposed to a failure while processing them.
    pub fn is_input_error(&self) -> bool {
        matches!(self, PipelineError::Config(_) | PipelineError::Ingest(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessOptions {
    pub id: String,
    pub role: Role,
    pub character_label: String,
    pub keep_frames: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunSummary {
    pub strokes: usize,
    pub points: usize,
    pub discarded_px: usize,
    pub dropped_strokes: usize,
    pub dropped_sensor: usize,
    pub dropped_tip: usize,
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "strokes={} points={} discarded_px={}",
            self.strokes, self.points, self.discarded_px
        )
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub session: Session,
    pub glyph: InkMask,
    /// Rectified frames, kept only when requested.
    pub frames: Vec<image::GrayImage>,
    pub summary: RunSummary,
}

/// Sidecar names derived from the session file name.
pub fn sidecar_names(out_path: &Path) -> (String, String) {
    let stem = out_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "session".into());
    (format!("{stem}.mask.pgm"), format!("{stem}.frames"))
}

pub fn frame_png_name(k: usize) -> String {
    format!("{k:05}.png")
}

/// Runs every stage for the capture described by `manifest_path`. Nothing is
/// written; `out_path` only names the sidecars recorded in the session.
pub fn run(
    manifest_path: &Path,
    cfg: &PipelineConfig,
    out_path: &Path,
    opts: &ProcessOptions,
) -> Result<PipelineRun, PipelineError> {
    cfg.check()?;
    let manifest = FrameManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let inputs = load_inputs(&manifest, base, cfg.ingest.ink_threshold)?;
    log::info!(
        "ingest: {} frames, {} sensor and {} tip samples ({} and {} outside the frame window)",
        inputs.masks.len(),
        inputs.sensor.len(),
        inputs.tip.samples.len(),
        inputs.dropped_sensor,
        inputs.dropped_tip
    );

    let contacts = detect_contacts(&inputs.tip, &cfg.contact)?;
    let pixels = timestamp_pixels(&inputs.masks)?;
    let groups = group_strokes(&pixels, &contacts, cfg.segment.slack_ms)?;
    log::info!(
        "segment: {} contacts, {} pixels assigned, {} discarded",
        contacts.len(),
        groups.assigned(),
        groups.discarded
    );

    let frame_times: Vec<i64> = manifest.frames.iter().map(|f| f.t_ms).collect();
    let mut parts = Vec::new();
    let mut dropped_strokes = 0;
    for (contact, px) in contacts.iter().zip(&groups.strokes) {
        let incs = increments_by_frame(px, &frame_times);
        match extract_skeleton(&incs, &cfg.skeleton) {
            Ok(skeleton) => parts.push(StrokeParts {
                contact: *contact,
                skeleton,
                pixel_count: px.len(),
            }),
            Err(SkeletonError::EmptyStroke) => {
                log::warn!(
                    "skeleton: contact {}..{} ms has no usable ink; dropped",
                    contact.start_ms,
                    contact.end_ms
                );
                dropped_strokes += 1;
            }
            Err(e) => return Err(PipelineError::Skeleton(e.to_string())),
        }
    }
    if parts.is_empty() {
        return Err(PipelineError::Skeleton("no contact produced a skeleton".into()));
    }

    let (mask_name, frames_name) = sidecar_names(out_path);
    let meta = SessionMeta {
        id: opts.id.clone(),
        role: opts.role,
        character_label: opts.character_label.clone(),
        canvas_w: manifest.dst_size.w,
        canvas_h: manifest.dst_size.h,
        frame_count: manifest.frames.len(),
        config_fingerprint: cfg.fingerprint(),
        glyph_mask: Some(mask_name),
        frames_dir: opts.keep_frames.then_some(frames_name),
    };
    let session = enrich(meta, parts, &inputs.sensor, &cfg.fusion)?;
    let summary = RunSummary {
        strokes: session.strokes.len(),
        points: session.point_count(),
        discarded_px: groups.discarded,
        dropped_strokes,
        dropped_sensor: inputs.dropped_sensor,
        dropped_tip: inputs.dropped_tip,
    };
    Ok(PipelineRun {
        session,
        glyph: pixels.glyph(),
        frames: if opts.keep_frames { inputs.frames } else { Vec::new() },
        summary,
    })
}

/// Writes the session, its glyph mask and (if kept) the rectified frames.
/// The serialized session is checked against the schema before writing.
pub fn write_outputs(out_path: &Path, run: &PipelineRun, limits: &ValidationLimits) -> Result<(), PipelineError> {
    let out = |e: String| PipelineError::Output(e);
    let doc = serialize_session(&run.session);
    validate_session_with(&doc, limits).map_err(|e| out(format!("produced an invalid session: {e}")))?;
    let dir = out_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| out(format!("{}: {e}", dir.display())))?;
    if let Some(mask) = &run.session.glyph_mask {
        let p = dir.join(mask);
        write_pgm(&p, &run.glyph.to_image()).map_err(|e| out(format!("{}: {e}", p.display())))?;
    }
    if let Some(frames) = &run.session.frames_dir {
        let fdir = dir.join(frames);
        std::fs::create_dir_all(&fdir).map_err(|e| out(format!("{}: {e}", fdir.display())))?;
        for (k, img) in run.frames.iter().enumerate() {
            let p = fdir.join(frame_png_name(k));
            std::fs::write(&p, encode_png(img)).map_err(|e| out(format!("{}: {e}", p.display())))?;
        }
    }
    std::fs::write(out_path, doc).map_err(|e| out(format!("{}: {e}", out_path.display())))
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", .path.display())]
    Invalid { path: PathBuf, source: ModelError },
    #[error("{}: no glyph mask recorded", .0.display())]
    NoGlyph(PathBuf),
    #[error(transparent)]
    Glyph(#[from] IngestError),
}

/// Reads and validates a session file.
pub fn load_session(path: &Path, limits: &ValidationLimits) -> Result<(Session, String), LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let session = validate_session_with(&text, limits).map_err(|source| LoadError::Invalid {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((session, text))
}

/// Reads a session file together with its glyph mask sidecar.
pub fn load_glyph_session(path: &Path, limits: &ValidationLimits) -> Result<GlyphSession, LoadError> {
    let (session, _) = load_session(path, limits)?;
    let name = session
        .glyph_mask
        .clone()
        .ok_or_else(|| LoadError::NoGlyph(path.to_path_buf()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let img = read_gray(&dir.join(name))?;
    Ok(GlyphSession {
        session,
        glyph: binarize(&img, 128, 0),
    })
}
