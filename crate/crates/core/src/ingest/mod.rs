//! Input loading: frame manifests, sensor and tip-gap logs, perspective
//! rectification, and placement of every stream on the session clock.

mod homography;
mod raster;

use std::path::{Path, PathBuf};

use image::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Orientation, SensorSample, SensorStream, Vec2, PRESSURE_MAX};

pub use homography::{canvas_rect, check_quad, compute_homography, Homography};
pub use raster::{
    binarize, correct_perspective, encode_pgm, encode_png, read_gray, write_pgm, InkMask,
    PAPER_WHITE,
};

pub const DEFAULT_INK_THRESHOLD: u8 = 100;

/// Sensor and tip samples further than this from the frame span are dropped.
pub const STREAM_MARGIN_MS: i64 = 500;

pub const SENSOR_HEADER: [&str; 5] = ["t_ms", "yaw_deg", "pitch_deg", "roll_deg", "pressure_raw"];
pub const TIP_HEADER: [&str; 2] = ["t_ms", "gap_px"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}:{line}: bad row: {msg}", .file.display())]
    BadCsvRow { file: PathBuf, line: u64, msg: String },
    #[error("{}:{line}: time does not increase", .file.display())]
    NonMonotoneTime { file: PathBuf, line: u64 },
    #[error("bad manifest {}: {msg}", .path.display())]
    BadManifest { path: PathBuf, msg: String },
    #[error("cannot decode image {}: {msg}", .path.display())]
    BadImage { path: PathBuf, msg: String },
    #[error("degenerate quad: {0}")]
    DegenerateQuad(String),
    #[error("invalid homography: {0}")]
    InvalidHomography(String),
    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Size {
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub file: PathBuf,
    pub t_ms: i64,
}

/// `manifest.json`: the overhead frames plus the side streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameManifest {
    pub frames: Vec<FrameRef>,
    /// Paper corners in the camera image, clockwise from top-left. Absent when
    /// frames are already top-down.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paper_quad: Option<[Vec2; 4]>,
    pub dst_size: Size,
    pub sensor_log: PathBuf,
    pub tip_trace: PathBuf,
    #[serde(default)]
    pub sensor_clock_offset_ms: i64,
    #[serde(default)]
    pub tip_clock_offset_ms: i64,
}

impl FrameManifest {
    pub fn read(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => IngestError::MissingFile(path.to_path_buf()),
            _ => IngestError::Io {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        let m: FrameManifest = serde_json::from_str(&text).map_err(|e| IngestError::BadManifest {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        m.check().map_err(|msg| IngestError::BadManifest {
            path: path.to_path_buf(),
            msg,
        })?;
        Ok(m)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.frames.is_empty() {
            return Err("no frames".into());
        }
        if self.dst_size.w == 0 || self.dst_size.h == 0 {
            return Err("dst_size must be positive".into());
        }
        for (i, w) in self.frames.windows(2).enumerate() {
            if w[1].t_ms <= w[0].t_ms {
                return Err(format!("frames[{}].t_ms does not increase", i + 1));
            }
        }
        if let Some(q) = &self.paper_quad {
            check_quad(q).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    /// Camera-to-canvas transform, or `None` when frames are used as-is.
    pub fn homography(&self) -> Result<Option<Homography>, IngestError> {
        self.paper_quad
            .as_ref()
            .map(|q| compute_homography(q, &canvas_rect(self.dst_size.w, self.dst_size.h)))
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipSample {
    pub t_ms: i64,
    pub gap_px: f64,
}

/// Brush-tip to paper distance over time, from the side view.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TipTrace {
    pub samples: Vec<TipSample>,
}

impl TipTrace {
    pub fn new(samples: Vec<TipSample>) -> Result<Self, String> {
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].t_ms <= w[0].t_ms {
                return Err(format!("samples[{}] time does not increase", i + 1));
            }
        }
        if let Some(s) = samples.iter().find(|s| !(s.gap_px.is_finite() && s.gap_px >= 0.0)) {
            return Err(format!("gap {} at t={} is not a finite value >= 0", s.gap_px, s.t_ms));
        }
        Ok(TipTrace { samples })
    }

    pub fn shifted(&self, offset_ms: i64) -> TipTrace {
        TipTrace {
            samples: self
                .samples
                .iter()
                .map(|s| TipSample {
                    t_ms: s.t_ms + offset_ms,
                    gap_px: s.gap_px,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct SensorRow {
    t_ms: i64,
    yaw_deg: f64,
    pitch_deg: f64,
    roll_deg: f64,
    pressure_raw: i64,
}

#[derive(Debug, Deserialize)]
struct TipRow {
    t_ms: i64,
    gap_px: f64,
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<std::fs::File>, IngestError> {
    if !path.exists() {
        return Err(IngestError::MissingFile(path.to_path_buf()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| IngestError::BadCsvRow {
            file: path.to_path_buf(),
            line: 1,
            msg: e.to_string(),
        })?;
    let got = rdr.headers().map_err(|e| IngestError::BadCsvRow {
        file: path.to_path_buf(),
        line: 1,
        msg: e.to_string(),
    })?;
    if got.iter().ne(header.iter().copied()) {
        return Err(IngestError::BadCsvRow {
            file: path.to_path_buf(),
            line: 1,
            msg: format!("expected header `{}`", header.join(",")),
        });
    }
    Ok(rdr)
}

fn csv_rows<T: serde::de::DeserializeOwned>(
    path: &Path,
    header: &[&str],
) -> Result<Vec<(u64, T)>, IngestError> {
    let mut rdr = open_csv(path, header)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IngestError::BadCsvRow {
            file: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: T = rec.deserialize(None).map_err(|e| IngestError::BadCsvRow {
            file: path.to_path_buf(),
            line,
            msg: e.to_string(),
        })?;
        out.push((line, row));
    }
    Ok(out)
}

/// Reads `t_ms,yaw_deg,pitch_deg,roll_deg,pressure_raw` rows on the sensor's own clock.
pub fn read_sensor_log(path: &Path) -> Result<SensorStream, IngestError> {
    let rows: Vec<(u64, SensorRow)> = csv_rows(path, &SENSOR_HEADER)?;
    let mut samples = Vec::with_capacity(rows.len());
    let mut prev_t = None;
    for (line, r) in rows {
        let bad = |msg: String| IngestError::BadCsvRow {
            file: path.to_path_buf(),
            line,
            msg,
        };
        if !(0..=i64::from(PRESSURE_MAX)).contains(&r.pressure_raw) {
            return Err(bad(format!(
                "pressure_raw {} outside [0, {PRESSURE_MAX}]",
                r.pressure_raw
            )));
        }
        let o = Orientation::new(r.yaw_deg, r.pitch_deg, r.roll_deg).map_err(|e| bad(e.to_string()))?;
        if prev_t.is_some_and(|p| r.t_ms <= p) {
            return Err(IngestError::NonMonotoneTime {
                file: path.to_path_buf(),
                line,
            });
        }
        prev_t = Some(r.t_ms);
        samples.push(SensorSample::new(r.t_ms, o, r.pressure_raw as u16).map_err(|e| bad(e.to_string()))?);
    }
    Ok(SensorStream { samples })
}

/// Reads `t_ms,gap_px` rows on the tip camera's own clock.
pub fn read_tip_trace(path: &Path) -> Result<TipTrace, IngestError> {
    let rows: Vec<(u64, TipRow)> = csv_rows(path, &TIP_HEADER)?;
    let mut samples = Vec::with_capacity(rows.len());
    let mut prev_t = None;
    for (line, r) in rows {
        if !(r.gap_px.is_finite() && r.gap_px >= 0.0) {
            return Err(IngestError::BadCsvRow {
                file: path.to_path_buf(),
                line,
                msg: format!("gap_px {} must be finite and >= 0", r.gap_px),
            });
        }
        if prev_t.is_some_and(|p| r.t_ms <= p) {
            return Err(IngestError::NonMonotoneTime {
                file: path.to_path_buf(),
                line,
            });
        }
        prev_t = Some(r.t_ms);
        samples.push(TipSample {
            t_ms: r.t_ms,
            gap_px: r.gap_px,
        });
    }
    Ok(TipTrace { samples })
}

/// Everything the segmentation stage needs, on the unified clock.
#[derive(Debug, Clone)]
pub struct LoadedInputs {
    /// Rectified grayscale frames, in manifest order.
    pub frames: Vec<GrayImage>,
    pub masks: Vec<InkMask>,
    pub sensor: SensorStream,
    pub tip: TipTrace,
    pub dropped_sensor: usize,
    pub dropped_tip: usize,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads frames and streams referenced by `manifest` (paths relative to
/// `base_dir`), rectifies and binarizes the frames, and shifts the streams
/// onto the frame clock.
pub fn load_inputs(
    manifest: &FrameManifest,
    base_dir: &Path,
    ink_threshold: u8,
) -> Result<LoadedInputs, IngestError> {
    let h = manifest.homography()?;
    let Size { w, h: hgt } = manifest.dst_size;

    // Streams first: a missing log should fail before the frame decode cost.
    let sensor_raw = read_sensor_log(&resolve(base_dir, &manifest.sensor_log))?;
    let tip_raw = read_tip_trace(&resolve(base_dir, &manifest.tip_trace))?;

    let frames: Vec<GrayImage> = manifest
        .frames
        .par_iter()
        .map(|f| {
            let img = read_gray(&resolve(base_dir, &f.file))?;
            match &h {
                Some(h) => correct_perspective(&img, h, w, hgt),
                None => Ok(img),
            }
        })
        .collect::<Result<_, _>>()?;
    let masks = frames
        .par_iter()
        .zip(manifest.frames.par_iter())
        .map(|(img, f)| binarize(img, ink_threshold, f.t_ms))
        .collect();

    let lo = manifest.frames[0].t_ms - STREAM_MARGIN_MS;
    let hi = manifest.frames[manifest.frames.len() - 1].t_ms + STREAM_MARGIN_MS;
    let in_window = |t: i64| (lo..=hi).contains(&t);

    let shifted = sensor_raw.shifted(manifest.sensor_clock_offset_ms);
    let before = shifted.len();
    let sensor = SensorStream {
        samples: shifted.samples.into_iter().filter(|s| in_window(s.t_ms)).collect(),
    };
    let dropped_sensor = before - sensor.len();

    let shifted = tip_raw.shifted(manifest.tip_clock_offset_ms);
    let before = shifted.samples.len();
    let tip = TipTrace {
        samples: shifted.samples.into_iter().filter(|s| in_window(s.t_ms)).collect(),
    };
    let dropped_tip = before - tip.samples.len();
    if dropped_sensor + dropped_tip > 0 {
        log::info!("dropped {dropped_sensor} sensor and {dropped_tip} tip samples outside the frame span");
    }

    Ok(LoadedInputs {
        frames,
        masks,
        sensor,
        tip,
        dropped_sensor,
        dropped_tip,
    })
}
