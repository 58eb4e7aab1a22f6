//! Teacher/student comparison report and glyph-structure types.

use serde::{Deserialize, Serialize};

use super::Vec2;

/// Axis-aligned rectangle in canvas pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl Rect {
    /// Vertical center line of the form grid.
    pub fn center_x(&self) -> f64 {
        (self.left + self.right) / 2.0
    }

    /// Horizontal center line of the form grid.
    pub fn center_y(&self) -> f64 {
        (self.top + self.bottom) / 2.0
    }

    pub fn translated(&self, d: Vec2) -> Rect {
        Rect {
            left: self.left + d.x,
            top: self.top + d.y,
            right: self.right + d.x,
            bottom: self.bottom + d.y,
        }
    }
}

/// The four extremity ink pixels of a glyph and the rectangle they span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremityBox {
    pub top: Vec2,
    pub bottom: Vec2,
    pub left: Vec2,
    pub right: Vec2,
    pub rect: Rect,
}

impl ExtremityBox {
    pub fn translated(&self, d: Vec2) -> ExtremityBox {
        ExtremityBox {
            top: self.top + d,
            bottom: self.bottom + d,
            left: self.left + d,
            right: self.right + d,
            rect: self.rect.translated(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokeMismatch {
    pub side: super::Role,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureComparison {
    pub teacher: Vec<f64>,
    pub student: Vec<f64>,
    /// student minus teacher
    pub diff: Vec<f64>,
    pub max_abs_diff: f64,
    pub argmax_pos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedComparison {
    pub teacher: Vec<f64>,
    pub student: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressRowDoc {
    pub grid_ms: i64,
    pub arc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressPair {
    pub teacher: ProgressRowDoc,
    pub student: ProgressRowDoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleDoc {
    pub lo: f64,
    pub hi: f64,
    pub n: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierScales {
    pub pressure_scale: ScaleDoc,
    pub speed_scale: ScaleDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokePair {
    pub index: usize,
    pub pressure: PressureComparison,
    pub speed: SpeedComparison,
    pub progress: ProgressPair,
    pub tiers: TierScales,
}

/// Display descriptor for the 8-direction practice grid over the canvas square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiZiGe {
    pub size: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphComparison {
    pub teacher_box: ExtremityBox,
    pub student_box: ExtremityBox,
    pub mizige: MiZiGe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub teacher_id: String,
    pub student_id: String,
    pub stroke_count: usize,
    pub mismatch: Vec<StrokeMismatch>,
    pub pairs: Vec<StrokePair>,
    pub glyph: GlyphComparison,
}

impl ComparisonReport {
    /// Canonical bytes shared by the CLI and the HTTP API.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}
