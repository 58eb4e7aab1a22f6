//! Grayscale frames, rectification and ink masks.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder, Luma};

use super::{Homography, IngestError};

/// Paper white used for samples that fall outside the source frame.
pub const PAPER_WHITE: u8 = 255;

/// Binary ink mask for one frame; `true` marks ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InkMask {
    pub w: u32,
    pub h: u32,
    pub t_ms: i64,
    bits: Vec<bool>,
}

impl InkMask {
    pub fn empty(w: u32, h: u32, t_ms: i64) -> Self {
        InkMask {
            w,
            h,
            t_ms,
            bits: vec![false; w as usize * h as usize],
        }
    }

    pub fn from_bits(w: u32, h: u32, t_ms: i64, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), w as usize * h as usize, "mask size mismatch");
        InkMask { w, h, t_ms, bits }
    }

    fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.w as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.w && y < self.h && self.bits[self.idx(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, ink: bool) {
        let i = self.idx(x, y);
        self.bits[i] = ink;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn ink_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Ink pixel coordinates in row-major order.
    pub fn ink_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.w as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    /// Renders ink black on white.
    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.w, self.h, |x, y| {
            Luma([if self.get(x, y) { 0 } else { PAPER_WHITE }])
        })
    }
}

/// A pixel is ink iff its value is below `ink_threshold`.
pub fn binarize(frame: &GrayImage, ink_threshold: u8, t_ms: i64) -> InkMask {
    let bits = frame.pixels().map(|p| p.0[0] < ink_threshold).collect();
    InkMask::from_bits(frame.width(), frame.height(), t_ms, bits)
}

/// Bilinear sample at continuous coordinates where pixel `(i, j)` has its
/// center at `(i + 0.5, j + 0.5)`; outside the frame reads as paper white.
fn sample_bilinear(img: &GrayImage, sx: f64, sy: f64) -> u8 {
    let (w, h) = (img.width(), img.height());
    if !(sx.is_finite() && sy.is_finite())
        || sx < 0.0
        || sy < 0.0
        || sx > f64::from(w)
        || sy > f64::from(h)
    {
        return PAPER_WHITE;
    }
    let fx = sx - 0.5;
    let fy = sy - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let ax = fx - x0;
    let ay = fy - y0;
    let clamp = |v: f64, hi: u32| v.clamp(0.0, f64::from(hi - 1)) as u32;
    let (xa, xb) = (clamp(x0, w), clamp(x0 + 1.0, w));
    let (ya, yb) = (clamp(y0, h), clamp(y0 + 1.0, h));
    let px = |x, y| f64::from(img.get_pixel(x, y).0[0]);
    let top = px(xa, ya) * (1.0 - ax) + px(xb, ya) * ax;
    let bottom = px(xa, yb) * (1.0 - ax) + px(xb, yb) * ax;
    let v = top * (1.0 - ay) + bottom * ay;
    v.round().clamp(0.0, 255.0) as u8
}

/// Remaps a camera frame into the top-down canvas: each destination pixel
/// reads the source at `H^-1 (x + 0.5, y + 0.5)`.
pub fn correct_perspective(
    frame: &GrayImage,
    h: &Homography,
    dst_w: u32,
    dst_h: u32,
) -> Result<GrayImage, IngestError> {
    let inv = h.inverse()?;
    Ok(GrayImage::from_fn(dst_w, dst_h, |x, y| {
        let s = inv.apply(crate::model::Vec2::new(
            f64::from(x) + 0.5,
            f64::from(y) + 0.5,
        ));
        Luma([sample_bilinear(frame, s.x, s.y)])
    }))
}

pub fn read_gray(path: &Path) -> Result<GrayImage, IngestError> {
    if !path.exists() {
        return Err(IngestError::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|e| IngestError::BadImage {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(img.to_luma8())
}

/// Binary ("P5") 8-bit PGM bytes.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::L8)
        .expect("in-memory PGM encoding");
    out
}

pub fn encode_png(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::L8)
        .expect("in-memory PNG encoding");
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> std::io::Result<()> {
    std::fs::write(path, encode_pgm(img))
}
