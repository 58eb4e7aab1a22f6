//! Pen-down detection from the tip-gap trace, first-appearance pixel
//! timestamps, and assignment of timed pixels to strokes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{InkMask, TipTrace};
use crate::model::{ContactInterval, TimedPixel};

pub const DEFAULT_SLACK_MS: i64 = 80;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SegmentError {
    #[error("tip trace is empty")]
    EmptyTrace,
    #[error("no contact intervals to assign pixels to")]
    NoContacts,
    #[error("mask {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        index: usize,
        want_w: u32,
        want_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("mask {index} time does not increase")]
    NonMonotoneFrames { index: usize },
    #[error("invalid contact config: {0}")]
    BadConfig(String),
}

/// Hysteresis thresholds on the tip gap plus minimum run durations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactConfig {
    /// Gap below which the tip counts as touching.
    pub t_low_px: f64,
    /// Gap above which the tip counts as lifted.
    pub t_high_px: f64,
    pub min_down_ms: i64,
    pub min_up_ms: i64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig {
            t_low_px: 4.0,
            t_high_px: 9.0,
            min_down_ms: 60,
            min_up_ms: 60,
        }
    }
}

impl ContactConfig {
    pub fn check(&self) -> Result<(), SegmentError> {
        if !(self.t_low_px >= 0.0 && self.t_low_px < self.t_high_px && self.t_high_px.is_finite()) {
            return Err(SegmentError::BadConfig(
                "require 0 <= t_low_px < t_high_px".into(),
            ));
        }
        if self.min_down_ms < 0 || self.min_up_ms < 0 {
            return Err(SegmentError::BadConfig("durations must be >= 0".into()));
        }
        Ok(())
    }
}

enum ContactState {
    Up { low_run: Option<usize> },
    Down {
        start: usize,
        last_touch: usize,
        high_run: Option<usize>,
    },
}

/// Finds pen-down intervals with a hysteresis state machine.
///
/// Contact begins at the first sample of a run of `gap < t_low_px` lasting at
/// least `min_down_ms`, and ends at the last non-lifted sample before a run of
/// `gap > t_high_px` lasting at least `min_up_ms`.
pub fn detect_contacts(
    trace: &TipTrace,
    cfg: &ContactConfig,
) -> Result<Vec<ContactInterval>, SegmentError> {
    cfg.check()?;
    let s = &trace.samples;
    if s.is_empty() {
        return Err(SegmentError::EmptyTrace);
    }
    let mut out = Vec::new();
    let push = |start: usize, end: usize, out: &mut Vec<ContactInterval>| {
        let (a, b) = (s[start].t_ms, s[end].t_ms);
        if b > a && b - a >= cfg.min_down_ms {
            out.push(ContactInterval {
                index: out.len(),
                start_ms: a,
                end_ms: b,
            });
        }
    };
    let mut state = ContactState::Up { low_run: None };
    for (i, sample) in s.iter().enumerate() {
        state = match state {
            ContactState::Up { low_run } => {
                if sample.gap_px < cfg.t_low_px {
                    let run = low_run.unwrap_or(i);
                    if sample.t_ms - s[run].t_ms >= cfg.min_down_ms {
                        ContactState::Down {
                            start: run,
                            last_touch: i,
                            high_run: None,
                        }
                    } else {
                        ContactState::Up { low_run: Some(run) }
                    }
                } else {
                    ContactState::Up { low_run: None }
                }
            }
            ContactState::Down {
                start,
                last_touch,
                high_run,
            } => {
                if sample.gap_px > cfg.t_high_px {
                    let run = high_run.unwrap_or(i);
                    if sample.t_ms - s[run].t_ms >= cfg.min_up_ms {
                        push(start, last_touch, &mut out);
                        ContactState::Up { low_run: None }
                    } else {
                        ContactState::Down {
                            start,
                            last_touch,
                            high_run: Some(run),
                        }
                    }
                } else {
                    ContactState::Down {
                        start,
                        last_touch: i,
                        high_run: None,
                    }
                }
            }
        };
    }
    if let ContactState::Down {
        start, last_touch, ..
    } = state
    {
        push(start, last_touch, &mut out);
    }
    Ok(out)
}

/// First-appearance time of every pixel that was ever ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedPixelMap {
    pub w: u32,
    pub h: u32,
    times: Vec<Option<i64>>,
}

impl TimedPixelMap {
    pub fn get(&self, x: u32, y: u32) -> Option<i64> {
        if x < self.w && y < self.h {
            self.times[y as usize * self.w as usize + x as usize]
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.times.iter().filter(|t| t.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Timed pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = TimedPixel> + '_ {
        let w = self.w as usize;
        self.times.iter().enumerate().filter_map(move |(i, t)| {
            t.map(|t_ms| TimedPixel {
                x: (i % w) as u32,
                y: (i / w) as u32,
                t_ms,
            })
        })
    }

    /// The glyph: every pixel that was ever ink.
    pub fn glyph(&self) -> InkMask {
        InkMask::from_bits(
            self.w,
            self.h,
            0,
            self.times.iter().map(Option::is_some).collect(),
        )
    }
}

fn check_dims(masks: &[InkMask]) -> Result<(), SegmentError> {
    let Some(first) = masks.first() else {
        return Ok(());
    };
    for (index, m) in masks.iter().enumerate() {
        if m.w != first.w || m.h != first.h {
            return Err(SegmentError::DimensionMismatch {
                index,
                want_w: first.w,
                want_h: first.h,
                got_w: m.w,
                got_h: m.h,
            });
        }
        if index > 0 && m.t_ms <= masks[index - 1].t_ms {
            return Err(SegmentError::NonMonotoneFrames { index });
        }
    }
    Ok(())
}

/// Stamps each pixel with the time of the first mask in which it is ink.
/// Pixels that vanish and reappear keep their first time.
pub fn timestamp_pixels(masks: &[InkMask]) -> Result<TimedPixelMap, SegmentError> {
    check_dims(masks)?;
    let (w, h) = masks.first().map_or((0, 0), |m| (m.w, m.h));
    let mut times = vec![None; w as usize * h as usize];
    for m in masks {
        for (slot, &ink) in times.iter_mut().zip(m.bits()) {
            if ink && slot.is_none() {
                *slot = Some(m.t_ms);
            }
        }
    }
    Ok(TimedPixelMap { w, h, times })
}

/// Pixels that are ink in `cur` but not in `prev`; removals are never reported.
pub fn ink_increment(prev: &InkMask, cur: &InkMask) -> Result<Vec<(u32, u32)>, SegmentError> {
    if prev.w != cur.w || prev.h != cur.h {
        return Err(SegmentError::DimensionMismatch {
            index: 1,
            want_w: prev.w,
            want_h: prev.h,
            got_w: cur.w,
            got_h: cur.h,
        });
    }
    let w = cur.w as usize;
    Ok(prev
        .bits()
        .iter()
        .zip(cur.bits())
        .enumerate()
        .filter(|(_, (&p, &c))| c && !p)
        .map(|(i, _)| ((i % w) as u32, (i / w) as u32))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrokeGroups {
    /// Pixels per contact interval, in contact order.
    pub strokes: Vec<Vec<TimedPixel>>,
    pub discarded: usize,
}

impl StrokeGroups {
    pub fn assigned(&self) -> usize {
        self.strokes.iter().map(Vec::len).sum()
    }
}

/// Which contact a pixel time belongs to: inside an interval, or within
/// `slack_ms` after the end of the most recent one.
pub fn assign_time(contacts: &[ContactInterval], t_ms: i64, slack_ms: i64) -> Option<usize> {
    // First interval whose end is >= t.
    let k = contacts.partition_point(|c| c.end_ms < t_ms);
    if let Some(c) = contacts.get(k) {
        if c.start_ms <= t_ms {
            return Some(k);
        }
    }
    let prev = k.checked_sub(1)?;
    (t_ms - contacts[prev].end_ms <= slack_ms).then_some(prev)
}

pub fn group_strokes(
    pixels: &TimedPixelMap,
    contacts: &[ContactInterval],
    slack_ms: i64,
) -> Result<StrokeGroups, SegmentError> {
    if contacts.is_empty() {
        return Err(SegmentError::NoContacts);
    }
    let mut strokes = vec![Vec::new(); contacts.len()];
    let mut discarded = 0;
    for px in pixels.pixels() {
        match assign_time(contacts, px.t_ms, slack_ms) {
            Some(i) => strokes[i].push(px),
            None => discarded += 1,
        }
    }
    if discarded > 0 {
        log::debug!("{discarded} ink pixels fell outside every contact window");
    }
    Ok(StrokeGroups { strokes, discarded })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    pub slack_ms: i64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            slack_ms: DEFAULT_SLACK_MS,
        }
    }
}
