//! Phone alignments in a minimal CSV interchange form:
//!
//! ```text
//! start,end,phone
//! 0.10,0.25,i
//! ```
//!
//! Times are decimal seconds. Any forced aligner's output converts to this
//! with a one-line script.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::signal::AudioClip;

pub const ALIGNMENT_HEADER: &str = "start,end,phone";

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentAnnotation {
    pub start: f64,
    pub end: f64,
    pub phone: String,
}

pub fn parse_alignment(text: &str) -> Result<Vec<SegmentAnnotation>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == ALIGNMENT_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {ALIGNMENT_HEADER:?}, got {:?}", h.trim()),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    }

    let mut out = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [start, end, phone] = fields[..] else {
            return Err(parse_err(format!(
                "expected 3 fields, got {}",
                fields.len()
            )));
        };
        let time = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("bad time {s:?}")))
        };
        let (start, end) = (time(start)?, time(end)?);
        if start < 0.0 || start >= end {
            return Err(parse_err(format!(
                "need 0 <= start < end, got {start}..{end}"
            )));
        }
        if phone.is_empty() {
            return Err(parse_err("empty phone label".into()));
        }
        out.push(SegmentAnnotation {
            start,
            end,
            phone: phone.to_string(),
        });
    }
    Ok(out)
}

/// Cuts `round((end - start) * sr)` samples starting at `round(start * sr)` for
/// every annotation whose phone is in `keep`. Every annotation is checked
/// against the clip length, kept or not.
pub fn extract_segments(
    clip: &AudioClip,
    annotations: &[SegmentAnnotation],
    keep: &BTreeSet<String>,
) -> Result<Vec<AudioClip>> {
    let sr = clip.sample_rate() as f64;
    let mut out = Vec::new();
    for (i, a) in annotations.iter().enumerate() {
        let lo = (a.start * sr).round() as usize;
        let hi = lo + ((a.end - a.start) * sr).round() as usize;
        if hi > clip.len() {
            return Err(Error::Range(format!(
                "annotation {i} ({:.3}-{:.3} s, {:?}) exceeds clip {} of {:.3} s",
                a.start,
                a.end,
                a.phone,
                clip.source_id,
                clip.duration()
            )));
        }
        if !keep.contains(&a.phone) {
            continue;
        }
        if hi <= lo {
            return Err(Error::Range(format!(
                "annotation {i} ({:?}) is shorter than one sample",
                a.phone
            )));
        }
        out.push(AudioClip::new(
            clip.samples()[lo..hi].to_vec(),
            clip.sample_rate(),
            a.phone.clone(),
            format!("{}#{i}", clip.source_id),
        )?);
    }
    Ok(out)
}
