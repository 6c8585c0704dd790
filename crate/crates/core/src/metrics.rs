//! Evaluation metrics over a two-hand score.

use std::f64::consts::PI;

use thiserror::Error;

use crate::midi::{extract_tracks, MidiDocument, MidiError, NoteEvent};
use crate::score::{PerformanceScore, TimedNote};
use crate::theory::{pitch_class, Scale};
use crate::tokenizer::{assign_hands, detect_scale, TokenizerError};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("score has no notes")]
    EmptyScore,
    #[error("no bar has notes in both tracks")]
    NoOverlappingBars,
    #[error(transparent)]
    Midi(#[from] MidiError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

/// What counts as distinct inside a bar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpcMode {
    #[default]
    PitchClasses,
    Pitches,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub qn: f64,
    pub upc: f64,
    /// `None` when the hands never sound in the same bar.
    pub td: Option<f64>,
    pub oos: f64,
}

fn non_empty(score: &PerformanceScore) -> Result<(), MetricsError> {
    if score.is_empty() {
        Err(MetricsError::EmptyScore)
    } else {
        Ok(())
    }
}

/// Percentage of notes lasting at least a 32nd note.
pub fn qualified_note_rate(score: &PerformanceScore) -> Result<f64, MetricsError> {
    non_empty(score)?;
    let ppq = score.ticks_per_quarter as u64;
    // duration / (4 ppq) >= 1/32
    let ok = score.notes().filter(|n| 8 * n.duration >= ppq).count();
    Ok(100.0 * ok as f64 / score.note_count() as f64)
}

/// Mean number of distinct pitch classes per bar, both hands pooled, bars
/// assigned by onset. Bars without onsets are left out.
pub fn unique_pitch_classes(score: &PerformanceScore, mode: UpcMode) -> Result<f64, MetricsError> {
    non_empty(score)?;
    let bar = score.bar_ticks();
    let bars = (score.end_tick().div_ceil(bar) as usize).max(1);
    let mut seen = vec![[0u64; 2]; bars];
    for n in score.notes() {
        let key = match mode {
            UpcMode::PitchClasses => pitch_class(n.pitch),
            UpcMode::Pitches => n.pitch,
        };
        let b = ((n.onset / bar) as usize).min(bars - 1);
        seen[b][(key / 64) as usize] |= 1 << (key % 64);
    }
    let counts: Vec<u32> = seen
        .iter()
        .map(|s| s[0].count_ones() + s[1].count_ones())
        .filter(|&c| c > 0)
        .collect();
    Ok(counts.iter().sum::<u32>() as f64 / counts.len() as f64)
}

/// Percentage of notes whose pitch class is outside `scale`.
pub fn out_of_scale_rate(score: &PerformanceScore, scale: Scale) -> Result<f64, MetricsError> {
    non_empty(score)?;
    let out = score.notes().filter(|n| !scale.contains(n.pitch)).count();
    Ok(100.0 * out as f64 / score.note_count() as f64)
}

/// Radii of the fifths, minor-third and major-third circles.
pub const CENTROID_RADII: [f64; 3] = [1.0, 1.0, 0.5];
/// Angle per semitone on each circle.
pub const CENTROID_ANGLES: [f64; 3] = [7.0 * PI / 6.0, 3.0 * PI / 2.0, 2.0 * PI / 3.0];

/// 6-D tonal centroid of an L1-normalised chroma vector.
pub fn tonal_centroid(chroma: &[f64; 12]) -> [f64; 6] {
    let total: f64 = chroma.iter().sum();
    let mut out = [0.0; 6];
    if total <= 0.0 {
        return out;
    }
    for (pc, &w) in chroma.iter().enumerate() {
        let w = w / total;
        for (k, (r, a)) in CENTROID_RADII.iter().zip(CENTROID_ANGLES).enumerate() {
            let theta = pc as f64 * a;
            out[2 * k] += w * r * theta.sin();
            out[2 * k + 1] += w * r * theta.cos();
        }
    }
    out
}

/// Per-bar chroma, each note weighted by how many ticks of it fall in the bar.
pub fn bar_chromas(notes: &[TimedNote], bar_ticks: u64, bars: usize) -> Vec<[f64; 12]> {
    let mut out = vec![[0.0; 12]; bars];
    for n in notes {
        let first = (n.onset / bar_ticks) as usize;
        let mut b = first;
        while b < bars {
            let start = b as u64 * bar_ticks;
            let end = start + bar_ticks;
            if start >= n.end() {
                break;
            }
            let overlap = n.end().min(end) - n.onset.max(start);
            out[b][pitch_class(n.pitch) as usize] += overlap as f64;
            b += 1;
        }
    }
    out
}

/// Mean Euclidean distance between the two hands' per-bar tonal centroids,
/// over bars where both hands sound.
pub fn tonal_distance(right: &[TimedNote], left: &[TimedNote], bar_ticks: u64) -> Result<f64, MetricsError> {
    let end = right.iter().chain(left).map(TimedNote::end).max().unwrap_or(0);
    let bars = end.div_ceil(bar_ticks) as usize;
    let (r, l) = (bar_chromas(right, bar_ticks, bars), bar_chromas(left, bar_ticks, bars));
    let mut total = 0.0;
    let mut count = 0;
    for (a, b) in r.iter().zip(&l) {
        if a.iter().sum::<f64>() > 0.0 && b.iter().sum::<f64>() > 0.0 {
            let (ca, cb) = (tonal_centroid(a), tonal_centroid(b));
            total += ca.iter().zip(&cb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::NoOverlappingBars);
    }
    Ok(total / count as f64)
}

/// All four metrics against the score's own scale.
pub fn evaluate(score: &PerformanceScore, upc_mode: UpcMode) -> Result<MetricsReport, MetricsError> {
    let td = match tonal_distance(&score.right, &score.left, score.bar_ticks()) {
        Ok(v) => Some(v),
        Err(MetricsError::NoOverlappingBars) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        qn: qualified_note_rate(score)?,
        upc: unique_pitch_classes(score, upc_mode)?,
        td,
        oos: out_of_scale_rate(score, score.scale)?,
    })
}

/// Score view of a parsed file with every note kept as played: no reduction,
/// no quantisation. The key signature gives the scale, or it is detected.
pub fn score_from_document(doc: &MidiDocument, scale: Option<Scale>) -> Result<PerformanceScore, MetricsError> {
    let tracks = extract_tracks(doc)?;
    let (right, left) = assign_hands(&tracks)?;
    let scale = match (scale, doc.key_signature) {
        (Some(s), _) => s,
        (None, Some(k)) => Scale::from_key_signature(k.sharps, k.minor),
        (None, None) => {
            let all: Vec<NoteEvent> = right.iter().chain(&left).copied().collect();
            detect_scale(&all)?
        }
    };
    let timed = |v: &[NoteEvent]| {
        let mut out: Vec<TimedNote> = v.iter().map(|n| TimedNote::new(n.pitch, n.onset, n.duration)).collect();
        out.sort();
        out
    };
    Ok(PerformanceScore::new(
        doc.ticks_per_quarter as u32,
        timed(&right),
        timed(&left),
        scale,
        doc.time_signature_or_default(),
    ))
}
