//! Two-hand performance scores, the common currency between the MIDI layer,
//! the generator and the metrics.

use crate::chords::ChordId;
use crate::theory::{Scale, TimeSignature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hand {
    Right,
    Left,
}

impl Hand {
    pub fn as_str(self) -> &'static str {
        match self {
            Hand::Right => "right",
            Hand::Left => "left",
        }
    }

    pub fn parse(s: &str) -> Option<Hand> {
        match s {
            "right" | "rh" | "R" => Some(Hand::Right),
            "left" | "lh" | "L" => Some(Hand::Left),
            _ => None,
        }
    }
}

/// A sounding note, timed in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimedNote {
    pub onset: u64,
    pub duration: u64,
    pub pitch: u8,
}

impl TimedNote {
    pub fn new(pitch: u8, onset: u64, duration: u64) -> Self {
        TimedNote {
            onset,
            duration,
            pitch,
        }
    }

    pub fn end(&self) -> u64 {
        self.onset + self.duration
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceScore {
    pub ticks_per_quarter: u32,
    pub right: Vec<TimedNote>,
    pub left: Vec<TimedNote>,
    pub scale: Scale,
    pub time_signature: TimeSignature,
    /// Chord of each melody bar, when the score came out of the generator.
    pub bar_chords: Vec<ChordId>,
}

impl PerformanceScore {
    pub fn new(
        ticks_per_quarter: u32,
        right: Vec<TimedNote>,
        left: Vec<TimedNote>,
        scale: Scale,
        time_signature: TimeSignature,
    ) -> Self {
        PerformanceScore {
            ticks_per_quarter,
            right,
            left,
            scale,
            time_signature,
            bar_chords: Vec::new(),
        }
    }

    pub fn hand(&self, hand: Hand) -> &[TimedNote] {
        match hand {
            Hand::Right => &self.right,
            Hand::Left => &self.left,
        }
    }

    pub fn note_count(&self) -> usize {
        self.right.len() + self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.note_count() == 0
    }

    pub fn notes(&self) -> impl Iterator<Item = &TimedNote> {
        self.right.iter().chain(self.left.iter())
    }

    pub fn bar_ticks(&self) -> u64 {
        self.time_signature.bar_ticks(self.ticks_per_quarter)
    }

    /// Latest note end over both hands.
    pub fn end_tick(&self) -> u64 {
        self.notes().map(TimedNote::end).max().unwrap_or(0)
    }

    /// Ticks in a whole note.
    pub fn whole_ticks(&self) -> u64 {
        4 * self.ticks_per_quarter as u64
    }
}
