//! Pitch classes, scales and time signatures.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Sharp-spelled names for the twelve pitch classes, C = 0.
pub const PITCH_CLASS_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

const MAJOR_STEPS: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const MINOR_STEPS: [u8; 7] = [0, 2, 3, 5, 7, 8, 10];

#[inline]
pub fn pitch_class(pitch: u8) -> u8 {
    pitch % 12
}

pub fn pitch_class_from_name(name: &str) -> Option<u8> {
    let mut chars = name.chars();
    let base = match chars.next()?.to_ascii_uppercase() {
        'C' => 0i32,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return None,
    };
    let mut offset = 0i32;
    for c in chars {
        match c {
            '#' | '♯' => offset += 1,
            'b' | '♭' => offset -= 1,
            _ => return None,
        }
    }
    Some((base + offset).rem_euclid(12) as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Major,
    Minor,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Major => "major",
            Mode::Minor => "minor",
        }
    }
}

/// A tonic plus a mode. Minor means natural minor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scale {
    pub tonic: u8,
    pub mode: Mode,
}

impl Scale {
    pub const C_MAJOR: Scale = Scale {
        tonic: 0,
        mode: Mode::Major,
    };

    pub fn new(tonic: u8, mode: Mode) -> Self {
        Scale {
            tonic: tonic % 12,
            mode,
        }
    }

    /// Ascending in-scale pitch classes starting from the tonic.
    pub fn degrees(&self) -> [u8; 7] {
        let steps = match self.mode {
            Mode::Major => MAJOR_STEPS,
            Mode::Minor => MINOR_STEPS,
        };
        steps.map(|s| (s + self.tonic) % 12)
    }

    pub fn contains_pitch_class(&self, pc: u8) -> bool {
        self.degree_of(pc).is_some()
    }

    pub fn contains(&self, pitch: u8) -> bool {
        self.contains_pitch_class(pitch_class(pitch))
    }

    /// Position of `pc` in [`Scale::degrees`], if it is in the scale.
    pub fn degree_of(&self, pc: u8) -> Option<usize> {
        self.degrees().iter().position(|&d| d == pc % 12)
    }

    /// Semitones from `pitch` up to the in-scale note `steps` scale degrees
    /// above it. `None` when `pitch` is out of scale.
    pub fn diatonic_interval_above(&self, pitch: u8, steps: usize) -> Option<u8> {
        let degrees = self.degrees();
        let idx = self.degree_of(pitch_class(pitch))?;
        let target = degrees[(idx + steps) % 7];
        let up = (target as i32 - pitch_class(pitch) as i32).rem_euclid(12) as u8;
        // A full cycle of seven degrees is an octave, not a unison.
        Some(if up == 0 && steps.is_multiple_of(7) && steps > 0 { 12 } else { up })
    }

    /// Scale from an SMF key signature (sharps positive, flats negative).
    pub fn from_key_signature(sharps: i8, minor: bool) -> Self {
        let major_tonic = (sharps as i32 * 7).rem_euclid(12) as u8;
        if minor {
            Scale::new((major_tonic + 9) % 12, Mode::Minor)
        } else {
            Scale::new(major_tonic, Mode::Major)
        }
    }

    /// Sharps (positive) or flats (negative) for an SMF key signature, in -6..=6.
    pub fn key_signature_sharps(&self) -> i8 {
        let major_tonic = match self.mode {
            Mode::Major => self.tonic,
            Mode::Minor => (self.tonic + 3) % 12,
        };
        // 7 is its own inverse mod 12.
        let sharps = (major_tonic as i32 * 7).rem_euclid(12);
        (if sharps > 6 { sharps - 12 } else { sharps }) as i8
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}",
            PITCH_CLASS_NAMES[self.tonic as usize],
            self.mode.as_str()
        )
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse `{0}` (expected e.g. `D:major`, `F#:minor`)")]
pub struct ParseScaleError(pub String);

impl FromStr for Scale {
    type Err = ParseScaleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseScaleError(s.to_string());
        let (tonic, mode) = s.split_once(':').ok_or_else(err)?;
        let tonic = pitch_class_from_name(tonic.trim()).ok_or_else(err)?;
        let mode = match mode.trim().to_ascii_lowercase().as_str() {
            "major" | "maj" => Mode::Major,
            "minor" | "min" => Mode::Minor,
            _ => return Err(err()),
        };
        Ok(Scale::new(tonic, mode))
    }
}

/// Time signature with the denominator stored as a note value (4 = quarter).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeSignature {
    pub numerator: u8,
    pub denominator: u8,
}

impl TimeSignature {
    pub const COMMON: TimeSignature = TimeSignature {
        numerator: 4,
        denominator: 4,
    };

    pub fn new(numerator: u8, denominator: u8) -> Option<Self> {
        (numerator > 0 && denominator > 0 && denominator.is_power_of_two() && denominator <= 64)
            .then_some(TimeSignature {
                numerator,
                denominator,
            })
    }

    /// Bar length in 32nd notes, rounded up to at least one.
    pub fn bar_thirty_seconds(&self) -> u32 {
        (32 * self.numerator as u32 / self.denominator as u32).max(1)
    }

    /// Bar length in ticks for the given resolution.
    pub fn bar_ticks(&self, ticks_per_quarter: u32) -> u64 {
        (4 * ticks_per_quarter as u64 * self.numerator as u64 / self.denominator as u64).max(1)
    }
}

impl Default for TimeSignature {
    fn default() -> Self {
        TimeSignature::COMMON
    }
}

impl fmt::Display for TimeSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse time signature `{0}`")]
pub struct ParseTimeSignatureError(pub String);

impl FromStr for TimeSignature {
    type Err = ParseTimeSignatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseTimeSignatureError(s.to_string());
        let (n, d) = s.split_once('/').ok_or_else(err)?;
        let n = n.trim().parse().map_err(|_| err())?;
        let d = d.trim().parse().map_err(|_| err())?;
        TimeSignature::new(n, d).ok_or_else(err)
    }
}
