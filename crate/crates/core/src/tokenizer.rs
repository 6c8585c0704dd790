//! Scale-invariant, length-quantised token sequences.
//!
//! A token is a pitch (or a rest) paired with one of nine note lengths. Pitches
//! are stored relative to the piece's tonic, which is moved to C, so the same
//! melody in any key maps to the same tokens. The integer id of a token is
//! `pitch_index * 9 + length_index`, where pitch index 128 is the rest.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::midi::{extract_tracks, MidiDocument, MidiError, NoteEvent, TrackSummary};
use crate::score::{Hand, TimedNote};
use crate::theory::{Mode, Scale, TimeSignature};

pub const NUM_LENGTHS: usize = 9;
pub const NUM_PITCH_SYMBOLS: usize = 129;
pub const VOCAB_SIZE: usize = NUM_PITCH_SYMBOLS * NUM_LENGTHS;
pub const REST_PITCH_INDEX: usize = 128;

#[derive(Debug, Error, PartialEq)]
pub enum TokenizerError {
    #[error("note length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("token id {0} is outside the vocabulary")]
    OutOfRange(usize),
    #[error("pitch {0} is outside 0..=127")]
    InvalidPitch(u8),
    #[error("cannot detect a scale from an empty note list")]
    EmptyInput,
    #[error("ticks per quarter {0} is not a multiple of 8")]
    UnalignedResolution(u32),
    #[error(transparent)]
    Midi(#[from] MidiError),
    #[error("corpus line {line}: {reason}")]
    BadCorpusLine { line: usize, reason: String },
}

/// The nine allowed note lengths, ascending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LengthClass {
    ThirtySecond,
    Sixteenth,
    Eighth,
    DottedEighth,
    Quarter,
    DottedQuarter,
    Half,
    DottedHalf,
    Whole,
}

impl LengthClass {
    pub const ALL: [LengthClass; NUM_LENGTHS] = [
        LengthClass::ThirtySecond,
        LengthClass::Sixteenth,
        LengthClass::Eighth,
        LengthClass::DottedEighth,
        LengthClass::Quarter,
        LengthClass::DottedQuarter,
        LengthClass::Half,
        LengthClass::DottedHalf,
        LengthClass::Whole,
    ];

    /// Length measured in 32nd notes.
    pub fn thirty_seconds(self) -> u32 {
        [1, 2, 4, 6, 8, 12, 16, 24, 32][self.index()]
    }

    /// Length as a fraction of a whole note.
    pub fn fraction(self) -> f64 {
        self.thirty_seconds() as f64 / 32.0
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn ticks(self, ticks_per_quarter: u32) -> u64 {
        self.thirty_seconds() as u64 * ticks_per_quarter as u64 / 8
    }
}

impl fmt::Display for LengthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.thirty_seconds();
        let g = gcd(n, 32);
        write!(f, "{}/{}", n / g, 32 / g)
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Nearest allowed length to `raw` (a fraction of a whole note). Exact ties
/// go to the longer class.
pub fn quantize_length(raw: f64) -> Result<LengthClass, TokenizerError> {
    if !(raw > 0.0) || !raw.is_finite() {
        return Err(TokenizerError::NonPositiveLength(raw));
    }
    let mut best = LengthClass::ThirtySecond;
    let mut best_err = f64::INFINITY;
    for class in LengthClass::ALL {
        let err = (raw - class.fraction()).abs();
        // `<=` walks the ascending list, so ties land on the longer class.
        if err <= best_err {
            best = class;
            best_err = err;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pitch {
    Note(u8),
    Rest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Token {
    pub pitch: Pitch,
    pub length: LengthClass,
}

impl Token {
    pub fn note(pitch: u8, length: LengthClass) -> Self {
        Token {
            pitch: Pitch::Note(pitch),
            length,
        }
    }

    pub fn rest(length: LengthClass) -> Self {
        Token {
            pitch: Pitch::Rest,
            length,
        }
    }

    pub fn is_rest(&self) -> bool {
        self.pitch == Pitch::Rest
    }

    pub fn midi_pitch(&self) -> Option<u8> {
        match self.pitch {
            Pitch::Note(p) => Some(p),
            Pitch::Rest => None,
        }
    }

    pub fn encode(&self) -> Result<usize, TokenizerError> {
        let pitch_index = match self.pitch {
            Pitch::Note(p) if p < 128 => p as usize,
            Pitch::Note(p) => return Err(TokenizerError::InvalidPitch(p)),
            Pitch::Rest => REST_PITCH_INDEX,
        };
        Ok(pitch_index * NUM_LENGTHS + self.length.index())
    }

    pub fn decode(id: usize) -> Result<Token, TokenizerError> {
        if id >= VOCAB_SIZE {
            return Err(TokenizerError::OutOfRange(id));
        }
        let pitch_index = id / NUM_LENGTHS;
        let length = LengthClass::ALL[id % NUM_LENGTHS];
        let pitch = if pitch_index == REST_PITCH_INDEX {
            Pitch::Rest
        } else {
            Pitch::Note(pitch_index as u8)
        };
        Ok(Token { pitch, length })
    }
}

/// `true` for the nine rest ids.
pub fn is_rest_id(id: usize) -> bool {
    id / NUM_LENGTHS == REST_PITCH_INDEX && id < VOCAB_SIZE
}

pub fn rest_ids() -> impl Iterator<Item = usize> {
    (0..NUM_LENGTHS).map(|l| REST_PITCH_INDEX * NUM_LENGTHS + l)
}

/// A monophonic token stream for one hand. Token onsets are the running sum
/// of preceding lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub hand: Hand,
    pub scale: Scale,
    pub time_signature: TimeSignature,
}

impl TokenSequence {
    pub fn new(tokens: Vec<Token>, hand: Hand, scale: Scale, time_signature: TimeSignature) -> Self {
        TokenSequence {
            tokens,
            hand,
            scale,
            time_signature,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.tokens
            .iter()
            .map(|t| t.encode().expect("token sequences hold valid tokens"))
            .collect()
    }

    /// Onset of every token, in 32nd notes.
    pub fn onsets(&self) -> Vec<u64> {
        let mut t = 0u64;
        self.tokens
            .iter()
            .map(|tok| {
                let onset = t;
                t += tok.length.thirty_seconds() as u64;
                onset
            })
            .collect()
    }

    /// Total duration in 32nd notes.
    pub fn duration_thirty_seconds(&self) -> u64 {
        self.tokens.iter().map(|t| t.length.thirty_seconds() as u64).sum()
    }

    /// First `n` tokens, same metadata.
    pub fn truncated(&self, n: usize) -> TokenSequence {
        TokenSequence {
            tokens: self.tokens[..n.min(self.tokens.len())].to_vec(),
            ..self.clone()
        }
    }
}

/// Split tracks into (right, left): highest average pitch is the right hand,
/// lowest is the left. Equal averages favour the lower track index for the
/// right hand. A lone track becomes the right hand.
pub fn assign_hands(tracks: &[TrackSummary]) -> Result<(Vec<NoteEvent>, Vec<NoteEvent>), MidiError> {
    if tracks.is_empty() {
        return Err(MidiError::NoNoteTracks);
    }
    let right = tracks
        .iter()
        .reduce(|best, t| if t.average_pitch > best.average_pitch { t } else { best })
        .expect("non-empty");
    if tracks.len() == 1 {
        return Ok((right.notes.clone(), Vec::new()));
    }
    let left = tracks
        .iter()
        .filter(|t| t.track_index != right.track_index)
        .reduce(|best, t| if t.average_pitch < best.average_pitch { t } else { best })
        .expect("at least two tracks");
    Ok((right.notes.clone(), left.notes.clone()))
}

/// Reduce a hand to one sounding note at a time: the highest pitch for the
/// right hand and the lowest for the left. A note that starts while a more
/// extreme note is still sounding is dropped; otherwise the sounding note is
/// cut off where the new one begins.
pub fn monophonic_reduce(notes: &[NoteEvent], hand: Hand) -> Vec<NoteEvent> {
    let mut sorted = notes.to_vec();
    match hand {
        Hand::Right => sorted.sort_by(|a, b| a.onset.cmp(&b.onset).then(b.pitch.cmp(&a.pitch))),
        Hand::Left => sorted.sort_by(|a, b| a.onset.cmp(&b.onset).then(a.pitch.cmp(&b.pitch))),
    }
    let dominates = |held: u8, new: u8| match hand {
        Hand::Right => held > new,
        Hand::Left => held < new,
    };

    let mut kept: Vec<NoteEvent> = Vec::with_capacity(sorted.len());
    let mut last_onset = None;
    for note in sorted {
        if last_onset == Some(note.onset) {
            continue;
        }
        last_onset = Some(note.onset);
        if let Some(prev) = kept.last_mut() {
            if prev.onset + prev.duration > note.onset {
                if dominates(prev.pitch, note.pitch) {
                    continue;
                }
                prev.duration = note.onset - prev.onset;
            }
        }
        kept.push(note);
    }
    kept
}

/// Move a pitch so the scale's tonic lands on C. Pitches that would drop
/// below 0 are raised an octave.
pub fn normalize_pitch(pitch: u8, scale: Scale) -> u8 {
    let shifted = pitch as i16 - scale.tonic as i16;
    (if shifted < 0 { shifted + 12 } else { shifted }) as u8
}

/// Inverse of [`normalize_pitch`] for pitches that did not wrap.
pub fn denormalize_pitch(pitch: u8, scale: Scale) -> u8 {
    let shifted = pitch as i16 + scale.tonic as i16;
    (if shifted > 127 { shifted - 12 } else { shifted }) as u8
}

pub fn normalize_scale(notes: &[NoteEvent], scale: Scale) -> Vec<NoteEvent> {
    notes
        .iter()
        .map(|n| NoteEvent {
            pitch: normalize_pitch(n.pitch, scale),
            ..*n
        })
        .collect()
}

pub fn denormalize_scale(notes: &[TimedNote], scale: Scale) -> Vec<TimedNote> {
    notes
        .iter()
        .map(|n| TimedNote {
            pitch: denormalize_pitch(n.pitch, scale),
            ..*n
        })
        .collect()
}

/// Scale whose pitch-class set covers the most note occurrences. Ties prefer
/// major, then the lower tonic.
pub fn detect_scale(notes: &[NoteEvent]) -> Result<Scale, TokenizerError> {
    if notes.is_empty() {
        return Err(TokenizerError::EmptyInput);
    }
    let mut histogram = [0usize; 12];
    for n in notes {
        histogram[(n.pitch % 12) as usize] += 1;
    }
    let mut best = Scale::C_MAJOR;
    let mut best_count = 0;
    for mode in [Mode::Major, Mode::Minor] {
        for tonic in 0..12 {
            let scale = Scale::new(tonic, mode);
            let count: usize = scale.degrees().iter().map(|&pc| histogram[pc as usize]).sum();
            if count > best_count {
                best = scale;
                best_count = count;
            }
        }
    }
    Ok(best)
}

fn length_tokens(thirty_seconds: f64, emit: &mut impl FnMut(LengthClass)) {
    let mut remaining = thirty_seconds;
    while remaining > 32.0 {
        emit(LengthClass::Whole);
        remaining -= 32.0;
    }
    if remaining >= 1.0 {
        emit(quantize_length(remaining / 32.0).expect("positive"));
    }
}

/// Turn monophonic (already normalised) notes into tokens.
///
/// Token time runs on its own quantised clock. Before each note the gap between
/// that clock and the note's true onset is filled with rests when it reaches a
/// 32nd; a note followed by a gap shorter than a 32nd absorbs the gap.
pub fn tokenize_notes(notes: &[NoteEvent], ticks_per_quarter: u32) -> Vec<Token> {
    let whole = 4.0 * ticks_per_quarter as f64;
    let min_gap = (4 * ticks_per_quarter as u64).div_ceil(32);
    let mut tokens = Vec::with_capacity(notes.len() * 2);
    let mut clock = 0u64; // in 32nds
    for (i, note) in notes.iter().enumerate() {
        let onset_32 = note.onset as f64 * 32.0 / whole;
        let gap = onset_32 - clock as f64;
        if gap >= 1.0 {
            length_tokens(gap, &mut |len| {
                clock += len.thirty_seconds() as u64;
                tokens.push(Token::rest(len));
            });
        }
        let mut end = note.onset + note.duration;
        if let Some(next) = notes.get(i + 1) {
            end = end.min(next.onset);
            if next.onset - end < min_gap {
                end = next.onset;
            }
        }
        let raw = (end - note.onset).max(1) as f64 / whole;
        let len = quantize_length(raw).expect("positive");
        clock += len.thirty_seconds() as u64;
        tokens.push(Token::note(note.pitch, len));
    }
    tokens
}

/// Lay tokens out on a tick grid; rests produce no notes.
pub fn detokenize(tokens: &[Token], ticks_per_quarter: u32) -> Result<Vec<TimedNote>, TokenizerError> {
    if !ticks_per_quarter.is_multiple_of(8) {
        return Err(TokenizerError::UnalignedResolution(ticks_per_quarter));
    }
    let mut t = 0u64;
    let mut out = Vec::with_capacity(tokens.len());
    for tok in tokens {
        let len = tok.length.ticks(ticks_per_quarter);
        if let Pitch::Note(p) = tok.pitch {
            out.push(TimedNote::new(p, t, len));
        }
        t += len;
    }
    Ok(out)
}

/// Both hands of one MIDI file, tokenised.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedPiece {
    pub right: TokenSequence,
    pub left: TokenSequence,
    pub scale: Scale,
    /// `true` when the file had no key signature and the scale was inferred.
    pub scale_detected: bool,
    pub track_count: usize,
}

/// Full ingestion path for one parsed file.
pub fn tokenize_document(doc: &MidiDocument) -> Result<TokenizedPiece, TokenizerError> {
    let tracks = extract_tracks(doc)?;
    let (right, left) = assign_hands(&tracks)?;
    let (scale, scale_detected) = match doc.key_signature {
        Some(k) => (Scale::from_key_signature(k.sharps, k.minor), false),
        None => {
            let all: Vec<NoteEvent> = right.iter().chain(left.iter()).copied().collect();
            (detect_scale(&all)?, true)
        }
    };
    let ts = doc.time_signature_or_default();
    let ppq = doc.ticks_per_quarter as u32;
    let hand_tokens = |notes: &[NoteEvent], hand| {
        let reduced = monophonic_reduce(&normalize_scale(notes, scale), hand);
        TokenSequence::new(tokenize_notes(&reduced, ppq), hand, scale, ts)
    };
    Ok(TokenizedPiece {
        right: hand_tokens(&right, Hand::Right),
        left: hand_tokens(&left, Hand::Left),
        scale,
        scale_detected,
        track_count: tracks.len(),
    })
}

/// One line of the token corpus:
/// `<file-id>\t<hand>\t<scale>\t<timesig>\t<space-separated token ids>`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusLine {
    pub file_id: String,
    pub sequence: TokenSequence,
}

impl fmt::Display for CorpusLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.sequence;
        write!(
            f,
            "{}\t{}\t{}\t{}\t",
            self.file_id,
            s.hand.as_str(),
            s.scale,
            s.time_signature
        )?;
        for (i, id) in s.ids().iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{id}")?;
        }
        Ok(())
    }
}

impl FromStr for CorpusLine {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(format!("expected 5 tab-separated fields, found {}", fields.len()));
        }
        let hand = Hand::parse(fields[1]).ok_or_else(|| format!("unknown hand `{}`", fields[1]))?;
        let scale: Scale = fields[2].parse().map_err(|e| format!("{e}"))?;
        let ts: TimeSignature = fields[3].parse().map_err(|e| format!("{e}"))?;
        let tokens = fields[4]
            .split_ascii_whitespace()
            .map(|s| {
                let id: usize = s.parse().map_err(|_| format!("bad token id `{s}`"))?;
                Token::decode(id).map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CorpusLine {
            file_id: fields[0].to_string(),
            sequence: TokenSequence::new(tokens, hand, scale, ts),
        })
    }
}

pub fn read_corpus(text: &str) -> Result<Vec<CorpusLine>, TokenizerError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.parse().map_err(|reason| TokenizerError::BadCorpusLine {
                line: i + 1,
                reason,
            })
        })
        .collect()
}

pub fn write_corpus(lines: &[CorpusLine]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}
