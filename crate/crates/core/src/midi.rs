//! Standard MIDI File reading and writing.
//!
//! The reader resolves note-on/note-off pairs into [`NoteEvent`]s and keeps
//! the handful of meta events the pipeline needs (key signature, time
//! signature, tempo, track names). Every read is bounds-checked, so corrupted
//! input surfaces as an error rather than a panic.
//!
//! The writer emits format 1: a conductor track carrying tempo, key and time
//! signature, followed by the right-hand and the left-hand note tracks.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::score::{PerformanceScore, TimedNote};
use crate::theory::TimeSignature;

/// Resolution used for every file this crate writes.
pub const OUTPUT_TICKS_PER_QUARTER: u16 = 480;

const DEFAULT_TEMPO: u32 = 500_000;
const NOTE_VELOCITY: u8 = 80;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MidiError {
    #[error("malformed header: {0}")]
    MalformedHeader(&'static str),
    #[error("unsupported SMF format {0}")]
    UnsupportedFormat(u16),
    #[error("SMPTE time division is not supported")]
    UnsupportedTiming,
    #[error("truncated chunk at byte {offset}")]
    TruncatedChunk { offset: usize },
    #[error("malformed event at byte {offset}: {reason}")]
    MalformedEvent { offset: usize, reason: &'static str },
    #[error("score has no notes in either hand")]
    EmptyScore,
    #[error("document contains no notes")]
    NoNoteTracks,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseWarning {
    /// A note-on never saw its note-off; it was closed at the end of the track.
    UnpairedNoteOn { track: usize, pitch: u8, onset: u64 },
    /// A note-off with no open note.
    OrphanNoteOff { track: usize, pitch: u8, tick: u64 },
    /// Note-on and note-off on the same tick; the note was dropped.
    ZeroLengthNote { track: usize, pitch: u8, tick: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySignature {
    /// Positive for sharps, negative for flats.
    pub sharps: i8,
    pub minor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NoteEvent {
    pub onset: u64,
    pub pitch: u8,
    pub duration: u64,
    pub track_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Track {
    pub name: Option<String>,
    /// Sorted by onset, then pitch.
    pub notes: Vec<NoteEvent>,
    pub end_tick: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MidiDocument {
    pub format: u16,
    pub ticks_per_quarter: u16,
    pub tracks: Vec<Track>,
    pub key_signature: Option<KeySignature>,
    pub time_signature: Option<TimeSignature>,
    /// `(tick, microseconds per quarter)`, sorted by tick.
    pub tempo_map: Vec<(u64, u32)>,
    pub warnings: Vec<ParseWarning>,
}

impl MidiDocument {
    pub fn notes(&self) -> impl Iterator<Item = &NoteEvent> {
        self.tracks.iter().flat_map(|t| t.notes.iter())
    }

    pub fn note_count(&self) -> usize {
        self.tracks.iter().map(|t| t.notes.len()).sum()
    }

    /// The file's time signature, or 4/4 when it has none.
    pub fn time_signature_or_default(&self) -> TimeSignature {
        self.time_signature.unwrap_or_default()
    }
}

/// A note-bearing track with its mean pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSummary {
    pub track_index: usize,
    pub notes: Vec<NoteEvent>,
    pub average_pitch: f64,
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn is_empty(&self) -> bool {
        self.pos >= self.data.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if n > self.remaining() {
            return Err(MidiError::TruncatedChunk { offset: self.pos });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        Ok(self.take(1)?[0])
    }

    fn peek(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, MidiError> {
        let start = self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(MidiError::MalformedEvent {
            offset: start,
            reason: "variable-length quantity longer than 4 bytes",
        })
    }
}

struct TrackParse {
    track: Track,
    key_signature: Option<(u64, KeySignature)>,
    time_signature: Option<(u64, TimeSignature)>,
    tempos: Vec<(u64, u32)>,
    warnings: Vec<ParseWarning>,
}

fn parse_track(data: &[u8], base: usize, index: usize) -> Result<TrackParse, MidiError> {
    let mut r = Reader::new(data);
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let mut open: HashMap<(u8, u8), VecDeque<u64>> = HashMap::new();
    let mut out = TrackParse {
        track: Track::default(),
        key_signature: None,
        time_signature: None,
        tempos: Vec::new(),
        warnings: Vec::new(),
    };
    let malformed = |offset: usize, reason| MidiError::MalformedEvent {
        offset: base + offset,
        reason,
    };
    let truncated = |e: MidiError| match e {
        MidiError::TruncatedChunk { offset } => MidiError::TruncatedChunk {
            offset: base + offset,
        },
        MidiError::MalformedEvent { offset, reason } => MidiError::MalformedEvent {
            offset: base + offset,
            reason,
        },
        other => other,
    };

    while !r.is_empty() {
        tick += r.vlq().map_err(truncated)? as u64;
        let event_start = r.pos;
        let first = r.peek().ok_or(MidiError::TruncatedChunk {
            offset: base + r.pos,
        })?;
        let status = if first & 0x80 != 0 {
            r.pos += 1;
            first
        } else {
            running.ok_or_else(|| malformed(event_start, "running status without a prior status byte"))?
        };

        match status {
            0xff => {
                running = None;
                let kind = r.u8().map_err(truncated)?;
                let len = r.vlq().map_err(truncated)? as usize;
                let payload = r.take(len).map_err(truncated)?;
                match kind {
                    0x03 if out.track.name.is_none() => {
                        out.track.name = Some(String::from_utf8_lossy(payload).into_owned());
                    }
                    0x2f => break,
                    0x51 if len == 3 => {
                        let us = u32::from_be_bytes([0, payload[0], payload[1], payload[2]]);
                        out.tempos.push((tick, us));
                    }
                    0x58 if len >= 2 => {
                        if out.time_signature.is_none() && payload[1] < 7 {
                            if let Some(ts) = TimeSignature::new(payload[0], 1u8 << payload[1]) {
                                out.time_signature = Some((tick, ts));
                            }
                        }
                    }
                    0x59 if len >= 2 => {
                        let sharps = payload[0] as i8;
                        if out.key_signature.is_none() && (-7..=7).contains(&sharps) {
                            out.key_signature = Some((
                                tick,
                                KeySignature {
                                    sharps,
                                    minor: payload[1] == 1,
                                },
                            ));
                        }
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.vlq().map_err(truncated)? as usize;
                r.take(len).map_err(truncated)?;
            }
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                let data_len = match status & 0xf0 {
                    0xc0 | 0xd0 => 1,
                    _ => 2,
                };
                let bytes = r.take(data_len).map_err(truncated)?;
                if bytes.iter().any(|b| b & 0x80 != 0) {
                    return Err(malformed(event_start, "data byte with high bit set"));
                }
                let kind = status & 0xf0;
                let is_on = kind == 0x90 && bytes[1] > 0;
                let is_off = kind == 0x80 || (kind == 0x90 && bytes[1] == 0);
                let pitch = bytes.first().copied().unwrap_or(0);
                if is_on {
                    open.entry((channel, pitch)).or_default().push_back(tick);
                } else if is_off {
                    match open.get_mut(&(channel, pitch)).and_then(VecDeque::pop_front) {
                        Some(onset) if tick > onset => out.track.notes.push(NoteEvent {
                            onset,
                            pitch,
                            duration: tick - onset,
                            track_index: index,
                        }),
                        Some(_) => out.warnings.push(ParseWarning::ZeroLengthNote {
                            track: index,
                            pitch,
                            tick,
                        }),
                        None => out.warnings.push(ParseWarning::OrphanNoteOff {
                            track: index,
                            pitch,
                            tick,
                        }),
                    }
                }
            }
            _ => return Err(malformed(event_start, "unsupported status byte")),
        }
    }

    out.track.end_tick = tick;
    let mut dangling: Vec<_> = open
        .into_iter()
        .flat_map(|((_, pitch), onsets)| onsets.into_iter().map(move |o| (o, pitch)))
        .collect();
    dangling.sort_unstable();
    for (onset, pitch) in dangling {
        out.warnings.push(ParseWarning::UnpairedNoteOn {
            track: index,
            pitch,
            onset,
        });
        out.track.notes.push(NoteEvent {
            onset,
            pitch,
            duration: tick.saturating_sub(onset).max(1),
            track_index: index,
        });
    }
    out.track.notes.sort_unstable();
    Ok(out)
}

/// Parse an SMF byte buffer.
pub fn parse_midi(bytes: &[u8]) -> Result<MidiDocument, MidiError> {
    let mut r = Reader::new(bytes);
    if r.take(4).map_err(|_| MidiError::MalformedHeader("file too short"))? != b"MThd" {
        return Err(MidiError::MalformedHeader("missing MThd magic"));
    }
    let header_len = r.u32().map_err(|_| MidiError::MalformedHeader("file too short"))? as usize;
    if header_len < 6 {
        return Err(MidiError::MalformedHeader("header chunk shorter than 6 bytes"));
    }
    let header = r
        .take(header_len)
        .map_err(|_| MidiError::MalformedHeader("header chunk truncated"))?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let declared_tracks = u16::from_be_bytes([header[2], header[3]]);
    let division = u16::from_be_bytes([header[4], header[5]]);
    if format > 2 {
        return Err(MidiError::MalformedHeader("format number out of range"));
    }
    if format == 2 {
        return Err(MidiError::UnsupportedFormat(format));
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::UnsupportedTiming);
    }
    if division == 0 {
        return Err(MidiError::MalformedHeader("zero ticks per quarter note"));
    }

    let mut parsed = Vec::new();
    while r.remaining() >= 8 && parsed.len() < declared_tracks as usize {
        let chunk_start = r.pos;
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        if len > r.remaining() {
            return Err(MidiError::TruncatedChunk {
                offset: chunk_start,
            });
        }
        let body_start = r.pos;
        let body = r.take(len)?;
        if id == b"MTrk" {
            parsed.push(parse_track(body, body_start, parsed.len())?);
        }
    }
    if parsed.len() < declared_tracks as usize {
        return Err(MidiError::TruncatedChunk { offset: r.pos });
    }

    // First occurrence wins: earliest tick, then lowest track index.
    let key_signature = parsed
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.key_signature.map(|(tick, k)| (tick, i, k)))
        .min_by_key(|&(tick, i, _)| (tick, i))
        .map(|(_, _, k)| k);
    let time_signature = parsed
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.time_signature.map(|(tick, ts)| (tick, i, ts)))
        .min_by_key(|&(tick, i, _)| (tick, i))
        .map(|(_, _, ts)| ts);
    let mut tempo_map: Vec<(u64, u32)> = parsed.iter().flat_map(|t| t.tempos.iter().copied()).collect();
    tempo_map.sort_by_key(|&(tick, _)| tick);

    let mut warnings = Vec::new();
    let mut tracks = Vec::with_capacity(parsed.len());
    for t in parsed {
        warnings.extend(t.warnings);
        tracks.push(t.track);
    }

    Ok(MidiDocument {
        format,
        ticks_per_quarter: division,
        tracks,
        key_signature,
        time_signature,
        tempo_map,
        warnings,
    })
}

/// Note-bearing tracks with their average pitch. Empty tracks are skipped.
pub fn extract_tracks(doc: &MidiDocument) -> Result<Vec<TrackSummary>, MidiError> {
    let summaries: Vec<TrackSummary> = doc
        .tracks
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.notes.is_empty())
        .map(|(i, t)| TrackSummary {
            track_index: i,
            average_pitch: t.notes.iter().map(|n| n.pitch as f64).sum::<f64>() / t.notes.len() as f64,
            notes: t.notes.clone(),
        })
        .collect();
    if summaries.is_empty() {
        Err(MidiError::NoNoteTracks)
    } else {
        Ok(summaries)
    }
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7f) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = (value & 0x7f) as u8 | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

fn write_chunk(out: &mut Vec<u8>, id: &[u8; 4], body: &[u8]) {
    out.extend_from_slice(id);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
}

fn track_body(events: &mut [(u64, Vec<u8>)]) -> Vec<u8> {
    // Stable sort keeps note-offs ahead of note-ons at equal ticks.
    events.sort_by_key(|(tick, _)| *tick);
    let mut body = Vec::new();
    let mut last = 0u64;
    for (tick, bytes) in events.iter() {
        write_vlq(&mut body, (*tick - last) as u32);
        body.extend_from_slice(bytes);
        last = *tick;
    }
    write_vlq(&mut body, 0);
    body.extend_from_slice(&[0xff, 0x2f, 0x00]);
    body
}

fn note_track(notes: &[TimedNote], channel: u8, name: &str, scale_num: u64, scale_den: u64) -> Vec<u8> {
    let rescale = |t: u64| t * scale_num / scale_den;
    let mut offs = Vec::with_capacity(notes.len());
    let mut ons = Vec::with_capacity(notes.len());
    for n in notes {
        let on = rescale(n.onset);
        let off = rescale(n.end()).max(on + 1);
        ons.push((on, vec![0x90 | channel, n.pitch, NOTE_VELOCITY]));
        offs.push((off, vec![0x80 | channel, n.pitch, 0]));
    }
    let mut events = vec![(0u64, {
        let mut e = vec![0xff, 0x03];
        write_vlq(&mut e, name.len() as u32);
        e.extend_from_slice(name.as_bytes());
        e
    })];
    events.extend(offs);
    events.extend(ons);
    track_body(&mut events)
}

/// Serialise a score as SMF format 1 at the given resolution.
pub fn write_midi(score: &PerformanceScore, ticks_per_quarter: u16) -> Result<Vec<u8>, MidiError> {
    if score.is_empty() {
        return Err(MidiError::EmptyScore);
    }
    if ticks_per_quarter == 0 || ticks_per_quarter & 0x8000 != 0 {
        return Err(MidiError::MalformedHeader("ticks per quarter must be in 1..=32767"));
    }
    let (num, den) = (ticks_per_quarter as u64, score.ticks_per_quarter.max(1) as u64);

    let ts = score.time_signature;
    let mut conductor = vec![
        (0u64, vec![0xff, 0x51, 0x03, (DEFAULT_TEMPO >> 16) as u8, (DEFAULT_TEMPO >> 8) as u8, DEFAULT_TEMPO as u8]),
        (
            0,
            vec![0xff, 0x58, 0x04, ts.numerator, ts.denominator.trailing_zeros() as u8, 24, 8],
        ),
        (
            0,
            vec![
                0xff,
                0x59,
                0x02,
                score.scale.key_signature_sharps() as u8,
                (score.scale.mode == crate::theory::Mode::Minor) as u8,
            ],
        ),
    ];

    let mut out = Vec::new();
    let mut header = Vec::with_capacity(6);
    header.extend_from_slice(&1u16.to_be_bytes());
    header.extend_from_slice(&3u16.to_be_bytes());
    header.extend_from_slice(&ticks_per_quarter.to_be_bytes());
    write_chunk(&mut out, b"MThd", &header);
    write_chunk(&mut out, b"MTrk", &track_body(&mut conductor));
    write_chunk(&mut out, b"MTrk", &note_track(&score.right, 0, "Right Hand", num, den));
    write_chunk(&mut out, b"MTrk", &note_track(&score.left, 1, "Left Hand", num, den));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::{Mode, Scale};

    fn single_note_file() -> Vec<u8> {
        let mut f = Vec::new();
        f.extend_from_slice(b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x01\xe0");
        let body: &[u8] = &[
            0x00, 0x90, 60, 100, // note on
            0x83, 0x60, 0x80, 60, 0, // +480 note off
            0x00, 0xff, 0x2f, 0x00,
        ];
        f.extend_from_slice(b"MTrk");
        f.extend_from_slice(&(body.len() as u32).to_be_bytes());
        f.extend_from_slice(body);
        f
    }

    #[test]
    fn parses_single_quarter_note() {
        let doc = parse_midi(&single_note_file()).unwrap();
        assert_eq!(doc.ticks_per_quarter, 480);
        let notes: Vec<_> = doc.notes().copied().collect();
        assert_eq!(
            notes,
            vec![NoteEvent {
                onset: 0,
                pitch: 60,
                duration: 480,
                track_index: 0
            }]
        );
        assert!(doc.warnings.is_empty());
        assert_eq!(doc.time_signature, None);
        assert_eq!(doc.time_signature_or_default(), TimeSignature::COMMON);
    }

    #[test]
    fn bad_magic_is_malformed_header() {
        let mut f = single_note_file();
        f[3] = b'x';
        assert!(matches!(parse_midi(&f), Err(MidiError::MalformedHeader(_))));
        assert!(matches!(parse_midi(b"MT"), Err(MidiError::MalformedHeader(_))));
    }

    #[test]
    fn format_two_rejected() {
        let mut f = single_note_file();
        f[9] = 2;
        assert_eq!(parse_midi(&f), Err(MidiError::UnsupportedFormat(2)));
    }

    #[test]
    fn running_status_and_velocity_zero_off() {
        let mut f = Vec::new();
        f.extend_from_slice(b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x00\x60");
        let body: &[u8] = &[
            0x00, 0x90, 60, 90, // C on
            0x00, 64, 90, // E on (running status)
            0x60, 60, 0, // C off via velocity 0
            0x00, 64, 0, // E off
            0x00, 0xff, 0x2f, 0x00,
        ];
        f.extend_from_slice(b"MTrk");
        f.extend_from_slice(&(body.len() as u32).to_be_bytes());
        f.extend_from_slice(body);
        let doc = parse_midi(&f).unwrap();
        let pitches: Vec<_> = doc.notes().map(|n| (n.pitch, n.duration)).collect();
        assert_eq!(pitches, vec![(60, 96), (64, 96)]);
    }

    #[test]
    fn unpaired_note_on_closed_at_track_end() {
        let mut f = Vec::new();
        f.extend_from_slice(b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x00\x60");
        let body: &[u8] = &[0x00, 0x90, 60, 90, 0x60, 0xff, 0x2f, 0x00];
        f.extend_from_slice(b"MTrk");
        f.extend_from_slice(&(body.len() as u32).to_be_bytes());
        f.extend_from_slice(body);
        let doc = parse_midi(&f).unwrap();
        assert_eq!(doc.notes().next().unwrap().duration, 96);
        assert_eq!(
            doc.warnings,
            vec![ParseWarning::UnpairedNoteOn {
                track: 0,
                pitch: 60,
                onset: 0
            }]
        );
    }

    #[test]
    fn truncated_track_errors() {
        let f = single_note_file();
        for cut in 14..f.len() - 1 {
            let r = parse_midi(&f[..cut]);
            assert!(r.is_err(), "cut at {cut} parsed");
        }
    }

    #[test]
    fn extract_tracks_averages() {
        let mk = |track_index, pitches: &[u8]| Track {
            name: None,
            notes: pitches
                .iter()
                .enumerate()
                .map(|(i, &pitch)| NoteEvent {
                    onset: i as u64 * 10,
                    pitch,
                    duration: 10,
                    track_index,
                })
                .collect(),
            end_tick: 100,
        };
        let doc = MidiDocument {
            format: 1,
            ticks_per_quarter: 480,
            tracks: vec![Track::default(), mk(1, &[60, 64]), mk(2, &[40, 43])],
            key_signature: None,
            time_signature: None,
            tempo_map: vec![],
            warnings: vec![],
        };
        let t = extract_tracks(&doc).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].track_index, t[0].average_pitch), (1, 62.0));
        assert_eq!((t[1].track_index, t[1].average_pitch), (2, 41.5));

        let meta_only = MidiDocument {
            tracks: vec![Track::default()],
            ..doc
        };
        assert_eq!(extract_tracks(&meta_only), Err(MidiError::NoNoteTracks));
    }

    #[test]
    fn writes_key_and_time_signature() {
        let score = PerformanceScore::new(
            480,
            vec![TimedNote::new(60, 0, 480)],
            vec![],
            Scale::C_MAJOR,
            TimeSignature::COMMON,
        );
        let doc = parse_midi(&write_midi(&score, 480).unwrap()).unwrap();
        assert_eq!(doc.format, 1);
        assert_eq!(
            doc.key_signature,
            Some(KeySignature {
                sharps: 0,
                minor: false
            })
        );
        assert_eq!(doc.time_signature, Some(TimeSignature::COMMON));
        let notes: Vec<_> = doc.notes().map(|n| (n.pitch, n.onset, n.duration)).collect();
        assert_eq!(notes, vec![(60, 0, 480)]);

        let minor = PerformanceScore {
            scale: Scale::new(4, Mode::Minor),
            ..score.clone()
        };
        let doc = parse_midi(&write_midi(&minor, 480).unwrap()).unwrap();
        assert_eq!(
            doc.key_signature,
            Some(KeySignature {
                sharps: 1,
                minor: true
            })
        );
    }

    #[test]
    fn empty_score_rejected() {
        let score = PerformanceScore::new(480, vec![], vec![], Scale::C_MAJOR, TimeSignature::COMMON);
        assert_eq!(write_midi(&score, 480), Err(MidiError::EmptyScore));
    }

    #[test]
    fn vlq_encoding_matches_reference_values() {
        for (v, bytes) in [
            (0u32, vec![0x00]),
            (0x40, vec![0x40]),
            (0x7f, vec![0x7f]),
            (0x80, vec![0x81, 0x00]),
            (0x2000, vec![0xc0, 0x00]),
            (0x3fff, vec![0xff, 0x7f]),
            (0x0fff_ffff, vec![0xff, 0xff, 0xff, 0x7f]),
        ] {
            let mut out = Vec::new();
            write_vlq(&mut out, v);
            assert_eq!(out, bytes);
            assert_eq!(Reader::new(&bytes).vlq().unwrap(), v);
        }
    }
}
