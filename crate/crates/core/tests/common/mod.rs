#![allow(dead_code)]

use amuze::midi::{parse_midi, write_midi, MidiDocument};
use amuze::model::{Conditioning, ModelDims, ModelMode, SequenceModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use amuze::{Mode, PerformanceScore, Scale, TimeSignature, TimedNote};

pub const PPQ: u32 = 480;
pub const EIGHTH: u64 = 240;
pub const QUARTER: u64 = 480;

pub fn n(pitch: u8, onset: u64, duration: u64) -> TimedNote {
    TimedNote::new(pitch, onset, duration)
}

/// Notes laid end to end from `start`, `(pitch, length)` pairs; pitch 0 is a rest.
pub fn line(start: u64, spec: &[(u8, u64)]) -> Vec<TimedNote> {
    let mut t = start;
    let mut out = Vec::new();
    for &(p, len) in spec {
        if p > 0 {
            out.push(n(p, t, len));
        }
        t += len;
    }
    out
}

pub fn transpose(notes: &[TimedNote], k: i32) -> Vec<TimedNote> {
    notes
        .iter()
        .map(|x| TimedNote {
            pitch: (x.pitch as i32 + k) as u8,
            ..*x
        })
        .collect()
}

pub struct Fixture {
    pub name: &'static str,
    pub score: PerformanceScore,
}

impl Fixture {
    pub fn bytes(&self) -> Vec<u8> {
        write_midi(&self.score, PPQ as u16).unwrap()
    }

    pub fn document(&self) -> MidiDocument {
        parse_midi(&self.bytes()).unwrap()
    }

    pub fn transposed(&self, k: i32) -> Fixture {
        let s = &self.score;
        let tonic = (s.scale.tonic as i32 + k).rem_euclid(12) as u8;
        Fixture {
            name: self.name,
            score: PerformanceScore::new(
                s.ticks_per_quarter,
                transpose(&s.right, k),
                transpose(&s.left, k),
                Scale::new(tonic, s.scale.mode),
                s.time_signature,
            ),
        }
    }
}

/// Three small two-hand pieces in different keys and metres, with rests,
/// dotted lengths and some left-hand polyphony.
pub fn fixtures() -> Vec<Fixture> {
    let d_major = {
        let right = line(
            0,
            &[(74, 480), (76, 240), (78, 240), (79, 480), (81, 480), (0, 480), (78, 720), (76, 240), (74, 960)],
        );
        let left = line(0, &[(50, 960), (57, 960), (55, 960), (0, 480), (50, 480)]);
        PerformanceScore::new(PPQ, right, left, Scale::new(2, Mode::Major), TimeSignature::COMMON)
    };
    let a_minor = {
        let right = line(
            240,
            &[(69, 240), (72, 240), (76, 480), (74, 240), (72, 240), (71, 720), (0, 240), (69, 1440)],
        );
        let mut left = line(0, &[(45, 1440), (52, 1440), (45, 1440)]);
        left.push(n(52, 0, 480));
        left.push(n(57, 1440, 480));
        left.sort();
        PerformanceScore::new(PPQ, right, left, Scale::new(9, Mode::Minor), TimeSignature::new(3, 4).unwrap())
    };
    let b_flat = {
        let right = line(
            0,
            &[(70, 180), (72, 60), (74, 240), (75, 360), (77, 120), (0, 120), (82, 600), (81, 240), (79, 120), (77, 1920)],
        );
        let left = line(120, &[(46, 840), (0, 240), (53, 1080), (46, 1920)]);
        PerformanceScore::new(PPQ, right, left, Scale::new(10, Mode::Major), TimeSignature::new(6, 8).unwrap())
    };
    vec![
        Fixture {
            name: "d_major",
            score: d_major,
        },
        Fixture {
            name: "a_minor",
            score: a_minor,
        },
        Fixture {
            name: "b_flat",
            score: b_flat,
        },
    ]
}

pub fn vlq(mut v: u32) -> Vec<u8> {
    let mut out = vec![(v & 0x7f) as u8];
    v >>= 7;
    while v > 0 {
        out.push(0x80 | (v & 0x7f) as u8);
        v >>= 7;
    }
    out.reverse();
    out
}

/// A track chunk from `(absolute tick, event bytes)` pairs, already sorted.
pub fn raw_track(name: Option<&str>, events: &[(u32, Vec<u8>)]) -> Vec<u8> {
    let mut body = Vec::new();
    if let Some(name) = name {
        body.extend([0x00, 0xff, 0x03, name.len() as u8]);
        body.extend(name.as_bytes());
    }
    let mut last = 0;
    for (tick, bytes) in events {
        body.extend(vlq(tick - last));
        body.extend(bytes);
        last = *tick;
    }
    body.extend([0x00, 0xff, 0x2f, 0x00]);
    let mut chunk = b"MTrk".to_vec();
    chunk.extend((body.len() as u32).to_be_bytes());
    chunk.extend(body);
    chunk
}

/// Note on/off pairs for `(pitch, onset, duration)` on one channel.
pub fn note_events(channel: u8, notes: &[(u8, u32, u32)]) -> Vec<(u32, Vec<u8>)> {
    let mut ev = Vec::new();
    for &(p, on, d) in notes {
        ev.push((on, vec![0x90 | channel, p, 64]));
        ev.push((on + d, vec![0x80 | channel, p, 0]));
    }
    ev.sort_by_key(|(t, b)| (*t, b[0] & 0xf0 == 0x90));
    ev
}

pub fn raw_smf(format: u16, ppq: u16, tracks: &[Vec<u8>]) -> Vec<u8> {
    let mut out = b"MThd".to_vec();
    out.extend(6u32.to_be_bytes());
    out.extend(format.to_be_bytes());
    out.extend((tracks.len() as u16).to_be_bytes());
    out.extend(ppq.to_be_bytes());
    for t in tracks {
        out.extend(t);
    }
    out
}

/// Pitch with class `pc` closest to `near`.
fn place(pc: u8, near: i32) -> u8 {
    let base = near - near.rem_euclid(12) + pc as i32;
    let candidates = [base - 12, base, base + 12];
    *candidates.iter().min_by_key(|&&p| (p - near).abs()).unwrap() as u8
}

/// A deterministic two-hand piece: a diatonic chord progression, a melody of
/// mostly chord tones with running sixteenths, and a left hand of roots,
/// fifths and broken chords.
pub fn synthetic_piece(seed: u64) -> PerformanceScore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tonic = (seed * 7 % 12) as u8;
    let mode = if seed % 3 == 2 { Mode::Minor } else { Mode::Major };
    let scale = Scale::new(tonic, mode);
    let ts = if seed % 4 == 3 { TimeSignature::new(3, 4).unwrap() } else { TimeSignature::COMMON };
    let beats = ts.numerator as u64;
    let deg = scale.degrees();
    let bars = 32 + (seed % 9) as usize;

    let mut progression = vec![0usize];
    while progression.len() < bars - 2 {
        let options: &[usize] = match progression.last().unwrap() {
            0 => &[3, 4, 5, 1],
            1 => &[4],
            3 => &[4, 0, 1],
            4 => &[0, 5],
            _ => &[3, 1],
        };
        progression.push(options[rng.random_range(0..options.len())]);
    }
    progression.extend([4, 0]);

    let mut right = Vec::new();
    let mut left = Vec::new();
    let mut prev = 72 + tonic as i32;
    for (b, &d) in progression.iter().enumerate() {
        let start = b as u64 * beats * QUARTER;
        let chord = [deg[d], deg[(d + 2) % 7], deg[(d + 4) % 7]];

        // melody rhythm: quarters and eighth pairs, sometimes a dotted figure
        let mut t = 0;
        while t < beats * QUARTER {
            let left_in_bar = beats * QUARTER - t;
            let len = match rng.random_range(0..8) {
                0 if left_in_bar >= 720 => 720,
                1 | 2 => EIGHTH,
                3 if left_in_bar >= 960 => 960,
                4 | 5 => EIGHTH / 2,
                _ => QUARTER,
            };
            let on_beat = t % QUARTER == 0;
            let pc = if on_beat || rng.random_bool(0.6) {
                chord[rng.random_range(0..3)]
            } else {
                deg[rng.random_range(0..7)]
            };
            let pitch = place(pc, prev + rng.random_range(-3..=3)).clamp(62, 88);
            prev = pitch as i32;
            right.push(n(pitch, start + t, len));
            t += len;
        }

        let root = place(chord[0], 45);
        let fifth = place(chord[2], root as i32 + 7);
        let third = place(chord[1], root as i32 + 4);
        match rng.random_range(0..3) {
            0 => left.push(n(root, start, beats * QUARTER)),
            1 => {
                let half = beats * QUARTER / 2;
                left.push(n(root, start, half));
                left.push(n(fifth, start + half, beats * QUARTER - half));
            }
            _ => {
                for i in 0..beats {
                    let p = [root, third, fifth, third][i as usize % 4];
                    left.push(n(p, start + i * QUARTER, QUARTER));
                }
            }
        }
    }
    PerformanceScore::new(PPQ, right, left, scale, ts)
}

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;

pub fn toy_model(mode: ModelMode) -> SequenceModel<f64> {
    let dims = ModelDims {
        vocab: 12,
        embed: 3,
        hidden: 4,
        layers: 2,
        chord_vocab: 5,
    };
    let mut m = SequenceModel::<f64>::new(mode, dims, &mut ChaCha8Rng::seed_from_u64(17));
    m.dropout = 0.0;
    m
}

fn bump(model: &mut SequenceModel<f64>, k: usize, delta: f64) {
    let mut seen = 0;
    for t in model.params.tensors_mut() {
        if k < seen + t.len() {
            t[k - seen] += delta;
            return;
        }
        seen += t.len();
    }
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter.
pub fn max_relative_error(mut model: SequenceModel<f64>, cond: Conditioning<'_>) -> f64 {
    let inputs = [3usize, 7, 1];
    let targets = [7usize, 1, 10];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut state = model.initial_state();
    for v in state.h.iter_mut().chain(state.c.iter_mut()) {
        v.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }

    let (_, grads, _) = model.loss_and_grads(&inputs, &targets, cond, &state, None).unwrap();
    let analytic: Vec<f64> = grads.tensors().into_iter().flat_map(|(_, t)| t.to_vec()).collect();

    let total = model.params.len();
    let mut worst = 0.0f64;
    for k in 0..total {
        bump(&mut model, k, GRAD_STEP);
        let (up, _, _) = model.loss_and_grads(&inputs, &targets, cond, &state, None).unwrap();
        bump(&mut model, k, -2.0 * GRAD_STEP);
        let (down, _, _) = model.loss_and_grads(&inputs, &targets, cond, &state, None).unwrap();
        bump(&mut model, k, GRAD_STEP);
        let numeric = (up - down) / (2.0 * GRAD_STEP);
        let a = analytic[k];
        let rel = (a - numeric).abs() / f64::max(1e-8, a.abs() + numeric.abs());
        worst = worst.max(rel);
    }
    worst
}
