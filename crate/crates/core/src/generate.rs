//! Two-stage generation: melody first, then harmony conditioned on the chord
//! of each melody bar, then optional note enrichment.

use rand::Rng;
use thiserror::Error;

use crate::chords::{ChordId, ChordTable};
use crate::model::{sample_top_k, Conditioning, RecurrentState, ModelError, ModelMode, Real, SequenceModel, StepConditioning, TrainingExample};
use crate::score::{PerformanceScore, TimedNote};
use crate::theory::{pitch_class, Scale};
use crate::tokenizer::{denormalize_scale, detokenize, Token, TokenSequence, TokenizerError};

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("harmony generation needs at least one melody bar")]
    MissingChords,
    #[error("expected a {expected} model, got {found}")]
    WrongModelMode { expected: &'static str, found: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

/// Per-bar view of a melody: its chord and the ids of its note tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct MelodyBars {
    /// Bar length in 32nd notes.
    pub bar_length: u64,
    pub chords: Vec<ChordId>,
    pub notes: Vec<Vec<usize>>,
}

impl MelodyBars {
    /// Partition by cumulative token length. A token belongs to the bar its
    /// onset falls in, even when it rings past the barline.
    pub fn from_melody(melody: &TokenSequence, table: &ChordTable) -> MelodyBars {
        let bar_length = melody.time_signature.bar_thirty_seconds() as u64;
        let bar_count = melody.duration_thirty_seconds().div_ceil(bar_length) as usize;
        let mut pitch_classes: Vec<Vec<u8>> = vec![Vec::new(); bar_count];
        let mut notes: Vec<Vec<usize>> = vec![Vec::new(); bar_count];
        for (tok, onset) in melody.tokens.iter().zip(melody.onsets()) {
            if let Some(p) = tok.midi_pitch() {
                let bar = (onset / bar_length) as usize;
                pitch_classes[bar].push(pitch_class(p));
                notes[bar].push(tok.encode().expect("valid token"));
            }
        }
        let mut chords = Vec::with_capacity(bar_count);
        let mut previous = None;
        for bar in &pitch_classes {
            let chord = table.match_bar(bar, previous);
            chords.push(chord);
            previous = Some(chord);
        }
        MelodyBars {
            bar_length,
            chords,
            notes,
        }
    }

    pub fn len(&self) -> usize {
        self.chords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chords.is_empty()
    }

    /// Bar containing `onset`; past the end the last bar persists.
    pub fn bar_at(&self, onset: u64) -> usize {
        ((onset / self.bar_length) as usize).min(self.len().saturating_sub(1))
    }

    /// Chord per token for a harmony sequence with the given onsets. An empty
    /// melody conditions on C major throughout.
    pub fn chords_for(&self, onsets: &[u64]) -> Vec<usize> {
        onsets
            .iter()
            .map(|&o| if self.is_empty() { 0 } else { self.chords[self.bar_at(o)].index() })
            .collect()
    }

    pub fn notes_for(&self, onsets: &[u64]) -> Vec<Vec<usize>> {
        onsets
            .iter()
            .map(|&o| if self.is_empty() { Vec::new() } else { self.notes[self.bar_at(o)].clone() })
            .collect()
    }

    fn conditioning_for(&self, mode: ModelMode, onsets: &[u64]) -> StepConditioning {
        match mode {
            ModelMode::Melody => StepConditioning::None,
            ModelMode::Harmony => StepConditioning::Chords(self.chords_for(onsets)),
            ModelMode::HarmonySum => StepConditioning::BarNotes(self.notes_for(onsets)),
        }
    }
}

/// One chord per melody bar.
pub fn bars_and_chords(melody: &TokenSequence, table: &ChordTable) -> Vec<ChordId> {
    MelodyBars::from_melody(melody, table).chords
}

/// Training input for a left-hand model: ground-truth melody bars supply the
/// conditioning for every left-hand token.
pub fn harmony_training_example(
    right: &TokenSequence,
    left: &TokenSequence,
    mode: ModelMode,
    table: &ChordTable,
) -> TrainingExample {
    let bars = MelodyBars::from_melody(right, table);
    TrainingExample {
        ids: left.ids(),
        conditioning: bars.conditioning_for(mode, &left.onsets()),
    }
}

fn expect_mode<T: Real>(model: &SequenceModel<T>, allowed: &[ModelMode], expected: &'static str) -> Result<(), GenerateError> {
    if allowed.contains(&model.mode) {
        Ok(())
    } else {
        Err(GenerateError::WrongModelMode {
            expected,
            found: model.mode.as_str(),
        })
    }
}

/// Teacher-force the prompt, then sample `n` more tokens from a state that is
/// never reset. Output is prompt followed by the samples.
pub fn generate_melody<T: Real, R: Rng + ?Sized>(
    model: &SequenceModel<T>,
    prompt: &TokenSequence,
    n: usize,
    k: usize,
    filter_rest: bool,
    rng: &mut R,
) -> Result<TokenSequence, GenerateError> {
    expect_mode(model, &[ModelMode::Melody], "melody")?;
    if prompt.is_empty() {
        return Err(GenerateError::EmptyPrompt);
    }
    let mut out = prompt.clone();
    if n == 0 {
        return Ok(out);
    }
    let (logits, mut state) = model.forward(&prompt.ids(), Conditioning::None, &model.initial_state(), None)?;
    let mut last = logits.row(logits.nrows() - 1).to_owned();
    for i in 0..n {
        let id = sample_top_k(last.as_slice().expect("contiguous"), k, rng, filter_rest);
        out.tokens.push(Token::decode(id)?);
        if i + 1 < n {
            let (logits, next) = model.forward(&[id], Conditioning::None, &state, None)?;
            last = logits.row(0).to_owned();
            state = next;
        }
    }
    Ok(out)
}

/// How long the harmony keeps sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarmonyBudget {
    /// Exactly this many new tokens.
    Tokens(usize),
    /// Until the total length (prompt included) reaches this many 32nds.
    Duration(u64),
}

/// Same loop as [`generate_melody`], with each step conditioned on the melody
/// bar its onset falls in. A melody-mode model runs unconditioned.
pub fn generate_harmony<T: Real, R: Rng + ?Sized>(
    model: &SequenceModel<T>,
    prompt: &TokenSequence,
    melody: &MelodyBars,
    budget: HarmonyBudget,
    k: usize,
    filter_rest: bool,
    rng: &mut R,
) -> Result<TokenSequence, GenerateError> {
    if prompt.is_empty() {
        return Err(GenerateError::EmptyPrompt);
    }
    if model.mode != ModelMode::Melody && melody.is_empty() {
        return Err(GenerateError::MissingChords);
    }
    let mut out = prompt.clone();
    let mut clock = prompt.duration_thirty_seconds();
    let done = |generated: usize, clock: u64| match budget {
        HarmonyBudget::Tokens(n) => generated >= n,
        HarmonyBudget::Duration(d) => clock >= d,
    };
    if done(0, clock) {
        return Ok(out);
    }

    let forward = |ids: &[usize], onsets: &[u64], state: &RecurrentState<T>| {
        let cond = melody.conditioning_for(model.mode, onsets);
        let window = match &cond {
            StepConditioning::None => Conditioning::None,
            StepConditioning::Chords(c) => Conditioning::Chords(c),
            StepConditioning::BarNotes(b) => Conditioning::BarNotes(b),
        };
        model.forward(ids, window, state, None)
    };

    let (logits, mut state) = forward(&prompt.ids(), &prompt.onsets(), &model.initial_state())?;
    let mut last = logits.row(logits.nrows() - 1).to_owned();
    let mut generated = 0;
    loop {
        let id = sample_top_k(last.as_slice().expect("contiguous"), k, rng, filter_rest);
        let token = Token::decode(id)?;
        out.tokens.push(token);
        let onset = clock;
        clock += token.length.thirty_seconds() as u64;
        generated += 1;
        if done(generated, clock) {
            return Ok(out);
        }
        let (logits, next) = forward(&[id], &[onset], &state)?;
        last = logits.row(0).to_owned();
        state = next;
    }
}

/// Probability of each enrichment coin flip, per hand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnrichConfig {
    pub p_melody: f64,
    pub p_harmony: f64,
}

impl Default for EnrichConfig {
    fn default() -> Self {
        EnrichConfig {
            p_melody: 0.5,
            p_harmony: 0.1,
        }
    }
}

fn enrich_hand<R: Rng + ?Sized>(notes: &mut Vec<TimedNote>, scale: Scale, p: f64, rng: &mut R) {
    let mut added = Vec::new();
    for n in notes.iter() {
        if scale.contains(n.pitch) {
            // Diatonic fifth (four degrees up), then diatonic third (two up).
            for steps in [4, 2] {
                let hit = rng.random::<f64>() < p;
                if hit {
                    let up = scale.diatonic_interval_above(n.pitch, steps).expect("in scale");
                    if let Some(pitch) = n.pitch.checked_add(up).filter(|&q| q <= 127) {
                        added.push(TimedNote { pitch, ..*n });
                    }
                }
            }
        } else if rng.random::<f64>() < p {
            if let Some(pitch) = n.pitch.checked_add(12).filter(|&q| q <= 127) {
                added.push(TimedNote { pitch, ..*n });
            }
        }
    }
    notes.extend(added);
    notes.sort();
}

/// Add companion notes. In-scale notes get two independent chances at the
/// diatonic fifth and third above; out-of-scale notes one chance at the octave
/// above. Companions share the parent's onset and length.
pub fn enrich<R: Rng + ?Sized>(score: &PerformanceScore, cfg: &EnrichConfig, rng: &mut R) -> PerformanceScore {
    let mut out = score.clone();
    enrich_hand(&mut out.right, score.scale, cfg.p_melody, rng);
    enrich_hand(&mut out.left, score.scale, cfg.p_harmony, rng);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub melody: TokenSequence,
    pub harmony: TokenSequence,
    pub num_notes: usize,
}

impl Prompt {
    /// Prompt built from the first `bars` bars of each hand.
    pub fn from_bars(right: &TokenSequence, left: &TokenSequence, bars: usize, num_notes: usize) -> Prompt {
        let take = |s: &TokenSequence| {
            let limit = bars as u64 * s.time_signature.bar_thirty_seconds() as u64;
            let n = s.onsets().iter().take_while(|&&o| o < limit).count();
            s.truncated(n)
        };
        Prompt {
            melody: take(right),
            harmony: take(left),
            num_notes,
        }
    }

    /// Prompt built from the first `notes` tokens of each hand.
    pub fn from_notes(right: &TokenSequence, left: &TokenSequence, notes: usize, num_notes: usize) -> Prompt {
        Prompt {
            melody: right.truncated(notes),
            harmony: left.truncated(notes),
            num_notes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub top_k: usize,
    pub filter_rest: bool,
    /// `None` skips enrichment.
    pub enrich: Option<EnrichConfig>,
    pub ticks_per_quarter: u32,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            top_k: 5,
            filter_rest: true,
            enrich: Some(EnrichConfig::default()),
            ticks_per_quarter: crate::midi::OUTPUT_TICKS_PER_QUARTER as u32,
        }
    }
}

/// Generated token streams alongside the finished score.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub melody: TokenSequence,
    pub harmony: TokenSequence,
    pub score: PerformanceScore,
}

/// Melody, bar chords, harmony, pitch de-normalisation, enrichment.
pub fn generate_score<T: Real, R: Rng + ?Sized>(
    melody_model: &SequenceModel<T>,
    harmony_model: &SequenceModel<T>,
    prompt: &Prompt,
    table: &ChordTable,
    cfg: &GenerateConfig,
    rng: &mut R,
) -> Result<Generation, GenerateError> {
    let melody = generate_melody(melody_model, &prompt.melody, prompt.num_notes, cfg.top_k, cfg.filter_rest, rng)?;
    let bars = MelodyBars::from_melody(&melody, table);
    let harmony = generate_harmony(
        harmony_model,
        &prompt.harmony,
        &bars,
        HarmonyBudget::Duration(melody.duration_thirty_seconds()),
        cfg.top_k,
        cfg.filter_rest,
        rng,
    )?;

    let scale = prompt.melody.scale;
    let ppq = cfg.ticks_per_quarter;
    let right = denormalize_scale(&detokenize(&melody.tokens, ppq)?, scale);
    let left = denormalize_scale(&detokenize(&harmony.tokens, ppq)?, scale);
    let mut score = PerformanceScore::new(ppq, right, left, scale, melody.time_signature);
    score.bar_chords = bars.chords;
    if let Some(e) = &cfg.enrich {
        score = enrich(&score, e, rng);
    }
    Ok(Generation {
        melody,
        harmony,
        score,
    })
}

/// Convenience for tests and callers that only hold one hand.
pub fn sequence_notes(seq: &TokenSequence, ticks_per_quarter: u32) -> Result<Vec<TimedNote>, TokenizerError> {
    detokenize(&seq.tokens, ticks_per_quarter)
}
