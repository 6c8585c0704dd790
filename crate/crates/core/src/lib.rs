//! Symbolic piano music pipeline: MIDI parsing, scale-invariant tokens, chord
//! analysis, LSTM melody and harmony models, generation and evaluation.

pub mod chords;
pub mod generate;
pub mod metrics;
pub mod midi;
pub mod model;
pub mod score;
pub mod theory;
pub mod tokenizer;

pub use chords::{ChordId, ChordTable};
pub use midi::{parse_midi, write_midi, MidiDocument, MidiError};
pub use model::{ModelDims, ModelMode, SequenceModel};
pub use score::{Hand, PerformanceScore, TimedNote};
pub use theory::{Mode, Scale, TimeSignature};
pub use tokenizer::{Token, TokenSequence};
