mod common;

use amuze::model::{Conditioning, ModelMode};
use common::{max_relative_error, toy_model, GRAD_TOLERANCE};

#[test]
fn melody_gradients_match_finite_differences() {
    let err = max_relative_error(toy_model(ModelMode::Melody), Conditioning::None);
    assert!(err < GRAD_TOLERANCE, "max relative error {err:e}");
}

#[test]
fn harmony_gradients_match_finite_differences() {
    let chords = [4usize, 0, 2];
    let err = max_relative_error(toy_model(ModelMode::Harmony), Conditioning::Chords(&chords));
    assert!(err < GRAD_TOLERANCE, "max relative error {err:e}");
}

#[test]
fn summed_note_gradients_match_finite_differences() {
    let bars = vec![vec![2usize, 5, 5], vec![], vec![11]];
    let err = max_relative_error(toy_model(ModelMode::HarmonySum), Conditioning::BarNotes(&bars));
    assert!(err < GRAD_TOLERANCE, "max relative error {err:e}");
}
