//! Embedding + two-layer LSTM + linear head, with hand-written
//! backpropagation through time.
//!
//! Three input variants share the skeleton:
//!
//! * [`ModelMode::Melody`]: the step input is the note embedding.
//! * [`ModelMode::Harmony`]: note embedding plus a chord embedding for the
//!   melody bar the step falls in.
//! * [`ModelMode::HarmonySum`]: note embedding plus the sum of the note
//!   embeddings of every melody note in that bar (same embedding matrix).
//!
//! Dropout sits between the recurrent stack and the projection and is active
//! only while training.

mod checkpoint;
mod params;
mod sample;
mod train;

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{s, Array1, Array2, ArrayView1, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::{Rng, RngCore};
use thiserror::Error;

use crate::chords::CHORD_TABLE_SIZE;
use crate::tokenizer::VOCAB_SIZE;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use params::{LstmParams, Params};
pub use sample::{sample_top_k, softmax};
pub use train::{per_file_losses, train, EpochLog, StepConditioning, TrainConfig, TrainingExample};

/// Floating-point types the model can run in. Production models are `f32`;
/// gradient checks run in `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelMode {
    Melody,
    Harmony,
    HarmonySum,
}

impl ModelMode {
    pub fn tag(self) -> u32 {
        match self {
            ModelMode::Melody => 0,
            ModelMode::Harmony => 1,
            ModelMode::HarmonySum => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(ModelMode::Melody),
            1 => Some(ModelMode::Harmony),
            2 => Some(ModelMode::HarmonySum),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelMode::Melody => "melody",
            ModelMode::Harmony => "harmony",
            ModelMode::HarmonySum => "harmony-sum-ablation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
    pub chord_vocab: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            vocab: VOCAB_SIZE,
            embed: 128,
            hidden: 128,
            layers: 2,
            chord_vocab: CHORD_TABLE_SIZE,
        }
    }
}

pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("harmony model needs one chord id per step")]
    MissingChordIds,
    #[error("harmony-sum model needs the melody bar notes for every step")]
    MissingBarNotes,
    #[error("{0} model does not take this conditioning input")]
    UnexpectedConditioning(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Per-step side input for one forward window.
#[derive(Debug, Clone, Copy)]
pub enum Conditioning<'a> {
    None,
    /// One chord-table index per step.
    Chords(&'a [usize]),
    /// Token ids of the melody bar each step falls in.
    BarNotes(&'a [Vec<usize>]),
}

impl Conditioning<'_> {
    fn len(&self) -> Option<usize> {
        match self {
            Conditioning::None => None,
            Conditioning::Chords(c) => Some(c.len()),
            Conditioning::BarNotes(b) => Some(b.len()),
        }
    }
}

/// Hidden and cell vectors for every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState<T> {
    pub h: Vec<Array1<T>>,
    pub c: Vec<Array1<T>>,
}

impl<T: Real> RecurrentState<T> {
    pub fn zeros(dims: &ModelDims) -> Self {
        RecurrentState {
            h: (0..dims.layers).map(|_| Array1::zeros(dims.hidden)).collect(),
            c: (0..dims.layers).map(|_| Array1::zeros(dims.hidden)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceModel<T = f32> {
    pub mode: ModelMode,
    pub dims: ModelDims,
    pub dropout: f64,
    pub params: Params<T>,
}

struct LayerCache<T> {
    input: Array2<T>,
    /// post-activation gates, `T x 4H`
    gates: Array2<T>,
    c: Array2<T>,
    tanh_c: Array2<T>,
    h0: Array1<T>,
    c0: Array1<T>,
}

struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
    top: Array2<T>,
    mask: Option<Array2<T>>,
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> SequenceModel<T> {
    /// All-zero parameters: every logit is equal.
    pub fn zeros(mode: ModelMode, dims: ModelDims) -> Self {
        SequenceModel {
            mode,
            dims,
            dropout: DEFAULT_DROPOUT,
            params: Params::zeros(mode, &dims),
        }
    }

    pub fn new<R: Rng + ?Sized>(mode: ModelMode, dims: ModelDims, rng: &mut R) -> Self {
        let mut m = Self::zeros(mode, dims);
        m.params.randomize(dims.hidden, rng);
        m
    }

    pub fn initial_state(&self) -> RecurrentState<T> {
        RecurrentState::zeros(&self.dims)
    }

    pub fn cast<U: Real>(&self) -> SequenceModel<U> {
        SequenceModel {
            mode: self.mode,
            dims: self.dims,
            dropout: self.dropout,
            params: self.params.cast(),
        }
    }

    fn check_inputs(&self, ids: &[usize], cond: &Conditioning<'_>) -> Result<(), ModelError> {
        match (self.mode, cond) {
            (ModelMode::Melody, Conditioning::None) => {}
            (ModelMode::Melody, _) => return Err(ModelError::UnexpectedConditioning("melody")),
            (ModelMode::Harmony, Conditioning::Chords(_)) => {}
            (ModelMode::Harmony, Conditioning::None) => return Err(ModelError::MissingChordIds),
            (ModelMode::Harmony, _) => return Err(ModelError::UnexpectedConditioning("harmony")),
            (ModelMode::HarmonySum, Conditioning::BarNotes(_)) => {}
            (ModelMode::HarmonySum, Conditioning::None) => return Err(ModelError::MissingBarNotes),
            (ModelMode::HarmonySum, _) => return Err(ModelError::UnexpectedConditioning("harmony-sum")),
        }
        if let Some(n) = cond.len() {
            if n != ids.len() {
                return Err(ModelError::ShapeMismatch(format!(
                    "{} conditioning steps for {} inputs",
                    n,
                    ids.len()
                )));
            }
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.dims.vocab) {
            return Err(ModelError::ShapeMismatch(format!("token id {bad} >= vocab {}", self.dims.vocab)));
        }
        match cond {
            Conditioning::Chords(c) => {
                if let Some(&bad) = c.iter().find(|&&i| i >= self.dims.chord_vocab) {
                    return Err(ModelError::ShapeMismatch(format!("chord id {bad} >= {}", self.dims.chord_vocab)));
                }
            }
            Conditioning::BarNotes(b) => {
                if b.iter().flatten().any(|&i| i >= self.dims.vocab) {
                    return Err(ModelError::ShapeMismatch("bar note id out of vocabulary".into()));
                }
            }
            Conditioning::None => {}
        }
        Ok(())
    }

    fn embed(&self, ids: &[usize], cond: &Conditioning<'_>) -> Array2<T> {
        let e = &self.params.note_embedding;
        let mut x = Array2::zeros((ids.len(), self.dims.embed));
        for (t, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(t);
            row.assign(&e.row(id));
            match cond {
                Conditioning::None => {}
                Conditioning::Chords(c) => {
                    let ce = self.params.chord_embedding.as_ref().expect("harmony model has chord embedding");
                    row += &ce.row(c[t]);
                }
                Conditioning::BarNotes(b) => {
                    for &n in &b[t] {
                        row += &e.row(n);
                    }
                }
            }
        }
        x
    }

    fn forward_cached(
        &self,
        ids: &[usize],
        cond: &Conditioning<'_>,
        state: &RecurrentState<T>,
        training: Option<&mut dyn RngCore>,
    ) -> (Array2<T>, RecurrentState<T>, ForwardCache<T>) {
        let steps = ids.len();
        let hid = self.dims.hidden;
        let mut x = self.embed(ids, cond);
        let mut caches = Vec::with_capacity(self.dims.layers);
        let mut next_state = state.clone();

        for (l, layer) in self.params.layers.iter().enumerate() {
            let pre = x.dot(&layer.w_input.t()) + &layer.bias;
            let mut gates = Array2::zeros((steps, 4 * hid));
            let mut cs = Array2::zeros((steps, hid));
            let mut tanh_cs = Array2::zeros((steps, hid));
            let mut hs = Array2::zeros((steps, hid));
            let mut h = state.h[l].clone();
            let mut c = state.c[l].clone();
            for t in 0..steps {
                let z = &pre.row(t) + &layer.w_hidden.dot(&h);
                let mut g = gates.row_mut(t);
                for j in 0..hid {
                    let i_g = sigmoid(z[j]);
                    let f_g = sigmoid(z[hid + j]);
                    let c_g = z[2 * hid + j].tanh();
                    let o_g = sigmoid(z[3 * hid + j]);
                    g[j] = i_g;
                    g[hid + j] = f_g;
                    g[2 * hid + j] = c_g;
                    g[3 * hid + j] = o_g;
                    c[j] = f_g * c[j] + i_g * c_g;
                    let tc = c[j].tanh();
                    tanh_cs[[t, j]] = tc;
                    h[j] = o_g * tc;
                }
                cs.row_mut(t).assign(&c);
                hs.row_mut(t).assign(&h);
            }
            caches.push(LayerCache {
                input: x,
                gates,
                c: cs,
                tanh_c: tanh_cs,
                h0: state.h[l].clone(),
                c0: state.c[l].clone(),
            });
            next_state.h[l] = h;
            next_state.c[l] = c;
            x = hs;
        }

        let mask = training.filter(|_| self.dropout > 0.0).map(|rng| {
            let keep = 1.0 - self.dropout;
            let scale = T::from_f64(1.0 / keep).unwrap();
            Array2::from_shape_fn((steps, hid), |_| if rng.random::<f64>() < keep { scale } else { T::zero() })
        });
        let top = match &mask {
            Some(m) => &x * m,
            None => x,
        };
        let logits = top.dot(&self.params.output_weight.t()) + &self.params.output_bias;
        (
            logits,
            next_state,
            ForwardCache {
                layers: caches,
                top,
                mask,
            },
        )
    }

    /// Run a window of inputs. Returns one row of logits per step and the
    /// state after the last step. Pass an RNG as `training` to enable dropout.
    pub fn forward(
        &self,
        ids: &[usize],
        cond: Conditioning<'_>,
        state: &RecurrentState<T>,
        training: Option<&mut dyn RngCore>,
    ) -> Result<(Array2<T>, RecurrentState<T>), ModelError> {
        self.check_inputs(ids, &cond)?;
        let (logits, next, _) = self.forward_cached(ids, &cond, state, training);
        Ok((logits, next))
    }

    /// Mean cross-entropy of `targets` under the window's predictions, the
    /// exact gradient of that loss with respect to every parameter
    /// (truncated at the window start), and the state after the window.
    pub fn loss_and_grads(
        &self,
        inputs: &[usize],
        targets: &[usize],
        cond: Conditioning<'_>,
        state: &RecurrentState<T>,
        training: Option<&mut dyn RngCore>,
    ) -> Result<(f64, Params<T>, RecurrentState<T>), ModelError> {
        self.check_inputs(inputs, &cond)?;
        if inputs.len() != targets.len() || inputs.is_empty() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} inputs vs {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if targets.iter().any(|&t| t >= self.dims.vocab) {
            return Err(ModelError::ShapeMismatch("target id out of vocabulary".into()));
        }
        let (logits, next_state, cache) = self.forward_cached(inputs, &cond, state, training);
        let steps = inputs.len();
        let inv_n = T::from_f64(1.0 / steps as f64).unwrap();

        let mut dlogits = logits;
        let mut loss = 0.0f64;
        for (t, mut row) in dlogits.axis_iter_mut(Axis(0)).enumerate() {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
            let p = row[targets[t]].to_f64().unwrap();
            loss -= p.max(f64::MIN_POSITIVE).ln();
            row[targets[t]] -= T::one();
            row.mapv_inplace(|v| v * inv_n);
        }
        loss /= steps as f64;

        let mut grads = self.params.zeros_like();
        grads.output_weight = dlogits.t().dot(&cache.top);
        grads.output_bias = dlogits.sum_axis(Axis(0));
        let mut upstream = dlogits.dot(&self.params.output_weight);
        if let Some(mask) = &cache.mask {
            upstream *= mask;
        }

        let hid = self.dims.hidden;
        for l in (0..self.dims.layers).rev() {
            let layer = &self.params.layers[l];
            let lc = &cache.layers[l];
            let mut dpre = Array2::<T>::zeros((steps, 4 * hid));
            let mut dh_next = Array1::<T>::zeros(hid);
            let mut dc_next = Array1::<T>::zeros(hid);
            for t in (0..steps).rev() {
                let g = lc.gates.row(t);
                let tc = lc.tanh_c.row(t);
                let c_prev: ArrayView1<T> = if t > 0 { lc.c.row(t - 1) } else { lc.c0.view() };
                let mut dz = dpre.row_mut(t);
                for j in 0..hid {
                    let (i_g, f_g, c_g, o_g) = (g[j], g[hid + j], g[2 * hid + j], g[3 * hid + j]);
                    let dh = upstream[[t, j]] + dh_next[j];
                    let d_o = dh * tc[j];
                    let dc = dh * o_g * (T::one() - tc[j] * tc[j]) + dc_next[j];
                    dz[j] = dc * c_g * i_g * (T::one() - i_g);
                    dz[hid + j] = dc * c_prev[j] * f_g * (T::one() - f_g);
                    dz[2 * hid + j] = dc * i_g * (T::one() - c_g * c_g);
                    dz[3 * hid + j] = d_o * o_g * (T::one() - o_g);
                    dc_next[j] = dc * f_g;
                }
                dh_next = layer.w_hidden.t().dot(&dpre.row(t));
            }
            // Hidden state entering each step: h0, then the layer's own outputs.
            let mut h_prev = Array2::<T>::zeros((steps, hid));
            h_prev.row_mut(0).assign(&lc.h0);
            if steps > 1 {
                let outputs = if l + 1 < self.dims.layers {
                    cache.layers[l + 1].input.slice(s![..steps - 1, ..]).to_owned()
                } else {
                    self.layer_outputs_top(&cache, steps)
                };
                h_prev.slice_mut(s![1.., ..]).assign(&outputs);
            }
            let gl = &mut grads.layers[l];
            gl.w_hidden = dpre.t().dot(&h_prev);
            gl.w_input = dpre.t().dot(&lc.input);
            gl.bias = dpre.sum_axis(Axis(0));
            upstream = dpre.dot(&layer.w_input);
        }

        // Scatter the input gradient into the embedding tables.
        for (t, &id) in inputs.iter().enumerate() {
            let d = upstream.row(t);
            let mut row = grads.note_embedding.row_mut(id);
            row += &d;
            match cond {
                Conditioning::None => {}
                Conditioning::Chords(c) => {
                    let ce = grads.chord_embedding.as_mut().expect("harmony grads have chord embedding");
                    let mut r = ce.row_mut(c[t]);
                    r += &d;
                }
                Conditioning::BarNotes(b) => {
                    for &n in &b[t] {
                        let mut r = grads.note_embedding.row_mut(n);
                        r += &d;
                    }
                }
            }
        }
        Ok((loss, grads, next_state))
    }

    /// Undropped outputs of the last LSTM layer for steps `0..steps-1`.
    fn layer_outputs_top(&self, cache: &ForwardCache<T>, steps: usize) -> Array2<T> {
        let lc = cache.layers.last().expect("at least one layer");
        let hid = self.dims.hidden;
        let o = lc.gates.slice(s![..steps - 1, 3 * hid..]);
        &o * &lc.tanh_c.slice(s![..steps - 1, ..])
    }
}
