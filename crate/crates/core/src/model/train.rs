use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Conditioning, ModelError, Params, Real, SequenceModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub bptt_window: usize,
    pub top_k: usize,
    pub seed: u64,
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 20,
            bptt_window: 64,
            top_k: 5,
            seed: 0,
            grad_clip: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig("learning_rate must be positive"));
        }
        if self.epochs == 0 || self.bptt_window == 0 || self.top_k == 0 {
            return Err(ModelError::InvalidConfig("epochs, bptt_window and top_k must be positive"));
        }
        if !(self.grad_clip > 0.0) {
            return Err(ModelError::InvalidConfig("grad_clip must be positive"));
        }
        Ok(())
    }
}

/// Owned per-step side input for a training sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum StepConditioning {
    None,
    Chords(Vec<usize>),
    BarNotes(Vec<Vec<usize>>),
}

impl StepConditioning {
    fn window(&self, start: usize, end: usize) -> Conditioning<'_> {
        match self {
            StepConditioning::None => Conditioning::None,
            StepConditioning::Chords(c) => Conditioning::Chords(&c[start..end]),
            StepConditioning::BarNotes(b) => Conditioning::BarNotes(&b[start..end]),
        }
    }

    fn len(&self) -> Option<usize> {
        match self {
            StepConditioning::None => None,
            StepConditioning::Chords(c) => Some(c.len()),
            StepConditioning::BarNotes(b) => Some(b.len()),
        }
    }
}

/// One file's token ids plus, for harmony models, per-token conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub ids: Vec<usize>,
    pub conditioning: StepConditioning,
}

impl TrainingExample {
    pub fn unconditioned(ids: Vec<usize>) -> Self {
        TrainingExample {
            ids,
            conditioning: StepConditioning::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub perplexity: f64,
}

struct Adam<T> {
    m: Params<T>,
    v: Params<T>,
    step: i32,
    lr: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

impl<T: Real> Adam<T> {
    fn new(params: &Params<T>, lr: f64) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut Params<T>, grads: &Params<T>) {
        self.step += 1;
        let lr_t = self.lr * (1.0 - BETA2.powi(self.step)).sqrt() / (1.0 - BETA1.powi(self.step));
        let (b1, b2) = (T::from_f64(BETA1).unwrap(), T::from_f64(BETA2).unwrap());
        let (one, eps, lr_t) = (T::one(), T::from_f64(EPSILON).unwrap(), T::from_f64(lr_t).unwrap());
        let g = grads.tensors();
        for (((p, m), v), (_, g)) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(g)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                p[i] -= lr_t * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

fn check_corpus<T: Real>(model: &SequenceModel<T>, corpus: &[TrainingExample]) -> Result<(), ModelError> {
    if corpus.iter().all(|e| e.ids.len() < 2) {
        return Err(ModelError::EmptyCorpus);
    }
    for e in corpus {
        if let Some(n) = e.conditioning.len() {
            if n != e.ids.len() {
                return Err(ModelError::ShapeMismatch(format!(
                    "{} conditioning steps for {} tokens",
                    n,
                    e.ids.len()
                )));
            }
        }
    }
    // Validate the conditioning variant against the model once, up front.
    if let Some(e) = corpus.iter().find(|e| e.ids.len() >= 2) {
        model.check_inputs(&e.ids[..1], &e.conditioning.window(0, 1))?;
    }
    Ok(())
}

/// `(start, end)` input ranges of the windows over a sequence of `len` tokens.
fn windows(len: usize, window: usize) -> impl Iterator<Item = (usize, usize)> {
    let last = len.saturating_sub(1);
    (0..last).step_by(window).map(move |s| (s, (s + window).min(last)))
}

/// Train in place. Files are visited in order; each file is cut into
/// consecutive windows whose recurrent state carries over within the file and
/// restarts at zero for the next one. One Adam step per window, with the
/// gradient rescaled to at most `grad_clip` in global L2 norm.
pub fn train<T: Real>(
    model: &mut SequenceModel<T>,
    corpus: &[TrainingExample],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, ModelError> {
    cfg.validate()?;
    check_corpus(model, corpus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut total = 0.0f64;
        let mut count = 0usize;
        for example in corpus {
            let mut state = model.initial_state();
            for (s, e) in windows(example.ids.len(), cfg.bptt_window) {
                let (loss, mut grads, next) = model.loss_and_grads(
                    &example.ids[s..e],
                    &example.ids[s + 1..e + 1],
                    example.conditioning.window(s, e),
                    &state,
                    Some(&mut rng),
                )?;
                total += loss * (e - s) as f64;
                count += e - s;
                let norm = grads.l2_norm();
                if norm > cfg.grad_clip {
                    grads.scale(T::from_f64(cfg.grad_clip / norm).unwrap());
                }
                adam.update(&mut model.params, &grads);
                state = next;
            }
        }
        let mean_loss = total / count as f64;
        log.push(EpochLog {
            epoch,
            mean_loss,
            perplexity: mean_loss.exp(),
        });
    }
    Ok(log)
}

/// Mean next-token cross-entropy of each file, with the same windowing and
/// state handling as [`train`] but no dropout and no updates.
pub fn per_file_losses<T: Real>(
    model: &SequenceModel<T>,
    corpus: &[TrainingExample],
    bptt_window: usize,
) -> Result<Vec<f64>, ModelError> {
    check_corpus(model, corpus)?;
    corpus
        .iter()
        .map(|example| {
            let mut state = model.initial_state();
            let mut total = 0.0;
            let mut count = 0;
            for (s, e) in windows(example.ids.len(), bptt_window.max(1)) {
                let (loss, _, next) = model.loss_and_grads(
                    &example.ids[s..e],
                    &example.ids[s + 1..e + 1],
                    example.conditioning.window(s, e),
                    &state,
                    None,
                )?;
                total += loss * (e - s) as f64;
                count += e - s;
                state = next;
            }
            Ok(if count == 0 { f64::NAN } else { total / count as f64 })
        })
        .collect()
}
