use ndarray::{Array1, Array2};
use rand::Rng;

use super::{ModelDims, ModelMode, Real};

/// Weights of one LSTM layer. Gate rows are stacked input, forget, cell,
/// output; each block is `hidden` rows tall.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    /// `4H x input`
    pub w_input: Array2<T>,
    /// `4H x H`
    pub w_hidden: Array2<T>,
    /// `4H`
    pub bias: Array1<T>,
}

/// Every trainable tensor of a [`super::SequenceModel`]. The same layout
/// doubles as gradient and optimiser-moment storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    /// `vocab x embed`
    pub note_embedding: Array2<T>,
    /// `chords x embed`, harmony mode only
    pub chord_embedding: Option<Array2<T>>,
    pub layers: Vec<LstmParams<T>>,
    /// `vocab x hidden`
    pub output_weight: Array2<T>,
    /// `vocab`
    pub output_bias: Array1<T>,
}

impl<T: Real> Params<T> {
    pub fn zeros(mode: ModelMode, dims: &ModelDims) -> Self {
        let h4 = 4 * dims.hidden;
        Params {
            note_embedding: Array2::zeros((dims.vocab, dims.embed)),
            chord_embedding: (mode == ModelMode::Harmony).then(|| Array2::zeros((dims.chord_vocab, dims.embed))),
            layers: (0..dims.layers)
                .map(|l| LstmParams {
                    w_input: Array2::zeros((h4, if l == 0 { dims.embed } else { dims.hidden })),
                    w_hidden: Array2::zeros((h4, dims.hidden)),
                    bias: Array1::zeros(h4),
                })
                .collect(),
            output_weight: Array2::zeros((dims.vocab, dims.hidden)),
            output_bias: Array1::zeros(dims.vocab),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            note_embedding: Array2::zeros(self.note_embedding.raw_dim()),
            chord_embedding: self.chord_embedding.as_ref().map(|e| Array2::zeros(e.raw_dim())),
            layers: self
                .layers
                .iter()
                .map(|l| LstmParams {
                    w_input: Array2::zeros(l.w_input.raw_dim()),
                    w_hidden: Array2::zeros(l.w_hidden.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
            output_weight: Array2::zeros(self.output_weight.raw_dim()),
            output_bias: Array1::zeros(self.output_bias.raw_dim()),
        }
    }

    /// Uniform(+-1/sqrt(H)) for recurrent and projection weights, uniform(+-0.1)
    /// for embeddings, zero biases except +1 on the forget gate.
    pub fn randomize<R: Rng + ?Sized>(&mut self, hidden: usize, rng: &mut R) {
        let w = 1.0 / (hidden as f64).sqrt();
        let mut fill = |a: &mut [T], bound: f64| {
            for x in a {
                *x = T::from_f64(rng.random_range(-bound..bound)).unwrap();
            }
        };
        fill(self.note_embedding.as_slice_mut().unwrap(), 0.1);
        if let Some(e) = self.chord_embedding.as_mut() {
            fill(e.as_slice_mut().unwrap(), 0.1);
        }
        for layer in &mut self.layers {
            fill(layer.w_input.as_slice_mut().unwrap(), w);
            fill(layer.w_hidden.as_slice_mut().unwrap(), w);
            layer.bias.fill(T::zero());
            layer
                .bias
                .slice_mut(ndarray::s![hidden..2 * hidden])
                .fill(T::one());
        }
        fill(self.output_weight.as_slice_mut().unwrap(), w);
        self.output_bias.fill(T::zero());
    }

    /// Flat views in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &[T])> {
        let mut out: Vec<(String, &[T])> = vec![("note_embedding".into(), self.note_embedding.as_slice().unwrap())];
        if let Some(e) = &self.chord_embedding {
            out.push(("chord_embedding".into(), e.as_slice().unwrap()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("lstm{i}.w_input"), l.w_input.as_slice().unwrap()));
            out.push((format!("lstm{i}.w_hidden"), l.w_hidden.as_slice().unwrap()));
            out.push((format!("lstm{i}.bias"), l.bias.as_slice().unwrap()));
        }
        out.push(("output.weight".into(), self.output_weight.as_slice().unwrap()));
        out.push(("output.bias".into(), self.output_bias.as_slice().unwrap()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = vec![self.note_embedding.as_slice_mut().unwrap()];
        if let Some(e) = self.chord_embedding.as_mut() {
            out.push(e.as_slice_mut().unwrap());
        }
        for l in &mut self.layers {
            out.push(l.w_input.as_slice_mut().unwrap());
            out.push(l.w_hidden.as_slice_mut().unwrap());
            out.push(l.bias.as_slice_mut().unwrap());
        }
        out.push(self.output_weight.as_slice_mut().unwrap());
        out.push(self.output_bias.as_slice_mut().unwrap());
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| {
                let v = x.to_f64().unwrap();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        let c2 = |a: &Array2<T>| a.mapv(|x| U::from_f64(x.to_f64().unwrap()).unwrap());
        let c1 = |a: &Array1<T>| a.mapv(|x| U::from_f64(x.to_f64().unwrap()).unwrap());
        Params {
            note_embedding: c2(&self.note_embedding),
            chord_embedding: self.chord_embedding.as_ref().map(c2),
            layers: self
                .layers
                .iter()
                .map(|l| LstmParams {
                    w_input: c2(&l.w_input),
                    w_hidden: c2(&l.w_hidden),
                    bias: c1(&l.bias),
                })
                .collect(),
            output_weight: c2(&self.output_weight),
            output_bias: c1(&self.output_bias),
        }
    }
}
