use rand::Rng;

use super::Real;
use crate::tokenizer::is_rest_id;

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<f64> {
    let max = logits.iter().map(|v| v.to_f64().unwrap()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v.to_f64().unwrap() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Draw a token id from the `k` highest logits, renormalised with a softmax.
/// With `filter_rest` the nine rest ids are removed before ranking. Equal
/// logits rank by lower id; `k` is clamped to the candidate count.
pub fn sample_top_k<T: Real, R: Rng + ?Sized>(logits: &[T], k: usize, rng: &mut R, filter_rest: bool) -> usize {
    let mut candidates: Vec<(usize, f64)> = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| !(filter_rest && is_rest_id(*i)))
        .map(|(i, v)| (i, v.to_f64().unwrap()))
        .collect();
    assert!(!candidates.is_empty(), "no candidate tokens to sample from");
    let k = k.clamp(1, candidates.len());
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    candidates.truncate(k);
    if k == 1 {
        return candidates[0].0;
    }
    let top = candidates[0].1;
    let weights: Vec<f64> = candidates.iter().map(|(_, v)| (v - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for ((id, _), w) in candidates.iter().zip(&weights) {
        if u < *w {
            return *id;
        }
        u -= w;
    }
    candidates[k - 1].0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::VOCAB_SIZE;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0f32, 2.0, 3.0, -100.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn k_one_is_argmax_after_filtering() {
        let mut logits = vec![0.0f32; VOCAB_SIZE];
        logits[1155] = 10.0; // a rest
        logits[42] = 5.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_top_k(&logits, 1, &mut rng, false), 1155);
        assert_eq!(sample_top_k(&logits, 1, &mut rng, true), 42);
    }

    #[test]
    fn huge_k_clamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let id = sample_top_k(&[0.0f64, 1.0, 2.0], 100, &mut rng, false);
        assert!(id < 3);
    }
}
