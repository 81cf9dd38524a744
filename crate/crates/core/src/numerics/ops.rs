//! Softmax family and categorical sampling.

use super::rng::Rng;
use crate::error::{dim_err, Error, Result};

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Entropy of the softmax distribution, in nats.
pub fn entropy(logits: &[f64]) -> f64 {
    log_softmax(logits).iter().map(|lp| -lp.exp() * lp).sum()
}

/// Draw an index with probability `softmax(logits)[i]` by inverse CDF.
pub fn categorical_sample(logits: &[f64], rng: &mut Rng) -> Result<usize> {
    if logits.is_empty() {
        return dim_err("cannot sample from empty logits");
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite logits".into()));
    }
    let probs = softmax(logits);
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // Rounding can leave the cumulative sum a hair below 1.
    Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn freqs(logits: &[f64], draws: usize, seed: u64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        let mut counts = vec![0usize; logits.len()];
        for _ in 0..draws {
            counts[categorical_sample(logits, &mut rng).unwrap()] += 1;
        }
        counts.iter().map(|&c| c as f64 / draws as f64).collect()
    }

    #[test]
    fn dominant_logit_wins() {
        assert!(freqs(&[10.0, -10.0], 10_000, 1)[0] > 0.999);
    }

    #[test]
    fn uniform_logits_sample_uniformly() {
        for f in freqs(&[0.0, 0.0, 0.0], 30_000, 2) {
            assert!((f - 1.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn log_weights_give_proportional_frequencies() {
        let logits = [1f64.ln(), 2f64.ln(), 3f64.ln()];
        let f = freqs(&logits, 60_000, 3);
        for (got, want) in f.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((got - want).abs() < 0.02);
        }
    }

    #[test]
    fn empty_logits_error() {
        assert!(categorical_sample(&[], &mut Rng::new(0)).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.0, 1.0, 0.0, 5.0]), 3);
    }

    #[test]
    fn entropy_of_uniform_is_log_n() {
        assert!((entropy(&[0.0; 6]) - 6f64.ln()).abs() < 1e-12);
    }
}
