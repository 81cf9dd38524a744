//! Dense math, perceptrons with manual backprop, Adam, and sampling helpers.

pub mod adam;
pub mod gradcheck;
pub mod mlp;
pub mod ops;
pub mod rng;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use mlp::{Activation, Dense, LayerNorm, MlpParams, MlpTrace};
pub use ops::{argmax, categorical_sample, log_softmax, softmax};
pub use rng::{mix_seed, Rng};
pub use tensor::Tensor;

/// A bundle of trainable arrays visited in a fixed order.
///
/// Gradient buffers use the same type as the parameters they belong to, so
/// `slices()` of a gradient lines up entry-for-entry with the parameters.
pub trait ParamSet {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Flattened copy of every parameter, in visiting order.
    fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    fn set_from_flat(&mut self, flat: &[f64]) {
        let mut pos = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[pos..pos + s.len()]);
            pos += s.len();
        }
    }
}

/// L2 norm over all gradient entries.
pub fn global_norm<P: ParamSet + ?Sized>(grads: &P) -> f64 {
    grads
        .slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescale gradients so their global norm is at most `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm<P: ParamSet + ?Sized>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for s in grads.slices_mut() {
            s.iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

/// `dst += k * src`, entry by entry.
pub fn add_scaled<P: ParamSet + ?Sized>(dst: &mut P, src: &P, k: f64) {
    for (d, s) in dst.slices_mut().into_iter().zip(src.slices()) {
        for (a, b) in d.iter_mut().zip(s) {
            *a += k * b;
        }
    }
}
