//! Multilayer perceptrons with explicit reverse-mode gradients.
//!
//! Inputs are batches laid out as `[batch, width]` matrices. A forward pass
//! can record an [`MlpTrace`]; [`MlpParams::backward`] consumes it and
//! accumulates parameter gradients into a buffer shaped like the network.

use serde::{Deserialize, Serialize};

use super::rng::Rng;
use super::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use super::ParamSet;
use crate::error::{dim_err, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn slope_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer, `weight` is `[out, in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub offset: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
    pub layer_norm: Option<LayerNorm>,
}

/// Activations recorded by a forward pass, consumed by the backward pass.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    /// `acts[0]` is the input; `acts[i + 1]` is the post-activation output of layer `i`.
    acts: Vec<Tensor>,
    norm: Option<NormTrace>,
}

#[derive(Clone, Debug)]
struct NormTrace {
    normalized: Tensor,
    inv_std: Vec<f64>,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases. `dims` lists every width from input to output.
    pub fn init(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        layer_norm: bool,
        rng: &mut Rng,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least an input and an output width");
        let n_layers = dims.len() - 1;
        let layers = (0..n_layers)
            .map(|i| {
                let (fan_in, fan_out) = (dims[i], dims[i + 1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = (0..fan_in * fan_out)
                    .map(|_| rng.uniform_range(-bound, bound))
                    .collect();
                Dense {
                    weight: Tensor::from_raw(fan_out, fan_in, w),
                    bias: vec![0.0; fan_out],
                    activation: if i + 1 == n_layers { output } else { hidden },
                }
            })
            .collect();
        let width = dims[n_layers];
        let layer_norm = layer_norm.then(|| LayerNorm {
            gain: vec![1.0; width],
            offset: vec![0.0; width],
        });
        Self { layers, layer_norm }
    }

    /// Scale the final layer's weights; small gains give near-uniform policy heads.
    pub fn with_output_gain(mut self, gain: f64) -> Self {
        if let Some(last) = self.layers.last_mut() {
            last.weight.scale(gain);
        }
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Dense::out_dim).unwrap_or(0)
    }

    /// Check that layer widths chain and the layer norm matches the output width.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return dim_err("MLP has no layers");
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return dim_err(format!("layer {i}: bias {} vs out {}", l.bias.len(), l.out_dim()));
            }
            if i > 0 && self.layers[i - 1].out_dim() != l.in_dim() {
                return dim_err(format!(
                    "layer {i}: input {} does not chain with previous output {}",
                    l.in_dim(),
                    self.layers[i - 1].out_dim()
                ));
            }
        }
        if let Some(ln) = &self.layer_norm {
            let w = self.output_dim();
            if ln.gain.len() != w || ln.offset.len() != w {
                return dim_err("layer-norm vectors do not match the output width");
            }
        }
        Ok(())
    }

    /// A gradient buffer: same structure, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Tensor::zeros(l.weight.shape()),
                    bias: vec![0.0; l.bias.len()],
                    activation: l.activation,
                })
                .collect(),
            layer_norm: self.layer_norm.as_ref().map(|ln| LayerNorm {
                gain: vec![0.0; ln.gain.len()],
                offset: vec![0.0; ln.offset.len()],
            }),
        }
    }

    /// Forward pass over a batch (or a single vector).
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.as_matrix();
        for layer in &self.layers {
            x = dense_forward(layer, &x);
        }
        if let Some(ln) = &self.layer_norm {
            x = layer_norm_forward(ln, &x).0;
        }
        Ok(x)
    }

    pub fn forward_traced(&self, input: &Tensor) -> Result<(Tensor, MlpTrace)> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.as_matrix());
        for layer in &self.layers {
            let y = dense_forward(layer, acts.last().expect("non-empty"));
            acts.push(y);
        }
        let (out, norm) = match &self.layer_norm {
            Some(ln) => {
                let (out, normalized, inv_std) = layer_norm_forward(ln, acts.last().expect("non-empty"));
                (out, Some(NormTrace { normalized, inv_std }))
            }
            None => (acts.last().expect("non-empty").clone(), None),
        };
        Ok((out, MlpTrace { acts, norm }))
    }

    /// Reverse pass. Parameter gradients are *added* into `grads`; the input
    /// gradient is returned when requested.
    pub fn backward(
        &self,
        trace: &MlpTrace,
        output_gradient: &Tensor,
        grads: &mut MlpParams,
        want_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        let out_w = self.output_dim();
        let batch = trace.acts[0].rows();
        if output_gradient.cols() != out_w || output_gradient.rows() != batch {
            return dim_err(format!(
                "output gradient {:?} does not match [{batch}, {out_w}]",
                output_gradient.shape()
            ));
        }
        let mut delta = output_gradient.as_matrix();

        if let (Some(ln), Some(nt)) = (&self.layer_norm, &trace.norm) {
            let g = grads.layer_norm.as_mut().expect("gradient buffer mirrors layer norm");
            delta = layer_norm_backward(ln, nt, &delta, g);
        }

        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (n, fan_out, fan_in) = (batch, layer.out_dim(), layer.in_dim());
            let y = &trace.acts[i + 1];
            let x = &trace.acts[i];
            let dz = delta.data_mut();
            if layer.activation != Activation::Identity {
                for (d, &yv) in dz.iter_mut().zip(y.data()) {
                    *d *= layer.activation.slope_at_output(yv);
                }
            }
            let g = &mut grads.layers[i];
            gemm_tn(fan_out, n, fan_in, delta.data(), x.data(), g.weight.data_mut(), 1.0);
            for row in delta.iter_rows() {
                for (b, d) in g.bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if i > 0 || want_input_grad {
                let mut dx = vec![0.0; n * fan_in];
                gemm_nn(n, fan_out, fan_in, delta.data(), layer.weight.data(), &mut dx, 0.0);
                delta = Tensor::from_raw(n, fan_in, dx);
            }
        }
        Ok(want_input_grad.then_some(delta))
    }

    /// Recompute the forward pass, then return fresh parameter gradients and the input gradient.
    pub fn backprop(&self, input: &Tensor, output_gradient: &Tensor) -> Result<(MlpParams, Tensor)> {
        let (_, trace) = self.forward_traced(input)?;
        let mut grads = self.zeros_like();
        let dx = self
            .backward(&trace, output_gradient, &mut grads, true)?
            .expect("input gradient requested");
        Ok((grads, dx))
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if self.layers.is_empty() {
            return dim_err("MLP has no layers");
        }
        if input.cols() != self.input_dim() {
            return dim_err(format!(
                "input width {} does not match first layer {}",
                input.cols(),
                self.input_dim()
            ));
        }
        Ok(())
    }
}

impl ParamSet for MlpParams {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(self.layers.len() * 2 + 2);
        for l in &self.layers {
            out.push(l.weight.data());
            out.push(&l.bias);
        }
        if let Some(ln) = &self.layer_norm {
            out.push(&ln.gain);
            out.push(&ln.offset);
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(self.layers.len() * 2 + 2);
        for l in &mut self.layers {
            out.push(l.weight.data_mut());
            out.push(&mut l.bias);
        }
        if let Some(ln) = &mut self.layer_norm {
            out.push(&mut ln.gain);
            out.push(&mut ln.offset);
        }
        out
    }
}

fn dense_forward(layer: &Dense, x: &Tensor) -> Tensor {
    let (n, fan_in, fan_out) = (x.rows(), layer.in_dim(), layer.out_dim());
    let mut y = vec![0.0; n * fan_out];
    gemm_nt(n, fan_in, fan_out, x.data(), layer.weight.data(), &mut y, 0.0);
    for row in y.chunks_exact_mut(fan_out) {
        for (v, b) in row.iter_mut().zip(&layer.bias) {
            *v = layer.activation.apply(*v + b);
        }
    }
    Tensor::from_raw(n, fan_out, y)
}

fn layer_norm_forward(ln: &LayerNorm, x: &Tensor) -> (Tensor, Tensor, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mut normalized = vec![0.0; n * d];
    let mut out = vec![0.0; n * d];
    let mut inv_std = Vec::with_capacity(n);
    for (i, row) in x.iter_rows().enumerate() {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(inv);
        for j in 0..d {
            let xh = (row[j] - mean) * inv;
            normalized[i * d + j] = xh;
            out[i * d + j] = ln.gain[j] * xh + ln.offset[j];
        }
    }
    (
        Tensor::from_raw(n, d, out),
        Tensor::from_raw(n, d, normalized),
        inv_std,
    )
}

fn layer_norm_backward(ln: &LayerNorm, nt: &NormTrace, dout: &Tensor, g: &mut LayerNorm) -> Tensor {
    let (n, d) = (dout.rows(), dout.cols());
    let mut dx = vec![0.0; n * d];
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let drow = dout.row(i);
        let xh = nt.normalized.row(i);
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xh = 0.0;
        for j in 0..d {
            g.gain[j] += drow[j] * xh[j];
            g.offset[j] += drow[j];
            dxhat[j] = drow[j] * ln.gain[j];
            sum_dxhat += dxhat[j];
            sum_dxhat_xh += dxhat[j] * xh[j];
        }
        let k = nt.inv_std[i] / d as f64;
        for j in 0..d {
            dx[i * d + j] = k * (d as f64 * dxhat[j] - sum_dxhat - xh[j] * sum_dxhat_xh);
        }
    }
    Tensor::from_raw(n, d, dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_layer(n: usize) -> MlpParams {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        MlpParams {
            layers: vec![Dense {
                weight: Tensor::from_raw(n, n, w),
                bias: vec![0.0; n],
                activation: Activation::Identity,
            }],
            layer_norm: None,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = identity_layer(2);
        let y = net.forward(&Tensor::row_vector(&[1.0, 2.0])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_splits_sign() {
        let net = MlpParams {
            layers: vec![Dense {
                weight: Tensor::matrix(2, 1, vec![1.0, -1.0]).unwrap(),
                bias: vec![0.0, 0.0],
                activation: Activation::Relu,
            }],
            layer_norm: None,
        };
        let y = net.forward(&Tensor::row_vector(&[3.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 0.0]);
    }

    #[test]
    fn zero_input_composes_biases() {
        // Hand evaluation: with x = 0 the first layer emits relu(b1); the second
        // layer emits W2 · relu(b1) + b2.
        let mut rng = Rng::new(0);
        let mut net = MlpParams::init(&[3, 4, 2], Activation::Relu, Activation::Identity, false, &mut rng);
        net.layers[0].bias = vec![0.5, -0.25, 1.0, 0.0];
        net.layers[1].bias = vec![0.1, -0.2];
        let h = [0.5, 0.0, 1.0, 0.0];
        let w2 = net.layers[1].weight.clone();
        let want: Vec<f64> = (0..2)
            .map(|o| (0..4).map(|i| w2.row(o)[i] * h[i]).sum::<f64>() + net.layers[1].bias[o])
            .collect();
        let y = net.forward(&Tensor::row_vector(&[0.0; 3])).unwrap();
        for (a, b) in y.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let net = identity_layer(3);
        let x = Tensor::row_vector(&[0.5, -1.0, 2.0]);
        let (g, dx) = net.backprop(&x, &Tensor::row_vector(&[1.0; 3])).unwrap();
        for o in 0..3 {
            assert_eq!(g.layers[0].weight.row(o), x.data());
        }
        assert_eq!(g.layers[0].bias, vec![1.0; 3]);
        assert_eq!(dx.data(), &[1.0; 3]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Rng::new(4);
        let net = MlpParams::init(&[5, 7, 3], Activation::Tanh, Activation::Identity, true, &mut rng);
        let x = Tensor::matrix(2, 5, (0..10).map(|i| i as f64 * 0.1).collect()).unwrap();
        let (g, dx) = net.backprop(&x, &Tensor::zeros(&[2, 3])).unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = Rng::new(1);
        let net = MlpParams::init(&[4, 2], Activation::Relu, Activation::Identity, false, &mut rng);
        assert!(net.forward(&Tensor::row_vector(&[1.0; 3])).is_err());
        assert!(net.backprop(&Tensor::row_vector(&[1.0; 4]), &Tensor::row_vector(&[1.0; 3])).is_err());
    }

    #[test]
    fn layer_norm_output_is_standardized() {
        let mut rng = Rng::new(2);
        let net = MlpParams::init(&[6, 32], Activation::Relu, Activation::Identity, true, &mut rng);
        // Large-spread inputs so the epsilon term is negligible against the variance.
        let x = Tensor::matrix(3, 6, (0..18).map(|i| ((i * 7) % 11) as f64 * 40.0 - 150.0).collect()).unwrap();
        let y = net.forward(&x).unwrap();
        for row in y.iter_rows() {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
            assert!(mean.abs() < 1e-6, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "var {var}");
        }
    }

    #[test]
    fn validate_catches_broken_chain() {
        let mut rng = Rng::new(3);
        let mut net = MlpParams::init(&[3, 4, 2], Activation::Relu, Activation::Identity, true, &mut rng);
        assert!(net.validate().is_ok());
        net.layer_norm.as_mut().unwrap().gain.pop();
        assert!(net.validate().is_err());
    }
}
