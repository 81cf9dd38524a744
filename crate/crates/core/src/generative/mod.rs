//! Variational autoencoder used as the sleep-phase generative memory.
//!
//! The encoder emits `[mu | raw_logvar]`; the raw log-variance passes through
//! a scaled tanh so it stays inside `[-logvar_bound, logvar_bound]`. The loss
//! is the usual negative ELBO: mean squared reconstruction error plus a
//! weighted Gaussian KL to the unit prior (summed over latent dimensions,
//! averaged over the batch).

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::{Activation, MlpParams, MlpTrace, ParamSet, Rng, Tensor};

pub const DEFAULT_LOGVAR_BOUND: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub latent_dim: usize,
    pub logvar_bound: f64,
}

/// Weights of the sleep objective: `imitation * xent + recon * mse + kl * KL`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeLossWeights {
    pub imitation: f64,
    pub recon: f64,
    pub kl: f64,
}

impl VaeLossWeights {
    pub const MINIGRID: Self = Self { imitation: 3.0, recon: 1.0, kl: 0.03 };
    pub const SC2_SEQUENTIAL: Self = Self { imitation: 50.0, recon: 1.0, kl: 3.0 };
    pub const SC2_TWO_HEADED: Self = Self { imitation: 30.0, recon: 1.0, kl: 2.0 };
    pub const SC2_HIDDEN: Self = Self { imitation: 50.0, recon: 200.0, kl: 5.0 };

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "minigrid" => Some(Self::MINIGRID),
            "sc2-sequential" => Some(Self::SC2_SEQUENTIAL),
            "sc2-two-headed" => Some(Self::SC2_TWO_HEADED),
            "sc2-hidden" => Some(Self::SC2_HIDDEN),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.imitation, self.recon, self.kl];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("loss weights must be non-negative: {self:?}")));
        }
        Ok(())
    }
}

impl Default for VaeLossWeights {
    fn default() -> Self {
        Self::MINIGRID
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VaeLossTerms {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Upstream gradients of [`vae_loss`] with respect to its tensor arguments.
#[derive(Clone, Debug)]
pub struct VaeLossGrads {
    pub recon: Tensor,
    pub mu: Tensor,
    pub logvar: Tensor,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct VaeTrace {
    pub mu: Tensor,
    pub logvar: Tensor,
    pub z: Tensor,
    pub recon: Tensor,
    noise: Tensor,
    enc: MlpTrace,
    dec: MlpTrace,
}

impl VaeModel {
    /// Two-layer encoder and decoder with relu hidden units.
    pub fn new(input_dim: usize, output_dim: usize, hidden: usize, latent_dim: usize, rng: &mut Rng) -> Self {
        let encoder = MlpParams::init(
            &[input_dim, hidden, 2 * latent_dim],
            Activation::Relu,
            Activation::Identity,
            false,
            rng,
        );
        let decoder = MlpParams::init(
            &[latent_dim, hidden, output_dim],
            Activation::Relu,
            Activation::Identity,
            false,
            rng,
        );
        Self {
            encoder,
            decoder,
            latent_dim,
            logvar_bound: DEFAULT_LOGVAR_BOUND,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.decoder.output_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.encoder.output_dim() != 2 * self.latent_dim {
            return dim_err("encoder must emit 2 * latent_dim values");
        }
        if self.decoder.input_dim() != self.latent_dim {
            return dim_err("decoder input must equal latent_dim");
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
            latent_dim: self.latent_dim,
            logvar_bound: self.logvar_bound,
        }
    }

    fn split_encoding(&self, raw: &Tensor) -> (Tensor, Tensor) {
        let (n, d) = (raw.rows(), self.latent_dim);
        let mut mu = Vec::with_capacity(n * d);
        let mut logvar = Vec::with_capacity(n * d);
        for row in raw.iter_rows() {
            mu.extend_from_slice(&row[..d]);
            logvar.extend(row[d..].iter().map(|&r| bound_logvar(r, self.logvar_bound)));
        }
        (Tensor::from_raw(n, d, mu), Tensor::from_raw(n, d, logvar))
    }

    /// Posterior parameters `(mu, logvar)` for a batch.
    pub fn encode(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let raw = self.encoder.forward(x)?;
        Ok(self.split_encoding(&raw))
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        self.decoder.forward(z)
    }

    /// Decode the posterior mean; the deterministic reconstruction used at inference time.
    pub fn reconstruct_mean(&self, x: &Tensor) -> Result<Tensor> {
        let (mu, _) = self.encode(x)?;
        self.decode(&mu)
    }

    /// Decode `n` independent draws from the unit Gaussian prior.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Tensor> {
        if n == 0 {
            return dim_err("sample count must be positive");
        }
        let z = standard_normal(n, self.latent_dim, rng);
        self.decode(&z)
    }

    /// Forward pass with externally supplied noise `eps ~ N(0, I)`.
    pub fn forward_traced(&self, x: &Tensor, noise: Tensor) -> Result<VaeTrace> {
        let (raw, enc) = self.encoder.forward_traced(x)?;
        let (mu, logvar) = self.split_encoding(&raw);
        if noise.rows() != mu.rows() || noise.cols() != mu.cols() {
            return dim_err("noise shape must match the latent batch");
        }
        let z = reparameterize_with(&mu, &logvar, &noise);
        let (recon, dec) = self.decoder.forward_traced(&z)?;
        Ok(VaeTrace {
            mu,
            logvar,
            z,
            recon,
            noise,
            enc,
            dec,
        })
    }

    /// Reverse pass. `grads` accumulates; returns the gradient with respect to the encoder input if asked.
    pub fn backward(
        &self,
        trace: &VaeTrace,
        upstream: &VaeLossGrads,
        grads: &mut VaeModel,
        want_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        let dz = self
            .decoder
            .backward(&trace.dec, &upstream.recon, &mut grads.decoder, true)?
            .expect("requested");
        let (n, d) = (trace.mu.rows(), self.latent_dim);
        let mut d_raw = vec![0.0; n * 2 * d];
        let b = self.logvar_bound;
        for i in 0..n {
            for j in 0..d {
                let k = i * d + j;
                let lv = trace.logvar.data()[k];
                let sigma = (0.5 * lv).exp();
                let dzk = dz.data()[k];
                let d_mu = upstream.mu.data()[k] + dzk;
                let d_lv = upstream.logvar.data()[k] + dzk * trace.noise.data()[k] * 0.5 * sigma;
                // lv = b * tanh(raw / b)  =>  dlv/draw = 1 - (lv / b)^2
                let t = lv / b;
                d_raw[i * 2 * d + j] = d_mu;
                d_raw[i * 2 * d + d + j] = d_lv * (1.0 - t * t);
            }
        }
        let d_raw = Tensor::from_raw(n, 2 * d, d_raw);
        self.encoder
            .backward(&trace.enc, &d_raw, &mut grads.encoder, want_input_grad)
    }
}

impl ParamSet for VaeModel {
    fn slices(&self) -> Vec<&[f64]> {
        let mut s = self.encoder.slices();
        s.extend(self.decoder.slices());
        s
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut s = self.encoder.slices_mut();
        s.extend(self.decoder.slices_mut());
        s
    }
}

/// Smooth clamp of a raw log-variance into `[-bound, bound]`.
pub fn bound_logvar(raw: f64, bound: f64) -> f64 {
    bound * (raw / bound).tanh()
}

pub fn standard_normal(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    Tensor::from_raw(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect())
}

fn reparameterize_with(mu: &Tensor, logvar: &Tensor, noise: &Tensor) -> Tensor {
    let data = mu
        .data()
        .iter()
        .zip(logvar.data())
        .zip(noise.data())
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect();
    Tensor::from_raw(mu.rows(), mu.cols(), data)
}

/// `z = mu + exp(logvar / 2) * eps` with fresh `eps ~ N(0, I)`.
pub fn reparameterize(mu: &Tensor, logvar: &Tensor, rng: &mut Rng) -> Result<Tensor> {
    if mu.shape() != logvar.shape() {
        return dim_err("mu and logvar must share a shape");
    }
    let noise = standard_normal(mu.rows(), mu.cols(), rng);
    Ok(reparameterize_with(mu, logvar, &noise))
}

/// Negative ELBO terms for a batch.
///
/// `recon` is the mean squared error over every entry; `kl` is
/// `0.5 * sum(exp(lv) + mu^2 - 1 - lv)` per row, averaged over rows.
pub fn vae_loss(
    x: &Tensor,
    reconstruction: &Tensor,
    mu: &Tensor,
    logvar: &Tensor,
    weights: &VaeLossWeights,
) -> Result<VaeLossTerms> {
    if (x.rows(), x.cols()) != (reconstruction.rows(), reconstruction.cols()) {
        return dim_err("reconstruction shape does not match target");
    }
    if mu.len() != logvar.len() || mu.rows() != x.rows() {
        return dim_err("posterior shapes do not match the batch");
    }
    let all_finite = [x, reconstruction, mu, logvar].iter().all(|t| t.all_finite());
    if !all_finite {
        return Err(Error::Numerical("non-finite input to VAE loss".into()));
    }
    let recon = x
        .data()
        .iter()
        .zip(reconstruction.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    let kl = mu
        .data()
        .iter()
        .zip(logvar.data())
        .map(|(m, lv)| lv.exp() + m * m - 1.0 - lv)
        .sum::<f64>()
        * 0.5
        / mu.rows() as f64;
    Ok(VaeLossTerms {
        total: weights.recon * recon + weights.kl * kl,
        recon,
        kl,
    })
}

/// Gradients of the weighted loss from [`vae_loss`].
pub fn vae_loss_grads(
    x: &Tensor,
    reconstruction: &Tensor,
    mu: &Tensor,
    logvar: &Tensor,
    weights: &VaeLossWeights,
) -> VaeLossGrads {
    let k_rec = 2.0 * weights.recon / x.len() as f64;
    let recon = x
        .data()
        .iter()
        .zip(reconstruction.data())
        .map(|(a, b)| k_rec * (b - a))
        .collect();
    let k_kl = weights.kl / mu.rows() as f64;
    let d_mu = mu.data().iter().map(|m| k_kl * m).collect();
    let d_lv = logvar.data().iter().map(|lv| k_kl * 0.5 * (lv.exp() - 1.0)).collect();
    VaeLossGrads {
        recon: Tensor::from_raw(reconstruction.rows(), reconstruction.cols(), recon),
        mu: Tensor::from_raw(mu.rows(), mu.cols(), d_mu),
        logvar: Tensor::from_raw(logvar.rows(), logvar.cols(), d_lv),
    }
}

/// Loss of a full encode → reparameterize → decode pass with frozen noise,
/// plus parameter gradients. Used by unit tests and standalone VAE training.
pub fn vae_objective(
    model: &VaeModel,
    x: &Tensor,
    noise: &Tensor,
    weights: &VaeLossWeights,
) -> Result<(VaeLossTerms, VaeModel)> {
    let trace = model.forward_traced(x, noise.clone())?;
    let terms = vae_loss(x, &trace.recon, &trace.mu, &trace.logvar, weights)?;
    let up = vae_loss_grads(x, &trace.recon, &trace.mu, &trace.logvar, weights);
    let mut grads = model.zeros_like();
    model.backward(&trace, &up, &mut grads, false)?;
    Ok((terms, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradient_check;

    fn zero_model(input: usize, latent: usize) -> VaeModel {
        let mut rng = Rng::new(0);
        let mut m = VaeModel::new(input, input, 8, latent, &mut rng);
        for s in m.slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        m
    }

    #[test]
    fn zero_encoder_gives_standard_posterior() {
        let m = zero_model(4, 3);
        let (mu, lv) = m.encode(&Tensor::row_vector(&[0.3, 0.1, 0.9, 0.5])).unwrap();
        assert!(mu.data().iter().all(|&v| v == 0.0));
        assert!(lv.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn large_raw_logvar_saturates() {
        let lv = bound_logvar(100.0, DEFAULT_LOGVAR_BOUND);
        assert!(lv <= 5.0 && 5.0 - lv < 1e-6);
        let lv = bound_logvar(-100.0, DEFAULT_LOGVAR_BOUND);
        assert!(lv >= -5.0 && lv + 5.0 < 1e-6);
    }

    #[test]
    fn reparameterize_statistics_and_determinism() {
        let mu = Tensor::zeros(&[10_000, 1]);
        let lv = Tensor::zeros(&[10_000, 1]);
        let z = reparameterize(&mu, &lv, &mut Rng::new(9)).unwrap();
        let mean = z.data().iter().sum::<f64>() / 10_000.0;
        let var = z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 10_000.0;
        assert!(mean.abs() < 0.05 && (var - 1.0).abs() < 0.05);
        let z2 = reparameterize(&mu, &lv, &mut Rng::new(9)).unwrap();
        assert_eq!(z, z2);
    }

    #[test]
    fn tiny_variance_collapses_to_mean() {
        let mu = Tensor::row_vector(&[1.5, -2.0]);
        let lv = Tensor::row_vector(&[-5.0, -5.0]);
        let mut rng = Rng::new(1);
        let mut probe = Rng::new(1);
        let z = reparameterize(&mu, &lv, &mut rng).unwrap();
        for (i, zi) in z.data().iter().enumerate() {
            let eps = probe.normal();
            assert!((zi - mu.data()[i]).abs() <= (-2.5f64).exp() * eps.abs() + 1e-12);
        }
    }

    #[test]
    fn closed_form_kl_values() {
        let w = VaeLossWeights { imitation: 0.0, recon: 1.0, kl: 1.0 };
        let x = Tensor::row_vector(&[0.2]);
        let t = vae_loss(&x, &x, &Tensor::row_vector(&[0.0]), &Tensor::row_vector(&[0.0]), &w).unwrap();
        assert_eq!(t.total, 0.0);
        let t = vae_loss(&x, &x, &Tensor::row_vector(&[1.0]), &Tensor::row_vector(&[0.0]), &w).unwrap();
        assert!((t.kl - 0.5).abs() < 1e-12);
        let t = vae_loss(&x, &x, &Tensor::row_vector(&[0.0]), &Tensor::row_vector(&[4f64.ln()]), &w).unwrap();
        assert!((t.kl - 0.5 * (4.0 - 1.0 - 4f64.ln())).abs() < 1e-12);
        assert!((t.kl - 0.8069).abs() < 1e-4);
    }

    #[test]
    fn loss_rejects_non_finite() {
        let w = VaeLossWeights::MINIGRID;
        let x = Tensor::row_vector(&[0.2]);
        let mut bad = x.clone();
        bad.data_mut()[0] = f64::INFINITY;
        assert!(vae_loss(&x, &bad, &x, &x, &w).is_err());
    }

    #[test]
    fn constant_decoder_emits_bias() {
        let mut m = zero_model(3, 2);
        m.decoder.layers[1].bias = vec![0.25, -1.0, 2.0];
        let s = m.sample(5, &mut Rng::new(2)).unwrap();
        for row in s.iter_rows() {
            assert_eq!(row, &[0.25, -1.0, 2.0]);
        }
    }

    #[test]
    fn identity_decoder_samples_are_standard_normal() {
        let mut m = zero_model(2, 2);
        // relu hidden layer: route z and -z through separate units and recombine.
        m.decoder.layers[0].weight = Tensor::matrix(8, 2, {
            let mut w = vec![0.0; 16];
            w[0] = 1.0; // h0 = relu(z0)
            w[3] = 1.0; // h1 = relu(z1)
            w[4] = -1.0; // h2 = relu(-z0)
            w[7] = -1.0; // h3 = relu(-z1)
            w
        })
        .unwrap();
        m.decoder.layers[1].weight = Tensor::matrix(2, 8, {
            let mut w = vec![0.0; 16];
            w[0] = 1.0;
            w[2] = -1.0;
            w[8 + 1] = 1.0;
            w[8 + 3] = -1.0;
            w
        })
        .unwrap();
        let s = m.sample(10_000, &mut Rng::new(3)).unwrap();
        for c in 0..2 {
            let mean = s.iter_rows().map(|r| r[c]).sum::<f64>() / 10_000.0;
            assert!(mean.abs() < 0.05);
        }
    }

    #[test]
    fn full_objective_gradient_matches_finite_differences() {
        let mut rng = Rng::new(11);
        let mut m = VaeModel::new(5, 5, 7, 3, &mut rng);
        m.encoder.layers[0].activation = Activation::Tanh;
        m.decoder.layers[0].activation = Activation::Tanh;
        let x = standard_normal(4, 5, &mut rng);
        let noise = standard_normal(4, 3, &mut rng);
        let w = VaeLossWeights::MINIGRID;
        let (_, g) = vae_objective(&m, &x, &noise, &w).unwrap();
        let r = gradient_check(&m, |p| vae_objective(p, &x, &noise, &w).unwrap().0.total, &g, 1e-5, 1e-4, 1);
        assert!(r.passed, "{r:?}");
    }
}
