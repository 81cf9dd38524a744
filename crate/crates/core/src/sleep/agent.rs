use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::generative::{VaeLossWeights, VaeModel};
use crate::numerics::{argmax, MlpParams, ParamSet, Rng, Tensor};
use crate::wake::{Actor, NetworkShape, WakePolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Observation → VAE → reconstruction → extractor → policy.
    Sequential,
    /// Shared extractor feeding a policy head and a VAE that decodes back to observations.
    TwoHeaded,
    /// VAE over the extractor's layer-normalized features.
    Hidden,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Sequential, Architecture::TwoHeaded, Architecture::Hidden];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Sequential => "sequential",
            Architecture::TwoHeaded => "two-headed",
            Architecture::Hidden => "hidden",
        }
    }

    /// The hidden architecture needs a layer-normalized feature space.
    pub fn network_shape(self, mut base: NetworkShape) -> NetworkShape {
        base.layer_norm = self == Architecture::Hidden;
        base
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeShape {
    pub hidden: usize,
    pub latent: usize,
    pub logvar_bound: f64,
}

impl Default for VaeShape {
    fn default() -> Self {
        Self {
            hidden: 256,
            latent: 128,
            logvar_bound: crate::generative::DEFAULT_LOGVAR_BOUND,
        }
    }
}

/// Trainable parameters of the sleep agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SleepNet {
    pub extractor: MlpParams,
    pub head: MlpParams,
    pub vae: VaeModel,
}

impl SleepNet {
    pub fn zeros_like(&self) -> Self {
        Self {
            extractor: self.extractor.zeros_like(),
            head: self.head.zeros_like(),
            vae: self.vae.zeros_like(),
        }
    }
}

impl ParamSet for SleepNet {
    fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.extractor.slices();
        v.extend(self.head.slices());
        v.extend(self.vae.slices());
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.extractor.slices_mut();
        v.extend(self.head.slices_mut());
        v.extend(self.vae.slices_mut());
        v
    }
}

/// The stable policy consolidated during sleep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SleepAgent {
    pub architecture: Architecture,
    pub net: SleepNet,
    pub weights: VaeLossWeights,
    pub shape: NetworkShape,
    pub sleeps_completed: u32,
}

impl SleepAgent {
    pub fn new(
        architecture: Architecture,
        shape: NetworkShape,
        vae_shape: VaeShape,
        weights: VaeLossWeights,
        rng: &mut Rng,
    ) -> Result<Self> {
        let shape = architecture.network_shape(shape);
        shape.validate()?;
        weights.validate()?;
        if vae_shape.hidden == 0 || vae_shape.latent == 0 || vae_shape.logvar_bound <= 0.0 {
            return Err(Error::Config(format!("invalid VAE shape {vae_shape:?}")));
        }
        let extractor = shape.init_extractor(rng);
        let head = shape.init_policy_head(rng);
        let (vin, vout) = match architecture {
            Architecture::Sequential => (shape.obs_dim, shape.obs_dim),
            Architecture::TwoHeaded => (shape.feature_dim(), shape.obs_dim),
            Architecture::Hidden => (shape.feature_dim(), shape.feature_dim()),
        };
        let mut vae = VaeModel::new(vin, vout, vae_shape.hidden, vae_shape.latent, rng);
        vae.logvar_bound = vae_shape.logvar_bound;
        Ok(Self {
            architecture,
            net: SleepNet { extractor, head, vae },
            weights,
            shape,
            sleeps_completed: 0,
        })
    }

    /// Width of the space the VAE generates in and pseudo-labels are computed from.
    pub fn generated_dim(&self) -> usize {
        match self.architecture {
            Architecture::Hidden => self.shape.feature_dim(),
            _ => self.shape.obs_dim,
        }
    }

    pub fn features(&self, observations: &Tensor) -> Result<Tensor> {
        self.net.extractor.forward(observations)
    }

    /// Logits for inputs in the generated space (features for hidden, observations otherwise).
    pub fn logits_from_generated(&self, inputs: &Tensor) -> Result<Tensor> {
        if inputs.cols() != self.generated_dim() {
            return dim_err(format!(
                "{} pseudo-labeling expects width {}, got {}",
                self.architecture.name(),
                self.generated_dim(),
                inputs.cols()
            ));
        }
        match self.architecture {
            Architecture::Hidden => self.net.head.forward(inputs),
            _ => self.action_logits(inputs),
        }
    }

    /// Greedy labels; ties resolve to the lowest action index.
    pub fn pseudo_label(&self, inputs: &Tensor) -> Result<Vec<usize>> {
        Ok(self.logits_from_generated(inputs)?.iter_rows().map(argmax).collect())
    }

    /// Draw `n` samples from the VAE prior in the generated space.
    pub fn generate(&self, n: usize, rng: &mut Rng) -> Result<Tensor> {
        self.net.vae.sample(n, rng)
    }
}

impl Actor for SleepAgent {
    fn action_logits(&self, observations: &Tensor) -> Result<Tensor> {
        let input = match self.architecture {
            Architecture::Sequential => self.net.vae.reconstruct_mean(observations)?,
            _ => observations.as_matrix(),
        };
        let f = self.net.extractor.forward(&input)?;
        self.net.head.forward(&f)
    }
}

/// Overwrite the wake extractor and policy head with the sleep agent's;
/// the value head is kept and the optimizer restarts.
pub fn weight_copy_into_wake(agent: &SleepAgent, wake: &mut WakePolicy) -> Result<()> {
    let same = |a: &MlpParams, b: &MlpParams| {
        a.layers.len() == b.layers.len()
            && a.layers
                .iter()
                .zip(&b.layers)
                .all(|(x, y)| x.weight.shape() == y.weight.shape() && x.activation == y.activation)
            && a.layer_norm.as_ref().map(|l| l.gain.len()) == b.layer_norm.as_ref().map(|l| l.gain.len())
    };
    if !same(&agent.net.extractor, &wake.net.extractor) || !same(&agent.net.head, &wake.net.policy) {
        return Err(Error::Config("sleep and wake networks have different layer shapes".into()));
    }
    wake.net.extractor = agent.net.extractor.clone();
    wake.net.policy = agent.net.head.clone();
    wake.reset_optimizer();
    Ok(())
}
