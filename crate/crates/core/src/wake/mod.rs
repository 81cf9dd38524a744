//! The plastic wake policy: an actor-critic trained with clipped-surrogate
//! policy optimization, plus the decaying advice mechanism that lets the
//! sleep policy steer early exploration after each wake-up.

mod gae;
mod ppo;
mod rollout;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::gridworlds::{NUM_ACTIONS, OBS_DIM};
use crate::numerics::{argmax, categorical_sample, Activation, AdamConfig, AdamState, MlpParams, ParamSet, Rng, Tensor};

pub use gae::compute_gae;
pub use ppo::{ppo_loss, ppo_update, Minibatch, PpoLoss, UpdateStats};
pub use rollout::{collect_rollout, Rollout};

/// Scale applied to the policy head's initial weights so a fresh policy is
/// close to uniform.
pub const POLICY_HEAD_GAIN: f64 = 0.01;

/// Anything that maps a batch of observations to action logits.
pub trait Actor {
    fn action_logits(&self, observations: &Tensor) -> Result<Tensor>;

    fn greedy_action(&self, observation: &[f64]) -> Result<usize> {
        let logits = self.action_logits(&Tensor::row_vector(observation))?;
        Ok(argmax(logits.row(0)))
    }

    fn sample_action(&self, observation: &[f64], rng: &mut Rng) -> Result<usize> {
        let logits = self.action_logits(&Tensor::row_vector(observation))?;
        categorical_sample(logits.row(0), rng)
    }
}

/// Widths shared by the wake network and the sleep agent's policy path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkShape {
    pub obs_dim: usize,
    /// Hidden widths of the feature extractor; the last entry is the feature width.
    pub extractor: Vec<usize>,
    /// Terminate the extractor with layer normalization.
    pub layer_norm: bool,
    pub num_actions: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self {
            obs_dim: OBS_DIM,
            extractor: vec![256, 256],
            layer_norm: false,
            num_actions: NUM_ACTIONS,
        }
    }
}

impl NetworkShape {
    pub fn feature_dim(&self) -> usize {
        *self.extractor.last().unwrap_or(&self.obs_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.extractor.is_empty() || self.extractor.contains(&0) || self.obs_dim == 0 || self.num_actions == 0 {
            return Err(Error::Config(format!("invalid network shape {self:?}")));
        }
        Ok(())
    }

    pub fn init_extractor(&self, rng: &mut Rng) -> MlpParams {
        let mut dims = vec![self.obs_dim];
        dims.extend(&self.extractor);
        MlpParams::init(&dims, Activation::Relu, Activation::Relu, self.layer_norm, rng)
    }

    pub fn init_policy_head(&self, rng: &mut Rng) -> MlpParams {
        MlpParams::init(
            &[self.feature_dim(), self.num_actions],
            Activation::Identity,
            Activation::Identity,
            false,
            rng,
        )
        .with_output_gain(POLICY_HEAD_GAIN)
    }
}

/// Feature extractor feeding separate policy and value heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub extractor: MlpParams,
    pub policy: MlpParams,
    pub value: MlpParams,
}

impl ActorCritic {
    pub fn new(shape: &NetworkShape, rng: &mut Rng) -> Self {
        let extractor = shape.init_extractor(rng);
        let policy = shape.init_policy_head(rng);
        let value = MlpParams::init(&[shape.feature_dim(), 1], Activation::Identity, Activation::Identity, false, rng);
        Self {
            extractor,
            policy,
            value,
        }
    }

    /// Logits `[n, actions]` and state values `[n]`.
    pub fn forward(&self, obs: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let f = self.extractor.forward(obs)?;
        let logits = self.policy.forward(&f)?;
        let values = self.value.forward(&f)?.into_data();
        Ok((logits, values))
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            extractor: self.extractor.zeros_like(),
            policy: self.policy.zeros_like(),
            value: self.value.zeros_like(),
        }
    }
}

impl ParamSet for ActorCritic {
    fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.extractor.slices();
        v.extend(self.policy.slices());
        v.extend(self.value.slices());
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.extractor.slices_mut();
        v.extend(self.policy.slices_mut());
        v.extend(self.value.slices_mut());
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub n_steps: usize,
    pub batch_size: usize,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub n_epochs: usize,
    pub ent_coef: f64,
    pub learning_rate: f64,
    pub clip_range: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub adam_epsilon: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            n_steps: 512,
            batch_size: 32,
            gae_lambda: 0.95,
            gamma: 0.99,
            n_epochs: 10,
            ent_coef: 5.0e-5,
            learning_rate: 2.5e-4,
            clip_range: 0.3,
            vf_coef: 0.75,
            max_grad_norm: 5.0,
            adam_epsilon: 1e-5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        let problem = if self.n_steps == 0 || self.batch_size == 0 || self.n_epochs == 0 {
            Some("n_steps, batch_size and n_epochs must be positive")
        } else if !unit(self.gamma) || !unit(self.gae_lambda) {
            Some("gamma and gae_lambda must lie in (0, 1]")
        } else if self.clip_range <= 0.0 {
            Some("clip_range must be positive")
        } else if self.learning_rate <= 0.0 || self.max_grad_norm <= 0.0 || self.adam_epsilon <= 0.0 {
            Some("learning_rate, max_grad_norm and adam_epsilon must be positive")
        } else if self.ent_coef < 0.0 || self.vf_coef < 0.0 {
            Some("loss coefficients must be non-negative")
        } else {
            None
        };
        match problem {
            Some(msg) => Err(Error::Config(format!("ppo: {msg}"))),
            None => Ok(()),
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            epsilon: self.adam_epsilon,
            ..AdamConfig::default()
        }
    }
}

/// Linearly decaying probability of executing the sleep policy's action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdviceSchedule {
    pub p0: f64,
    pub decay_horizon: u64,
    pub steps_elapsed: u64,
}

impl Default for AdviceSchedule {
    fn default() -> Self {
        Self {
            p0: 0.9,
            decay_horizon: 100_000,
            steps_elapsed: 0,
        }
    }
}

impl AdviceSchedule {
    pub fn probability(&self) -> f64 {
        if self.decay_horizon == 0 {
            return 0.0;
        }
        let frac = self.steps_elapsed as f64 / self.decay_horizon as f64;
        (self.p0 * (1.0 - frac)).max(0.0)
    }

    pub fn advance(&mut self, steps: u64) {
        self.steps_elapsed += steps;
    }

    /// Start decaying again from `p0`.
    pub fn restart(&mut self) {
        self.steps_elapsed = 0;
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(Error::Config(format!("advice p0 {} outside [0, 1]", self.p0)));
        }
        Ok(())
    }
}

/// Actor-critic network, its optimizer, and its training configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WakePolicy {
    pub net: ActorCritic,
    pub optimizer: AdamState,
    pub config: PpoConfig,
    pub shape: NetworkShape,
}

impl WakePolicy {
    pub fn new(shape: NetworkShape, config: PpoConfig, rng: &mut Rng) -> Result<Self> {
        shape.validate()?;
        config.validate()?;
        let net = ActorCritic::new(&shape, rng);
        let optimizer = AdamState::new(config.adam(), &net);
        Ok(Self {
            net,
            optimizer,
            config,
            shape,
        })
    }

    /// Re-initialize every parameter and clear the optimizer.
    pub fn reset(&mut self, rng: &mut Rng) {
        self.net = ActorCritic::new(&self.shape, rng);
        self.reset_optimizer();
    }

    pub fn reset_optimizer(&mut self) {
        self.optimizer = AdamState::new(self.config.adam(), &self.net);
    }

    /// Logits and value for a single observation.
    pub fn evaluate_one(&self, obs: &[f64]) -> Result<(Vec<f64>, f64)> {
        if obs.len() != self.shape.obs_dim {
            return dim_err(format!("observation length {} != {}", obs.len(), self.shape.obs_dim));
        }
        let (logits, values) = self.net.forward(&Tensor::row_vector(obs))?;
        Ok((logits.into_data(), values[0]))
    }
}

/// Fresh wake policy with the same shape and configuration.
pub fn reset_wake(wake: &WakePolicy, rng: &mut Rng) -> WakePolicy {
    let mut w = wake.clone();
    w.reset(rng);
    w
}

impl Actor for WakePolicy {
    fn action_logits(&self, observations: &Tensor) -> Result<Tensor> {
        let f = self.net.extractor.forward(observations)?;
        self.net.policy.forward(&f)
    }
}
