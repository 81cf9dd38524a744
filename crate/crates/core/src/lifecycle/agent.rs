use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::generative::VaeLossWeights;
use crate::numerics::Rng;
use crate::sleep::{Architecture, RandomReplayBuffer, SleepAgent, SleepConfig, VaeShape, WakeBuffer};
use crate::wake::{Actor, AdviceSchedule, NetworkShape, PpoConfig, WakePolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentMode {
    LlSequential,
    LlTwoHeaded,
    LlHidden,
    /// Plain PPO that keeps training one network across tasks.
    Baseline,
    Random,
}

impl AgentMode {
    pub const ALL: [AgentMode; 5] = [
        AgentMode::LlSequential,
        AgentMode::LlTwoHeaded,
        AgentMode::LlHidden,
        AgentMode::Baseline,
        AgentMode::Random,
    ];

    pub fn architecture(self) -> Option<Architecture> {
        match self {
            AgentMode::LlSequential => Some(Architecture::Sequential),
            AgentMode::LlTwoHeaded => Some(Architecture::TwoHeaded),
            AgentMode::LlHidden => Some(Architecture::Hidden),
            AgentMode::Baseline | AgentMode::Random => None,
        }
    }

    pub fn is_lifelong(self) -> bool {
        self.architecture().is_some()
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentMode::LlSequential => "ll-sequential",
            AgentMode::LlTwoHeaded => "ll-two-headed",
            AgentMode::LlHidden => "ll-hidden",
            AgentMode::Baseline => "baseline",
            AgentMode::Random => "random",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown agent mode {name:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub mode: AgentMode,
    pub network: NetworkShape,
    pub vae: VaeShape,
    pub loss_weights: VaeLossWeights,
    pub ppo: PpoConfig,
    pub sleep: SleepConfig,
    pub advice: AdviceSchedule,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            mode: AgentMode::LlHidden,
            network: NetworkShape::default(),
            vae: VaeShape::default(),
            loss_weights: VaeLossWeights::MINIGRID,
            ppo: PpoConfig::default(),
            sleep: SleepConfig::default(),
            advice: AdviceSchedule::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.ppo.validate()?;
        self.advice.validate()?;
        if self.mode.is_lifelong() {
            self.sleep.validate()?;
            self.loss_weights.validate()?;
        }
        Ok(())
    }

    /// Network shape of the wake policy; lifelong agents match their sleep agent.
    pub fn wake_shape(&self) -> NetworkShape {
        match self.mode.architecture() {
            Some(a) => a.network_shape(self.network.clone()),
            None => self.network.clone(),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex_digest(&json)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

const WAKE_INIT_STREAM: u64 = 1;
const SLEEP_INIT_STREAM: u64 = 2;

/// Everything a lifetime mutates: networks, optimizers and buffers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub config: AgentConfig,
    pub wake: Option<WakePolicy>,
    pub sleep: Option<SleepAgent>,
    pub wake_buffer: WakeBuffer,
    pub rar: RandomReplayBuffer,
    pub advice: AdviceSchedule,
}

/// What an evaluation block runs.
pub enum EvalPolicy<'a> {
    Greedy(&'a dyn Actor),
    Random,
}

impl Agent {
    pub fn new(config: AgentConfig, rng: &Rng) -> Result<Self> {
        config.validate()?;
        let wake = match config.mode {
            AgentMode::Random => None,
            _ => Some(WakePolicy::new(
                config.wake_shape(),
                config.ppo,
                &mut rng.fork(WAKE_INIT_STREAM),
            )?),
        };
        let sleep = match config.mode.architecture() {
            Some(arch) => Some(SleepAgent::new(
                arch,
                config.network.clone(),
                config.vae,
                config.loss_weights,
                &mut rng.fork(SLEEP_INIT_STREAM),
            )?),
            None => None,
        };
        Ok(Self {
            wake_buffer: WakeBuffer::new(config.sleep.wake_buffer_capacity),
            rar: RandomReplayBuffer::new(config.sleep.rar_intake, config.sleep.rar_capacity),
            advice: config.advice,
            wake,
            sleep,
            config,
        })
    }

    pub fn mode(&self) -> AgentMode {
        self.config.mode
    }

    pub fn sleeps_completed(&self) -> u32 {
        self.sleep.as_ref().map_or(0, |s| s.sleeps_completed)
    }

    /// The consolidated sleep policy once it exists, else the wake policy.
    pub fn eval_policy(&self) -> EvalPolicy<'_> {
        match (&self.sleep, &self.wake) {
            (Some(s), _) if s.sleeps_completed > 0 => EvalPolicy::Greedy(s),
            (_, Some(w)) => EvalPolicy::Greedy(w),
            _ => EvalPolicy::Random,
        }
    }

    /// The sleep policy, once it has slept at least once.
    pub fn advisor(&self) -> Option<&dyn Actor> {
        self.sleep
            .as_ref()
            .filter(|s| s.sleeps_completed > 0)
            .map(|s| s as &dyn Actor)
    }

    /// Hex SHA-256 of the full serialized state.
    pub fn state_hash(&self) -> String {
        hex_digest(&serde_json::to_vec(self).expect("agent serializes"))
    }
}
