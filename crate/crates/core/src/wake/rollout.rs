use super::{compute_gae, Actor, AdviceSchedule, WakePolicy};
use crate::error::Result;
use crate::gridworlds::{Action, LiveEnv};
use crate::numerics::{categorical_sample, log_softmax, Rng, Tensor};
use crate::sleep::{ActionLabel, Transition, WakeBuffer};

/// One on-policy batch with everything the update needs.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub observations: Tensor,
    pub actions: Vec<usize>,
    /// Wake-policy log-probability of each executed action.
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminals: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Steps whose action came from the advisor.
    pub advised: usize,
    /// Returns of episodes that finished inside this rollout.
    pub episode_returns: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Gather exactly `n_steps` transitions, possibly spanning several episodes.
///
/// With probability `schedule.probability()` the executed action is sampled
/// from `advisor`; otherwise from the wake policy. No advisor means no advice.
pub fn collect_rollout(
    wake: &WakePolicy,
    advisor: Option<&dyn Actor>,
    schedule: &mut AdviceSchedule,
    env: &mut LiveEnv,
    n_steps: usize,
    mut buffer: Option<&mut WakeBuffer>,
    rng: &mut Rng,
) -> Result<Rollout> {
    let obs_dim = wake.shape.obs_dim;
    let mut observations = Vec::with_capacity(n_steps * obs_dim);
    let mut actions = Vec::with_capacity(n_steps);
    let mut log_probs = Vec::with_capacity(n_steps);
    let mut values = Vec::with_capacity(n_steps);
    let mut rewards = Vec::with_capacity(n_steps);
    let mut terminals = Vec::with_capacity(n_steps);
    let mut episode_returns = Vec::new();
    let mut advised = 0;
    let tag = env.task().layout_id;

    for _ in 0..n_steps {
        let obs = env.observation().to_vec();
        let (logits, value) = wake.evaluate_one(&obs)?;
        let action = match advisor {
            Some(a) if rng.bernoulli(schedule.probability()) => {
                advised += 1;
                a.sample_action(&obs, rng)?
            }
            _ => categorical_sample(&logits, rng)?,
        };
        schedule.advance(1);
        let step = env.step(Action::from_index(action).expect("policy emits valid actions"))?;
        if let Some(b) = buffer.as_deref_mut() {
            b.push(Transition::new(obs.clone(), step.reward, ActionLabel::Hard(action), tag)?);
        }
        observations.extend_from_slice(&obs);
        log_probs.push(log_softmax(&logits)[action]);
        actions.push(action);
        values.push(value);
        rewards.push(step.reward);
        terminals.push(step.done);
        if let Some(r) = step.episode_return {
            episode_returns.push(r);
        }
    }

    let (_, bootstrap) = wake.evaluate_one(env.observation())?;
    let cfg = &wake.config;
    let (advantages, returns) = compute_gae(&rewards, &values, &terminals, bootstrap, cfg.gamma, cfg.gae_lambda)?;
    Ok(Rollout {
        observations: Tensor::matrix(n_steps, obs_dim, observations)?,
        actions,
        log_probs,
        values,
        rewards,
        terminals,
        advantages,
        returns,
        advised,
        episode_returns,
    })
}
