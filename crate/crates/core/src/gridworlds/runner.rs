use rand::RngCore;

use super::{reset, Action, EnvState, Observation, TaskSpec};
use crate::error::Result;
use crate::numerics::Rng;

/// Training seeds stay below this; evaluation seeds live above it.
pub const EVAL_SEED_BASE: u64 = 1 << 62;

/// Seed of the `i`-th evaluation episode, disjoint from every training seed.
pub fn eval_seed(i: u64) -> u64 {
    EVAL_SEED_BASE + i
}

/// A task that resets itself with a fresh training layout whenever an episode ends.
#[derive(Clone, Debug)]
pub struct LiveEnv {
    task: TaskSpec,
    state: EnvState,
    obs: Observation,
    seeds: Rng,
    running_return: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiveStep {
    pub reward: f64,
    pub done: bool,
    /// Undiscounted return of the episode that just ended.
    pub episode_return: Option<f64>,
}

impl LiveEnv {
    pub fn new(task: TaskSpec, mut seeds: Rng) -> Self {
        let (state, obs) = reset(&task, next_training_seed(&mut seeds));
        Self {
            task,
            state,
            obs,
            seeds,
            running_return: 0.0,
        }
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn observation(&self) -> &[f64] {
        &self.obs
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn step(&mut self, action: Action) -> Result<LiveStep> {
        let r = self.state.step(action)?;
        self.running_return += r.reward;
        if r.done {
            let ret = std::mem::take(&mut self.running_return);
            let (state, obs) = reset(&self.task, next_training_seed(&mut self.seeds));
            self.state = state;
            self.obs = obs;
            Ok(LiveStep {
                reward: r.reward,
                done: true,
                episode_return: Some(ret),
            })
        } else {
            self.obs = r.observation;
            Ok(LiveStep {
                reward: r.reward,
                done: false,
                episode_return: None,
            })
        }
    }
}

fn next_training_seed(rng: &mut Rng) -> u64 {
    rng.next_u64() % EVAL_SEED_BASE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resets_after_terminal_and_reports_return() {
        let task = TaskSpec::from_id("corridor-v1").unwrap();
        let mut env = LiveEnv::new(task, Rng::new(3));
        // Spinning in place never ends an episode early.
        let mut ended = None;
        for _ in 0..task.max_steps {
            let s = env.step(Action::TurnLeft).unwrap();
            if s.done {
                ended = s.episode_return;
            }
        }
        assert_eq!(ended, Some(0.0));
        assert_eq!(env.state().elapsed, 0);
    }
}
