use std::collections::VecDeque;

use super::{Agent, CurvePoint, EvalPolicy, EvalRecord, LearningRecord, SleepEvent};
use crate::error::{Error, Result};
use crate::gridworlds::{eval_seed, reset, Action, LiveEnv, TaskSpec, NUM_ACTIONS};
use crate::numerics::{mix_seed, Rng};
use crate::sleep::{sleep_train, weight_copy_into_wake};
use crate::wake::{collect_rollout, ppo_update, Actor};

/// Learning-curve cadence inside a learning block, in environment steps.
pub const CURVE_EVERY: u64 = 5_000;
/// Episodes averaged into each learning-curve sample.
pub const RETURN_WINDOW: usize = 100;

const ENV_STREAM: u64 = 10;
const TRAIN_STREAM: u64 = 11;
const RESET_STREAM: u64 = 1_000;
const SLEEP_STREAM: u64 = 2_000;

/// Mean and population standard deviation of `episodes` evaluation episodes.
///
/// Episode `i` always uses layout `eval_seed(i)`, so every evaluation block
/// sees the same layouts. `rng` only drives the random policy.
pub fn evaluate_task(policy: &EvalPolicy<'_>, task: &TaskSpec, episodes: usize, rng: &mut Rng) -> Result<(f64, f64)> {
    let mut returns = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let (mut state, mut obs) = reset(task, eval_seed(ep as u64));
        let mut total = 0.0;
        loop {
            let a = match policy {
                EvalPolicy::Greedy(p) => p.greedy_action(&obs)?,
                EvalPolicy::Random => rng.below(NUM_ACTIONS),
            };
            let r = state.step(Action::from_index(a).expect("valid action"))?;
            total += r.reward;
            if r.done {
                break;
            }
            obs = r.observation;
        }
        returns.push(total);
    }
    let n = returns.len().max(1) as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Frozen evaluation of every task. Takes the agent by shared reference, so
/// nothing it owns can change.
pub fn run_evaluation_block(
    agent: &Agent,
    tasks: &[TaskSpec],
    episodes: usize,
    eb_index: usize,
    seen: impl Fn(&str) -> bool,
    seed: u64,
) -> Result<Vec<EvalRecord>> {
    let policy = agent.eval_policy();
    tasks
        .iter()
        .enumerate()
        .map(|(i, task)| {
            let mut rng = Rng::new(mix_seed(seed, i as u64));
            let (mean_return, std_return) = evaluate_task(&policy, task, episodes, &mut rng)?;
            let id = task.id();
            Ok(EvalRecord {
                eb_index,
                seen: seen(&id),
                task: id,
                episodes,
                mean_return,
                std_return,
            })
        })
        .collect()
}

/// Start of a wake phase. After the first sleep, lifelong agents reset PPO,
/// restart advice and optionally seed the wake network from the sleep agent.
fn begin_wake_phase(agent: &mut Agent, rng: &mut Rng) -> Result<()> {
    if !agent.mode().is_lifelong() {
        return Ok(());
    }
    agent.wake_buffer.clear();
    if agent.sleeps_completed() == 0 {
        return Ok(());
    }
    let wake = agent.wake.as_mut().expect("lifelong agents have a wake policy");
    wake.reset(rng);
    agent.advice.restart();
    if agent.config.sleep.weight_copy_on_wake {
        weight_copy_into_wake(agent.sleep.as_ref().expect("lifelong agents sleep"), wake)?;
    }
    Ok(())
}

fn sleep_points(budget: u64, sleeps: usize) -> Vec<u64> {
    let mut pts: Vec<u64> = (1..=sleeps as u64).map(|k| budget * k / sleeps as u64).filter(|&p| p > 0).collect();
    pts.dedup();
    pts
}

/// Train on `task` for exactly `budget` steps, sleeping at evenly spaced points.
pub fn run_learning_block(
    agent: &mut Agent,
    task: &TaskSpec,
    budget: u64,
    lb_index: usize,
    rng: &Rng,
) -> Result<LearningRecord> {
    if budget == 0 {
        return Err(Error::Config(format!("learning block {lb_index} has a zero step budget")));
    }
    let lifelong = agent.mode().is_lifelong();
    let points = if lifelong {
        sleep_points(budget, agent.config.sleep.sleeps_per_learning_block)
    } else {
        Vec::new()
    };
    let mut env = LiveEnv::new(*task, rng.fork(ENV_STREAM));
    let mut train = rng.fork(TRAIN_STREAM);
    begin_wake_phase(agent, &mut rng.fork(RESET_STREAM))?;

    let mut window: VecDeque<f64> = VecDeque::with_capacity(RETURN_WINDOW);
    let mut record = LearningRecord {
        lb_index,
        task: task.id(),
        steps: 0,
        curve: Vec::new(),
        sleeps: Vec::new(),
    };
    let mut next_curve = CURVE_EVERY;
    let mut next_sleep = 0;
    let mut steps = 0u64;
    while steps < budget {
        let boundary = points.get(next_sleep).copied().unwrap_or(budget);
        let n = (boundary - steps).min(agent.config.ppo.n_steps as u64) as usize;
        let finished = match agent.wake.as_mut() {
            None => {
                let mut finished = Vec::new();
                for _ in 0..n {
                    let a = Action::from_index(train.below(NUM_ACTIONS)).expect("valid action");
                    finished.extend(env.step(a)?.episode_return);
                }
                finished
            }
            Some(wake) => {
                let advisor = agent
                    .sleep
                    .as_ref()
                    .filter(|s| s.sleeps_completed > 0)
                    .map(|s| s as &dyn Actor);
                let buffer = lifelong.then_some(&mut agent.wake_buffer);
                let rollout = collect_rollout(wake, advisor, &mut agent.advice, &mut env, n, buffer, &mut train)?;
                ppo_update(wake, &rollout, &mut train)?;
                rollout.episode_returns
            }
        };
        steps += n as u64;
        for r in finished {
            if window.len() == RETURN_WINDOW {
                window.pop_front();
            }
            window.push_back(r);
        }
        let mean = if window.is_empty() {
            0.0
        } else {
            window.iter().sum::<f64>() / window.len() as f64
        };
        if steps >= next_curve || steps == budget {
            record.curve.push(CurvePoint { step: steps, mean_return: mean });
            next_curve = (steps / CURVE_EVERY + 1) * CURVE_EVERY;
        }
        if next_sleep < points.len() && steps == points[next_sleep] {
            let sleeper = agent.sleep.as_mut().expect("lifelong agents sleep");
            let report = sleep_train(
                sleeper,
                &agent.wake_buffer,
                &mut agent.rar,
                &agent.config.sleep,
                &mut rng.fork(SLEEP_STREAM + next_sleep as u64),
            )?;
            if let Some(msg) = &report.aborted {
                log::warn!("learning block {lb_index}: sleep aborted ({msg})");
            }
            record.sleeps.push(SleepEvent { step: steps, report });
            next_sleep += 1;
            if steps < budget {
                begin_wake_phase(agent, &mut rng.fork(RESET_STREAM + next_sleep as u64))?;
            }
        }
    }
    record.steps = steps;
    Ok(record)
}
