use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{evaluate_task, CurvePoint, EvalPolicy, RETURN_WINDOW};
use crate::error::{Error, Result};
use crate::gridworlds::{LiveEnv, TaskSpec};
use crate::numerics::{mix_seed, Rng};
use crate::wake::{collect_rollout, ppo_update, AdviceSchedule, NetworkShape, PpoConfig, WakePolicy};

/// Expert learning-curve cadence, in environment steps.
pub const STE_CURVE_EVERY: u64 = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteEntry {
    pub task: String,
    /// Mean return over the final training episodes.
    pub terminal_return: f64,
    pub steps: u64,
    pub curve: Vec<CurvePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteOptions {
    pub total_steps: u64,
    /// Stop once the trailing mean over a full window reaches this return.
    pub target_return: Option<f64>,
}

impl Default for SteOptions {
    fn default() -> Self {
        Self {
            total_steps: 1_000_000,
            target_return: None,
        }
    }
}

/// Train a fresh PPO policy on one task.
pub fn train_ste(
    task: &TaskSpec,
    shape: &NetworkShape,
    ppo: PpoConfig,
    options: &SteOptions,
    seed: u64,
) -> Result<(SteEntry, WakePolicy)> {
    let root = Rng::new(seed);
    let mut wake = WakePolicy::new(shape.clone(), ppo, &mut root.fork(1))?;
    let mut env = LiveEnv::new(*task, root.fork(2));
    let mut rng = root.fork(3);
    let mut no_advice = AdviceSchedule::default();
    let mut window: VecDeque<f64> = VecDeque::with_capacity(RETURN_WINDOW);
    let mut curve = Vec::new();
    let mut steps = 0u64;
    let mut next_curve = STE_CURVE_EVERY;
    let mean = |w: &VecDeque<f64>| if w.is_empty() { 0.0 } else { w.iter().sum::<f64>() / w.len() as f64 };
    while steps < options.total_steps {
        let n = (options.total_steps - steps).min(ppo.n_steps as u64) as usize;
        let rollout = collect_rollout(&wake, None, &mut no_advice, &mut env, n, None, &mut rng)?;
        ppo_update(&mut wake, &rollout, &mut rng)?;
        steps += n as u64;
        for r in rollout.episode_returns {
            if window.len() == RETURN_WINDOW {
                window.pop_front();
            }
            window.push_back(r);
        }
        let reached = options
            .target_return
            .is_some_and(|t| window.len() == RETURN_WINDOW && mean(&window) >= t);
        if steps >= next_curve || steps == options.total_steps || reached {
            curve.push(CurvePoint {
                step: steps,
                mean_return: mean(&window),
            });
            next_curve = (steps / STE_CURVE_EVERY + 1) * STE_CURVE_EVERY;
        }
        if reached {
            break;
        }
    }
    let entry = SteEntry {
        task: task.id(),
        terminal_return: mean(&window),
        steps,
        curve,
    };
    Ok((entry, wake))
}

/// Expert results per task, plus the expert policies when available.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SteRegistry {
    entries: BTreeMap<String, SteEntry>,
    policies: BTreeMap<String, WakePolicy>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: u32,
    entries: Vec<SteEntry>,
    policies: Vec<String>,
}

const MANIFEST: &str = "index.json";
const MANIFEST_FORMAT: u32 = 1;

fn policy_file(task: &str) -> String {
    format!("{task}.policy.json")
}

impl SteRegistry {
    /// Relative metrics divide by the expert's return, so it must be positive.
    pub fn insert(&mut self, entry: SteEntry) -> Result<()> {
        if !(entry.terminal_return > 0.0) {
            return Err(Error::Config(format!(
                "expert for {} ended at return {}; relative metrics need a positive expert return",
                entry.task, entry.terminal_return
            )));
        }
        self.entries.insert(entry.task.clone(), entry);
        Ok(())
    }

    pub fn insert_with_policy(&mut self, entry: SteEntry, policy: WakePolicy) -> Result<()> {
        let task = entry.task.clone();
        self.insert(entry)?;
        self.policies.insert(task, policy);
        Ok(())
    }

    pub fn get(&self, task: &str) -> Option<&SteEntry> {
        self.entries.get(task)
    }

    pub fn policy(&self, task: &str) -> Option<&WakePolicy> {
        self.policies.get(task)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (task, p) in &self.policies {
            fs::write(dir.join(policy_file(task)), serde_json::to_vec(p)?)?;
        }
        let manifest = Manifest {
            format: MANIFEST_FORMAT,
            entries: self.entries.values().cloned().collect(),
            policies: self.policies.keys().cloned().collect(),
        };
        fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    /// Load a registry directory; a missing directory gives an empty registry.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(Self::default());
        }
        let manifest: Manifest = serde_json::from_slice(&fs::read(&path)?)?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::Format(format!("expert registry format {} unsupported", manifest.format)));
        }
        let mut reg = Self::default();
        for e in manifest.entries {
            reg.insert(e)?;
        }
        for task in manifest.policies {
            let p: WakePolicy = serde_json::from_slice(&fs::read(dir.join(policy_file(&task)))?)?;
            reg.policies.insert(task, p);
        }
        Ok(reg)
    }
}

/// Entry `(i, j)`: greedy return of expert `i` after `probe_steps` of PPO on
/// task `j`, divided by expert `j`'s terminal return. The diagonal is 1.
pub fn similarity_matrix(
    registry: &SteRegistry,
    tasks: &[String],
    probe_steps: u64,
    eval_episodes: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let specs: Vec<TaskSpec> = tasks.iter().map(|t| TaskSpec::from_id(t)).collect::<Result<_>>()?;
    let mut m = vec![vec![1.0; tasks.len()]; tasks.len()];
    for (i, src) in tasks.iter().enumerate() {
        let base = registry
            .policy(src)
            .ok_or_else(|| Error::Config(format!("no expert policy for {src}")))?;
        for (j, dst) in tasks.iter().enumerate() {
            if i == j {
                continue;
            }
            let reference = registry
                .get(dst)
                .ok_or_else(|| Error::Config(format!("no expert entry for {dst}")))?
                .terminal_return;
            let mut p = base.clone();
            p.reset_optimizer();
            let root = Rng::new(mix_seed(seed, (i * tasks.len() + j) as u64));
            let mut env = LiveEnv::new(specs[j], root.fork(1));
            let mut rng = root.fork(2);
            let mut no_advice = AdviceSchedule::default();
            let mut done = 0;
            while done < probe_steps {
                let n = (probe_steps - done).min(p.config.n_steps as u64) as usize;
                let rollout = collect_rollout(&p, None, &mut no_advice, &mut env, n, None, &mut rng)?;
                ppo_update(&mut p, &rollout, &mut rng)?;
                done += n as u64;
            }
            let (ret, _) = evaluate_task(&EvalPolicy::Greedy(&p), &specs[j], eval_episodes, &mut root.fork(3))?;
            m[i][j] = ret / reference;
        }
    }
    Ok(m)
}
