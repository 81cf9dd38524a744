use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworlds::{catalog_ids, TaskSpec};
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Pairwise,
    Alternating,
    Condensed,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Pairwise => "pairwise",
            Scenario::Alternating => "alternating",
            Scenario::Condensed => "condensed",
        }
    }
}

/// Step budget per learning block: a default plus per-task overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    pub default: u64,
    pub per_task: BTreeMap<String, u64>,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            default: 150_000,
            per_task: BTreeMap::new(),
        }
    }
}

impl Budgets {
    pub fn uniform(steps: u64) -> Self {
        Self {
            default: steps,
            per_task: BTreeMap::new(),
        }
    }

    pub fn for_task(&self, task: &str) -> u64 {
        self.per_task.get(task).copied().unwrap_or(self.default)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningBlockSpec {
    pub task: String,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Syllabus {
    pub scenario: Scenario,
    /// Tasks evaluated in every evaluation block.
    pub eval_tasks: Vec<String>,
    pub learning_blocks: Vec<LearningBlockSpec>,
    pub eval_episodes: usize,
}

impl Syllabus {
    /// One evaluation block before the first learning block and one after each.
    pub fn num_eval_blocks(&self) -> usize {
        self.learning_blocks.len() + 1
    }

    /// Whether `task` was trained in a learning block preceding evaluation block `eb_index`.
    pub fn seen(&self, eb_index: usize, task: &str) -> bool {
        self.learning_blocks.iter().take(eb_index).any(|b| b.task == task)
    }

    pub fn total_steps(&self) -> u64 {
        self.learning_blocks.iter().map(|b| b.steps).sum()
    }

    pub fn eval_specs(&self) -> Result<Vec<TaskSpec>> {
        self.eval_tasks.iter().map(|t| TaskSpec::from_id(t)).collect()
    }
}

const PERMUTATION_STREAM: u64 = 0x5359_4C42;

pub fn build_syllabus(
    scenario: Scenario,
    tasks: &[String],
    budgets: &Budgets,
    eval_episodes: usize,
    seed: u64,
) -> Result<Syllabus> {
    for t in tasks {
        TaskSpec::from_id(t)?;
    }
    if eval_episodes == 0 {
        return Err(Error::Config("eval_episodes must be positive".into()));
    }
    let order: Vec<String> = match scenario {
        Scenario::Pairwise | Scenario::Alternating => {
            if tasks.len() != 2 || tasks[0] == tasks[1] {
                return Err(Error::Config(format!(
                    "{} syllabus needs exactly 2 distinct tasks, got {tasks:?}",
                    scenario.name()
                )));
            }
            let reps = if scenario == Scenario::Pairwise { 1 } else { 3 };
            (0..reps).flat_map(|_| tasks.iter().cloned()).collect()
        }
        Scenario::Condensed => {
            let catalog = catalog_ids();
            let mut given = tasks.to_vec();
            given.sort();
            let mut want = catalog.clone();
            want.sort();
            if given != want {
                return Err(Error::Config(format!(
                    "condensed syllabus needs the full catalog {catalog:?}, got {tasks:?}"
                )));
            }
            let mut perm = catalog;
            Rng::new(seed).fork(PERMUTATION_STREAM).shuffle(&mut perm);
            perm
        }
    };
    let eval_tasks = match scenario {
        Scenario::Condensed => catalog_ids(),
        _ => tasks.to_vec(),
    };
    let learning_blocks = order
        .into_iter()
        .map(|task| {
            let steps = budgets.for_task(&task);
            if steps == 0 {
                return Err(Error::Config(format!("zero step budget for {task}")));
            }
            Ok(LearningBlockSpec { task, steps })
        })
        .collect::<Result<_>>()?;
    Ok(Syllabus {
        scenario,
        eval_tasks,
        learning_blocks,
        eval_episodes,
    })
}
