use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworlds::NUM_ACTIONS;
use crate::numerics::Rng;

pub const WAKE_BUFFER_CAPACITY: usize = 20_000;
pub const RAR_INTAKE: usize = 256;
pub const RAR_CAPACITY: usize = 4_096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ActionLabel {
    Hard(usize),
    /// Unnormalized logits; the training target is their softmax.
    Soft(Vec<f64>),
}

impl ActionLabel {
    /// Target distribution over actions.
    pub fn target(&self) -> Vec<f64> {
        match self {
            ActionLabel::Hard(a) => {
                let mut v = vec![0.0; NUM_ACTIONS];
                v[*a] = 1.0;
                v
            }
            ActionLabel::Soft(logits) => crate::numerics::softmax(logits),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ActionLabel::Hard(a) if *a < NUM_ACTIONS => Ok(()),
            ActionLabel::Hard(a) => Err(Error::Dimension(format!("action label {a} out of range"))),
            ActionLabel::Soft(l) if l.len() == NUM_ACTIONS && l.iter().all(|v| v.is_finite()) => Ok(()),
            ActionLabel::Soft(_) => Err(Error::Numerical("soft label must hold 6 finite logits".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub label: ActionLabel,
    /// Debug metadata: layout id of the task that produced this transition.
    /// Never shown to the learner.
    pub task_tag: u32,
}

impl Transition {
    pub fn new(observation: Vec<f64>, reward: f64, label: ActionLabel, task_tag: u32) -> Result<Self> {
        label.validate()?;
        Ok(Self {
            observation,
            reward,
            label,
            task_tag,
        })
    }
}

/// FIFO queue of the most recent wake transitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WakeBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl WakeBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "wake buffer capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` draws with replacement.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut Rng) -> Vec<&'a Transition> {
        (0..n).map(|_| &self.items[rng.below(self.items.len())]).collect()
    }
}

/// Small reservoir of real transitions carried across sleeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomReplayBuffer {
    capacity: usize,
    intake: usize,
    items: VecDeque<Transition>,
}

impl Default for RandomReplayBuffer {
    fn default() -> Self {
        Self::new(RAR_INTAKE, RAR_CAPACITY)
    }
}

impl RandomReplayBuffer {
    pub fn new(intake: usize, capacity: usize) -> Self {
        Self {
            capacity,
            intake,
            items: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn intake(&self) -> usize {
        self.intake
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Copy `min(intake, wake.len())` distinct wake transitions in, evicting the oldest at capacity.
    pub fn accumulate(&mut self, wake: &WakeBuffer, rng: &mut Rng) -> usize {
        if wake.is_empty() {
            log::warn!("random replay intake skipped: wake buffer is empty");
            return 0;
        }
        let k = self.intake.min(wake.len());
        let mut idx: Vec<usize> = (0..wake.len()).collect();
        // Partial Fisher-Yates: the first k entries are a uniform subset.
        for i in 0..k {
            let j = i + rng.below(wake.len() - i);
            idx.swap(i, j);
        }
        for &i in &idx[..k] {
            if self.items.len() == self.capacity {
                self.items.pop_front();
            }
            self.items.push_back(wake.get(i).clone());
        }
        k
    }

    pub fn sample<'a>(&'a self, n: usize, rng: &mut Rng) -> Vec<&'a Transition> {
        (0..n).map(|_| &self.items[rng.below(self.items.len())]).collect()
    }
}
