//! The stable sleep agent and its replay-based consolidation phases.
//!
//! A sleep distills the wake buffer into the sleep policy. From the second
//! sleep on, the batch is augmented with generated samples pseudo-labeled by
//! a frozen copy of the agent taken at sleep start, and with a small
//! reservoir of real transitions from earlier tasks.

mod agent;
mod buffers;
mod train;

pub use agent::{weight_copy_into_wake, Architecture, SleepAgent, SleepNet, VaeShape};
pub use buffers::{ActionLabel, RandomReplayBuffer, Transition, WakeBuffer, RAR_CAPACITY, RAR_INTAKE, WAKE_BUFFER_CAPACITY};
pub use train::{sleep_loss, sleep_train, SleepBatch, SleepConfig, SleepLoss, SleepLossPoint, SleepReport};
