//! Lifelong reinforcement learning with wake-sleep consolidation and
//! model-free generative replay.
//!
//! A plastic wake policy learns each task with clipped-surrogate policy
//! optimization; periodic sleep phases distill it into a stable sleep policy
//! using experience replay, generative replay from a VAE, and a small random
//! replay reservoir. Everything runs on a built-in partially observed
//! gridworld suite and is scored with a lifelong-learning metric suite.

pub mod error;
pub mod generative;
pub mod gridworlds;
pub mod harness;
pub mod lifecycle;
pub mod metrics;
pub mod numerics;
pub mod sleep;
pub mod wake;

pub use error::{Error, Result};
