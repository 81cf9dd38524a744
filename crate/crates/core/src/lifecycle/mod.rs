//! Syllabi, evaluation and learning blocks, whole lifetimes, and
//! single-task experts.

mod agent;
mod blocks;
mod lifetime;
mod log;
mod ste;
mod syllabus;

pub use agent::{Agent, AgentConfig, AgentMode, EvalPolicy};
pub use blocks::{evaluate_task, run_evaluation_block, run_learning_block, CURVE_EVERY, RETURN_WINDOW};
pub use lifetime::{run_lifetime, LifetimeRunner};
pub use log::{Block, CurvePoint, EvalRecord, LearningRecord, LifetimeLog, LogRecord, SleepEvent};
pub use ste::{similarity_matrix, train_ste, SteEntry, SteOptions, SteRegistry, STE_CURVE_EVERY};
pub use syllabus::{build_syllabus, Budgets, LearningBlockSpec, Scenario, Syllabus};

pub(crate) use agent::hex_digest;
#[cfg(test)]
pub(crate) use blocks::tests as blocks_tests;
