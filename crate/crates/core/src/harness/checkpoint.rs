use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifecycle::{hex_digest, Agent, AgentMode, LifetimeLog, LifetimeRunner};
use crate::numerics::Rng;
use crate::sleep::{RandomReplayBuffer, WakeBuffer};

pub const CHECKPOINT_FORMAT: u32 = 1;

/// A lifetime paused between blocks: networks, optimizer moments, buffers,
/// advice schedule, the log so far and the lifetime's root rng.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: u32,
    pub mode: AgentMode,
    /// False when the replay buffers were dropped to save space; such a
    /// checkpoint can be inspected but not resumed.
    pub has_buffers: bool,
    pub agent: Agent,
    pub log: LifetimeLog,
    pub rng: Rng,
}

#[derive(Deserialize)]
struct Probe {
    format: u32,
}

impl Checkpoint {
    pub fn capture(runner: &LifetimeRunner, with_buffers: bool) -> Self {
        let mut agent = runner.agent.clone();
        if !with_buffers {
            agent.wake_buffer = WakeBuffer::new(agent.wake_buffer.capacity());
            agent.rar = RandomReplayBuffer::new(agent.rar.intake(), agent.config.sleep.rar_capacity);
        }
        Self {
            format: CHECKPOINT_FORMAT,
            mode: agent.config.mode,
            has_buffers: with_buffers,
            agent,
            log: runner.log.clone(),
            rng: runner.root_rng().clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("checkpoint serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let probe: Probe = serde_json::from_slice(bytes)
            .map_err(|e| Error::Format(format!("not a checkpoint: {e}")))?;
        if probe.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!(
                "checkpoint format {} unsupported (expected {CHECKPOINT_FORMAT})",
                probe.format
            )));
        }
        let ckpt: Checkpoint = serde_json::from_slice(bytes)?;
        if ckpt.mode != ckpt.agent.config.mode {
            return Err(Error::Format("checkpoint mode disagrees with its agent".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Hex SHA-256 of the serialized form.
    pub fn hash(&self) -> String {
        hex_digest(&self.to_bytes())
    }

    pub fn into_runner(self) -> Result<LifetimeRunner> {
        if !self.has_buffers {
            return Err(Error::Usage("checkpoint was saved without buffers and cannot be resumed".into()));
        }
        LifetimeRunner::resume(self.agent, self.log, self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifecycle::blocks_tests::tiny_config;
    use crate::lifecycle::{build_syllabus, Budgets, Scenario};

    fn runner() -> LifetimeRunner {
        let tasks = vec!["corridor-v1".to_string(), "fetch-v1".to_string()];
        let syl = build_syllabus(Scenario::Pairwise, &tasks, &Budgets::uniform(96), 2, 0).unwrap();
        LifetimeRunner::new(tiny_config(AgentMode::LlHidden), syl, 4, None).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let mut r = runner();
        r.step().unwrap();
        r.step().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
        Checkpoint::capture(&r, true).save(&a).unwrap();
        Checkpoint::load(&a).unwrap().save(&b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn resumed_lifetime_matches_uninterrupted_one() {
        let full = runner().run().unwrap();
        let mut r = runner();
        r.step().unwrap();
        r.step().unwrap();
        let bytes = Checkpoint::capture(&r, true).to_bytes();
        let resumed = Checkpoint::from_bytes(&bytes).unwrap().into_runner().unwrap().run().unwrap();
        assert_eq!(full.to_jsonl(), resumed.to_jsonl());
    }

    #[test]
    fn version_mismatch_and_bufferless_resume_are_rejected() {
        let mut c = Checkpoint::capture(&runner(), false);
        assert!(c.clone().into_runner().is_err());
        c.format = 99;
        assert!(matches!(Checkpoint::from_bytes(&c.to_bytes()), Err(Error::Format(_))));
        assert!(Checkpoint::from_bytes(b"{}").is_err());
    }
}
