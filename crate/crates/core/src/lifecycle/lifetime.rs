use super::{
    run_evaluation_block, run_learning_block, Agent, AgentConfig, Block, LifetimeLog, SteRegistry, Syllabus,
};
use crate::error::{Error, Result};
use crate::gridworlds::TaskSpec;
use crate::numerics::{mix_seed, Rng};

const AGENT_STREAM: u64 = 1;
const LEARN_STREAM: u64 = 100;
const EVAL_STREAM: u64 = 0x4556_0000;

/// A lifetime that executes one block at a time, so callers can stream
/// records as they are produced or resume from a snapshot.
#[derive(Clone, Debug)]
pub struct LifetimeRunner {
    pub agent: Agent,
    pub log: LifetimeLog,
    eval_tasks: Vec<TaskSpec>,
    learn_tasks: Vec<TaskSpec>,
    root: Rng,
}

impl LifetimeRunner {
    /// Checks the configuration and, when a registry is given, that it covers
    /// every syllabus task, before anything trains.
    pub fn new(config: AgentConfig, syllabus: Syllabus, seed: u64, registry: Option<&SteRegistry>) -> Result<Self> {
        config.validate()?;
        if let Some(reg) = registry {
            let missing: Vec<&String> = syllabus.eval_tasks.iter().filter(|t| reg.get(t).is_none()).collect();
            if !missing.is_empty() {
                return Err(Error::Config(format!("no single-task expert for {missing:?}")));
            }
        }
        let eval_tasks = syllabus.eval_specs()?;
        let learn_tasks = syllabus
            .learning_blocks
            .iter()
            .map(|b| TaskSpec::from_id(&b.task))
            .collect::<Result<_>>()?;
        let root = Rng::new(seed);
        let agent = Agent::new(config.clone(), &root.fork(AGENT_STREAM))?;
        let log = LifetimeLog {
            seed,
            mode: config.mode,
            fingerprint: config.fingerprint(),
            syllabus,
            blocks: Vec::new(),
        };
        Ok(Self {
            agent,
            log,
            eval_tasks,
            learn_tasks,
            root,
        })
    }

    /// Rebuild a runner from saved state, e.g. a checkpoint.
    pub fn resume(agent: Agent, log: LifetimeLog, root: Rng) -> Result<Self> {
        if agent.config.fingerprint() != log.fingerprint {
            return Err(Error::Format("agent configuration does not match the log".into()));
        }
        let eval_tasks = log.syllabus.eval_specs()?;
        let learn_tasks: Vec<TaskSpec> = log
            .syllabus
            .learning_blocks
            .iter()
            .map(|b| TaskSpec::from_id(&b.task))
            .collect::<Result<_>>()?;
        if log.blocks.len() > 2 * learn_tasks.len() + 1 {
            return Err(Error::Format("log has more blocks than its syllabus".into()));
        }
        Ok(Self {
            agent,
            log,
            eval_tasks,
            learn_tasks,
            root,
        })
    }

    pub fn root_rng(&self) -> &Rng {
        &self.root
    }

    pub fn is_done(&self) -> bool {
        self.log.blocks.len() == 2 * self.learn_tasks.len() + 1
    }

    /// Run the next block and return it.
    pub fn step(&mut self) -> Result<&Block> {
        if self.is_done() {
            return Err(Error::Usage("lifetime already finished".into()));
        }
        let i = self.log.blocks.len();
        let block = if i % 2 == 0 {
            let eb = i / 2;
            let syllabus = &self.log.syllabus;
            let records = run_evaluation_block(
                &self.agent,
                &self.eval_tasks,
                syllabus.eval_episodes,
                eb,
                |t| syllabus.seen(eb, t),
                mix_seed(self.log.seed, EVAL_STREAM + eb as u64),
            )?;
            Block::Evaluation { eb_index: eb, records }
        } else {
            let lb = i / 2;
            let budget = self.log.syllabus.learning_blocks[lb].steps;
            let rng = self.root.fork(LEARN_STREAM + lb as u64);
            Block::Learning(run_learning_block(&mut self.agent, &self.learn_tasks[lb], budget, lb, &rng)?)
        };
        self.log.blocks.push(block);
        Ok(self.log.blocks.last().expect("just pushed"))
    }

    pub fn run(mut self) -> Result<LifetimeLog> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.log)
    }
}

/// Execute a whole lifetime; `(config, syllabus, seed)` determines every recorded number.
pub fn run_lifetime(
    config: &AgentConfig,
    syllabus: &Syllabus,
    seed: u64,
    registry: Option<&SteRegistry>,
) -> Result<LifetimeLog> {
    LifetimeRunner::new(config.clone(), syllabus.clone(), seed, registry)?.run()
}
