use serde::{Deserialize, Serialize};

use super::{AgentMode, Syllabus};
use crate::error::{Error, Result};
use crate::sleep::SleepReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub eb_index: usize,
    pub task: String,
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub seen: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    /// Mean return of the most recent training episodes.
    pub mean_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SleepEvent {
    /// Block step at which the sleep happened.
    pub step: u64,
    pub report: SleepReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningRecord {
    pub lb_index: usize,
    pub task: String,
    pub steps: u64,
    pub curve: Vec<CurvePoint>,
    pub sleeps: Vec<SleepEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Block {
    Evaluation { eb_index: usize, records: Vec<EvalRecord> },
    Learning(LearningRecord),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifetimeLog {
    pub seed: u64,
    pub mode: AgentMode,
    pub fingerprint: String,
    pub syllabus: Syllabus,
    pub blocks: Vec<Block>,
}

/// One JSONL line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        seed: u64,
        mode: AgentMode,
        fingerprint: String,
        syllabus: Syllabus,
    },
    Eval(EvalRecord),
    Curve {
        lb_index: usize,
        task: String,
        step: u64,
        mean_return: f64,
    },
    Sleep {
        lb_index: usize,
        step: u64,
        report: SleepReport,
    },
    LearningEnd {
        lb_index: usize,
        task: String,
        steps: u64,
    },
}

impl LifetimeLog {
    pub fn eval_blocks(&self) -> impl Iterator<Item = (usize, &[EvalRecord])> {
        self.blocks.iter().filter_map(|b| match b {
            Block::Evaluation { eb_index, records } => Some((*eb_index, records.as_slice())),
            _ => None,
        })
    }

    pub fn learning_blocks(&self) -> impl Iterator<Item = &LearningRecord> {
        self.blocks.iter().filter_map(|b| match b {
            Block::Learning(l) => Some(l),
            _ => None,
        })
    }

    /// Mean return of `task` in evaluation block `eb`.
    pub fn eval_return(&self, eb: usize, task: &str) -> Option<f64> {
        self.eval_blocks()
            .find(|(i, _)| *i == eb)
            .and_then(|(_, rs)| rs.iter().find(|r| r.task == task))
            .map(|r| r.mean_return)
    }

    pub fn block_records(block: &Block) -> Vec<LogRecord> {
        match block {
            Block::Evaluation { records, .. } => records.iter().cloned().map(LogRecord::Eval).collect(),
            Block::Learning(l) => {
                let mut out: Vec<LogRecord> = l
                    .curve
                    .iter()
                    .map(|c| LogRecord::Curve {
                        lb_index: l.lb_index,
                        task: l.task.clone(),
                        step: c.step,
                        mean_return: c.mean_return,
                    })
                    .collect();
                out.extend(l.sleeps.iter().map(|s| LogRecord::Sleep {
                    lb_index: l.lb_index,
                    step: s.step,
                    report: s.report.clone(),
                }));
                out.push(LogRecord::LearningEnd {
                    lb_index: l.lb_index,
                    task: l.task.clone(),
                    steps: l.steps,
                });
                out
            }
        }
    }

    pub fn header(&self) -> LogRecord {
        LogRecord::Header {
            seed: self.seed,
            mode: self.mode,
            fingerprint: self.fingerprint.clone(),
            syllabus: self.syllabus.clone(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |r: &LogRecord| {
            out.push_str(&serde_json::to_string(r).expect("log records serialize"));
            out.push('\n');
        };
        push(&self.header());
        for b in &self.blocks {
            Self::block_records(b).iter().for_each(&mut push);
        }
        out
    }

    /// Rebuild a log from its JSONL form. A trailing partial block is dropped.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).enumerate();
        let parse = |(i, l): (usize, &str)| {
            serde_json::from_str::<LogRecord>(l).map_err(|e| Error::Format(format!("log line {}: {e}", i + 1)))
        };
        let first = lines.next().ok_or_else(|| Error::Format("empty log".into()))?;
        let LogRecord::Header {
            seed,
            mode,
            fingerprint,
            syllabus,
        } = parse(first)?
        else {
            return Err(Error::Format("log must start with a header record".into()));
        };
        let mut log = LifetimeLog {
            seed,
            mode,
            fingerprint,
            syllabus,
            blocks: Vec::new(),
        };
        let mut pending = LearningRecord {
            lb_index: 0,
            task: String::new(),
            steps: 0,
            curve: Vec::new(),
            sleeps: Vec::new(),
        };
        for line in lines {
            match parse(line)? {
                LogRecord::Header { .. } => return Err(Error::Format("duplicate header".into())),
                LogRecord::Eval(r) => match log.blocks.last_mut() {
                    Some(Block::Evaluation { eb_index, records }) if *eb_index == r.eb_index => records.push(r),
                    _ => log.blocks.push(Block::Evaluation {
                        eb_index: r.eb_index,
                        records: vec![r],
                    }),
                },
                LogRecord::Curve { step, mean_return, .. } => pending.curve.push(CurvePoint { step, mean_return }),
                LogRecord::Sleep { step, report, .. } => pending.sleeps.push(SleepEvent { step, report }),
                LogRecord::LearningEnd { lb_index, task, steps } => {
                    let mut done = std::mem::replace(
                        &mut pending,
                        LearningRecord {
                            lb_index: 0,
                            task: String::new(),
                            steps: 0,
                            curve: Vec::new(),
                            sleeps: Vec::new(),
                        },
                    );
                    done.lb_index = lb_index;
                    done.task = task;
                    done.steps = steps;
                    log.blocks.push(Block::Learning(done));
                }
            }
        }
        Ok(log)
    }

    /// Every learning block exists and ran for exactly its budget; blocks alternate.
    pub fn is_complete(&self) -> bool {
        let lbs = &self.syllabus.learning_blocks;
        if self.blocks.len() != 2 * lbs.len() + 1 {
            return false;
        }
        self.blocks.iter().enumerate().all(|(i, b)| match b {
            Block::Evaluation { eb_index, records } => {
                i % 2 == 0 && *eb_index == i / 2 && records.len() == self.syllabus.eval_tasks.len()
            }
            Block::Learning(l) => {
                i % 2 == 1 && l.lb_index == i / 2 && l.task == lbs[i / 2].task && l.steps == lbs[i / 2].steps
            }
        })
    }
}
