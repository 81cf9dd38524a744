use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generative::VaeLossWeights;
use crate::gridworlds::TaskSpec;
use crate::lifecycle::{build_syllabus, AgentConfig, AgentMode, Budgets, Scenario, SteOptions, Syllabus};
use crate::sleep::{SleepConfig, VaeShape};
use crate::wake::{AdviceSchedule, NetworkShape, PpoConfig};

/// Overrides every configured output directory.
pub const OUT_ENV: &str = "REPLAY_LOOM_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayFlags {
    pub er: bool,
    pub rar: bool,
    pub gr: bool,
}

impl ReplayFlags {
    pub const ALL: ReplayFlags = ReplayFlags {
        er: true,
        rar: true,
        gr: true,
    };

    pub fn name(self) -> String {
        let mut parts = Vec::new();
        for (on, n) in [(self.er, "er"), (self.rar, "rar"), (self.gr, "gr")] {
            if on {
                parts.push(n);
            }
        }
        parts.join("-")
    }
}

/// Preset names: `{sequential,two-headed,hidden}-{er,er-rar,er-gr,er-rar-gr}`, `baseline`, `random`.
pub fn preset_names() -> Vec<String> {
    let mut out = Vec::new();
    for arch in ["sequential", "two-headed", "hidden"] {
        for replay in ["er", "er-rar", "er-gr", "er-rar-gr"] {
            out.push(format!("{arch}-{replay}"));
        }
    }
    out.push("baseline".into());
    out.push("random".into());
    out
}

pub fn preset(name: &str) -> Result<(AgentMode, ReplayFlags)> {
    match name {
        "baseline" => return Ok((AgentMode::Baseline, ReplayFlags::ALL)),
        "random" => return Ok((AgentMode::Random, ReplayFlags::ALL)),
        _ => {}
    }
    let unknown = || Error::Config(format!("unknown preset {name:?}; expected one of {:?}", preset_names()));
    let (mode, rest) = [
        ("sequential-", AgentMode::LlSequential),
        ("two-headed-", AgentMode::LlTwoHeaded),
        ("hidden-", AgentMode::LlHidden),
    ]
    .into_iter()
    .find_map(|(p, m)| name.strip_prefix(p).map(|r| (m, r)))
    .ok_or_else(unknown)?;
    let replay = match rest {
        "er" => ReplayFlags { er: true, rar: false, gr: false },
        "er-rar" => ReplayFlags { er: true, rar: true, gr: false },
        "er-gr" => ReplayFlags { er: true, rar: false, gr: true },
        "er-rar-gr" => ReplayFlags::ALL,
        _ => return Err(unknown()),
    };
    Ok((mode, replay))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    mode: Option<AgentMode>,
    replay: Option<ReplayFlags>,
    #[serde(default = "default_scenario")]
    scenario: Scenario,
    #[serde(default = "default_tasks")]
    tasks: Vec<String>,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default = "default_eval_episodes")]
    eval_episodes: usize,
    #[serde(default)]
    budgets: Budgets,
    #[serde(default)]
    network: NetworkShape,
    #[serde(default)]
    vae: VaeShape,
    #[serde(default)]
    loss_weights: Option<VaeLossWeights>,
    #[serde(default)]
    ppo: PpoConfig,
    #[serde(default)]
    sleep: SleepConfig,
    #[serde(default)]
    advice: AdviceSchedule,
    #[serde(default)]
    ste: SteOptions,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    registry_dir: Option<PathBuf>,
    #[serde(default)]
    bootstrap_seed: u64,
}

fn default_scenario() -> Scenario {
    Scenario::Pairwise
}

fn default_tasks() -> Vec<String> {
    vec!["corridor-v1".into(), "doorkey-v1".into()]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_eval_episodes() -> usize {
    100
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// A fully resolved and validated experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub agent: AgentConfig,
    pub scenario: Scenario,
    pub tasks: Vec<String>,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    pub budgets: Budgets,
    pub ste: SteOptions,
    pub output_dir: PathBuf,
    /// Where single-task experts are stored; defaults to `<output_dir>/ste`.
    pub registry_dir: PathBuf,
    pub bootstrap_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

const SLEEP_REPLAY_KEYS: [&str; 3] = ["use_er", "use_rar", "use_gr"];

/// Parse TOML text into a validated experiment. Unset knobs take their
/// defaults, e.g. 20,000 sleep iterations.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    if let Some(sleep) = table.get("sleep").and_then(|v| v.as_table()) {
        if let Some(k) = SLEEP_REPLAY_KEYS.iter().find(|k| sleep.contains_key(**k)) {
            return Err(Error::Config(format!("sleep.{k}: replay sources are set in the [replay] table")));
        }
    }
    let raw: RawConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("{path}: {}", e.into_inner()))
    })?;
    resolve(raw)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig> {
    let (mut mode, mut replay) = (AgentMode::LlHidden, ReplayFlags::ALL);
    if let Some(p) = &raw.preset {
        (mode, replay) = preset(p)?;
    }
    mode = raw.mode.unwrap_or(mode);
    replay = raw.replay.unwrap_or(replay);
    if mode.is_lifelong() && !(replay.er || replay.rar || replay.gr) {
        return Err(Error::Config("replay: at least one replay source must be enabled".into()));
    }
    let mut sleep = raw.sleep;
    sleep.use_er = replay.er;
    sleep.use_rar = replay.rar;
    sleep.use_gr = replay.gr;
    let agent = AgentConfig {
        mode,
        network: raw.network,
        vae: raw.vae,
        loss_weights: raw.loss_weights.unwrap_or(VaeLossWeights::MINIGRID),
        ppo: raw.ppo,
        sleep,
        advice: raw.advice,
    };
    agent.validate()?;
    if raw.seeds.is_empty() {
        return Err(Error::Config("seeds: at least one seed is required".into()));
    }
    if raw.eval_episodes == 0 {
        return Err(Error::Config("eval_episodes must be positive".into()));
    }
    if raw.ste.total_steps == 0 {
        return Err(Error::Config("ste.total_steps must be positive".into()));
    }
    for t in &raw.tasks {
        TaskSpec::from_id(t)?;
    }
    for (task, &steps) in &raw.budgets.per_task {
        TaskSpec::from_id(task)?;
        if steps == 0 {
            return Err(Error::Config(format!("budgets.per_task.{task} must be positive")));
        }
    }
    if raw.budgets.default == 0 {
        return Err(Error::Config("budgets.default must be positive".into()));
    }
    let registry_dir = raw.registry_dir.unwrap_or_else(|| raw.output_dir.join("ste"));
    let cfg = ExperimentConfig {
        agent,
        scenario: raw.scenario,
        tasks: raw.tasks,
        seeds: raw.seeds,
        eval_episodes: raw.eval_episodes,
        budgets: raw.budgets,
        ste: raw.ste,
        output_dir: raw.output_dir,
        registry_dir,
        bootstrap_seed: raw.bootstrap_seed,
    };
    cfg.syllabus(0)?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Syllabus for one lifetime; only the condensed scenario depends on the seed.
    pub fn syllabus(&self, seed: u64) -> Result<Syllabus> {
        build_syllabus(self.scenario, &self.tasks, &self.budgets, self.eval_episodes, seed)
    }

    /// `--out` wins, then `REPLAY_LOOM_OUT`, then the configured directory.
    /// A relocated output directory also relocates a default registry.
    pub fn apply_output_override(&mut self, cli: Option<PathBuf>) {
        let new = cli.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from));
        if let Some(dir) = new {
            if self.registry_dir == self.output_dir.join("ste") {
                self.registry_dir = dir.join("ste");
            }
            self.output_dir = dir;
        }
    }

    pub fn label(&self) -> String {
        match self.agent.mode.architecture() {
            Some(a) => format!("{}-{}", a.name(), self.agent.sleep.replay_name()),
            None => self.agent.mode.name().to_string(),
        }
    }
}
