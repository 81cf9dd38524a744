use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use replay_loom::gridworlds::{render_ascii, reset, TaskSpec};
use replay_loom::harness::{
    self, export_curves, feature_batches, load_config, log_path, metrics_from_logs, pca_project, run_batch,
    run_seed, Checkpoint, ExperimentConfig,
};
use replay_loom::lifecycle::{train_ste, LifetimeLog, SteRegistry};
use replay_loom::numerics::Rng;
use replay_loom::Error;

#[derive(Parser)]
#[command(name = "replay-loom", version, about = "Wake-sleep lifelong RL on a gridworld suite")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides REPLAY_LOOM_OUT and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train single-task experts and add them to the registry.
    TrainSte {
        /// Tasks to train; defaults to every task the syllabus evaluates.
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
    },
    /// Run one lifetime and write its JSONL log.
    RunLifetime {
        /// Also save the final agent state, buffers included.
        #[arg(long)]
        checkpoint: bool,
    },
    /// Run every configured seed, then aggregate metrics.
    RunBatch {
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Recompute metrics from the logs in the output directory.
    Metrics,
    /// Write long-format learning-curve CSVs.
    ExportCurves {
        /// Log files; defaults to the configured seeds' logs.
        logs: Vec<PathBuf>,
    },
    /// Project sleep-agent features of a checkpoint onto principal components.
    Pca {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 2)]
        components: usize,
    },
    /// Print a task's initial layout.
    RenderTask { task: String },
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> replay_loom::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn registry(config: &ExperimentConfig) -> replay_loom::Result<SteRegistry> {
    SteRegistry::load(&config.registry_dir)
}

fn run(cli: Cli) -> replay_loom::Result<bool> {
    let mut config = match &cli.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    config.apply_output_override(cli.out.clone());
    let out = config.output_dir.clone();
    let seed = cli.seed.unwrap_or(config.seeds[0]);

    match cli.command {
        Command::TrainSte { tasks } => {
            let tasks = if tasks.is_empty() { config.syllabus(seed)?.eval_tasks } else { tasks };
            let mut reg = registry(&config)?;
            for (i, id) in tasks.iter().enumerate() {
                let task = TaskSpec::from_id(id)?;
                let s = replay_loom::numerics::mix_seed(seed, i as u64);
                let (entry, policy) = train_ste(&task, &config.agent.network, config.agent.ppo, &config.ste, s)?;
                println!("{id}: terminal return {:.3} after {} steps", entry.terminal_return, entry.steps);
                reg.insert_with_policy(entry, policy)?;
                reg.save(&config.registry_dir)?;
            }
            println!("registry at {}", config.registry_dir.display());
        }
        Command::RunLifetime { checkpoint } => {
            let reg = registry(&config)?;
            if reg.is_empty() {
                log::warn!("no expert registry at {}; metrics will need one", config.registry_dir.display());
            }
            let runner = run_seed(&config, (!reg.is_empty()).then_some(&reg), seed, &out)?;
            println!("wrote {}", log_path(&out, seed).display());
            if checkpoint {
                let path = out.join("checkpoints").join(format!("seed-{seed}.json"));
                Checkpoint::capture(&runner, true).save(&path)?;
                println!("wrote {}", path.display());
            }
        }
        Command::RunBatch { parallelism } => {
            if let Some(s) = cli.seed {
                config.seeds = vec![s];
            }
            let report = run_batch(&config, &registry(&config)?, parallelism, &out)?;
            println!(
                "{} completed, {} already done, {} failed",
                report.completed.len(),
                report.skipped.len(),
                report.failed.len()
            );
            for (s, msg) in &report.failed {
                eprintln!("seed {s}: {msg}");
            }
            if let Some(m) = &report.metrics {
                print!("{}", m.to_csv()?);
            }
            return Ok(report.failed.is_empty());
        }
        Command::Metrics => {
            let report = metrics_from_logs(&config, &registry(&config)?, &out)?;
            write(&out.join(harness::METRICS_CSV), report.to_csv()?)?;
            write(&out.join(harness::METRICS_JSON), serde_json::to_vec_pretty(&report)?)?;
            print!("{}", report.to_csv()?);
        }
        Command::ExportCurves { logs } => {
            let logs = if logs.is_empty() {
                config.seeds.iter().map(|&s| log_path(&out, s)).collect()
            } else {
                logs
            };
            for path in logs {
                let log = LifetimeLog::from_jsonl(&fs::read_to_string(&path)?)?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("log");
                write(&out.join("curves").join(format!("{stem}.csv")), export_curves(&log)?)?;
            }
        }
        Command::Pca {
            checkpoint,
            samples,
            components,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let batches = feature_batches(&ckpt.agent, samples, &mut Rng::new(seed))?;
            let proj = pca_project(&batches, components)?;
            for (i, v) in proj.explained_variance.iter().enumerate() {
                println!("pc{}: {:.2}% of variance", i + 1, 100.0 * v);
            }
            write(&out.join("pca.csv"), proj.to_csv()?)?;
            write(&out.join("pca.json"), serde_json::to_vec_pretty(&proj)?)?;
        }
        Command::RenderTask { task } => {
            let (state, _) = reset(&TaskSpec::from_id(&task)?, seed);
            print!("{}", render_ascii(&state));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
