use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::lifecycle::{LifetimeLog, LifetimeRunner, SteRegistry};
use crate::metrics::{aggregate, LifetimeMetrics, MetricsReport};

pub const LOG_DIR: &str = "logs";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const FAILURES: &str = "failures.json";

pub fn log_path(out: &Path, seed: u64) -> PathBuf {
    out.join(LOG_DIR).join(format!("seed-{seed}.jsonl"))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub completed: Vec<u64>,
    /// Seeds whose finished log was already on disk.
    pub skipped: Vec<u64>,
    pub failed: Vec<(u64, String)>,
    pub metrics: Option<MetricsReport>,
}

fn write_line(f: &mut File, value: &impl Serialize) -> Result<()> {
    let mut line = serde_json::to_vec(value)?;
    line.push(b'\n');
    f.write_all(&line)?;
    Ok(())
}

/// Run one lifetime, appending records to a partial file that becomes the
/// final log only once the lifetime ends.
/// Without a registry the expert-coverage check is skipped.
pub fn run_seed(
    config: &ExperimentConfig,
    registry: Option<&SteRegistry>,
    seed: u64,
    out: &Path,
) -> Result<LifetimeRunner> {
    let path = log_path(out, seed);
    let partial = path.with_extension("jsonl.part");
    fs::create_dir_all(path.parent().expect("log path has a parent"))?;
    let mut runner = LifetimeRunner::new(config.agent.clone(), config.syllabus(seed)?, seed, registry)?;
    let mut f = OpenOptions::new().create(true).write(true).truncate(true).open(&partial)?;
    write_line(&mut f, &runner.log.header())?;
    while !runner.is_done() {
        let block = runner.step()?;
        for rec in LifetimeLog::block_records(block) {
            write_line(&mut f, &rec)?;
        }
        f.flush()?;
    }
    f.sync_all()?;
    drop(f);
    fs::rename(&partial, &path)?;
    Ok(runner)
}

/// A finished log for `seed` produced by this configuration, if one exists.
fn finished_log(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<Option<LifetimeLog>> {
    let path = log_path(out, seed);
    if !path.exists() {
        return Ok(None);
    }
    let log = LifetimeLog::from_jsonl(&fs::read_to_string(&path)?)?;
    if log.fingerprint != config.agent.fingerprint() || log.seed != seed {
        return Err(Error::Config(format!(
            "{} was written by a different configuration; use a fresh output directory",
            path.display()
        )));
    }
    Ok(log.is_complete().then_some(log))
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "worker panicked".into())
}

/// One lifetime per configured seed on `parallelism` workers, then
/// aggregate metrics over every finished log. Seeds with a finished log
/// are skipped; a failing seed is recorded and the others continue.
pub fn run_batch(
    config: &ExperimentConfig,
    registry: &SteRegistry,
    parallelism: usize,
    out: &Path,
) -> Result<BatchReport> {
    if parallelism == 0 {
        return Err(Error::Config("parallelism must be at least 1".into()));
    }
    let missing: Vec<String> = config
        .syllabus(0)?
        .eval_tasks
        .into_iter()
        .filter(|t| registry.get(t).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "expert registry {} has no entry for {missing:?}; run train-ste first",
            config.registry_dir.display()
        )));
    }
    fs::create_dir_all(out.join(LOG_DIR))?;

    let mut report = BatchReport::default();
    let mut todo = Vec::new();
    for &seed in &config.seeds {
        match finished_log(config, seed, out)? {
            Some(_) => report.skipped.push(seed),
            None => todo.push(seed),
        }
    }

    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..parallelism.min(todo.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = todo.get(i) else { break };
                let outcome = catch_unwind(AssertUnwindSafe(|| run_seed(config, Some(registry), seed, out)))
                    .map_err(panic_message)
                    .and_then(|r| r.map_err(|e| e.to_string()));
                if let Err(msg) = &outcome {
                    log::error!("seed {seed} failed: {msg}");
                }
                results.lock().expect("results lock").push((seed, outcome.map(|_| ())));
            });
        }
    });
    let mut results = results.into_inner().expect("results lock");
    results.sort_by_key(|(s, _)| *s);
    for (seed, r) in results {
        match r {
            Ok(()) => report.completed.push(seed),
            Err(msg) => report.failed.push((seed, msg)),
        }
    }
    fs::write(out.join(FAILURES), serde_json::to_vec_pretty(&report.failed)?)?;

    if report.completed.len() + report.skipped.len() > 0 {
        let metrics = metrics_from_logs(config, registry, out)?;
        fs::write(out.join(METRICS_CSV), metrics.to_csv()?)?;
        fs::write(out.join(METRICS_JSON), serde_json::to_vec_pretty(&metrics)?)?;
        report.metrics = Some(metrics);
    }
    Ok(report)
}

/// Recompute the metrics report from the logs in `out` alone.
pub fn metrics_from_logs(config: &ExperimentConfig, registry: &SteRegistry, out: &Path) -> Result<MetricsReport> {
    let mut lifetimes = Vec::new();
    for &seed in &config.seeds {
        if let Some(log) = finished_log(config, seed, out)? {
            lifetimes.push(LifetimeMetrics::compute(&log, registry)?);
        }
    }
    aggregate(lifetimes, config.bootstrap_seed)
}
