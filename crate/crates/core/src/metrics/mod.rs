//! Relative reward and the lifelong-learning metrics, per lifetime and
//! aggregated across lifetimes with bootstrap confidence intervals.
//!
//! Undefined metrics are `None`, never zero.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifecycle::{CurvePoint, LifetimeLog, SteRegistry};
use crate::numerics::Rng;

/// Ratio denominators smaller than this in magnitude are replaced by it, keeping the sign.
pub const RATIO_FLOOR: f64 = 0.01;
/// PM is reported on a ×100 scale.
pub const PM_SCALE: f64 = 100.0;
pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RrSelector {
    /// Final evaluation block, seen tasks.
    Omega,
    /// Each evaluation block after a learning block, on that block's task.
    Alpha,
    /// Every evaluation block, tasks seen so far.
    Sigma,
    /// Every evaluation block, tasks not yet seen.
    Upsilon,
}

impl RrSelector {
    pub const ALL: [RrSelector; 4] = [RrSelector::Omega, RrSelector::Alpha, RrSelector::Sigma, RrSelector::Upsilon];

    pub fn name(self) -> &'static str {
        match self {
            RrSelector::Omega => "rr_omega",
            RrSelector::Alpha => "rr_alpha",
            RrSelector::Sigma => "rr_sigma",
            RrSelector::Upsilon => "rr_upsilon",
        }
    }
}

/// Per-block returns keyed by task, plus the learning-block order.
struct Table<'a> {
    log: &'a LifetimeLog,
    returns: Vec<BTreeMap<&'a str, f64>>,
}

impl<'a> Table<'a> {
    fn new(log: &'a LifetimeLog) -> Self {
        let n = log.syllabus.num_eval_blocks();
        let mut returns = vec![BTreeMap::new(); n];
        for (eb, recs) in log.eval_blocks() {
            if eb < n {
                for r in recs {
                    returns[eb].insert(r.task.as_str(), r.mean_return);
                }
            }
        }
        Self { log, returns }
    }

    fn ret(&self, eb: usize, task: &str) -> Option<f64> {
        self.returns.get(eb).and_then(|m| m.get(task)).copied()
    }

    fn lb_task(&self, lb: usize) -> &'a str {
        &self.log.syllabus.learning_blocks[lb].task
    }

    /// Index of the evaluation block right after `task`'s most recent learning block before `eb`.
    fn reference_eb(&self, eb: usize, task: &str) -> Option<usize> {
        (0..eb.min(self.log.syllabus.learning_blocks.len()))
            .rev()
            .find(|&lb| self.lb_task(lb) == task)
            .map(|lb| lb + 1)
    }

    fn tasks(&self) -> &'a [String] {
        &self.log.syllabus.eval_tasks
    }

    /// (task, eb, reference eb) for seen tasks evaluated after their reference block.
    fn retention_pairs(&self) -> Vec<(&'a str, usize, usize)> {
        let mut out = Vec::new();
        for eb in 0..self.returns.len() {
            for task in self.tasks() {
                if let Some(r) = self.reference_eb(eb, task) {
                    if eb > r {
                        out.push((task.as_str(), eb, r));
                    }
                }
            }
        }
        out
    }
}

pub fn floor_denominator(d: f64) -> f64 {
    if d.abs() < RATIO_FLOOR {
        RATIO_FLOOR.copysign(if d == 0.0 { 1.0 } else { d })
    } else {
        d
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn expert_return(registry: &SteRegistry, task: &str) -> Result<f64> {
    registry
        .get(task)
        .map(|e| e.terminal_return)
        .ok_or_else(|| Error::Config(format!("no single-task expert for {task}")))
}

/// Double average of agent return over expert return.
pub fn relative_reward(log: &LifetimeLog, registry: &SteRegistry, selector: RrSelector) -> Result<Option<f64>> {
    let table = Table::new(log);
    let syl = &log.syllabus;
    let n_eb = syl.num_eval_blocks();
    let blocks: Vec<usize> = match selector {
        RrSelector::Omega => vec![n_eb - 1],
        RrSelector::Alpha => (1..n_eb).collect(),
        RrSelector::Sigma | RrSelector::Upsilon => (0..n_eb).collect(),
    };
    let mut per_block = Vec::new();
    for eb in blocks {
        let tasks: Vec<&str> = match selector {
            RrSelector::Alpha => vec![table.lb_task(eb - 1)],
            RrSelector::Omega | RrSelector::Sigma => {
                syl.eval_tasks.iter().filter(|t| syl.seen(eb, t)).map(String::as_str).collect()
            }
            RrSelector::Upsilon => syl.eval_tasks.iter().filter(|t| !syl.seen(eb, t)).map(String::as_str).collect(),
        };
        let mut ratios = Vec::new();
        for t in tasks {
            if let Some(r) = table.ret(eb, t) {
                ratios.push(r / expert_return(registry, t)?);
            }
        }
        if let Some(m) = mean(&ratios) {
            per_block.push(m);
        }
    }
    Ok(mean(&per_block))
}

/// Mean change in a seen task's return relative to right after its last learning block, ×100.
pub fn performance_maintenance(log: &LifetimeLog) -> Option<f64> {
    let t = Table::new(log);
    let diffs: Vec<f64> = t
        .retention_pairs()
        .into_iter()
        .filter_map(|(task, eb, r)| Some(t.ret(eb, task)? - t.ret(r, task)?))
        .collect();
    mean(&diffs).map(|m| m * PM_SCALE)
}

/// Mean ratio of a seen task's return to its return right after its last learning block.
pub fn backward_transfer(log: &LifetimeLog) -> Option<f64> {
    let t = Table::new(log);
    let ratios: Vec<f64> = t
        .retention_pairs()
        .into_iter()
        .filter_map(|(task, eb, r)| Some(t.ret(eb, task)? / floor_denominator(t.ret(r, task)?)))
        .collect();
    mean(&ratios)
}

fn forward_pairs<'a>(t: &Table<'a>) -> Vec<(&'a str, usize)> {
    let syl = &t.log.syllabus;
    (1..t.returns.len())
        .flat_map(|eb| {
            syl.eval_tasks
                .iter()
                .filter(move |task| !syl.seen(eb, task))
                .map(move |task| (task.as_str(), eb))
        })
        .collect()
}

/// Mean ratio of an unseen task's return to its return before any learning.
pub fn forward_transfer(log: &LifetimeLog) -> Option<f64> {
    let t = Table::new(log);
    let ratios: Vec<f64> = forward_pairs(&t)
        .into_iter()
        .filter_map(|(task, eb)| Some(t.ret(eb, task)? / floor_denominator(t.ret(0, task)?)))
        .collect();
    mean(&ratios)
}

/// How many forward/backward transfer denominators hit the floor.
pub fn floored_denominators(log: &LifetimeLog) -> usize {
    let t = Table::new(log);
    let back = t
        .retention_pairs()
        .into_iter()
        .filter_map(|(task, _, r)| t.ret(r, task));
    let fwd = forward_pairs(&t).into_iter().filter_map(|(task, _)| t.ret(0, task));
    back.chain(fwd).filter(|d| d.abs() < RATIO_FLOOR).count()
}

/// Piecewise-linear value of a curve, constant before its first and after its last sample.
pub fn curve_value(curve: &[CurvePoint], step: f64) -> f64 {
    let first = curve.first().expect("non-empty curve");
    let last = curve.last().expect("non-empty curve");
    if step <= first.step as f64 {
        return first.mean_return;
    }
    if step >= last.step as f64 {
        return last.mean_return;
    }
    let k = curve.partition_point(|p| (p.step as f64) <= step);
    let (a, b) = (&curve[k - 1], &curve[k]);
    let w = (step - a.step as f64) / (b.step - a.step) as f64;
    a.mean_return + w * (b.mean_return - a.mean_return)
}

/// Trapezoidal area under `curve` over `[0, span]`.
pub fn curve_auc(curve: &[CurvePoint], span: u64) -> f64 {
    let mut xs: Vec<u64> = std::iter::once(0)
        .chain(curve.iter().map(|p| p.step).filter(|&s| s > 0 && s < span))
        .chain(std::iter::once(span))
        .collect();
    xs.dedup();
    xs.windows(2)
        .map(|w| {
            let (a, b) = (w[0] as f64, w[1] as f64);
            0.5 * (b - a) * (curve_value(curve, a) + curve_value(curve, b))
        })
        .sum()
}

/// Mean over tasks of (agent AUC in the task's first learning block) / (expert AUC over the same span).
/// Tasks whose expert area is not positive are left out.
pub fn relative_performance(log: &LifetimeLog, registry: &SteRegistry) -> Option<f64> {
    let mut seen = std::collections::BTreeSet::new();
    let mut ratios = Vec::new();
    for lb in log.learning_blocks() {
        if !seen.insert(lb.task.as_str()) {
            continue;
        }
        let Some(ste) = registry.get(&lb.task) else { continue };
        if lb.curve.is_empty() || ste.curve.is_empty() || lb.steps == 0 {
            continue;
        }
        let expert = curve_auc(&ste.curve, lb.steps);
        if !(expert > 0.0) {
            continue;
        }
        ratios.push(curve_auc(&lb.curve, lb.steps) / expert);
    }
    mean(&ratios)
}

pub const METRIC_NAMES: [&str; 8] = ["pm", "ft", "bt", "rp", "rr_omega", "rr_alpha", "rr_sigma", "rr_upsilon"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifetimeMetrics {
    pub seed: u64,
    pub pm: Option<f64>,
    pub ft: Option<f64>,
    pub bt: Option<f64>,
    pub rp: Option<f64>,
    pub rr_omega: Option<f64>,
    pub rr_alpha: Option<f64>,
    pub rr_sigma: Option<f64>,
    pub rr_upsilon: Option<f64>,
    pub floored_denominators: usize,
}

impl LifetimeMetrics {
    pub fn compute(log: &LifetimeLog, registry: &SteRegistry) -> Result<Self> {
        let rr = |s| relative_reward(log, registry, s);
        Ok(Self {
            seed: log.seed,
            pm: performance_maintenance(log),
            ft: forward_transfer(log),
            bt: backward_transfer(log),
            rp: relative_performance(log, registry),
            rr_omega: rr(RrSelector::Omega)?,
            rr_alpha: rr(RrSelector::Alpha)?,
            rr_sigma: rr(RrSelector::Sigma)?,
            rr_upsilon: rr(RrSelector::Upsilon)?,
            floored_denominators: floored_denominators(log),
        })
    }

    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 8] {
        [
            self.pm,
            self.ft,
            self.bt,
            self.rp,
            self.rr_omega,
            self.rr_alpha,
            self.rr_sigma,
            self.rr_upsilon,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Lifetimes with a defined value.
    pub n: usize,
    pub undefined: usize,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean with a percentile-bootstrap 95% interval.
pub fn bootstrap_mean(values: &[f64], resamples: usize, seed: u64) -> (f64, f64, f64) {
    let n = values.len();
    let m = values.iter().sum::<f64>() / n as f64;
    let mut rng = Rng::new(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.below(n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    (m, quantile(&means, 0.025), quantile(&means, 0.975))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub lifetimes: Vec<LifetimeMetrics>,
    pub aggregate: BTreeMap<String, Aggregate>,
}

pub fn aggregate(lifetimes: Vec<LifetimeMetrics>, seed: u64) -> Result<MetricsReport> {
    if lifetimes.is_empty() {
        return Err(Error::Usage("no finished lifetimes to aggregate".into()));
    }
    let mut agg = BTreeMap::new();
    for (k, name) in METRIC_NAMES.iter().enumerate() {
        let defined: Vec<f64> = lifetimes.iter().filter_map(|l| l.values()[k]).collect();
        let undefined = lifetimes.len() - defined.len();
        let entry = if defined.is_empty() {
            Aggregate {
                mean: None,
                ci_low: None,
                ci_high: None,
                n: 0,
                undefined,
            }
        } else {
            let (m, lo, hi) = bootstrap_mean(&defined, BOOTSTRAP_RESAMPLES, crate::numerics::mix_seed(seed, k as u64));
            Aggregate {
                mean: Some(m),
                ci_low: Some(lo),
                ci_high: Some(hi),
                n: defined.len(),
                undefined,
            }
        };
        agg.insert(name.to_string(), entry);
    }
    Ok(MetricsReport {
        lifetimes,
        aggregate: agg,
    })
}

impl MetricsReport {
    /// One row per lifetime, then `mean`, `ci_low`, `ci_high` and `n` rows.
    /// Undefined values are empty cells.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut header = vec!["row".to_string()];
        header.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
        header.push("floored_denominators".into());
        w.write_record(&header)?;
        for l in &self.lifetimes {
            let mut row = vec![format!("seed-{}", l.seed)];
            row.extend(l.values().into_iter().map(cell));
            row.push(l.floored_denominators.to_string());
            w.write_record(&row)?;
        }
        type Pick = fn(&Aggregate) -> String;
        let rows: [(&str, Pick); 4] = [
            ("mean", |a| a.mean.map(|x| x.to_string()).unwrap_or_default()),
            ("ci_low", |a| a.ci_low.map(|x| x.to_string()).unwrap_or_default()),
            ("ci_high", |a| a.ci_high.map(|x| x.to_string()).unwrap_or_default()),
            ("n", |a| a.n.to_string()),
        ];
        for (label, pick) in rows {
            let mut row = vec![label.to_string()];
            row.extend(METRIC_NAMES.iter().map(|m| pick(&self.aggregate[*m])));
            row.push(String::new());
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifecycle::{
        build_syllabus, AgentMode, Block, Budgets, EvalRecord, LearningRecord, Scenario, SteEntry, Syllabus,
    };

    fn log_from(syllabus: Syllabus, returns: &[&[f64]]) -> LifetimeLog {
        let mut blocks = Vec::new();
        for (eb, row) in returns.iter().enumerate() {
            let records = syllabus
                .eval_tasks
                .iter()
                .zip(row.iter())
                .map(|(t, &r)| EvalRecord {
                    eb_index: eb,
                    task: t.clone(),
                    episodes: 1,
                    mean_return: r,
                    std_return: 0.0,
                    seen: syllabus.seen(eb, t),
                })
                .collect();
            blocks.push(Block::Evaluation { eb_index: eb, records });
            if let Some(lb) = syllabus.learning_blocks.get(eb) {
                blocks.push(Block::Learning(LearningRecord {
                    lb_index: eb,
                    task: lb.task.clone(),
                    steps: lb.steps,
                    curve: vec![],
                    sleeps: vec![],
                }));
            }
        }
        LifetimeLog {
            seed: 0,
            mode: AgentMode::LlHidden,
            fingerprint: String::new(),
            syllabus,
            blocks,
        }
    }

    fn pair(scenario: Scenario) -> Syllabus {
        let tasks = vec!["fetch-v1".to_string(), "fetch-v2".to_string()];
        build_syllabus(scenario, &tasks, &Budgets::uniform(100), 1, 0).unwrap()
    }

    fn registry(a: f64, b: f64) -> SteRegistry {
        let mut r = SteRegistry::default();
        for (t, v) in [("fetch-v1", a), ("fetch-v2", b)] {
            r.insert(SteEntry {
                task: t.into(),
                terminal_return: v,
                steps: 100,
                curve: vec![],
            })
            .unwrap();
        }
        r
    }

    #[test]
    fn hand_computed_pairwise_values() {
        // EB0 before learning, EB1 after fetch-v1, EB2 after fetch-v2.
        let log = log_from(pair(Scenario::Pairwise), &[&[0.1, 0.2], &[0.9, 0.4], &[0.4, 0.8]]);
        let reg = registry(0.8, 0.8);
        let pm = performance_maintenance(&log).unwrap();
        assert!((pm - (-50.0)).abs() < 1e-12);
        assert!((backward_transfer(&log).unwrap() - 0.4 / 0.9).abs() < 1e-12);
        // fetch-v2 unseen at EB1 only.
        assert!((forward_transfer(&log).unwrap() - 2.0).abs() < 1e-12);
        let rr = |s| relative_reward(&log, &reg, s).unwrap().unwrap();
        assert!((rr(RrSelector::Omega) - (0.5 + 1.0) / 2.0).abs() < 1e-12);
        assert!((rr(RrSelector::Alpha) - (0.9 / 0.8 + 1.0) / 2.0).abs() < 1e-12);
        assert!((rr(RrSelector::Sigma) - (0.9 / 0.8 + 0.75) / 2.0).abs() < 1e-12);
        assert!((rr(RrSelector::Upsilon) - (0.1875 + 0.5) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_returns_give_neutral_metrics() {
        let rows: Vec<&[f64]> = vec![&[0.5, 0.5]; 7];
        let log = log_from(pair(Scenario::Alternating), &rows);
        assert_eq!(performance_maintenance(&log), Some(0.0));
        assert_eq!(backward_transfer(&log), Some(1.0));
        assert_eq!(forward_transfer(&log), Some(1.0));
        let reg = registry(0.5, 0.5);
        for s in RrSelector::ALL {
            let v = relative_reward(&log, &reg, s).unwrap();
            if s == RrSelector::Upsilon {
                // Only EB0 and EB1 have unseen tasks.
                assert_eq!(v, Some(1.0));
            } else {
                assert_eq!(v, Some(1.0), "{s:?}");
            }
        }
    }

    #[test]
    fn upsilon_skips_blocks_without_unseen_tasks() {
        let log = log_from(pair(Scenario::Pairwise), &[&[0.2, 0.4], &[0.0, 0.2], &[9.0, 9.0]]);
        let reg = registry(1.0, 1.0);
        let v = relative_reward(&log, &reg, RrSelector::Upsilon).unwrap().unwrap();
        assert!((v - (0.3 + 0.2) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn undefined_metrics_are_none() {
        let syl = pair(Scenario::Pairwise);
        let mut one = syl.clone();
        one.learning_blocks.truncate(1);
        let log = log_from(one, &[&[0.1, 0.2], &[0.3, 0.4]]);
        assert_eq!(performance_maintenance(&log), None);
        assert_eq!(backward_transfer(&log), None);
        assert!(relative_reward(&log, &registry(1.0, 1.0), RrSelector::Omega).unwrap().is_some());
        assert!(relative_reward(&log, &SteRegistry::default(), RrSelector::Omega).is_err());
    }

    #[test]
    fn floor_keeps_sign() {
        assert_eq!(floor_denominator(0.0), 0.01);
        assert_eq!(floor_denominator(-0.001), -0.01);
        assert_eq!(floor_denominator(0.5), 0.5);
        let log = log_from(pair(Scenario::Pairwise), &[&[0.0, 0.0], &[0.9, 0.03], &[0.4, 0.8]]);
        assert_eq!(forward_transfer(&log), Some(3.0));
        assert_eq!(floored_denominators(&log), 1);
    }

    #[test]
    fn trapezoid_area_by_hand() {
        let c = |v: &[(u64, f64)]| v.iter().map(|&(step, mean_return)| CurvePoint { step, mean_return }).collect::<Vec<_>>();
        // Constant 0 before step 10, then linear to 1 at 20, flat to 30.
        let curve = c(&[(10, 0.0), (20, 1.0), (30, 1.0)]);
        assert!((curve_auc(&curve, 30) - 15.0).abs() < 1e-12);
        assert!((curve_auc(&curve, 15) - 1.25).abs() < 1e-12);
        assert!((curve_auc(&curve, 40) - 25.0).abs() < 1e-12);
        assert_eq!(curve_value(&curve, 25.0), 1.0);
    }

    #[test]
    fn jumpstart_beats_rising_expert() {
        let tasks = vec!["fetch-v1".to_string(), "fetch-v2".to_string()];
        let syl = build_syllabus(Scenario::Pairwise, &tasks, &Budgets::uniform(20), 1, 0).unwrap();
        let mut log = log_from(syl, &[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]]);
        for b in &mut log.blocks {
            if let Block::Learning(l) = b {
                l.curve = vec![CurvePoint { step: 10, mean_return: 1.0 }, CurvePoint { step: 20, mean_return: 1.0 }];
            }
        }
        let mut reg = SteRegistry::default();
        for t in &tasks {
            reg.insert(SteEntry {
                task: t.clone(),
                terminal_return: 1.0,
                steps: 40,
                curve: vec![CurvePoint { step: 0, mean_return: 0.0 }, CurvePoint { step: 40, mean_return: 1.0 }],
            })
            .unwrap();
        }
        // Expert area over [0, 20] is 5.
        assert!((relative_performance(&log, &reg).unwrap() - 4.0).abs() < 1e-12);
    }

    fn lm(seed: u64, pm: Option<f64>) -> LifetimeMetrics {
        LifetimeMetrics {
            seed,
            pm,
            ft: Some(1.0),
            bt: None,
            rp: None,
            rr_omega: None,
            rr_alpha: None,
            rr_sigma: None,
            rr_upsilon: None,
            floored_denominators: 0,
        }
    }

    #[test]
    fn aggregation_counts_and_intervals() {
        let mut ls: Vec<LifetimeMetrics> = (0..9).map(|s| lm(s, Some(-3.0))).collect();
        ls.push(lm(9, None));
        let r = aggregate(ls, 1).unwrap();
        let pm = &r.aggregate["pm"];
        assert_eq!((pm.n, pm.undefined), (9, 1));
        assert_eq!((pm.mean, pm.ci_low, pm.ci_high), (Some(-3.0), Some(-3.0), Some(-3.0)));
        assert_eq!(r.aggregate["bt"].mean, None);
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 1 + 10 + 4);
        assert!(csv.starts_with("row,pm,ft,bt,rp,rr_omega"));
        assert!(aggregate(vec![], 0).is_err());
    }

    #[test]
    fn bootstrap_of_coin_flips_matches_normal_approximation() {
        let values: Vec<f64> = (0..400).map(|i| (i % 2) as f64).collect();
        let (m, lo, hi) = bootstrap_mean(&values, BOOTSTRAP_RESAMPLES, 3);
        assert_eq!(m, 0.5);
        let half = 1.96 * (0.25f64 / 400.0).sqrt();
        assert!((lo - (0.5 - half)).abs() < 0.01, "{lo}");
        assert!((hi - (0.5 + half)).abs() < 0.01, "{hi}");
    }
}
