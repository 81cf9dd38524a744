//! Random small lifetimes and a loop-based recomputation of every metric,
//! shared by the metrics property tests and the acceptance suite.
#![allow(dead_code)]

use proptest::prelude::*;
use replay_loom::lifecycle::{
    AgentMode, Block, CurvePoint, EvalRecord, LearningBlockSpec, LearningRecord, LifetimeLog, Scenario, SteEntry,
    SteRegistry, Syllabus,
};
use replay_loom::metrics::{self, RrSelector};

pub const TASKS: [&str; 3] = ["fetch-v1", "fetch-v2", "doorkey-v1"];

#[derive(Clone, Debug)]
pub struct Case {
    pub n_tasks: usize,
    /// Task index of each learning block.
    pub order: Vec<usize>,
    /// `returns[eb][task]`.
    pub returns: Vec<Vec<f64>>,
    pub experts: Vec<f64>,
    pub budgets: Vec<u64>,
    pub agent_curves: Vec<Vec<(u64, f64)>>,
    pub expert_curves: Vec<Vec<(u64, f64)>>,
}

pub fn ret_value() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1.0f64..1.0,
        -0.02f64..0.02,
        Just(0.0),
        Just(1.0),
    ]
}

pub fn curve(max_step: u64) -> impl Strategy<Value = Vec<(u64, f64)>> {
    prop::collection::btree_map(1..=max_step, -1.0f64..1.0, 1..6).prop_map(|m| m.into_iter().collect())
}

pub fn expert_curve(max_step: u64) -> impl Strategy<Value = Vec<(u64, f64)>> {
    prop::collection::btree_map(1..=max_step, 0.05f64..1.0, 1..6).prop_map(|m| m.into_iter().collect())
}

pub fn case() -> impl Strategy<Value = Case> {
    (2usize..=3, 1usize..=5).prop_flat_map(|(n_tasks, n_lb)| {
        (
            prop::collection::vec(0..n_tasks, n_lb),
            prop::collection::vec(prop::collection::vec(ret_value(), n_tasks), n_lb + 1),
            prop::collection::vec(0.05f64..1.0, n_tasks),
            prop::collection::vec(5u64..60, n_lb),
            prop::collection::vec(curve(60), n_lb),
            prop::collection::vec(expert_curve(90), n_tasks),
        )
            .prop_map(move |(order, returns, experts, budgets, agent_curves, expert_curves)| Case {
                n_tasks,
                order,
                returns,
                experts,
                budgets,
                agent_curves,
                expert_curves,
            })
    })
}

pub fn points(c: &[(u64, f64)]) -> Vec<CurvePoint> {
    c.iter().map(|&(step, mean_return)| CurvePoint { step, mean_return }).collect()
}

pub fn build(c: &Case) -> (LifetimeLog, SteRegistry) {
    let syllabus = Syllabus {
        scenario: Scenario::Alternating,
        eval_tasks: TASKS[..c.n_tasks].iter().map(|s| s.to_string()).collect(),
        learning_blocks: c
            .order
            .iter()
            .zip(&c.budgets)
            .map(|(&t, &steps)| LearningBlockSpec {
                task: TASKS[t].into(),
                steps,
            })
            .collect(),
        eval_episodes: 1,
    };
    let mut blocks = Vec::new();
    for (eb, row) in c.returns.iter().enumerate() {
        let records = row
            .iter()
            .enumerate()
            .map(|(t, &r)| EvalRecord {
                eb_index: eb,
                task: TASKS[t].into(),
                episodes: 1,
                mean_return: r,
                std_return: 0.0,
                seen: syllabus.seen(eb, TASKS[t]),
            })
            .collect();
        blocks.push(Block::Evaluation { eb_index: eb, records });
        if eb < c.order.len() {
            blocks.push(Block::Learning(LearningRecord {
                lb_index: eb,
                task: TASKS[c.order[eb]].into(),
                steps: c.budgets[eb],
                curve: points(&c.agent_curves[eb]),
                sleeps: vec![],
            }));
        }
    }
    let mut reg = SteRegistry::default();
    for t in 0..c.n_tasks {
        reg.insert(SteEntry {
            task: TASKS[t].into(),
            terminal_return: c.experts[t],
            steps: 90,
            curve: points(&c.expert_curves[t]),
        })
        .unwrap();
    }
    let log = LifetimeLog {
        seed: 0,
        mode: AgentMode::LlHidden,
        fingerprint: String::new(),
        syllabus,
        blocks,
    };
    (log, reg)
}

pub fn avg(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn floored(d: f64) -> f64 {
    if d.abs() >= 0.01 {
        d
    } else if d < 0.0 {
        -0.01
    } else {
        0.01
    }
}

pub fn was_trained(c: &Case, eb: usize, t: usize) -> bool {
    c.order[..eb].contains(&t)
}

/// Last learning block on `t` strictly before evaluation block `eb`.
pub fn last_lb(c: &Case, eb: usize, t: usize) -> Option<usize> {
    let mut found = None;
    for lb in 0..eb {
        if c.order[lb] == t {
            found = Some(lb);
        }
    }
    found
}

pub fn oracle_retention(c: &Case, ratio: bool) -> Option<f64> {
    let mut vals = Vec::new();
    for eb in 0..c.returns.len() {
        for t in 0..c.n_tasks {
            if let Some(lb) = last_lb(c, eb, t) {
                let reference = lb + 1;
                if eb > reference {
                    let (now, then) = (c.returns[eb][t], c.returns[reference][t]);
                    vals.push(if ratio { now / floored(then) } else { 100.0 * (now - then) });
                }
            }
        }
    }
    avg(&vals)
}

pub fn oracle_ft(c: &Case) -> Option<f64> {
    let mut vals = Vec::new();
    for eb in 1..c.returns.len() {
        for t in 0..c.n_tasks {
            if !was_trained(c, eb, t) {
                vals.push(c.returns[eb][t] / floored(c.returns[0][t]));
            }
        }
    }
    avg(&vals)
}

pub fn oracle_rr(c: &Case, sel: RrSelector) -> Option<f64> {
    let last = c.returns.len() - 1;
    let mut per_block = Vec::new();
    for eb in 0..c.returns.len() {
        let mut chosen = Vec::new();
        for t in 0..c.n_tasks {
            let pick = match sel {
                RrSelector::Omega => eb == last && was_trained(c, eb, t),
                RrSelector::Alpha => eb > 0 && c.order[eb - 1] == t,
                RrSelector::Sigma => was_trained(c, eb, t),
                RrSelector::Upsilon => !was_trained(c, eb, t),
            };
            if pick {
                chosen.push(c.returns[eb][t] / c.experts[t]);
            }
        }
        if let Some(m) = avg(&chosen) {
            per_block.push(m);
        }
    }
    avg(&per_block)
}

pub fn interp(c: &[(u64, f64)], x: f64) -> f64 {
    if x <= c[0].0 as f64 {
        return c[0].1;
    }
    for w in c.windows(2) {
        let (x0, y0) = (w[0].0 as f64, w[0].1);
        let (x1, y1) = (w[1].0 as f64, w[1].1);
        if x <= x1 {
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    c[c.len() - 1].1
}

/// Unit-step Simpson integration; exact because every kink sits on an integer step.
pub fn integral(c: &[(u64, f64)], span: u64) -> f64 {
    (0..span)
        .map(|s| {
            let (a, b) = (s as f64, s as f64 + 1.0);
            (interp(c, a) + 4.0 * interp(c, 0.5 * (a + b)) + interp(c, b)) / 6.0
        })
        .sum()
}

pub fn oracle_rp(c: &Case) -> Option<f64> {
    let mut vals = Vec::new();
    for (lb, &t) in c.order.iter().enumerate() {
        if c.order[..lb].contains(&t) {
            continue;
        }
        let e = integral(&c.expert_curves[t], c.budgets[lb]);
        if e > 0.0 {
            vals.push(integral(&c.agent_curves[lb], c.budgets[lb]) / e);
        }
    }
    avg(&vals)
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())),
        _ => false,
    }
}

/// Every metric against the oracle; `Err` names the first mismatch.
pub fn check_against_oracle(c: &Case, tol: f64) -> Result<(), String> {
    let (log, reg) = build(c);
    let mut pairs = vec![
        ("pm", metrics::performance_maintenance(&log), oracle_retention(c, false)),
        ("bt", metrics::backward_transfer(&log), oracle_retention(c, true)),
        ("ft", metrics::forward_transfer(&log), oracle_ft(c)),
        ("rp", metrics::relative_performance(&log, &reg), oracle_rp(c)),
    ];
    for sel in RrSelector::ALL {
        pairs.push((sel.name(), metrics::relative_reward(&log, &reg, sel).unwrap(), oracle_rr(c, sel)));
    }
    for (name, got, want) in pairs {
        if !close(got, want, tol) {
            return Err(format!("{name}: {got:?} vs oracle {want:?}"));
        }
    }
    Ok(())
}

/// A log whose every evaluation equals the expert return.
pub fn expert_mimic(c: &Case) -> Case {
    let mut m = c.clone();
    for row in &mut m.returns {
        for (t, v) in row.iter_mut().enumerate() {
            *v = c.experts[t];
        }
    }
    m
}
