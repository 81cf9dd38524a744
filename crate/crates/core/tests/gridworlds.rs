use std::collections::{HashSet, VecDeque};

use replay_loom::gridworlds::{reset, task_catalog, Action, EnvState, TaskSpec, NUM_ACTIONS, OBS_DIM};
use replay_loom::numerics::Rng;

/// Breadth-first search over complete simulator states. Returns the shortest
/// action sequence ending in a positive reward.
fn solve(start: &EnvState) -> Option<Vec<Action>> {
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    let mut key = start.clone();
    key.elapsed = 0;
    seen.insert(key);
    queue.push_back((start.clone(), Vec::new()));
    while let Some((state, path)) = queue.pop_front() {
        for a in Action::ALL {
            let mut next = state.clone();
            let r = next.step(a).unwrap();
            let mut p = path.clone();
            p.push(a);
            if r.reward > 0.0 {
                return Some(p);
            }
            if r.done {
                continue;
            }
            let mut key = next.clone();
            key.elapsed = 0;
            if seen.insert(key) {
                queue.push_back((next, p));
            }
        }
    }
    None
}

fn replay(task: &TaskSpec, seed: u64, actions: &[Action]) -> (f64, bool) {
    let (mut s, _) = reset(task, seed);
    let mut total = 0.0;
    let mut done = false;
    for &a in actions {
        let r = s.step(a).unwrap();
        total += r.reward;
        done = r.done;
        if done {
            break;
        }
    }
    (total, done)
}

#[test]
fn every_task_is_solvable_on_many_seeds() {
    for task in task_catalog() {
        for seed in 0..100 {
            let (s, _) = reset(&task, seed);
            let plan = solve(&s).unwrap_or_else(|| panic!("{} seed {seed} unsolvable", task.id()));
            let (ret, done) = replay(&task, seed, &plan);
            assert!(done);
            let want = 1.0 - 0.9 * plan.len() as f64 / task.max_steps as f64;
            assert!((ret - want).abs() < 1e-12, "{} seed {seed}", task.id());
        }
    }
}

#[test]
fn random_policy_scores_near_zero() {
    let episodes = 400;
    for task in task_catalog() {
        let mut rng = Rng::new(99);
        let mut total = 0.0;
        for ep in 0..episodes {
            let (mut s, _) = reset(&task, 10_000 + ep);
            loop {
                let a = Action::from_index(rng.below(NUM_ACTIONS)).unwrap();
                let r = s.step(a).unwrap();
                total += r.reward;
                if r.done {
                    break;
                }
            }
        }
        let mean = total / episodes as f64;
        eprintln!("{}: random mean return {mean:.4}", task.id());
        assert!(mean <= 0.05, "{} random mean {mean}", task.id());
    }
}

#[test]
fn same_seed_same_trajectory() {
    for task in task_catalog() {
        let mut a = reset(&task, 5).0;
        let mut b = reset(&task, 5).0;
        let mut rng = Rng::new(1);
        for _ in 0..50 {
            if a.done {
                break;
            }
            let act = Action::from_index(rng.below(NUM_ACTIONS)).unwrap();
            let ra = a.step(act).unwrap();
            let rb = b.step(act).unwrap();
            assert_eq!(ra, rb);
            assert_eq!(ra.observation.len(), OBS_DIM);
        }
    }
}

#[test]
fn seeds_produce_varied_layouts() {
    for task in task_catalog() {
        let layouts: HashSet<String> = (0..30)
            .map(|s| replay_loom::gridworlds::render_ascii(&reset(&task, s).0))
            .collect();
        assert!(layouts.len() >= 3, "{}", task.id());
    }
}
