//! Seeded layout generators, one per family.

use std::collections::VecDeque;

use super::{Cell, Color, EnvState, Family, TaskSpec, Variant, FETCH_TARGET};
use crate::numerics::Rng;

const MAX_ATTEMPTS: usize = 1000;

const DISTRACTOR_COLORS: [Color; 4] = [Color::Red, Color::Purple, Color::Yellow, Color::Grey];

pub(super) fn generate(task: &TaskSpec, rng: &mut Rng) -> EnvState {
    for _ in 0..MAX_ATTEMPTS {
        let state = match task.family {
            Family::CorridorShift => corridor(task, rng),
            Family::CrossingWalls => crossing(task, rng),
            Family::DoorKey => door_key(task, rng),
            Family::FetchColor => fetch(task, rng),
        };
        if solvable(&state) {
            return state;
        }
    }
    unreachable!("layout generator for {} never produced a solvable grid", task.id())
}

fn blank(task: &TaskSpec) -> EnvState {
    let (w, h) = (task.width, task.height);
    let mut grid = vec![Cell::Empty; w * h];
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                grid[y * w + x] = Cell::Wall;
            }
        }
    }
    let mut s = EnvState {
        task: *task,
        grid,
        agent: (1, 1),
        heading: 0,
        carrying: None,
        elapsed: 0,
        done: false,
    };
    s.set(w as i32 - 2, h as i32 - 2, Cell::Goal);
    s
}

fn range(rng: &mut Rng, lo: usize, hi_inclusive: usize) -> usize {
    lo + rng.below(hi_inclusive - lo + 1)
}

/// Lava strips in the hazard rows, shifted by the seed. Row 1 and the last
/// interior column stay clear, so a lava-free route always exists.
fn corridor(task: &TaskSpec, rng: &mut Rng) -> EnvState {
    let mut s = blank(task);
    let rows: &[usize] = match task.variant {
        Variant::V1 => &[3],
        Variant::V2 => &[2, 4],
    };
    let last = task.width - 3;
    for &r in rows {
        let start = range(rng, 1, last - 1);
        let end = range(rng, start + 1, last);
        for x in start..=end {
            s.set(x as i32, r as i32, Cell::Lava);
        }
    }
    s.heading = rng.below(4) as u8;
    s
}

/// Vertical walls, each with one doorway at a seeded row.
fn crossing(task: &TaskSpec, rng: &mut Rng) -> EnvState {
    let mut s = blank(task);
    let cols = match task.variant {
        Variant::V1 => vec![range(rng, 2, task.width - 3)],
        Variant::V2 => {
            let a = range(rng, 2, task.width - 5);
            let b = range(rng, a + 2, task.width - 3);
            vec![a, b]
        }
    };
    for c in cols {
        let gap = range(rng, 1, task.height - 2);
        for y in 1..task.height - 1 {
            if y != gap {
                s.set(c as i32, y as i32, Cell::Wall);
            }
        }
    }
    s
}

fn random_empty(s: &EnvState, rng: &mut Rng, x_lo: usize, x_hi: usize) -> (i32, i32) {
    loop {
        let x = range(rng, x_lo, x_hi) as i32;
        let y = range(rng, 1, s.height() - 2) as i32;
        if s.cell(x, y) == Cell::Empty && (x, y) != s.agent {
            return (x, y);
        }
    }
}

/// Two rooms split by a wall with a locked door; the key lies in the start room.
fn door_key(task: &TaskSpec, rng: &mut Rng) -> EnvState {
    let mut s = blank(task);
    let split = range(rng, 2, task.width - 3);
    for y in 1..task.height - 1 {
        s.set(split as i32, y as i32, Cell::Wall);
    }
    let door_y = range(rng, 1, task.height - 2);
    s.set(
        split as i32,
        door_y as i32,
        Cell::Door {
            color: Color::Yellow,
            open: false,
            locked: true,
        },
    );
    s.agent = random_empty(&s, rng, 1, split - 1);
    s.heading = rng.below(4) as u8;
    let (kx, ky) = random_empty(&s, rng, 1, split - 1);
    s.set(kx, ky, Cell::Key { color: Color::Yellow });
    s
}

/// One target ball among distractors of other colors.
fn fetch(task: &TaskSpec, rng: &mut Rng) -> EnvState {
    let mut s = blank(task);
    let distractors = match task.variant {
        Variant::V1 => 1,
        Variant::V2 => 3,
    };
    s.agent = random_empty(&s, rng, 1, task.width - 2);
    s.heading = rng.below(4) as u8;
    let (x, y) = random_empty(&s, rng, 1, task.width - 2);
    s.set(x, y, FETCH_TARGET);
    for _ in 0..distractors {
        let color = DISTRACTOR_COLORS[rng.below(DISTRACTOR_COLORS.len())];
        let (x, y) = random_empty(&s, rng, 1, task.width - 2);
        s.set(x, y, Cell::Ball { color });
    }
    s
}

/// Cells reachable on foot from `from`, treating lava and closed doors as
/// walls, plus whatever `through` lets the agent stand on.
fn flood(s: &EnvState, from: (i32, i32), through: impl Fn(Cell) -> bool) -> Vec<bool> {
    let w = s.width();
    let mut seen = vec![false; w * s.height()];
    let mut queue = VecDeque::from([from]);
    seen[from.1 as usize * w + from.0 as usize] = true;
    while let Some((x, y)) = queue.pop_front() {
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let (nx, ny) = (x + dx, y + dy);
            let c = s.cell(nx, ny);
            let ok = matches!(c, Cell::Empty | Cell::Goal) || through(c);
            let i = ny as usize * w + nx as usize;
            if ok && !seen[i] {
                seen[i] = true;
                queue.push_back((nx, ny));
            }
        }
    }
    seen
}

fn find(s: &EnvState, pred: impl Fn(Cell) -> bool) -> Option<(i32, i32)> {
    let w = s.width();
    s.grid
        .iter()
        .position(|&c| pred(c))
        .map(|i| ((i % w) as i32, (i / w) as i32))
}

fn solvable(s: &EnvState) -> bool {
    let w = s.width();
    let idx = |(x, y): (i32, i32)| y as usize * w + x as usize;
    let goal = find(s, |c| c == Cell::Goal).expect("every layout has a goal");
    let adjacent_reached = |seen: &[bool], (x, y): (i32, i32)| {
        [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .any(|(dx, dy)| seen[idx((x + dx, y + dy))])
    };
    match s.task.family {
        Family::CorridorShift | Family::CrossingWalls => flood(s, s.agent, |_| false)[idx(goal)],
        Family::DoorKey => {
            let key = find(s, |c| matches!(c, Cell::Key { .. })).expect("key placed");
            let door = find(s, |c| matches!(c, Cell::Door { .. })).expect("door placed");
            let start = flood(s, s.agent, |_| false);
            let past_door = flood(s, s.agent, |c| matches!(c, Cell::Door { .. } | Cell::Key { .. }));
            adjacent_reached(&start, key) && adjacent_reached(&start, door) && past_door[idx(goal)]
        }
        Family::FetchColor => {
            let target = find(s, |c| c == FETCH_TARGET).expect("target placed");
            let start = flood(s, s.agent, |_| false);
            let carrying = flood(s, s.agent, |c| c == FETCH_TARGET);
            adjacent_reached(&start, target) && carrying[idx(goal)]
        }
    }
}
