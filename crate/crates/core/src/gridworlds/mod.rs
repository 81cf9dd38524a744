//! Partially observed grid navigation tasks.
//!
//! Four task families, two variants each. The agent sees a 7×7 egocentric
//! window (object type, color, state per cell) scaled into `[0, 1]` and acts
//! with six discrete actions shared by every task.
//!
//! Rewards: stepping into lava gives −1 and ends the episode, reaching the
//! goal gives `1 − 0.9 · elapsed / max_steps`, running out of time gives 0.
//! Bumping into walls is free and leaves the agent in place.

mod layout;
mod render;
mod runner;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

pub use render::render_ascii;
pub use runner::{eval_seed, LiveEnv, LiveStep, EVAL_SEED_BASE};

pub const VIEW_SIZE: usize = 7;
pub const OBS_CHANNELS: usize = 3;
pub const OBS_DIM: usize = VIEW_SIZE * VIEW_SIZE * OBS_CHANNELS;
pub const NUM_ACTIONS: usize = 6;

/// Observation vector of length [`OBS_DIM`], entries in `[0, 1]`.
pub type Observation = Vec<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
    Pickup = 3,
    Drop = 4,
    Interact = 5,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::Forward,
        Action::Pickup,
        Action::Drop,
        Action::Interact,
    ];

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    CorridorShift,
    CrossingWalls,
    DoorKey,
    FetchColor,
}

impl Family {
    fn slug(self) -> &'static str {
        match self {
            Family::CorridorShift => "corridor",
            Family::CrossingWalls => "crossing",
            Family::DoorKey => "doorkey",
            Family::FetchColor => "fetch",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    V1,
    V2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub family: Family,
    pub variant: Variant,
    pub width: usize,
    pub height: usize,
    pub max_steps: usize,
    /// Selects the layout generator; stable across releases.
    pub layout_id: u32,
}

impl TaskSpec {
    fn new(family: Family, variant: Variant, width: usize, height: usize, layout_id: u32) -> Self {
        Self {
            family,
            variant,
            width,
            height,
            max_steps: 4 * width * height,
            layout_id,
        }
    }

    /// Stable identifier such as `"crossing-v2"`.
    pub fn id(&self) -> String {
        let v = match self.variant {
            Variant::V1 => "v1",
            Variant::V2 => "v2",
        };
        format!("{}-{v}", self.family.slug())
    }

    pub fn from_id(id: &str) -> Result<TaskSpec> {
        task_catalog()
            .into_iter()
            .find(|t| t.id() == id)
            .ok_or_else(|| Error::Config(format!("unknown task id `{id}`")))
    }
}

/// The eight tasks, in a fixed order.
pub fn task_catalog() -> Vec<TaskSpec> {
    use Family::*;
    use Variant::*;
    vec![
        TaskSpec::new(CorridorShift, V1, 7, 7, 0),
        TaskSpec::new(CorridorShift, V2, 9, 7, 1),
        TaskSpec::new(CrossingWalls, V1, 8, 8, 2),
        TaskSpec::new(CrossingWalls, V2, 9, 9, 3),
        TaskSpec::new(DoorKey, V1, 6, 6, 4),
        TaskSpec::new(DoorKey, V2, 8, 8, 5),
        TaskSpec::new(FetchColor, V1, 6, 6, 6),
        TaskSpec::new(FetchColor, V2, 8, 8, 7),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    Red = 0,
    Green = 1,
    Blue = 2,
    Purple = 3,
    Yellow = 4,
    Grey = 5,
}

/// Contents of one grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Empty,
    Wall,
    Lava,
    Goal,
    Door { color: Color, open: bool, locked: bool },
    Key { color: Color },
    Ball { color: Color },
}

impl Cell {
    /// `(type, color, state)` codes before scaling.
    pub fn encode(self) -> [u8; 3] {
        match self {
            Cell::Empty => [1, 0, 0],
            Cell::Wall => [2, Color::Grey as u8, 0],
            Cell::Door { color, open, locked } => {
                let state = if open {
                    0
                } else if locked {
                    2
                } else {
                    1
                };
                [4, color as u8, state]
            }
            Cell::Key { color } => [5, color as u8, 0],
            Cell::Ball { color } => [6, color as u8, 0],
            Cell::Goal => [8, Color::Green as u8, 0],
            Cell::Lava => [9, Color::Red as u8, 0],
        }
    }

    fn passable(self) -> bool {
        matches!(self, Cell::Empty | Cell::Goal | Cell::Lava | Cell::Door { open: true, .. })
    }

    fn portable(self) -> bool {
        matches!(self, Cell::Key { .. } | Cell::Ball { .. })
    }
}

const TYPE_SCALE: f64 = 10.0;
const COLOR_SCALE: f64 = 5.0;
const STATE_SCALE: f64 = 2.0;

/// Target object for the fetch family.
pub const FETCH_TARGET: Cell = Cell::Ball { color: Color::Blue };

/// Heading: 0 = east, 1 = south, 2 = west, 3 = north.
const DIRS: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Full simulator state. Observations are a deterministic function of it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvState {
    pub task: TaskSpec,
    pub grid: Vec<Cell>,
    pub agent: (i32, i32),
    pub heading: u8,
    pub carrying: Option<Cell>,
    pub elapsed: usize,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

impl EnvState {
    pub fn width(&self) -> usize {
        self.task.width
    }

    pub fn height(&self) -> usize {
        self.task.height
    }

    pub fn cell(&self, x: i32, y: i32) -> Cell {
        if x < 0 || y < 0 || x >= self.task.width as i32 || y >= self.task.height as i32 {
            Cell::Wall
        } else {
            self.grid[y as usize * self.task.width + x as usize]
        }
    }

    fn set(&mut self, x: i32, y: i32, c: Cell) {
        let w = self.task.width;
        self.grid[y as usize * w + x as usize] = c;
    }

    pub fn front(&self) -> (i32, i32) {
        let (dx, dy) = DIRS[self.heading as usize];
        (self.agent.0 + dx, self.agent.1 + dy)
    }

    /// Egocentric 7×7×3 view with the agent at the bottom-center facing up.
    pub fn observe(&self) -> Observation {
        let mut obs = vec![0.0; OBS_DIM];
        let (fx, fy) = DIRS[self.heading as usize];
        // Right-hand side of the heading.
        let (rx, ry) = (-fy, fx);
        let half = (VIEW_SIZE / 2) as i32;
        for vy in 0..VIEW_SIZE {
            for vx in 0..VIEW_SIZE {
                let ahead = (VIEW_SIZE - 1 - vy) as i32;
                let side = vx as i32 - half;
                let cell = if ahead == 0 && side == 0 {
                    self.carrying.unwrap_or(Cell::Empty)
                } else {
                    let x = self.agent.0 + ahead * fx + side * rx;
                    let y = self.agent.1 + ahead * fy + side * ry;
                    self.cell(x, y)
                };
                let [t, c, s] = cell.encode();
                let base = (vy * VIEW_SIZE + vx) * OBS_CHANNELS;
                obs[base] = t as f64 / TYPE_SCALE;
                obs[base + 1] = c as f64 / COLOR_SCALE;
                obs[base + 2] = s as f64 / STATE_SCALE;
            }
        }
        obs
    }

    fn goal_reward(&self) -> f64 {
        1.0 - 0.9 * (self.elapsed as f64 / self.task.max_steps as f64)
    }

    /// Advance one step. Stepping a finished episode is a usage error.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a terminal state".into()));
        }
        self.elapsed += 1;
        let mut reward = 0.0;
        let mut done = false;
        let (fx, fy) = self.front();
        let front = self.cell(fx, fy);
        match action {
            Action::TurnLeft => self.heading = (self.heading + 3) % 4,
            Action::TurnRight => self.heading = (self.heading + 1) % 4,
            Action::Forward => {
                if front.passable() {
                    self.agent = (fx, fy);
                    match front {
                        Cell::Lava => {
                            reward = -1.0;
                            done = true;
                        }
                        Cell::Goal => {
                            let needs_target = self.task.family == Family::FetchColor;
                            if !needs_target || self.carrying == Some(FETCH_TARGET) {
                                reward = self.goal_reward();
                                done = true;
                            }
                        }
                        _ => {}
                    }
                }
            }
            Action::Pickup => {
                if self.carrying.is_none() && front.portable() {
                    self.carrying = Some(front);
                    self.set(fx, fy, Cell::Empty);
                    if self.task.family == Family::FetchColor && front != FETCH_TARGET {
                        done = true;
                    }
                }
            }
            Action::Drop => {
                if let Some(item) = self.carrying {
                    if front == Cell::Empty {
                        self.set(fx, fy, item);
                        self.carrying = None;
                    }
                }
            }
            Action::Interact => {
                if let Cell::Door { color, open, locked } = front {
                    let opened = if locked {
                        self.carrying == Some(Cell::Key { color })
                    } else {
                        !open
                    };
                    self.set(fx, fy, Cell::Door { color, open: opened, locked: locked && !opened });
                }
            }
        }
        if !done && self.elapsed >= self.task.max_steps {
            done = true;
        }
        self.done = done;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done,
        })
    }
}

/// Fresh layout for `task`, deterministic in `seed`.
pub fn reset(task: &TaskSpec, seed: u64) -> (EnvState, Observation) {
    let mut rng = Rng::new(seed ^ ((task.layout_id as u64) << 56));
    let state = layout::generate(task, &mut rng);
    let obs = state.observe();
    (state, obs)
}

/// Ids of every catalog task.
pub fn catalog_ids() -> Vec<String> {
    task_catalog().iter().map(TaskSpec::id).collect()
}
