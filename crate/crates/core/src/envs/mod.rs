//! Task families: Krazy World, mazes and pointmass corners.
//!
//! A [`TaskSpec`] fully determines one MDP. [`Env`] wraps the three families
//! behind one reset/step interface with four discrete actions
//! (0 up, 1 down, 2 left, 3 right), mapped through the task's dynamics
//! permutation before they reach the board.

mod grid;
mod krazy;
mod maze;
mod observation;
mod pointmass;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use grid::{GridState, Tile};
pub use krazy::{generate_krazy_layout, KrazyConfig, KrazyWorld};
pub use maze::{maze_generate, MazeConfig, MazeEnv};
pub use observation::{encode_observation, ObsMode, Observation, AGENT_CHANNEL, CHANNELS};
pub use pointmass::{PointMass, PointMassConfig};

pub const N_ACTIONS: usize = 4;
pub const IDENTITY_PALETTE: [usize; 8] = [0, 1, 2, 3, 4, 5, 6, 7];
pub const IDENTITY_DYNAMICS: [usize; 4] = [0, 1, 2, 3];

/// Grid displacement of a board action (y grows downward).
pub(crate) fn direction(action: usize) -> (i64, i64) {
    match action {
        0 => (0, -1),
        1 => (0, 1),
        2 => (-1, 0),
        3 => (1, 0),
        _ => unreachable!("action {action} validated by caller"),
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called after the episode ended")]
    StepAfterDone,
    #[error("action {0} is outside 0..4")]
    InvalidAction(usize),
    #[error("no playable layout found for seed {seed} after 100 attempts")]
    LayoutFault { seed: u64 },
    #[error("grid text: {0}")]
    Parse(String),
    #[error("unknown env family `{0}`")]
    UnknownFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Krazy,
    Maze,
    Pointmass,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Krazy => "krazy",
            Family::Maze => "maze",
            Family::Pointmass => "pointmass",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "krazy" => Ok(Family::Krazy),
            "maze" => Ok(Family::Maze),
            "pointmass" => Ok(Family::Pointmass),
            other => Err(EnvError::UnknownFamily(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub family: Family,
    pub layout_seed: u64,
    pub palette_perm: [usize; 8],
    pub dynamics_perm: [usize; 4],
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub krazy: KrazyConfig,
    pub maze: MazeConfig,
    pub pointmass: PointMassConfig,
}

impl EnvConfig {
    pub fn horizon(&self, family: Family) -> usize {
        match family {
            Family::Krazy => self.krazy.horizon,
            Family::Maze => self.maze.horizon,
            Family::Pointmass => self.pointmass.horizon,
        }
    }

    pub fn obs_len(&self, family: Family) -> usize {
        match family {
            Family::Krazy => self.krazy.observation.len(self.krazy.width, self.krazy.height),
            Family::Maze => {
                let n = maze::playable_size(self.maze.size);
                self.maze.observation.len(n, n)
            }
            Family::Pointmass => 2,
        }
    }
}

/// Draws a task. Krazy World tasks get uniform palette and dynamics
/// permutations; mazes and pointmass use identities.
pub fn sample_task<R: Rng + ?Sized>(family: Family, cfg: &EnvConfig, rng: &mut R) -> TaskSpec {
    let layout_seed: u64 = rng.random();
    let mut palette_perm = IDENTITY_PALETTE;
    let mut dynamics_perm = IDENTITY_DYNAMICS;
    if family == Family::Krazy {
        palette_perm.shuffle(rng);
        dynamics_perm.shuffle(rng);
    }
    TaskSpec {
        family,
        layout_seed,
        palette_perm,
        dynamics_perm,
        horizon: cfg.horizon(family),
    }
}

/// Per-episode counters reported with every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepInfo {
    /// Distinct goal cells collected so far this episode.
    pub goals_reached: u32,
    /// 1 once the episode ended on a death tile.
    pub deaths: u32,
    /// Bit mask over the eight tile metric classes touched this episode.
    pub touched: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
pub enum Env {
    Krazy(KrazyWorld),
    Maze(MazeEnv),
    Pointmass(PointMass),
}

impl Env {
    pub fn new(task: &TaskSpec, cfg: &EnvConfig) -> Result<Env, EnvError> {
        Ok(match task.family {
            Family::Krazy => Env::Krazy(KrazyWorld::new(task.clone(), cfg.krazy.clone())?),
            Family::Maze => Env::Maze(MazeEnv::new(task.clone(), cfg.maze.clone())),
            Family::Pointmass => Env::Pointmass(PointMass::new(task.clone())),
        })
    }

    pub fn obs_len(&self) -> usize {
        match self {
            Env::Krazy(e) => e.obs_len(),
            Env::Maze(e) => e.obs_len(),
            Env::Pointmass(_) => 2,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Observation {
        match self {
            Env::Krazy(e) => e.reset(rng),
            Env::Maze(e) => e.reset(rng),
            Env::Pointmass(e) => e.reset(),
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if action >= N_ACTIONS {
            return Err(EnvError::InvalidAction(action));
        }
        match self {
            Env::Krazy(e) => e.step(action),
            Env::Maze(e) => e.step(action),
            Env::Pointmass(e) => e.step(action),
        }
    }
}
