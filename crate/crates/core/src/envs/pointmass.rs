//! Pointmass on [-1, 1]² with one rewarded corner.
//!
//! Positions are kept as integer multiples of the 0.1 step so that repeated
//! moves land exactly on the grid of reachable points.

use serde::{Deserialize, Serialize};

use super::observation::Observation;
use super::{EnvError, StepInfo, StepResult, TaskSpec};

/// Board half-width in units of 0.1.
const LIMIT: i32 = 10;
/// Squared goal radius (0.2) in units of 0.1.
const RADIUS_SQ: i32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointMassConfig {
    pub horizon: usize,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        PointMassConfig { horizon: 32 }
    }
}

#[derive(Debug, Clone)]
pub struct PointMass {
    task: TaskSpec,
    corner: (i32, i32),
    pos: (i32, i32),
    info: StepInfo,
    done: bool,
}

impl PointMass {
    pub fn new(task: TaskSpec) -> Self {
        let corner = match task.layout_seed % 4 {
            0 => (LIMIT, LIMIT),
            1 => (-LIMIT, LIMIT),
            2 => (-LIMIT, -LIMIT),
            _ => (LIMIT, -LIMIT),
        };
        PointMass {
            task,
            corner,
            pos: (0, 0),
            info: StepInfo::default(),
            done: true,
        }
    }

    pub fn corner(&self) -> (f64, f64) {
        (self.corner.0 as f64 / 10.0, self.corner.1 as f64 / 10.0)
    }

    pub fn position(&self) -> (f64, f64) {
        (self.pos.0 as f64 / 10.0, self.pos.1 as f64 / 10.0)
    }

    /// Places the mass at the given point, rounded to the 0.1 grid (fixtures).
    pub fn set_position(&mut self, x: f64, y: f64) {
        self.pos = ((x * 10.0).round() as i32, (y * 10.0).round() as i32);
        self.done = false;
    }

    fn observe(&self) -> Observation {
        let (x, y) = self.position();
        Observation { data: vec![x, y] }
    }

    pub fn reset(&mut self) -> Observation {
        self.pos = (0, 0);
        self.info = StepInfo::default();
        self.done = false;
        self.observe()
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        // Up is +y here, unlike the grids.
        let (dx, dy) = match self.task.dynamics_perm[action] {
            0 => (0, 1),
            1 => (0, -1),
            2 => (-1, 0),
            _ => (1, 0),
        };
        self.pos = (
            (self.pos.0 + dx).clamp(-LIMIT, LIMIT),
            (self.pos.1 + dy).clamp(-LIMIT, LIMIT),
        );
        let ex = self.pos.0 - self.corner.0;
        let ey = self.pos.1 - self.corner.1;
        let reward = if ex * ex + ey * ey <= RADIUS_SQ {
            self.done = true;
            self.info.goals_reached += 1;
            1.0
        } else {
            0.0
        };
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done: self.done,
            info: self.info,
        })
    }
}
