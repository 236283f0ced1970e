//! Perfect mazes carved by a recursive backtracker.
//!
//! A requested size `n` is reduced to the nearest odd number (20 becomes 19)
//! so that rooms sit on odd coordinates, separated by one-cell walls, with a
//! solid border.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{GridState, Tile};
use super::observation::{encode_observation, ObsMode, Observation};
use super::{direction, EnvError, StepInfo, StepResult, TaskSpec};
use crate::rng;

const MAZE_TAG: u64 = 0x4d41_5a45;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MazeConfig {
    pub size: usize,
    pub wall_penalty: f64,
    pub horizon: usize,
    pub observation: ObsMode,
}

impl Default for MazeConfig {
    fn default() -> Self {
        MazeConfig {
            size: 20,
            wall_penalty: 0.01,
            horizon: 200,
            observation: ObsMode::Local3x3,
        }
    }
}

pub(crate) fn playable_size(size: usize) -> usize {
    if size.is_multiple_of(2) {
        size - 1
    } else {
        size
    }
}

/// Carves a perfect maze and places the goal on a uniformly chosen dead end.
pub fn maze_generate(seed: u64, size: usize) -> GridState {
    assert!(size >= 5, "maze size must be at least 5");
    let n = playable_size(size);
    let mut r = rng::stream(&[MAZE_TAG, seed]);
    let mut grid = GridState::new(n, n, vec![Tile::Wall; n * n]);
    let rooms = (n - 1) / 2;
    let mut visited = vec![false; rooms * rooms];
    let start = (r.random_range(0..rooms), r.random_range(0..rooms));
    let mut stack = vec![start];
    visited[start.1 * rooms + start.0] = true;
    let carve = |g: &mut GridState, x: usize, y: usize| {
        let i = g.index(x, y);
        g.tiles[i] = Tile::Normal;
    };
    carve(&mut grid, 2 * start.0 + 1, 2 * start.1 + 1);
    while let Some(&(cx, cy)) = stack.last() {
        let mut options: Vec<(usize, usize)> = [(0i64, -1i64), (0, 1), (-1, 0), (1, 0)]
            .iter()
            .filter_map(|&(dx, dy)| {
                let nx = cx as i64 + dx;
                let ny = cy as i64 + dy;
                (nx >= 0 && ny >= 0 && (nx as usize) < rooms && (ny as usize) < rooms)
                    .then_some((nx as usize, ny as usize))
            })
            .filter(|&(x, y)| !visited[y * rooms + x])
            .collect();
        if options.is_empty() {
            stack.pop();
            continue;
        }
        options.shuffle(&mut r);
        let (nx, ny) = options[0];
        visited[ny * rooms + nx] = true;
        carve(&mut grid, cx + nx + 1, cy + ny + 1);
        carve(&mut grid, 2 * nx + 1, 2 * ny + 1);
        stack.push((nx, ny));
    }
    let dead_ends: Vec<usize> = (0..n * n)
        .filter(|&i| grid.tiles[i] == Tile::Normal && open_neighbours(&grid, i) == 1)
        .collect();
    let goal = dead_ends[r.random_range(0..dead_ends.len())];
    grid.tiles[goal] = Tile::Goal;
    grid.agent = (1, 1);
    grid
}

fn open_neighbours(grid: &GridState, i: usize) -> usize {
    let p = (i % grid.width, i / grid.width);
    (0..4)
        .filter_map(|a| grid.offset(p, direction(a)))
        .filter(|&(x, y)| grid.tile(x, y) != Tile::Wall)
        .count()
}

#[derive(Debug, Clone)]
pub struct MazeEnv {
    task: TaskSpec,
    cfg: MazeConfig,
    layout: GridState,
    state: GridState,
    info: StepInfo,
    done: bool,
}

impl MazeEnv {
    pub fn new(task: TaskSpec, cfg: MazeConfig) -> Self {
        let layout = maze_generate(task.layout_seed, cfg.size);
        MazeEnv {
            state: layout.clone(),
            layout,
            task,
            cfg,
            info: StepInfo::default(),
            done: true,
        }
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn obs_len(&self) -> usize {
        self.cfg.observation.len(self.layout.width, self.layout.height)
    }

    fn observe(&self) -> Observation {
        encode_observation(&self.state, self.cfg.observation, &self.task.palette_perm)
    }

    /// Places the agent on a uniformly drawn corridor cell other than the goal.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Observation {
        self.state = self.layout.clone();
        let starts = self.layout.cells_of(Tile::Normal);
        let s = starts[rng.random_range(0..starts.len())];
        self.state.agent = (s % self.layout.width, s / self.layout.width);
        self.info = StepInfo::default();
        self.done = false;
        self.observe()
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let d = direction(self.task.dynamics_perm[action]);
        let target = self
            .state
            .offset(self.state.agent, d)
            .filter(|&(x, y)| self.state.tile(x, y) != Tile::Wall);
        let reward = match target {
            None => -self.cfg.wall_penalty,
            Some(p) => {
                self.state.agent = p;
                if self.state.tile(p.0, p.1) == Tile::Goal {
                    self.info.goals_reached += 1;
                    self.done = true;
                    1.0
                } else {
                    0.0
                }
            }
        };
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done: self.done,
            info: self.info,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn flood(grid: &GridState, from: usize) -> Vec<bool> {
        let mut seen = vec![false; grid.tiles.len()];
        let mut q = VecDeque::from([from]);
        seen[from] = true;
        while let Some(i) = q.pop_front() {
            let p = (i % grid.width, i / grid.width);
            for a in 0..4 {
                if let Some((x, y)) = grid.offset(p, direction(a)) {
                    let j = grid.index(x, y);
                    if grid.tiles[j] != Tile::Wall && !seen[j] {
                        seen[j] = true;
                        q.push_back(j);
                    }
                }
            }
        }
        seen
    }

    #[test]
    fn twenty_becomes_nineteen() {
        let g = maze_generate(0, 20);
        assert_eq!((g.width, g.height), (19, 19));
        assert!((0..19).all(|k| g.tile(k, 0) == Tile::Wall && g.tile(0, k) == Tile::Wall));
    }

    #[test]
    fn maze_is_perfect() {
        for seed in 0..20 {
            let g = maze_generate(seed, 20);
            let open: Vec<usize> = (0..g.tiles.len()).filter(|&i| g.tiles[i] != Tile::Wall).collect();
            let seen = flood(&g, open[0]);
            assert!(open.iter().all(|&i| seen[i]));
            // A tree on V cells has V - 1 edges.
            let edges: usize = open
                .iter()
                .map(|&i| {
                    let (x, y) = (i % g.width, i / g.width);
                    [(x + 1, y), (x, y + 1)]
                        .iter()
                        .filter(|&&(a, b)| a < g.width && b < g.height && g.tile(a, b) != Tile::Wall)
                        .count()
                })
                .sum();
            assert_eq!(edges, open.len() - 1);
        }
    }

    #[test]
    fn same_seed_same_maze() {
        assert_eq!(maze_generate(42, 20), maze_generate(42, 20));
        assert_ne!(maze_generate(42, 20), maze_generate(43, 20));
    }

    #[test]
    fn goal_sits_on_dead_end() {
        let g = maze_generate(5, 11);
        let goal = g.cells_of(Tile::Goal)[0];
        assert_eq!(open_neighbours(&g, goal), 1);
    }
}
