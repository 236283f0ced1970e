//! Krazy World: a gridworld with eight special tile types whose colours and
//! controls are shuffled per task.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{GridState, Tile};
use super::observation::{encode_observation, ObsMode, Observation};
use super::{direction, EnvError, StepInfo, StepResult, TaskSpec};
use crate::rng;

const LAYOUT_TAG: u64 = 0x4b52_415a;
const MAX_LAYOUT_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrazyConfig {
    pub width: usize,
    pub height: usize,
    pub goals: usize,
    pub deaths: usize,
    pub ice: usize,
    pub walls: usize,
    pub lock_and_key: bool,
    pub teleporters: bool,
    pub energy_tiles: usize,
    pub initial_energy: u32,
    pub energy_refill: u32,
    pub horizon: usize,
    pub observation: ObsMode,
}

impl Default for KrazyConfig {
    fn default() -> Self {
        KrazyConfig {
            width: 20,
            height: 20,
            goals: 3,
            deaths: 4,
            ice: 6,
            walls: 8,
            lock_and_key: true,
            teleporters: true,
            energy_tiles: 3,
            initial_energy: 10,
            energy_refill: 8,
            horizon: 64,
            observation: ObsMode::Local3x3,
        }
    }
}

impl KrazyConfig {
    fn special_tiles(&self) -> Vec<Tile> {
        let mut v = Vec::new();
        v.extend(std::iter::repeat_n(Tile::Goal, self.goals));
        v.extend(std::iter::repeat_n(Tile::Death, self.deaths));
        v.extend(std::iter::repeat_n(Tile::Ice, self.ice));
        v.extend(std::iter::repeat_n(Tile::Wall, self.walls));
        v.extend(std::iter::repeat_n(Tile::Energy, self.energy_tiles));
        if self.lock_and_key {
            v.extend([Tile::Lock, Tile::Key]);
        }
        if self.teleporters {
            v.extend([Tile::Teleporter, Tile::Teleporter]);
        }
        v
    }
}

/// Scatters the configured tiles uniformly over the board. Layouts without a
/// normal start cell are redrawn.
pub fn generate_krazy_layout(seed: u64, cfg: &KrazyConfig) -> Result<GridState, EnvError> {
    let n = cfg.width * cfg.height;
    let specials = cfg.special_tiles();
    for attempt in 0..MAX_LAYOUT_ATTEMPTS {
        if specials.len() >= n {
            break;
        }
        let mut r = rng::stream(&[LAYOUT_TAG, seed, attempt]);
        let mut tiles = specials.clone();
        tiles.resize(n, Tile::Normal);
        tiles.shuffle(&mut r);
        let grid = GridState::new(cfg.width, cfg.height, tiles);
        if grid.tiles.contains(&Tile::Normal) {
            return Ok(grid);
        }
    }
    Err(EnvError::LayoutFault { seed })
}

#[derive(Debug, Clone)]
pub struct KrazyWorld {
    task: TaskSpec,
    cfg: KrazyConfig,
    layout: GridState,
    state: GridState,
    info: StepInfo,
    done: bool,
}

impl KrazyWorld {
    pub fn new(task: TaskSpec, cfg: KrazyConfig) -> Result<Self, EnvError> {
        let layout = generate_krazy_layout(task.layout_seed, &cfg)?;
        Ok(KrazyWorld {
            state: layout.clone(),
            layout,
            task,
            cfg,
            info: StepInfo::default(),
            done: true,
        })
    }

    /// Starts an episode from a hand-built state (test fixtures).
    pub fn from_state(task: TaskSpec, cfg: KrazyConfig, state: GridState) -> Self {
        let mut w = KrazyWorld {
            layout: state.clone(),
            state,
            task,
            cfg,
            info: StepInfo::default(),
            done: false,
        };
        w.touch(w.state.agent);
        w
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn layout(&self) -> &GridState {
        &self.layout
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn obs_len(&self) -> usize {
        self.cfg.observation.len(self.cfg.width, self.cfg.height)
    }

    pub fn observe(&self) -> Observation {
        encode_observation(&self.state, self.cfg.observation, &self.task.palette_perm)
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Observation {
        self.state = self.layout.clone();
        let starts = self.layout.cells_of(Tile::Normal);
        let s = starts[rng.random_range(0..starts.len())];
        self.state.agent = (s % self.layout.width, s / self.layout.width);
        self.state.energy = self.cfg.initial_energy;
        self.info = StepInfo::default();
        self.done = false;
        self.touch(self.state.agent);
        self.observe()
    }

    fn touch(&mut self, (x, y): (usize, usize)) {
        let class = self.state.visible_tile(x, y).metric_class();
        self.info.touched |= 1 << class;
    }

    fn passable(&self, (x, y): (usize, usize)) -> bool {
        match self.state.tile(x, y) {
            Tile::Wall => false,
            Tile::Lock => self.state.keys_held.contains(&0),
            _ => true,
        }
    }

    /// Next cell in direction `d`, or `None` when blocked (the blocking cell
    /// still counts as touched).
    fn advance(&mut self, from: (usize, usize), d: (i64, i64)) -> Option<(usize, usize)> {
        let to = self.state.offset(from, d)?;
        if self.passable(to) {
            Some(to)
        } else {
            self.touch(to);
            None
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let d = direction(self.task.dynamics_perm[action]);
        let mut reward = 0.0;
        if self.state.energy > 0 {
            if let Some(mut pos) = self.advance(self.state.agent, d) {
                self.state.energy -= 1;
                self.touch(pos);
                let mut slides = 0;
                while self.state.tile(pos.0, pos.1) == Tile::Ice {
                    slides += 1;
                    assert!(slides <= self.state.width.max(self.state.height), "ice slide did not terminate");
                    match self.advance(pos, d) {
                        Some(next) => {
                            pos = next;
                            self.touch(pos);
                        }
                        None => break,
                    }
                }
                if self.state.tile(pos.0, pos.1) == Tile::Teleporter {
                    let here = self.state.index(pos.0, pos.1);
                    if let Some(&other) = self.state.cells_of(Tile::Teleporter).iter().find(|&&i| i != here) {
                        pos = (other % self.state.width, other / self.state.width);
                    }
                }
                self.state.agent = pos;
                reward = self.land(pos);
            }
        }
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done: self.done,
            info: self.info,
        })
    }

    fn land(&mut self, (x, y): (usize, usize)) -> f64 {
        let i = self.state.index(x, y);
        match self.state.visible_tile(x, y) {
            Tile::Goal => {
                self.state.goals_taken.insert(i);
                self.info.goals_reached += 1;
                return 1.0;
            }
            Tile::Key => {
                self.state.keys_held.insert(0);
            }
            Tile::Energy => {
                self.state.energy_taken.insert(i);
                self.state.energy += self.cfg.energy_refill;
            }
            Tile::Death => {
                self.info.deaths += 1;
                self.done = true;
            }
            _ => {}
        }
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Family, IDENTITY_DYNAMICS, IDENTITY_PALETTE};

    fn task() -> TaskSpec {
        TaskSpec {
            family: Family::Krazy,
            layout_seed: 0,
            palette_perm: IDENTITY_PALETTE,
            dynamics_perm: IDENTITY_DYNAMICS,
            horizon: 64,
        }
    }

    #[test]
    fn default_layout_has_configured_counts() {
        let cfg = KrazyConfig::default();
        let g = generate_krazy_layout(9, &cfg).unwrap();
        assert_eq!(g.cells_of(Tile::Goal).len(), 3);
        assert_eq!(g.cells_of(Tile::Teleporter).len(), 2);
        assert_eq!(g.cells_of(Tile::Normal).len(), 400 - 28);
    }

    #[test]
    fn overfull_board_is_a_layout_fault() {
        let cfg = KrazyConfig { width: 2, height: 2, ..KrazyConfig::default() };
        assert_eq!(generate_krazy_layout(1, &cfg), Err(EnvError::LayoutFault { seed: 1 }));
    }

    #[test]
    fn reset_starts_on_normal_cell_with_full_energy() {
        let mut w = KrazyWorld::new(task(), KrazyConfig::default()).unwrap();
        let mut r = rng::seeded(0);
        for _ in 0..20 {
            w.reset(&mut r);
            let (x, y) = w.state().agent;
            assert_eq!(w.state().tile(x, y), Tile::Normal);
            assert_eq!(w.state().energy, 10);
        }
    }
}
