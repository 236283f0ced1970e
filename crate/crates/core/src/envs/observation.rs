//! Basis-vector observation encoding.
//!
//! Every cell contributes a block of [`CHANNELS`] floats. Channels 0..8 hold
//! the special tile types in the order goal, ice, death, wall, lock, key,
//! teleporter, energy, relabelled through the task's palette permutation
//! (tile channel `c` is written to `palette[c]`). Channel 8 marks the agent.
//! Normal cells encode as all zeros and the agent's own cell shows only the
//! agent channel. Cells outside the board encode as wall.

use serde::{Deserialize, Serialize};

use super::grid::{GridState, Tile};

pub const CHANNELS: usize = 9;
pub const AGENT_CHANNEL: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ObsMode {
    #[default]
    #[serde(rename = "local3x3")]
    Local3x3,
    #[serde(rename = "global")]
    Global,
}

impl ObsMode {
    pub fn len(self, width: usize, height: usize) -> usize {
        match self {
            ObsMode::Local3x3 => 9 * CHANNELS,
            ObsMode::Global => width * height * CHANNELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub data: Vec<f64>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn write_tile(block: &mut [f64], tile: Tile, palette: &[usize; 8]) {
    if let Some(c) = tile.channel() {
        block[palette[c]] = 1.0;
    }
}

pub fn encode_observation(grid: &GridState, mode: ObsMode, palette: &[usize; 8]) -> Observation {
    let mut data = vec![0.0; mode.len(grid.width, grid.height)];
    match mode {
        ObsMode::Local3x3 => {
            let mut k = 0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let block = &mut data[k * CHANNELS..(k + 1) * CHANNELS];
                    match grid.offset(grid.agent, (dx, dy)) {
                        None => write_tile(block, Tile::Wall, palette),
                        Some(p) if p == grid.agent => block[AGENT_CHANNEL] = 1.0,
                        Some((x, y)) => write_tile(block, grid.visible_tile(x, y), palette),
                    }
                    k += 1;
                }
            }
        }
        ObsMode::Global => {
            for y in 0..grid.height {
                for x in 0..grid.width {
                    let k = grid.index(x, y);
                    let block = &mut data[k * CHANNELS..(k + 1) * CHANNELS];
                    if (x, y) == grid.agent {
                        block[AGENT_CHANNEL] = 1.0;
                    } else {
                        write_tile(block, grid.visible_tile(x, y), palette);
                    }
                }
            }
        }
    }
    Observation { data }
}
