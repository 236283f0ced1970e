//! Tile grid shared by Krazy World and the mazes, plus its text dump format.
//!
//! Text format: one line per row, top row first, one character per cell.
//!
//! | char | tile       |
//! |------|------------|
//! | `.`  | normal     |
//! | `G`  | goal       |
//! | `I`  | ice        |
//! | `D`  | death      |
//! | `#`  | wall       |
//! | `L`  | lock       |
//! | `K`  | key        |
//! | `T`  | teleporter |
//! | `E`  | energy     |
//! | `A`  | agent standing on a normal cell |

use std::collections::BTreeSet;

use super::EnvError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tile {
    Normal,
    Goal,
    Ice,
    Death,
    Wall,
    Lock,
    Key,
    Teleporter,
    Energy,
}

impl Tile {
    pub const SPECIAL: [Tile; 8] = [
        Tile::Goal,
        Tile::Ice,
        Tile::Death,
        Tile::Wall,
        Tile::Lock,
        Tile::Key,
        Tile::Teleporter,
        Tile::Energy,
    ];

    /// Observation channel before palette permutation; `None` for normal cells.
    pub fn channel(self) -> Option<usize> {
        Tile::SPECIAL.iter().position(|&t| t == self)
    }

    /// Class used by the tile-fraction metric. Lock and key share a class so
    /// that normal tiles count and the total stays at eight.
    pub fn metric_class(self) -> usize {
        match self {
            Tile::Normal => 0,
            Tile::Goal => 1,
            Tile::Ice => 2,
            Tile::Death => 3,
            Tile::Wall => 4,
            Tile::Lock | Tile::Key => 5,
            Tile::Teleporter => 6,
            Tile::Energy => 7,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Tile::Normal => '.',
            Tile::Goal => 'G',
            Tile::Ice => 'I',
            Tile::Death => 'D',
            Tile::Wall => '#',
            Tile::Lock => 'L',
            Tile::Key => 'K',
            Tile::Teleporter => 'T',
            Tile::Energy => 'E',
        }
    }

    pub fn from_char(c: char) -> Option<Tile> {
        Some(match c {
            '.' | 'A' => Tile::Normal,
            'G' => Tile::Goal,
            'I' => Tile::Ice,
            'D' => Tile::Death,
            '#' => Tile::Wall,
            'L' => Tile::Lock,
            'K' => Tile::Key,
            'T' => Tile::Teleporter,
            'E' => Tile::Energy,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridState {
    pub width: usize,
    pub height: usize,
    pub tiles: Vec<Tile>,
    pub agent: (usize, usize),
    pub energy: u32,
    pub keys_held: BTreeSet<u8>,
    pub goals_taken: BTreeSet<usize>,
    pub energy_taken: BTreeSet<usize>,
}

impl GridState {
    pub fn new(width: usize, height: usize, tiles: Vec<Tile>) -> Self {
        assert_eq!(tiles.len(), width * height, "tile count does not match grid size");
        GridState {
            width,
            height,
            tiles,
            agent: (0, 0),
            energy: 0,
            keys_held: BTreeSet::new(),
            goals_taken: BTreeSet::new(),
            energy_taken: BTreeSet::new(),
        }
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn tile(&self, x: usize, y: usize) -> Tile {
        self.tiles[self.index(x, y)]
    }

    /// Tile as currently seen: collected goals, keys and energy squares look
    /// like normal cells.
    pub fn visible_tile(&self, x: usize, y: usize) -> Tile {
        let i = self.index(x, y);
        match self.tiles[i] {
            Tile::Goal if self.goals_taken.contains(&i) => Tile::Normal,
            Tile::Energy if self.energy_taken.contains(&i) => Tile::Normal,
            Tile::Key if self.keys_held.contains(&0) => Tile::Normal,
            t => t,
        }
    }

    /// Neighbour in direction `(dx, dy)`, or `None` off the board.
    pub fn offset(&self, (x, y): (usize, usize), (dx, dy): (i64, i64)) -> Option<(usize, usize)> {
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        (nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height)
            .then_some((nx as usize, ny as usize))
    }

    pub fn cells_of(&self, tile: Tile) -> Vec<usize> {
        (0..self.tiles.len()).filter(|&i| self.tiles[i] == tile).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if (x, y) == self.agent {
                    out.push('A');
                } else {
                    out.push(self.visible_tile(x, y).to_char());
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text format. The agent starts on the `A` cell (or the
    /// top-left cell when none is marked) with the given energy.
    pub fn from_text(text: &str, energy: u32) -> Result<GridState, EnvError> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if height == 0 || width == 0 {
            return Err(EnvError::Parse("empty grid".into()));
        }
        let mut tiles = Vec::with_capacity(width * height);
        let mut agent = None;
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(EnvError::Parse(format!("row {y} has a different width")));
            }
            for (x, c) in row.chars().enumerate() {
                let tile = Tile::from_char(c)
                    .ok_or_else(|| EnvError::Parse(format!("unknown tile '{c}' at ({x}, {y})")))?;
                if c == 'A' {
                    agent = Some((x, y));
                }
                tiles.push(tile);
            }
        }
        let mut grid = GridState::new(width, height, tiles);
        grid.agent = agent.unwrap_or((0, 0));
        grid.energy = energy;
        Ok(grid)
    }
}
