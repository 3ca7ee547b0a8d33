//! Tile grid levels and the partially observable episode simulator.

mod distance;
mod env;
mod io;

pub use distance::DistanceField;
pub use env::{max_steps, observe, solvable, EnvState, GridEnv, StepResult};
pub use io::{
    parse_level_set, parse_pattern, read_records, render_level_set, write_records, LevelRecord,
    RawGrid,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid level `{id}`: {reason}")]
    InvalidLevel { id: String, reason: String },
    #[error("step called on a finished episode")]
    SteppedAfterDone,
    #[error("malformed level text at line {line}: {reason}")]
    MalformedText { line: usize, reason: String },
}

/// Cell contents. Codes are the on-disk digit representation and must not be
/// reordered.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[repr(u8)]
pub enum TileType {
    Empty = 0,
    Wall = 1,
    Moss = 2,
    Lava = 3,
    Goal = 4,
    Start = 5,
    OutOfBounds = 6,
}

impl TileType {
    pub const COUNT: usize = 7;

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<TileType> {
        use TileType::*;
        Some(match code {
            0 => Empty,
            1 => Wall,
            2 => Moss,
            3 => Lava,
            4 => Goal,
            5 => Start,
            6 => OutOfBounds,
            _ => return None,
        })
    }

    /// The agent can stand on Empty, Moss, Start and Goal cells only.
    pub fn navigable(self) -> bool {
        matches!(
            self,
            TileType::Empty | TileType::Moss | TileType::Start | TileType::Goal
        )
    }
}

/// Agent facing. Turning left cycles N→W→S→E; row grows downward, so North
/// is (-1, 0).
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Heading {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn index(self) -> usize {
        self as usize
    }

    /// (d_row, d_col) of one step ahead.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Heading::North => (-1, 0),
            Heading::East => (0, 1),
            Heading::South => (1, 0),
            Heading::West => (0, -1),
        }
    }

    pub fn left(self) -> Heading {
        Heading::ALL[(self.index() + 3) % 4]
    }

    pub fn right(self) -> Heading {
        Heading::ALL[(self.index() + 1) % 4]
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
}

impl Action {
    pub const COUNT: usize = 3;
    pub const ALL: [Action; 3] = [Action::TurnLeft, Action::TurnRight, Action::Forward];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Outcome {
    InProgress,
    Success,
    LavaDeath,
    Timeout,
}

/// One level: a row-major tile grid with exactly one Start and one Goal.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct LevelParams {
    pub width: usize,
    pub height: usize,
    pub grid: Vec<TileType>,
    pub id: String,
}

impl LevelParams {
    pub fn new(id: impl Into<String>, width: usize, height: usize, grid: Vec<TileType>) -> Self {
        LevelParams { width, height, grid, id: id.into() }
    }

    /// Builds a level from rows of digit characters, e.g. `["50", "04"]`.
    pub fn from_digit_rows(id: impl Into<String>, rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let grid = rows
            .iter()
            .flat_map(|r| r.bytes())
            .map(|b| TileType::from_code(b - b'0').expect("digit row holds tile codes"))
            .collect();
        LevelParams { width, height, grid, id: id.into() }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let fail = |reason: String| GridError::InvalidLevel { id: self.id.clone(), reason };
        if self.width == 0 || self.height == 0 {
            return Err(fail("zero-sized grid".into()));
        }
        if self.grid.len() != self.width * self.height {
            return Err(fail(format!(
                "grid has {} cells, expected {}",
                self.grid.len(),
                self.width * self.height
            )));
        }
        if self.grid.iter().any(|&t| t == TileType::OutOfBounds) {
            return Err(fail("OutOfBounds tile stored inside the grid".into()));
        }
        let starts = self.grid.iter().filter(|&&t| t == TileType::Start).count();
        let goals = self.grid.iter().filter(|&&t| t == TileType::Goal).count();
        if starts != 1 || goals != 1 {
            return Err(fail(format!("{starts} Start and {goals} Goal cells")));
        }
        Ok(())
    }

    /// Tile at (row, col); anything outside the grid reads as OutOfBounds.
    pub fn tile(&self, row: i64, col: i64) -> TileType {
        if row < 0 || col < 0 || row >= self.height as i64 || col >= self.width as i64 {
            TileType::OutOfBounds
        } else {
            self.grid[row as usize * self.width + col as usize]
        }
    }

    pub fn set_tile(&mut self, row: usize, col: usize, tile: TileType) {
        self.grid[row * self.width + col] = tile;
    }

    pub fn find_unique(&self, tile: TileType) -> Option<(usize, usize)> {
        let mut found = None;
        for (i, &t) in self.grid.iter().enumerate() {
            if t == tile {
                if found.is_some() {
                    return None;
                }
                found = Some((i / self.width, i % self.width));
            }
        }
        found
    }

    pub fn start_pos(&self) -> Option<(usize, usize)> {
        self.find_unique(TileType::Start)
    }

    pub fn goal_pos(&self) -> Option<(usize, usize)> {
        self.find_unique(TileType::Goal)
    }

    pub fn cells(&self) -> impl Iterator<Item = ((usize, usize), TileType)> + '_ {
        let width = self.width;
        self.grid
            .iter()
            .enumerate()
            .map(move |(i, &t)| ((i / width, i % width), t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for code in 0..7u8 {
            assert_eq!(TileType::from_code(code).unwrap().code(), code);
        }
        assert!(TileType::from_code(7).is_none());
    }

    #[test]
    fn navigable_set() {
        use TileType::*;
        for t in [Empty, Moss, Start, Goal] {
            assert!(t.navigable());
        }
        for t in [Wall, Lava, OutOfBounds] {
            assert!(!t.navigable());
        }
    }

    #[test]
    fn turning_cycles() {
        assert_eq!(Heading::North.left(), Heading::West);
        assert_eq!(Heading::West.left(), Heading::South);
        assert_eq!(Heading::South.left(), Heading::East);
        assert_eq!(Heading::East.left(), Heading::North);
        for h in Heading::ALL {
            assert_eq!(h.left().right(), h);
        }
    }

    #[test]
    fn out_of_bounds_reads() {
        let level = LevelParams::from_digit_rows("t", &["50", "04"]);
        assert_eq!(level.tile(-1, 0), TileType::OutOfBounds);
        assert_eq!(level.tile(0, 2), TileType::OutOfBounds);
        assert_eq!(level.tile(1, 1), TileType::Goal);
    }

    #[test]
    fn validate_counts_start_goal() {
        let ok = LevelParams::from_digit_rows("t", &["50", "04"]);
        assert!(ok.validate().is_ok());
        let two_goals = LevelParams::from_digit_rows("t", &["54", "04"]);
        assert!(matches!(
            two_goals.validate(),
            Err(GridError::InvalidLevel { .. })
        ));
        let no_start = LevelParams::from_digit_rows("t", &["00", "04"]);
        assert!(no_start.validate().is_err());
    }
}
