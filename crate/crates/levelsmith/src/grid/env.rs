//! Episode simulator: egocentric observations, three actions, sparse
//! time-discounted success reward.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::distance::bfs_navigable;
use super::{Action, GridError, Heading, LevelParams, Outcome, TileType};

/// Side length of the square observation window.
pub const VIEW: usize = 5;
/// Flat feature length of an encoded observation: one-hot tiles plus heading.
pub const OBS_LEN: usize = TileType::COUNT * VIEW * VIEW + 4;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct EnvState {
    pub agent_pos: (usize, usize),
    pub heading: Heading,
    pub t: u32,
    pub done: bool,
    pub outcome: Outcome,
}

/// Egocentric view: `window[a][l]` is the tile `a` cells ahead and `l - 2`
/// cells to the agent's right. The agent sits at `window[0][2]`.
#[derive(Clone, PartialEq, Debug)]
pub struct Observation {
    pub window: [[TileType; VIEW]; VIEW],
    pub heading_onehot: [f64; 4],
}

impl Observation {
    /// Flat features: 7 one-hot channels over the 5×5 window (channel-major),
    /// then the heading one-hot.
    pub fn encode(&self) -> Vec<f64> {
        let mut out = vec![0.0; OBS_LEN];
        for (a, row) in self.window.iter().enumerate() {
            for (l, &tile) in row.iter().enumerate() {
                let ch = tile.code() as usize;
                out[ch * VIEW * VIEW + a * VIEW + l] = 1.0;
            }
        }
        out[TileType::COUNT * VIEW * VIEW..].copy_from_slice(&self.heading_onehot);
        out
    }
}

/// Pure observation function of (level, position, heading).
pub fn observe(level: &LevelParams, pos: (usize, usize), heading: Heading) -> Observation {
    let ahead = heading.delta();
    let right = heading.right().delta();
    let mut window = [[TileType::OutOfBounds; VIEW]; VIEW];
    for (a, row) in window.iter_mut().enumerate() {
        for (l, cell) in row.iter_mut().enumerate() {
            let lat = l as i64 - 2;
            let r = pos.0 as i64 + a as i64 * ahead.0 + lat * right.0;
            let c = pos.1 as i64 + a as i64 * ahead.1 + lat * right.1;
            *cell = level.tile(r, c);
        }
    }
    let mut heading_onehot = [0.0; 4];
    heading_onehot[heading.index()] = 1.0;
    Observation { window, heading_onehot }
}

/// Episode step limit, scaling with layout area.
pub fn max_steps(level: &LevelParams) -> u32 {
    (2 * level.width * level.height) as u32
}

/// True iff a 4-connected path over navigable tiles joins Start and Goal.
pub fn solvable(level: &LevelParams) -> bool {
    let (Some(start), Some(goal)) = (level.start_pos(), level.goal_pos()) else {
        return false;
    };
    bfs_navigable(level, goal)[start.0 * level.width + start.1].is_some()
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub outcome: Outcome,
}

#[derive(Clone, Debug)]
pub struct GridEnv {
    level: LevelParams,
    state: EnvState,
    t_max: u32,
}

impl GridEnv {
    /// Places the agent on the Start cell facing a seed-chosen direction.
    pub fn reset(level: &LevelParams, seed: u64) -> Result<(GridEnv, Observation), GridError> {
        level.validate()?;
        let start = level.start_pos().expect("validate checked Start");
        let heading = Heading::ALL[ChaCha8Rng::seed_from_u64(seed).gen_range(0..4)];
        let state = EnvState {
            agent_pos: start,
            heading,
            t: 0,
            done: false,
            outcome: Outcome::InProgress,
        };
        let obs = observe(level, start, heading);
        let t_max = max_steps(level);
        Ok((GridEnv { level: level.clone(), state, t_max }, obs))
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn level(&self) -> &LevelParams {
        &self.level
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, GridError> {
        if self.state.done {
            return Err(GridError::SteppedAfterDone);
        }
        self.state.t += 1;
        let mut reward = 0.0;
        match action {
            Action::TurnLeft => self.state.heading = self.state.heading.left(),
            Action::TurnRight => self.state.heading = self.state.heading.right(),
            Action::Forward => {
                let (dr, dc) = self.state.heading.delta();
                let (r, c) = (
                    self.state.agent_pos.0 as i64 + dr,
                    self.state.agent_pos.1 as i64 + dc,
                );
                match self.level.tile(r, c) {
                    TileType::Wall | TileType::OutOfBounds => {}
                    TileType::Lava => {
                        // The agent never occupies the lava cell; the episode
                        // just ends where it stood.
                        self.state.done = true;
                        self.state.outcome = Outcome::LavaDeath;
                    }
                    _ => {
                        self.state.agent_pos = (r as usize, c as usize);
                        if self.level.tile(r, c) == TileType::Goal {
                            self.state.done = true;
                            self.state.outcome = Outcome::Success;
                            reward = 1.0 - 0.9 * (self.state.t as f64 / self.t_max as f64);
                        }
                    }
                }
            }
        }
        if !self.state.done && self.state.t >= self.t_max {
            self.state.done = true;
            self.state.outcome = Outcome::Timeout;
        }
        Ok(StepResult {
            obs: observe(&self.level, self.state.agent_pos, self.state.heading),
            reward,
            done: self.state.done,
            outcome: self.state.outcome,
        })
    }
}
