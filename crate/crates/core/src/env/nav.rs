//! Single-agent navigation: reach the goal without bumping into obstacles or
//! walls. The agent only ever sees the four adjacent cells.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

use super::grid::{Cell, GridSpec};
use super::Direction;

pub type NavAction = Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TerminalCause {
    Goal,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NavState {
    pub cell: Cell,
    pub steps: u32,
    pub terminal: Option<TerminalCause>,
}

/// Per-cell observation categories, one-hot per visible neighbor.
const CATEGORIES: usize = 4; // free, obstacle, goal, wall

/// Observation length for navigation: 4 neighbors x 4 categories.
pub const NAV_OBS_DIM: usize = 4 * CATEGORIES;

pub const STEP_REWARD: f64 = -0.01;
pub const GOAL_REWARD: f64 = 1.0;
pub const COLLISION_REWARD: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NavEnv {
    pub spec: GridSpec,
    pub horizon: u32,
}

impl NavEnv {
    /// Default horizon: 4 * (width + height) steps.
    pub fn new(spec: GridSpec) -> Self {
        let horizon = 4 * (spec.width + spec.height) as u32;
        NavEnv { spec, horizon }
    }

    pub fn reset(&self) -> (NavState, Vec<f64>) {
        let state = NavState {
            cell: self.spec.start,
            steps: 0,
            terminal: None,
        };
        (state, observe(&self.spec, state.cell))
    }

    /// Deterministic transition. The returned observation reflects the agent's
    /// cell after the move (the old cell when the move collided).
    pub fn step(&self, state: &NavState, action: NavAction) -> Result<(NavState, f64, Vec<f64>)> {
        if state.terminal.is_some() {
            return Err(Error::TerminalStep);
        }
        let target = state.cell.step(action);
        let steps = state.steps + 1;
        let (cell, reward, terminal) = if !self.spec.in_bounds(target) || self.spec.is_obstacle(target)
        {
            (state.cell, COLLISION_REWARD, Some(TerminalCause::Collision))
        } else if target == self.spec.goal {
            (target, GOAL_REWARD, Some(TerminalCause::Goal))
        } else if steps >= self.horizon {
            (target, STEP_REWARD, Some(TerminalCause::Timeout))
        } else {
            (target, STEP_REWARD, None)
        };
        let next = NavState {
            cell,
            steps,
            terminal,
        };
        Ok((next, reward, observe(&self.spec, cell)))
    }

    pub fn n_actions(&self) -> usize {
        4
    }

    pub fn obs_dim(&self) -> usize {
        NAV_OBS_DIM
    }
}

/// One-hot contents of the four adjacent cells, in action order
/// (up, down, left, right); categories: free, obstacle, goal, wall.
pub fn observe(spec: &GridSpec, cell: Cell) -> Vec<f64> {
    let mut obs = vec![0.0; NAV_OBS_DIM];
    for (i, dir) in Direction::ALL.iter().enumerate() {
        let n = cell.step(*dir);
        let category = if !spec.in_bounds(n) {
            3 // wall
        } else if spec.is_obstacle(n) {
            1
        } else if n == spec.goal {
            2
        } else {
            0
        };
        obs[i * CATEGORIES + category] = 1.0;
    }
    obs
}

/// Exactly the actions whose next cell is an obstacle or out of bounds.
pub fn unsafe_actions(spec: &GridSpec, state: &NavState) -> BTreeSet<NavAction> {
    Direction::ALL
        .into_iter()
        .filter(|d| {
            let n = state.cell.step(*d);
            !spec.in_bounds(n) || spec.is_obstacle(n)
        })
        .collect()
}

/// Normalized state encoding used as the classifier's `s` input.
pub fn state_encoding(spec: &GridSpec, cell: Cell) -> Vec<f64> {
    vec![
        cell.x as f64 / (spec.width - 1) as f64,
        cell.y as f64 / (spec.height - 1) as f64,
    ]
}

pub const NAV_STATE_DIM: usize = 2;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn empty_grid(w: usize, h: usize) -> GridSpec {
        GridSpec {
            width: w,
            height: h,
            obstacles: BTreeSet::new(),
            start: Cell::new(0, 0),
            goal: Cell::new(w as i32 - 1, h as i32 - 1),
            seed: 0,
        }
    }

    #[test]
    fn stepping_into_goal_terminates_with_reward_one() {
        let spec = empty_grid(4, 4);
        let env = NavEnv::new(spec);
        let state = NavState {
            cell: Cell::new(3, 2),
            steps: 5,
            terminal: None,
        };
        let (next, reward, _) = env.step(&state, Direction::Down).unwrap();
        assert_eq!(reward, GOAL_REWARD);
        assert_eq!(next.terminal, Some(TerminalCause::Goal));
        assert_eq!(next.cell, Cell::new(3, 3));
    }

    #[test]
    fn walking_into_the_wall_is_a_collision() {
        let env = NavEnv::new(empty_grid(4, 4));
        let (state, _) = env.reset();
        let (next, reward, _) = env.step(&state, Direction::Up).unwrap();
        assert_eq!(reward, COLLISION_REWARD);
        assert_eq!(next.terminal, Some(TerminalCause::Collision));
        assert_eq!(next.cell, state.cell);
    }

    #[test]
    fn terminal_states_cannot_step() {
        let env = NavEnv::new(empty_grid(4, 4));
        let (state, _) = env.reset();
        let (terminal, _, _) = env.step(&state, Direction::Up).unwrap();
        assert!(matches!(
            env.step(&terminal, Direction::Down),
            Err(Error::TerminalStep)
        ));
    }

    #[test]
    fn episodes_always_terminate_within_horizon() {
        let env = NavEnv::new(empty_grid(5, 5));
        let (mut state, _) = env.reset();
        let mut steps = 0;
        // oscillate right/left forever; the timeout must cut it
        loop {
            let dir = if steps % 2 == 0 {
                Direction::Right
            } else {
                Direction::Left
            };
            let (next, _, _) = env.step(&state, dir).unwrap();
            steps += 1;
            state = next;
            if state.terminal.is_some() {
                break;
            }
            assert!(steps <= env.horizon, "ran past the horizon");
        }
        assert_eq!(state.terminal, Some(TerminalCause::Timeout));
        assert_eq!(state.steps, env.horizon);
    }

    #[test]
    fn unsafe_actions_in_open_interior_is_empty() {
        let spec = empty_grid(5, 5);
        let state = NavState {
            cell: Cell::new(2, 2),
            steps: 0,
            terminal: None,
        };
        assert!(unsafe_actions(&spec, &state).is_empty());
    }

    #[test]
    fn unsafe_actions_top_left_corner_is_up_and_left() {
        let spec = empty_grid(5, 5);
        let state = NavState {
            cell: Cell::new(0, 0),
            steps: 0,
            terminal: None,
        };
        let set = unsafe_actions(&spec, &state);
        assert_eq!(
            set,
            BTreeSet::from([Direction::Up, Direction::Left])
        );
    }

    #[test]
    fn unsafe_actions_match_simulation_on_every_reachable_cell() {
        let spec = GridSpec::generate(8, 8, 21).unwrap();
        let env = NavEnv::new(spec.clone());
        for cell in spec.bfs_distances(spec.start) {
            if cell == spec.goal {
                continue;
            }
            let state = NavState {
                cell,
                steps: 0,
                terminal: None,
            };
            let expected: BTreeSet<NavAction> = Direction::ALL
                .into_iter()
                .filter(|d| {
                    let (next, _, _) = env.step(&state, *d).unwrap();
                    next.terminal == Some(TerminalCause::Collision)
                })
                .collect();
            assert_eq!(unsafe_actions(&spec, &state), expected, "cell {cell:?}");
        }
    }

    #[test]
    fn random_rollout_observations_match_recomputation() {
        let spec = GridSpec::generate(8, 8, 33).unwrap();
        let env = NavEnv::new(spec.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut state, mut obs) = env.reset();
        for _ in 0..10_000 {
            assert_eq!(obs, observe(&spec, state.cell));
            let action = Direction::ALL[rng.random_range(0..4)];
            match env.step(&state, action) {
                Ok((next, _, next_obs)) => {
                    if next.terminal.is_some() {
                        let (s, o) = env.reset();
                        state = s;
                        obs = o;
                    } else {
                        state = next;
                        obs = next_obs;
                    }
                }
                Err(_) => unreachable!("stepped a terminal state"),
            }
        }
    }

    #[test]
    fn observation_depends_only_on_the_local_neighborhood() {
        // two interior cells of an empty grid look identical
        let spec = empty_grid(8, 8);
        assert_eq!(
            observe(&spec, Cell::new(2, 2)),
            observe(&spec, Cell::new(4, 3))
        );
    }
}
