//! Two-agent cooperative box pushing. A wide box sits near the center; it
//! moves only when both agents push it simultaneously from the two cells on
//! its non-goal side, and a push slides it all the way to the wall (the goal
//! row). Each agent only sees the one cell directly in front of it.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

use super::grid::Cell;
use super::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BpAction {
    Move(Direction),
    /// Shortest-path macro that places the agent on its designated push cell.
    GotoBox,
    Push,
}

impl BpAction {
    pub const COUNT: usize = 6;

    pub const ALL: [BpAction; 6] = [
        BpAction::Move(Direction::Up),
        BpAction::Move(Direction::Down),
        BpAction::Move(Direction::Left),
        BpAction::Move(Direction::Right),
        BpAction::GotoBox,
        BpAction::Push,
    ];

    pub fn index(self) -> usize {
        match self {
            BpAction::Move(d) => d.index(),
            BpAction::GotoBox => 4,
            BpAction::Push => 5,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        BpAction::ALL
            .get(i)
            .copied()
            .ok_or(Error::InvalidAction(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentPose {
    pub cell: Cell,
    pub facing: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BpTerminalCause {
    Goal,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BpState {
    pub agents: [AgentPose; 2],
    pub box_cells: [Cell; 2],
    pub steps: u32,
    pub terminal: Option<BpTerminalCause>,
}

impl BpState {
    pub fn front_cell(&self, agent: usize) -> Cell {
        self.agents[agent].cell.step(self.agents[agent].facing)
    }

    pub fn agent_faces_box(&self, agent: usize) -> bool {
        self.box_cells.contains(&self.front_cell(agent))
    }

    fn occupied_by_entity(&self, c: Cell) -> bool {
        self.box_cells.contains(&c) || self.agents.iter().any(|a| a.cell == c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpSpec {
    pub width: usize,
    pub height: usize,
    pub box_start: [Cell; 2],
    pub goal_cells: [Cell; 2],
    pub agent_starts: [Cell; 2],
    pub seed: u64,
}

/// Observation: one-hot contents of the cell in front.
pub const BP_OBS_DIM: usize = 5; // free, wall, box, agent, goal
pub const BP_STATE_DIM: usize = 8;

pub const BP_STEP_REWARD: f64 = -0.01;
pub const BP_GOAL_REWARD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpEnv {
    pub spec: BpSpec,
    pub horizon: u32,
}

impl BpEnv {
    pub fn new(width: usize, height: usize, seed: u64) -> Self {
        assert!(width >= 4 && height >= 4, "box pushing needs at least 4x4");
        let bx = width as i32 / 2 - 1;
        let by = height as i32 / 2;
        let box_start = [Cell::new(bx, by), Cell::new(bx + 1, by)];
        let spec = BpSpec {
            width,
            height,
            box_start,
            goal_cells: [Cell::new(bx, 0), Cell::new(bx + 1, 0)],
            agent_starts: [Cell::new(0, height as i32 - 1), Cell::new(width as i32 - 1, height as i32 - 1)],
            seed,
        };
        BpEnv {
            spec,
            horizon: 4 * (width + height) as u32,
        }
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.spec.width && (c.y as usize) < self.spec.height
    }

    /// The two push cells: directly below the box, one per box cell.
    pub fn push_positions(&self, state: &BpState) -> [Cell; 2] {
        [
            Cell::new(state.box_cells[0].x, state.box_cells[0].y + 1),
            Cell::new(state.box_cells[1].x, state.box_cells[1].y + 1),
        ]
    }

    pub fn reset(&self) -> (BpState, [Vec<f64>; 2]) {
        let state = BpState {
            agents: [
                AgentPose {
                    cell: self.spec.agent_starts[0],
                    facing: Direction::Up,
                },
                AgentPose {
                    cell: self.spec.agent_starts[1],
                    facing: Direction::Up,
                },
            ],
            box_cells: self.spec.box_start,
            steps: 0,
            terminal: None,
        };
        let obs = [self.observe(&state, 0), self.observe(&state, 1)];
        (state, obs)
    }

    /// The canonical verification configuration: both agents staged on the
    /// push cells, facing the box.
    pub fn state_at_push_positions(&self) -> BpState {
        let (base, _) = self.reset();
        let push = self.push_positions(&base);
        BpState {
            agents: [
                AgentPose {
                    cell: push[0],
                    facing: Direction::Up,
                },
                AgentPose {
                    cell: push[1],
                    facing: Direction::Up,
                },
            ],
            box_cells: base.box_cells,
            steps: 2,
            terminal: None,
        }
    }

    /// Joint transition: both agents act simultaneously, shared reward.
    pub fn step(
        &self,
        state: &BpState,
        actions: [BpAction; 2],
    ) -> Result<(BpState, f64, [Vec<f64>; 2])> {
        if state.terminal.is_some() {
            return Err(Error::TerminalStep);
        }
        let mut next = *state;
        next.steps += 1;

        let push_cells = self.push_positions(state);
        let on_push_cells = {
            let set: BTreeSet<Cell> = state.agents.iter().map(|a| a.cell).collect();
            set == push_cells.iter().copied().collect()
        };
        let both_push = actions.iter().all(|a| *a == BpAction::Push);
        let both_facing = (0..2).all(|i| state.agent_faces_box(i));

        if on_push_cells && both_push && both_facing {
            // coordinated push: the box slides away from the agents until the wall
            next.box_cells = [
                Cell::new(state.box_cells[0].x, 0),
                Cell::new(state.box_cells[1].x, 0),
            ];
        } else {
            // resolve individual actions, agent 0 first
            for i in 0..2 {
                match actions[i] {
                    BpAction::Move(dir) => {
                        next.agents[i].facing = dir;
                        let target = next.agents[i].cell.step(dir);
                        if self.in_bounds(target) && !next.occupied_by_entity(target) {
                            next.agents[i].cell = target;
                        }
                    }
                    BpAction::GotoBox => {
                        let dest = self.push_positions(&next)[i];
                        let other = next.agents[1 - i].cell;
                        if next.agents[i].cell == dest {
                            next.agents[i].facing = Direction::Up;
                        } else if other != dest
                            && self.macro_path_exists(&next, next.agents[i].cell, dest, other)
                        {
                            next.agents[i].cell = dest;
                            next.agents[i].facing = Direction::Up;
                        }
                    }
                    BpAction::Push => {
                        // uncoordinated push: the box does not move
                    }
                }
            }
        }

        let in_goal = next.box_cells == self.spec.goal_cells;
        let reward = if in_goal {
            next.terminal = Some(BpTerminalCause::Goal);
            BP_GOAL_REWARD
        } else {
            if next.steps >= self.horizon {
                next.terminal = Some(BpTerminalCause::Timeout);
            }
            BP_STEP_REWARD
        };
        let obs = [self.observe(&next, 0), self.observe(&next, 1)];
        Ok((next, reward, obs))
    }

    /// BFS over free cells, avoiding the box and the other agent.
    pub fn macro_path_exists(&self, state: &BpState, from: Cell, to: Cell, other: Cell) -> bool {
        let blocked = |c: Cell| !self.in_bounds(c) || state.box_cells.contains(&c) || c == other;
        if blocked(to) {
            return false;
        }
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(c) = queue.pop_front() {
            if c == to {
                return true;
            }
            for dir in Direction::ALL {
                let n = c.step(dir);
                if !blocked(n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        false
    }

    /// BFS shortest-path length, used by tests as the macro oracle.
    pub fn macro_path_len(&self, state: &BpState, from: Cell, to: Cell, other: Cell) -> Option<u32> {
        let blocked = |c: Cell| !self.in_bounds(c) || state.box_cells.contains(&c) || c == other;
        if blocked(to) {
            return None;
        }
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([(from, 0u32)]);
        while let Some((c, d)) = queue.pop_front() {
            if c == to {
                return Some(d);
            }
            for dir in Direction::ALL {
                let n = c.step(dir);
                if !blocked(n) && seen.insert(n) {
                    queue.push_back((n, d + 1));
                }
            }
        }
        None
    }

    /// One-hot contents of the cell the agent faces:
    /// free, wall, box, other agent, goal.
    pub fn observe(&self, state: &BpState, agent: usize) -> Vec<f64> {
        let front = state.front_cell(agent);
        let mut obs = vec![0.0; BP_OBS_DIM];
        let category = if !self.in_bounds(front) {
            1
        } else if state.box_cells.contains(&front) {
            2
        } else if state.agents[1 - agent].cell == front {
            3
        } else if self.spec.goal_cells.contains(&front) {
            4
        } else {
            0
        };
        obs[category] = 1.0;
        obs
    }

    /// Normalized global-state encoding (CTDE training side and classifier
    /// input): both agent cells then both box cells.
    pub fn state_encoding(&self, state: &BpState) -> Vec<f64> {
        let w = (self.spec.width - 1) as f64;
        let h = (self.spec.height - 1) as f64;
        vec![
            state.agents[0].cell.x as f64 / w,
            state.agents[0].cell.y as f64 / h,
            state.agents[1].cell.x as f64 / w,
            state.agents[1].cell.y as f64 / h,
            state.box_cells[0].x as f64 / w,
            state.box_cells[0].y as f64 / h,
            state.box_cells[1].x as f64 / w,
            state.box_cells[1].y as f64 / h,
        ]
    }

    pub fn n_actions(&self) -> usize {
        BpAction::COUNT
    }

    pub fn obs_dim(&self) -> usize {
        BP_OBS_DIM
    }
}
