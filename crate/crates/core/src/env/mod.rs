//! Deterministic, partially observable grid environments.

pub mod boxpush;
pub mod grid;
pub mod nav;

use std::collections::BTreeSet;

use crate::error::{Error, Result};

pub use boxpush::{BpAction, BpEnv, BpSpec, BpState, BpTerminalCause};
pub use grid::{Cell, GridSpec};
pub use nav::{NavAction, NavEnv, NavState, TerminalCause};

/// Compass direction; also the movement actions' order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Up => 0,
            Direction::Down => 1,
            Direction::Left => 2,
            Direction::Right => 3,
        }
    }
}

/// What a margin query needs from the environment at one state: either the
/// set of actions that must not be taken, or the single action that must be.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MarginInputs {
    UnsafeSet(BTreeSet<usize>),
    Required(usize),
}

/// Navigation: the undesired behavior is choosing an action that collides.
pub fn desired_margin_inputs_nav(spec: &GridSpec, state: &NavState) -> Result<MarginInputs> {
    if state.terminal.is_some() {
        return Err(Error::MarginUndefined(
            "navigation margin queries need a non-terminal state".into(),
        ));
    }
    let unsafe_set = nav::unsafe_actions(spec, state)
        .into_iter()
        .map(|a| a.index())
        .collect();
    Ok(MarginInputs::UnsafeSet(unsafe_set))
}

/// Box pushing: when an agent stands in front of the box, the desired joint
/// behavior requires it to push. Undefined anywhere else.
pub fn desired_margin_inputs_bp(state: &BpState, agent: usize) -> Result<MarginInputs> {
    if state.terminal.is_some() {
        return Err(Error::MarginUndefined(
            "box-pushing margin queries need a non-terminal state".into(),
        ));
    }
    if !state.agent_faces_box(agent) {
        return Err(Error::MarginUndefined(format!(
            "agent {agent} is not in front of the box; the required-action property is only defined there"
        )));
    }
    Ok(MarginInputs::Required(BpAction::Push.index()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nav_margin_matches_unsafe_actions() {
        let spec = GridSpec::generate(8, 8, 3).unwrap();
        let env = NavEnv::new(spec.clone());
        let (state, _) = env.reset();
        let inputs = desired_margin_inputs_nav(&spec, &state).unwrap();
        let direct: BTreeSet<usize> = nav::unsafe_actions(&spec, &state)
            .into_iter()
            .map(|a| a.index())
            .collect();
        assert_eq!(inputs, MarginInputs::UnsafeSet(direct));
    }

    #[test]
    fn bp_margin_requires_front_of_box() {
        let env = BpEnv::new(10, 10, 0);
        let (state, _) = env.reset();
        // agents start at the bottom corners, not in front of the box
        assert!(desired_margin_inputs_bp(&state, 0).is_err());

        let staged = env.state_at_push_positions();
        assert_eq!(
            desired_margin_inputs_bp(&staged, 0).unwrap(),
            MarginInputs::Required(BpAction::Push.index())
        );
        assert_eq!(
            desired_margin_inputs_bp(&staged, 1).unwrap(),
            MarginInputs::Required(BpAction::Push.index())
        );
    }
}
