//! Exhaustive hidden-state enumeration for tiny instances: the ground-truth
//! feasible set, produced by depth-first search over all action sequences up
//! to the horizon.
//!
//! Hidden states are deduplicated on a fine quantization grid; a visited
//! (cell, hidden) configuration is only re-expanded when reached again with
//! strictly more remaining horizon, which keeps the search exact over
//! configurations while pruning the exponential prefix tree.

use std::collections::{BTreeMap, HashMap};

use crate::env::nav::{observe, state_encoding, NavEnv};
use crate::env::{Direction, MarginInputs};
use crate::error::{Error, Result};
use crate::feasibility::{FeasibilityDataset, FeasiblePair, PairSource};
use crate::nn::Policy;
use crate::rl::state_key_of;
use crate::verifier::encode_margin;
use crate::verifier::oracle::FeasibilityOracle;

#[derive(Debug, Clone)]
pub struct EnumerationConfig {
    /// Abort once this many distinct configurations have been stored.
    pub cap: usize,
    /// Hidden-state quantization grid for configuration identity.
    pub quantum: f64,
    /// Override the environment horizon (None keeps it).
    pub horizon: Option<u32>,
}

impl Default for EnumerationConfig {
    fn default() -> Self {
        EnumerationConfig {
            cap: 10_000_000,
            quantum: 1e-9,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StateHistories {
    pub state_enc: Vec<f64>,
    pub cell: (i32, i32),
    pub hiddens: Vec<Vec<f64>>,
}

/// Every (state, pre-decision hidden) configuration reachable by some action
/// sequence under the policy, keyed by the state encoding.
#[derive(Debug, Clone)]
pub struct ExactHistorySet {
    pub hidden_dim: usize,
    pub quantum: f64,
    pub horizon: u32,
    pub states: BTreeMap<u64, StateHistories>,
    pub total_pairs: usize,
}

fn quantize(h: &[f64], quantum: f64) -> Vec<i64> {
    h.iter().map(|v| (v / quantum).round() as i64).collect()
}

pub fn exact_history_enumeration(
    env: &NavEnv,
    policy: &Policy,
    cfg: &EnumerationConfig,
) -> Result<ExactHistorySet> {
    let horizon = cfg.horizon.unwrap_or(env.horizon);
    let env = NavEnv {
        spec: env.spec.clone(),
        horizon,
    };
    let mut set = ExactHistorySet {
        hidden_dim: policy.hidden_dim(),
        quantum: cfg.quantum,
        horizon,
        states: BTreeMap::new(),
        total_pairs: 0,
    };
    // (cell, quantized hidden) -> fewest steps taken to reach it
    let mut memo: HashMap<(i32, i32, Vec<i64>), u32> = HashMap::new();

    let (start, _) = env.reset();
    let mut stack = vec![(start, policy.gru.zero_hidden())];
    while let Some((state, h)) = stack.pop() {
        let key = (state.cell.x, state.cell.y, quantize(&h, cfg.quantum));
        match memo.get_mut(&key) {
            Some(best_steps) if *best_steps <= state.steps => continue,
            Some(best_steps) => {
                // same configuration, more remaining horizon: expand again
                // but do not store a duplicate pair
                *best_steps = state.steps;
            }
            None => {
                memo.insert(key, state.steps);
                let state_key = state_key_of(&state_encoding(&env.spec, state.cell));
                let entry = set.states.entry(state_key).or_insert_with(|| StateHistories {
                    state_enc: state_encoding(&env.spec, state.cell),
                    cell: (state.cell.x, state.cell.y),
                    hiddens: Vec::new(),
                });
                entry.hiddens.push(h.clone());
                set.total_pairs += 1;
                if set.total_pairs > cfg.cap {
                    return Err(Error::EnumerationCap {
                        cap: cfg.cap,
                        depth: state.steps,
                    });
                }
            }
        }
        if horizon == 0 {
            continue;
        }
        let h_post = policy.gru.step(&h, &observe(&env.spec, state.cell))?;
        for dir in Direction::ALL {
            let (next, _, _) = env.step(&state, dir)?;
            if next.terminal.is_none() {
                stack.push((next, h_post.clone()));
            }
        }
    }
    Ok(set)
}

impl ExactHistorySet {
    pub fn histories_at(&self, state_key: u64) -> Option<&StateHistories> {
        self.states.get(&state_key)
    }

    /// Ground-truth violating fraction at one state: evaluate the margin on
    /// every enumerated hidden.
    pub fn violation_fraction(
        &self,
        state_key: u64,
        policy: &Policy,
        obs: &[f64],
        margin: &MarginInputs,
    ) -> Result<f64> {
        let entry = self
            .states
            .get(&state_key)
            .ok_or_else(|| Error::Dataset(format!("state key {state_key} not enumerated")))?;
        let mut violating = 0usize;
        for h in &entry.hiddens {
            let (q, _) = policy.forward(h, obs)?;
            if encode_margin(&q, margin)? <= 0.0 {
                violating += 1;
            }
        }
        Ok(violating as f64 / entry.hiddens.len() as f64)
    }

    /// Nearest-neighbor distance (L-infinity) from `h` to the enumerated
    /// hiddens of one state.
    pub fn nearest_distance(&self, state_key: u64, h: &[f64]) -> Option<f64> {
        self.states.get(&state_key).map(|entry| {
            entry
                .hiddens
                .iter()
                .map(|p| crate::tensor::linf_distance(p, h))
                .fold(f64::INFINITY, f64::min)
        })
    }

    /// Export in the dataset CSV format, all rows labeled feasible with
    /// source `exact`.
    pub fn to_dataset(&self, state_dim: usize) -> FeasibilityDataset {
        let mut ds = FeasibilityDataset::new(state_dim, self.hidden_dim);
        for (key, entry) in &self.states {
            for h in &entry.hiddens {
                ds.pairs.push(FeasiblePair {
                    state_enc: entry.state_enc.clone(),
                    state_key: *key,
                    hidden: h.clone(),
                    label: 1,
                    source: PairSource::Exact,
                });
            }
        }
        ds
    }
}

/// Ball-membership oracle around the enumerated hiddens of one state:
/// a candidate is feasible iff some enumerated hidden lies within `radius`
/// in L-infinity. Membership is a scan over the stored set; that cost is the
/// point of comparison with the learned classifier.
pub struct ExactSetOracle {
    points: Vec<f64>,
    dim: usize,
    radius: f64,
    label: String,
}

impl ExactSetOracle {
    pub fn for_state(set: &ExactHistorySet, state_key: u64, radius: f64) -> Result<Self> {
        let entry = set
            .states
            .get(&state_key)
            .ok_or_else(|| Error::Dataset(format!("state key {state_key} not enumerated")))?;
        let dim = set.hidden_dim;
        let mut points = Vec::with_capacity(entry.hiddens.len() * dim);
        for h in &entry.hiddens {
            points.extend_from_slice(h);
        }
        Ok(ExactSetOracle {
            points,
            dim,
            radius,
            label: format!(
                "exact-set({} hiddens at cell {:?}, radius {radius})",
                entry.hiddens.len(),
                entry.cell
            ),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn within(&self, h: &[f64]) -> bool {
        debug_assert_eq!(h.len(), self.dim);
        self.points.chunks_exact(self.dim).any(|p| {
            p.iter()
                .zip(h)
                .all(|(a, b)| (a - b).abs() <= self.radius)
        })
    }
}

impl FeasibilityOracle for ExactSetOracle {
    fn accepts(&self, _state_enc: &[f64], hidden: &[f64]) -> bool {
        self.within(hidden)
    }

    fn accepts_block(&self, _state_enc: &[f64], hiddens: &[f64], count: usize) -> Vec<bool> {
        use rayon::prelude::*;
        let dim = self.dim;
        const CHUNK: usize = 256;
        (0..count.div_ceil(CHUNK))
            .into_par_iter()
            .flat_map_iter(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(count);
                (lo..hi)
                    .map(|i| self.within(&hiddens[i * dim..(i + 1) * dim]))
                    .collect::<Vec<bool>>()
            })
            .collect()
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Cell, GridSpec};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn empty_2x2() -> NavEnv {
        NavEnv::new(GridSpec {
            width: 2,
            height: 2,
            obstacles: BTreeSet::new(),
            start: Cell::new(0, 0),
            goal: Cell::new(1, 1),
            seed: 0,
        })
    }

    fn small_policy(obs_dim: usize, hidden: usize) -> Policy {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        Policy::new(obs_dim, hidden, &[8], 4, &mut rng)
    }

    #[test]
    fn horizon_zero_enumerates_only_the_initial_pair() {
        let env = empty_2x2();
        let policy = small_policy(env.obs_dim(), 3);
        let cfg = EnumerationConfig {
            horizon: Some(0),
            ..EnumerationConfig::default()
        };
        let set = exact_history_enumeration(&env, &policy, &cfg).unwrap();
        assert_eq!(set.total_pairs, 1);
        let start_key = state_key_of(&state_encoding(&env.spec, env.spec.start));
        let entry = set.histories_at(start_key).unwrap();
        assert_eq!(entry.hiddens, vec![vec![0.0; 3]]);
    }

    #[test]
    fn two_by_two_horizon_two_matches_hand_count() {
        // decisions: t=0 at the start; t=1 at (1,0) and (0,1); every other
        // action sequence terminates (wall, goal or the horizon)
        let env = empty_2x2();
        let policy = small_policy(env.obs_dim(), 3);
        let cfg = EnumerationConfig {
            horizon: Some(2),
            ..EnumerationConfig::default()
        };
        let set = exact_history_enumeration(&env, &policy, &cfg).unwrap();
        assert_eq!(set.total_pairs, 3);
        assert!(set.total_pairs <= 4 + 16);
    }

    #[test]
    fn enumeration_cap_aborts_with_depth() {
        let env = NavEnv::new(GridSpec::generate(4, 4, 3).unwrap());
        let policy = small_policy(env.obs_dim(), 4);
        let cfg = EnumerationConfig {
            cap: 10,
            quantum: 1e-15,
            horizon: Some(12),
        };
        match exact_history_enumeration(&env, &policy, &cfg) {
            Err(Error::EnumerationCap { cap, .. }) => assert_eq!(cap, 10),
            other => panic!("expected cap abort, got {other:?}"),
        }
    }

    #[test]
    fn enumerated_hiddens_are_reproducible_from_action_sequences() {
        // every stored hidden must be reachable: spot-check by replaying
        // random action sequences and asserting their pre-decision hiddens
        // appear in the set (within the quantization grid)
        let env = empty_2x2();
        let policy = small_policy(env.obs_dim(), 3);
        let cfg = EnumerationConfig {
            horizon: Some(6),
            ..EnumerationConfig::default()
        };
        let set = exact_history_enumeration(&env, &policy, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let actions: Vec<usize> = (0..6).map(|_| rng.random_range(0..4)).collect();
            let ep = crate::feasibility::replay_nav_actions(&env, &policy, &actions).unwrap();
            for step in &ep.steps {
                let d = set
                    .nearest_distance(step.state_key, &step.h_before)
                    .expect("state must be enumerated");
                assert!(d <= 1e-9, "replayed hidden {d} away from the set");
            }
        }
    }

    #[test]
    fn exact_set_oracle_matches_linear_scan() {
        let env = empty_2x2();
        let policy = small_policy(env.obs_dim(), 3);
        let set = exact_history_enumeration(
            &env,
            &policy,
            &EnumerationConfig {
                horizon: Some(6),
                ..EnumerationConfig::default()
            },
        )
        .unwrap();
        let start_key = state_key_of(&state_encoding(&env.spec, env.spec.start));
        let oracle = ExactSetOracle::for_state(&set, start_key, 0.05).unwrap();
        let entry = set.histories_at(start_key).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..2000 {
            let h: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let scan = entry
                .hiddens
                .iter()
                .any(|p| crate::tensor::linf_distance(p, &h) <= 0.05);
            assert_eq!(oracle.accepts(&[], &h), scan);
        }
    }
}
