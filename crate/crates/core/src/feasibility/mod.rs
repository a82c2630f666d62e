//! The feasibility oracle pipeline: record (state, hidden-state) pairs under
//! the trained policy, synthesize negatives, and train/validate the
//! classifier that decides which hidden states are realizable.

pub mod classifier;

use std::collections::HashMap;

use rand::Rng;

use crate::env::boxpush::BpEnv;
use crate::env::nav::NavEnv;
use crate::error::{Error, Result};
use crate::nn::Policy;
use crate::rl::ctde::rollout_bp;
use crate::rl::drqn::rollout_nav;
use crate::rl::Episode;
use crate::rngstream::seeded_rng;
use crate::tensor::linf_distance;
use crate::textdoc::format_f64;

pub use classifier::{
    train_classifier, validate_classifier, ClassifierConfig, ClassifierReport,
    FeasibilityClassifier,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSource {
    Recorded,
    Mismatched,
    UniformNegative,
    Exact,
}

impl PairSource {
    pub fn name(self) -> &'static str {
        match self {
            PairSource::Recorded => "recorded",
            PairSource::Mismatched => "mismatched",
            PairSource::UniformNegative => "uniform-negative",
            PairSource::Exact => "exact",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "recorded" => Ok(PairSource::Recorded),
            "mismatched" => Ok(PairSource::Mismatched),
            "uniform-negative" => Ok(PairSource::UniformNegative),
            "exact" => Ok(PairSource::Exact),
            other => Err(Error::Dataset(format!("unknown pair source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeasiblePair {
    pub state_enc: Vec<f64>,
    pub state_key: u64,
    pub hidden: Vec<f64>,
    pub label: u8,
    pub source: PairSource,
}

#[derive(Debug, Clone)]
pub struct FeasibilityDataset {
    pub state_dim: usize,
    pub hidden_dim: usize,
    pub pairs: Vec<FeasiblePair>,
}

impl FeasibilityDataset {
    pub fn new(state_dim: usize, hidden_dim: usize) -> Self {
        FeasibilityDataset {
            state_dim,
            hidden_dim,
            pairs: Vec::new(),
        }
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.pairs.len() - self.positives()
    }

    /// Distinct grouping keys among positive rows.
    pub fn positive_states(&self) -> Vec<u64> {
        let mut keys: Vec<u64> = self
            .pairs
            .iter()
            .filter(|p| p.label == 1)
            .map(|p| p.state_key)
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    /// CSV with header `s0..s{k-1},h0..h{n-1},label,source`.
    pub fn to_csv(&self) -> String {
        let mut header: Vec<String> = (0..self.state_dim).map(|i| format!("s{i}")).collect();
        header.extend((0..self.hidden_dim).map(|i| format!("h{i}")));
        header.push("label".into());
        header.push("source".into());
        let mut out = header.join(",");
        out.push('\n');
        for p in &self.pairs {
            let mut row: Vec<String> = p.state_enc.iter().map(|v| format_f64(*v)).collect();
            row.extend(p.hidden.iter().map(|v| format_f64(*v)));
            row.push(p.label.to_string());
            row.push(p.source.name().into());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Dataset("empty dataset file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let is_indexed = |c: &str, prefix: char| {
            c.strip_prefix(prefix)
                .map(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
                .unwrap_or(false)
        };
        let state_dim = cols.iter().filter(|c| is_indexed(c, 's')).count();
        let hidden_dim = cols.iter().filter(|c| is_indexed(c, 'h')).count();
        if state_dim + hidden_dim + 2 != cols.len() {
            return Err(Error::Dataset(format!("unrecognized header {header:?}")));
        }
        let mut pairs = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::Dataset(format!("row {} has wrong arity", i + 2)));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|e| Error::Dataset(format!("row {}: {e}", i + 2)))
            };
            let state_enc: Vec<f64> = fields[..state_dim]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<_>>()?;
            let hidden: Vec<f64> = fields[state_dim..state_dim + hidden_dim]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<_>>()?;
            let label: u8 = fields[state_dim + hidden_dim]
                .parse()
                .map_err(|e| Error::Dataset(format!("row {}: bad label {e}", i + 2)))?;
            let source = PairSource::from_name(fields[state_dim + hidden_dim + 1])?;
            pairs.push(FeasiblePair {
                state_key: crate::rl::state_key_of(&state_enc),
                state_enc,
                hidden,
                label,
                source,
            });
        }
        Ok(FeasibilityDataset {
            state_dim,
            hidden_dim,
            pairs,
        })
    }
}

/// Hidden states equal after rounding each component to the 1e-6 grid are
/// treated as the same recorded pair.
pub const DEDUP_QUANTUM: f64 = 1e-6;

pub fn quantize(h: &[f64], quantum: f64) -> Vec<i64> {
    h.iter().map(|v| (v / quantum).round() as i64).collect()
}

#[derive(Debug, Clone)]
pub struct CollectConfig {
    /// Stop once this many recorded pairs exist (after dedup).
    pub min_pairs: usize,
    pub max_episodes: usize,
    /// Upper bound on pairs per distinct state, against imbalance.
    pub per_state_cap: usize,
    /// Exploration mixture cycled across collection episodes.
    pub epsilon_cycle: Vec<f64>,
    pub seed: u64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            min_pairs: 40_000,
            max_episodes: 40_000,
            per_state_cap: 20_000,
            epsilon_cycle: vec![1.0, 0.5, 0.3, 0.15, 0.05],
            seed: 0,
        }
    }
}

struct PairCollector {
    dataset: FeasibilityDataset,
    seen: std::collections::HashSet<(u64, Vec<i64>)>,
    per_state: HashMap<u64, usize>,
    cap: usize,
}

impl PairCollector {
    fn new(state_dim: usize, hidden_dim: usize, cap: usize) -> Self {
        PairCollector {
            dataset: FeasibilityDataset::new(state_dim, hidden_dim),
            seen: Default::default(),
            per_state: HashMap::new(),
            cap,
        }
    }

    fn offer(&mut self, state_enc: &[f64], state_key: u64, hidden: &[f64]) {
        let count = self.per_state.entry(state_key).or_insert(0);
        if *count >= self.cap {
            return;
        }
        let key = (state_key, quantize(hidden, DEDUP_QUANTUM));
        if !self.seen.insert(key) {
            return;
        }
        *count += 1;
        self.dataset.pairs.push(FeasiblePair {
            state_enc: state_enc.to_vec(),
            state_key,
            hidden: hidden.to_vec(),
            label: 1,
            source: PairSource::Recorded,
        });
    }

    fn offer_episode(&mut self, episode: &Episode) {
        for step in &episode.steps {
            self.offer(&step.state_enc, step.state_key, &step.h_before);
        }
    }
}

/// Pairs contributed by one episode: the (state, hidden) pair at every
/// decision, in step order, without dedup. Replaying a stored episode of the
/// same policy yields exactly the pairs live collection saw.
pub fn pairs_from_episode(episode: &Episode) -> Vec<FeasiblePair> {
    episode
        .steps
        .iter()
        .map(|step| FeasiblePair {
            state_enc: step.state_enc.clone(),
            state_key: step.state_key,
            hidden: step.h_before.clone(),
            label: 1,
            source: PairSource::Recorded,
        })
        .collect()
}

/// Exploration rollouts with the final policy over the navigation task,
/// recording every decision's (state, hidden) pair. Optional `replay`
/// episodes (e.g. the training buffer) are re-executed by action sequence
/// through the given policy first, so their pairs reflect this policy's
/// hidden dynamics.
pub fn collect_pairs_nav(
    env: &NavEnv,
    policy: &Policy,
    replay: &[Episode],
    cfg: &CollectConfig,
) -> Result<FeasibilityDataset> {
    let state_dim = crate::env::nav::NAV_STATE_DIM;
    let mut collector = PairCollector::new(state_dim, policy.hidden_dim(), cfg.per_state_cap);

    for episode in replay {
        let actions: Vec<usize> = episode.steps.iter().map(|s| s.action).collect();
        let replayed = replay_nav_actions(env, policy, &actions)?;
        collector.offer_episode(&replayed);
    }

    for i in 0..cfg.max_episodes {
        if collector.dataset.pairs.len() >= cfg.min_pairs {
            break;
        }
        let epsilon = cfg.epsilon_cycle[i % cfg.epsilon_cycle.len()];
        let mut rng = seeded_rng(cfg.seed, "collect-nav", i as u64);
        let episode = rollout_nav(env, policy, epsilon, &mut rng)?;
        collector.offer_episode(&episode);
    }
    if collector.dataset.pairs.is_empty() {
        return Err(Error::Dataset("pair collection produced no rows".into()));
    }
    Ok(collector.dataset)
}

/// Re-execute a fixed action sequence, recording pairs under `policy`'s
/// hidden dynamics. The environment is deterministic, so this reproduces the
/// original episode whenever the actions came from it.
pub fn replay_nav_actions(env: &NavEnv, policy: &Policy, actions: &[usize]) -> Result<Episode> {
    use crate::env::nav::{state_encoding, TerminalCause};
    use crate::env::Direction;
    use crate::rl::{state_key_of, EpisodeStep, TerminalKind};

    let (mut state, mut obs) = env.reset();
    let mut h = policy.gru.zero_hidden();
    let mut steps = Vec::new();
    let mut terminal = TerminalKind::Timeout;
    for &action in actions {
        if action >= 4 {
            return Err(Error::InvalidAction(action));
        }
        let (_, h_next) = policy.forward(&h, &obs)?;
        let enc = state_encoding(&env.spec, state.cell);
        let (next, reward, next_obs) = env.step(&state, Direction::ALL[action])?;
        steps.push(EpisodeStep {
            obs: std::mem::take(&mut obs),
            action,
            reward,
            h_before: h.clone(),
            state_key: state_key_of(&enc),
            state_enc: enc,
        });
        h = h_next;
        if let Some(cause) = next.terminal {
            terminal = match cause {
                TerminalCause::Goal => TerminalKind::Goal,
                TerminalCause::Collision => TerminalKind::Collision,
                TerminalCause::Timeout => TerminalKind::Timeout,
            };
            break;
        }
        state = next;
        obs = next_obs;
    }
    Ok(Episode { steps, terminal })
}

/// Per-agent pair collection for box pushing: agent `i`'s dataset pairs the
/// global state encoding with agent `i`'s hidden state.
pub fn collect_pairs_bp(
    env: &BpEnv,
    policies: [&Policy; 2],
    cfg: &CollectConfig,
) -> Result<[FeasibilityDataset; 2]> {
    let state_dim = crate::env::boxpush::BP_STATE_DIM;
    let mut collectors = [
        PairCollector::new(state_dim, policies[0].hidden_dim(), cfg.per_state_cap),
        PairCollector::new(state_dim, policies[1].hidden_dim(), cfg.per_state_cap),
    ];
    for i in 0..cfg.max_episodes {
        if collectors
            .iter()
            .all(|c| c.dataset.pairs.len() >= cfg.min_pairs)
        {
            break;
        }
        let epsilon = cfg.epsilon_cycle[i % cfg.epsilon_cycle.len()];
        let mut rng = seeded_rng(cfg.seed, "collect-bp", i as u64);
        let joint = rollout_bp(env, policies, epsilon, &mut rng)?;
        for agent in 0..2 {
            collectors[agent].offer_episode(&joint.agents[agent]);
        }
    }
    let [c0, c1] = collectors;
    if c0.dataset.pairs.is_empty() || c1.dataset.pairs.is_empty() {
        return Err(Error::Dataset("pair collection produced no rows".into()));
    }
    Ok([c0.dataset, c1.dataset])
}

/// L-infinity rejection distance for synthesized negatives.
pub const DEFAULT_TAU: f64 = 0.05;

/// Synthesize `count` label-0 rows against the dataset's positives: half
/// uniform draws over [-1,1]^n attached to recorded states, half mismatched
/// pairs (a feasible hidden from another state). Candidates within `tau`
/// (L-infinity) of any recorded feasible hidden *for the target state* are
/// rejected.
pub fn synthesize_negatives(
    dataset: &FeasibilityDataset,
    count: usize,
    tau: f64,
    seed: u64,
) -> Result<Vec<FeasiblePair>> {
    let positives: Vec<usize> = (0..dataset.pairs.len())
        .filter(|&i| dataset.pairs[i].label == 1)
        .collect();
    if positives.is_empty() {
        return Err(Error::Dataset("no positive rows to synthesize from".into()));
    }

    // positives grouped by state for the proximity rule
    let mut by_state: HashMap<u64, Vec<usize>> = HashMap::new();
    for &i in &positives {
        by_state
            .entry(dataset.pairs[i].state_key)
            .or_default()
            .push(i);
    }
    let state_keys: Vec<u64> = {
        let mut v: Vec<u64> = by_state.keys().copied().collect();
        v.sort_unstable();
        v
    };

    let target_uniform = count / 2;
    let hidden_dim = dataset.hidden_dim;
    let mut rng = seeded_rng(seed, "negatives", 0);
    let mut attempts: u64 = 0;
    let mut rejected: u64 = 0;
    let mut produced = Vec::with_capacity(count);

    let too_close = |state_key: u64, h: &[f64]| {
        by_state
            .get(&state_key)
            .map(|rows| {
                rows.iter()
                    .any(|&i| linf_distance(&dataset.pairs[i].hidden, h) <= tau)
            })
            .unwrap_or(false)
    };

    while produced.len() < count {
        attempts += 1;
        if attempts >= 1000 && rejected as f64 > 0.99 * attempts as f64 {
            return Err(Error::NegativeSynthesisStuck {
                rejected,
                attempted: attempts,
            });
        }
        if produced.len() < target_uniform {
            // uniform hidden sample attached to a recorded state
            let anchor = &dataset.pairs[positives[rng.random_range(0..positives.len())]];
            let h: Vec<f64> = (0..hidden_dim)
                .map(|_| rng.random_range(-1.0..=1.0))
                .collect();
            if too_close(anchor.state_key, &h) {
                rejected += 1;
                continue;
            }
            produced.push(FeasiblePair {
                state_enc: anchor.state_enc.clone(),
                state_key: anchor.state_key,
                hidden: h,
                label: 0,
                source: PairSource::UniformNegative,
            });
        } else {
            // feasible hidden of some state attached to a different state
            if state_keys.len() < 2 {
                return Err(Error::Dataset(
                    "mismatched negatives need at least two distinct states".into(),
                ));
            }
            let donor = &dataset.pairs[positives[rng.random_range(0..positives.len())]];
            let target_key = state_keys[rng.random_range(0..state_keys.len())];
            if target_key == donor.state_key {
                continue;
            }
            if too_close(target_key, &donor.hidden) {
                rejected += 1;
                continue;
            }
            let target_enc = dataset.pairs[by_state[&target_key][0]].state_enc.clone();
            produced.push(FeasiblePair {
                state_enc: target_enc,
                state_key: target_key,
                hidden: donor.hidden.clone(),
                label: 0,
                source: PairSource::Mismatched,
            });
        }
    }
    Ok(produced)
}

/// Append `ratio x positives` synthesized label-0 rows.
pub fn make_negatives(
    dataset: &mut FeasibilityDataset,
    ratio: f64,
    tau: f64,
    seed: u64,
) -> Result<()> {
    if ratio <= 0.0 {
        return Err(Error::OutOfRange(format!(
            "negative ratio must be positive, got {ratio}"
        )));
    }
    let count = (ratio * dataset.positives() as f64).round() as usize;
    let produced = synthesize_negatives(dataset, count, tau, seed)?;
    dataset.pairs.extend(produced);
    Ok(())
}

/// Train/validation composition for classifier runs whose validation side
/// must back a Hoeffding claim. Recorded positives split by `val_frac`;
/// the training partition stays balanced at `ratio` label-0 rows per
/// label-1 row, and the validation partition is padded with additional
/// synthesized negatives until it holds at least `min_val_rows` rows.
/// Returns the combined dataset plus disjoint row-index partitions.
pub fn compose_split(
    recorded: &FeasibilityDataset,
    ratio: f64,
    tau: f64,
    val_frac: f64,
    min_val_rows: usize,
    seed: u64,
) -> Result<(FeasibilityDataset, Vec<usize>, Vec<usize>)> {
    use rand::seq::SliceRandom;
    if recorded.pairs.iter().any(|p| p.label != 1) {
        return Err(Error::Dataset(
            "compose_split expects a recorded (all label-1) dataset".into(),
        ));
    }
    let n_pos = recorded.pairs.len();
    if n_pos < 10 {
        return Err(Error::Dataset(format!("too few recorded pairs: {n_pos}")));
    }
    let mut order: Vec<usize> = (0..n_pos).collect();
    let mut rng = seeded_rng(seed, "compose-split", 0);
    order.shuffle(&mut rng);
    let n_val_pos = ((val_frac * n_pos as f64).round() as usize).clamp(1, n_pos - 1);

    let n_train_pos = n_pos - n_val_pos;
    let train_negs = (ratio * n_train_pos as f64).round() as usize;
    let val_negs = ((ratio * n_val_pos as f64).round() as usize)
        .max(min_val_rows.saturating_sub(n_val_pos));
    // one synthesis pass against the full positive set, then dealt out
    let negatives = synthesize_negatives(recorded, train_negs + val_negs, tau, seed)?;

    let mut combined = FeasibilityDataset::new(recorded.state_dim, recorded.hidden_dim);
    let mut train_idx = Vec::with_capacity(n_train_pos + train_negs);
    let mut val_idx = Vec::with_capacity(n_val_pos + val_negs);
    for (k, &i) in order.iter().enumerate() {
        combined.pairs.push(recorded.pairs[i].clone());
        if k < n_train_pos {
            train_idx.push(combined.pairs.len() - 1);
        } else {
            val_idx.push(combined.pairs.len() - 1);
        }
    }
    // negatives alternate sources (uniform first half, mismatched second);
    // interleave the deal so both sides see both kinds
    let (uniform, mismatched): (Vec<_>, Vec<_>) = negatives
        .into_iter()
        .partition(|p| p.source == PairSource::UniformNegative);
    let mut dealt_train = 0usize;
    for (k, p) in uniform.into_iter().chain(mismatched).enumerate() {
        combined.pairs.push(p);
        // alternate proportionally: even positions feed the larger side first
        let train_share = train_negs as f64 / (train_negs + val_negs).max(1) as f64;
        if (dealt_train as f64) < train_share * (k + 1) as f64 && dealt_train < train_negs {
            train_idx.push(combined.pairs.len() - 1);
            dealt_train += 1;
        } else {
            val_idx.push(combined.pairs.len() - 1);
        }
    }
    Ok((combined, train_idx, val_idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GridSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_setup() -> (NavEnv, Policy) {
        let env = NavEnv::new(GridSpec::generate(4, 4, 7).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let policy = Policy::new(env.obs_dim(), 4, &[8], env.n_actions(), &mut rng);
        (env, policy)
    }

    #[test]
    fn one_episode_yields_one_pair_per_decision() {
        let (env, policy) = small_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ep = rollout_nav(&env, &policy, 1.0, &mut rng).unwrap();
        let pairs = pairs_from_episode(&ep);
        assert_eq!(pairs.len(), ep.len());
        assert!(pairs.iter().all(|p| p.label == 1));
    }

    #[test]
    fn replaying_an_episode_reproduces_live_pairs() {
        let (env, policy) = small_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let live = rollout_nav(&env, &policy, 0.8, &mut rng).unwrap();
        let actions: Vec<usize> = live.steps.iter().map(|s| s.action).collect();
        let replayed = replay_nav_actions(&env, &policy, &actions).unwrap();
        let a = pairs_from_episode(&live);
        let b = pairs_from_episode(&replayed);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.state_enc, y.state_enc);
            assert_eq!(x.hidden, y.hidden);
        }
    }

    #[test]
    fn collection_visits_every_reachable_decision_state() {
        let (env, policy) = small_setup();
        let cfg = CollectConfig {
            min_pairs: 3000,
            max_episodes: 3000,
            seed: 3,
            ..CollectConfig::default()
        };
        let ds = collect_pairs_nav(&env, &policy, &[], &cfg).unwrap();
        let keys = ds.positive_states();
        // BFS oracle: reachable non-goal free cells
        let reachable = env.spec.bfs_distances(env.spec.start);
        let expected: Vec<u64> = reachable
            .iter()
            .filter(|c| **c != env.spec.goal)
            .map(|c| {
                crate::rl::state_key_of(&crate::env::nav::state_encoding(&env.spec, *c))
            })
            .collect();
        for key in &expected {
            assert!(keys.contains(key), "unvisited reachable decision state");
        }
    }

    #[test]
    fn negatives_respect_ratio_and_balance() {
        let (env, policy) = small_setup();
        let cfg = CollectConfig {
            min_pairs: 1000,
            max_episodes: 2000,
            seed: 4,
            ..CollectConfig::default()
        };
        let mut ds = collect_pairs_nav(&env, &policy, &[], &cfg).unwrap();
        let positives = ds.positives();
        make_negatives(&mut ds, 1.0, DEFAULT_TAU, 11).unwrap();
        assert_eq!(ds.pairs.len(), 2 * positives);
        assert_eq!(ds.negatives(), positives);
        let uniform = ds
            .pairs
            .iter()
            .filter(|p| p.source == PairSource::UniformNegative)
            .count();
        let mismatched = ds
            .pairs
            .iter()
            .filter(|p| p.source == PairSource::Mismatched)
            .count();
        assert!(uniform.abs_diff(mismatched) <= 1);
    }

    #[test]
    fn no_negative_sits_within_tau_of_a_positive_for_its_state() {
        let (env, policy) = small_setup();
        let cfg = CollectConfig {
            min_pairs: 800,
            max_episodes: 1500,
            seed: 6,
            ..CollectConfig::default()
        };
        let mut ds = collect_pairs_nav(&env, &policy, &[], &cfg).unwrap();
        make_negatives(&mut ds, 1.0, DEFAULT_TAU, 13).unwrap();
        let mut by_state: HashMap<u64, Vec<Vec<f64>>> = HashMap::new();
        for p in ds.pairs.iter().filter(|p| p.label == 1) {
            by_state
                .entry(p.state_key)
                .or_default()
                .push(p.hidden.clone());
        }
        for neg in ds.pairs.iter().filter(|p| p.label == 0) {
            if let Some(rows) = by_state.get(&neg.state_key) {
                for pos in rows {
                    assert!(
                        linf_distance(pos, &neg.hidden) > DEFAULT_TAU,
                        "negative within tau of a positive"
                    );
                }
            }
        }
    }

    #[test]
    fn csv_round_trips() {
        let (env, policy) = small_setup();
        let cfg = CollectConfig {
            min_pairs: 50,
            max_episodes: 100,
            seed: 8,
            ..CollectConfig::default()
        };
        let mut ds = collect_pairs_nav(&env, &policy, &[], &cfg).unwrap();
        make_negatives(&mut ds, 1.0, DEFAULT_TAU, 2).unwrap();
        let text = ds.to_csv();
        let back = FeasibilityDataset::from_csv(&text).unwrap();
        assert_eq!(back.state_dim, ds.state_dim);
        assert_eq!(back.hidden_dim, ds.hidden_dim);
        assert_eq!(back.pairs.len(), ds.pairs.len());
        for (a, b) in ds.pairs.iter().zip(&back.pairs) {
            assert_eq!(a.state_enc, b.state_enc);
            assert_eq!(a.hidden, b.hidden);
            assert_eq!(a.label, b.label);
            assert_eq!(a.source, b.source);
        }
        assert_eq!(text, back.to_csv());
    }
}
