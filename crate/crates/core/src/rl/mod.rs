//! Recurrent Q-learning: episodic replay, target networks with Polyak
//! averaging, and backpropagation through time over full episodes.

pub mod ctde;
pub mod drqn;

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::nn::adam::Adam;
use crate::nn::Policy;

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalKind {
    Goal,
    Collision,
    Timeout,
}

/// One decision: the observation consumed, the hidden state fed into the
/// policy *before* acting, the action, the reward, and the environment state
/// (as the classifier's dense encoding plus a grouping key).
#[derive(Debug, Clone)]
pub struct EpisodeStep {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub h_before: Vec<f64>,
    pub state_enc: Vec<f64>,
    pub state_key: u64,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub steps: Vec<EpisodeStep>,
    pub terminal: TerminalKind,
}

impl Episode {
    pub fn ret(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Grouping key for a state encoding: FNV-1a over the raw float bits.
pub fn state_key_of(enc: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in enc {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// FIFO ring buffer of episodes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<E> {
    episodes: VecDeque<E>,
    capacity: usize,
}

impl<E> ReplayBuffer<E> {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            episodes: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
        }
    }

    pub fn push(&mut self, episode: E) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &E {
        &self.episodes[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &E> {
        self.episodes.iter()
    }

    /// Uniform-with-replacement batch of indices.
    pub fn sample_indices(&self, rng: &mut impl rand::Rng, batch: usize) -> Vec<usize> {
        (0..batch)
            .map(|_| rng.random_range(0..self.episodes.len()))
            .collect()
    }
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lr: f64,
    pub batch_episodes: usize,
    pub polyak_omega: f64,
    pub gru_hidden: usize,
    pub mlp_hidden: Vec<usize>,
    pub episodes: usize,
    pub buffer_capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of the episode budget over which epsilon anneals linearly.
    pub eps_anneal_frac: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Grid-search winners; `gru_hidden` and the episode budget vary by task.
    pub fn defaults(gru_hidden: usize, episodes: usize, seed: u64) -> Self {
        TrainConfig {
            gamma: 0.9,
            lr: 3e-4,
            batch_episodes: 32,
            polyak_omega: 0.995,
            gru_hidden,
            mlp_hidden: vec![32, 32],
            episodes,
            buffer_capacity: 1000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_anneal_frac: 0.5,
            seed,
        }
    }

    pub fn epsilon_at(&self, episode: usize) -> f64 {
        let anneal_until = (self.episodes as f64 * self.eps_anneal_frac).max(1.0);
        let t = (episode as f64 / anneal_until).min(1.0);
        (1.0 - t) * self.eps_start + t * self.eps_end
    }
}

/// Online policy, its lagged target copy, and the optimizer state.
#[derive(Debug, Clone)]
pub struct PolicyBundle {
    pub online: Policy,
    pub target: Policy,
    pub optimizer: Adam,
    pub train_steps: u64,
}

impl PolicyBundle {
    pub fn new(online: Policy, lr: f64) -> Self {
        let shapes: Vec<usize> = online.param_slices().iter().map(|s| s.len()).collect();
        PolicyBundle {
            target: online.clone(),
            online,
            optimizer: Adam::new(lr, &shapes),
            train_steps: 0,
        }
    }
}

/// target <- omega * target + (1 - omega) * online, elementwise.
pub fn polyak_update(target: &mut Policy, online: &Policy, omega: f64) -> Result<()> {
    let online_slices = online.param_slices();
    let mut target_slices = target.param_slices_mut();
    if online_slices.len() != target_slices.len() {
        return Err(Error::DimMismatch {
            context: "polyak parameter sets",
            expected: target_slices.len(),
            actual: online_slices.len(),
        });
    }
    for (t, o) in target_slices.iter_mut().zip(&online_slices) {
        if t.len() != o.len() {
            return Err(Error::DimMismatch {
                context: "polyak parameter shape",
                expected: t.len(),
                actual: o.len(),
            });
        }
        for (tv, ov) in t.iter_mut().zip(o.iter()) {
            *tv = omega * *tv + (1.0 - omega) * *ov;
        }
    }
    Ok(())
}

/// Per-episode training log row; serialized as CSV
/// `episode,return,epsilon,loss`.
#[derive(Debug, Clone, Copy)]
pub struct LogRow {
    pub episode: usize,
    pub ret: f64,
    pub epsilon: f64,
    pub loss: f64,
}

pub fn log_to_csv(rows: &[LogRow]) -> String {
    let mut out = String::from("episode,return,epsilon,loss\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.episode, r.ret, r.epsilon, r.loss));
    }
    out
}
