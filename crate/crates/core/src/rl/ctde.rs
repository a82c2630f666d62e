//! Cooperative box pushing: two independent recurrent Q-networks trained on
//! the shared reward. Training reads the global state only for logging and
//! dataset collection; each agent's actions depend solely on its own
//! observation history.

use rand::Rng;

use crate::env::boxpush::{BpAction, BpEnv, BpTerminalCause};
use crate::error::Result;
use crate::nn::Policy;
use crate::rl::drqn::{epsilon_greedy, td_targets, train_step};
use crate::rl::{
    state_key_of, Episode, EpisodeStep, LogRow, PolicyBundle, ReplayBuffer, TerminalKind,
    TrainConfig,
};
use crate::rngstream::seeded_rng;

/// One joint rollout, stored as per-agent views sharing rewards and the
/// global state encoding.
#[derive(Debug, Clone)]
pub struct JointEpisode {
    pub agents: [Episode; 2],
}

impl JointEpisode {
    pub fn ret(&self) -> f64 {
        self.agents[0].ret()
    }
}

pub fn rollout_bp(
    env: &BpEnv,
    policies: [&Policy; 2],
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<JointEpisode> {
    let (mut state, mut obs) = env.reset();
    let mut hidden = [policies[0].gru.zero_hidden(), policies[1].gru.zero_hidden()];
    let mut steps: [Vec<EpisodeStep>; 2] = [Vec::new(), Vec::new()];

    loop {
        let mut actions = [BpAction::Push; 2];
        let mut next_hidden = hidden.clone();
        let mut chosen = [0usize; 2];
        for i in 0..2 {
            let (q, h_next) = policies[i].forward(&hidden[i], &obs[i])?;
            chosen[i] = epsilon_greedy(&q, epsilon, rng);
            actions[i] = BpAction::from_index(chosen[i])?;
            next_hidden[i] = h_next;
        }
        let enc = env.state_encoding(&state);
        let key = state_key_of(&enc);
        let (next_state, reward, next_obs) = env.step(&state, actions)?;
        for i in 0..2 {
            steps[i].push(EpisodeStep {
                obs: obs[i].clone(),
                action: chosen[i],
                reward,
                h_before: hidden[i].clone(),
                state_enc: enc.clone(),
                state_key: key,
            });
        }
        hidden = next_hidden;
        if let Some(cause) = next_state.terminal {
            let terminal = match cause {
                BpTerminalCause::Goal => TerminalKind::Goal,
                BpTerminalCause::Timeout => TerminalKind::Timeout,
            };
            let [s0, s1] = steps;
            return Ok(JointEpisode {
                agents: [
                    Episode {
                        steps: s0,
                        terminal,
                    },
                    Episode {
                        steps: s1,
                        terminal,
                    },
                ],
            });
        }
        state = next_state;
        obs = next_obs;
    }
}

/// Centralized training, decentralized execution: one DRQN per agent on the
/// shared reward signal.
pub fn train_ctde_bp(
    env: &BpEnv,
    config: &TrainConfig,
) -> Result<([PolicyBundle; 2], ReplayBuffer<JointEpisode>, Vec<LogRow>)> {
    let mut bundles = [0, 1].map(|i| {
        let mut rng = seeded_rng(config.seed, "bp-policy-init", i);
        PolicyBundle::new(
            Policy::new(
                env.obs_dim(),
                config.gru_hidden,
                &config.mlp_hidden,
                env.n_actions(),
                &mut rng,
            ),
            config.lr,
        )
    });
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut log = Vec::with_capacity(config.episodes);

    for episode_idx in 0..config.episodes {
        let epsilon = config.epsilon_at(episode_idx);
        let mut rollout_rng = seeded_rng(config.seed, "bp-rollout", episode_idx as u64);
        let joint = rollout_bp(
            env,
            [&bundles[0].online, &bundles[1].online],
            epsilon,
            &mut rollout_rng,
        )?;
        let ret = joint.ret();
        buffer.push(joint);

        let loss = if buffer.len() >= config.batch_episodes {
            let mut batch_rng = seeded_rng(config.seed, "bp-batch", episode_idx as u64);
            let idx = buffer.sample_indices(&mut batch_rng, config.batch_episodes);
            let mut mean_loss = 0.0;
            for agent in 0..2 {
                let batch: Vec<&Episode> =
                    idx.iter().map(|&i| &buffer.get(i).agents[agent]).collect();
                let targets = td_targets(&batch, &bundles[agent].target, config.gamma)?;
                mean_loss +=
                    train_step(&mut bundles[agent], &batch, &targets, config.polyak_omega)?;
            }
            mean_loss / 2.0
        } else {
            f64::NAN
        };

        log.push(LogRow {
            episode: episode_idx,
            ret,
            epsilon,
            loss,
        });
    }
    Ok((bundles, buffer, log))
}

/// Greedy joint rollout.
pub fn greedy_rollout_bp(env: &BpEnv, policies: [&Policy; 2]) -> Result<JointEpisode> {
    let mut no_rng = seeded_rng(0, "bp-greedy", 0);
    rollout_bp(env, policies, 0.0, &mut no_rng)
}

/// Fraction of `n` greedy joint episodes that deliver the box.
pub fn evaluate_bp_success(env: &BpEnv, policies: [&Policy; 2], n: usize) -> Result<f64> {
    let mut wins = 0;
    for _ in 0..n {
        if greedy_rollout_bp(env, policies)?.agents[0].terminal == TerminalKind::Goal {
            wins += 1;
        }
    }
    Ok(wins as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn joint_rollouts_share_rewards_and_state_encodings() {
        let env = BpEnv::new(6, 6, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p0 = Policy::new(env.obs_dim(), 4, &[8], env.n_actions(), &mut rng);
        let p1 = Policy::new(env.obs_dim(), 4, &[8], env.n_actions(), &mut rng);
        let joint = rollout_bp(&env, [&p0, &p1], 1.0, &mut rng).unwrap();
        assert_eq!(joint.agents[0].len(), joint.agents[1].len());
        for (a, b) in joint.agents[0].steps.iter().zip(&joint.agents[1].steps) {
            assert_eq!(a.reward, b.reward);
            assert_eq!(a.state_enc, b.state_enc);
        }
    }

    #[test]
    fn decentralized_execution_ignores_the_other_agents_observations() {
        // perturbing agent 1's observation stream must not change agent 0's
        // greedy actions given the same own-observation history
        let env = BpEnv::new(6, 6, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p0 = Policy::new(env.obs_dim(), 4, &[8], env.n_actions(), &mut rng);

        let (_, obs) = env.reset();
        let own_stream = vec![obs[0].clone(), vec![1.0, 0.0, 0.0, 0.0, 0.0]];
        let pick_actions = |_other_obs: &[Vec<f64>]| -> Vec<usize> {
            let mut h = p0.gru.zero_hidden();
            let mut out = Vec::new();
            for o in &own_stream {
                let (q, h2) = p0.forward(&h, o).unwrap();
                out.push(crate::tensor::argmax(&q));
                h = h2;
            }
            out
        };
        let a = pick_actions(&[vec![0.0; 5], vec![0.0; 5]]);
        let b = pick_actions(&[vec![1.0; 5], vec![0.5; 5]]);
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_ctde_run_is_deterministic() {
        let env = BpEnv::new(6, 6, 0);
        let config = TrainConfig {
            episodes: 40,
            batch_episodes: 8,
            ..TrainConfig::defaults(4, 40, 123)
        };
        let (b1, _, _) = train_ctde_bp(&env, &config).unwrap();
        let (b2, _, _) = train_ctde_bp(&env, &config).unwrap();
        assert_eq!(b1[0].online, b2[0].online);
        assert_eq!(b1[1].online, b2[1].online);
    }
}
