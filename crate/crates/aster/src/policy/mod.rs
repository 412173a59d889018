//! Actor/critic networks and the PPO trainer.
//!
//! The actor is a two-hidden-layer tanh MLP whose output layer is squashed
//! with tanh into `[-1, 1]⁴`; actions are drawn from a Gaussian centered on
//! that mean with a state-independent log-std and clamped back into the box.
//! The critic is a separate MLP of the same width. Training alternates
//! fixed-horizon rollouts over a batch of environments with clipped-surrogate
//! updates on GAE advantages.

pub mod checkpoint;
pub mod nn;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use thiserror::Error;

use crate::config::{self, RunConfig};
use crate::env::{ResetMode, WaypointEnv, ACT_DIM, OBS_DIM};
use nn::{Adam, Mlp};

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 1.0;
const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("non-finite observation")]
    NonFiniteObservation,
    #[error("non-finite loss ({0}); update aborted")]
    NonFiniteLoss(String),
    #[error("checkpoint io: {0}")]
    CheckpointIo(String),
    #[error("checkpoint fingerprint mismatch: expected '{expected}', found '{found}'")]
    FingerprintMismatch { expected: String, found: String },
    #[error("environment batch is empty")]
    NoEnvironments,
}

/// PPO hyperparameters.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_ratio: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub n_envs: usize,
    pub horizon: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: usize,
    pub log_std_init: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_ratio: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            epochs: 4,
            minibatch_size: 4096,
            n_envs: 256,
            horizon: 64,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: 128,
            log_std_init: -0.5,
        }
    }
}

/// Policy and value parameters.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub policy: Mlp,
    pub log_std: Vec<f64>,
    pub value: Mlp,
}

impl ActorCritic {
    pub fn new(obs_dim: usize, act_dim: usize, cfg: &PpoConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut policy = Mlp::new(obs_dim, cfg.hidden, act_dim, true, rng);
        // Small final layer keeps the initial mean near zero.
        policy.w3 *= 0.01;
        let value = Mlp::new(obs_dim, cfg.hidden, 1, false, rng);
        ActorCritic {
            policy,
            log_std: vec![cfg.log_std_init; act_dim],
            value,
        }
    }

    /// Action mean (already in `[-1,1]`) and log-std for one observation.
    pub fn policy_forward(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), PolicyError> {
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFiniteObservation);
        }
        let x = DMatrix::from_row_slice(1, obs.len(), obs);
        let mean = self.policy.forward(&x).out.row(0).transpose();
        Ok((mean.iter().copied().collect(), self.log_std.clone()))
    }

    /// Batched value estimates.
    pub fn values(&self, obs: &DMatrix<f64>) -> Vec<f64> {
        self.value.forward(obs).out.column(0).iter().copied().collect()
    }
}

/// Gaussian log-density of `action` under `mean` and the shared log-std.
pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut lp = 0.0;
    for j in 0..mean.len() {
        let std = log_std[j].exp();
        let z = (action[j] - mean[j]) / std;
        lp += -0.5 * z * z - log_std[j] - 0.5 * LN_2PI;
    }
    lp
}

/// Standard normal via Box-Muller (two uniform draws per sample).
fn sample_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Samples a clamped action and its log-probability.
pub fn sample_action<R: Rng>(
    mean: &[f64],
    log_std: &[f64],
    rng: &mut R,
) -> ([f64; ACT_DIM], f64) {
    let mut a = [0.0; ACT_DIM];
    for j in 0..ACT_DIM {
        let std = log_std[j].exp();
        a[j] = (mean[j] + std * sample_normal(rng)).clamp(-1.0, 1.0);
    }
    let lp = log_prob(mean, log_std, &a);
    (a, lp)
}

/// Generalized advantage estimation with episode-boundary masking.
///
/// `values` carries one bootstrap entry more than `rewards`; `dones[t]`
/// cuts both the TD target and the advantage recursion.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let t_max = rewards.len();
    assert_eq!(values.len(), t_max + 1, "values must include the bootstrap");
    assert_eq!(dones.len(), t_max);
    let mut advantages = vec![0.0; t_max];
    let mut next_adv = 0.0;
    for t in (0..t_max).rev() {
        let mask = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * mask - values[t];
        next_adv = delta + gamma * lambda * mask * next_adv;
        advantages[t] = next_adv;
    }
    let returns = advantages
        .iter()
        .zip(values.iter())
        .map(|(a, v)| a + v)
        .collect();
    (advantages, returns)
}

/// Flattened on-policy batch.
pub struct RolloutBatch {
    pub obs: DMatrix<f64>,
    pub actions: DMatrix<f64>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    /// Normalizes advantages to zero mean and unit variance in place.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len() as f64;
        if n < 2.0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-8);
        for a in &mut self.advantages {
            *a = (*a - mean) / std;
        }
    }
}

/// Diagnostics from one PPO update.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub pg_loss: f64,
    pub v_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Actor/critic parameters bundled with their optimizer state.
pub struct PpoLearner {
    pub ac: ActorCritic,
    opt_policy: Adam,
    opt_value: Adam,
}

impl PpoLearner {
    pub fn new(ac: ActorCritic, cfg: &PpoConfig) -> Self {
        let n_policy = ac.policy.param_count() + ac.log_std.len();
        let n_value = ac.value.param_count();
        PpoLearner {
            ac,
            opt_policy: Adam::new(cfg.learning_rate, n_policy),
            opt_value: Adam::new(cfg.learning_rate, n_value),
        }
    }

    /// Runs the configured epochs of clipped-surrogate updates over the
    /// batch. Advantages are expected to be normalized already.
    pub fn ppo_update(
        &mut self,
        batch: &RolloutBatch,
        cfg: &PpoConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<UpdateStats, PolicyError> {
        let n = batch.len();
        if n == 0 {
            return Ok(UpdateStats::default());
        }
        let mut stats = UpdateStats::default();
        let mut stat_count = 0usize;
        let mut indices: Vec<usize> = (0..n).collect();

        for _epoch in 0..cfg.epochs {
            // Fisher-Yates with the update stream.
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                indices.swap(i, j);
            }
            let mb = cfg.minibatch_size.max(1).min(n);
            for chunk in indices.chunks(mb) {
                let s = self.update_minibatch(batch, chunk, cfg)?;
                stats.pg_loss += s.pg_loss;
                stats.v_loss += s.v_loss;
                stats.entropy = s.entropy;
                stats.approx_kl += s.approx_kl;
                stats.clip_fraction += s.clip_fraction;
                stat_count += 1;
            }
        }
        let c = stat_count.max(1) as f64;
        stats.pg_loss /= c;
        stats.v_loss /= c;
        stats.approx_kl /= c;
        stats.clip_fraction /= c;
        Ok(stats)
    }

    fn update_minibatch(
        &mut self,
        batch: &RolloutBatch,
        idx: &[usize],
        cfg: &PpoConfig,
    ) -> Result<UpdateStats, PolicyError> {
        let mb = idx.len();
        let obs_dim = batch.obs.ncols();
        let act_dim = batch.actions.ncols();
        let mut obs = DMatrix::zeros(mb, obs_dim);
        let mut act = DMatrix::zeros(mb, act_dim);
        for (r, &i) in idx.iter().enumerate() {
            obs.row_mut(r).copy_from(&batch.obs.row(i));
            act.row_mut(r).copy_from(&batch.actions.row(i));
        }

        let cache = self.ac.policy.forward(&obs);
        let means = &cache.out;
        let stds: Vec<f64> = self.ac.log_std.iter().map(|s| s.exp()).collect();

        // New log-probs, ratios, and the clipped-surrogate selection.
        let mut pg_loss = 0.0;
        let mut approx_kl = 0.0;
        let mut clipped = 0usize;
        let mut d_mean = DMatrix::zeros(mb, act_dim);
        let mut d_log_std = vec![0.0; act_dim];
        for r in 0..mb {
            let i = idx[r];
            let mut lp_new = 0.0;
            for j in 0..act_dim {
                let z = (act[(r, j)] - means[(r, j)]) / stds[j];
                lp_new += -0.5 * z * z - self.ac.log_std[j] - 0.5 * LN_2PI;
            }
            let ratio = (lp_new - batch.log_probs[i]).exp();
            let adv = batch.advantages[i];
            let surr1 = ratio * adv;
            let surr2 = ratio.clamp(1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * adv;
            pg_loss += -surr1.min(surr2);
            approx_kl += batch.log_probs[i] - lp_new;
            if (ratio - 1.0).abs() > cfg.clip_ratio {
                clipped += 1;
            }
            // Gradient flows only through the unclipped branch when selected.
            if surr1 <= surr2 {
                let coeff = -adv * ratio / mb as f64;
                for j in 0..act_dim {
                    let diff = act[(r, j)] - means[(r, j)];
                    d_mean[(r, j)] = coeff * diff / (stds[j] * stds[j]);
                    d_log_std[j] += coeff * (diff * diff / (stds[j] * stds[j]) - 1.0);
                }
            }
        }
        pg_loss /= mb as f64;
        approx_kl /= mb as f64;

        let entropy: f64 = self
            .ac
            .log_std
            .iter()
            .map(|s| s + 0.5 * (LN_2PI + 1.0))
            .sum();
        for g in d_log_std.iter_mut() {
            *g -= cfg.entropy_coef; // d(-ent_coef * H)/d log_std = -ent_coef
        }

        let v_cache = self.ac.value.forward(&obs);
        let mut v_loss = 0.0;
        let mut d_v = DMatrix::zeros(mb, 1);
        for r in 0..mb {
            let err = v_cache.out[(r, 0)] - batch.returns[idx[r]];
            v_loss += 0.5 * err * err;
            d_v[(r, 0)] = cfg.value_coef * err / mb as f64;
        }
        v_loss /= mb as f64;

        if !pg_loss.is_finite() || !v_loss.is_finite() {
            return Err(PolicyError::NonFiniteLoss(format!(
                "pg = {pg_loss}, value = {v_loss}"
            )));
        }

        // Backprop and parameter steps.
        let mut policy_grads = self.ac.policy.zeros_like();
        self.ac.policy.backward(&cache, &d_mean, &mut policy_grads);
        let mut flat_pg = Vec::with_capacity(self.opt_policy_len());
        policy_grads.flatten_into(&mut flat_pg);
        flat_pg.extend_from_slice(&d_log_std);
        nn::clip_grad_norm(&mut flat_pg, cfg.max_grad_norm);

        let mut flat_params = Vec::with_capacity(flat_pg.len());
        self.ac.policy.flatten_into(&mut flat_params);
        flat_params.extend_from_slice(&self.ac.log_std);
        self.opt_policy.step(&mut flat_params, &flat_pg);
        let split = self.ac.policy.param_count();
        self.ac.policy.unflatten_from(&flat_params[..split]);
        for (j, v) in flat_params[split..].iter().enumerate() {
            self.ac.log_std[j] = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }

        let mut value_grads = self.ac.value.zeros_like();
        self.ac.value.backward(&v_cache, &d_v, &mut value_grads);
        let mut flat_vg = Vec::with_capacity(self.ac.value.param_count());
        value_grads.flatten_into(&mut flat_vg);
        nn::clip_grad_norm(&mut flat_vg, cfg.max_grad_norm);
        let mut flat_v = Vec::with_capacity(flat_vg.len());
        self.ac.value.flatten_into(&mut flat_v);
        self.opt_value.step(&mut flat_v, &flat_vg);
        self.ac.value.unflatten_from(&flat_v);

        Ok(UpdateStats {
            pg_loss,
            v_loss,
            entropy,
            approx_kl,
            clip_fraction: clipped as f64 / mb as f64,
        })
    }

    fn opt_policy_len(&self) -> usize {
        self.ac.policy.param_count() + self.ac.log_std.len()
    }
}

/// Per-iteration training log row.
#[derive(Debug, Clone, Copy)]
pub struct IterationStats {
    pub iteration: usize,
    pub env_steps_total: usize,
    /// Rolling mean over the last 100 completed episodes.
    pub mean_episode_reward: f64,
    pub mean_episode_length: f64,
    pub mean_traversals: f64,
    pub episodes_completed: usize,
    pub pg_loss: f64,
    pub v_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Final artifacts of a training run.
pub struct TrainOutcome {
    pub learner: PpoLearner,
    pub history: Vec<IterationStats>,
}

/// Runs PPO over a batch of dynamically-targeted environments.
///
/// `reset_mode` selects the composite (`Auto`) or hover-only arm; everything
/// else about the two arms is identical. The callback sees every iteration's
/// stats row as it is produced.
pub fn train(
    run: &RunConfig,
    reset_mode: ResetMode,
    seed: u64,
    iterations: usize,
    mut on_iter: impl FnMut(&IterationStats, &ActorCritic),
) -> Result<TrainOutcome, PolicyError> {
    let ppo = run.ppo;
    if ppo.n_envs == 0 {
        return Err(PolicyError::NoEnvironments);
    }
    let params = run.params.to_params();
    let mut envs: Vec<WaypointEnv> = (0..ppo.n_envs)
        .map(|i| {
            WaypointEnv::new_dynamic(
                run.env,
                run.hdss,
                params,
                reset_mode,
                config::seeded_rng(seed, 1 + i as u64),
            )
        })
        .collect();

    let mut init_rng = config::seeded_rng(seed, config::STREAM_POLICY_INIT);
    let ac = ActorCritic::new(OBS_DIM, ACT_DIM, &ppo, &mut init_rng);
    let mut learner = PpoLearner::new(ac, &ppo);
    let mut action_rng = config::seeded_rng(seed, config::STREAM_ACTION_SAMPLING);
    let mut update_rng = config::seeded_rng(seed, config::STREAM_UPDATE_SHUFFLE);

    let n = ppo.n_envs;
    let h = ppo.horizon;
    let mut history = Vec::with_capacity(iterations);
    let mut recent: VecDeque<(f64, f64, f64)> = VecDeque::with_capacity(100);
    let mut env_steps_total = 0usize;

    let mut obs_now = DMatrix::zeros(n, OBS_DIM);
    for (e, env) in envs.iter_mut().enumerate() {
        let o = env.observation();
        obs_now.row_mut(e).copy_from_slice(&o.data);
    }

    for iteration in 0..iterations {
        let mut obs_buf = DMatrix::zeros(h * n, OBS_DIM);
        let mut act_buf = DMatrix::zeros(h * n, ACT_DIM);
        let mut logp_buf = vec![0.0; h * n];
        let mut rew_buf = vec![0.0; h * n];
        let mut done_buf = vec![false; h * n];
        // (flat index, terminal observation) for truncation bootstraps.
        let mut trunc_rows: Vec<(usize, [f64; OBS_DIM])> = Vec::new();

        for t in 0..h {
            let means = learner.ac.policy.forward(&obs_now).out;
            let mut actions: Vec<[f64; ACT_DIM]> = Vec::with_capacity(n);
            for e in 0..n {
                let mean_row: Vec<f64> = means.row(e).iter().copied().collect();
                let (a, lp) = sample_action(&mean_row, &learner.ac.log_std, &mut action_rng);
                logp_buf[t * n + e] = lp;
                actions.push(a);
            }

            for e in 0..n {
                let flat = t * n + e;
                obs_buf.row_mut(flat).copy_from(&obs_now.row(e));
                for j in 0..ACT_DIM {
                    act_buf[(flat, j)] = actions[e][j];
                }
                let out = envs[e].step(&actions[e]);
                rew_buf[flat] = out.reward.total();
                done_buf[flat] = out.done;
                if out.done {
                    recent.push_back((
                        envs[e].episode_reward,
                        envs[e].steps as f64,
                        envs[e].episode_traversals as f64,
                    ));
                    if recent.len() > 100 {
                        recent.pop_front();
                    }
                    if out.truncated {
                        trunc_rows.push((flat, out.observation.data));
                    }
                    let o = envs[e].reset_episode();
                    obs_now.row_mut(e).copy_from_slice(&o.data);
                } else {
                    obs_now.row_mut(e).copy_from_slice(&out.observation.data);
                }
            }
            env_steps_total += n;
        }

        // Value estimates for all stored observations plus the bootstrap row.
        let values_flat = learner.ac.values(&obs_buf);
        let values_last = learner.ac.values(&obs_now);
        let mut rew_adj = rew_buf.clone();
        if !trunc_rows.is_empty() {
            let mut tobs = DMatrix::zeros(trunc_rows.len(), OBS_DIM);
            for (r, (_, data)) in trunc_rows.iter().enumerate() {
                tobs.row_mut(r).copy_from_slice(data);
            }
            let tvals = learner.ac.values(&tobs);
            for ((flat, _), v) in trunc_rows.iter().zip(tvals.iter()) {
                rew_adj[*flat] += ppo.gamma * v;
            }
        }

        // Per-env GAE, written back into flat order.
        let mut adv_flat = vec![0.0; h * n];
        let mut ret_flat = vec![0.0; h * n];
        let mut rewards_e = vec![0.0; h];
        let mut dones_e = vec![false; h];
        let mut values_e = vec![0.0; h + 1];
        for e in 0..n {
            for t in 0..h {
                rewards_e[t] = rew_adj[t * n + e];
                dones_e[t] = done_buf[t * n + e];
                values_e[t] = values_flat[t * n + e];
            }
            values_e[h] = values_last[e];
            let (adv, ret) = compute_gae(&rewards_e, &values_e, &dones_e, ppo.gamma, ppo.gae_lambda);
            for t in 0..h {
                adv_flat[t * n + e] = adv[t];
                ret_flat[t * n + e] = ret[t];
            }
        }

        let mut batch = RolloutBatch {
            obs: obs_buf,
            actions: act_buf,
            log_probs: logp_buf,
            advantages: adv_flat,
            returns: ret_flat,
        };
        batch.normalize_advantages();
        let stats = learner.ppo_update(&batch, &ppo, &mut update_rng)?;

        let (mr, ml, mt) = if recent.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            let k = recent.len() as f64;
            (
                recent.iter().map(|r| r.0).sum::<f64>() / k,
                recent.iter().map(|r| r.1).sum::<f64>() / k,
                recent.iter().map(|r| r.2).sum::<f64>() / k,
            )
        };
        let row = IterationStats {
            iteration,
            env_steps_total,
            mean_episode_reward: mr,
            mean_episode_length: ml,
            mean_traversals: mt,
            episodes_completed: recent.len(),
            pg_loss: stats.pg_loss,
            v_loss: stats.v_loss,
            approx_kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
        };
        on_iter(&row, &learner.ac);
        history.push(row);
    }

    Ok(TrainOutcome { learner, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::seeded_rng;

    #[test]
    fn gae_gamma_zero_is_td_error() {
        let rewards = [1.0, 2.0, 3.0];
        let values = [0.5, 0.25, 0.125, 0.0625];
        let dones = [false, false, false];
        let (adv, _) = compute_gae(&rewards, &values, &dones, 0.0, 0.95);
        for t in 0..3 {
            assert!((adv[t] - (rewards[t] - values[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn gae_lambda_zero_is_one_step_td() {
        let rewards = [1.0, -1.0, 0.5, 2.0];
        let values = [0.3, -0.2, 0.9, 0.1, 0.4];
        let dones = [false, true, false, false];
        let gamma = 0.97;
        let (adv, ret) = compute_gae(&rewards, &values, &dones, gamma, 0.0);
        for t in 0..4 {
            let mask = if dones[t] { 0.0 } else { 1.0 };
            let delta = rewards[t] + gamma * values[t + 1] * mask - values[t];
            assert!((adv[t] - delta).abs() < 1e-15);
            assert!((ret[t] - (delta + values[t])).abs() < 1e-15);
        }
    }

    /// O(T²) discounted-sum oracle with done masking.
    fn gae_brute_force(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        gamma: f64,
        lambda: f64,
    ) -> Vec<f64> {
        let t_max = rewards.len();
        let delta: Vec<f64> = (0..t_max)
            .map(|t| {
                let mask = if dones[t] { 0.0 } else { 1.0 };
                rewards[t] + gamma * values[t + 1] * mask - values[t]
            })
            .collect();
        (0..t_max)
            .map(|t| {
                let mut acc = 0.0;
                let mut w = 1.0;
                for k in t..t_max {
                    acc += w * delta[k];
                    if dones[k] {
                        break;
                    }
                    w *= gamma * lambda;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn gae_matches_brute_force_oracle() {
        let mut rng = seeded_rng(21, 0);
        for _case in 0..50 {
            let t_max = 50;
            let rewards: Vec<f64> = (0..t_max).map(|_| rng.random_range(-2.0..2.0)).collect();
            let values: Vec<f64> = (0..=t_max).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dones: Vec<bool> = (0..t_max).map(|_| rng.random_range(0.0..1.0) < 0.1).collect();
            let (adv, _) = compute_gae(&rewards, &values, &dones, 0.99, 0.95);
            let oracle = gae_brute_force(&rewards, &values, &dones, 0.99, 0.95);
            for t in 0..t_max {
                assert!((adv[t] - oracle[t]).abs() < 1e-10, "t = {t}");
            }
        }
    }

    #[test]
    fn policy_outputs_bounded_and_zero_at_zero_weights() {
        let cfg = PpoConfig {
            hidden: 8,
            ..PpoConfig::default()
        };
        let mut rng = seeded_rng(22, 0);
        let mut ac = ActorCritic::new(6, 4, &cfg, &mut rng);
        ac.policy.w3 *= 0.0;
        ac.policy.b3 *= 0.0;
        let (mean, _) = ac.policy_forward(&[0.3, -0.1, 0.9, 0.0, 0.5, -0.4]).unwrap();
        assert!(mean.iter().all(|v| *v == 0.0));

        let ac = ActorCritic::new(6, 4, &cfg, &mut rng);
        for _ in 0..10_000 {
            let obs: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (mean, _) = ac.policy_forward(&obs).unwrap();
            assert!(mean.iter().all(|v| (-1.0..=1.0).contains(v)));
            let (a, _) = sample_action(&mean, &ac.log_std, &mut rng);
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn non_finite_observation_rejected() {
        let cfg = PpoConfig::default();
        let mut rng = seeded_rng(23, 0);
        let ac = ActorCritic::new(4, 4, &cfg, &mut rng);
        let obs = [1.0, f64::NAN, 0.0, 0.0];
        assert!(matches!(
            ac.policy_forward(&obs),
            Err(PolicyError::NonFiniteObservation)
        ));
    }

    /// Log-prob gradients on a toy net against central finite differences.
    #[test]
    fn log_prob_gradients_match_finite_differences() {
        let cfg = PpoConfig {
            hidden: 4,
            log_std_init: -0.3,
            ..PpoConfig::default()
        };
        let mut rng = seeded_rng(24, 0);
        let ac = ActorCritic::new(6, 2, &cfg, &mut rng);
        let obs: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let action = [0.4, -0.7];

        // Analytic gradient of logp w.r.t. policy params and log_std.
        let x = DMatrix::from_row_slice(1, 6, &obs);
        let cache = ac.policy.forward(&x);
        let mean: Vec<f64> = cache.out.row(0).iter().copied().collect();
        let mut d_mean = DMatrix::zeros(1, 2);
        let mut d_log_std = vec![0.0; 2];
        for j in 0..2 {
            let std = ac.log_std[j].exp();
            let diff = action[j] - mean[j];
            d_mean[(0, j)] = diff / (std * std);
            d_log_std[j] = diff * diff / (std * std) - 1.0;
        }
        let mut grads = ac.policy.zeros_like();
        ac.policy.backward(&cache, &d_mean, &mut grads);
        let mut analytic = Vec::new();
        grads.flatten_into(&mut analytic);
        analytic.extend_from_slice(&d_log_std);

        // Numeric gradient.
        let mut flat = Vec::new();
        ac.policy.flatten_into(&mut flat);
        flat.extend_from_slice(&ac.log_std);
        let split = ac.policy.param_count();
        let eval = |theta: &[f64]| -> f64 {
            let mut net = ac.policy.clone();
            net.unflatten_from(&theta[..split]);
            let ls = &theta[split..];
            let m = net.forward(&x).out;
            let mean_row: Vec<f64> = m.row(0).iter().copied().collect();
            log_prob(&mean_row, ls, &action)
        };
        let eps = 1e-5;
        let mut max_rel = 0.0f64;
        for i in 0..flat.len() {
            let mut tp = flat.clone();
            let mut tm = flat.clone();
            tp[i] += eps;
            tm[i] -= eps;
            let num = (eval(&tp) - eval(&tm)) / (2.0 * eps);
            let denom = num.abs().max(analytic[i].abs()).max(1e-6);
            max_rel = max_rel.max((analytic[i] - num).abs() / denom);
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    fn toy_batch(ac: &ActorCritic, n: usize, rng: &mut ChaCha8Rng) -> RolloutBatch {
        let obs = DMatrix::from_fn(n, ac.policy.in_dim(), |_, _| rng.random_range(-1.0..1.0));
        let means = ac.policy.forward(&obs).out;
        let mut actions = DMatrix::zeros(n, ac.policy.out_dim());
        let mut logp = vec![0.0; n];
        for r in 0..n {
            let mean_row: Vec<f64> = means.row(r).iter().copied().collect();
            let (a, lp) = sample_action(&mean_row, &ac.log_std, rng);
            for j in 0..ac.policy.out_dim() {
                actions[(r, j)] = a[j];
            }
            logp[r] = lp;
        }
        RolloutBatch {
            obs,
            actions,
            log_probs: logp,
            advantages: vec![0.0; n],
            returns: vec![0.0; n],
        }
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let cfg = PpoConfig {
            hidden: 8,
            epochs: 2,
            minibatch_size: 16,
            ..PpoConfig::default()
        };
        let mut rng = seeded_rng(25, 0);
        let ac = ActorCritic::new(5, 4, &cfg, &mut rng);
        let mut batch = toy_batch(&ac, 32, &mut rng);
        for (i, r) in batch.returns.iter_mut().enumerate() {
            *r = (i as f64 * 0.37).sin();
        }
        let mut learner = PpoLearner::new(ac, &cfg);
        let before_policy = {
            let mut v = Vec::new();
            learner.ac.policy.flatten_into(&mut v);
            v
        };
        let before_value = {
            let mut v = Vec::new();
            learner.ac.value.flatten_into(&mut v);
            v
        };
        let mut urng = seeded_rng(25, 1);
        learner.ppo_update(&batch, &cfg, &mut urng).unwrap();
        let after_policy = {
            let mut v = Vec::new();
            learner.ac.policy.flatten_into(&mut v);
            v
        };
        let after_value = {
            let mut v = Vec::new();
            learner.ac.value.flatten_into(&mut v);
            v
        };
        let dp: f64 = before_policy
            .iter()
            .zip(after_policy.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dv: f64 = before_value
            .iter()
            .zip(after_value.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dp < 1e-12, "policy moved by {dp} with zero advantages");
        assert!(dv > 1e-9, "value net should still learn its targets");
    }

    #[test]
    fn clipped_ratio_gives_zero_policy_gradient() {
        let cfg = PpoConfig {
            hidden: 8,
            epochs: 1,
            minibatch_size: 64,
            ..PpoConfig::default()
        };
        let mut rng = seeded_rng(26, 0);
        let ac = ActorCritic::new(5, 4, &cfg, &mut rng);
        let mut batch = toy_batch(&ac, 16, &mut rng);
        // Force ratio = 2 with positive advantages: the clipped branch is
        // selected and its gradient w.r.t. the policy is zero.
        for lp in batch.log_probs.iter_mut() {
            *lp -= 2.0f64.ln();
        }
        for a in batch.advantages.iter_mut() {
            *a = 1.0;
        }
        let mut learner = PpoLearner::new(ac, &cfg);
        let before = {
            let mut v = Vec::new();
            learner.ac.policy.flatten_into(&mut v);
            v.extend_from_slice(&learner.ac.log_std);
            v
        };
        let mut urng = seeded_rng(26, 1);
        let stats = learner.ppo_update(&batch, &cfg, &mut urng).unwrap();
        let after = {
            let mut v = Vec::new();
            learner.ac.policy.flatten_into(&mut v);
            v.extend_from_slice(&learner.ac.log_std);
            v
        };
        let dp: f64 = before
            .iter()
            .zip(after.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dp < 1e-12, "policy moved by {dp} under a fully clipped batch");
        assert!(stats.clip_fraction > 0.99);
    }

    #[test]
    fn update_is_deterministic() {
        let cfg = PpoConfig {
            hidden: 8,
            epochs: 2,
            minibatch_size: 8,
            ..PpoConfig::default()
        };
        let run_once = || {
            let mut rng = seeded_rng(27, 0);
            let ac = ActorCritic::new(5, 4, &cfg, &mut rng);
            let mut batch = toy_batch(&ac, 32, &mut rng);
            for (i, a) in batch.advantages.iter_mut().enumerate() {
                *a = ((i * 7) % 5) as f64 - 2.0;
            }
            batch.normalize_advantages();
            let mut learner = PpoLearner::new(ac, &cfg);
            let mut urng = seeded_rng(27, 1);
            learner.ppo_update(&batch, &cfg, &mut urng).unwrap();
            let mut v = Vec::new();
            learner.ac.policy.flatten_into(&mut v);
            learner.ac.value.flatten_into(&mut v);
            v
        };
        assert_eq!(run_once(), run_once());
    }
}
