//! Episode loop shared by both agents.

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use super::config::TrainingConfig;
use super::metrics::{EpisodeMetrics, RunCounters, TrainingReport};
use super::select::{SelectionOutcome, SelectionParams, Stage};
use crate::channel::SysState;
use crate::env::{EnvConfig, Environment, System};
use crate::error::{Error, Result};
use crate::estimation::RewardKind;

/// Agent-specific half of a training run.
pub(crate) trait Learner {
    fn select(
        &mut self,
        stage: Stage,
        state: &SysState,
        params: &SelectionParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<SelectionOutcome>;

    /// Stores the transition and performs the per-step update; returns the
    /// minibatch loss when an update ran.
    fn observe(
        &mut self,
        state: &SysState,
        outcome: &SelectionOutcome,
        reward: f64,
        next: &SysState,
        episode: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<f64>>;

    fn start_episode(&mut self, _episode: usize) {}
}

/// Default divisor applied to rewards before they reach a network.
pub fn default_reward_scale(system: &System, kind: RewardKind) -> f64 {
    let n = system.sensors() as f64;
    match kind {
        RewardKind::SumMse => n * system.mean_fresh_mse(),
        RewardKind::SumAoi => n,
        RewardKind::ProductMse => system.processes.iter().map(|p| p.mse_table().values()[0]).product(),
    }
}

pub(crate) fn run_training<L: Learner>(
    system: Arc<System>,
    cfg: &TrainingConfig,
    learner: &mut L,
    rng: &mut ChaCha8Rng,
) -> Result<TrainingReport> {
    let scale = cfg.reward_scale.unwrap_or_else(|| default_reward_scale(&system, cfg.reward));
    let env_cfg = EnvConfig {
        reward: cfg.reward,
        tau_cap: None,
        init_tau: cfg.init_tau.clone(),
    };
    let mut env = Environment::new(system.clone(), env_cfg, rng.next_u64())?;
    let (mut epsilon, mut xi) = cfg.exploration();
    let (n, m) = (system.sensors(), system.channels());
    let mut counters = RunCounters::default();
    let mut metrics = Vec::with_capacity(cfg.stages.total());
    for episode in 0..cfg.stages.total() {
        let stage = cfg.stages.stage_of(episode);
        env.reset()?;
        learner.start_episode(episode);
        let (mut mse_sum, mut aoi_sum, mut loss_sum, mut losses) = (0.0, 0.0, 0.0, 0usize);
        for _ in 0..cfg.steps_per_episode {
            let state = env.state().clone();
            mse_sum += system.sum_mse(&state.tau)?;
            aoi_sum += state.tau.iter().map(|&t| t as f64).sum::<f64>();
            let params = SelectionParams {
                epsilon: epsilon.value,
                xi: xi.value,
                use_channel_threshold: cfg.use_channel_threshold,
            };
            let outcome = learner.select(stage, &state, &params, rng)?;
            if !outcome.action.is_valid(n, m) {
                return Err(Error::validation(format!(
                    "episode {episode}: executed action {} violates the scheduling constraint",
                    outcome.action
                )));
            }
            counters.checked_actions += 1;
            counters.explored += outcome.explored as usize;
            counters.se_executed += outcome.executed_se() as usize;
            let step = env.step(&outcome.action)?;
            let mut reward = step.reward / scale;
            if let Some(clip) = cfg.reward_clip {
                reward = reward.max(-clip);
            }
            if !reward.is_finite() {
                return Err(Error::Diverged(format!(
                    "episode {episode}: reward overflow at AoI {:?}",
                    state.tau
                )));
            }
            if let Some(loss) = learner.observe(&state, &outcome, reward, &step.next, episode, rng)? {
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!("episode {episode}: non-finite loss")));
                }
                loss_sum += loss;
                losses += 1;
                counters.updates += 1;
            }
            counters.steps += 1;
            epsilon.advance();
            xi.advance();
        }
        let steps = cfg.steps_per_episode as f64;
        metrics.push(EpisodeMetrics {
            episode,
            stage,
            avg_sum_mse: mse_sum / steps,
            avg_sum_aoi: aoi_sum / steps,
            epsilon: epsilon.value,
            xi: xi.value,
            loss: (losses > 0).then(|| loss_sum / losses as f64),
        });
    }
    Ok(TrainingReport { metrics, counters })
}

/// Uniform index in `0..len`.
pub(crate) fn uniform_index<R: Rng + ?Sized>(rng: &mut R, len: usize) -> usize {
    rng.random_range(0..len)
}
