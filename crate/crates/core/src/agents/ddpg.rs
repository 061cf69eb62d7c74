use std::sync::Arc;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{SeDdpgConfig, StageLengths};
use super::dqn::stack;
use super::features::Featurizer;
use super::metrics::TrainingReport;
use super::select::{loose_se_action, tight_se_action, ActionOracle, SelectionOutcome, SelectionParams, Stage};
use super::trainer::{run_training, Learner};
use super::virtual_action::{encode_action, map_virtual_action};
use crate::channel::{ScheduleAction, SysState};
use crate::env::System;
use crate::error::{Error, Result};
use crate::nn::{sync_target, Adam, Gradients, Mlp, OutputActivation, ReplayMemory, SyncMode};

/// Stored transition `(s, v, v̂, ṽ, r, s⁺)` with virtual actions.
#[derive(Debug, Clone, PartialEq)]
pub struct DdpgTransition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub se_action: Option<Vec<f64>>,
    pub greedy: Vec<f64>,
    pub reward: f64,
    pub next: Vec<f64>,
}

impl DdpgTransition {
    fn se_executed(&self) -> bool {
        self.se_action.as_ref() == Some(&self.action)
    }
}

/// Gradient of the actor objective with respect to the virtual action:
/// `α2·∂Q/∂ṽ + 2(1−α2)(v − ṽ)` when the executed action was the
/// structure-enhanced one, `∂Q/∂ṽ` otherwise. The actor ascends it.
pub fn actor_ascent_direction(dq_dv: &[f64], v: &[f64], v_tilde: &[f64], se_executed: bool, alpha2: f64) -> Vec<f64> {
    if se_executed {
        dq_dv
            .iter()
            .zip(v.iter().zip(v_tilde))
            .map(|(&g, (&a, &b))| alpha2 * g + 2.0 * (1.0 - alpha2) * (a - b))
            .collect()
    } else {
        dq_dv.to_vec()
    }
}

fn critic_rows<'a>(states: &[&'a [f64]], actions: &[&'a [f64]]) -> Result<Array2<f64>> {
    let d = states.first().map_or(0, |s| s.len());
    let n = actions.first().map_or(0, |a| a.len());
    let rows: Vec<Vec<f64>> = states
        .iter()
        .zip(actions)
        .map(|(s, a)| s.iter().chain(a.iter()).copied().collect())
        .collect();
    stack(rows.iter(), d + n)
}

/// Critic loss (same TD/AD form as the value-based agent) and its gradient.
/// The target is `r + γ Q̂(s⁺, μ̂(s⁺))` with the target actor's raw output.
pub fn se_ddpg_critic_loss(
    batch: &[&DdpgTransition],
    critic: &Mlp,
    target_actor: &Mlp,
    target_critic: &Mlp,
    gamma: f64,
    alpha1: f64,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty minibatch".into()));
    }
    let d = target_actor.input_dim();
    let xn = stack(batch.iter().map(|t| &t.next), d)?;
    let vn = target_actor.forward(&xn)?;
    let next_states: Vec<&[f64]> = batch.iter().map(|t| t.next.as_slice()).collect();
    let next_actions: Vec<&[f64]> = vn.rows().into_iter().map(|r| r.to_slice().expect("contiguous row")).collect();
    let q_next = target_critic.forward(&critic_rows(&next_states, &next_actions)?)?;

    // rows: (s, v) for every transition, then (s, v̂), (s, ṽ) for the SE ones
    let mut states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
    let mut actions: Vec<&[f64]> = batch.iter().map(|t| t.action.as_slice()).collect();
    let mut se_rows = Vec::new();
    for (i, t) in batch.iter().enumerate() {
        if let (true, Some(se)) = (t.se_executed(), &t.se_action) {
            se_rows.push((i, states.len()));
            states.extend([t.state.as_slice(), t.state.as_slice()]);
            actions.extend([se.as_slice(), t.greedy.as_slice()]);
        }
    }
    let cache = critic.forward_cached(&critic_rows(&states, &actions)?)?;
    let q = &cache.output;
    let b = batch.len() as f64;
    let mut grad = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    let mut se_iter = se_rows.iter().peekable();
    for (i, t) in batch.iter().enumerate() {
        let y = t.reward + gamma * q_next[[i, 0]];
        let td = y - q[[i, 0]];
        match se_iter.next_if(|(k, _)| *k == i) {
            Some(&(_, row)) => {
                let ad = q[[row, 0]] - q[[row + 1, 0]];
                loss += alpha1 * td * td + (1.0 - alpha1) * ad * ad;
                grad[[i, 0]] -= 2.0 * alpha1 * td / b;
                grad[[row, 0]] += 2.0 * (1.0 - alpha1) * ad / b;
                grad[[row + 1, 0]] -= 2.0 * (1.0 - alpha1) * ad / b;
            }
            None => {
                loss += td * td;
                grad[[i, 0]] -= 2.0 * td / b;
            }
        }
    }
    let (grads, _) = critic.backward(&cache, &grad)?;
    Ok((loss / b, grads))
}

/// Actor objective `mean_i J_i` with `ṽ_i = μ(s_i)` and the gradient of
/// `−mean_i J_i` (ready for a descent step). `action_l2` subtracts
/// `λ‖μ(s)‖²` from every `J_i`. With `center` the per-sample ascent direction
/// loses its mean component, which does not change the ranking.
pub fn se_ddpg_actor_loss(
    batch: &[&DdpgTransition],
    actor: &Mlp,
    critic: &Mlp,
    alpha2: f64,
    action_l2: f64,
    center: bool,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty minibatch".into()));
    }
    let d = actor.input_dim();
    let n = actor.output_dim();
    let x = stack(batch.iter().map(|t| &t.state), d)?;
    let actor_cache = actor.forward_cached(&x)?;
    let mu = &actor_cache.output;
    let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
    let actions: Vec<&[f64]> = mu.rows().into_iter().map(|r| r.to_slice().expect("contiguous row")).collect();
    let critic_cache = critic.forward_cached(&critic_rows(&states, &actions)?)?;
    let (_, dx) = critic.backward(&critic_cache, &Array2::ones((batch.len(), 1)))?;
    let b = batch.len() as f64;
    let mut upstream = Array2::zeros((batch.len(), n));
    let mut objective = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let se = t.se_executed();
        let q = critic_cache.output[[i, 0]];
        let v_tilde = mu.row(i).to_vec();
        let dev: f64 = t.action.iter().zip(&v_tilde).map(|(a, b)| (a - b).powi(2)).sum();
        let norm: f64 = v_tilde.iter().map(|x| x * x).sum();
        objective += if se { alpha2 * q - (1.0 - alpha2) * dev } else { q } - action_l2 * norm;
        let dq = dx.slice(s![i, d..]).to_vec();
        let mut ascent = actor_ascent_direction(&dq, &t.action, &v_tilde, se, alpha2);
        for (g, x) in ascent.iter_mut().zip(&v_tilde) {
            *g -= 2.0 * action_l2 * x;
        }
        if center {
            let mean = ascent.iter().sum::<f64>() / n as f64;
            ascent.iter_mut().for_each(|g| *g -= mean);
        }
        for (k, g) in ascent.into_iter().enumerate() {
            upstream[[i, k]] = -g / b;
        }
    }
    let (grads, _) = actor.backward(&actor_cache, &upstream)?;
    Ok((objective / b, grads))
}

/// Deterministic actor with ranking-based action mapping.
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    pub net: Mlp,
    pub featurizer: Featurizer,
    pub channels: usize,
    /// Standard deviation of the exploration noise added to raw outputs.
    pub noise_sigma: f64,
    /// Noisy output behind the last exploratory action.
    noisy: Option<Vec<f64>>,
}

impl ActorPolicy {
    pub fn new(net: Mlp, featurizer: Featurizer, channels: usize, noise_sigma: f64) -> Self {
        ActorPolicy {
            net,
            featurizer,
            channels,
            noise_sigma,
            noisy: None,
        }
    }

    pub fn sensors(&self) -> usize {
        self.net.output_dim()
    }

    pub fn raw(&self, state: &SysState) -> Result<Vec<f64>> {
        let x = self.featurizer.batch(std::iter::once(state));
        Ok(self.net.forward(&x)?.row(0).to_vec())
    }

    pub fn action(&self, state: &SysState) -> Result<ScheduleAction> {
        map_virtual_action(&self.raw(state)?, self.channels).map(|(_, a)| a)
    }
}

impl ActionOracle for ActorPolicy {
    fn sensors(&self) -> usize {
        self.net.output_dim()
    }
    fn channels(&self) -> usize {
        self.channels
    }
    fn greedy_batch(&mut self, states: &[SysState]) -> Result<Vec<ScheduleAction>> {
        let raw = self.net.forward(&self.featurizer.batch(states.iter()))?;
        raw.rows()
            .into_iter()
            .map(|r| map_virtual_action(&r.to_vec(), self.channels).map(|(_, a)| a))
            .collect()
    }
    fn explore<R: Rng + ?Sized>(&mut self, state: &SysState, rng: &mut R) -> Result<ScheduleAction> {
        let noise = Normal::new(0.0, self.noise_sigma).map_err(|e| Error::validation(e.to_string()))?;
        let raw: Vec<f64> = self.raw(state)?.into_iter().map(|x| x + noise.sample(rng)).collect();
        let (_, a) = map_virtual_action(&raw, self.channels)?;
        self.noisy = Some(raw);
        Ok(a)
    }
}

#[derive(Debug)]
pub struct DdpgOutcome {
    pub policy: ActorPolicy,
    pub critic: Mlp,
    pub report: TrainingReport,
}

struct DdpgLearner<'a> {
    cfg: &'a SeDdpgConfig,
    policy: ActorPolicy,
    critic: Mlp,
    target_actor: Mlp,
    target_critic: Mlp,
    actor_adam: Adam,
    critic_adam: Adam,
    replay: ReplayMemory<DdpgTransition>,
}

impl Learner for DdpgLearner<'_> {
    fn select(
        &mut self,
        stage: Stage,
        state: &SysState,
        params: &SelectionParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<SelectionOutcome> {
        match stage {
            Stage::Loose => loose_se_action(&mut self.policy, state, params, rng),
            Stage::Tight => tight_se_action(&mut self.policy, state, params, rng),
            Stage::Conventional => {
                let greedy = self.policy.action(state)?;
                let action = self.policy.explore(state, rng)?;
                Ok(SelectionOutcome {
                    action,
                    se_action: None,
                    proposal: None,
                    greedy,
                    explored: true,
                    se_constraint_met: false,
                    stage,
                })
            }
        }
    }

    fn observe(
        &mut self,
        state: &SysState,
        outcome: &SelectionOutcome,
        reward: f64,
        next: &SysState,
        episode: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<f64>> {
        let m = self.policy.channels;
        let raw = self.policy.raw(state)?;
        let noisy = self.policy.noisy.take();
        // the continuous output behind a discrete action, when there is one
        let virtual_of = |a: &ScheduleAction| -> Result<Vec<f64>> {
            match (&noisy, outcome.explored) {
                (Some(v), true) if a == &outcome.action => Ok(v.clone()),
                _ if a == &outcome.greedy => Ok(raw.clone()),
                _ => encode_action(a, m, Some(&raw)),
            }
        };
        let t = DdpgTransition {
            state: self.policy.featurizer.encode(state),
            action: virtual_of(&outcome.action)?,
            se_action: outcome.se_action.as_ref().map(virtual_of).transpose()?,
            greedy: raw.clone(),
            reward,
            next: self.policy.featurizer.encode(next),
        };
        self.replay.push(t);
        self.policy.noise_sigma *= self.cfg.noise_decay;
        let common = &self.cfg.common;
        if self.replay.len() < common.batch_size {
            return Ok(None);
        }
        let batch = self.replay.sample(common.batch_size, rng)?;
        let (critic_loss, grads) = se_ddpg_critic_loss(
            &batch,
            &self.critic,
            &self.target_actor,
            &self.target_critic,
            common.gamma,
            common.alpha1,
        )?;
        if !grads.is_finite() {
            return Err(Error::Diverged(format!("episode {episode}: non-finite critic gradient")));
        }
        let critic_lr = common.learning_rate(self.cfg.critic_lr, episode);
        self.critic_adam.step(&mut self.critic, &grads, critic_lr)?;
        let (_, grads) = se_ddpg_actor_loss(&batch, &self.policy.net, &self.critic, self.cfg.alpha2, self.cfg.action_l2, self.cfg.center_gradient)?;
        if !grads.is_finite() {
            return Err(Error::Diverged(format!("episode {episode}: non-finite actor gradient")));
        }
        let actor_lr = common.learning_rate(self.cfg.actor_lr, episode);
        self.actor_adam.step(&mut self.policy.net, &grads, actor_lr)?;
        sync_target(&mut self.target_critic, &self.critic, SyncMode::Soft(self.cfg.delta))?;
        sync_target(&mut self.target_actor, &self.policy.net, SyncMode::Soft(self.cfg.delta))?;
        Ok(Some(critic_loss))
    }

    fn start_episode(&mut self, _episode: usize) {
        if self.cfg.noise_reset {
            self.policy.noise_sigma = self.cfg.noise_sigma;
        }
    }
}

/// Staged actor-critic training over virtual actions.
pub fn train_se_ddpg(system: Arc<System>, cfg: &SeDdpgConfig, seed: u64) -> Result<DdpgOutcome> {
    cfg.validate()?;
    let (n, m) = (system.sensors(), system.channels());
    let featurizer = Featurizer {
        tau_norm: cfg.common.tau_norm,
        levels: system.channel.levels(),
    };
    let d = featurizer.dim(n, m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = |input: usize, output: usize| {
        let mut w = vec![input];
        w.extend(&cfg.common.hidden);
        w.push(output);
        w
    };
    let actor = Mlp::new(&widths(d, n), OutputActivation::Tanh, &mut rng)?;
    let critic = Mlp::new(&widths(d + n, 1), OutputActivation::Identity, &mut rng)?;
    let mut learner = DdpgLearner {
        cfg,
        target_actor: actor.clone(),
        target_critic: critic.clone(),
        actor_adam: Adam::new(&actor),
        critic_adam: Adam::new(&critic),
        policy: ActorPolicy::new(actor, featurizer, m, cfg.noise_sigma),
        critic,
        replay: ReplayMemory::new(cfg.common.replay_capacity)?,
    };
    let report = run_training(system, &cfg.common, &mut learner, &mut rng)?;
    Ok(DdpgOutcome {
        policy: learner.policy,
        critic: learner.critic,
        report,
    })
}

/// Conventional DDPG with the same budget as `cfg`.
pub fn train_ddpg(system: Arc<System>, cfg: &SeDdpgConfig, seed: u64) -> Result<DdpgOutcome> {
    let mut vanilla = cfg.clone();
    vanilla.common.stages = StageLengths::vanilla(cfg.common.stages.total());
    train_se_ddpg(system, &vanilla, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascent_direction_hand_example() {
        // ∂Q/∂ṽ = 2, v − ṽ = 0.1, α2 = 0.9
        let g = actor_ascent_direction(&[2.0], &[0.6], &[0.5], true, 0.9);
        assert!((g[0] - 1.82).abs() < 1e-12);
        assert_eq!(actor_ascent_direction(&[2.0], &[0.6], &[0.5], false, 0.9), vec![2.0]);
        assert_eq!(actor_ascent_direction(&[2.0, -1.0], &[0.6, 0.1], &[0.5, 0.3], true, 1.0), vec![2.0, -1.0]);
        let same = actor_ascent_direction(&[0.0], &[0.4], &[0.4], true, 0.5);
        assert_eq!(same, vec![0.0]);
    }

    fn nets(seed: u64, d: usize, n: usize) -> (Mlp, Mlp) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (
            Mlp::new(&[d, 6, n], OutputActivation::Tanh, &mut rng).unwrap(),
            Mlp::new(&[d + n, 6, 1], OutputActivation::Identity, &mut rng).unwrap(),
        )
    }

    fn sample_batch(seed: u64, d: usize, n: usize, m: usize) -> Vec<DdpgTransition> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..6)
            .map(|i| {
                let state: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
                let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let (v, _) = map_virtual_action(&raw, m).unwrap();
                let greedy: Vec<f64> = v.iter().rev().copied().collect();
                DdpgTransition {
                    state,
                    se_action: (i % 2 == 0).then(|| v.clone()),
                    action: v,
                    greedy,
                    reward: -rng.random_range(0.0..2.0),
                    next: (0..d).map(|_| rng.random_range(0.0..1.0)).collect(),
                }
            })
            .collect()
    }

    #[test]
    fn alpha2_one_matches_vanilla_actor_gradient() {
        let (actor, critic) = nets(1, 5, 3);
        let batch = sample_batch(2, 5, 3, 2);
        let refs: Vec<_> = batch.iter().collect();
        let plain: Vec<DdpgTransition> = batch
            .iter()
            .cloned()
            .map(|mut t| {
                t.se_action = None;
                t
            })
            .collect();
        let plain_refs: Vec<_> = plain.iter().collect();
        let (j1, g1) = se_ddpg_actor_loss(&refs, &actor, &critic, 1.0, 0.0, false).unwrap();
        let (j2, g2) = se_ddpg_actor_loss(&plain_refs, &actor, &critic, 1.0, 0.0, false).unwrap();
        assert!((j1 - j2).abs() < 1e-15);
        for (a, b) in g1.layers.iter().zip(&g2.layers) {
            assert!(a.w.iter().zip(&b.w).all(|(x, y)| (x - y).abs() < 1e-15));
        }
        let (_, g3) = se_ddpg_actor_loss(&refs, &actor, &critic, 0.5, 0.0, false).unwrap();
        assert!(g3.layers[0].w.iter().zip(&g1.layers[0].w).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let (n, m, d) = (3, 2, 4);
        let (actor, critic) = nets(3, d, n);
        let (_, target_critic) = nets(4, d, n);
        let batch = sample_batch(5, d, n, m);
        let refs: Vec<_> = batch.iter().collect();
        let (_, grads) = se_ddpg_critic_loss(&refs, &critic, &actor, &target_critic, 0.9, 0.4).unwrap();
        let h = 1e-6;
        for (li, layer) in critic.layers().iter().enumerate() {
            for (idx, _) in layer.w.indexed_iter() {
                let eval = |delta: f64| {
                    let mut c = critic.clone();
                    c.layers_mut()[li].w[idx] += delta;
                    se_ddpg_critic_loss(&refs, &c, &actor, &target_critic, 0.9, 0.4).unwrap().0
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let analytic = grads.layers[li].w[idx];
                assert!((numeric - analytic).abs() <= 1e-6 * numeric.abs().max(1.0), "{numeric} vs {analytic}");
            }
        }
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let (n, m, d) = (3, 2, 4);
        let (actor, critic) = nets(7, d, n);
        let batch = sample_batch(8, d, n, m);
        let refs: Vec<_> = batch.iter().collect();
        let (_, grads) = se_ddpg_actor_loss(&refs, &actor, &critic, 0.7, 0.05, false).unwrap();
        let h = 1e-6;
        for (li, layer) in actor.layers().iter().enumerate() {
            for (idx, _) in layer.w.indexed_iter() {
                let eval = |delta: f64| {
                    let mut a = actor.clone();
                    a.layers_mut()[li].w[idx] += delta;
                    se_ddpg_actor_loss(&refs, &a, &critic, 0.7, 0.05, false).unwrap().0
                };
                // grads are of the negated objective
                let numeric = -(eval(h) - eval(-h)) / (2.0 * h);
                let analytic = grads.layers[li].w[idx];
                assert!((numeric - analytic).abs() <= 1e-6 * numeric.abs().max(1.0), "{numeric} vs {analytic}");
            }
        }
    }

    #[test]
    fn actor_step_increases_objective() {
        let (n, m, d) = (3, 2, 4);
        let (mut actor, critic) = nets(7, d, n);
        let batch = sample_batch(8, d, n, m);
        let refs: Vec<_> = batch.iter().collect();
        let (j0, grads) = se_ddpg_actor_loss(&refs, &actor, &critic, 0.9, 0.0, false).unwrap();
        let mut adam = Adam::new(&actor);
        adam.step(&mut actor, &grads, 1e-4).unwrap();
        let (j1, _) = se_ddpg_actor_loss(&refs, &actor, &critic, 0.9, 0.0, false).unwrap();
        assert!(j1 > j0);
    }

    #[test]
    fn centered_direction_has_zero_mean() {
        let (n, m, d) = (3, 2, 4);
        let (_, critic) = nets(9, d, n);
        // identity output so the bias gradient is the plain column sum
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let actor = Mlp::new(&[d, 6, n], OutputActivation::Identity, &mut rng).unwrap();
        let batch = sample_batch(10, d, n, m);
        let refs: Vec<_> = batch.iter().collect();
        let (_, plain) = se_ddpg_actor_loss(&refs, &actor, &critic, 0.9, 0.0, false).unwrap();
        let (_, centered) = se_ddpg_actor_loss(&refs, &actor, &critic, 0.9, 0.0, true).unwrap();
        let last = plain.layers.len() - 1;
        let sum: f64 = centered.layers[last].b.iter().sum();
        assert!(sum.abs() < 1e-12, "{sum}");
        assert!(plain.layers[last].b.iter().sum::<f64>().abs() > 1e-9);
    }
}
