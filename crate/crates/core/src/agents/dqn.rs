use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{SeDqnConfig, StageLengths};
use super::features::Featurizer;
use super::metrics::TrainingReport;
use super::select::{
    epsilon_greedy_action, loose_se_action, tight_se_action, ActionOracle, SelectionOutcome, SelectionParams, Stage,
};
use super::trainer::{run_training, uniform_index, Learner};
use crate::channel::{ScheduleAction, SysState};
use crate::env::System;
use crate::error::{Error, Result};
use crate::mdp::ActionSet;
use crate::nn::{sync_target, Adam, Gradients, Mlp, OutputActivation, ReplayMemory, SyncMode};

/// Stored transition `(s, a, â, ã, r, s⁺)` with featurized states and action
/// indices.
#[derive(Debug, Clone, PartialEq)]
pub struct DqnTransition {
    pub state: Vec<f64>,
    pub action: u32,
    pub se_action: Option<u32>,
    pub greedy: u32,
    pub reward: f64,
    pub next: Vec<f64>,
}

/// Per-transition loss: `α1·TD² + (1−α1)·AD²` when the executed action is the
/// structure-enhanced one, `TD²` otherwise.
pub fn se_transition_loss(td: f64, ad: f64, se_executed: bool, alpha1: f64) -> f64 {
    if se_executed {
        alpha1 * td * td + (1.0 - alpha1) * ad * ad
    } else {
        td * td
    }
}

pub(crate) fn stack(rows: impl ExactSizeIterator<Item = impl AsRef<[f64]>>, dim: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.enumerate() {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(Error::Shape(format!("row of length {} where {dim} was expected", r.len())));
        }
        out.row_mut(i).as_slice_mut().expect("standard layout").copy_from_slice(r);
    }
    Ok(out)
}

fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &q) in row.iter().enumerate() {
        if q > row[best] {
            best = i;
        }
    }
    best
}

/// Mean minibatch loss and its gradient. Targets use `target` and are held
/// constant.
pub fn se_dqn_loss(
    batch: &[&DqnTransition],
    qnet: &Mlp,
    target: &Mlp,
    gamma: f64,
    alpha1: f64,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty minibatch".into()));
    }
    let dim = qnet.input_dim();
    let outputs = qnet.output_dim();
    if !qnet.same_shape(target) {
        return Err(Error::Shape("online and target networks differ".into()));
    }
    let x = stack(batch.iter().map(|t| &t.state), dim)?;
    let xn = stack(batch.iter().map(|t| &t.next), dim)?;
    let next_q = target.forward(&xn)?;
    let cache = qnet.forward_cached(&x)?;
    let q = &cache.output;
    let b = batch.len() as f64;
    let mut grad = Array2::zeros((batch.len(), outputs));
    let mut loss = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let idx = [t.action as usize, t.greedy as usize];
        if idx.iter().chain(t.se_action.map(|x| x as usize).as_ref()).any(|&a| a >= outputs) {
            return Err(Error::Shape(format!("action index outside {outputs} outputs")));
        }
        let max_next = next_q.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let y = t.reward + gamma * max_next;
        let td = y - q[[i, t.action as usize]];
        match t.se_action {
            Some(se) if se == t.action => {
                let ad = q[[i, se as usize]] - q[[i, t.greedy as usize]];
                loss += se_transition_loss(td, ad, true, alpha1);
                grad[[i, t.action as usize]] -= 2.0 * alpha1 * td / b;
                grad[[i, se as usize]] += 2.0 * (1.0 - alpha1) * ad / b;
                grad[[i, t.greedy as usize]] -= 2.0 * (1.0 - alpha1) * ad / b;
            }
            _ => {
                loss += se_transition_loss(td, 0.0, false, alpha1);
                grad[[i, t.action as usize]] -= 2.0 * td / b;
            }
        }
    }
    let (grads, _) = qnet.backward(&cache, &grad)?;
    Ok((loss / b, grads))
}

/// Greedy policy of a Q-network over the enumerated action list.
#[derive(Debug, Clone)]
pub struct QPolicy {
    pub net: Mlp,
    pub featurizer: Featurizer,
    pub actions: ActionSet,
}

impl QPolicy {
    pub fn new(net: Mlp, featurizer: Featurizer, actions: ActionSet) -> Result<Self> {
        let dim = featurizer.dim(actions.sensors(), actions.channels());
        if net.input_dim() != dim || net.output_dim() != actions.len() {
            return Err(Error::Shape(format!(
                "network maps {} -> {}, expected {dim} -> {}",
                net.input_dim(),
                net.output_dim(),
                actions.len()
            )));
        }
        Ok(QPolicy {
            net,
            featurizer,
            actions,
        })
    }

    pub fn greedy_indices(&self, states: &[SysState]) -> Result<Vec<usize>> {
        let q = self.net.forward(&self.featurizer.batch(states.iter()))?;
        if q.iter().any(|x| x.is_nan()) {
            return Err(Error::Diverged("Q-network produced NaN".into()));
        }
        Ok(q.rows().into_iter().map(argmax).collect())
    }

    pub fn action(&self, state: &SysState) -> Result<ScheduleAction> {
        let i = self.greedy_indices(std::slice::from_ref(state))?[0];
        Ok(self.actions.get(i).clone())
    }
}

impl ActionOracle for QPolicy {
    fn sensors(&self) -> usize {
        self.actions.sensors()
    }
    fn channels(&self) -> usize {
        self.actions.channels()
    }
    fn greedy_batch(&mut self, states: &[SysState]) -> Result<Vec<ScheduleAction>> {
        Ok(self
            .greedy_indices(states)?
            .into_iter()
            .map(|i| self.actions.get(i).clone())
            .collect())
    }
    fn explore<R: Rng + ?Sized>(&mut self, _: &SysState, rng: &mut R) -> Result<ScheduleAction> {
        Ok(self.actions.get(uniform_index(rng, self.actions.len())).clone())
    }
}

#[derive(Debug)]
pub struct DqnOutcome {
    pub policy: QPolicy,
    pub report: TrainingReport,
}

struct DqnLearner<'a> {
    cfg: &'a SeDqnConfig,
    policy: QPolicy,
    target: Mlp,
    adam: Adam,
    replay: ReplayMemory<DqnTransition>,
    steps: usize,
}

impl DqnLearner<'_> {
    fn index(&self, a: &ScheduleAction) -> Result<u32> {
        self.policy
            .actions
            .index_of(a)
            .map(|i| i as u32)
            .ok_or_else(|| Error::validation(format!("action {a} is not in the action list")))
    }
}

impl Learner for DqnLearner<'_> {
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
            Stage::Conventional => epsilon_greedy_action(&mut self.policy, state, params.epsilon, rng),
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
        let t = DqnTransition {
            state: self.policy.featurizer.encode(state),
            action: self.index(&outcome.action)?,
            se_action: outcome.se_action.as_ref().map(|a| self.index(a)).transpose()?,
            greedy: self.index(&outcome.greedy)?,
            reward,
            next: self.policy.featurizer.encode(next),
        };
        self.replay.push(t);
        self.steps += 1;
        let common = &self.cfg.common;
        let mut loss = None;
        if self.replay.len() >= common.batch_size {
            let batch = self.replay.sample(common.batch_size, rng)?;
            let (l, grads) = se_dqn_loss(&batch, &self.policy.net, &self.target, common.gamma, common.alpha1)?;
            if !grads.is_finite() {
                return Err(Error::Diverged(format!("episode {episode}: non-finite Q-network gradient")));
            }
            let lr = common.learning_rate(self.cfg.lr, episode);
            self.adam.step(&mut self.policy.net, &grads, lr)?;
            loss = Some(l);
        }
        if self.steps.is_multiple_of(self.cfg.target_period) {
            sync_target(&mut self.target, &self.policy.net, SyncMode::Hard)?;
        }
        Ok(loss)
    }
}

/// Staged training (loose, tight, conventional) of a Q-network.
pub fn train_se_dqn(system: Arc<System>, cfg: &SeDqnConfig, seed: u64) -> Result<DqnOutcome> {
    cfg.validate()?;
    let actions = ActionSet::new(system.sensors(), system.channels())?;
    let featurizer = Featurizer {
        tau_norm: cfg.common.tau_norm,
        levels: system.channel.levels(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut widths = vec![featurizer.dim(system.sensors(), system.channels())];
    widths.extend(&cfg.common.hidden);
    widths.push(actions.len());
    let net = Mlp::new(&widths, OutputActivation::Identity, &mut rng)?;
    let mut learner = DqnLearner {
        cfg,
        target: net.clone(),
        adam: Adam::new(&net),
        policy: QPolicy::new(net, featurizer, actions)?,
        replay: ReplayMemory::new(cfg.common.replay_capacity)?,
        steps: 0,
    };
    let report = run_training(system, &cfg.common, &mut learner, &mut rng)?;
    Ok(DqnOutcome {
        policy: learner.policy,
        report,
    })
}

/// Conventional ε-greedy DQN with the same budget as `cfg`.
pub fn train_dqn(system: Arc<System>, cfg: &SeDqnConfig, seed: u64) -> Result<DqnOutcome> {
    let mut vanilla = cfg.clone();
    vanilla.common.stages = StageLengths::vanilla(cfg.common.stages.total());
    train_se_dqn(system, &vanilla, seed)
}
