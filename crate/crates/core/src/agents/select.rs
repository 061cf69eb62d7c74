//! Staged action selection shared by the value-based and actor-critic agents.
//!
//! The loose stage infers each sensor's channel from the greedy action at the
//! state where that sensor's AoI is one lower. The tight stage additionally
//! keeps a channel only if the greedy action still grants it when that link
//! is one level worse.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ScheduleAction, SysState};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Loose,
    Tight,
    Conventional,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Loose => "loose",
            Stage::Tight => "tight",
            Stage::Conventional => "conventional",
        }
    }
}

/// Source of greedy and exploratory actions for a learned policy.
pub trait ActionOracle {
    fn sensors(&self) -> usize;
    fn channels(&self) -> usize;
    /// Greedy action at every state of the batch.
    fn greedy_batch(&mut self, states: &[SysState]) -> Result<Vec<ScheduleAction>>;
    /// Exploratory action at `state`.
    fn explore<R: Rng + ?Sized>(&mut self, state: &SysState, rng: &mut R) -> Result<ScheduleAction>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    pub epsilon: f64,
    pub xi: f64,
    /// Tight stage only: apply the channel-state check.
    pub use_channel_threshold: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    /// Executed action; always a full assignment.
    pub action: ScheduleAction,
    /// Structure-enhanced action after channel filling, when it was admissible.
    pub se_action: Option<ScheduleAction>,
    /// Per-sensor inference before filling (possibly conflicting).
    pub proposal: Option<ScheduleAction>,
    pub greedy: ScheduleAction,
    pub explored: bool,
    pub se_constraint_met: bool,
    pub stage: Stage,
}

impl SelectionOutcome {
    /// The executed action is the structure-enhanced one.
    pub fn executed_se(&self) -> bool {
        self.se_action.as_ref() == Some(&self.action)
    }
}

/// Uniform draw over all full assignments.
pub fn random_action<R: Rng + ?Sized>(sensors: usize, channels: usize, rng: &mut R) -> ScheduleAction {
    let mut a = vec![0u8; sensors];
    for (k, s) in index::sample(rng, sensors, channels).into_iter().enumerate() {
        a[s] = k as u8 + 1;
    }
    ScheduleAction(a)
}

/// Gives every unused channel to a distinct, uniformly drawn idle sensor.
/// `partial` must use each channel at most once.
pub fn fill_channels<R: Rng + ?Sized>(partial: &ScheduleAction, channels: usize, rng: &mut R) -> ScheduleAction {
    let mut a = partial.0.clone();
    let unused: Vec<u8> = (1..=channels as u8).filter(|&m| !a.contains(&m)).collect();
    if unused.is_empty() {
        return ScheduleAction(a);
    }
    let idle: Vec<usize> = (0..a.len()).filter(|&s| a[s] == 0).collect();
    let picks = index::sample(rng, idle.len(), unused.len());
    for (m, i) in unused.into_iter().zip(picks) {
        a[idle[i]] = m;
    }
    ScheduleAction(a)
}

fn loose_proposal<O: ActionOracle, R: Rng + ?Sized>(
    oracle: &mut O,
    state: &SysState,
    xi: f64,
    rng: &mut R,
) -> Result<(ScheduleAction, Vec<u8>)> {
    let n = oracle.sensors();
    let m_count = oracle.channels();
    let mut batch = vec![state.clone()];
    let mut probe_of = vec![None; n];
    for s in 0..n {
        if state.tau[s] > 1 {
            let mut probe = state.clone();
            probe.tau[s] -= 1;
            probe_of[s] = Some(batch.len());
            batch.push(probe);
        }
    }
    let answers = oracle.greedy_batch(&batch)?;
    let greedy = answers[0].clone();
    let mut proposal = vec![0u8; n];
    for s in 0..n {
        let inferred = match probe_of[s] {
            Some(i) => answers[i].channel_of(s),
            None => 0,
        };
        proposal[s] = if inferred == 0 {
            greedy.channel_of(s)
        } else {
            let current = state.level(s, inferred as usize - 1);
            let better: Vec<u8> = (1..=m_count as u8)
                .filter(|&c| state.level(s, c as usize - 1) > current)
                .collect();
            if !better.is_empty() && rng.random::<f64>() < xi {
                better[rng.random_range(0..better.len())]
            } else {
                inferred
            }
        };
    }
    Ok((greedy, proposal))
}

fn finish<R: Rng + ?Sized>(
    greedy: ScheduleAction,
    proposal: Vec<u8>,
    sensors: usize,
    channels: usize,
    stage: Stage,
    rng: &mut R,
) -> SelectionOutcome {
    let proposal = ScheduleAction(proposal);
    if proposal.is_relaxed_valid(sensors, channels) {
        let filled = fill_channels(&proposal, channels, rng);
        SelectionOutcome {
            action: filled.clone(),
            se_action: Some(filled),
            proposal: Some(proposal),
            greedy,
            explored: false,
            se_constraint_met: true,
            stage,
        }
    } else {
        SelectionOutcome {
            action: greedy.clone(),
            se_action: None,
            proposal: Some(proposal),
            greedy,
            explored: false,
            se_constraint_met: false,
            stage,
        }
    }
}

fn explored<O: ActionOracle, R: Rng + ?Sized>(
    oracle: &mut O,
    state: &SysState,
    stage: Stage,
    rng: &mut R,
) -> Result<SelectionOutcome> {
    let greedy = oracle.greedy_batch(std::slice::from_ref(state))?.remove(0);
    let action = oracle.explore(state, rng)?;
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

pub fn loose_se_action<O: ActionOracle, R: Rng + ?Sized>(
    oracle: &mut O,
    state: &SysState,
    params: &SelectionParams,
    rng: &mut R,
) -> Result<SelectionOutcome> {
    if rng.random::<f64>() < params.epsilon {
        return explored(oracle, state, Stage::Loose, rng);
    }
    let (greedy, proposal) = loose_proposal(oracle, state, params.xi, rng)?;
    Ok(finish(greedy, proposal, oracle.sensors(), oracle.channels(), Stage::Loose, rng))
}

pub fn tight_se_action<O: ActionOracle, R: Rng + ?Sized>(
    oracle: &mut O,
    state: &SysState,
    params: &SelectionParams,
    rng: &mut R,
) -> Result<SelectionOutcome> {
    if rng.random::<f64>() < params.epsilon {
        return explored(oracle, state, Stage::Tight, rng);
    }
    let (greedy, mut proposal) = loose_proposal(oracle, state, params.xi, rng)?;
    if params.use_channel_threshold {
        let mut probes = Vec::new();
        let mut owners = Vec::new();
        for (s, &m) in proposal.iter().enumerate() {
            if m > 0 && state.level(s, m as usize - 1) > 1 {
                let mut probe = state.clone();
                probe.set_level(s, m as usize - 1, state.level(s, m as usize - 1) - 1);
                probes.push(probe);
                owners.push(s);
            }
        }
        if !probes.is_empty() {
            let answers = oracle.greedy_batch(&probes)?;
            for (s, ans) in owners.into_iter().zip(answers) {
                if ans.channel_of(s) != proposal[s] {
                    proposal[s] = greedy.channel_of(s);
                }
            }
        }
    }
    Ok(finish(greedy, proposal, oracle.sensors(), oracle.channels(), Stage::Tight, rng))
}

/// Plain ε-greedy step of the value-based agent.
pub fn epsilon_greedy_action<O: ActionOracle, R: Rng + ?Sized>(
    oracle: &mut O,
    state: &SysState,
    epsilon: f64,
    rng: &mut R,
) -> Result<SelectionOutcome> {
    if rng.random::<f64>() < epsilon {
        return explored(oracle, state, Stage::Conventional, rng);
    }
    let greedy = oracle.greedy_batch(std::slice::from_ref(state))?.remove(0);
    Ok(SelectionOutcome {
        action: greedy.clone(),
        se_action: None,
        proposal: None,
        greedy,
        explored: false,
        se_constraint_met: false,
        stage: Stage::Conventional,
    })
}
