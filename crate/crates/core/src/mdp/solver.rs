use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::actions::ActionSet;
use super::space::StateSpace;
use crate::channel::{ChannelModel, ScheduleAction, SysState};
use crate::env::System;
use crate::error::{Error, Result};
use crate::estimation::{reward, RewardKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub gamma: f64,
    /// Stop once the sup-norm change between sweeps is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gamma: 0.95,
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::validation(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::validation("solver tolerance must be positive"));
        }
        Ok(())
    }
}

/// Per-state AoI branches of a transition: `(next AoI, probability)`. The
/// channel factor `Pr(H⁺)` is independent of state and action and is left to
/// [`ChannelModel::matrix_probability`].
pub fn transition_distribution(
    channel: &ChannelModel,
    state: &SysState,
    action: &ScheduleAction,
    tau_max: u32,
) -> Result<Vec<(Vec<u32>, f64)>> {
    state.validate(channel)?;
    action.validate(channel.sensors(), channel.channels())?;
    let mut branches: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    let aged: Vec<u32> = state.tau.iter().map(|&t| (t + 1).min(tau_max)).collect();
    let scheduled: Vec<(usize, f64)> = (0..channel.sensors())
        .filter(|&n| action.channel_of(n) > 0)
        .map(|n| {
            let p = channel.success_probability(n, action.channel_of(n) as usize - 1, &state.h)?;
            Ok((n, p))
        })
        .collect::<Result<_>>()?;
    for mask in 0u32..(1 << scheduled.len()) {
        let mut tau = aged.clone();
        let mut prob = 1.0;
        for (j, &(n, p)) in scheduled.iter().enumerate() {
            if mask >> j & 1 == 1 {
                tau[n] = 1;
                prob *= p;
            } else {
                prob *= 1.0 - p;
            }
        }
        *branches.entry(tau).or_insert(0.0) += prob;
    }
    Ok(branches.into_iter().collect())
}

/// The truncated MDP with everything a Bellman sweep needs precomputed.
#[derive(Debug, Clone)]
pub struct Mdp<'a> {
    system: &'a System,
    space: StateSpace,
    actions: ActionSet,
    reward_kind: RewardKind,
    /// `r(τ)` by AoI index.
    rewards: Vec<f64>,
    /// `Pr(H)` by channel index.
    h_prob: Vec<f64>,
    /// AoI index after every sensor ages by one (capped).
    aged: Vec<usize>,
    /// Per (AoI index, sensor): amount to subtract from `aged` when that sensor
    /// delivers, i.e. its aged digit times its positional weight.
    reset_offset: Vec<usize>,
    /// Per (channel index, action): scheduled sensors and their success rates.
    scheduled: Vec<Vec<(usize, f64)>>,
}

impl<'a> Mdp<'a> {
    pub fn new(system: &'a System, tau_max: u32, reward_kind: RewardKind) -> Result<Self> {
        let n = system.sensors();
        let space = StateSpace::new(n, system.channels(), system.channel.levels(), tau_max)?;
        let actions = ActionSet::new(n, system.channels())?;
        let mut rewards = Vec::with_capacity(space.tau_count());
        let mut aged = Vec::with_capacity(space.tau_count());
        let mut reset_offset = Vec::with_capacity(space.tau_count() * n);
        for t in 0..space.tau_count() {
            let tau = space.decode_tau(t);
            rewards.push(reward(&system.processes, &tau, reward_kind)?);
            let next: Vec<u32> = tau.iter().map(|&x| (x + 1).min(tau_max)).collect();
            aged.push(space.tau_index(&next));
            for (s, &x) in next.iter().enumerate() {
                reset_offset.push((x as usize - 1) * space.tau_weight(s));
            }
        }
        let mut h_prob = Vec::with_capacity(space.h_count());
        let mut scheduled = Vec::with_capacity(space.h_count() * actions.len());
        for hi in 0..space.h_count() {
            let h = space.decode_h(hi);
            h_prob.push(system.channel.matrix_probability(&h));
            for a in actions.iter() {
                let mut list = Vec::new();
                for s in 0..n {
                    let ch = a.channel_of(s);
                    if ch > 0 {
                        list.push((s, system.channel.success_probability(s, ch as usize - 1, &h)?));
                    }
                }
                scheduled.push(list);
            }
        }
        Ok(Mdp {
            system,
            space,
            actions,
            reward_kind,
            rewards,
            h_prob,
            aged,
            reset_offset,
            scheduled,
        })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }
    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }
    pub fn system(&self) -> &System {
        self.system
    }
    pub fn reward_kind(&self) -> RewardKind {
        self.reward_kind
    }

    /// `r(s)` by state index.
    pub fn reward(&self, state: usize) -> f64 {
        self.rewards[state / self.space.h_count()]
    }

    /// `W(τ) = Σ_H Pr(H) V(τ, H)` for every AoI index.
    pub fn channel_marginal(&self, v: &[f64]) -> Vec<f64> {
        let hc = self.space.h_count();
        v.chunks_exact(hc)
            .map(|row| row.iter().zip(&self.h_prob).map(|(x, p)| x * p).sum())
            .collect()
    }

    /// `Σ_{s⁺} Pr(s⁺|s,a) V(s⁺)` given the channel marginal of `V`.
    pub fn expected_next(&self, marginal: &[f64], state: usize, action: usize) -> f64 {
        let hc = self.space.h_count();
        let (ti, hi) = (state / hc, state % hc);
        let branches = &self.scheduled[hi * self.actions.len() + action];
        let base = self.aged[ti];
        let offsets = &self.reset_offset[ti * self.space.sensors()..(ti + 1) * self.space.sensors()];
        let mut total = 0.0;
        for mask in 0u32..(1 << branches.len()) {
            let mut prob = 1.0;
            let mut idx = base;
            for (j, &(s, p)) in branches.iter().enumerate() {
                if mask >> j & 1 == 1 {
                    prob *= p;
                    idx -= offsets[s];
                } else {
                    prob *= 1.0 - p;
                }
            }
            total += prob * marginal[idx];
        }
        total
    }

    /// One application of the Bellman optimality operator.
    pub fn bellman_backup(&self, v: &[f64], gamma: f64) -> Vec<f64> {
        let marginal = self.channel_marginal(v);
        (0..self.space.len())
            .map(|s| self.reward(s) + gamma * self.best_expected(&marginal, s))
            .collect()
    }

    /// Largest `|r(s)|`.
    pub fn reward_scale(&self) -> f64 {
        self.rewards.iter().fold(0.0, |m, r| f64::max(m, r.abs()))
    }

    /// Smallest sweep-to-sweep change that double precision can resolve for
    /// values of size `max|r|/(1−γ)`.
    pub fn precision_floor(&self, gamma: f64) -> f64 {
        32.0 * f64::EPSILON * self.reward_scale() / (1.0 - gamma)
    }

    fn best_expected(&self, marginal: &[f64], state: usize) -> f64 {
        (0..self.actions.len())
            .map(|a| self.expected_next(marginal, state, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Solved value function over the truncated space.
#[derive(Debug, Clone)]
pub struct ValueTable {
    pub values: Vec<f64>,
    pub gamma: f64,
    pub tol: f64,
    /// Sup-norm change of the final sweep.
    pub residual: f64,
    pub iterations: usize,
}

/// Value iteration from `V⁰ = 0`.
pub fn value_iteration(mdp: &Mdp<'_>, opts: &SolverOptions) -> Result<ValueTable> {
    opts.validate()?;
    let len = mdp.space.len();
    let mut v = vec![0.0; len];
    let mut next = vec![0.0; len];
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let marginal = mdp.channel_marginal(&v);
        residual = 0.0;
        for (s, slot) in next.iter_mut().enumerate() {
            let nv = mdp.reward(s) + opts.gamma * mdp.best_expected(&marginal, s);
            residual = f64::max(residual, (nv - v[s]).abs());
            *slot = nv;
        }
        std::mem::swap(&mut v, &mut next);
        if !residual.is_finite() {
            break;
        }
        if residual <= opts.tol {
            return Ok(ValueTable {
                values: v,
                gamma: opts.gamma,
                tol: opts.tol,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::Convergence {
        what: "value iteration",
        iterations: opts.max_iter,
        residual,
    })
}

/// `Q(s, a)`, row-major by state.
#[derive(Debug, Clone)]
pub struct QTable {
    values: Vec<f64>,
    actions: usize,
}

impl QTable {
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.actions + action]
    }
    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.actions..(state + 1) * self.actions]
    }
    pub fn actions(&self) -> usize {
        self.actions
    }
    pub fn states(&self) -> usize {
        self.values.len() / self.actions
    }
}

pub fn q_from_value(mdp: &Mdp<'_>, v: &ValueTable) -> QTable {
    let marginal = mdp.channel_marginal(&v.values);
    let na = mdp.actions.len();
    let mut values = Vec::with_capacity(mdp.space.len() * na);
    for s in 0..mdp.space.len() {
        let r = mdp.reward(s);
        for a in 0..na {
            values.push(r + v.gamma * mdp.expected_next(&marginal, s, a));
        }
    }
    QTable { values, actions: na }
}

/// Everything produced by an exact solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub space: StateSpace,
    pub actions: ActionSet,
    pub values: ValueTable,
    pub q: QTable,
    pub policy: Policy,
    /// Tolerance under which two Q-values count as tied.
    pub tie_tol: f64,
}

/// Builds and solves the truncated MDP. The stopping tolerance is raised to
/// [`Mdp::precision_floor`] when the requested one is below it (large
/// rewards, e.g. products of MSEs); the tolerance actually used is stored in
/// the value table. Q-values within `10·tol` of the best are recorded as ties.
pub fn solve(system: &System, tau_max: u32, reward_kind: RewardKind, opts: &SolverOptions) -> Result<Solution> {
    let mdp = Mdp::new(system, tau_max, reward_kind)?;
    let eff = SolverOptions {
        tol: opts.tol.max(mdp.precision_floor(opts.gamma)),
        ..*opts
    };
    let values = value_iteration(&mdp, &eff)?;
    let q = q_from_value(&mdp, &values);
    let tie_tol = 10.0 * eff.tol;
    let policy = greedy_policy(&q, tie_tol);
    Ok(Solution {
        space: mdp.space,
        actions: mdp.actions,
        values,
        q,
        policy,
        tie_tol,
    })
}

/// Deterministic policy over the truncated space, with the set of
/// near-optimal alternatives recorded where `Q` ties.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    actions: Vec<u32>,
    /// Empty unless several actions are within the tie tolerance; then all of
    /// them, ascending.
    ties: Vec<Vec<u32>>,
}

impl Policy {
    /// Policy without tie information, e.g. a hand-built one.
    pub fn from_actions(actions: Vec<u32>) -> Self {
        let ties = vec![Vec::new(); actions.len()];
        Policy { actions, ties }
    }

    pub fn from_fn(space: &StateSpace, set: &ActionSet, mut f: impl FnMut(&SysState) -> ScheduleAction) -> Result<Self> {
        let actions = (0..space.len())
            .map(|s| {
                let a = f(&space.decode(s));
                set.index_of(&a)
                    .map(|i| i as u32)
                    .ok_or_else(|| Error::validation(format!("policy produced invalid action {a}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self::from_actions(actions))
    }

    pub fn with_ties(actions: Vec<u32>, ties: Vec<Vec<u32>>) -> Result<Self> {
        if actions.len() != ties.len() {
            return Err(Error::validation("tie list length differs from policy length"));
        }
        Ok(Policy { actions, ties })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
    pub fn action(&self, state: usize) -> usize {
        self.actions[state] as usize
    }
    pub fn actions(&self) -> &[u32] {
        &self.actions
    }

    pub fn is_tied(&self, state: usize) -> bool {
        !self.ties[state].is_empty()
    }

    /// All actions treated as optimal at `state`.
    pub fn optimal_actions(&self, state: usize) -> &[u32] {
        if self.ties[state].is_empty() {
            std::slice::from_ref(&self.actions[state])
        } else {
            &self.ties[state]
        }
    }

    pub fn ties(&self, state: usize) -> &[u32] {
        &self.ties[state]
    }
}

/// Greedy policy with lowest-index tie-breaking; actions within `tie_tol` of
/// the best are recorded as ties.
pub fn greedy_policy(q: &QTable, tie_tol: f64) -> Policy {
    let mut actions = Vec::with_capacity(q.states());
    let mut ties = Vec::with_capacity(q.states());
    for s in 0..q.states() {
        let row = q.row(s);
        let mut best = 0;
        for (a, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = a;
            }
        }
        let near: Vec<u32> = row
            .iter()
            .enumerate()
            .filter(|&(_, &x)| row[best] - x <= tie_tol)
            .map(|(a, _)| a as u32)
            .collect();
        // lowest index among the near-optimal set
        let chosen = near[0];
        actions.push(chosen);
        ties.push(if near.len() > 1 { near } else { Vec::new() });
    }
    Policy { actions, ties }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::ProcessModel;

    fn scalar() -> ProcessModel {
        ProcessModel::scalar(1.2, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn transition_cases() {
        let ch = ChannelModel::new(2, 1, vec![0.2], vec![vec![1.0], vec![1.0]]).unwrap();
        let st = SysState::new(vec![2, 5], vec![1, 1]);
        let d = transition_distribution(&ch, &st, &ScheduleAction(vec![1, 0]), 16).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].0, vec![1, 6]);
        assert!((d[0].1 - 0.8).abs() < 1e-15);
        assert_eq!(d[1].0, vec![3, 6]);
        assert!((d[1].1 - 0.2).abs() < 1e-15);

        let capped = transition_distribution(&ch, &SysState::new(vec![16, 1], vec![1, 1]), &ScheduleAction(vec![0, 1]), 16)
            .unwrap();
        assert_eq!(capped, vec![(vec![16, 1], 0.8), (vec![16, 2], 0.19999999999999996)]);
        let total: f64 = capped.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_sensor_lossless_value_is_geometric() {
        let sys = System::new(vec![scalar()], ChannelModel::uniform(1, 1, vec![0.0]).unwrap()).unwrap();
        let mdp = Mdp::new(&sys, 4, RewardKind::SumMse).unwrap();
        let v = value_iteration(&mdp, &SolverOptions::default()).unwrap();
        let s1 = mdp.space().encode(&SysState::new(vec![1], vec![1])).unwrap();
        let r1 = -sys.processes[0].aoi_error_trace(1).unwrap();
        assert!((v.values[s1] - r1 / 0.05).abs() < 1e-6);
        // closed-form Riccati root for a = 1.2, c = w = v = 1
        let root = (1.44 + (1.44f64 * 1.44 + 4.0).sqrt()) / 2.0;
        let fresh = 1.44 * root / (root + 1.0) + 1.0;
        assert!((v.values[s1] + fresh / 0.05).abs() < 1e-6);
        assert!((v.values[s1] + 39.046).abs() < 2e-3);
        let q = q_from_value(&mdp, &v);
        let pol = greedy_policy(&q, 1e-7);
        assert!(pol.actions().iter().all(|&a| a == 0));
    }

    #[test]
    fn zero_discount_returns_reward() {
        let sys = System::new(vec![scalar(), scalar()], ChannelModel::uniform(2, 1, vec![0.3, 0.1]).unwrap()).unwrap();
        let mdp = Mdp::new(&sys, 4, RewardKind::SumMse).unwrap();
        let v = value_iteration(
            &mdp,
            &SolverOptions {
                gamma: 0.0,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        for s in 0..mdp.space().len() {
            assert_eq!(v.values[s], mdp.reward(s));
        }
    }

    #[test]
    fn solved_values_are_fixed_points_and_match_q() {
        let sys = System::new(vec![scalar(), scalar()], ChannelModel::uniform(2, 1, vec![0.3, 0.1]).unwrap()).unwrap();
        let mdp = Mdp::new(&sys, 8, RewardKind::SumMse).unwrap();
        let opts = SolverOptions::default();
        let v = value_iteration(&mdp, &opts).unwrap();
        assert!(v.residual <= opts.tol);
        let again = mdp.bellman_backup(&v.values, opts.gamma);
        let res = again.iter().zip(&v.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(res <= opts.tol);
        let q = q_from_value(&mdp, &v);
        for s in 0..mdp.space().len() {
            let best = q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((best - v.values[s]).abs() <= 10.0 * opts.tol);
            assert!(v.values[s] <= 0.0);
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let sys = System::new(vec![scalar(), scalar()], ChannelModel::uniform(2, 1, vec![0.3, 0.1]).unwrap()).unwrap();
        let mdp = Mdp::new(&sys, 4, RewardKind::SumMse).unwrap();
        let err = value_iteration(
            &mdp,
            &SolverOptions {
                max_iter: 3,
                ..SolverOptions::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Convergence { iterations: 3, .. }));
        assert!(value_iteration(&mdp, &SolverOptions { gamma: 1.0, ..SolverOptions::default() }).is_err());
    }

    #[test]
    fn greedy_breaks_ties_low_and_records_them() {
        let q = QTable {
            values: vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0 - 1e-12],
            actions: 3,
        };
        let p = greedy_policy(&q, 1e-9);
        assert_eq!(p.action(0), 0);
        assert_eq!(p.ties(0), &[0, 1]);
        assert_eq!(p.action(1), 1);
        assert_eq!(p.ties(1), &[1, 2]);
        let strict = greedy_policy(&q, 0.0);
        assert_eq!(strict.optimal_actions(1), &[1]);
    }
}
