use serde::{Deserialize, Serialize};

use super::actions::ActionSet;
use super::solver::Policy;
use super::space::StateSpace;
use crate::channel::{ScheduleAction, SysState};
use crate::env::Environment;
use crate::error::{Error, Result};

/// Average sum MSE above which an evaluation counts as diverged.
pub const DIVERGED_MSE: f64 = 1e6;
/// AoI above which an evaluation counts as diverged.
pub const DIVERGED_AOI: u32 = 10_000;

/// Blow-up thresholds that mark an evaluation as diverged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Divergence {
    pub max_avg_mse: f64,
    pub max_aoi: u32,
}

impl Default for Divergence {
    fn default() -> Self {
        Divergence {
            max_avg_mse: DIVERGED_MSE,
            max_aoi: DIVERGED_AOI,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Mean of `Σ_n Tr(P_n,t)` over the simulated steps.
    pub avg_mse: f64,
    /// Mean of `Σ_n τ_n,t`.
    pub avg_aoi: f64,
    pub mse_trace: Vec<f64>,
    pub aoi_trace: Vec<f64>,
    /// Set when the run crossed the blow-up thresholds; the traces then stop
    /// at the step where it happened.
    pub diverged: bool,
}

/// Simulates `policy` for `steps` transitions from the environment's current
/// state, recording the sum MSE of every visited state.
pub fn evaluate_policy<F>(env: &mut Environment, policy: F, steps: usize) -> Result<EvalResult>
where
    F: FnMut(&SysState) -> Result<ScheduleAction>,
{
    evaluate_policy_with(env, policy, steps, &Divergence::default())
}

/// [`evaluate_policy`] with explicit blow-up thresholds.
pub fn evaluate_policy_with<F>(env: &mut Environment, mut policy: F, steps: usize, limits: &Divergence) -> Result<EvalResult>
where
    F: FnMut(&SysState) -> Result<ScheduleAction>,
{
    if steps == 0 {
        return Err(Error::validation("evaluation needs at least one step"));
    }
    let system = env.system().clone();
    let mut mse_trace = Vec::with_capacity(steps);
    let mut aoi_trace = Vec::with_capacity(steps);
    let mut diverged = false;
    for _ in 0..steps {
        let state = env.state().clone();
        if state.tau.iter().any(|&t| t > limits.max_aoi) {
            diverged = true;
            break;
        }
        let mse = system.sum_mse(&state.tau)?;
        mse_trace.push(mse);
        aoi_trace.push(state.tau.iter().map(|&t| t as f64).sum());
        if !mse.is_finite() {
            diverged = true;
            break;
        }
        let action = policy(&state)?;
        env.step(&action)?;
    }
    let len = mse_trace.len().max(1) as f64;
    let avg_mse = mse_trace.iter().sum::<f64>() / len;
    let avg_aoi = aoi_trace.iter().sum::<f64>() / len;
    diverged |= !(avg_mse <= limits.max_avg_mse);
    Ok(EvalResult {
        avg_mse,
        avg_aoi,
        mse_trace,
        aoi_trace,
        diverged,
    })
}

/// A solved [`Policy`] usable on unbounded states: AoI beyond `τ_max` is
/// looked up at the cap.
#[derive(Debug, Clone)]
pub struct TabularPolicy {
    space: StateSpace,
    actions: ActionSet,
    policy: Policy,
}

impl TabularPolicy {
    pub fn new(space: StateSpace, actions: ActionSet, policy: Policy) -> Result<Self> {
        if policy.len() != space.len() {
            return Err(Error::Shape(format!(
                "policy covers {} states, space has {}",
                policy.len(),
                space.len()
            )));
        }
        Ok(TabularPolicy { space, actions, policy })
    }

    pub fn action(&self, state: &SysState) -> Result<ScheduleAction> {
        let idx = self.space.encode_clamped(state)?;
        Ok(self.actions.get(self.policy.action(idx)).clone())
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }
    pub fn policy(&self) -> &Policy {
        &self.policy
    }
}
