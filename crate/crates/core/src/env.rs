//! The scheduling environment: random system generation plus step/reset.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, ScheduleAction, SysState, DEFAULT_DROP_PROB};
use crate::error::{Error, Result};
use crate::estimation::{reward, spectral_radius, ProcessModel, RewardKind};

/// Processes plus the channel model shared by them.
#[derive(Debug, Clone)]
pub struct System {
    pub processes: Vec<ProcessModel>,
    pub channel: ChannelModel,
}

impl System {
    pub fn new(processes: Vec<ProcessModel>, channel: ChannelModel) -> Result<Self> {
        if processes.len() != channel.sensors() {
            return Err(Error::validation(format!(
                "{} processes for {} sensors",
                processes.len(),
                channel.sensors()
            )));
        }
        Ok(System { processes, channel })
    }

    pub fn sensors(&self) -> usize {
        self.channel.sensors()
    }

    pub fn channels(&self) -> usize {
        self.channel.channels()
    }

    /// `Σ Tr(P_n)` at the given AoIs.
    pub fn sum_mse(&self, tau: &[u32]) -> Result<f64> {
        crate::estimation::sum_mse(&self.processes, tau)
    }

    /// Mean over sensors of `Tr(f(P̄n))`, the per-sensor MSE right after a delivery.
    pub fn mean_fresh_mse(&self) -> f64 {
        self.processes
            .iter()
            .map(|p| p.mse_table().values()[0])
            .sum::<f64>()
            / self.processes.len() as f64
    }
}

/// Knobs for [`generate_random_system`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemGenSpec {
    pub state_dim: usize,
    pub meas_dim: usize,
    /// Spectral radius is drawn uniformly from this open interval.
    pub radius_range: (f64, f64),
    pub drop_prob: Vec<f64>,
}

impl Default for SystemGenSpec {
    fn default() -> Self {
        SystemGenSpec {
            state_dim: 2,
            meas_dim: 1,
            radius_range: (1.0, 1.4),
            drop_prob: DEFAULT_DROP_PROB.to_vec(),
        }
    }
}

/// Draws `N` unstable processes and random link distributions from one seed.
///
/// `A` entries are uniform on (−1, 1) and rescaled to a spectral radius drawn
/// from `radius_range`; `C` entries are uniform on (0, 1); `W`, `V` are
/// identities. Each link distribution is a normalized vector of uniforms.
pub fn generate_random_system(sensors: usize, channels: usize, spec: &SystemGenSpec, seed: u64) -> Result<System> {
    if sensors == 0 || channels == 0 || channels > sensors {
        return Err(Error::validation(format!(
            "invalid system size: {sensors} sensors, {channels} channels"
        )));
    }
    if spec.state_dim == 0 || spec.meas_dim == 0 {
        return Err(Error::validation("process dimensions must be positive"));
    }
    let (lo, hi) = spec.radius_range;
    if !(lo >= 1.0 && hi > lo) {
        return Err(Error::validation("radius range must satisfy 1 <= lo < hi"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = spec.state_dim;
    let e = spec.meas_dim;
    let mut processes = Vec::with_capacity(sensors);
    while processes.len() < sensors {
        let a = DMatrix::from_fn(l, l, |_, _| rng.random_range(-1.0..1.0));
        let rho = spectral_radius(&a);
        let target = rng.random_range(lo..hi);
        if rho < 1e-6 || target <= lo {
            continue;
        }
        let a = a * (target / rho);
        let c = DMatrix::from_fn(e, l, |_, _| rng.random_range(0.0..1.0));
        // unobservable or borderline draws fail the Riccati solve; redraw them
        if let Ok(p) = ProcessModel::new(a, c, DMatrix::identity(l, l), DMatrix::identity(e, e)) {
            if p.spectral_radius() > lo && p.spectral_radius() < hi {
                processes.push(p);
            }
        }
    }
    let levels = spec.drop_prob.len();
    let dist = (0..sensors * channels)
        .map(|_| {
            let raw: Vec<f64> = (0..levels).map(|_| rng.random_range(f64::EPSILON..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect();
    let channel = ChannelModel::new(sensors, channels, spec.drop_prob.clone(), dist)?;
    System::new(processes, channel)
}

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: SysState,
    /// Reward of the state the action was taken in.
    pub reward: f64,
    /// Per-sensor delivery indicator.
    pub receptions: Vec<bool>,
}

/// One transition. The reward depends on the current AoI only; deliveries are
/// drawn first (one uniform per scheduled sensor, in sensor order), then the
/// next channel matrix.
pub fn env_step<R: Rng + ?Sized>(
    system: &System,
    state: &SysState,
    action: &ScheduleAction,
    reward_kind: RewardKind,
    tau_cap: Option<u32>,
    rng: &mut R,
) -> Result<StepOutcome> {
    state.validate(&system.channel)?;
    action.validate(system.sensors(), system.channels())?;
    let r = reward(&system.processes, &state.tau, reward_kind)?;
    let mut receptions = vec![false; system.sensors()];
    let mut tau = Vec::with_capacity(system.sensors());
    for (n, &t) in state.tau.iter().enumerate() {
        let ch = action.channel_of(n);
        let delivered = if ch > 0 {
            let p = system.channel.success_probability(n, ch as usize - 1, &state.h)?;
            rng.random::<f64>() < p
        } else {
            false
        };
        receptions[n] = delivered;
        let next = if delivered { 1 } else { t.saturating_add(1) };
        tau.push(match tau_cap {
            Some(cap) => next.min(cap),
            None => next,
        });
    }
    let h = system.channel.sample_channel_matrix(rng);
    Ok(StepOutcome {
        next: SysState::new(tau, h),
        reward: r,
        receptions,
    })
}

/// Fresh episode start: given AoI (all ones by default) and a sampled channel.
pub fn env_reset<R: Rng + ?Sized>(system: &System, init_tau: Option<&[u32]>, rng: &mut R) -> Result<SysState> {
    let tau = match init_tau {
        Some(t) => {
            if t.len() != system.sensors() || t.contains(&0) {
                return Err(Error::validation("initial AoI must have one entry >= 1 per sensor"));
            }
            t.to_vec()
        }
        None => vec![1; system.sensors()],
    };
    let h = system.channel.sample_channel_matrix(rng);
    Ok(SysState::new(tau, h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub reward: RewardKind,
    /// Saturate AoI here (exact-MDP parity); `None` leaves it unbounded.
    pub tau_cap: Option<u32>,
    pub init_tau: Option<Vec<u32>>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            reward: RewardKind::SumMse,
            tau_cap: None,
            init_tau: None,
        }
    }
}

/// Stateful environment owning its generator and current state.
#[derive(Debug, Clone)]
pub struct Environment {
    system: Arc<System>,
    config: EnvConfig,
    rng: ChaCha8Rng,
    state: SysState,
}

impl Environment {
    pub fn new(system: Arc<System>, config: EnvConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = env_reset(&system, config.init_tau.as_deref(), &mut rng)?;
        Ok(Environment {
            system,
            config,
            rng,
            state,
        })
    }

    pub fn system(&self) -> &Arc<System> {
        &self.system
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &SysState {
        &self.state
    }

    pub fn reset(&mut self) -> Result<SysState> {
        self.state = env_reset(&self.system, self.config.init_tau.as_deref(), &mut self.rng)?;
        Ok(self.state.clone())
    }

    pub fn step(&mut self, action: &ScheduleAction) -> Result<StepOutcome> {
        let out = env_step(
            &self.system,
            &self.state,
            action,
            self.config.reward,
            self.config.tau_cap,
            &mut self.rng,
        )?;
        self.state = out.next.clone();
        Ok(out)
    }
}
