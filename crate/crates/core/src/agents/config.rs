use std::collections::BTreeMap;

use serde::de::IgnoredAny;
use serde::{Deserialize, Serialize};

use super::select::Stage;
use crate::error::{Error, Result};
use crate::estimation::RewardKind;

/// Episode counts of the loose, tight and conventional stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageLengths {
    pub loose: usize,
    pub tight: usize,
    pub conventional: usize,
}

impl Default for StageLengths {
    fn default() -> Self {
        StageLengths {
            loose: 50,
            tight: 100,
            conventional: 150,
        }
    }
}

impl StageLengths {
    /// Only the conventional stage, `total` episodes long.
    pub fn vanilla(total: usize) -> Self {
        StageLengths {
            loose: 0,
            tight: 0,
            conventional: total,
        }
    }

    pub fn total(&self) -> usize {
        self.loose + self.tight + self.conventional
    }

    pub fn stage_of(&self, episode: usize) -> Stage {
        if episode < self.loose {
            Stage::Loose
        } else if episode < self.loose + self.tight {
            Stage::Tight
        } else {
            Stage::Conventional
        }
    }
}

/// Multiplicative decay with a floor, advanced once per environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySchedule {
    pub value: f64,
    pub rate: f64,
    pub floor: f64,
}

impl DecaySchedule {
    pub fn advance(&mut self) {
        self.value = (self.value * self.rate).max(self.floor);
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} must be positive, got {x}")))
    }
}

fn unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} must lie in [0, 1], got {x}")))
    }
}

fn reject_unknown(keys: &BTreeMap<String, IgnoredAny>) -> Result<()> {
    match keys.keys().next() {
        None => Ok(()),
        Some(k) => Err(Error::validation(format!("unknown agent setting {k:?}"))),
    }
}

/// Settings common to both agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub stages: StageLengths,
    pub steps_per_episode: usize,
    pub epsilon: f64,
    pub xi: f64,
    pub decay: f64,
    pub min_exploration: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub gamma: f64,
    pub lr_decay: f64,
    pub alpha1: f64,
    pub hidden: Vec<usize>,
    pub tau_norm: f64,
    /// Rewards are divided by this before storage; `None` uses `N · mean_n Tr(f(P̄n))`.
    pub reward_scale: Option<f64>,
    /// Scaled rewards are floored at `−reward_clip`.
    pub reward_clip: Option<f64>,
    /// Apply the channel-state check in the tight stage.
    pub use_channel_threshold: bool,
    pub reward: RewardKind,
    pub init_tau: Option<Vec<u32>>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            stages: StageLengths::default(),
            steps_per_episode: 500,
            epsilon: 1.0,
            xi: 1.0,
            decay: 0.999,
            min_exploration: 0.01,
            batch_size: 128,
            replay_capacity: 20_000,
            gamma: 0.95,
            lr_decay: 0.001,
            alpha1: 0.5,
            hidden: vec![256, 256],
            tau_norm: 20.0,
            reward_scale: None,
            reward_clip: Some(10.0),
            use_channel_threshold: true,
            reward: RewardKind::SumMse,
            init_tau: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages.total() == 0 {
            return Err(Error::validation("training needs at least one episode"));
        }
        if self.steps_per_episode == 0 || self.batch_size == 0 {
            return Err(Error::validation("steps_per_episode and batch_size must be positive"));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::validation("replay_capacity must be at least batch_size"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::validation("hidden layer widths must be positive"));
        }
        unit("epsilon", self.epsilon)?;
        unit("xi", self.xi)?;
        unit("alpha1", self.alpha1)?;
        unit("min_exploration", self.min_exploration)?;
        positive("decay", self.decay)?;
        if self.decay > 1.0 {
            return Err(Error::validation("decay must not exceed 1"));
        }
        positive("tau_norm", self.tau_norm)?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::validation(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.lr_decay >= 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::validation("lr_decay must be non-negative"));
        }
        if let Some(s) = self.reward_scale {
            positive("reward_scale", s)?;
        }
        if let Some(c) = self.reward_clip {
            positive("reward_clip", c)?;
        }
        Ok(())
    }

    pub fn exploration(&self) -> (DecaySchedule, DecaySchedule) {
        let make = |value| DecaySchedule {
            value,
            rate: self.decay,
            floor: self.min_exploration,
        };
        (make(self.epsilon), make(self.xi))
    }

    pub fn learning_rate(&self, base: f64, episode: usize) -> f64 {
        base / (1.0 + self.lr_decay * episode as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeDqnConfig {
    #[serde(flatten)]
    pub common: TrainingConfig,
    pub lr: f64,
    /// Environment steps between hard target copies.
    pub target_period: usize,
    #[serde(flatten, skip_serializing)]
    unknown: BTreeMap<String, IgnoredAny>,
}

impl Default for SeDqnConfig {
    fn default() -> Self {
        SeDqnConfig {
            common: TrainingConfig::default(),
            lr: 1e-4,
            target_period: 100,
            unknown: BTreeMap::new(),
        }
    }
}

impl SeDqnConfig {
    pub fn validate(&self) -> Result<()> {
        reject_unknown(&self.unknown)?;
        self.common.validate()?;
        positive("lr", self.lr)?;
        if self.target_period == 0 {
            return Err(Error::validation("target_period must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeDdpgConfig {
    #[serde(flatten)]
    pub common: TrainingConfig,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Soft target blend per step.
    pub delta: f64,
    pub alpha2: f64,
    pub noise_sigma: f64,
    pub noise_decay: f64,
    /// Restart the noise scale at `noise_sigma` every episode.
    pub noise_reset: bool,
    /// Penalty weight on the squared actor output.
    pub action_l2: f64,
    /// Drop the rank-invariant common component of the actor gradient.
    pub center_gradient: bool,
    #[serde(flatten, skip_serializing)]
    unknown: BTreeMap<String, IgnoredAny>,
}

impl Default for SeDdpgConfig {
    fn default() -> Self {
        SeDdpgConfig {
            common: TrainingConfig::default(),
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            delta: 0.005,
            alpha2: 0.9,
            noise_sigma: 0.3,
            noise_decay: 0.999,
            noise_reset: true,
            action_l2: 0.0,
            center_gradient: false,
            unknown: BTreeMap::new(),
        }
    }
}

impl SeDdpgConfig {
    pub fn validate(&self) -> Result<()> {
        reject_unknown(&self.unknown)?;
        self.common.validate()?;
        positive("actor_lr", self.actor_lr)?;
        positive("critic_lr", self.critic_lr)?;
        positive("delta", self.delta)?;
        unit("delta", self.delta)?;
        unit("alpha2", self.alpha2)?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::validation("noise_sigma must be non-negative"));
        }
        positive("noise_decay", self.noise_decay)?;
        if !(self.action_l2 >= 0.0 && self.action_l2.is_finite()) {
            return Err(Error::validation("action_l2 must be non-negative"));
        }
        unit("noise_decay", self.noise_decay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults() {
        let d = SeDqnConfig::default();
        assert_eq!(d.common.batch_size, 128);
        assert_eq!(d.common.replay_capacity, 20_000);
        assert_eq!(d.common.stages.total(), 300);
        assert_eq!(d.target_period, 100);
        let p = SeDdpgConfig::default();
        assert_eq!((p.actor_lr, p.critic_lr, p.delta, p.alpha2), (1e-4, 1e-3, 0.005, 0.9));
        d.validate().unwrap();
        p.validate().unwrap();
    }

    #[test]
    fn stage_boundaries() {
        let s = StageLengths::default();
        assert_eq!(s.stage_of(0), Stage::Loose);
        assert_eq!(s.stage_of(49), Stage::Loose);
        assert_eq!(s.stage_of(50), Stage::Tight);
        assert_eq!(s.stage_of(149), Stage::Tight);
        assert_eq!(s.stage_of(150), Stage::Conventional);
        assert_eq!(StageLengths::vanilla(5).stage_of(0), Stage::Conventional);
    }

    #[test]
    fn decay_is_monotone_with_floor() {
        let (mut eps, _) = TrainingConfig::default().exploration();
        let mut prev = eps.value;
        for _ in 0..10_000 {
            eps.advance();
            assert!(eps.value <= prev && eps.value >= 0.01);
            prev = eps.value;
        }
        assert_eq!(eps.value, 0.01);
    }

    #[test]
    fn learning_rate_schedule() {
        let c = TrainingConfig::default();
        assert_eq!(c.learning_rate(1e-3, 0), 1e-3);
        assert!((c.learning_rate(1e-3, 1000) - 5e-4).abs() < 1e-18);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = SeDqnConfig::default();
        c.common.gamma = 1.0;
        assert!(c.validate().is_err());
        let mut c = SeDqnConfig::default();
        c.common.stages = StageLengths::vanilla(0);
        assert!(c.validate().is_err());
        let mut c = SeDdpgConfig::default();
        c.alpha2 = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_overrides_keep_defaults() {
        let c: SeDqnConfig = toml::from_str("lr = 0.001\nhidden = [32]\n[stages]\nloose = 1\ntight = 2\nconventional = 3\n").unwrap();
        assert_eq!(c.lr, 0.001);
        assert_eq!(c.common.hidden, vec![32]);
        assert_eq!(c.common.stages.total(), 6);
        assert_eq!(c.target_period, 100);
        let bogus: SeDqnConfig = toml::from_str("bogus = 1").unwrap();
        assert!(bogus.validate().unwrap_err().to_string().contains("bogus"));
    }
}
