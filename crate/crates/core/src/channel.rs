//! Quantized i.i.d. block-fading channels, system state and schedule actions.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Drop probabilities for five quantized channel levels, worst to best.
pub const DEFAULT_DROP_PROB: [f64; 5] = [0.2, 0.15, 0.1, 0.05, 0.01];

const DIST_TOL: f64 = 1e-9;

/// Channel statistics for `N` sensors and `M` channels.
///
/// Levels are 1-based (`1..=levels`), higher is better. `dist[n * M + m]` is
/// the level distribution of the (sensor `n`, channel `m`) link, both 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelParts")]
pub struct ChannelModel {
    sensors: usize,
    channels: usize,
    drop_prob: Vec<f64>,
    dist: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelParts {
    sensors: usize,
    channels: usize,
    drop_prob: Vec<f64>,
    dist: Vec<Vec<f64>>,
}

impl TryFrom<ChannelParts> for ChannelModel {
    type Error = Error;

    fn try_from(p: ChannelParts) -> Result<Self> {
        ChannelModel::new(p.sensors, p.channels, p.drop_prob, p.dist)
    }
}

impl ChannelModel {
    pub fn new(sensors: usize, channels: usize, drop_prob: Vec<f64>, dist: Vec<Vec<f64>>) -> Result<Self> {
        if sensors == 0 || channels == 0 {
            return Err(Error::validation("need at least one sensor and one channel"));
        }
        if channels > sensors {
            return Err(Error::validation(format!(
                "more channels ({channels}) than sensors ({sensors})"
            )));
        }
        let levels = drop_prob.len();
        if levels == 0 || levels > u8::MAX as usize {
            return Err(Error::validation(format!("number of channel levels must be in 1..=255, got {levels}")));
        }
        if drop_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::validation("drop probabilities must lie in [0, 1]"));
        }
        if drop_prob.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::validation("drop probabilities must be non-increasing in the channel level"));
        }
        if dist.len() != sensors * channels {
            return Err(Error::validation(format!(
                "expected {} level distributions, got {}",
                sensors * channels,
                dist.len()
            )));
        }
        for (k, q) in dist.iter().enumerate() {
            if q.len() != levels {
                return Err(Error::validation(format!(
                    "distribution for link ({}, {}) has {} entries, expected {levels}",
                    k / channels + 1,
                    k % channels + 1,
                    q.len()
                )));
            }
            if q.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (q.iter().sum::<f64>() - 1.0).abs() > DIST_TOL {
                return Err(Error::validation(format!(
                    "distribution for link ({}, {}) is not a probability vector",
                    k / channels + 1,
                    k % channels + 1
                )));
            }
        }
        Ok(ChannelModel {
            sensors,
            channels,
            drop_prob,
            dist,
        })
    }

    /// Every link uniformly distributed over the levels.
    pub fn uniform(sensors: usize, channels: usize, drop_prob: Vec<f64>) -> Result<Self> {
        let levels = drop_prob.len().max(1);
        let q = vec![1.0 / levels as f64; levels];
        Self::new(sensors, channels, drop_prob, vec![q; sensors * channels])
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn levels(&self) -> usize {
        self.drop_prob.len()
    }
    pub fn drop_prob(&self) -> &[f64] {
        &self.drop_prob
    }
    pub fn distributions(&self) -> &[Vec<f64>] {
        &self.dist
    }

    /// `q^{(n,m)}` for 0-based sensor and channel.
    pub fn link_distribution(&self, sensor: usize, channel: usize) -> &[f64] {
        &self.dist[sensor * self.channels + channel]
    }

    /// Packet success rate at a given 1-based level.
    pub fn level_success(&self, level: u8) -> f64 {
        1.0 - self.drop_prob[level as usize - 1]
    }

    /// `p_{n,m} = 1 − p̃_{h_{n,m}}` for 0-based sensor and channel.
    pub fn success_probability(&self, sensor: usize, channel: usize, h: &[u8]) -> Result<f64> {
        if sensor >= self.sensors || channel >= self.channels {
            return Err(Error::validation(format!(
                "link ({sensor}, {channel}) out of range for {}x{} system",
                self.sensors, self.channels
            )));
        }
        if h.len() != self.sensors * self.channels {
            return Err(Error::validation("channel matrix has wrong size"));
        }
        let level = h[sensor * self.channels + channel];
        if level == 0 || level as usize > self.levels() {
            return Err(Error::validation(format!("channel level {level} out of range")));
        }
        Ok(self.level_success(level))
    }

    /// Draws a fresh channel matrix, each link independently.
    pub fn sample_channel_matrix<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u8> {
        self.dist.iter().map(|q| sample_level(q, rng)).collect()
    }

    /// `Pr(H)` under the product distribution.
    pub fn matrix_probability(&self, h: &[u8]) -> f64 {
        self.dist
            .iter()
            .zip(h)
            .map(|(q, &lvl)| q[lvl as usize - 1])
            .product()
    }
}

fn sample_level<R: Rng + ?Sized>(q: &[f64], rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in q.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u8 + 1;
        }
    }
    // rounding left a sliver above the cumulative sum; take the last level with mass
    q.iter().rposition(|&p| p > 0.0).unwrap_or(q.len() - 1) as u8 + 1
}

/// MDP state: per-sensor AoI and the `N × M` channel-level matrix (row-major).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SysState {
    pub tau: Vec<u32>,
    pub h: Vec<u8>,
}

impl SysState {
    pub fn new(tau: Vec<u32>, h: Vec<u8>) -> Self {
        SysState { tau, h }
    }

    pub fn sensors(&self) -> usize {
        self.tau.len()
    }

    /// Channel level of 0-based (sensor, channel).
    pub fn level(&self, sensor: usize, channel: usize) -> u8 {
        let m = self.h.len() / self.tau.len();
        self.h[sensor * m + channel]
    }

    pub fn set_level(&mut self, sensor: usize, channel: usize, level: u8) {
        let m = self.h.len() / self.tau.len();
        self.h[sensor * m + channel] = level;
    }

    pub fn validate(&self, model: &ChannelModel) -> Result<()> {
        if self.tau.len() != model.sensors() || self.h.len() != model.sensors() * model.channels() {
            return Err(Error::validation("state dimensions do not match the channel model"));
        }
        if self.tau.contains(&0) {
            return Err(Error::validation("AoI entries must be at least 1"));
        }
        if self.h.iter().any(|&l| l == 0 || l as usize > model.levels()) {
            return Err(Error::validation("channel level out of range"));
        }
        Ok(())
    }
}

/// Channel assignment per sensor: 0 = idle, `m ∈ 1..=M` = transmit on channel `m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScheduleAction(pub Vec<u8>);

impl ScheduleAction {
    pub fn idle(sensors: usize) -> Self {
        ScheduleAction(vec![0; sensors])
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    /// 1-based channel of a 0-based sensor, 0 when idle.
    pub fn channel_of(&self, sensor: usize) -> u8 {
        self.0[sensor]
    }

    /// 0-based sensor holding 1-based `channel`.
    pub fn holder_of(&self, channel: u8) -> Option<usize> {
        self.0.iter().position(|&c| c == channel)
    }

    /// Every channel used by at most one sensor.
    pub fn is_relaxed_valid(&self, sensors: usize, channels: usize) -> bool {
        if self.0.len() != sensors || self.0.iter().any(|&c| c as usize > channels) {
            return false;
        }
        let mut seen = vec![false; channels + 1];
        for &c in &self.0 {
            if c > 0 {
                if seen[c as usize] {
                    return false;
                }
                seen[c as usize] = true;
            }
        }
        true
    }

    /// Every channel used by exactly one sensor.
    pub fn is_valid(&self, sensors: usize, channels: usize) -> bool {
        self.is_relaxed_valid(sensors, channels) && self.0.iter().filter(|&&c| c > 0).count() == channels
    }

    pub fn validate(&self, sensors: usize, channels: usize) -> Result<()> {
        if self.is_valid(sensors, channels) {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "action {self} violates the scheduling constraint for {sensors} sensors and {channels} channels"
            )))
        }
    }
}

impl fmt::Display for ScheduleAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_distribution_always_returns_its_level() {
        let model = ChannelModel::new(1, 1, DEFAULT_DROP_PROB.to_vec(), vec![vec![0.0, 0.0, 0.0, 0.0, 1.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(model.sample_channel_matrix(&mut rng), vec![5]);
        }
    }

    #[test]
    fn uniform_levels_match_binomial_band() {
        let model = ChannelModel::uniform(1, 1, DEFAULT_DROP_PROB.to_vec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            counts[model.sample_channel_matrix(&mut rng)[0] as usize - 1] += 1;
        }
        let sigma = (draws as f64 * 0.2 * 0.8).sqrt();
        for c in counts {
            assert!((c as f64 - 0.2 * draws as f64).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let model = ChannelModel::uniform(3, 2, DEFAULT_DROP_PROB.to_vec()).unwrap();
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..10).map(|_| model.sample_channel_matrix(&mut rng)).collect()
        };
        let b: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..10).map(|_| model.sample_channel_matrix(&mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn success_probability_per_level() {
        let model = ChannelModel::uniform(2, 1, DEFAULT_DROP_PROB.to_vec()).unwrap();
        assert!((model.success_probability(0, 0, &[5, 1]).unwrap() - 0.99).abs() < 1e-12);
        assert!((model.success_probability(1, 0, &[5, 1]).unwrap() - 0.8).abs() < 1e-12);
        assert!(model.success_probability(2, 0, &[5, 1]).is_err());
        assert!(model.success_probability(0, 1, &[5, 1]).is_err());
        let lossless = ChannelModel::uniform(1, 1, vec![0.0; 3]).unwrap();
        for lvl in 1..=3 {
            assert_eq!(lossless.success_probability(0, 0, &[lvl]).unwrap(), 1.0);
        }
    }

    #[test]
    fn model_validation() {
        let d = DEFAULT_DROP_PROB.to_vec();
        assert!(ChannelModel::uniform(1, 2, d.clone()).is_err());
        assert!(ChannelModel::uniform(2, 1, vec![0.1, 0.2]).is_err());
        assert!(ChannelModel::new(1, 1, d.clone(), vec![vec![0.5, 0.5, 0.1, 0.0, 0.0]]).is_err());
        assert!(ChannelModel::new(1, 1, d, vec![vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn action_constraints() {
        assert!(ScheduleAction(vec![1, 0]).is_valid(2, 1));
        assert!(!ScheduleAction(vec![0, 0]).is_valid(2, 1));
        assert!(ScheduleAction(vec![0, 0]).is_relaxed_valid(2, 1));
        assert!(!ScheduleAction(vec![1, 1]).is_relaxed_valid(2, 1));
        assert!(!ScheduleAction(vec![2, 0]).is_relaxed_valid(2, 1));
        assert!(ScheduleAction(vec![2, 0, 1]).is_valid(3, 2));
        assert!(ScheduleAction(vec![2, 0, 1]).validate(3, 1).is_err());
        assert_eq!(ScheduleAction(vec![2, 0, 1]).holder_of(1), Some(2));
        assert_eq!(ScheduleAction(vec![2, 0, 1]).to_string(), "(2,0,1)");
    }

    #[test]
    fn matrix_probability_is_product() {
        let model = ChannelModel::new(
            2,
            1,
            vec![0.3, 0.1],
            vec![vec![0.25, 0.75], vec![0.6, 0.4]],
        )
        .unwrap();
        assert!((model.matrix_probability(&[2, 1]) - 0.75 * 0.6).abs() < 1e-15);
        let total: f64 = [[1u8, 1], [1, 2], [2, 1], [2, 2]]
            .iter()
            .map(|h| model.matrix_probability(h))
            .sum();
        assert!((total - 1.0).abs() < 1e-15);
    }
}
