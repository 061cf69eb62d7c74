use crate::channel::SysState;
use crate::error::{Error, Result};

/// Upper bound on the number of enumerated states.
pub const MAX_STATES: usize = 1 << 26;

/// Dense enumeration of `{1..τ_max}^N × {1..h̄}^{N·M}`.
///
/// `index = tau_index · h_count + h_index`, where both parts are mixed-radix
/// numbers with the first sensor (first link) most significant. Keeping the
/// channel part innermost makes `E_{H⁺}[V(τ⁺, ·)]` a contiguous sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    sensors: usize,
    channels: usize,
    levels: usize,
    tau_max: u32,
    tau_count: usize,
    h_count: usize,
}

impl StateSpace {
    pub fn new(sensors: usize, channels: usize, levels: usize, tau_max: u32) -> Result<Self> {
        if sensors == 0 || channels == 0 || channels > sensors {
            return Err(Error::validation(format!("invalid system size {sensors}x{channels}")));
        }
        if levels == 0 {
            return Err(Error::validation("need at least one channel level"));
        }
        if tau_max < 2 {
            return Err(Error::validation("tau_max must be at least 2"));
        }
        let too_big = || Error::Capacity(format!(
            "state space tau_max^{sensors} * {levels}^{} exceeds {MAX_STATES}",
            sensors * channels
        ));
        let tau_count = (tau_max as usize).checked_pow(sensors as u32).ok_or_else(too_big)?;
        let h_count = levels.checked_pow((sensors * channels) as u32).ok_or_else(too_big)?;
        match tau_count.checked_mul(h_count) {
            Some(t) if t <= MAX_STATES => {}
            _ => return Err(too_big()),
        }
        Ok(StateSpace {
            sensors,
            channels,
            levels,
            tau_max,
            tau_count,
            h_count,
        })
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn levels(&self) -> usize {
        self.levels
    }
    pub fn tau_max(&self) -> u32 {
        self.tau_max
    }
    pub fn tau_count(&self) -> usize {
        self.tau_count
    }
    pub fn h_count(&self) -> usize {
        self.h_count
    }
    pub fn len(&self) -> usize {
        self.tau_count * self.h_count
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tau_index(&self, tau: &[u32]) -> usize {
        tau.iter()
            .fold(0, |acc, &t| acc * self.tau_max as usize + (t as usize - 1))
    }

    pub fn h_index(&self, h: &[u8]) -> usize {
        h.iter().fold(0, |acc, &l| acc * self.levels + (l as usize - 1))
    }

    pub fn decode_tau(&self, mut idx: usize) -> Vec<u32> {
        let mut tau = vec![0; self.sensors];
        for t in tau.iter_mut().rev() {
            *t = (idx % self.tau_max as usize) as u32 + 1;
            idx /= self.tau_max as usize;
        }
        tau
    }

    pub fn decode_h(&self, mut idx: usize) -> Vec<u8> {
        let mut h = vec![0; self.sensors * self.channels];
        for l in h.iter_mut().rev() {
            *l = (idx % self.levels) as u8 + 1;
            idx /= self.levels;
        }
        h
    }

    /// Positional weight of sensor `n` inside the AoI index.
    pub fn tau_weight(&self, sensor: usize) -> usize {
        (self.tau_max as usize).pow((self.sensors - 1 - sensor) as u32)
    }

    /// Positional weight of link (n, m) inside the channel index.
    pub fn h_weight(&self, sensor: usize, channel: usize) -> usize {
        let pos = sensor * self.channels + channel;
        self.levels.pow((self.sensors * self.channels - 1 - pos) as u32)
    }

    pub fn contains(&self, state: &SysState) -> bool {
        state.tau.len() == self.sensors
            && state.h.len() == self.sensors * self.channels
            && state.tau.iter().all(|&t| t >= 1 && t <= self.tau_max)
            && state.h.iter().all(|&l| l >= 1 && l as usize <= self.levels)
    }

    pub fn encode(&self, state: &SysState) -> Result<usize> {
        if !self.contains(state) {
            return Err(Error::validation(format!("state {state:?} is outside the truncated space")));
        }
        Ok(self.tau_index(&state.tau) * self.h_count + self.h_index(&state.h))
    }

    /// Like [`encode`](Self::encode) but saturates AoI at `τ_max`.
    pub fn encode_clamped(&self, state: &SysState) -> Result<usize> {
        let tau: Vec<u32> = state.tau.iter().map(|&t| t.clamp(1, self.tau_max)).collect();
        self.encode(&SysState::new(tau, state.h.clone()))
    }

    pub fn decode(&self, idx: usize) -> SysState {
        SysState::new(self.decode_tau(idx / self.h_count), self.decode_h(idx % self.h_count))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sizes_and_rejections() {
        let s = StateSpace::new(2, 1, 5, 16).unwrap();
        assert_eq!(s.len(), 256 * 25);
        assert!(StateSpace::new(2, 1, 5, 1).is_err());
        assert!(matches!(StateSpace::new(6, 3, 5, 16), Err(Error::Capacity(_))));
        assert!(s.encode(&SysState::new(vec![17, 1], vec![1, 1])).is_err());
        assert_eq!(
            s.encode_clamped(&SysState::new(vec![40, 1], vec![2, 3])).unwrap(),
            s.encode(&SysState::new(vec![16, 1], vec![2, 3])).unwrap()
        );
    }

    #[test]
    fn weights_match_encoding() {
        let s = StateSpace::new(3, 2, 2, 4).unwrap();
        let base = SysState::new(vec![1, 2, 1], vec![1, 2, 1, 1, 2, 1]);
        let i0 = s.encode(&base).unwrap();
        let mut up = base.clone();
        up.tau[1] += 1;
        assert_eq!(s.encode(&up).unwrap() - i0, s.tau_weight(1) * s.h_count());
        let mut hu = base.clone();
        hu.set_level(2, 1, 2);
        assert_eq!(s.encode(&hu).unwrap() - i0, s.h_weight(2, 1));
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(n in 1usize..4, m_frac in 0usize..3, levels in 1usize..4, tau_max in 2u32..6, seed in any::<u64>()) {
            let m = 1 + m_frac % n;
            let space = StateSpace::new(n, m, levels, tau_max).unwrap();
            let idx = (seed as usize) % space.len();
            let st = space.decode(idx);
            prop_assert!(space.contains(&st));
            prop_assert_eq!(space.encode(&st).unwrap(), idx);
        }
    }
}
