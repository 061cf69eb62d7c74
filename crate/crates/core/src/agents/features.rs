use ndarray::Array2;

use crate::channel::SysState;

/// Network input encoding of a state: `τ_n / τ_norm` for every sensor, then
/// `(h − 1)/(h̄ − 1)` for every link (0 when there is a single level).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Featurizer {
    pub tau_norm: f64,
    pub levels: usize,
}

impl Featurizer {
    pub fn dim(&self, sensors: usize, channels: usize) -> usize {
        sensors + sensors * channels
    }

    pub fn write(&self, state: &SysState, out: &mut [f64]) {
        let n = state.tau.len();
        for (o, &t) in out.iter_mut().zip(&state.tau) {
            *o = t as f64 / self.tau_norm;
        }
        let span = (self.levels.max(2) - 1) as f64;
        for (o, &h) in out[n..].iter_mut().zip(&state.h) {
            *o = if self.levels > 1 { (h as f64 - 1.0) / span } else { 0.0 };
        }
    }

    pub fn encode(&self, state: &SysState) -> Vec<f64> {
        let mut v = vec![0.0; state.tau.len() + state.h.len()];
        self.write(state, &mut v);
        v
    }

    pub fn batch<'a>(&self, states: impl ExactSizeIterator<Item = &'a SysState>) -> Array2<f64> {
        let rows = states.len();
        let mut out: Option<Array2<f64>> = None;
        for (i, s) in states.enumerate() {
            let m = out.get_or_insert_with(|| Array2::zeros((rows, s.tau.len() + s.h.len())));
            self.write(s, m.row_mut(i).as_slice_mut().expect("standard layout"));
        }
        out.unwrap_or_else(|| Array2::zeros((0, 0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodes_aoi_and_levels() {
        let f = Featurizer { tau_norm: 20.0, levels: 5 };
        let s = SysState::new(vec![1, 10], vec![1, 5]);
        assert_eq!(f.encode(&s), vec![0.05, 0.5, 0.0, 1.0]);
        let b = f.batch([s.clone(), s].iter());
        assert_eq!(b.shape(), &[2, 4]);
        assert_eq!(b[[1, 3]], 1.0);
        let single = Featurizer { tau_norm: 1.0, levels: 1 };
        assert_eq!(single.encode(&SysState::new(vec![2], vec![1])), vec![2.0, 0.0]);
    }
}
