use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

/// Adam with bias-corrected moments, one instance per network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp) -> Self {
        Self::with_betas(net, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(net: &Mlp, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            t: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Descends along `grads` (gradients of a loss to minimize).
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != net.layers().len()
            || grads
                .layers
                .iter()
                .zip(net.layers())
                .any(|(g, l)| g.w.raw_dim() != l.w.raw_dim() || g.b.raw_dim() != l.b.raw_dim())
        {
            return Err(Error::Shape("gradients do not match the network".into()));
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((layer, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            ndarray::Zip::from(&mut layer.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{Dense, OutputActivation};
    use ndarray::array;

    fn scalar_net(w: f64) -> Mlp {
        Mlp::from_layers(
            vec![Dense {
                w: array![[w]],
                b: array![0.0],
            }],
            OutputActivation::Identity,
        )
        .unwrap()
    }

    fn grad(gw: f64, gb: f64) -> Gradients {
        Gradients {
            layers: vec![Dense {
                w: array![[gw]],
                b: array![gb],
            }],
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = scalar_net(0.7);
        let before = net.clone();
        let mut opt = Adam::new(&net);
        for _ in 0..5 {
            opt.step(&mut net, &grad(0.0, 0.0), 1e-3).unwrap();
        }
        assert_eq!(net, before);
    }

    #[test]
    fn first_step_matches_hand_arithmetic() {
        // m̂ = g, v̂ = g², so Δ = −lr·g/(|g| + ε)
        let mut net = scalar_net(1.0);
        let mut opt = Adam::new(&net);
        let g = 0.3;
        opt.step(&mut net, &grad(g, -2.0), 0.01).unwrap();
        let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
        assert!((net.layers()[0].w[[0, 0]] - expected).abs() < 1e-15);
        assert!((net.layers()[0].b[0] - 0.01 * 2.0 / (2.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_steps_are_bounded_by_lr() {
        let mut net = scalar_net(0.0);
        let mut opt = Adam::new(&net);
        let mut prev = 0.0;
        for _ in 0..200 {
            opt.step(&mut net, &grad(5.0, 0.0), 1e-3).unwrap();
            let w = net.layers()[0].w[[0, 0]];
            assert!((prev - w) > 0.0 && (prev - w) <= 1e-3 * (1.0 + 1e-9));
            prev = w;
        }
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut net = scalar_net(0.0);
        let mut opt = Adam::new(&net);
        let bad = Gradients { layers: vec![] };
        assert!(opt.step(&mut net, &bad, 1e-3).is_err());
    }
}
