use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Tanh,
}

impl OutputActivation {
    fn name(self) -> &'static str {
        match self {
            OutputActivation::Identity => "identity",
            OutputActivation::Tanh => "tanh",
        }
    }
}

/// Dense layer `y = x·W + b`, `W` stored input-major (`in × out`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Fully connected network with ReLU hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    output: OutputActivation,
}

/// Per-layer parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.w *= k;
            l.b *= k;
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|x| x.is_finite()))
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    /// Uniform fan-in initialization: every weight and bias of a layer with
    /// `k` inputs is drawn from `U(−1/√k, 1/√k)`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], output: OutputActivation, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Shape(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .map(|p| {
                let bound = 1.0 / (p[0] as f64).sqrt();
                Dense {
                    w: Array2::from_shape_fn((p[0], p[1]), |_| rng.random_range(-bound..bound)),
                    b: Array1::from_shape_fn(p[1], |_| rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Ok(Mlp { layers, output })
    }

    pub fn from_layers(layers: Vec<Dense>, output: OutputActivation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.w.ncols() != l.b.len() {
                return Err(Error::Shape(format!("layer {i}: bias length {} vs {} outputs", l.b.len(), l.w.ncols())));
            }
            if i > 0 && layers[i - 1].w.ncols() != l.w.nrows() {
                return Err(Error::Shape(format!("layer {i} input width mismatch")));
            }
        }
        Ok(Mlp { layers, output })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].w.nrows()];
        w.extend(self.layers.iter().map(|l| l.w.ncols()));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].w.ncols()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} features, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut h = x.dot(&self.layers[0].w) + &self.layers[0].b;
        for l in &self.layers[1..] {
            h.mapv_inplace(relu);
            h = h.dot(&l.w) + &l.b;
        }
        if self.output == OutputActivation::Tanh {
            h.mapv_inplace(f64::tanh);
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.clone());
        let mut h = x.dot(&self.layers[0].w) + &self.layers[0].b;
        for l in self.layers.iter().skip(1) {
            h.mapv_inplace(relu);
            let next = h.dot(&l.w) + &l.b;
            inputs.push(h);
            h = next;
        }
        if self.output == OutputActivation::Tanh {
            h.mapv_inplace(f64::tanh);
        }
        Ok(ForwardCache { inputs, output: h })
    }

    /// Backpropagates `dL/d(output)` and returns parameter gradients and
    /// `dL/d(input)`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Array2<f64>) -> Result<(Gradients, Array2<f64>)> {
        if grad_out.raw_dim() != cache.output.raw_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} vs output {:?}",
                grad_out.shape(),
                cache.output.shape()
            )));
        }
        let mut delta = match self.output {
            OutputActivation::Identity => grad_out.clone(),
            OutputActivation::Tanh => grad_out * &cache.output.mapv(|y| 1.0 - y * y),
        };
        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            grads.push(Dense { w: gw, b: gb });
            let mut back = delta.dot(&l.w.t());
            if i > 0 {
                // input of layer i is relu(pre); its derivative is 1 where positive
                ndarray::Zip::from(&mut back).and(input).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            delta = back;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.output == other.output && self.widths() == other.widths()
    }

    /// Writes the checkpoint format described in [`Mlp::load_csv`].
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let widths: Vec<String> = self.widths().iter().map(|w| w.to_string()).collect();
        let mut write = |line: String| writeln!(out, "{line}").map_err(|e| Error::io(path, e));
        write(format!("widths,{}", widths.join(",")))?;
        write(format!("output,{}", self.output.name()))?;
        for (i, l) in self.layers.iter().enumerate() {
            for row in l.w.rows() {
                let vals: Vec<String> = row.iter().map(|x| x.to_string()).collect();
                write(format!("w{i},{}", vals.join(",")))?;
            }
            let vals: Vec<String> = l.b.iter().map(|x| x.to_string()).collect();
            write(format!("b{i},{}", vals.join(",")))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a checkpoint: a `widths,...` line, an `output,identity|tanh`
    /// line, then per layer `i` its weight matrix as `in` lines `wi,...`
    /// (row-major, one row per input unit) followed by one `bi,...` line.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<String> = BufReader::new(file)
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::validation(format!("{}: {msg}", path.display()));
        let mut it = lines.iter().filter(|l| !l.trim().is_empty());
        let parse_row = |line: &str, tag: &str| -> Result<Vec<f64>> {
            let mut parts = line.split(',');
            if parts.next() != Some(tag) {
                return Err(bad(&format!("expected {tag} row")));
            }
            parts.map(|p| p.trim().parse::<f64>().map_err(|_| bad("bad number"))).collect()
        };
        let widths: Vec<usize> = {
            let line = it.next().ok_or_else(|| bad("empty file"))?;
            let mut parts = line.split(',');
            if parts.next() != Some("widths") {
                return Err(bad("missing widths line"));
            }
            parts.map(|p| p.trim().parse().map_err(|_| bad("bad width"))).collect::<Result<_>>()?
        };
        let output = match it.next().map(|l| l.trim()) {
            Some("output,identity") => OutputActivation::Identity,
            Some("output,tanh") => OutputActivation::Tanh,
            _ => return Err(bad("missing output line")),
        };
        if widths.len() < 2 {
            return Err(bad("need at least two widths"));
        }
        let mut layers = Vec::new();
        for (i, p) in widths.windows(2).enumerate() {
            let mut w = Array2::zeros((p[0], p[1]));
            for r in 0..p[0] {
                let row = parse_row(it.next().ok_or_else(|| bad("truncated"))?, &format!("w{i}"))?;
                if row.len() != p[1] {
                    return Err(bad("weight row width"));
                }
                w.row_mut(r).assign(&Array1::from(row));
            }
            let b = parse_row(it.next().ok_or_else(|| bad("truncated"))?, &format!("b{i}"))?;
            if b.len() != p[1] {
                return Err(bad("bias width"));
            }
            layers.push(Dense { w, b: Array1::from(b) });
        }
        Mlp::from_layers(layers, output)
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyncMode {
    Hard,
    /// `θ̂ ← δ θ + (1 − δ) θ̂`
    Soft(f64),
}

pub fn sync_target(target: &mut Mlp, online: &Mlp, mode: SyncMode) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::Shape("target and online networks differ in architecture".into()));
    }
    match mode {
        SyncMode::Hard => target.layers.clone_from(&online.layers),
        SyncMode::Soft(delta) => {
            for (t, o) in target.layers.iter_mut().zip(&online.layers) {
                t.w.zip_mut_with(&o.w, |a, &b| *a = delta * b + (1.0 - delta) * *a);
                t.b.zip_mut_with(&o.b, |a, &b| *a = delta * b + (1.0 - delta) * *a);
            }
        }
    }
    Ok(())
}

/// Result of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err_params: f64,
    pub max_rel_err_input: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn max_rel_err(&self) -> f64 {
        self.max_rel_err_params.max(self.max_rel_err_input)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Checks every parameter and input gradient of `L = Σ upstream ⊙ net(x)`
/// against central finite differences with step `h`.
pub fn gradient_check(net: &Mlp, x: &Array2<f64>, upstream: &Array2<f64>, h: f64) -> Result<GradCheck> {
    let cache = net.forward_cached(x)?;
    let (grads, gx) = net.backward(&cache, upstream)?;
    let loss = |n: &Mlp, xi: &Array2<f64>| -> Result<f64> { Ok((n.forward(xi)? * upstream).sum()) };
    let mut probe = net.clone();
    let mut worst_p: f64 = 0.0;
    let mut checked = 0;
    for li in 0..net.layers.len() {
        for idx in 0..net.layers[li].w.len() {
            let (r, c) = (idx / net.layers[li].w.ncols(), idx % net.layers[li].w.ncols());
            let orig = probe.layers[li].w[[r, c]];
            probe.layers[li].w[[r, c]] = orig + h;
            let up = loss(&probe, x)?;
            probe.layers[li].w[[r, c]] = orig - h;
            let down = loss(&probe, x)?;
            probe.layers[li].w[[r, c]] = orig;
            worst_p = worst_p.max(rel_err(grads.layers[li].w[[r, c]], (up - down) / (2.0 * h)));
            checked += 1;
        }
        for j in 0..net.layers[li].b.len() {
            let orig = probe.layers[li].b[j];
            probe.layers[li].b[j] = orig + h;
            let up = loss(&probe, x)?;
            probe.layers[li].b[j] = orig - h;
            let down = loss(&probe, x)?;
            probe.layers[li].b[j] = orig;
            worst_p = worst_p.max(rel_err(grads.layers[li].b[j], (up - down) / (2.0 * h)));
            checked += 1;
        }
    }
    let mut worst_x: f64 = 0.0;
    let mut xp = x.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = xp[[r, c]];
        xp[[r, c]] = orig + h;
        let up = loss(net, &xp)?;
        xp[[r, c]] = orig - h;
        let down = loss(net, &xp)?;
        xp[[r, c]] = orig;
        worst_x = worst_x.max(rel_err(gx[[r, c]], (up - down) / (2.0 * h)));
        checked += 1;
    }
    Ok(GradCheck {
        max_rel_err_params: worst_p,
        max_rel_err_input: worst_x,
        checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_output_bias() {
        let layer = Dense {
            w: Array2::zeros((3, 2)),
            b: array![0.5, -1.0],
        };
        let net = Mlp::from_layers(vec![layer], OutputActivation::Identity).unwrap();
        let y = net.forward(&array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(y, array![[0.5, -1.0], [0.5, -1.0]]);
    }

    #[test]
    fn single_linear_layer_gradient_is_input() {
        let net = Mlp::from_layers(
            vec![Dense {
                w: array![[2.0]],
                b: array![0.5],
            }],
            OutputActivation::Identity,
        )
        .unwrap();
        let x = array![[3.0]];
        let cache = net.forward_cached(&x).unwrap();
        assert_eq!(cache.output, array![[6.5]]);
        let (g, gx) = net.backward(&cache, &array![[1.0]]).unwrap();
        assert_eq!(g.layers[0].w, array![[3.0]]);
        assert_eq!(g.layers[0].b, array![1.0]);
        assert_eq!(gx, array![[2.0]]);
    }

    #[test]
    fn finite_difference_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for output in [OutputActivation::Identity, OutputActivation::Tanh] {
            let net = Mlp::new(&[5, 7, 6, 3], output, &mut rng).unwrap();
            let x = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
            let up = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
            let gc = gradient_check(&net, &x, &up, 1e-5).unwrap();
            assert!(gc.max_rel_err() < 1e-4, "{output:?}: {gc:?}");
            assert_eq!(gc.checked, net.param_count() + x.len());
        }
    }

    #[test]
    fn shapes_are_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 4, 2], OutputActivation::Identity, &mut rng).unwrap();
        assert_eq!(net.param_count(), 3 * 4 + 4 + 4 * 2 + 2);
        assert!(matches!(net.forward(&Array2::zeros((2, 4))), Err(Error::Shape(_))));
        let cache = net.forward_cached(&Array2::zeros((2, 3))).unwrap();
        assert!(net.backward(&cache, &Array2::zeros((2, 3))).is_err());
        assert!(Mlp::new(&[3], OutputActivation::Identity, &mut rng).is_err());
    }

    #[test]
    fn soft_and_hard_sync() {
        let one = Mlp::from_layers(
            vec![Dense {
                w: array![[1.0]],
                b: array![1.0],
            }],
            OutputActivation::Identity,
        )
        .unwrap();
        let zero = Mlp::from_layers(
            vec![Dense {
                w: array![[0.0]],
                b: array![0.0],
            }],
            OutputActivation::Identity,
        )
        .unwrap();
        let mut t = zero.clone();
        sync_target(&mut t, &one, SyncMode::Soft(0.005)).unwrap();
        assert!((t.layers()[0].w[[0, 0]] - 0.005).abs() < 1e-15);
        let mut t = zero.clone();
        sync_target(&mut t, &one, SyncMode::Soft(0.0)).unwrap();
        assert_eq!(t, zero);
        let mut soft = zero.clone();
        let mut hard = zero.clone();
        sync_target(&mut soft, &one, SyncMode::Soft(1.0)).unwrap();
        sync_target(&mut hard, &one, SyncMode::Hard).unwrap();
        assert_eq!(soft, hard);
        assert_eq!(hard, one);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut other = Mlp::new(&[1, 2, 1], OutputActivation::Identity, &mut rng).unwrap();
        assert!(sync_target(&mut other, &one, SyncMode::Hard).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = Mlp::new(&[4, 6, 2], OutputActivation::Tanh, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.csv");
        net.save_csv(&path).unwrap();
        assert_eq!(Mlp::load_csv(&path).unwrap(), net);
        std::fs::write(&path, "widths,2,1\noutput,identity\nw0,1\n").unwrap();
        assert!(Mlp::load_csv(&path).is_err());
    }
}
