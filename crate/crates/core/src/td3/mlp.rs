//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Everything is `f64` and scalar: networks here are small (two hidden
//! layers), and exact, platform-stable arithmetic matters more than raw
//! throughput. Hidden layers use the rectifier; the output is either linear
//! (critics) or `(tanh + 1) / 2` (actor, bounded to the unit cube).

use rand::Rng;

/// Output-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Linear,
    /// `(tanh(z) + 1) / 2`, mapping into `[0, 1]`.
    TanhUnit,
}

/// One affine layer, weights row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        // Uniform fan-in scaling: U(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim).map(|_| rng.gen_range(-bound..bound)).collect();
        let b = (0..out_dim).map(|_| rng.gen_range(-bound..bound)).collect();
        Dense { in_dim, out_dim, w, b }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        for j in 0..self.out_dim {
            let row = &self.w[j * self.in_dim..(j + 1) * self.in_dim];
            let mut acc = self.b[j];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// Multilayer perceptron with rectifier hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub output: OutputActivation,
}

/// Per-layer activations recorded during a forward pass, for backprop.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer.
    xs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    zs: Vec<Vec<f64>>,
    /// Final output, post-activation.
    pub y: Vec<f64>,
}

/// Gradient (or first/second-moment) storage shaped like an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    dw: vec![0.0; l.w.len()],
                    db: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.dw.iter_mut().zip(&b.dw) {
                *x += y;
            }
            for (x, y) in a.db.iter_mut().zip(&b.db) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.dw.iter().chain(&l.db).all(|v| v.is_finite()))
    }
}

impl Mlp {
    /// Build a network with the given layer sizes (input first, output
    /// last) and fan-in-scaled uniform initialisation.
    pub fn new(sizes: &[usize], output: OutputActivation, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|pair| Dense::init(pair[0], pair[1], rng))
            .collect();
        Mlp { layers, output }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().unwrap().in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    fn activate_output(&self, z: &[f64]) -> Vec<f64> {
        match self.output {
            OutputActivation::Linear => z.to_vec(),
            OutputActivation::TanhUnit => z.iter().map(|v| (v.tanh() + 1.0) / 2.0).collect(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "input shape mismatch");
        let mut cur = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, &mut z);
            if l < last {
                cur.clear();
                cur.extend(z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }));
            }
        }
        self.activate_output(&z)
    }

    /// Forward pass that records per-layer activations for [`Self::backward`].
    pub fn forward_cached(&self, x: &[f64]) -> MlpCache {
        assert_eq!(x.len(), self.input_dim(), "input shape mismatch");
        let last = self.layers.len() - 1;
        let mut xs = Vec::with_capacity(self.layers.len());
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward_into(&cur, &mut z);
            xs.push(std::mem::take(&mut cur));
            if l < last {
                cur = z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            }
            zs.push(z);
        }
        let y = self.activate_output(zs.last().unwrap());
        MlpCache { xs, zs, y }
    }

    fn backward_impl(&self, cache: &MlpCache, dl_dy: &[f64], mut grads: Option<&mut MlpGrads>) -> Vec<f64> {
        debug_assert_eq!(dl_dy.len(), self.output_dim());
        let last = self.layers.len() - 1;
        // Output activation.
        let mut dz: Vec<f64> = match self.output {
            OutputActivation::Linear => dl_dy.to_vec(),
            OutputActivation::TanhUnit => dl_dy
                .iter()
                .zip(&cache.y)
                .map(|(&g, &y)| {
                    let t = 2.0 * y - 1.0; // tanh(z)
                    g * (1.0 - t * t) / 2.0
                })
                .collect(),
        };
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let x = &cache.xs[l];
            if let Some(g) = grads.as_deref_mut() {
                let lg = &mut g.layers[l];
                for (j, &d) in dz.iter().enumerate() {
                    lg.db[j] += d;
                    let row = &mut lg.dw[j * layer.in_dim..(j + 1) * layer.in_dim];
                    for (dwi, xi) in row.iter_mut().zip(x) {
                        *dwi += d * xi;
                    }
                }
            }
            let mut dx = vec![0.0; layer.in_dim];
            for (j, &d) in dz.iter().enumerate() {
                let row = &layer.w[j * layer.in_dim..(j + 1) * layer.in_dim];
                for (dxi, wi) in dx.iter_mut().zip(row) {
                    *dxi += d * wi;
                }
            }
            if l > 0 {
                // Rectifier gate of the previous layer; zero at and below zero.
                dz = dx
                    .iter()
                    .zip(&cache.zs[l - 1])
                    .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                    .collect();
            } else {
                return dx;
            }
        }
        unreachable!()
    }

    /// Accumulate parameter gradients for one sample and return the input
    /// gradient. `dl_dy` is the loss gradient at the network output.
    pub fn backward(&self, cache: &MlpCache, dl_dy: &[f64], grads: &mut MlpGrads) -> Vec<f64> {
        self.backward_impl(cache, dl_dy, Some(grads))
    }

    /// Input gradient only; parameters untouched. Used to push critic
    /// gradients through to the actor.
    pub fn backward_input_only(&self, cache: &MlpCache, dl_dy: &[f64]) -> Vec<f64> {
        self.backward_impl(cache, dl_dy, None)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flatten all parameters, layer by layer, weights before biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut at = 0;
        for l in &mut self.layers {
            let (w_len, b_len) = (l.w.len(), l.b.len());
            l.w.copy_from_slice(&flat[at..at + w_len]);
            at += w_len;
            l.b.copy_from_slice(&flat[at..at + b_len]);
            at += b_len;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }
}

/// Polyak soft update: `target <- tau * source + (1 - tau) * target`.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) {
    debug_assert_eq!(target.layers.len(), source.layers.len());
    for (t, s) in target.layers.iter_mut().zip(&source.layers) {
        for (tv, sv) in t.w.iter_mut().zip(&s.w) {
            *tv = tau * sv + (1.0 - tau) * *tv;
        }
        for (tv, sv) in t.b.iter_mut().zip(&s.b) {
            *tv = tau * sv + (1.0 - tau) * *tv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_net_linear_outputs_zero() {
        let mut net = Mlp::new(&[3, 4, 2], OutputActivation::Linear, &mut rng(0));
        net.set_params_flat(&vec![0.0; net.param_count()]);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_actor_outputs_half() {
        let mut net = Mlp::new(&[3, 4, 2], OutputActivation::TanhUnit, &mut rng(0));
        net.set_params_flat(&vec![0.0; net.param_count()]);
        assert_eq!(net.forward(&[0.3, 0.1, -9.0]), vec![0.5, 0.5]);
    }

    /// Straightforward re-implementation used as the forward oracle.
    fn forward_oracle(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut cur: Vec<f64> = x.to_vec();
        for (l, layer) in net.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.out_dim];
            for (j, item) in next.iter_mut().enumerate() {
                let mut acc = layer.b[j];
                for i in 0..layer.in_dim {
                    acc += layer.w[j * layer.in_dim + i] * cur[i];
                }
                *item = acc;
            }
            if l + 1 < net.layers.len() {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            cur = next;
        }
        match net.output {
            OutputActivation::Linear => cur,
            OutputActivation::TanhUnit => cur.iter().map(|v| (v.tanh() + 1.0) / 2.0).collect(),
        }
    }

    #[test]
    fn forward_matches_independent_oracle() {
        for seed in 0..10 {
            let mut r = rng(seed);
            for output in [OutputActivation::Linear, OutputActivation::TanhUnit] {
                let net = Mlp::new(&[5, 8, 8, 3], output, &mut r);
                let x: Vec<f64> = (0..5).map(|_| r.gen_range(-2.0..2.0)).collect();
                let got = net.forward(&x);
                let want = forward_oracle(&net, &x);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cached_forward_matches_plain_forward() {
        let mut r = rng(3);
        let net = Mlp::new(&[4, 8, 8, 2], OutputActivation::TanhUnit, &mut r);
        let x: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
        assert_eq!(net.forward(&x), net.forward_cached(&x).y);
    }

    #[test]
    fn single_linear_neuron_gradient_is_analytic() {
        // Loss (wx + b - y)^2, gradient 2(wx + b - y) * x.
        let mut net = Mlp::new(&[1, 1], OutputActivation::Linear, &mut rng(1));
        net.set_params_flat(&[0.7, -0.2]);
        let (x, y) = (1.3, 0.4);
        let cache = net.forward_cached(&[x]);
        let pred = cache.y[0];
        let mut grads = MlpGrads::zeros_like(&net);
        net.backward(&cache, &[2.0 * (pred - y)], &mut grads);
        let expected_dw = 2.0 * (0.7 * x - 0.2 - y) * x;
        let expected_db = 2.0 * (0.7 * x - 0.2 - y);
        assert!((grads.layers[0].dw[0] - expected_dw).abs() < 1e-12);
        assert!((grads.layers[0].db[0] - expected_db).abs() < 1e-12);
    }

    #[test]
    fn rectifier_gradient_vanishes_when_inactive() {
        let mut net = Mlp::new(&[1, 1, 1], OutputActivation::Linear, &mut rng(2));
        // Hidden preactivation z = -1 * x + 0; negative for x > 0.
        net.set_params_flat(&[-1.0, 0.0, 1.0, 0.0]);
        let cache = net.forward_cached(&[2.0]);
        let mut grads = MlpGrads::zeros_like(&net);
        net.backward(&cache, &[1.0], &mut grads);
        assert_eq!(grads.layers[0].dw[0], 0.0);
        assert_eq!(grads.layers[0].db[0], 0.0);
    }

    #[test]
    fn backward_gradients_match_central_differences() {
        let mut r = rng(7);
        for _ in 0..5 {
            let net = Mlp::new(&[4, 8, 8, 2], OutputActivation::TanhUnit, &mut r);
            let x: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
            // Scalar loss: sum of squared outputs.
            let loss = |net: &Mlp| -> f64 { net.forward(&x).iter().map(|v| v * v).sum() };
            let cache = net.forward_cached(&x);
            let dl_dy: Vec<f64> = cache.y.iter().map(|v| 2.0 * v).collect();
            let mut grads = MlpGrads::zeros_like(&net);
            net.backward(&cache, &dl_dy, &mut grads);

            let flat = net.params_flat();
            let mut analytic = Vec::new();
            for l in &grads.layers {
                analytic.extend_from_slice(&l.dw);
                analytic.extend_from_slice(&l.db);
            }
            let h = 1e-5;
            for k in 0..flat.len() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                let mut fp = flat.clone();
                fp[k] += h;
                plus.set_params_flat(&fp);
                fp[k] -= 2.0 * h;
                minus.set_params_flat(&fp);
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let denom = fd.abs().max(analytic[k].abs()).max(1e-8);
                assert!(
                    (fd - analytic[k]).abs() / denom < 1e-4,
                    "param {k}: fd {fd} vs analytic {}",
                    analytic[k]
                );
            }
        }
    }

    #[test]
    fn soft_update_identities() {
        let mut r = rng(9);
        let source = Mlp::new(&[3, 4, 2], OutputActivation::Linear, &mut r);
        let mut target = Mlp::new(&[3, 4, 2], OutputActivation::Linear, &mut r);

        let frozen = target.clone();
        soft_update(&mut target, &source, 0.0);
        assert_eq!(target, frozen);

        soft_update(&mut target, &source, 1.0);
        assert_eq!(target.params_flat(), source.params_flat());

        let mut scalar_target = Mlp::new(&[1, 1], OutputActivation::Linear, &mut r);
        let mut scalar_source = scalar_target.clone();
        scalar_target.set_params_flat(&[0.0, 0.0]);
        scalar_source.set_params_flat(&[1.0, 1.0]);
        soft_update(&mut scalar_target, &scalar_source, 0.005);
        assert_eq!(scalar_target.params_flat(), vec![0.005, 0.005]);
    }
}
