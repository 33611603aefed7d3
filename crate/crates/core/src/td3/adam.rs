//! Adam optimizer over [`Mlp`] parameters.

use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpGrads};

/// Bias-corrected Adam state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: MlpGrads,
    v: MlpGrads,
    pub t: u64,
    pub hyper: AdamHyper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        AdamState {
            m: MlpGrads::zeros_like(net),
            v: MlpGrads::zeros_like(net),
            t: 0,
            hyper: AdamHyper::default(),
        }
    }

    pub fn moments(&self) -> (&MlpGrads, &MlpGrads) {
        (&self.m, &self.v)
    }

    pub fn moments_mut(&mut self) -> (&mut MlpGrads, &mut MlpGrads) {
        (&mut self.m, &mut self.v)
    }

    /// One Adam step in place.
    pub fn step(&mut self, params: &mut Mlp, grads: &MlpGrads, lr: f64) {
        self.t += 1;
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for (layer, (gl, (ml, vl))) in params
            .layers
            .iter_mut()
            .zip(grads.layers.iter().zip(self.m.layers.iter_mut().zip(&mut self.v.layers)))
        {
            update(&mut layer.w, &gl.dw, &mut ml.dw, &mut vl.dw);
            update(&mut layer.b, &gl.db, &mut ml.db, &mut vl.db);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::td3::mlp::OutputActivation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net(seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp::new(&[2, 3, 1], OutputActivation::Linear, &mut rng)
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut net = small_net(0);
        let before = net.params_flat();
        let grads = MlpGrads::zeros_like(&net);
        let mut opt = AdamState::new(&net);
        opt.step(&mut net, &grads, 1e-3);
        assert_eq!(net.params_flat(), before);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // With bias correction, the first update is lr * g / (|g| + eps')
        // which is lr * sign(g) up to eps.
        let mut net = small_net(1);
        let before = net.params_flat();
        let mut grads = MlpGrads::zeros_like(&net);
        for l in &mut grads.layers {
            for g in l.dw.iter_mut().chain(l.db.iter_mut()) {
                *g = 0.25; // arbitrary positive gradient
            }
        }
        let mut opt = AdamState::new(&net);
        let lr = 1e-3;
        opt.step(&mut net, &grads, lr);
        for (after, before) in net.params_flat().iter().zip(&before) {
            let delta = after - before;
            assert!((delta + lr).abs() < 1e-6, "delta = {delta}");
        }
    }

    #[test]
    fn steps_are_reproducible() {
        let run = || {
            let mut net = small_net(2);
            let mut grads = MlpGrads::zeros_like(&net);
            for l in &mut grads.layers {
                for (i, g) in l.dw.iter_mut().enumerate() {
                    *g = (i as f64 - 1.5) * 0.1;
                }
            }
            let mut opt = AdamState::new(&net);
            opt.step(&mut net, &grads, 3e-4);
            opt.step(&mut net, &grads, 3e-4);
            net.params_flat()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
