//! Small dense networks with hand-written reverse mode.
//!
//! Parameters live in one flat vector per network so optimizers, target
//! smoothing, consensus penalties and parameter exchange all act on slices.

mod checkpoint;
mod policy;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
pub use policy::{
    dist_from_logits, entropy, head_size, log_prob, log_prob_and_grad, policy_forward, JointPolicyDist, PolicyHead,
    PROB_FLOOR,
};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input has {found} features, network expects {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("network shapes differ")]
    Shape,
}

/// Dense network with tanh hidden layers and a linear output layer.
///
/// Layer `l` maps `sizes[l]` inputs to `sizes[l+1]` outputs; its weights are
/// stored row-major `[out][in]` followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    pub data: Vec<f64>,
}

/// Layer outputs retained by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// `acts[0]` is the input, `acts[l]` the output of layer `l` (after tanh for hidden layers).
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty cache")
    }
}

impl MlpParams {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "invalid layer sizes {sizes:?}");
        let len = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self { sizes: sizes.to_vec(), data: vec![0.0; len] }
    }

    /// Uniform in ±1/√fan_in for weights and biases of each layer.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let mut offset = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let len = w[0] * w[1] + w[1];
            for v in &mut net.data[offset..offset + len] {
                *v = rng.random_range(-bound..bound);
            }
            offset += len;
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.data.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.sizes == other.sizes
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_cached(x)?.acts.pop().unwrap())
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<MlpCache, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::InputDim { expected: self.input_dim(), found: x.len() });
        }
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.data[offset..offset + n_in * n_out];
            let b = &self.data[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let input = &acts[l];
            let mut out: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
            offset += n_in * n_out + n_out;
        }
        Ok(MlpCache { acts })
    }

    /// Adds `d loss / d params` to `grad`, given `d loss / d output`.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.data.len());
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.data[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wv;
                }
            }
            // tanh' = 1 - y²
            for (p, y) in prev.iter_mut().zip(input) {
                *p *= 1.0 - y * y;
            }
            delta = prev;
        }
    }
}

/// Scalar value estimate.
pub fn value_forward(psi: &MlpParams, x: &[f64]) -> Result<f64, NnError> {
    Ok(psi.forward(x)?[0])
}

/// Value net ψ, policy net φ and target value net ψ̄ of one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub psi: MlpParams,
    pub phi: MlpParams,
    pub psi_bar: MlpParams,
}

impl AgentParams {
    /// Two hidden layers of width `hidden`; the target starts equal to ψ.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, policy_out: usize, rng: &mut R) -> Self {
        let psi = MlpParams::init(&[input, hidden, hidden, 1], rng);
        let phi = MlpParams::init(&[input, hidden, hidden, policy_out], rng);
        Self { psi_bar: psi.clone(), psi, phi }
    }

    /// Parameters of ψ and φ (the exchanged and optimized set).
    pub fn trainable_count(&self) -> usize {
        self.psi.param_count() + self.phi.param_count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert!(params.len() == self.m.len() && grads.len() == self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Adam over an agent's ψ and φ.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOptimizer {
    pub psi: AdamState,
    pub phi: AdamState,
}

impl AgentOptimizer {
    pub fn new(params: &AgentParams, lr: f64) -> Self {
        Self { psi: AdamState::new(params.psi.param_count(), lr), phi: AdamState::new(params.phi.param_count(), lr) }
    }

    pub fn step(&mut self, params: &mut AgentParams, g_psi: &[f64], g_phi: &[f64]) {
        self.psi.step(&mut params.psi.data, g_psi);
        self.phi.step(&mut params.phi.data, g_phi);
    }
}

/// ψ̄ ← ρψ̄ + (1−ρ)ψ.
pub fn target_update(psi_bar: &mut MlpParams, psi: &MlpParams, rho: f64) -> Result<(), NnError> {
    if !psi_bar.same_shape(psi) {
        return Err(NnError::Shape);
    }
    for (t, &s) in psi_bar.data.iter_mut().zip(&psi.data) {
        *t = rho * *t + (1.0 - rho) * s;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Straight-line evaluation without the cached/offset machinery.
    fn naive_forward(net: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut it = net.data.iter();
        let layers = net.sizes().len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (net.sizes()[l], net.sizes()[l + 1]);
            let w: Vec<Vec<f64>> = (0..n_out).map(|_| (0..n_in).map(|_| *it.next().unwrap()).collect()).collect();
            let b: Vec<f64> = (0..n_out).map(|_| *it.next().unwrap()).collect();
            a = (0..n_out)
                .map(|o| {
                    let z = b[o] + (0..n_in).map(|i| w[o][i] * a[i]).sum::<f64>();
                    if l + 1 < layers { z.tanh() } else { z }
                })
                .collect();
        }
        a
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpParams::zeros(&[4, 8, 8, 1]);
        assert_eq!(value_forward(&net, &[1.0, -2.0, 3.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn forward_matches_naive_evaluation() {
        for seed in 0..10 {
            let mut r = rng(seed);
            let net = MlpParams::init(&[5, 7, 6, 3], &mut r);
            let x: Vec<f64> = (0..5).map(|_| r.random_range(-2.0..2.0)).collect();
            let a = net.forward(&x).unwrap();
            let b = naive_forward(&net, &x);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = MlpParams::init(&[9, 4, 4, 1], &mut rng(3));
        assert_eq!(a, MlpParams::init(&[9, 4, 4, 1], &mut rng(3)));
        assert!(a.data[..36].iter().all(|v| v.abs() <= 1.0 / 3.0));
        assert_eq!(a.param_count(), 9 * 4 + 4 + 4 * 4 + 4 + 4 + 1);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = MlpParams::zeros(&[3, 2, 2, 1]);
        assert_eq!(net.forward(&[1.0]), Err(NnError::InputDim { expected: 3, found: 1 }));
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..20 {
            let mut r = rng(seed);
            let mut net = MlpParams::init(&[4, 5, 5, 2], &mut r);
            let x: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
            let w = [0.7, -1.3];
            let loss = |n: &MlpParams| {
                let y = n.forward(&x).unwrap();
                w[0] * y[0] + w[1] * y[1] * y[1]
            };
            let cache = net.forward_cached(&x).unwrap();
            let y = cache.output().to_vec();
            let mut g = vec![0.0; net.param_count()];
            net.backward(&cache, &[w[0], 2.0 * w[1] * y[1]], &mut g);
            let h = 1e-5;
            let mut fd = vec![0.0; g.len()];
            for i in 0..g.len() {
                let keep = net.data[i];
                net.data[i] = keep + h;
                let up = loss(&net);
                net.data[i] = keep - h;
                let down = loss(&net);
                net.data[i] = keep;
                fd[i] = (up - down) / (2.0 * h);
            }
            let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            assert!(diff / scale < 1e-6, "seed {seed}: {}", diff / scale);
        }
    }

    #[test]
    fn zero_last_layer_blocks_earlier_gradients() {
        let mut net = MlpParams::init(&[3, 4, 4, 1], &mut rng(1));
        let last = 4 + 1;
        let n = net.param_count();
        net.data[n - last..].iter_mut().for_each(|v| *v = 0.0);
        let cache = net.forward_cached(&[0.2, -0.1, 0.4]).unwrap();
        let mut g = vec![0.0; n];
        net.backward(&cache, &[1.0], &mut g);
        assert!(g[..n - last].iter().all(|&v| v == 0.0));
        assert_eq!(g[n - 1], 1.0);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = vec![1.0, -2.0, 0.5];
        let mut s = AdamState::new(3, 0.001);
        s.step(&mut p, &[0.3, -4.0, 0.0]);
        assert!((p[0] - (1.0 - 0.001)).abs() < 1e-9);
        assert!((p[1] - (-2.0 + 0.001)).abs() < 1e-9);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn adam_repeated_gradient_moves_monotonically() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1, 0.001);
        let mut last = 0.0;
        for _ in 0..100 {
            s.step(&mut p, &[2.5]);
            assert!(p[0] < last);
            last = p[0];
        }
    }

    #[test]
    fn target_update_examples() {
        let mut bar = MlpParams::zeros(&[1, 1, 1, 1]);
        let mut psi = bar.clone();
        psi.data.iter_mut().for_each(|v| *v = 1.0);
        let keep = bar.clone();
        target_update(&mut bar, &psi, 1.0).unwrap();
        assert_eq!(bar, keep);
        target_update(&mut bar, &psi, 0.99).unwrap();
        assert!(bar.data.iter().all(|v| (v - 0.01).abs() < 1e-15));
        for _ in 0..3000 {
            target_update(&mut bar, &psi, 0.99).unwrap();
        }
        assert!(bar.data.iter().all(|v| (v - 1.0).abs() < 1e-9));
        assert_eq!(target_update(&mut bar, &MlpParams::zeros(&[2, 1, 1, 1]), 0.5), Err(NnError::Shape));
    }
}
