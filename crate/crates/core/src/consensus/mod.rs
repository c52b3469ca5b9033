//! Consensus multi-agent training.
//!
//! Each agent keeps its own value net, target value net and copy of the joint
//! policy. An iteration picks one healthy agent uniformly, takes an Adam step
//! on its soft consistency loss, then an Adam step pulling its outputs
//! `ζ = [v(s), π(a|s)]` toward its neighbours' outputs on the same batch, then
//! smooths its target net.

mod buffer;
mod control;
mod graph;

pub use buffer::{Experience, ReplayBuffer, DEFAULT_REPLAY_CAPACITY};
pub use control::{
    init_buffer_from_history, ControlLoop, HistoryBuffer, Learner, MetricsRow, METRICS_HEADER,
};
pub use control::encode_transition;
pub use graph::{CommGraph, ConnectivityReport, GraphError};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    dist_from_logits, head_size, log_prob_and_grad, AgentOptimizer, AgentParams, MlpParams,
    PolicyHead,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    /// Entropy temperature α.
    pub alpha: f64,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub reward_scale: f64,
    /// Target smoothing ρ.
    pub target_rho: f64,
    /// Consensus multiplier λ.
    pub lambda: f64,
    /// Update frequency C.
    pub update_freq: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            gamma: 0.95,
            lr: 0.001,
            batch_size: 16,
            hidden: 32,
            reward_scale: 5.0,
            target_rho: 0.99,
            lambda: 1.0,
            update_freq: 1,
        }
    }
}

/// Device groups of the joint action and the policy head that encodes them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    pub groups: Vec<usize>,
    pub head: PolicyHead,
}

impl ActionSpace {
    pub fn new(groups: Vec<usize>, head: PolicyHead) -> Self {
        assert!(groups.iter().all(|&n| n >= 2), "every device needs at least two positions");
        Self { groups, head }
    }

    pub fn head_size(&self) -> usize {
        head_size(self.head, &self.groups)
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }
}

/// Gradient with respect to ψ and φ.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
}

impl Gradients {
    pub fn zeros(params: &AgentParams) -> Self {
        Self { psi: vec![0.0; params.psi.param_count()], phi: vec![0.0; params.phi.param_count()] }
    }

    pub fn is_zero(&self) -> bool {
        self.psi.iter().chain(&self.phi).all(|&g| g == 0.0)
    }

    /// ψ gradient followed by φ gradient.
    pub fn flat(&self) -> Vec<f64> {
        self.psi.iter().chain(&self.phi).copied().collect()
    }
}

/// Output pair an agent shares with neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaSample {
    pub value: f64,
    pub action_prob: f64,
}

pub fn zeta(params: &AgentParams, state: &[f64], action: &[usize], space: &ActionSpace) -> ZetaSample {
    let value = params.psi.forward(state).expect("state width")[0];
    let logits = params.phi.forward(state).expect("state width");
    let (lp, _) = log_prob_and_grad(space.head, &logits, &space.groups, action).expect("head width");
    ZetaSample { value, action_prob: lp.exp() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub gamma: f64,
    pub reward_scale: f64,
}

impl From<&Hyper> for LossWeights {
    fn from(h: &Hyper) -> Self {
        Self { alpha: h.alpha, gamma: h.gamma, reward_scale: h.reward_scale }
    }
}

/// Mean over the batch of `(v(s) − γ v̄(s') + α log π(a|s) − scale·r)²`
/// and its gradient; v̄ is the target net and receives no gradient.
pub fn consistency_loss_and_grad(
    params: &AgentParams,
    batch: &[&Experience],
    rewards: &[f64],
    space: &ActionSpace,
    w: LossWeights,
) -> (f64, Gradients) {
    assert!(!batch.is_empty() && batch.len() == rewards.len());
    let scale = 1.0 / batch.len() as f64;
    let mut g = Gradients::zeros(params);
    let mut loss = 0.0;
    for (e, &r) in batch.iter().zip(rewards) {
        let vc = params.psi.forward_cached(&e.state).expect("state width");
        let next = params.psi_bar.forward(&e.next_state).expect("state width")[0];
        let pc = params.phi.forward_cached(&e.state).expect("state width");
        let (lp, dlogits) =
            log_prob_and_grad(space.head, pc.output(), &space.groups, &e.action).expect("head width");
        let delta = vc.output()[0] - w.gamma * next + w.alpha * lp - w.reward_scale * r;
        loss += delta * delta * scale;
        let d = 2.0 * delta * scale;
        params.psi.backward(&vc, &[d], &mut g.psi);
        if w.alpha != 0.0 {
            let dl: Vec<f64> = dlogits.iter().map(|v| v * d * w.alpha).collect();
            params.phi.backward(&pc, &dl, &mut g.phi);
        }
    }
    (loss, g)
}

pub fn consistency_loss(
    params: &AgentParams,
    batch: &[&Experience],
    rewards: &[f64],
    space: &ActionSpace,
    w: LossWeights,
) -> f64 {
    consistency_loss_and_grad(params, batch, rewards, space, w).0
}

/// `(λ/2)·mean ||deg·ζ_i − Σ_j ζ_j||²`, gradient through agent i only.
/// `neighbor_sums[b]` holds Σ_j ζ_j on sample `b`.
pub fn consensus_penalty_and_grad(
    params: &AgentParams,
    batch: &[&Experience],
    neighbor_sums: &[ZetaSample],
    degree: usize,
    lambda: f64,
    space: &ActionSpace,
) -> (f64, Gradients) {
    assert!(!batch.is_empty() && batch.len() == neighbor_sums.len());
    let mut g = Gradients::zeros(params);
    if degree == 0 {
        return (0.0, g);
    }
    let deg = degree as f64;
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (e, nb) in batch.iter().zip(neighbor_sums) {
        let vc = params.psi.forward_cached(&e.state).expect("state width");
        let pc = params.phi.forward_cached(&e.state).expect("state width");
        let (lp, dlogits) =
            log_prob_and_grad(space.head, pc.output(), &space.groups, &e.action).expect("head width");
        let prob = lp.exp();
        let ev = deg * vc.output()[0] - nb.value;
        let ep = deg * prob - nb.action_prob;
        loss += 0.5 * lambda * (ev * ev + ep * ep) * scale;
        let dv = lambda * deg * ev * scale;
        let dp = lambda * deg * ep * scale;
        if dv != 0.0 {
            params.psi.backward(&vc, &[dv], &mut g.psi);
        }
        if dp != 0.0 {
            let dl: Vec<f64> = dlogits.iter().map(|v| v * prob * dp).collect();
            params.phi.backward(&pc, &dl, &mut g.phi);
        }
    }
    (loss, g)
}

/// When the environment steps relative to training iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepTrigger {
    /// Every K·C iterations.
    #[default]
    IterationCount,
    /// Once every healthy agent has been updated at least C times.
    PerAgentUpdates,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmarlOptions {
    pub hyper: Hyper,
    pub trigger: StepTrigger,
    pub consistency_enabled: bool,
    pub consensus_enabled: bool,
}

impl Default for CmarlOptions {
    fn default() -> Self {
        Self { hyper: Hyper::default(), trigger: StepTrigger::default(), consistency_enabled: true, consensus_enabled: true }
    }
}

/// Independent random streams so that unrelated draws never shift each other.
pub mod streams {
    pub const AGENT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const ACTION: u64 = 3;
    pub const INIT: u64 = 100;
}

/// ChaCha stream `id` under `seed`.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Parameters for agent `i`, drawn from its own stream.
pub(crate) fn init_agent(seed: u64, i: usize, input: usize, hidden: usize, space: &ActionSpace) -> AgentParams {
    AgentParams::init(input, hidden, space.head_size(), &mut stream(seed, streams::INIT + i as u64))
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &p) in probs.iter().enumerate() {
        if u < p {
            return k;
        }
        u -= p;
    }
    probs.len() - 1
}

/// Draws every group from `phi`'s joint policy at `state`.
pub(crate) fn sample_joint_from<R: Rng + ?Sized>(
    phi: &MlpParams,
    state: &[f64],
    space: &ActionSpace,
    rng: &mut R,
) -> Vec<usize> {
    let logits = phi.forward(state).expect("state width");
    let dist = dist_from_logits(space.head, &logits, &space.groups).expect("head width");
    dist.probs.iter().map(|g| sample_index(g, rng)).collect()
}

pub(crate) fn sample_group_from<R: Rng + ?Sized>(
    phi: &MlpParams,
    state: &[f64],
    space: &ActionSpace,
    group: usize,
    rng: &mut R,
) -> usize {
    let logits = phi.forward(state).expect("state width");
    let dist = dist_from_logits(space.head, &logits, &space.groups).expect("head width");
    sample_index(&dist.probs[group], rng)
}

pub struct CmarlTrainer {
    opts: CmarlOptions,
    space: ActionSpace,
    id_size: usize,
    agents: Vec<AgentParams>,
    optim: Vec<AgentOptimizer>,
    graph: CommGraph,
    failed: Vec<bool>,
    rng_agent: ChaCha8Rng,
    rng_batch: ChaCha8Rng,
    rng_action: ChaCha8Rng,
    transmitted: u64,
    iterations: u64,
    updates: Vec<u64>,
}

impl CmarlTrainer {
    /// `id_size` is the raw payload per sample sent to neighbours (state plus joint action).
    pub fn new(
        input_dim: usize,
        space: ActionSpace,
        id_size: usize,
        graph: CommGraph,
        opts: CmarlOptions,
        seed: u64,
    ) -> Self {
        let k = graph.agent_count();
        assert_eq!(k, space.group_count(), "one agent per device group");
        let agents: Vec<_> = (0..k).map(|i| init_agent(seed, i, input_dim, opts.hyper.hidden, &space)).collect();
        let optim = agents.iter().map(|a| AgentOptimizer::new(a, opts.hyper.lr)).collect();
        Self {
            opts,
            space,
            id_size,
            agents,
            optim,
            graph,
            failed: vec![false; k],
            rng_agent: stream(seed, streams::AGENT),
            rng_batch: stream(seed, streams::BATCH),
            rng_action: stream(seed, streams::ACTION),
            transmitted: 0,
            iterations: 0,
            updates: vec![0; k],
        }
    }

    pub fn options(&self) -> &CmarlOptions {
        &self.opts
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn agents(&self) -> &[AgentParams] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [AgentParams] {
        &mut self.agents
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut CommGraph {
        &mut self.graph
    }

    pub fn is_failed(&self, i: usize) -> bool {
        self.failed[i]
    }

    pub fn set_failed(&mut self, i: usize, failed: bool) {
        self.failed[i] = failed;
    }

    pub fn transmitted(&self) -> u64 {
        self.transmitted
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn updates(&self) -> &[u64] {
        &self.updates
    }

    /// Neighbour outputs on agent `i`'s batch, `None` for links that are down.
    /// Charges the outgoing identifiers once plus two scalars per answering neighbour.
    pub fn gather_neighbor_zeta(&mut self, i: usize, batch: &[&Experience]) -> Vec<(usize, Option<Vec<ZetaSample>>)> {
        let mut out = Vec::new();
        let mut answered = 0u64;
        for j in 0..self.graph.agent_count() {
            match self.graph.link_is_up(i, j) {
                None => continue,
                Some(false) => out.push((j, None)),
                Some(true) => {
                    let z = batch.iter().map(|e| zeta(&self.agents[j], &e.state, &e.action, &self.space)).collect();
                    out.push((j, Some(z)));
                    answered += 1;
                }
            }
        }
        if answered > 0 {
            let b = batch.len() as u64;
            self.transmitted += b * self.id_size as u64 + 2 * b * answered;
        }
        out
    }

    /// Consistency step, consensus step and target update for agent `i` on a fixed batch.
    pub fn update_agent(&mut self, i: usize, buffer: &ReplayBuffer, indices: &[usize]) {
        let batch = buffer.batch(indices);
        let hyper = self.opts.hyper;
        if self.opts.consistency_enabled {
            let rewards: Vec<f64> = batch.iter().map(|e| e.rewards[i]).collect();
            let (_, g) = consistency_loss_and_grad(&self.agents[i], &batch, &rewards, &self.space, (&hyper).into());
            self.optim[i].step(&mut self.agents[i], &g.psi, &g.phi);
        }
        if self.opts.consensus_enabled {
            let gathered = self.gather_neighbor_zeta(i, &batch);
            let mut sums = vec![ZetaSample { value: 0.0, action_prob: 0.0 }; batch.len()];
            let mut degree = 0;
            for (_, z) in &gathered {
                if let Some(z) = z {
                    degree += 1;
                    for (s, v) in sums.iter_mut().zip(z) {
                        s.value += v.value;
                        s.action_prob += v.action_prob;
                    }
                }
            }
            let (_, g) =
                consensus_penalty_and_grad(&self.agents[i], &batch, &sums, degree, hyper.lambda, &self.space);
            if !g.is_zero() {
                self.optim[i].step(&mut self.agents[i], &g.psi, &g.phi);
            }
        }
        let a = &mut self.agents[i];
        crate::nn::target_update(&mut a.psi_bar, &a.psi, hyper.target_rho).expect("same shape");
        self.updates[i] += 1;
    }

    /// One iteration; returns the agent updated, or `None` when every agent is failed.
    pub fn train_iteration(&mut self, buffer: &ReplayBuffer) -> Option<usize> {
        let healthy: Vec<usize> = (0..self.agents.len()).filter(|&i| !self.failed[i]).collect();
        self.iterations += 1;
        if healthy.is_empty() || buffer.is_empty() {
            return None;
        }
        let i = healthy[self.rng_agent.random_range(0..healthy.len())];
        let indices = buffer.sample_indices(&mut self.rng_batch, self.opts.hyper.batch_size);
        self.update_agent(i, buffer, &indices);
        Some(i)
    }

    pub fn act(&mut self, i: usize, state: &[f64]) -> usize {
        sample_group_from(&self.agents[i].phi, state, &self.space, i, &mut self.rng_action)
    }

    pub fn sample_joint(&mut self, i: usize, state: &[f64]) -> Vec<usize> {
        sample_joint_from(&self.agents[i].phi, state, &self.space, &mut self.rng_action)
    }
}

impl Learner for CmarlTrainer {
    fn agent_count(&self) -> usize {
        self.agents.len()
    }

    fn train_hour(&mut self, buffer: &ReplayBuffer) {
        let k = self.agents.len();
        let c = self.opts.hyper.update_freq;
        match self.opts.trigger {
            StepTrigger::IterationCount => {
                for _ in 0..k * c {
                    self.train_iteration(buffer);
                }
            }
            StepTrigger::PerAgentUpdates => {
                let start = self.updates.clone();
                let limit = 1000 * k * c.max(1);
                for _ in 0..limit {
                    let done = (0..k)
                        .filter(|&i| !self.failed[i])
                        .all(|i| self.updates[i] - start[i] >= c as u64);
                    if done || self.train_iteration(buffer).is_none() {
                        break;
                    }
                }
            }
        }
    }

    fn act(&mut self, agent: usize, state: &[f64]) -> usize {
        CmarlTrainer::act(self, agent, state)
    }

    fn sample_joint(&mut self, agent: usize, state: &[f64]) -> Vec<usize> {
        CmarlTrainer::sample_joint(self, agent, state)
    }

    fn transmitted(&self) -> u64 {
        self.transmitted
    }

    fn set_agent_failed(&mut self, agent: usize, failed: bool) {
        self.set_failed(agent, failed);
    }

    fn graph_mut(&mut self) -> Option<&mut CommGraph> {
        Some(&mut self.graph)
    }

    fn params(&self) -> Vec<&AgentParams> {
        self.agents.iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> ActionSpace {
        ActionSpace::new(vec![3, 2], PolicyHead::Ordinal)
    }

    fn buffer(seed: u64, n: usize, dim: usize, agents: usize) -> ReplayBuffer {
        let mut rng = stream(seed, 77);
        let mut b = ReplayBuffer::new(1000);
        for _ in 0..n {
            b.push(Experience {
                state: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: vec![rng.random_range(0..3), rng.random_range(0..2)],
                rewards: (0..agents).map(|_| rng.random_range(-1.0..0.0)).collect(),
                next_state: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            });
        }
        b
    }

    fn trainer(seed: u64) -> CmarlTrainer {
        CmarlTrainer::new(4, space(), 9, CommGraph::chain(2), CmarlOptions::default(), seed)
    }

    #[test]
    fn zero_residual_batch_has_zero_loss() {
        let t = trainer(1);
        let p = &t.agents()[0];
        let b = buffer(2, 4, 4, 2);
        let batch = b.batch(&[0, 1, 2, 3]);
        let w = LossWeights { alpha: 0.3, gamma: 0.9, reward_scale: 5.0 };
        let rewards: Vec<f64> = batch
            .iter()
            .map(|e| {
                let v = p.psi.forward(&e.state).unwrap()[0];
                let nv = p.psi_bar.forward(&e.next_state).unwrap()[0];
                let lp = crate::nn::log_prob(&crate::nn::policy_forward(&p.phi, &e.state, &[3, 2], PolicyHead::Ordinal).unwrap(), &e.action);
                (v - 0.9 * nv + 0.3 * lp) / 5.0
            })
            .collect();
        let (loss, g) = consistency_loss_and_grad(p, &batch, &rewards, &space(), w);
        assert!(loss < 1e-28);
        assert!(g.flat().iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn loss_reduces_to_regression_without_discount_or_entropy() {
        let t = trainer(3);
        let p = &t.agents()[0];
        let b = buffer(4, 5, 4, 2);
        let batch = b.batch(&[0, 1, 2, 3, 4]);
        let rewards: Vec<f64> = batch.iter().map(|e| e.rewards[0]).collect();
        let w = LossWeights { alpha: 0.0, gamma: 0.0, reward_scale: 5.0 };
        let direct: f64 = batch
            .iter()
            .zip(&rewards)
            .map(|(e, r)| (p.psi.forward(&e.state).unwrap()[0] - 5.0 * r).powi(2))
            .sum::<f64>()
            / 5.0;
        assert!((consistency_loss(p, &batch, &rewards, &space(), w) - direct).abs() < 1e-12);
        let mut rev = batch.clone();
        rev.reverse();
        let rr: Vec<f64> = rev.iter().map(|e| e.rewards[0]).collect();
        let w = LossWeights { alpha: 0.5, gamma: 0.95, reward_scale: 5.0 };
        let a = consistency_loss(p, &batch, &rewards, &space(), w);
        assert!((a - consistency_loss(p, &rev, &rr, &space(), w)).abs() < 1e-12);
    }

    #[test]
    fn penalty_example_two_agents() {
        let mut t = trainer(5);
        let b = buffer(6, 1, 4, 2);
        let batch = b.batch(&[0]);
        for a in t.agents_mut() {
            a.psi.data.iter_mut().for_each(|v| *v = 0.0);
            a.phi.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let last = t.agents()[0].psi.param_count() - 1;
        t.agents_mut()[0].psi.data[last] = 1.0;
        let other = zeta(&t.agents()[1], &batch[0].state, &batch[0].action, t.space());
        let (pen, _) = consensus_penalty_and_grad(&t.agents()[0], &batch, &[other], 1, 1.0, t.space());
        assert!((pen - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_agents_feel_no_penalty() {
        let mut t = trainer(7);
        let copy = t.agents()[0].clone();
        t.agents_mut()[1] = copy;
        let b = buffer(8, 16, 4, 2);
        let batch = b.batch(&(0..16).collect::<Vec<_>>());
        let gathered = t.gather_neighbor_zeta(0, &batch);
        let z = gathered[0].1.clone().unwrap();
        for (e, zj) in batch.iter().zip(&z) {
            assert_eq!(*zj, zeta(&t.agents()[0], &e.state, &e.action, t.space()));
        }
        let (pen, g) = consensus_penalty_and_grad(&t.agents()[0], &batch, &z, 1, 1.0, t.space());
        assert_eq!(pen, 0.0);
        assert!(g.is_zero());
    }

    #[test]
    fn counter_charges_identifiers_and_two_scalars_per_neighbor() {
        let mut t = CmarlTrainer::new(4, ActionSpace::new(vec![3, 2, 2], PolicyHead::Ordinal), 9, CommGraph::chain(3), CmarlOptions::default(), 0);
        let b = buffer(1, 16, 4, 3);
        let batch = b.batch(&(0..16).collect::<Vec<_>>());
        t.gather_neighbor_zeta(1, &batch);
        assert_eq!(t.transmitted(), 16 * 9 + 2 * 16 * 2);
        t.graph_mut().set_link(0, 1, false).unwrap();
        t.graph_mut().set_link(1, 2, false).unwrap();
        let before = t.transmitted();
        let g = t.gather_neighbor_zeta(1, &batch);
        assert_eq!(t.transmitted(), before);
        assert!(g.iter().all(|(_, z)| z.is_none()));
    }

    #[test]
    fn zero_residual_update_leaves_params_unchanged() {
        let mut t = CmarlTrainer::new(4, ActionSpace::new(vec![3], PolicyHead::Ordinal), 9, CommGraph::chain(1), CmarlOptions::default(), 2);
        let mut b = ReplayBuffer::new(10);
        let p = t.agents()[0].clone();
        let state = vec![0.1, 0.2, -0.3, 0.4];
        let v = p.psi.forward(&state).unwrap()[0];
        let lp = crate::nn::log_prob(&crate::nn::policy_forward(&p.phi, &state, &[3], PolicyHead::Ordinal).unwrap(), &[1]);
        let r = (v - 0.95 * v + 0.5 * lp) / 5.0;
        b.push(Experience { state: state.clone(), action: vec![1], rewards: vec![r], next_state: state });
        t.update_agent(0, &b, &[0]);
        assert_eq!(t.agents()[0].phi, p.phi);
        assert!(t.agents()[0].psi.data.iter().zip(&p.psi.data).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn repeated_steps_fit_a_fixed_batch() {
        let mut t = trainer(9);
        let b = buffer(10, 16, 4, 2);
        let idx: Vec<usize> = (0..16).collect();
        let w = LossWeights::from(&t.options().hyper);
        let loss = |t: &CmarlTrainer| {
            let batch = b.batch(&idx);
            let r: Vec<f64> = batch.iter().map(|e| e.rewards[0]).collect();
            consistency_loss(&t.agents()[0], &batch, &r, t.space(), w)
        };
        let before = loss(&t);
        let mut opts = *t.options();
        opts.consensus_enabled = false;
        t.opts = opts;
        for _ in 0..100 {
            t.update_agent(0, &b, &idx);
        }
        assert!(loss(&t) < 0.5 * before, "{} -> {}", before, loss(&t));
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let b = buffer(11, 50, 4, 2);
        let run = || {
            let mut t = trainer(12);
            for _ in 0..10 {
                t.train_iteration(&b);
            }
            t.agents().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn failed_agents_are_never_sampled() {
        let b = buffer(13, 20, 4, 2);
        let mut t = trainer(14);
        t.set_failed(0, true);
        let frozen = t.agents()[0].clone();
        for _ in 0..30 {
            assert_eq!(t.train_iteration(&b), Some(1));
        }
        assert_eq!(t.agents()[0], frozen);
        t.set_failed(1, true);
        assert_eq!(t.train_iteration(&b), None);
    }

    #[test]
    fn iteration_trigger_runs_k_times_c() {
        let b = buffer(15, 20, 4, 3);
        let mut t = CmarlTrainer::new(4, ActionSpace::new(vec![3, 2, 2], PolicyHead::Ordinal), 9, CommGraph::chain(3), CmarlOptions::default(), 0);
        t.train_hour(&b);
        assert_eq!(t.iterations(), 3);
        let mut opts = CmarlOptions::default();
        opts.trigger = StepTrigger::PerAgentUpdates;
        opts.hyper.update_freq = 2;
        let mut t = CmarlTrainer::new(4, ActionSpace::new(vec![3, 2, 2], PolicyHead::Ordinal), 9, CommGraph::chain(3), opts, 0);
        t.train_hour(&b);
        assert!(t.updates().iter().all(|&u| u >= 2));
    }

    #[test]
    fn actions_stay_in_group_range() {
        let mut t = trainer(16);
        for k in 0..200 {
            let s = [k as f64 / 100.0, -0.5, 0.3, 1.0];
            assert!(t.act(0, &s) < 3);
            assert!(t.act(1, &s) < 2);
            let joint = t.sample_joint(1, &s);
            assert!(joint[0] < 3 && joint[1] < 2);
        }
    }
}
