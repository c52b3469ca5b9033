//! Comparison trainers sharing the consistency loss.
//!
//! [`SacTrainer`] learns one centralized value/policy pair on the averaged
//! reward. [`AdmmTrainer`] keeps per-agent networks and enforces parameter
//! agreement with linearized ADMM:
//!
//! ```text
//! θ_i ← θ_i − η (∇J_i(θ_i) + μ_i + ρ Σ_{j∈N(i)} (θ_i − θ_j))
//! μ_i ← μ_i + c Σ_{j∈N(i)} (θ_i − θ_j)
//! ```
//!
//! where θ_i stacks ψ_i and φ_i and μ_i is the mirrored dual.

use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;

use crate::consensus::{
    consistency_loss_and_grad, init_agent, sample_group_from, sample_joint_from, stream, streams,
    ActionSpace, CommGraph, Experience, Gradients, Hyper, Learner, LossWeights, MetricsRow,
    ReplayBuffer,
};
use crate::nn::{target_update, AgentOptimizer, AgentParams};

/// Centralized learner over the global state and joint action.
pub struct SacTrainer {
    hyper: Hyper,
    space: ActionSpace,
    params: AgentParams,
    optim: AgentOptimizer,
    rng_batch: ChaCha8Rng,
    rng_action: ChaCha8Rng,
    iterations: u64,
    iterations_per_hour: usize,
}

impl SacTrainer {
    /// Trains `groups × C` iterations per hour, matching the consensus trainer's total.
    pub fn new(input_dim: usize, space: ActionSpace, hyper: Hyper, seed: u64) -> Self {
        let params = init_agent(seed, 0, input_dim, hyper.hidden, &space);
        let optim = AgentOptimizer::new(&params, hyper.lr);
        let iterations_per_hour = space.group_count() * hyper.update_freq;
        Self {
            hyper,
            space,
            params,
            optim,
            rng_batch: stream(seed, streams::BATCH),
            rng_action: stream(seed, streams::ACTION),
            iterations: 0,
            iterations_per_hour,
        }
    }

    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut AgentParams {
        &mut self.params
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    /// One Adam step on the averaged-reward consistency loss, then target smoothing.
    pub fn sac_train_iteration(&mut self, buffer: &ReplayBuffer, indices: &[usize]) {
        let batch = buffer.batch(indices);
        let rewards: Vec<f64> = batch.iter().map(|e| e.mean_reward()).collect();
        let (_, g) = consistency_loss_and_grad(&self.params, &batch, &rewards, &self.space, (&self.hyper).into());
        self.optim.step(&mut self.params, &g.psi, &g.phi);
        target_update(&mut self.params.psi_bar, &self.params.psi, self.hyper.target_rho).expect("same shape");
        self.iterations += 1;
    }

    pub fn train_iteration(&mut self, buffer: &ReplayBuffer) {
        if buffer.is_empty() {
            return;
        }
        let indices = buffer.sample_indices(&mut self.rng_batch, self.hyper.batch_size);
        self.sac_train_iteration(buffer, &indices);
    }
}

impl Learner for SacTrainer {
    fn agent_count(&self) -> usize {
        self.space.group_count()
    }

    fn train_hour(&mut self, buffer: &ReplayBuffer) {
        for _ in 0..self.iterations_per_hour {
            self.train_iteration(buffer);
        }
    }

    fn act(&mut self, agent: usize, state: &[f64]) -> usize {
        sample_group_from(&self.params.phi, state, &self.space, agent, &mut self.rng_action)
    }

    fn sample_joint(&mut self, _agent: usize, state: &[f64]) -> Vec<usize> {
        sample_joint_from(&self.params.phi, state, &self.space, &mut self.rng_action)
    }

    fn transmitted(&self) -> u64 {
        0
    }

    fn set_agent_failed(&mut self, _agent: usize, _failed: bool) {}

    fn graph_mut(&mut self) -> Option<&mut CommGraph> {
        None
    }

    fn params(&self) -> Vec<&AgentParams> {
        vec![&self.params]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConstants {
    /// Dual step c.
    pub c: f64,
    /// Primal proximity weight ρ.
    pub rho: f64,
}

impl Default for AdmmConstants {
    fn default() -> Self {
        Self { c: 1.0, rho: 500.0 }
    }
}

fn flat(p: &AgentParams) -> Vec<f64> {
    p.psi.data.iter().chain(&p.phi.data).copied().collect()
}

fn unflat(p: &mut AgentParams, theta: &[f64]) {
    let n = p.psi.param_count();
    p.psi.data.copy_from_slice(&theta[..n]);
    p.phi.data.copy_from_slice(&theta[n..]);
}

/// `J_i(θ_i) + μ_i·θ_i + (ρ/2) Σ_j ||θ_i − θ_j||²` and its gradient with respect to θ_i.
pub fn admm_primal_objective_and_grad(
    params: &AgentParams,
    batch: &[&Experience],
    rewards: &[f64],
    dual: &[f64],
    neighbors: &[Vec<f64>],
    rho: f64,
    space: &ActionSpace,
    w: LossWeights,
) -> (f64, Vec<f64>) {
    let (j, g) = consistency_loss_and_grad(params, batch, rewards, space, w);
    let theta = flat(params);
    let mut grad = g.flat();
    let mut obj = j;
    for (k, t) in theta.iter().enumerate() {
        obj += dual[k] * t;
        grad[k] += dual[k];
    }
    for nb in neighbors {
        for (k, (t, s)) in theta.iter().zip(nb).enumerate() {
            let d = t - s;
            obj += 0.5 * rho * d * d;
            grad[k] += rho * d;
        }
    }
    (obj, grad)
}

/// Decentralized parameter consensus by linearized ADMM with plain gradient steps.
pub struct AdmmTrainer {
    hyper: Hyper,
    constants: AdmmConstants,
    space: ActionSpace,
    agents: Vec<AgentParams>,
    duals: Vec<Vec<f64>>,
    graph: CommGraph,
    failed: Vec<bool>,
    loss_enabled: bool,
    rng_batch: ChaCha8Rng,
    rng_action: ChaCha8Rng,
    transmitted: u64,
    iterations: u64,
}

impl AdmmTrainer {
    pub fn new(
        input_dim: usize,
        space: ActionSpace,
        graph: CommGraph,
        hyper: Hyper,
        constants: AdmmConstants,
        seed: u64,
    ) -> Self {
        let k = graph.agent_count();
        assert_eq!(k, space.group_count(), "one agent per device group");
        let agents: Vec<_> = (0..k).map(|i| init_agent(seed, i, input_dim, hyper.hidden, &space)).collect();
        let duals = agents.iter().map(|a| vec![0.0; a.trainable_count()]).collect();
        Self {
            hyper,
            constants,
            space,
            agents,
            duals,
            graph,
            failed: vec![false; k],
            loss_enabled: true,
            rng_batch: stream(seed, streams::BATCH),
            rng_action: stream(seed, streams::ACTION),
            transmitted: 0,
            iterations: 0,
        }
    }

    /// Drops ∇J from the primal step, leaving pure consensus dynamics.
    pub fn without_loss(mut self) -> Self {
        self.loss_enabled = false;
        self
    }

    pub fn agents(&self) -> &[AgentParams] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [AgentParams] {
        &mut self.agents
    }

    pub fn duals(&self) -> &[Vec<f64>] {
        &self.duals
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn transmitted(&self) -> u64 {
        self.transmitted
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    /// Scalars in one agent's exchanged parameter vector.
    pub fn message_size(&self) -> usize {
        self.agents[0].trainable_count()
    }

    /// Largest pairwise parameter distance between agents.
    pub fn disagreement(&self) -> f64 {
        let thetas: Vec<Vec<f64>> = self.agents.iter().map(flat).collect();
        let mut worst: f64 = 0.0;
        for a in 0..thetas.len() {
            for b in a + 1..thetas.len() {
                let d = thetas[a].iter().zip(&thetas[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
                worst = worst.max(d.sqrt());
            }
        }
        worst
    }

    /// Synchronous primal and dual steps for every healthy agent.
    pub fn admm_train_iteration(&mut self, buffer: &ReplayBuffer) {
        let k = self.agents.len();
        let eta = self.hyper.lr;
        let thetas: Vec<Vec<f64>> = self.agents.iter().map(flat).collect();
        let neighbors: Vec<Vec<usize>> = (0..k).map(|i| self.graph.up_neighbors(i)).collect();
        let sent: usize = neighbors.iter().map(Vec::len).sum();
        self.transmitted += (sent * self.message_size()) as u64;
        let mut next = thetas.clone();
        for i in 0..k {
            if self.failed[i] {
                continue;
            }
            let grad = if self.loss_enabled && !buffer.is_empty() {
                let idx = buffer.sample_indices(&mut self.rng_batch, self.hyper.batch_size);
                let batch = buffer.batch(&idx);
                let rewards: Vec<f64> = batch.iter().map(|e| e.rewards[i]).collect();
                consistency_loss_and_grad(&self.agents[i], &batch, &rewards, &self.space, (&self.hyper).into()).1
            } else {
                Gradients::zeros(&self.agents[i])
            }
            .flat();
            for n in 0..next[i].len() {
                let lap: f64 = neighbors[i].iter().map(|&j| thetas[i][n] - thetas[j][n]).sum();
                next[i][n] = thetas[i][n] - eta * (grad[n] + self.duals[i][n] + self.constants.rho * lap);
            }
        }
        for i in 0..k {
            if self.failed[i] {
                continue;
            }
            for n in 0..next[i].len() {
                let lap: f64 = neighbors[i].iter().map(|&j| next[i][n] - next[j][n]).sum();
                self.duals[i][n] += self.constants.c * lap;
            }
            unflat(&mut self.agents[i], &next[i]);
            let a = &mut self.agents[i];
            target_update(&mut a.psi_bar, &a.psi, self.hyper.target_rho).expect("same shape");
        }
        self.iterations += 1;
    }
}

impl Learner for AdmmTrainer {
    fn agent_count(&self) -> usize {
        self.agents.len()
    }

    /// C synchronous iterations, each updating every agent once.
    fn train_hour(&mut self, buffer: &ReplayBuffer) {
        for _ in 0..self.hyper.update_freq {
            self.admm_train_iteration(buffer);
        }
    }

    fn act(&mut self, agent: usize, state: &[f64]) -> usize {
        sample_group_from(&self.agents[agent].phi, state, &self.space, agent, &mut self.rng_action)
    }

    fn sample_joint(&mut self, agent: usize, state: &[f64]) -> Vec<usize> {
        sample_joint_from(&self.agents[agent].phi, state, &self.space, &mut self.rng_action)
    }

    fn transmitted(&self) -> u64 {
        self.transmitted
    }

    fn set_agent_failed(&mut self, agent: usize, failed: bool) {
        self.failed[agent] = failed;
    }

    fn graph_mut(&mut self) -> Option<&mut CommGraph> {
        Some(&mut self.graph)
    }

    fn params(&self) -> Vec<&AgentParams> {
        self.agents.iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommRow {
    pub method: String,
    pub hours: usize,
    pub total_scalars: u64,
    pub per_hour: f64,
    /// `per_hour` relative to the first method in the report.
    pub ratio: f64,
}

/// Transmitted scalars per environment hour for each named metrics stream.
pub fn communication_report(runs: &[(String, Vec<MetricsRow>)]) -> Vec<CommRow> {
    let mut out: Vec<CommRow> = runs
        .iter()
        .map(|(method, rows)| {
            let hours = rows.len();
            let total_scalars = rows.last().map_or(0, |r| r.transmitted_scalars_cumulative);
            let per_hour = if hours > 0 { total_scalars as f64 / hours as f64 } else { 0.0 };
            CommRow { method: method.clone(), hours, total_scalars, per_hour, ratio: 1.0 }
        })
        .collect();
    if let Some(base) = out.first().map(|r| r.per_hour) {
        for r in &mut out {
            r.ratio = if base > 0.0 { r.per_hour / base } else { f64::NAN };
        }
    }
    out
}

pub fn communication_report_text(rows: &[CommRow]) -> String {
    let mut s = format!("{:<10} {:>8} {:>16} {:>14} {:>10}\n", "method", "hours", "total_scalars", "per_hour", "ratio");
    for r in rows {
        let _ = writeln!(s, "{:<10} {:>8} {:>16} {:>14.1} {:>10.3}", r.method, r.hours, r.total_scalars, r.per_hour, r.ratio);
    }
    s
}

pub fn communication_report_csv(rows: &[CommRow]) -> String {
    let mut s = String::from("method,hours,total_scalars,per_hour,ratio\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:?},{:?}", r.method, r.hours, r.total_scalars, r.per_hour, r.ratio);
    }
    s
}
