use std::time::Instant;

use rand::Rng;

use super::{stream, CommGraph, Experience, ReplayBuffer};
use crate::env::{Env, EnvError, GlobalState, StateEncoder, Transition};
use crate::failures::{active_at, FailureEvent};
use crate::nn::AgentParams;

/// What the control loop needs from a trainer.
pub trait Learner {
    fn agent_count(&self) -> usize;
    /// Training performed between two environment hours.
    fn train_hour(&mut self, buffer: &ReplayBuffer);
    /// Tap index for device `agent`, drawn by that agent's policy.
    fn act(&mut self, agent: usize, state: &[f64]) -> usize;
    /// Whole joint action drawn from `agent`'s policy.
    fn sample_joint(&mut self, agent: usize, state: &[f64]) -> Vec<usize>;
    fn transmitted(&self) -> u64;
    fn set_agent_failed(&mut self, agent: usize, failed: bool);
    fn graph_mut(&mut self) -> Option<&mut CommGraph>;
    fn params(&self) -> Vec<&AgentParams>;
}

pub const METRICS_HEADER: [&str; 5] =
    ["hour", "mean_hourly_reward", "mean_violations", "transmitted_scalars_cumulative", "wall_seconds"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub hour: usize,
    /// Mean over agents of the local rewards ($).
    pub mean_hourly_reward: f64,
    /// Mean over agents of the metered violation counts.
    pub mean_violations: f64,
    pub transmitted_scalars_cumulative: u64,
    pub wall_seconds: f64,
}

impl MetricsRow {
    pub fn to_record(&self) -> [String; 5] {
        [
            self.hour.to_string(),
            format!("{:?}", self.mean_hourly_reward),
            format!("{:?}", self.mean_violations),
            self.transmitted_scalars_cumulative.to_string(),
            format!("{:?}", self.wall_seconds),
        ]
    }
}

/// Replay buffer filled by a random-tap behaviour policy, plus the statistics
/// frozen from that history.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    pub buffer: ReplayBuffer,
    pub encoder: StateEncoder,
    /// Per-bus mean real load, substation excluded.
    pub mean_p: Vec<f64>,
    pub mean_q: Vec<f64>,
}

pub fn encode_transition(t: &Transition, env: &Env, encoder: &StateEncoder) -> Experience {
    let action = env
        .feeder()
        .devices
        .iter()
        .zip(&t.action)
        .map(|(d, &tap)| d.index_for_tap(tap))
        .collect();
    Experience {
        state: encoder.encode(&t.state),
        action,
        rewards: t.rewards.clone(),
        next_state: encoder.encode(&t.next_state),
    }
}

/// Steps `env` for `hours` hours with uniformly random taps.
pub fn init_buffer_from_history(
    env: &mut Env,
    hours: usize,
    capacity: usize,
    seed: u64,
) -> Result<HistoryBuffer, EnvError> {
    assert!(hours >= 1, "history needs at least one hour");
    let mut rng = stream(seed, 50);
    let mut log = Vec::with_capacity(hours);
    for _ in 0..hours {
        let action: Vec<i32> =
            env.feeder().devices.iter().map(|d| rng.random_range(d.tap_min..=d.tap_max)).collect();
        log.push(env.step(&action)?);
    }
    let encoder = StateEncoder::fit(env.feeder(), log.iter().map(|t| &t.state));
    let n = log[0].state.p.len();
    let mut mean_p = vec![0.0; n];
    let mut mean_q = vec![0.0; n];
    for t in &log {
        for b in 0..n {
            mean_p[b] += t.state.p[b] / hours as f64;
            mean_q[b] += t.state.q[b] / hours as f64;
        }
    }
    let mut buffer = ReplayBuffer::new(capacity);
    for t in &log {
        buffer.push(encode_transition(t, env, &encoder));
    }
    Ok(HistoryBuffer { buffer, encoder, mean_p, mean_q })
}

/// Interleaves training with hourly actuation.
pub struct ControlLoop<L: Learner> {
    pub env: Env,
    pub learner: L,
    pub buffer: ReplayBuffer,
    pub encoder: StateEncoder,
    pub mean_p: Vec<f64>,
    pub mean_q: Vec<f64>,
    schedule: Vec<FailureEvent>,
    baseline_graph: Option<CommGraph>,
    elapsed: usize,
    record_wall_clock: bool,
    started: Instant,
    /// Hours acted on replacement states (nothing stored).
    pub replaced_hours: usize,
}

impl<L: Learner> ControlLoop<L> {
    pub fn new(env: Env, mut learner: L, history: HistoryBuffer) -> Self {
        let baseline_graph = learner.graph_mut().map(|g| g.clone());
        Self {
            env,
            learner,
            buffer: history.buffer,
            encoder: history.encoder,
            mean_p: history.mean_p,
            mean_q: history.mean_q,
            schedule: Vec::new(),
            baseline_graph,
            elapsed: 0,
            record_wall_clock: false,
            started: Instant::now(),
            replaced_hours: 0,
        }
    }

    pub fn with_failures(mut self, schedule: Vec<FailureEvent>) -> Self {
        self.schedule = schedule;
        self
    }

    /// Real elapsed time in the metrics; otherwise the column is zero so reruns are byte-identical.
    pub fn with_wall_clock(mut self, on: bool) -> Self {
        self.record_wall_clock = on;
        self
    }

    pub fn elapsed_hours(&self) -> usize {
        self.elapsed
    }

    pub fn baseline_graph(&self) -> Option<&CommGraph> {
        self.baseline_graph.as_ref()
    }

    fn apply_failures(&mut self) -> bool {
        let active = active_at(&self.schedule, self.elapsed);
        for i in 0..self.learner.agent_count() {
            self.learner.set_agent_failed(i, active.agents.contains(&i));
        }
        let Some(graph) = self.learner.graph_mut() else { return true };
        let edges = graph.edges().to_vec();
        for (a, b) in edges {
            graph.set_link(a, b, !active.links.contains(&(a, b))).expect("baseline edge");
        }
        graph.connectivity().connected
    }

    /// `[p̂, q̂, Â, t]` with Â drawn from agent `i`'s own policy.
    pub fn replacement_state(&mut self, i: usize, last_action: &[i32], hour: usize) -> GlobalState {
        let probe = GlobalState {
            p: self.mean_p.clone(),
            q: self.mean_q.clone(),
            prev_action: last_action.to_vec(),
            hour,
        };
        let idx = self.learner.sample_joint(i, &self.encoder.encode(&probe));
        let prev_action =
            self.env.feeder().devices.iter().zip(idx).map(|(d, k)| d.tap_for_index(k)).collect();
        GlobalState { prev_action, ..probe }
    }

    /// Runs one control hour and returns its metrics row.
    pub fn step_hour(&mut self) -> Result<MetricsRow, EnvError> {
        let connected = self.apply_failures();
        self.learner.train_hour(&self.buffer);
        let state = self.env.state();
        let k = self.learner.agent_count();
        let frozen = active_at(&self.schedule, self.elapsed).agents;
        let mut action = self.env.taps().to_vec();
        let shared = self.encoder.encode(&state);
        for i in 0..k {
            if frozen.contains(&i) {
                continue;
            }
            let x = if connected {
                shared.clone()
            } else {
                let s = self.replacement_state(i, &state.prev_action, state.hour);
                self.encoder.encode(&s)
            };
            action[i] = self.env.feeder().devices[i].tap_for_index(self.learner.act(i, &x));
        }
        let t = self.env.step(&action)?;
        if connected {
            self.buffer.push(encode_transition(&t, &self.env, &self.encoder));
        } else {
            self.replaced_hours += 1;
        }
        let row = MetricsRow {
            hour: self.elapsed,
            mean_hourly_reward: t.rewards.iter().sum::<f64>() / k as f64,
            mean_violations: t.violations.iter().map(|&v| f64::from(v)).sum::<f64>() / k as f64,
            transmitted_scalars_cumulative: self.learner.transmitted(),
            wall_seconds: if self.record_wall_clock { self.started.elapsed().as_secs_f64() } else { 0.0 },
        };
        self.elapsed += 1;
        if self.elapsed >= self.schedule_end() {
            self.restore();
        }
        Ok(row)
    }

    fn schedule_end(&self) -> usize {
        self.schedule.iter().map(|e| e.start_hour + e.duration_hours).max().unwrap_or(0)
    }

    fn restore(&mut self) {
        for i in 0..self.learner.agent_count() {
            self.learner.set_agent_failed(i, false);
        }
        if let Some(g) = self.learner.graph_mut() {
            g.restore_all();
        }
    }

    /// Current graph equals the pre-failure graph.
    pub fn graph_restored(&mut self) -> bool {
        let base = self.baseline_graph.clone();
        match (self.learner.graph_mut(), base) {
            (Some(g), Some(b)) => *g == b,
            (None, None) => true,
            _ => false,
        }
    }

    pub fn run(&mut self, hours: usize, mut sink: impl FnMut(&MetricsRow)) -> Result<(), EnvError> {
        for _ in 0..hours {
            let row = self.step_hour()?;
            sink(&row);
        }
        Ok(())
    }
}
