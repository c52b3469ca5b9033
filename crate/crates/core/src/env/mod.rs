//! Feeder wrapped as a networked multi-agent decision process.
//!
//! Every tap device is one agent. At hour `t` the joint action is applied to
//! the loads of hour `t`, the power flow is solved, and each agent is paid
//! from what it meters: a subset of bus voltages and a subset of branch losses.

mod profile;

pub use profile::{load_profile_from_csv, synth_load_profile, write_profile_csv, LoadProfile};

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::feeder::{
    solve_power_flow_with, DeviceKind, DeviceLocation, FeederError, FeederModel, PowerFlowError,
    PowerFlowSolution, SolverOptions,
};

/// Hours per week; period of the time features.
pub const WEEK_HOURS: usize = 168;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("device {device} has no downstream bus to meter")]
    NoDownstreamBus { device: String },
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error("power flow failed at hour {hour}: {source}")]
    PowerFlow {
        hour: usize,
        #[source]
        source: PowerFlowError,
    },
    #[error("load profile: {0}")]
    Profile(String),
    #[error("load profile row {row}: {msg}")]
    ProfileRow { row: usize, msg: String },
    #[error("load profile is missing hour {hour}, bus {bus}")]
    MissingCell { hour: usize, bus: u32 },
    #[error("load profile covers {found} buses, feeder has {expected}")]
    ProfileShape { found: usize, expected: usize },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

/// S_t = [p_t, q_t, A_{t-1}, t]. Load vectors skip the substation (bus index 0).
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub prev_action: Vec<i32>,
    pub hour: usize,
}

impl GlobalState {
    /// Length of the unencoded state: both load vectors, the taps and the hour.
    pub fn raw_len(&self) -> usize {
        self.p.len() + self.q.len() + self.prev_action.len() + 1
    }
}

/// How far a capacitor's loss metering reaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CapacitorReach {
    /// Branches touching the capacitor bus.
    #[default]
    Incident,
    /// Branches touching the capacitor bus or any of its neighbours.
    TwoHop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeteringSets {
    /// Metered branch indices per agent.
    pub branches: Vec<Vec<usize>>,
    /// Metered bus indices per agent; never empty.
    pub nodes: Vec<Vec<usize>>,
}

impl MeteringSets {
    pub fn agent_count(&self) -> usize {
        self.nodes.len()
    }

    /// One line per agent listing metered buses and branches by label.
    pub fn dump(&self, feeder: &FeederModel) -> String {
        let mut out = String::new();
        for (i, dev) in feeder.devices.iter().enumerate() {
            let nodes: Vec<String> =
                self.nodes[i].iter().map(|&b| feeder.buses[b].id.to_string()).collect();
            let branches: Vec<String> =
                self.branches[i].iter().map(|&k| feeder.branch_label(k)).collect();
            let _ = writeln!(
                out,
                "{} {} N=[{}] L=[{}]",
                dev.name,
                dev.kind,
                nodes.join(","),
                branches.join(",")
            );
        }
        out
    }
}

pub fn build_metering_sets(
    feeder: &FeederModel,
    reach: CapacitorReach,
) -> Result<MeteringSets, EnvError> {
    let mut branches = Vec::with_capacity(feeder.device_count());
    let mut nodes = Vec::with_capacity(feeder.device_count());
    for dev in &feeder.devices {
        let (n, l) = match (dev.kind, dev.location) {
            (DeviceKind::Regulator, DeviceLocation::Bus(b)) => {
                let &k = feeder
                    .child_branches(b)
                    .first()
                    .ok_or_else(|| EnvError::NoDownstreamBus { device: dev.name.clone() })?;
                (vec![feeder.branches[k].to], Vec::new())
            }
            (DeviceKind::Oltc, DeviceLocation::Branch(k)) => (vec![feeder.branches[k].to], vec![k]),
            (DeviceKind::Capacitor, DeviceLocation::Bus(b)) => {
                let mut l = feeder.incident_branches(b);
                if reach == CapacitorReach::TwoHop {
                    for k in l.clone() {
                        let br = &feeder.branches[k];
                        let other = if br.from == b { br.to } else { br.from };
                        l.extend(feeder.incident_branches(other));
                    }
                    l.sort_unstable();
                    l.dedup();
                }
                (vec![b], l)
            }
            _ => unreachable!("device locations are validated by the feeder"),
        };
        nodes.push(n);
        branches.push(l);
    }
    Ok(MeteringSets { branches, nodes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageBounds {
    pub upper: f64,
    pub lower: f64,
}

impl Default for VoltageBounds {
    fn default() -> Self {
        Self { upper: 1.05, lower: 0.95 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConstants {
    /// Price of losses ($/kWh).
    pub c_loss: f64,
    /// Cost per tap step moved ($).
    pub c_switch: f64,
    /// Cost per metered voltage violation ($).
    pub violation_penalty: f64,
    pub bounds: VoltageBounds,
}

impl Default for RewardConstants {
    fn default() -> Self {
        Self { c_loss: 0.04, c_switch: 0.1, violation_penalty: 0.08, bounds: VoltageBounds::default() }
    }
}

pub fn violation_count(
    agent: usize,
    sol: &PowerFlowSolution,
    sets: &MeteringSets,
    bounds: VoltageBounds,
) -> u32 {
    sets.nodes[agent]
        .iter()
        .map(|&b| {
            let v = sol.voltages[b];
            u32::from(v > bounds.upper) + u32::from(v < bounds.lower)
        })
        .sum()
}

/// Hourly reward in dollars; one-hour steps make kW and kWh interchangeable.
pub fn local_reward(
    agent: usize,
    sol: &PowerFlowSolution,
    prev_tap: i32,
    new_tap: i32,
    sets: &MeteringSets,
    constants: &RewardConstants,
) -> f64 {
    let loss: f64 = sets.branches[agent].iter().map(|&k| sol.branch_losses[k]).sum();
    let switching = f64::from((prev_tap - new_tap).abs());
    let violations = f64::from(violation_count(agent, sol, sets, constants.bounds));
    -constants.c_loss * loss - constants.c_switch * switching - constants.violation_penalty * violations
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: GlobalState,
    pub action: Vec<i32>,
    pub rewards: Vec<f64>,
    pub violations: Vec<u32>,
    pub next_state: GlobalState,
}

/// Per-bus scales and tap ranges turning a `GlobalState` into network input.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEncoder {
    p_scale: Vec<f64>,
    q_scale: Vec<f64>,
    tap_ranges: Vec<(i32, i32)>,
}

impl StateEncoder {
    /// Scales are the largest magnitude per bus seen in `history`.
    pub fn fit<'a>(feeder: &FeederModel, history: impl IntoIterator<Item = &'a GlobalState>) -> Self {
        let n = feeder.bus_count() - 1;
        let mut p_scale = vec![0.0f64; n];
        let mut q_scale = vec![0.0f64; n];
        for s in history {
            for b in 0..n {
                p_scale[b] = p_scale[b].max(s.p[b].abs());
                q_scale[b] = q_scale[b].max(s.q[b].abs());
            }
        }
        let tap_ranges = feeder.devices.iter().map(|d| (d.tap_min, d.tap_max)).collect();
        Self { p_scale, q_scale, tap_ranges }
    }

    pub fn dim(&self) -> usize {
        self.p_scale.len() + self.q_scale.len() + self.tap_ranges.len() + 2
    }

    pub fn encode(&self, s: &GlobalState) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        let scaled = |v: f64, m: f64| if m > 0.0 { v / m } else { 0.0 };
        out.extend(s.p.iter().zip(&self.p_scale).map(|(&v, &m)| scaled(v, m)));
        out.extend(s.q.iter().zip(&self.q_scale).map(|(&v, &m)| scaled(v, m)));
        out.extend(s.prev_action.iter().zip(&self.tap_ranges).map(|(&t, &(lo, hi))| {
            if hi > lo {
                2.0 * f64::from(t - lo) / f64::from(hi - lo) - 1.0
            } else {
                0.0
            }
        }));
        let [c, s] = time_features(s.hour);
        out.push(c);
        out.push(s);
        out
    }
}

/// [cos, sin] of the hour-of-week angle.
pub fn time_features(hour: usize) -> [f64; 2] {
    let angle = 2.0 * PI * (hour % WEEK_HOURS) as f64 / WEEK_HOURS as f64;
    [angle.cos(), angle.sin()]
}

pub fn encode_state(s: &GlobalState, encoder: &StateEncoder) -> Vec<f64> {
    encoder.encode(s)
}

/// Continuing environment; the profile wraps around at its horizon.
#[derive(Debug, Clone)]
pub struct Env {
    feeder: FeederModel,
    sets: MeteringSets,
    constants: RewardConstants,
    profile: LoadProfile,
    solver: SolverOptions,
    hour: usize,
    taps: Vec<i32>,
    last_solution: Option<PowerFlowSolution>,
}

impl Env {
    pub fn new(
        feeder: FeederModel,
        profile: LoadProfile,
        sets: MeteringSets,
        constants: RewardConstants,
    ) -> Result<Self, EnvError> {
        if profile.bus_count() != feeder.bus_count() {
            return Err(EnvError::ProfileShape {
                found: profile.bus_count(),
                expected: feeder.bus_count(),
            });
        }
        if sets.agent_count() != feeder.device_count() {
            return Err(EnvError::Profile(format!(
                "metering sets cover {} agents, feeder has {} devices",
                sets.agent_count(),
                feeder.device_count()
            )));
        }
        let taps = feeder.initial_taps();
        Ok(Self {
            feeder,
            sets,
            constants,
            profile,
            solver: SolverOptions::default(),
            hour: 0,
            taps,
            last_solution: None,
        })
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn feeder(&self) -> &FeederModel {
        &self.feeder
    }

    pub fn metering(&self) -> &MeteringSets {
        &self.sets
    }

    pub fn constants(&self) -> &RewardConstants {
        &self.constants
    }

    pub fn profile(&self) -> &LoadProfile {
        &self.profile
    }

    pub fn agent_count(&self) -> usize {
        self.feeder.device_count()
    }

    pub fn hour(&self) -> usize {
        self.hour
    }

    pub fn taps(&self) -> &[i32] {
        &self.taps
    }

    pub fn last_solution(&self) -> Option<&PowerFlowSolution> {
        self.last_solution.as_ref()
    }

    pub fn reset(&mut self, hour: usize, taps: Vec<i32>) -> Result<(), EnvError> {
        self.feeder.check_taps(&taps)?;
        self.hour = hour;
        self.taps = taps;
        self.last_solution = None;
        Ok(())
    }

    pub fn state(&self) -> GlobalState {
        self.state_at(self.hour, self.taps.clone())
    }

    fn state_at(&self, hour: usize, prev_action: Vec<i32>) -> GlobalState {
        let (p, q) = self.profile.loads(hour);
        GlobalState { p: p[1..].to_vec(), q: q[1..].to_vec(), prev_action, hour }
    }

    pub fn step(&mut self, action: &[i32]) -> Result<Transition, EnvError> {
        self.feeder.check_taps(action)?;
        let state = self.state();
        let (p, q) = self.profile.loads(self.hour);
        let sol = solve_power_flow_with(&self.feeder, action, p, q, self.solver)
            .map_err(|source| EnvError::PowerFlow { hour: self.hour, source })?;
        let k = self.agent_count();
        let mut rewards = Vec::with_capacity(k);
        let mut violations = Vec::with_capacity(k);
        for i in 0..k {
            rewards.push(local_reward(i, &sol, self.taps[i], action[i], &self.sets, &self.constants));
            violations.push(violation_count(i, &sol, &self.sets, self.constants.bounds));
        }
        self.hour += 1;
        self.taps = action.to_vec();
        self.last_solution = Some(sol);
        let next_state = self.state();
        Ok(Transition { state, action: action.to_vec(), rewards, violations, next_state })
    }
}
