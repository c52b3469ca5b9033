//! Experiment configuration.
//!
//! A config is a TOML file with an `[experiment]` table and optional
//! `[loads]`, `[reward]`, `[hyper]`, `[admm]`, `[graph]` and `[failures]`
//! tables. Unset hyperparameters take the published defaults for the feeder's
//! size class and the chosen algorithm. [`ExperimentConfig::resolve`] fills
//! every default and makes every path absolute; the resolved form is what a
//! run records in its manifest.

use std::fmt;
use std::path::{Path, PathBuf};

use cmarl_vvc::consensus::{CommGraph, Hyper, StepTrigger};
use cmarl_vvc::env::{CapacitorReach, RewardConstants, VoltageBounds};
use cmarl_vvc::feeder::FeederModel;
use cmarl_vvc::nn::PolicyHead;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("feeder `{spec}`: {msg}")]
    Feeder { spec: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Cmarl,
    Sac,
    Admm,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Cmarl => "cmarl",
            Algorithm::Sac => "sac",
            Algorithm::Admm => "admm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    /// `builtin:<name>` or a feeder file path, relative to the config file.
    pub feeder: String,
    pub algorithm: Algorithm,
    pub horizon_hours: usize,
    #[serde(default = "default_history")]
    pub history_hours: usize,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    #[serde(default)]
    pub record_wall_clock: bool,
}

fn default_history() -> usize {
    500
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LoadSource {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadsSection {
    #[serde(default)]
    pub source: LoadSource,
    #[serde(default = "default_weeks")]
    pub weeks: usize,
    /// Synthetic-profile seed; the replicate seed when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

fn default_weeks() -> usize {
    52
}

impl Default for LoadsSection {
    fn default() -> Self {
        Self { source: LoadSource::Synthetic, weeks: default_weeks(), seed: None, csv: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Reach {
    #[default]
    Incident,
    TwoHop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSection {
    #[serde(default = "default_c_loss")]
    pub c_loss: f64,
    #[serde(default = "default_c_switch")]
    pub c_switch: f64,
    /// Twice `c_loss` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation_penalty: Option<f64>,
    #[serde(default = "default_v_upper")]
    pub v_upper: f64,
    #[serde(default = "default_v_lower")]
    pub v_lower: f64,
    #[serde(default)]
    pub capacitor_reach: Reach,
}

fn default_c_loss() -> f64 {
    0.04
}
fn default_c_switch() -> f64 {
    0.1
}
fn default_v_upper() -> f64 {
    1.05
}
fn default_v_lower() -> f64 {
    0.95
}

impl Default for RewardSection {
    fn default() -> Self {
        Self {
            c_loss: default_c_loss(),
            c_switch: default_c_switch(),
            violation_penalty: None,
            v_upper: default_v_upper(),
            v_lower: default_v_lower(),
            capacitor_reach: Reach::Incident,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    #[default]
    Ordinal,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    #[default]
    Iterations,
    AgentUpdates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct HyperSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_units: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consensus_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub update_frequency: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay_capacity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_head: Option<Head>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_trigger: Option<Trigger>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AdmmSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// Undirected agent pairs; a chain in device order when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    #[default]
    None,
    Agents,
    Links,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailuresSection {
    #[serde(default)]
    pub mode: FailureKind,
    /// Events per hour.
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default = "default_duration_p")]
    pub duration_p: f64,
    /// Replay a recorded schedule instead of sampling one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_csv: Option<String>,
}

fn default_rate() -> f64 {
    1.0 / 168.0
}
fn default_duration_p() -> f64 {
    0.2
}

impl Default for FailuresSection {
    fn default() -> Self {
        Self { mode: FailureKind::None, rate: default_rate(), duration_p: default_duration_p(), schedule_csv: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSection {
    pub version: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub loads: LoadsSection,
    #[serde(default)]
    pub reward: RewardSection,
    #[serde(default)]
    pub hyper: HyperSection,
    #[serde(default)]
    pub admm: AdmmSection,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub failures: FailuresSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestSection>,
}

/// Size class used to pick published defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeederClass {
    Small,
    Medium,
    Large,
}

impl FeederClass {
    pub fn of(feeder: &FeederModel) -> Self {
        match feeder.bus_count() {
            0..=10 => FeederClass::Small,
            11..=60 => FeederClass::Medium,
            _ => FeederClass::Large,
        }
    }

    fn pick<T: Copy>(self, v: [T; 3]) -> T {
        v[self as usize]
    }
}

/// Published hyperparameters for a feeder class and algorithm.
pub fn table_defaults(class: FeederClass, algorithm: Algorithm) -> Hyper {
    let hidden = match algorithm {
        Algorithm::Cmarl => class.pick([32, 64, 128]),
        Algorithm::Sac => class.pick([64, 80, 128]),
        Algorithm::Admm => class.pick([32, 64, 64]),
    };
    Hyper {
        alpha: class.pick([0.5, 0.2, 0.1]),
        gamma: 0.95,
        lr: 0.001,
        batch_size: 16,
        hidden,
        reward_scale: 5.0,
        target_rho: 0.99,
        lambda: 1.0,
        update_freq: 1,
    }
}

pub const ADMM_C: f64 = 1.0;
pub const ADMM_RHO: f64 = 500.0;
pub const REPLAY_CAPACITY: usize = cmarl_vvc::consensus::DEFAULT_REPLAY_CAPACITY;

fn absolute(base: &Path, p: &str) -> String {
    let path = Path::new(p);
    let joined = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
    normalize(&joined).to_string_lossy().into_owned()
}

/// Lexical `.`/`..` removal; the file need not exist.
fn normalize(p: &Path) -> PathBuf {
    use std::path::Component;
    let mut out = PathBuf::new();
    for c in p.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

pub fn load_feeder(spec: &str) -> Result<FeederModel, ConfigError> {
    let err = |msg: String| ConfigError::Feeder { spec: spec.to_string(), msg };
    match spec.strip_prefix("builtin:") {
        Some(name) => FeederModel::builtin(name).map_err(|e| err(e.to_string())),
        None => FeederModel::from_file(spec).map_err(|e| err(e.to_string())),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse { path: origin.to_path_buf(), source })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fills every default and makes paths absolute against `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        if !c.experiment.feeder.starts_with("builtin:") {
            c.experiment.feeder = absolute(base_dir, &c.experiment.feeder);
        }
        c.experiment.output_dir = absolute(base_dir, &c.experiment.output_dir);
        if let Some(p) = &c.loads.csv {
            c.loads.csv = Some(absolute(base_dir, p));
        }
        if let Some(p) = &c.failures.schedule_csv {
            c.failures.schedule_csv = Some(absolute(base_dir, p));
        }
        let feeder = load_feeder(&c.experiment.feeder)?;
        let d = table_defaults(FeederClass::of(&feeder), c.experiment.algorithm);
        let h = &mut c.hyper;
        h.alpha.get_or_insert(d.alpha);
        h.gamma.get_or_insert(d.gamma);
        h.learning_rate.get_or_insert(d.lr);
        h.batch_size.get_or_insert(d.batch_size);
        h.hidden_units.get_or_insert(d.hidden);
        h.reward_scale.get_or_insert(d.reward_scale);
        h.smoothing.get_or_insert(d.target_rho);
        h.consensus_lambda.get_or_insert(d.lambda);
        h.update_frequency.get_or_insert(d.update_freq);
        h.replay_capacity.get_or_insert(REPLAY_CAPACITY);
        h.policy_head.get_or_insert(Head::Ordinal);
        h.step_trigger.get_or_insert(Trigger::Iterations);
        c.admm.c.get_or_insert(ADMM_C);
        c.admm.rho.get_or_insert(ADMM_RHO);
        let k = feeder.device_count();
        c.graph.edges.get_or_insert_with(|| (1..k).map(|i| [i - 1, i]).collect());
        let penalty = 2.0 * c.reward.c_loss;
        c.reward.violation_penalty.get_or_insert(penalty);
        Ok(c)
    }

    /// Hyperparameters of a resolved config.
    pub fn hyper(&self) -> Hyper {
        let h = &self.hyper;
        Hyper {
            alpha: h.alpha.expect("resolved"),
            gamma: h.gamma.expect("resolved"),
            lr: h.learning_rate.expect("resolved"),
            batch_size: h.batch_size.expect("resolved"),
            hidden: h.hidden_units.expect("resolved"),
            reward_scale: h.reward_scale.expect("resolved"),
            target_rho: h.smoothing.expect("resolved"),
            lambda: h.consensus_lambda.expect("resolved"),
            update_freq: h.update_frequency.expect("resolved"),
        }
    }

    pub fn policy_head(&self) -> PolicyHead {
        match self.hyper.policy_head.unwrap_or_default() {
            Head::Ordinal => PolicyHead::Ordinal,
            Head::Softmax => PolicyHead::Softmax,
        }
    }

    pub fn step_trigger(&self) -> StepTrigger {
        match self.hyper.step_trigger.unwrap_or_default() {
            Trigger::Iterations => StepTrigger::IterationCount,
            Trigger::AgentUpdates => StepTrigger::PerAgentUpdates,
        }
    }

    pub fn reward_constants(&self) -> RewardConstants {
        let r = &self.reward;
        RewardConstants {
            c_loss: r.c_loss,
            c_switch: r.c_switch,
            violation_penalty: r.violation_penalty.unwrap_or(2.0 * r.c_loss),
            bounds: VoltageBounds { upper: r.v_upper, lower: r.v_lower },
        }
    }

    pub fn capacitor_reach(&self) -> CapacitorReach {
        match self.reward.capacitor_reach {
            Reach::Incident => CapacitorReach::Incident,
            Reach::TwoHop => CapacitorReach::TwoHop,
        }
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.graph.edges.iter().flatten().map(|&[a, b]| (a, b)).collect()
    }

    pub fn comm_graph(&self, agents: usize) -> Result<CommGraph, cmarl_vvc::consensus::GraphError> {
        match &self.graph.edges {
            Some(_) => CommGraph::new(agents, &self.edges()),
            None => Ok(CommGraph::chain(agents)),
        }
    }
}
