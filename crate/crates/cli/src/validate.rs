//! Static config validation.

use std::fmt;
use std::path::Path;

use cmarl_vvc::consensus::CommGraph;
use cmarl_vvc::failures::{read_schedule_csv, FailureTarget};

use crate::config::{load_feeder, Algorithm, ExperimentConfig, FailureKind, LoadSource};

/// One violated invariant, keyed by the dotted config field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Default)]
struct Report(Vec<Finding>);

impl Report {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(Finding { field: field.to_string(), message: message.into() });
    }

    fn check(&mut self, ok: bool, field: &str, message: &str) {
        if !ok {
            self.push(field, message);
        }
    }

    fn positive(&mut self, v: Option<f64>, field: &str) {
        if let Some(v) = v {
            self.check(v.is_finite() && v > 0.0, field, "must be a positive number");
        }
    }

    fn non_negative(&mut self, v: f64, field: &str) {
        self.check(v.is_finite() && v >= 0.0, field, "must be non-negative");
    }
}

/// Every violated invariant of `config`; empty when the config can run.
///
/// Relative paths are taken against `base_dir`.
pub fn validate(config: &ExperimentConfig, base_dir: &Path) -> Vec<Finding> {
    let mut r = Report::default();
    let e = &config.experiment;
    r.check(!e.name.trim().is_empty(), "experiment.name", "must not be empty");
    r.check(e.horizon_hours >= 1, "experiment.horizon_hours", "must be at least 1");
    r.check(e.history_hours >= 1, "experiment.history_hours", "must be at least 1");
    r.check(!e.seeds.is_empty(), "experiment.seeds", "must list at least one seed");
    let mut seeds = e.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    r.check(seeds.len() == e.seeds.len(), "experiment.seeds", "contains duplicates");
    r.check(!e.output_dir.trim().is_empty(), "experiment.output_dir", "must not be empty");

    let resolved = match config.resolve(base_dir) {
        Ok(c) => Some(c),
        Err(err) => {
            r.push("experiment.feeder", err.to_string());
            None
        }
    };

    let l = &config.loads;
    match l.source {
        LoadSource::Synthetic => r.check(l.weeks >= 1, "loads.weeks", "must be at least 1"),
        LoadSource::Csv => r.check(l.csv.is_some(), "loads.csv", "required when loads.source = \"csv\""),
    }

    let w = &config.reward;
    r.non_negative(w.c_loss, "reward.c_loss");
    r.non_negative(w.c_switch, "reward.c_switch");
    if let Some(p) = w.violation_penalty {
        r.non_negative(p, "reward.violation_penalty");
    }
    r.check(
        w.v_lower.is_finite() && w.v_upper.is_finite() && 0.0 < w.v_lower && w.v_lower < w.v_upper,
        "reward.v_lower",
        "must satisfy 0 < v_lower < v_upper",
    );

    let h = &config.hyper;
    r.positive(h.alpha, "hyper.alpha");
    if let Some(g) = h.gamma {
        r.check((0.0..1.0).contains(&g), "hyper.gamma", "must lie in [0, 1)");
    }
    r.positive(h.learning_rate, "hyper.learning_rate");
    r.check(h.batch_size != Some(0), "hyper.batch_size", "must be at least 1");
    r.check(h.hidden_units != Some(0), "hyper.hidden_units", "must be at least 1");
    r.positive(h.reward_scale, "hyper.reward_scale");
    if let Some(s) = h.smoothing {
        r.check((0.0..=1.0).contains(&s), "hyper.smoothing", "must lie in [0, 1]");
    }
    if let Some(l) = h.consensus_lambda {
        r.non_negative(l, "hyper.consensus_lambda");
    }
    r.check(h.update_frequency != Some(0), "hyper.update_frequency", "must be at least 1");
    if let (Some(cap), Some(b)) = (h.replay_capacity, resolved.as_ref().and_then(|c| c.hyper.batch_size)) {
        r.check(cap >= b, "hyper.replay_capacity", "must hold at least one batch");
    }

    r.positive(config.admm.c, "admm.c");
    r.positive(config.admm.rho, "admm.rho");

    let f = &config.failures;
    r.check(f.rate.is_finite() && f.rate >= 0.0, "failures.rate", "must be a non-negative number");
    r.check(f.duration_p > 0.0 && f.duration_p <= 1.0, "failures.duration_p", "must lie in (0, 1]");
    if f.mode == FailureKind::Links && e.algorithm == Algorithm::Sac {
        r.push("failures.mode", "link failures need a communication graph; sac has none");
    }

    if let Some(c) = &resolved {
        let feeder = load_feeder(&c.experiment.feeder).expect("resolved feeder loads");
        let k = feeder.device_count();
        if e.algorithm != Algorithm::Sac || config.graph.edges.is_some() {
            if let Err(err) = CommGraph::new(k, &c.edges()) {
                r.push("graph.edges", err.to_string());
            }
        }
        if let Some(path) = &c.failures.schedule_csv {
            match read_schedule_csv(path) {
                Err(err) => r.push("failures.schedule_csv", err.to_string()),
                Ok(events) => {
                    for ev in events {
                        let bad = match ev.target {
                            FailureTarget::Agent(a) => a >= k,
                            FailureTarget::Link(a, b) => !c.edges().iter().any(|&(x, y)| (x.min(y), x.max(y)) == (a, b)),
                        };
                        if bad {
                            r.push("failures.schedule_csv", format!("event at hour {} targets {:?}, which is not in the graph", ev.start_hour, ev.target));
                        }
                    }
                }
            }
        }
        if let (LoadSource::Csv, Some(path)) = (c.loads.source, &c.loads.csv) {
            if !Path::new(path).is_file() {
                r.push("loads.csv", format!("{path} does not exist"));
            }
        }
    }
    r.0
}
