//! Stochastic agent and link outages.
//!
//! Outages arrive as a Poisson process; each lasts a geometric number of
//! hours (support starting at one) and hits a uniformly chosen agent or link.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric};
use thiserror::Error;

use crate::consensus::{CommGraph, ConnectivityReport, GraphError};

#[derive(Debug, Error)]
pub enum FailureError {
    #[error("failure rate must be finite and non-negative, got {0}")]
    Rate(f64),
    #[error("duration probability must lie in (0, 1], got {0}")]
    DurationP(f64),
    #[error("failure schedule row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FailureTarget {
    Agent(usize),
    /// Stored with the smaller agent first.
    Link(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FailureEvent {
    pub target: FailureTarget,
    pub start_hour: usize,
    /// At least one.
    pub duration_hours: usize,
}

impl FailureEvent {
    pub fn covers(&self, hour: usize) -> bool {
        hour >= self.start_hour && hour < self.start_hour + self.duration_hours
    }
}

/// What a schedule may knock out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailureMode {
    /// Any of `0..k` agents.
    Agents(usize),
    /// Any of these links.
    Links(Vec<(usize, usize)>),
}

/// Exponential gaps with mean `1/rate`, geometric durations, uniform targets.
pub fn sample_failure_schedule(
    rate: f64,
    duration_p: f64,
    horizon: usize,
    mode: &FailureMode,
    seed: u64,
) -> Result<Vec<FailureEvent>, FailureError> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(FailureError::Rate(rate));
    }
    if !(duration_p > 0.0 && duration_p <= 1.0) {
        return Err(FailureError::DurationP(duration_p));
    }
    let targets = match mode {
        FailureMode::Agents(k) => *k,
        FailureMode::Links(e) => e.len(),
    };
    if rate == 0.0 || targets == 0 {
        return Ok(Vec::new());
    }
    let mut rng = crate::consensus::stream(seed, 60);
    let gap = Exp::new(rate).expect("positive rate");
    let dur = Geometric::new(duration_p).expect("valid probability");
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        if t >= horizon as f64 {
            break;
        }
        let duration_hours = 1 + dur.sample(&mut rng) as usize;
        let pick = rng.random_range(0..targets);
        let target = match mode {
            FailureMode::Agents(_) => FailureTarget::Agent(pick),
            FailureMode::Links(e) => {
                let (a, b) = e[pick];
                FailureTarget::Link(a.min(b), a.max(b))
            }
        };
        events.push(FailureEvent { target, start_hour: t.floor() as usize, duration_hours });
    }
    Ok(events)
}

/// Entities down at a given hour; overlapping windows merge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActiveFailures {
    pub agents: BTreeSet<usize>,
    pub links: BTreeSet<(usize, usize)>,
}

pub fn active_at(schedule: &[FailureEvent], hour: usize) -> ActiveFailures {
    let mut out = ActiveFailures::default();
    for e in schedule.iter().filter(|e| e.covers(hour)) {
        match e.target {
            FailureTarget::Agent(i) => {
                out.agents.insert(i);
            }
            FailureTarget::Link(a, b) => {
                out.links.insert((a.min(b), a.max(b)));
            }
        }
    }
    out
}

/// Takes a link down (`active`) or brings it back, reporting connectivity.
pub fn apply_link_failure(
    graph: &mut CommGraph,
    edge: (usize, usize),
    active: bool,
) -> Result<ConnectivityReport, GraphError> {
    graph.set_link(edge.0, edge.1, !active)
}

/// Writes `kind,target,start,duration`; link targets are `a-b`.
pub fn write_schedule_csv(schedule: &[FailureEvent], path: impl AsRef<Path>) -> Result<(), FailureError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "target", "start", "duration"])?;
    for e in schedule {
        let (kind, target) = match e.target {
            FailureTarget::Agent(i) => ("agent", i.to_string()),
            FailureTarget::Link(a, b) => ("link", format!("{a}-{b}")),
        };
        w.write_record([kind, &target, &e.start_hour.to_string(), &e.duration_hours.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_schedule_csv(path: impl AsRef<Path>) -> Result<Vec<FailureEvent>, FailureError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let bad = |msg: &str| FailureError::Row { row, msg: msg.to_string() };
        if rec.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad {what} `{s}`")));
        let target = match &rec[0] {
            "agent" => FailureTarget::Agent(num(&rec[1], "agent")?),
            "link" => {
                let (a, b) = rec[1].split_once('-').ok_or_else(|| bad("link target must be `a-b`"))?;
                let (a, b) = (num(a, "agent")?, num(b, "agent")?);
                FailureTarget::Link(a.min(b), a.max(b))
            }
            other => return Err(bad(&format!("unknown kind `{other}`"))),
        };
        let start_hour = num(&rec[2], "start")?;
        let duration_hours = num(&rec[3], "duration")?;
        if duration_hours == 0 {
            return Err(bad("duration must be at least 1"));
        }
        out.push(FailureEvent { target, start_hour, duration_hours });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_gives_empty_schedule() {
        assert!(sample_failure_schedule(0.0, 0.2, 10_000, &FailureMode::Agents(3), 1).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(sample_failure_schedule(-1.0, 0.2, 10, &FailureMode::Agents(3), 1).is_err());
        assert!(sample_failure_schedule(0.1, 0.0, 10, &FailureMode::Agents(3), 1).is_err());
        assert!(sample_failure_schedule(0.1, 1.5, 10, &FailureMode::Agents(3), 1).is_err());
    }

    #[test]
    fn schedule_is_seeded_and_well_formed() {
        let mode = FailureMode::Links(vec![(1, 0), (1, 2)]);
        let a = sample_failure_schedule(1.0 / 168.0, 0.2, 20_000, &mode, 4).unwrap();
        assert_eq!(a, sample_failure_schedule(1.0 / 168.0, 0.2, 20_000, &mode, 4).unwrap());
        assert!(!a.is_empty());
        assert!(a.windows(2).all(|w| w[0].start_hour <= w[1].start_hour));
        for e in &a {
            assert!(e.duration_hours >= 1 && e.start_hour < 20_000);
            assert!(matches!(e.target, FailureTarget::Link(0, 1) | FailureTarget::Link(1, 2)));
        }
    }

    #[test]
    fn overlapping_windows_union() {
        let s = [
            FailureEvent { target: FailureTarget::Agent(1), start_hour: 2, duration_hours: 3 },
            FailureEvent { target: FailureTarget::Agent(1), start_hour: 4, duration_hours: 4 },
        ];
        let down: Vec<bool> = (0..10).map(|h| active_at(&s, h).agents.contains(&1)).collect();
        assert_eq!(down, [false, false, true, true, true, true, true, true, false, false]);
    }

    #[test]
    fn link_failure_reports_and_restores() {
        let mut g = CommGraph::chain(3);
        let base = g.clone();
        assert!(!apply_link_failure(&mut g, (1, 2), true).unwrap().connected);
        assert!(apply_link_failure(&mut g, (2, 1), false).unwrap().connected);
        assert_eq!(g, base);
        assert!(apply_link_failure(&mut g, (0, 2), true).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = sample_failure_schedule(0.05, 0.2, 1000, &FailureMode::Links(vec![(0, 1), (2, 1)]), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_schedule_csv(&s, &path).unwrap();
        assert_eq!(read_schedule_csv(&path).unwrap(), s);
        std::fs::write(&path, "kind,target,start,duration\nagent,1,3,0\n").unwrap();
        assert!(matches!(read_schedule_csv(&path), Err(FailureError::Row { row: 2, .. })));
    }
}
