//! Seeded experiment runs and their artifacts.
//!
//! Each seed writes into `<output_dir>/seed-<seed>/`:
//!
//! | file | content |
//! |---|---|
//! | `metrics.csv` | one row per control hour |
//! | `plot_data.csv` | 168-hour moving averages against samples and transmitted scalars |
//! | `manifest.toml` | resolved config for this seed plus the library version |
//! | `agent-<i>.ckpt` | final network parameters |
//! | `metering.txt` | per-agent metered buses and branches |
//! | `failures.csv` | the failure schedule that was applied |

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cmarl_vvc::benchmarks::{AdmmConstants, AdmmTrainer, SacTrainer};
use cmarl_vvc::consensus::{
    init_buffer_from_history, ActionSpace, CmarlOptions, CmarlTrainer, ControlLoop, Learner, MetricsRow,
    METRICS_HEADER,
};
use cmarl_vvc::env::{build_metering_sets, load_profile_from_csv, synth_load_profile, Env, GlobalState};
use cmarl_vvc::failures::{
    read_schedule_csv, sample_failure_schedule, write_schedule_csv, FailureEvent, FailureMode,
};
use cmarl_vvc::nn::write_checkpoint;
use log::{error, info};

use crate::config::{load_feeder, Algorithm, ExperimentConfig, FailureKind, LoadSource, ManifestSection};

/// Smoothing window of the plot-data curves.
pub const MOVING_AVERAGE_HOURS: usize = 168;

pub fn seed_dir(output_dir: impl AsRef<Path>, seed: u64) -> PathBuf {
    output_dir.as_ref().join(format!("seed-{seed}"))
}

/// What one seed produced.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    /// Whether the graph matched its baseline once every failure cleared;
    /// `None` when a failure window outlasts the horizon.
    pub graph_restored: Option<bool>,
}

/// Per-seed results of [`run`].
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub completed: Vec<PathBuf>,
    pub failed: Vec<(u64, String)>,
}

/// Runs every seed of a resolved config; a failing seed does not stop the rest.
pub fn run(config: &ExperimentConfig) -> RunOutcome {
    let mut out = RunOutcome::default();
    for &seed in &config.experiment.seeds {
        info!("{}: seed {seed} starting", config.experiment.name);
        match run_seed(config, seed) {
            Ok(r) => {
                info!("{}: seed {seed} wrote {}", config.experiment.name, r.dir.display());
                out.completed.push(r.dir);
            }
            Err(e) => {
                error!("{}: seed {seed} aborted: {e:#}", config.experiment.name);
                out.failed.push((seed, format!("{e:#}")));
            }
        }
    }
    out
}

/// The config recorded next to a seed's artifacts; running it reproduces them.
pub fn manifest_for(config: &ExperimentConfig, seed: u64) -> ExperimentConfig {
    let mut m = config.clone();
    m.experiment.seeds = vec![seed];
    m.manifest = Some(ManifestSection { version: cmarl_vvc::VERSION.to_string(), seed });
    m
}

/// Trailing moving average; the first `window - 1` points average what exists.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let e = &config.experiment;
    let dir = seed_dir(&e.output_dir, seed);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let feeder = load_feeder(&e.feeder)?;
    let profile = match config.loads.source {
        LoadSource::Synthetic => synth_load_profile(&feeder, config.loads.weeks, config.loads.seed.unwrap_or(seed))?,
        LoadSource::Csv => {
            let path = config.loads.csv.as_deref().context("loads.csv is unset")?;
            load_profile_from_csv(path, &feeder)?
        }
    };
    let sets = build_metering_sets(&feeder, config.capacitor_reach())?;
    fs::write(dir.join("metering.txt"), sets.dump(&feeder))?;
    let mut env = Env::new(feeder.clone(), profile, sets, config.reward_constants())?;
    let hyper = config.hyper();
    let capacity = config.hyper.replay_capacity.unwrap_or(crate::config::REPLAY_CAPACITY);
    let history = init_buffer_from_history(&mut env, e.history_hours, capacity, seed)?;

    let k = feeder.device_count();
    let schedule = failure_schedule(config, k, seed)?;
    write_schedule_csv(&schedule, dir.join("failures.csv"))?;

    let space = ActionSpace::new(feeder.action_sizes(), config.policy_head());
    let input = history.encoder.dim();
    let (rows, graph_restored) = match e.algorithm {
        Algorithm::Cmarl => {
            let probe = GlobalState { p: history.mean_p.clone(), q: history.mean_q.clone(), prev_action: feeder.initial_taps(), hour: 0 };
            let id_size = probe.raw_len() + k;
            let opts = CmarlOptions { hyper, trigger: config.step_trigger(), ..CmarlOptions::default() };
            let graph = config.comm_graph(k)?;
            let t = CmarlTrainer::new(input, space, id_size, graph, opts, seed);
            drive(ControlLoop::new(env, t, history), config, schedule, &dir)?
        }
        Algorithm::Sac => drive(ControlLoop::new(env, SacTrainer::new(input, space, hyper, seed), history), config, schedule, &dir)?,
        Algorithm::Admm => {
            let constants = AdmmConstants {
                c: config.admm.c.unwrap_or(crate::config::ADMM_C),
                rho: config.admm.rho.unwrap_or(crate::config::ADMM_RHO),
            };
            let t = AdmmTrainer::new(input, space, config.comm_graph(k)?, hyper, constants, seed);
            drive(ControlLoop::new(env, t, history), config, schedule, &dir)?
        }
    };

    write_plot_data(&rows, &dir.join("plot_data.csv"))?;
    fs::write(dir.join("manifest.toml"), manifest_for(config, seed).to_toml())?;
    Ok(SeedRun { dir, rows, graph_restored })
}

fn failure_schedule(config: &ExperimentConfig, k: usize, seed: u64) -> Result<Vec<FailureEvent>> {
    let f = &config.failures;
    if let Some(path) = &f.schedule_csv {
        return Ok(read_schedule_csv(path)?);
    }
    let mode = match f.mode {
        FailureKind::None => return Ok(Vec::new()),
        FailureKind::Agents => FailureMode::Agents(k),
        FailureKind::Links => FailureMode::Links(config.edges()),
    };
    Ok(sample_failure_schedule(f.rate, f.duration_p, config.experiment.horizon_hours, &mode, seed)?)
}

fn drive<L: Learner>(
    cl: ControlLoop<L>,
    config: &ExperimentConfig,
    schedule: Vec<FailureEvent>,
    dir: &Path,
) -> Result<(Vec<MetricsRow>, Option<bool>)> {
    let cleared = schedule.iter().all(|e| e.start_hour + e.duration_hours <= config.experiment.horizon_hours);
    let mut cl = cl.with_failures(schedule).with_wall_clock(config.experiment.record_wall_clock);
    let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
    w.write_record(METRICS_HEADER)?;
    let mut rows = Vec::with_capacity(config.experiment.horizon_hours);
    for _ in 0..config.experiment.horizon_hours {
        let row = cl.step_hour()?;
        w.write_record(row.to_record())?;
        rows.push(row);
    }
    w.flush()?;
    for (i, p) in cl.learner.params().into_iter().enumerate() {
        let f = BufWriter::new(File::create(dir.join(format!("agent-{i}.ckpt")))?);
        write_checkpoint(p, f)?;
    }
    let restored = cleared.then(|| cl.graph_restored());
    if restored == Some(false) {
        anyhow::bail!("communication graph differs from its baseline after the failure schedule");
    }
    Ok((rows, restored))
}

fn write_plot_data(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let reward: Vec<f64> = rows.iter().map(|r| r.mean_hourly_reward).collect();
    let viol: Vec<f64> = rows.iter().map(|r| r.mean_violations).collect();
    let reward_ma = moving_average(&reward, MOVING_AVERAGE_HOURS);
    let viol_ma = moving_average(&viol, MOVING_AVERAGE_HOURS);
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "hour,samples,transmitted_scalars_cumulative,reward_ma168,violations_ma168")?;
    for (i, r) in rows.iter().enumerate() {
        writeln!(w, "{},{},{},{:?},{:?}", r.hour, r.hour + 1, r.transmitted_scalars_cumulative, reward_ma[i], viol_ma[i])?;
    }
    w.flush()?;
    Ok(())
}
