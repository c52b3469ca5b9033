//! Trains one method on a builtin feeder and prints weekly averages.
//!
//! `cargo run --release --example learning_probe -- <cmarl|sac> <feeder> <hours> <seed>`

use cmarl_vvc::benchmarks::SacTrainer;
use cmarl_vvc::consensus::{
    init_buffer_from_history, ActionSpace, CmarlOptions, CmarlTrainer, CommGraph, ControlLoop, Hyper, Learner,
    MetricsRow, DEFAULT_REPLAY_CAPACITY,
};
use cmarl_vvc::env::{build_metering_sets, synth_load_profile, CapacitorReach, Env, RewardConstants};
use cmarl_vvc::feeder::FeederModel;
use cmarl_vvc::nn::PolicyHead;

fn drive<L: Learner>(mut cl: ControlLoop<L>, hours: usize) {
    let mut rows: Vec<MetricsRow> = Vec::new();
    let k = cl.env.agent_count();
    let mut per_agent = vec![0u32; k];
    let mut taps = vec![std::collections::BTreeMap::<i32, usize>::new(); k];
    for h in 0..hours {
        rows.push(cl.step_hour().unwrap());
        if h + 1000 >= hours {
            let sol = cl.env.last_solution().unwrap();
            for i in 0..k {
                per_agent[i] += cmarl_vvc::env::violation_count(i, sol, cl.env.metering(), cl.env.constants().bounds);
                *taps[i].entry(cl.env.taps()[i]).or_default() += 1;
            }
        }
    }
    println!("trailing per-agent violations {per_agent:?}");
    for t in &taps {
        println!("  taps {t:?}");
    }
    for w in rows.chunks(168 * 4) {
        let n = w.len() as f64;
        let r: f64 = w.iter().map(|r| r.mean_hourly_reward).sum::<f64>() / n;
        let v: f64 = w.iter().map(|r| r.mean_violations).sum::<f64>() / n;
        println!("hour {:>6}  reward {:>9.4}  violations {:.4}", w[0].hour, r, v);
    }
    let tail = &rows[rows.len().saturating_sub(1000)..];
    let n = tail.len() as f64;
    println!(
        "trailing reward {:.4} violations {:.4}",
        tail.iter().map(|r| r.mean_hourly_reward).sum::<f64>() / n,
        tail.iter().map(|r| r.mean_violations).sum::<f64>() / n
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let method = args.get(1).map(String::as_str).unwrap_or("cmarl");
    let feeder = FeederModel::builtin(args.get(2).map(String::as_str).unwrap_or("ieee4")).unwrap();
    let hours: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(6000);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);
    let alpha: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let profile = synth_load_profile(&feeder, 52, seed).unwrap();
    let sets = build_metering_sets(&feeder, CapacitorReach::Incident).unwrap();
    let mut env = Env::new(feeder.clone(), profile, sets, RewardConstants::default()).unwrap();
    let hist = init_buffer_from_history(&mut env, 500, DEFAULT_REPLAY_CAPACITY, seed).unwrap();
    let k = feeder.device_count();
    let space = ActionSpace::new(feeder.action_sizes(), PolicyHead::Ordinal);
    let dim = hist.encoder.dim();
    let id = 2 * (feeder.bus_count() - 1) + k + 1 + k;
    match method {
        "sac" => {
            let t = SacTrainer::new(dim, space, Hyper { hidden: 64, alpha, ..Hyper::default() }, seed);
            drive(ControlLoop::new(env, t, hist), hours);
        }
        _ => {
            let opts = CmarlOptions { hyper: Hyper { alpha, ..Hyper::default() }, ..CmarlOptions::default() };
            let t = CmarlTrainer::new(dim, space, id, CommGraph::chain(k), opts, seed);
            drive(ControlLoop::new(env, t, hist), hours);
        }
    }
}
