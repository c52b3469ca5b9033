//! Exact soft value iteration on the 4-bus feeder with deterministic weekly loads,
//! reporting the violation rate of the entropy-regularized optimal joint policy.
//!
//! `cargo run --release --example soft_optimum -- [alpha] [scale] [load_scale]`

use cmarl_vvc::env::{build_metering_sets, local_reward, violation_count, CapacitorReach, RewardConstants};
use cmarl_vvc::feeder::{solve_power_flow, FeederModel};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let alpha: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let scale: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5.0);
    let load_scale: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let gamma = 0.95;
    let f = FeederModel::builtin("ieee4").unwrap();
    let sets = build_metering_sets(&f, CapacitorReach::Incident).unwrap();
    let c = RewardConstants::default();
    let sizes = f.action_sizes();
    let na: usize = sizes.iter().product();
    let decode = |mut a: usize| -> Vec<i32> {
        f.devices.iter().zip(&sizes).map(|(d, &n)| { let k = a % n; a /= n; d.tap_for_index(k) }).collect()
    };
    let hours = 24;
    let (p0, q0) = f.nominal_loads();
    // Daily shape between 45% and 100% of nominal.
    let shape = |h: usize| load_scale * (0.45 + 0.55 * (0.5 - 0.5 * (2.0 * std::f64::consts::PI * (h as f64 - 7.0) / 24.0).cos()));
    // Per (hour, action): metered losses and violations per agent.
    let mut base = vec![vec![0.0; na]; hours];
    let mut viol = vec![vec![0.0; na]; hours];
    for h in 0..hours {
        let p: Vec<f64> = p0.iter().map(|v| v * shape(h)).collect();
        let q: Vec<f64> = q0.iter().map(|v| v * shape(h)).collect();
        for a in 0..na {
            let taps = decode(a);
            let sol = solve_power_flow(&f, &taps, &p, &q).unwrap();
            let k = taps.len();
            let mut r = 0.0;
            let mut v = 0.0;
            for i in 0..k {
                r += local_reward(i, &sol, taps[i], taps[i], &sets, &c);
                v += f64::from(violation_count(i, &sol, &sets, c.bounds));
            }
            base[h][a] = r / k as f64;
            viol[h][a] = v / k as f64;
        }
    }
    let k = sizes.len() as f64;
    let switch = |prev: usize, a: usize| -> f64 {
        let (x, y) = (decode(prev), decode(a));
        x.iter().zip(&y).map(|(u, v)| f64::from((u - v).abs())).sum::<f64>() * c.c_switch / k
    };
    let mut sw = vec![vec![0.0; na]; na];
    for s in 0..na {
        for a in 0..na {
            sw[s][a] = switch(s, a);
        }
    }
    // State = (hour, prev action); V[h][prev]
    let mut v = vec![vec![0.0; na]; hours];
    for it in 0..400 {
        let mut nv = vec![vec![0.0; na]; hours];
        let mut delta: f64 = 0.0;
        for h in 0..hours {
            let hn = (h + 1) % hours;
            for s in 0..na {
                let qs: Vec<f64> = (0..na).map(|a| (scale * (base[h][a] - sw[s][a]) + gamma * v[hn][a]) / alpha).collect();
                let m = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + qs.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                nv[h][s] = alpha * lse;
                delta = delta.max((nv[h][s] - v[h][s]).abs());
            }
        }
        v = nv;
        if delta < 1e-9 { eprintln!("converged after {it}"); break; }
    }
    // Stationary distribution of the Markov chain under the soft policy.
    let mut dist = vec![vec![1.0 / na as f64; na]; hours];
    let mut vr = 0.0;
    let mut rr = 0.0;
    for _ in 0..200 {
        let mut nd = vec![vec![0.0; na]; hours];
        vr = 0.0;
        rr = 0.0;
        for h in 0..hours {
            let hn = (h + 1) % hours;
            for s in 0..na {
                let w = dist[h][s];
                if w < 1e-15 { continue; }
                let qs: Vec<f64> = (0..na).map(|a| (scale * (base[h][a] - sw[s][a]) + gamma * v[hn][a]) / alpha).collect();
                let m = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = qs.iter().map(|x| (x - m).exp()).sum();
                for a in 0..na {
                    let p = (qs[a] - m).exp() / z * w;
                    nd[hn][a] += p;
                    vr += p * viol[h][a];
                    rr += p * (base[h][a] - sw[s][a]);
                }
            }
        }
        dist = nd;
    }
    println!("alpha {alpha} scale {scale}: mean violations/agent-hour {:.4} (per-day mass {}), mean reward {:.4}", vr / 1.0, 1, rr);
    let best: f64 = (0..hours).map(|h| viol[h].iter().cloned().fold(f64::INFINITY, f64::min)).sum::<f64>() / hours as f64;
    println!("best achievable violations {best:.4}");
}
