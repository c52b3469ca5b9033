//! Complex-phasor current-injection power flow used as an independent reference.
//!
//! Works on voltage phasors and branch currents rather than on the squared-magnitude
//! branch equations used by the library solver.

use cmarl_vvc::feeder::{DeviceKind, DeviceLocation, FeederModel};
use num_complex::Complex64;

pub struct OracleSolution {
    pub voltages: Vec<f64>,
    pub branch_losses_kw: Vec<f64>,
    pub substation_p_kw: f64,
}

pub fn current_injection_flow(
    feeder: &FeederModel,
    taps: &[i32],
    p_kw: &[f64],
    q_kvar: &[f64],
) -> OracleSolution {
    let n = feeder.bus_count();
    let base = feeder.base_kva;
    let mut v0 = 1.0;
    let mut ratio = vec![1.0; feeder.branches.len()];
    let mut cap = vec![0.0; n];
    for (d, &t) in feeder.devices.iter().zip(taps) {
        match (d.kind, d.location) {
            (DeviceKind::Regulator, _) => v0 = 1.0 + t as f64 * d.step,
            (DeviceKind::Oltc, DeviceLocation::Branch(k)) => ratio[k] = 1.0 + t as f64 * d.step,
            (DeviceKind::Capacitor, DeviceLocation::Bus(b)) => cap[b] = t as f64 * d.step / base,
            _ => unreachable!(),
        }
    }
    // Depth-first order computed here rather than borrowed from the model.
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut parent = vec![usize::MAX; n];
    for (k, br) in feeder.branches.iter().enumerate() {
        children[br.from].push(k);
        parent[br.to] = k;
    }
    let mut order = Vec::new();
    let mut stack = vec![0usize];
    while let Some(u) = stack.pop() {
        order.push(u);
        for &k in &children[u] {
            stack.push(feeder.branches[k].to);
        }
    }
    let mut v = vec![Complex64::new(v0, 0.0); n];
    for &j in &order[1..] {
        let br = &feeder.branches[parent[j]];
        v[j] = v[br.from] * ratio[parent[j]];
    }
    let mut current = vec![Complex64::new(0.0, 0.0); feeder.branches.len()];
    for _ in 0..10_000 {
        let mut bus_out = vec![Complex64::new(0.0, 0.0); n];
        for j in 1..n {
            let s = Complex64::new(p_kw[j] / base, q_kvar[j] / base - cap[j] * v[j].norm_sqr());
            bus_out[j] = (s / v[j]).conj();
        }
        for &j in order[1..].iter().rev() {
            let mut sec = bus_out[j];
            for &c in &children[j] {
                sec += current[c];
            }
            current[parent[j]] = sec * ratio[parent[j]];
        }
        let mut worst: f64 = 0.0;
        for &j in &order[1..] {
            let k = parent[j];
            let br = &feeder.branches[k];
            let z = Complex64::new(br.r, br.x);
            let next = (v[br.from] - z * current[k]) * ratio[k];
            worst = worst.max((next - v[j]).norm());
            v[j] = next;
        }
        if worst < 1e-14 {
            break;
        }
    }
    let branch_losses_kw: Vec<f64> = feeder
        .branches
        .iter()
        .zip(&current)
        .map(|(br, i)| br.r * i.norm_sqr() * base)
        .collect();
    let substation_p_kw = children[0]
        .iter()
        .map(|&k| (v[0] * current[k].conj()).re)
        .sum::<f64>()
        * base;
    OracleSolution { voltages: v.iter().map(|c| c.norm()).collect(), branch_losses_kw, substation_p_kw }
}
