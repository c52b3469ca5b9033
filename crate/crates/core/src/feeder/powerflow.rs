//! Backward/forward sweep on the DistFlow branch equations.
//!
//! Every branch `(i, j)` obeys
//! `(V_j / a)^2 = V_i^2 - 2 r P - 2 x Q + (r^2 + x^2) l` with `l = (P^2 + Q^2) / V_i^2`,
//! where `P, Q` are sending-end flows and `a` is the OLTC ratio (1 without an OLTC).
//! The series impedance sits on the sending side of the ideal transformer.

use thiserror::Error;

use super::{DeviceKind, DeviceLocation, FeederError, FeederModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Convergence threshold on the largest voltage change between sweeps (p.u.).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 200 }
    }
}

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error(transparent)]
    Input(#[from] FeederError),
    #[error("power flow did not converge after {iterations} sweeps (last mismatch {mismatch:.3e} p.u.)")]
    NotConverged { iterations: usize, mismatch: f64 },
    #[error("voltage collapse at bus {bus} during sweep {iteration}")]
    VoltageCollapse { bus: u32, iteration: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    /// Bus voltage magnitudes (p.u.), indexed like `FeederModel::buses`.
    pub voltages: Vec<f64>,
    /// Sending-end (kW, kVar) per branch.
    pub branch_flows: Vec<(f64, f64)>,
    /// Real loss per branch (kW).
    pub branch_losses: Vec<f64>,
    /// Squared branch current (p.u.).
    pub branch_current_sq: Vec<f64>,
    /// Capacitor output per bus (kVar), zero where no bank is switched on.
    pub capacitor_kvar: Vec<f64>,
    pub substation_p_kw: f64,
    pub substation_q_kvar: f64,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSummary {
    pub per_branch_kw: Vec<f64>,
    pub total_kw: f64,
}

pub fn total_and_per_branch_losses(sol: &PowerFlowSolution) -> LossSummary {
    LossSummary { per_branch_kw: sol.branch_losses.clone(), total_kw: sol.branch_losses.iter().sum() }
}

pub fn solve_power_flow(
    feeder: &FeederModel,
    taps: &[i32],
    load_p_kw: &[f64],
    load_q_kvar: &[f64],
) -> Result<PowerFlowSolution, PowerFlowError> {
    solve_power_flow_with(feeder, taps, load_p_kw, load_q_kvar, SolverOptions::default())
}

/// Per-device electrical settings derived from a tap vector.
struct Settings {
    source_voltage: f64,
    ratio: Vec<f64>,
    capacitor: Vec<f64>,
}

fn settings(feeder: &FeederModel, taps: &[i32]) -> Result<Settings, FeederError> {
    feeder.check_taps(taps)?;
    let mut source_voltage = 1.0;
    let mut ratio = vec![1.0; feeder.branches.len()];
    let mut capacitor = vec![0.0; feeder.bus_count()];
    for (dev, &tap) in feeder.devices.iter().zip(taps) {
        match (dev.kind, dev.location) {
            (DeviceKind::Regulator, _) => {
                source_voltage = dev.ratio(tap).map_err(|e| FeederError::Invalid(e.to_string()))?
            }
            (DeviceKind::Oltc, DeviceLocation::Branch(k)) => {
                ratio[k] = dev.ratio(tap).map_err(|e| FeederError::Invalid(e.to_string()))?
            }
            (DeviceKind::Capacitor, DeviceLocation::Bus(b)) => {
                capacitor[b] += f64::from(tap) * dev.step / feeder.base_kva
            }
            _ => unreachable!("validated at construction"),
        }
    }
    Ok(Settings { source_voltage, ratio, capacitor })
}

pub fn solve_power_flow_with(
    feeder: &FeederModel,
    taps: &[i32],
    load_p_kw: &[f64],
    load_q_kvar: &[f64],
    opts: SolverOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let n = feeder.bus_count();
    if load_p_kw.len() != n || load_q_kvar.len() != n {
        return Err(FeederError::Invalid(format!("load vectors must have {n} entries")).into());
    }
    if load_p_kw[0] != 0.0 || load_q_kvar[0] != 0.0 {
        return Err(FeederError::Invalid("substation load must be zero".into()).into());
    }
    let set = settings(feeder, taps)?;
    let base = feeder.base_kva;
    let p: Vec<f64> = load_p_kw.iter().map(|v| v / base).collect();
    let q: Vec<f64> = load_q_kvar.iter().map(|v| v / base).collect();
    let m = feeder.branches.len();
    let order = feeder.order();

    // Flat start: no-load voltage propagation.
    let mut v = vec![set.source_voltage; n];
    for &j in &order[1..] {
        let k = feeder.parent_branch(j).expect("non-root bus has a parent");
        v[j] = v[feeder.branches[k].from] * set.ratio[k];
    }
    let mut l = vec![0.0; m];
    let mut pf = vec![0.0; m];
    let mut qf = vec![0.0; m];
    let mut v_new = v.clone();
    let mut mismatch = f64::INFINITY;

    for iter in 1..=opts.max_iterations {
        // Backward: aggregate downstream demand plus series losses.
        for &j in order[1..].iter().rev() {
            let k = feeder.parent_branch(j).expect("non-root bus has a parent");
            let mut pd = p[j];
            let mut qd = q[j] - set.capacitor[j] * v[j] * v[j];
            for &c in feeder.child_branches(j) {
                pd += pf[c];
                qd += qf[c];
            }
            let br = &feeder.branches[k];
            pf[k] = pd + br.r * l[k];
            qf[k] = qd + br.x * l[k];
        }
        // Forward: voltage drop then ideal ratio.
        v_new[0] = set.source_voltage;
        for &j in &order[1..] {
            let k = feeder.parent_branch(j).expect("non-root bus has a parent");
            let br = &feeder.branches[k];
            let vi = v_new[br.from];
            let z2 = br.r * br.r + br.x * br.x;
            let sq = vi * vi - 2.0 * (br.r * pf[k] + br.x * qf[k]) + z2 * l[k];
            if !(sq > 0.0) {
                return Err(PowerFlowError::VoltageCollapse { bus: feeder.buses[j].id, iteration: iter });
            }
            v_new[j] = set.ratio[k] * sq.sqrt();
        }
        let dv = v.iter().zip(&v_new).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mut dl: f64 = 0.0;
        let l_used = l.clone();
        for (k, br) in feeder.branches.iter().enumerate() {
            let vi = v_new[br.from];
            let next = (pf[k] * pf[k] + qf[k] * qf[k]) / (vi * vi);
            dl = dl.max((next - l[k]).abs());
            l[k] = next;
        }
        std::mem::swap(&mut v, &mut v_new);
        mismatch = dv.max(dl);
        if mismatch < opts.tolerance {
            // Report the current used in this sweep so flows, losses and voltages are
            // mutually consistent.
            return Ok(build_solution(feeder, &set, &v, &pf, &qf, &l_used, iter, mismatch));
        }
    }
    Err(PowerFlowError::NotConverged { iterations: opts.max_iterations, mismatch })
}

#[allow(clippy::too_many_arguments)]
fn build_solution(
    feeder: &FeederModel,
    set: &Settings,
    v: &[f64],
    pf: &[f64],
    qf: &[f64],
    l: &[f64],
    iterations: usize,
    max_mismatch: f64,
) -> PowerFlowSolution {
    let base = feeder.base_kva;
    let root = feeder.child_branches(0);
    PowerFlowSolution {
        voltages: v.to_vec(),
        branch_flows: pf.iter().zip(qf).map(|(p, q)| (p * base, q * base)).collect(),
        branch_losses: feeder.branches.iter().zip(l).map(|(br, l)| br.r * l * base).collect(),
        branch_current_sq: l.to_vec(),
        capacitor_kvar: set.capacitor.iter().zip(v).map(|(c, v)| c * v * v * base).collect(),
        substation_p_kw: root.iter().map(|&k| pf[k]).sum::<f64>() * base,
        substation_q_kvar: root.iter().map(|&k| qf[k]).sum::<f64>() * base,
        converged: true,
        iterations,
        max_mismatch,
    }
}

/// DistFlow branch-equation residual per branch (p.u.^2).
pub fn distflow_residuals(
    feeder: &FeederModel,
    taps: &[i32],
    sol: &PowerFlowSolution,
) -> Result<Vec<f64>, FeederError> {
    let set = settings(feeder, taps)?;
    let base = feeder.base_kva;
    Ok(feeder
        .branches
        .iter()
        .enumerate()
        .map(|(k, br)| {
            let vi = sol.voltages[br.from];
            let vj = sol.voltages[br.to] / set.ratio[k];
            let (p, q) = (sol.branch_flows[k].0 / base, sol.branch_flows[k].1 / base);
            let l = sol.branch_current_sq[k];
            vj * vj - vi * vi + 2.0 * br.r * p + 2.0 * br.x * q - (br.r * br.r + br.x * br.x) * l
        })
        .collect())
}
