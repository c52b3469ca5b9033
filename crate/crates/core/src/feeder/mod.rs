//! Radial distribution feeder model.
//!
//! A feeder is a tree of buses rooted at the substation (internal index 0),
//! with per-unit branch impedances and a set of discrete tap devices:
//! a substation voltage regulator, on-load tap changers sitting on branches,
//! and switched capacitor banks sitting on buses.
//!
//! Feeders are read from a line-oriented text format:
//!
//! ```text
//! # comment
//! feeder   <name>
//! base_kva <kVA>
//! base_kv  <kV>
//! bus      <id> <p_kw> <q_kvar> <cap_kvar | ->
//! branch   <from_id> <to_id> <r_pu> <x_pu> <oltc 0|1>
//! device   <name> <regulator|oltc|capacitor> <location> <tap_min> <tap_max> <step>
//! ```
//!
//! Bus ids are arbitrary non-negative labels; the substation must carry id 0.
//! Branches are oriented away from the substation. A device location is a bus
//! id for regulators and capacitors and `from-to` for an OLTC. For capacitors
//! `step` is the rating in kVar and must equal the bus record's `cap_kvar`.

mod powerflow;

pub use powerflow::{
    distflow_residuals, solve_power_flow, solve_power_flow_with, total_and_per_branch_losses,
    LossSummary, PowerFlowError, PowerFlowSolution, SolverOptions,
};

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

/// Regulator and OLTC tap range used by every shipped feeder.
pub const STANDARD_TAP_MIN: i32 = -10;
pub const STANDARD_TAP_MAX: i32 = 10;
/// Turns-ratio change per regulator/OLTC tap.
pub const STANDARD_TAP_STEP: f64 = 0.005;

#[derive(Debug, Error, PartialEq)]
pub enum TapError {
    #[error("tap {tap} outside [{min}, {max}]")]
    OutOfRange { tap: i32, min: i32, max: i32 },
}

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid feeder: {0}")]
    Invalid(String),
    #[error("unknown built-in feeder `{0}`")]
    UnknownBuiltin(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    /// Label from the feeder file. The substation is 0.
    pub id: u32,
    pub load_p_kw: f64,
    pub load_q_kvar: f64,
    pub capacitor_kvar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// Upstream bus index.
    pub from: usize,
    /// Downstream bus index.
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Index of the OLTC device on this branch, if any.
    pub oltc: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeviceKind {
    Regulator,
    Oltc,
    Capacitor,
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeviceKind::Regulator => "regulator",
            DeviceKind::Oltc => "oltc",
            DeviceKind::Capacitor => "capacitor",
        })
    }
}

impl FromStr for DeviceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "regulator" | "vr" => Ok(DeviceKind::Regulator),
            "oltc" | "tc" => Ok(DeviceKind::Oltc),
            "capacitor" | "cap" | "cp" => Ok(DeviceKind::Capacitor),
            other => Err(format!("unknown device kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceLocation {
    Bus(usize),
    Branch(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapDevice {
    pub name: String,
    pub kind: DeviceKind,
    /// Initial tap position.
    pub tap: i32,
    pub tap_min: i32,
    pub tap_max: i32,
    /// Ratio step for regulators/OLTCs, rating in kVar for capacitors.
    pub step: f64,
    pub location: DeviceLocation,
}

impl TapDevice {
    pub fn positions(&self) -> usize {
        (self.tap_max - self.tap_min + 1) as usize
    }

    pub fn check_tap(&self, tap: i32) -> Result<(), TapError> {
        if tap < self.tap_min || tap > self.tap_max {
            return Err(TapError::OutOfRange { tap, min: self.tap_min, max: self.tap_max });
        }
        Ok(())
    }

    /// Tap position for a zero-based action index.
    pub fn tap_for_index(&self, index: usize) -> i32 {
        self.tap_min + index as i32
    }

    pub fn index_for_tap(&self, tap: i32) -> usize {
        (tap - self.tap_min) as usize
    }

    /// Turns ratio `1 + tap * step` (regulators and OLTCs).
    pub fn ratio(&self, tap: i32) -> Result<f64, TapError> {
        self.check_tap(tap)?;
        Ok(1.0 + f64::from(tap) * self.step)
    }
}

/// Substation voltage `1 + 0.005 * tap` for a standard 21-position regulator.
pub fn regulator_voltage(tap: i32) -> Result<f64, TapError> {
    oltc_ratio(tap, STANDARD_TAP_STEP)
}

/// Reactive output of a switched capacitor, `status * rating * v^2` (kVar).
pub fn capacitor_injection(status: u8, rating_kvar: f64, v: f64) -> f64 {
    debug_assert!(status <= 1 && rating_kvar > 0.0 && v > 0.0);
    f64::from(status) * rating_kvar * v * v
}

/// Turns ratio `1 + tap * step` for a standard 21-position tap changer.
pub fn oltc_ratio(tap: i32, step: f64) -> Result<f64, TapError> {
    if !(STANDARD_TAP_MIN..=STANDARD_TAP_MAX).contains(&tap) {
        return Err(TapError::OutOfRange { tap, min: STANDARD_TAP_MIN, max: STANDARD_TAP_MAX });
    }
    Ok(1.0 + f64::from(tap) * step)
}

#[derive(Debug, Clone)]
pub struct FeederModel {
    pub name: String,
    pub base_kva: f64,
    pub base_kv: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub devices: Vec<TapDevice>,
    parent_branch: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
    index_of: HashMap<u32, usize>,
}

impl FeederModel {
    /// Assembles and validates a feeder. Bus 0 of `buses` must be the substation.
    pub fn new(
        name: impl Into<String>,
        base_kva: f64,
        base_kv: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        devices: Vec<TapDevice>,
    ) -> Result<Self, FeederError> {
        let invalid = |m: String| Err(FeederError::Invalid(m));
        if !(base_kva > 0.0) {
            return invalid(format!("base_kva must be positive, got {base_kva}"));
        }
        if buses.is_empty() {
            return invalid("feeder has no buses".into());
        }
        if buses[0].id != 0 {
            return invalid("first bus must be the substation with id 0".into());
        }
        let mut index_of = HashMap::new();
        for (k, b) in buses.iter().enumerate() {
            if index_of.insert(b.id, k).is_some() {
                return invalid(format!("duplicate bus id {}", b.id));
            }
            if !b.load_p_kw.is_finite() || !b.load_q_kvar.is_finite() {
                return invalid(format!("bus {} has a non-finite load", b.id));
            }
            if let Some(c) = b.capacitor_kvar {
                if !(c > 0.0) {
                    return invalid(format!("bus {} capacitor rating must be positive", b.id));
                }
            }
        }
        let sub = &buses[0];
        if sub.load_p_kw != 0.0 || sub.load_q_kvar != 0.0 {
            return invalid("substation must carry zero load".into());
        }
        let n = buses.len();
        if branches.len() + 1 != n {
            return invalid(format!("{} buses need {} branches, found {}", n, n - 1, branches.len()));
        }
        let mut parent_branch = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for (k, br) in branches.iter().enumerate() {
            if br.from >= n || br.to >= n {
                return invalid(format!("branch {k} references a missing bus"));
            }
            if !(br.r >= 0.0) || !br.x.is_finite() {
                return invalid(format!("branch {k} has invalid impedance"));
            }
            if br.to == 0 {
                return invalid(format!("branch {k} feeds into the substation"));
            }
            if parent_branch[br.to].replace(k).is_some() {
                return invalid(format!("bus {} has two upstream branches", buses[br.to].id));
            }
            children[br.from].push(k);
        }
        // Breadth-first order from the substation; every bus must be reached.
        let mut order = Vec::with_capacity(n);
        order.push(0);
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &k in &children[u] {
                order.push(branches[k].to);
            }
        }
        if order.len() != n {
            return invalid("branches do not form a spanning tree rooted at the substation".into());
        }
        for (d, dev) in devices.iter().enumerate() {
            if dev.tap_min > dev.tap_max || dev.check_tap(dev.tap).is_err() {
                return invalid(format!("device {} has inconsistent tap bounds", dev.name));
            }
            match (dev.kind, dev.location) {
                (DeviceKind::Regulator, DeviceLocation::Bus(0)) => {}
                (DeviceKind::Regulator, _) => {
                    return invalid(format!("regulator {} must sit at the substation", dev.name))
                }
                (DeviceKind::Oltc, DeviceLocation::Branch(k)) => {
                    if branches.get(k).and_then(|b| b.oltc) != Some(d) {
                        return invalid(format!("OLTC {} not linked to its branch", dev.name));
                    }
                }
                (DeviceKind::Capacitor, DeviceLocation::Bus(b)) => {
                    if dev.tap_min != 0 || dev.tap_max != 1 {
                        return invalid(format!("capacitor {} must switch between 0 and 1", dev.name));
                    }
                    match buses.get(b).and_then(|bus| bus.capacitor_kvar) {
                        Some(c) if (c - dev.step).abs() <= 1e-9 * c.max(1.0) => {}
                        _ => {
                            return invalid(format!(
                                "capacitor {} rating does not match its bus record",
                                dev.name
                            ))
                        }
                    }
                }
                _ => return invalid(format!("device {} has a wrong location type", dev.name)),
            }
        }
        for (k, br) in branches.iter().enumerate() {
            if let Some(d) = br.oltc {
                match devices.get(d) {
                    Some(dev) if dev.kind == DeviceKind::Oltc && dev.location == DeviceLocation::Branch(k) => {}
                    _ => return invalid(format!("branch {k} flags an OLTC that is not declared")),
                }
            }
        }
        if devices.iter().filter(|d| d.kind == DeviceKind::Regulator).count() > 1 {
            return invalid("at most one substation regulator".into());
        }
        Ok(Self {
            name: name.into(),
            base_kva,
            base_kv,
            buses,
            branches,
            devices,
            parent_branch,
            children,
            order,
            index_of,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, FeederError> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    /// Feeders shipped with the crate: `ieee4`, `ieee4-single`, `ieee34`, `ieee123`.
    pub fn builtin(name: &str) -> Result<Self, FeederError> {
        let text = match name {
            "ieee4" => include_str!("../../data/feeders/ieee4.feeder"),
            "ieee4-single" => include_str!("../../data/feeders/ieee4-single.feeder"),
            "ieee34" => include_str!("../../data/feeders/ieee34.feeder"),
            "ieee123" => include_str!("../../data/feeders/ieee123.feeder"),
            other => return Err(FeederError::UnknownBuiltin(other.to_string())),
        };
        text.parse()
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.index_of.get(&id).copied()
    }

    /// Upstream branch feeding `bus` (None for the substation).
    pub fn parent_branch(&self, bus: usize) -> Option<usize> {
        self.parent_branch[bus]
    }

    /// Branches leaving `bus` downstream.
    pub fn child_branches(&self, bus: usize) -> &[usize] {
        &self.children[bus]
    }

    /// Bus indices in breadth-first order from the substation.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Number of positions of each device, in device order.
    pub fn action_sizes(&self) -> Vec<usize> {
        self.devices.iter().map(TapDevice::positions).collect()
    }

    pub fn initial_taps(&self) -> Vec<i32> {
        self.devices.iter().map(|d| d.tap).collect()
    }

    pub fn check_taps(&self, taps: &[i32]) -> Result<(), FeederError> {
        if taps.len() != self.devices.len() {
            return Err(FeederError::Invalid(format!(
                "expected {} taps, got {}",
                self.devices.len(),
                taps.len()
            )));
        }
        for (dev, &t) in self.devices.iter().zip(taps) {
            dev.check_tap(t).map_err(|e| FeederError::Invalid(format!("{}: {e}", dev.name)))?;
        }
        Ok(())
    }

    /// Nominal per-bus loads from the feeder file.
    pub fn nominal_loads(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.buses.iter().map(|b| b.load_p_kw).collect(),
            self.buses.iter().map(|b| b.load_q_kvar).collect(),
        )
    }

    pub fn nominal_total_p_kw(&self) -> f64 {
        self.buses.iter().map(|b| b.load_p_kw).sum()
    }

    /// Human-readable branch label `from-to` using bus ids.
    pub fn branch_label(&self, k: usize) -> String {
        let br = &self.branches[k];
        format!("{}-{}", self.buses[br.from].id, self.buses[br.to].id)
    }

    /// Branches touching `bus` (its upstream branch and all downstream ones).
    pub fn incident_branches(&self, bus: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.parent_branch[bus].into_iter().collect();
        v.extend_from_slice(&self.children[bus]);
        v.sort_unstable();
        v
    }

    /// Renders the feeder back into its text format.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "feeder {}\nbase_kva {}\nbase_kv {}\n",
            self.name, self.base_kva, self.base_kv
        );
        for b in &self.buses {
            let cap = b.capacitor_kvar.map_or_else(|| "-".to_string(), |c| c.to_string());
            s.push_str(&format!("bus {} {} {} {}\n", b.id, b.load_p_kw, b.load_q_kvar, cap));
        }
        for br in &self.branches {
            s.push_str(&format!(
                "branch {} {} {} {} {}\n",
                self.buses[br.from].id,
                self.buses[br.to].id,
                br.r,
                br.x,
                u8::from(br.oltc.is_some())
            ));
        }
        for d in &self.devices {
            let loc = match d.location {
                DeviceLocation::Bus(b) => self.buses[b].id.to_string(),
                DeviceLocation::Branch(k) => self.branch_label(k),
            };
            s.push_str(&format!(
                "device {} {} {} {} {} {}\n",
                d.name, d.kind, loc, d.tap_min, d.tap_max, d.step
            ));
        }
        s
    }
}

impl FromStr for FeederModel {
    type Err = FeederError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        parse_feeder(text)
    }
}

struct RawBranch {
    line: usize,
    from: u32,
    to: u32,
    r: f64,
    x: f64,
    oltc: bool,
}

struct RawDevice {
    line: usize,
    name: String,
    kind: DeviceKind,
    location: String,
    tap_min: i32,
    tap_max: i32,
    step: f64,
}

fn parse_feeder(text: &str) -> Result<FeederModel, FeederError> {
    let mut name = None;
    let mut base_kva = None;
    let mut base_kv = None;
    let mut buses = Vec::new();
    let mut raw_branches = Vec::new();
    let mut raw_devices = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let err = |msg: String| FeederError::Parse { line, msg };
        let want = |n: usize| -> Result<(), FeederError> {
            if fields.len() == n {
                Ok(())
            } else {
                Err(err(format!("`{}` expects {} fields, found {}", fields[0], n - 1, fields.len() - 1)))
            }
        };
        fn num<T: FromStr>(s: &str, line: usize, what: &str) -> Result<T, FeederError> {
            s.parse().map_err(|_| FeederError::Parse { line, msg: format!("bad {what} `{s}`") })
        }
        match fields[0] {
            "feeder" => {
                want(2)?;
                name = Some(fields[1].to_string());
            }
            "base_kva" => {
                want(2)?;
                base_kva = Some(num::<f64>(fields[1], line, "base_kva")?);
            }
            "base_kv" => {
                want(2)?;
                base_kv = Some(num::<f64>(fields[1], line, "base_kv")?);
            }
            "bus" => {
                want(5)?;
                let capacitor_kvar = match fields[4] {
                    "-" => None,
                    s => Some(num::<f64>(s, line, "cap_kvar")?),
                };
                buses.push(Bus {
                    id: num(fields[1], line, "bus id")?,
                    load_p_kw: num(fields[2], line, "p_kw")?,
                    load_q_kvar: num(fields[3], line, "q_kvar")?,
                    capacitor_kvar,
                });
            }
            "branch" => {
                want(6)?;
                let oltc = match fields[5] {
                    "0" => false,
                    "1" => true,
                    s => return Err(err(format!("oltc flag must be 0 or 1, got `{s}`"))),
                };
                raw_branches.push(RawBranch {
                    line,
                    from: num(fields[1], line, "from id")?,
                    to: num(fields[2], line, "to id")?,
                    r: num(fields[3], line, "r_pu")?,
                    x: num(fields[4], line, "x_pu")?,
                    oltc,
                });
            }
            "device" => {
                want(7)?;
                raw_devices.push(RawDevice {
                    line,
                    name: fields[1].to_string(),
                    kind: fields[2].parse().map_err(err)?,
                    location: fields[3].to_string(),
                    tap_min: num(fields[4], line, "tap_min")?,
                    tap_max: num(fields[5], line, "tap_max")?,
                    step: num(fields[6], line, "step")?,
                });
            }
            other => return Err(err(format!("unknown record `{other}`"))),
        }
    }

    let missing = |what: &str| FeederError::Invalid(format!("missing `{what}` header"));
    let name = name.ok_or_else(|| missing("feeder"))?;
    let base_kva = base_kva.ok_or_else(|| missing("base_kva"))?;
    let base_kv = base_kv.ok_or_else(|| missing("base_kv"))?;

    // Substation first, remaining buses in file order.
    if let Some(pos) = buses.iter().position(|b| b.id == 0) {
        let sub = buses.remove(pos);
        buses.insert(0, sub);
    }
    let index_of: HashMap<u32, usize> = buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
    let lookup = |id: u32, line: usize| {
        index_of
            .get(&id)
            .copied()
            .ok_or_else(|| FeederError::Parse { line, msg: format!("unknown bus {id}") })
    };

    let mut branches = Vec::with_capacity(raw_branches.len());
    let mut branch_of: HashMap<(usize, usize), usize> = HashMap::new();
    for rb in &raw_branches {
        let from = lookup(rb.from, rb.line)?;
        let to = lookup(rb.to, rb.line)?;
        branch_of.insert((from, to), branches.len());
        branches.push(Branch { from, to, r: rb.r, x: rb.x, oltc: None });
    }

    let mut devices = Vec::with_capacity(raw_devices.len());
    for rd in raw_devices {
        let err = |msg: String| FeederError::Parse { line: rd.line, msg };
        let location = match rd.kind {
            DeviceKind::Oltc => {
                let (a, b) = rd
                    .location
                    .split_once('-')
                    .ok_or_else(|| err(format!("OLTC location must be `from-to`, got `{}`", rd.location)))?;
                let a = lookup(a.parse().map_err(|_| err(format!("bad bus `{a}`")))?, rd.line)?;
                let b = lookup(b.parse().map_err(|_| err(format!("bad bus `{b}`")))?, rd.line)?;
                let k = *branch_of
                    .get(&(a, b))
                    .ok_or_else(|| err(format!("no branch `{}`", rd.location)))?;
                if !raw_branches[k].oltc {
                    return Err(err(format!("branch `{}` is not flagged as OLTC", rd.location)));
                }
                if branches[k].oltc.is_some() {
                    return Err(err(format!("branch `{}` already has an OLTC", rd.location)));
                }
                branches[k].oltc = Some(devices.len());
                DeviceLocation::Branch(k)
            }
            _ => {
                let id: u32 =
                    rd.location.parse().map_err(|_| err(format!("bad bus `{}`", rd.location)))?;
                DeviceLocation::Bus(lookup(id, rd.line)?)
            }
        };
        let tap = if (rd.tap_min..=rd.tap_max).contains(&0) { 0 } else { rd.tap_min };
        devices.push(TapDevice {
            name: rd.name,
            kind: rd.kind,
            tap,
            tap_min: rd.tap_min,
            tap_max: rd.tap_max,
            step: rd.step,
            location,
        });
    }
    if let Some(rb) = raw_branches.iter().zip(&branches).find(|(rb, b)| rb.oltc && b.oltc.is_none()) {
        return Err(FeederError::Parse {
            line: rb.0.line,
            msg: "branch flagged as OLTC but no device declared on it".into(),
        });
    }

    FeederModel::new(name, base_kva, base_kv, buses, branches, devices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regulator_voltage_endpoints() {
        assert_eq!(regulator_voltage(0).unwrap(), 1.0);
        assert!((regulator_voltage(10).unwrap() - 1.05).abs() < 1e-15);
        assert!((regulator_voltage(-10).unwrap() - 0.95).abs() < 1e-15);
        assert_eq!(
            regulator_voltage(11),
            Err(TapError::OutOfRange { tap: 11, min: -10, max: 10 })
        );
    }

    #[test]
    fn capacitor_output_scales_with_voltage_squared() {
        assert_eq!(capacitor_injection(1, 200.0, 1.0), 200.0);
        assert_eq!(capacitor_injection(0, 200.0, 1.02), 0.0);
        assert!((capacitor_injection(1, 100.0, 0.95) - 90.25).abs() < 1e-12);
    }

    #[test]
    fn oltc_ratio_values() {
        assert_eq!(oltc_ratio(0, 0.005).unwrap(), 1.0);
        assert!((oltc_ratio(5, 0.005).unwrap() - 1.025).abs() < 1e-15);
        assert!((oltc_ratio(-10, 0.005).unwrap() - 0.95).abs() < 1e-15);
        assert!(oltc_ratio(-11, 0.005).is_err());
    }

    #[test]
    fn builtin_feeders_load() {
        for (name, buses, devices) in
            [("ieee4", 4, 3), ("ieee4-single", 4, 1), ("ieee34", 34, 5), ("ieee123", 124, 8)]
        {
            let f = FeederModel::builtin(name).unwrap();
            assert_eq!(f.bus_count(), buses, "{name}");
            assert_eq!(f.device_count(), devices, "{name}");
            assert_eq!(f.devices[0].kind, DeviceKind::Regulator);
            for d in &f.devices {
                match d.kind {
                    DeviceKind::Capacitor => assert_eq!(d.positions(), 2),
                    _ => {
                        assert_eq!(d.positions(), 21);
                        assert_eq!(d.step, STANDARD_TAP_STEP);
                    }
                }
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let f = FeederModel::builtin("ieee34").unwrap();
        let g: FeederModel = f.to_text().parse().unwrap();
        assert_eq!(f.buses, g.buses);
        assert_eq!(f.branches, g.branches);
        assert_eq!(f.devices, g.devices);
    }

    const TINY: &str = "feeder t\nbase_kva 100\nbase_kv 1\nbus 0 0 0 -\nbus 1 1 1 -\nbus 2 1 1 -\n";

    #[test]
    fn rejects_cycle_and_disconnection() {
        let cyclic = format!("{TINY}branch 0 1 0.1 0.1 0\nbranch 1 2 0.1 0.1 0\nbranch 2 1 0.1 0.1 0\n");
        assert!(cyclic.parse::<FeederModel>().is_err());
        let short = format!("{TINY}branch 0 1 0.1 0.1 0\n");
        assert!(short.parse::<FeederModel>().is_err());
        let orphan = format!("{TINY}branch 0 1 0.1 0.1 0\nbranch 2 1 0.1 0.1 0\n");
        assert!(orphan.parse::<FeederModel>().is_err());
    }

    #[test]
    fn rejects_bad_records() {
        let e = format!("{TINY}branch 0 1 0.1 0.1 0\nbranch 1 9 0.1 0.1 0\n")
            .parse::<FeederModel>()
            .unwrap_err();
        assert!(matches!(e, FeederError::Parse { line: 8, .. }), "{e}");
        let neg_r = format!("{TINY}branch 0 1 -0.1 0.1 0\nbranch 1 2 0.1 0.1 0\n");
        assert!(neg_r.parse::<FeederModel>().is_err());
        let loaded_sub = "feeder t\nbase_kva 100\nbase_kv 1\nbus 0 5 0 -\nbus 1 1 1 -\nbranch 0 1 0.1 0.1 0\n";
        assert!(loaded_sub.parse::<FeederModel>().is_err());
        let orphan_oltc = format!("{TINY}branch 0 1 0.1 0.1 1\nbranch 1 2 0.1 0.1 0\n");
        assert!(orphan_oltc.parse::<FeederModel>().is_err());
        let bad_cap = format!(
            "{TINY}branch 0 1 0.1 0.1 0\nbranch 1 2 0.1 0.1 0\ndevice C capacitor 2 0 1 50\n"
        );
        assert!(bad_cap.parse::<FeederModel>().is_err());
    }

    #[test]
    fn incident_branches_of_leaf() {
        let f = FeederModel::builtin("ieee4").unwrap();
        let leaf = f.bus_index(4).unwrap();
        let inc = f.incident_branches(leaf);
        assert_eq!(inc.len(), 1);
        assert_eq!(f.branch_label(inc[0]), "3-4");
    }
}
