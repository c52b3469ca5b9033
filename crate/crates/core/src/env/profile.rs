use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use super::{EnvError, WEEK_HOURS};
use crate::feeder::FeederModel;

/// Hourly loads per bus, indexed `[hour][bus]` with bus indices as in the feeder.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    p_kw: Vec<Vec<f64>>,
    q_kvar: Vec<Vec<f64>>,
}

impl LoadProfile {
    pub fn new(p_kw: Vec<Vec<f64>>, q_kvar: Vec<Vec<f64>>) -> Result<Self, EnvError> {
        if p_kw.is_empty() {
            return Err(EnvError::Profile("empty profile".into()));
        }
        let n = p_kw[0].len();
        if p_kw.len() != q_kvar.len() || p_kw.iter().chain(&q_kvar).any(|row| row.len() != n) {
            return Err(EnvError::Profile("ragged load table".into()));
        }
        if let Some((h, b)) = p_kw
            .iter()
            .enumerate()
            .find_map(|(h, row)| row.iter().position(|&v| !(v >= 0.0)).map(|b| (h, b)))
        {
            return Err(EnvError::Profile(format!("negative or NaN kW at hour {h}, bus index {b}")));
        }
        Ok(Self { p_kw, q_kvar })
    }

    pub fn horizon(&self) -> usize {
        self.p_kw.len()
    }

    pub fn bus_count(&self) -> usize {
        self.p_kw[0].len()
    }

    /// Loads at `hour`, wrapping around the horizon.
    pub fn loads(&self, hour: usize) -> (&[f64], &[f64]) {
        let h = hour % self.horizon();
        (&self.p_kw[h], &self.q_kvar[h])
    }

    pub fn total_p_kw(&self, hour: usize) -> f64 {
        self.loads(hour).0.iter().sum()
    }

    pub fn peak_total_p_kw(&self) -> f64 {
        (0..self.horizon()).map(|h| self.total_p_kw(h)).fold(0.0, f64::max)
    }

    /// Per-bus average over the horizon.
    pub fn mean_loads(&self) -> (Vec<f64>, Vec<f64>) {
        let h = self.horizon() as f64;
        let mean = |table: &[Vec<f64>]| {
            (0..self.bus_count()).map(|b| table.iter().map(|row| row[b]).sum::<f64>() / h).collect()
        };
        (mean(&self.p_kw), mean(&self.q_kvar))
    }
}

/// Relative demand at hour-of-week `h`: morning and evening peaks, lighter weekends.
fn weekly_shape(h: usize) -> f64 {
    let hod = (h % 24) as f64;
    let day = h / 24;
    let bump = |centre: f64, width: f64| (-((hod - centre) / width).powi(2)).exp();
    let daily = 0.45 + 0.25 * bump(8.0, 2.5) + 0.45 * bump(19.0, 3.0) + 0.1 * (2.0 * PI * hod / 24.0).sin();
    if day >= 5 { 0.9 * daily } else { daily }
}

/// Weekly-periodic loads with lognormal noise, scaled so the peak total equals
/// the feeder's nominal total. Every bus keeps its nominal q/p ratio.
pub fn synth_load_profile(
    feeder: &FeederModel,
    weeks: usize,
    seed: u64,
) -> Result<LoadProfile, EnvError> {
    if weeks == 0 {
        return Err(EnvError::Profile("weeks must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = LogNormal::new(0.0, 0.1).expect("valid lognormal");
    let (p_nom, q_nom) = feeder.nominal_loads();
    let n = feeder.bus_count();
    let shift: Vec<i64> = (0..n).map(|_| rng.random_range(-1..=1)).collect();
    let hours = weeks * WEEK_HOURS;
    let mut factor = vec![vec![0.0; n]; hours];
    for (h, row) in factor.iter_mut().enumerate() {
        for b in 1..n {
            let shifted = (h as i64 + shift[b]).rem_euclid(WEEK_HOURS as i64) as usize;
            row[b] = weekly_shape(shifted) * noise.sample(&mut rng);
        }
    }
    let peak = factor
        .iter()
        .map(|row| row.iter().zip(&p_nom).map(|(f, p)| f * p).sum::<f64>())
        .fold(0.0, f64::max);
    let scale = if peak > 0.0 { feeder.nominal_total_p_kw() / peak } else { 0.0 };
    let p = factor.iter().map(|row| row.iter().zip(&p_nom).map(|(f, v)| f * scale * v).collect()).collect();
    let q = factor.iter().map(|row| row.iter().zip(&q_nom).map(|(f, v)| f * scale * v).collect()).collect();
    LoadProfile::new(p, q)
}

/// Writes `hour,bus_id,p_kw,q_kvar` rows for every non-substation bus.
pub fn write_profile_csv(
    profile: &LoadProfile,
    feeder: &FeederModel,
    path: impl AsRef<Path>,
) -> Result<(), EnvError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["hour", "bus_id", "p_kw", "q_kvar"])?;
    for h in 0..profile.horizon() {
        let (p, q) = profile.loads(h);
        for b in 1..feeder.bus_count() {
            w.write_record([
                h.to_string(),
                feeder.buses[b].id.to_string(),
                p[b].to_string(),
                q[b].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a complete hour × bus grid. The substation is implicitly zero.
pub fn load_profile_from_csv(
    path: impl AsRef<Path>,
    feeder: &FeederModel,
) -> Result<LoadProfile, EnvError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| EnvError::Profile(format!("missing column `{name}`")))
    };
    let (ch, cb, cp, cq) = (column("hour")?, column("bus_id")?, column("p_kw")?, column("q_kvar")?);
    let mut cells: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    let mut hours = 0;
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let field = |c: usize, name: &str| {
            record
                .get(c)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| EnvError::ProfileRow { row, msg: format!("missing {name}") })
        };
        let bad = |name: &str| EnvError::ProfileRow { row, msg: format!("unparsable {name}") };
        let hour: usize = field(ch, "hour")?.parse().map_err(|_| bad("hour"))?;
        let bus_id: u32 = field(cb, "bus_id")?.parse().map_err(|_| bad("bus_id"))?;
        let p: f64 = field(cp, "p_kw")?.parse().map_err(|_| bad("p_kw"))?;
        let q: f64 = field(cq, "q_kvar")?.parse().map_err(|_| bad("q_kvar"))?;
        let b = feeder
            .bus_index(bus_id)
            .filter(|&b| b != 0)
            .ok_or_else(|| EnvError::ProfileRow { row, msg: format!("unknown bus {bus_id}") })?;
        if !(p >= 0.0) {
            return Err(EnvError::ProfileRow { row, msg: format!("negative kW {p}") });
        }
        if !q.is_finite() {
            return Err(EnvError::ProfileRow { row, msg: "non-finite kVar".into() });
        }
        if cells.insert((hour, b), (p, q)).is_some() {
            return Err(EnvError::ProfileRow { row, msg: format!("duplicate hour {hour}, bus {bus_id}") });
        }
        hours = hours.max(hour + 1);
    }
    if cells.is_empty() {
        return Err(EnvError::Profile("empty profile".into()));
    }
    let n = feeder.bus_count();
    let mut p = vec![vec![0.0; n]; hours];
    let mut q = vec![vec![0.0; n]; hours];
    for h in 0..hours {
        for b in 1..n {
            let &(pv, qv) = cells
                .get(&(h, b))
                .ok_or(EnvError::MissingCell { hour: h, bus: feeder.buses[b].id })?;
            p[h][b] = pv;
            q[h][b] = qv;
        }
    }
    LoadProfile::new(p, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ieee34() -> FeederModel {
        FeederModel::builtin("ieee34").unwrap()
    }

    #[test]
    fn synthetic_profile_is_seeded() {
        let f = ieee34();
        assert_eq!(synth_load_profile(&f, 2, 3).unwrap(), synth_load_profile(&f, 2, 3).unwrap());
        assert_ne!(synth_load_profile(&f, 2, 3).unwrap(), synth_load_profile(&f, 2, 4).unwrap());
    }

    #[test]
    fn synthetic_profile_keeps_power_factor_and_peak() {
        let f = ieee34();
        let prof = synth_load_profile(&f, 3, 11).unwrap();
        assert_eq!(prof.horizon(), 3 * WEEK_HOURS);
        let (p0, q0) = f.nominal_loads();
        for h in 0..prof.horizon() {
            let (p, q) = prof.loads(h);
            for b in 1..f.bus_count() {
                if p0[b] > 0.0 {
                    assert!((q[b] / p[b] - q0[b] / p0[b]).abs() < 1e-9);
                }
            }
        }
        let ratio = prof.peak_total_p_kw() / f.nominal_total_p_kw();
        assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn zero_weeks_is_rejected() {
        assert!(synth_load_profile(&ieee34(), 0, 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let f = ieee34();
        let prof = synth_load_profile(&f, 1, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loads.csv");
        write_profile_csv(&prof, &f, &path).unwrap();
        assert_eq!(load_profile_from_csv(&path, &f).unwrap(), prof);
    }

    #[test]
    fn csv_missing_cell_names_hour_and_bus() {
        let f = FeederModel::builtin("ieee4").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loads.csv");
        std::fs::write(&path, "hour,bus_id,p_kw,q_kvar\n0,2,0,0\n0,3,0,0\n0,4,10,5\n1,2,0,0\n1,4,10,5\n")
            .unwrap();
        let err = load_profile_from_csv(&path, &f).unwrap_err();
        assert!(matches!(err, EnvError::MissingCell { hour: 1, bus: 3 }), "{err}");
    }

    #[test]
    fn csv_header_only_is_empty() {
        let f = FeederModel::builtin("ieee4").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loads.csv");
        std::fs::write(&path, "hour,bus_id,p_kw,q_kvar\n").unwrap();
        let err = load_profile_from_csv(&path, &f).unwrap_err();
        assert!(err.to_string().contains("empty profile"));
    }

    #[test]
    fn csv_rejects_bad_rows_by_number() {
        let f = FeederModel::builtin("ieee4").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loads.csv");
        for (body, needle) in [
            ("0,2,1,0\n0,9,1,0\n", "unknown bus 9"),
            ("0,2,1,0\n0,3,-1,0\n", "negative kW"),
            ("0,2,1,0\n0,3,,0\n", "missing p_kw"),
        ] {
            std::fs::write(&path, format!("hour,bus_id,p_kw,q_kvar\n{body}")).unwrap();
            match load_profile_from_csv(&path, &f).unwrap_err() {
                EnvError::ProfileRow { row, msg } => {
                    assert_eq!(row, 3);
                    assert!(msg.contains(needle), "{msg}");
                }
                other => panic!("{other}"),
            }
        }
    }
}
