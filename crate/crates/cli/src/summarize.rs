//! Cross-seed summaries of finished runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cmarl_vvc::benchmarks::{communication_report, communication_report_csv, communication_report_text};
use cmarl_vvc::consensus::{MetricsRow, METRICS_HEADER};

use crate::config::ExperimentConfig;

/// One finished seed: its experiment name and metrics.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub name: String,
    pub rows: Vec<MetricsRow>,
}

/// Median with min/max band at each hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn band(values: &mut [f64]) -> Band {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let median = if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) };
    Band { median, min: values[0], max: values[n - 1] }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        bail!("{}: metrics schema {:?} does not match {:?}", path.display(), header, METRICS_HEADER);
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        rows.push(MetricsRow {
            hour: field(0).parse()?,
            mean_hourly_reward: field(1).parse()?,
            mean_violations: field(2).parse()?,
            transmitted_scalars_cumulative: field(3).parse()?,
            wall_seconds: field(4).parse()?,
        });
    }
    Ok(rows)
}

/// Seed directories under `dir`, or `dir` itself if it holds a metrics file.
fn seed_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join("metrics.csv").is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("metrics.csv").is_file())
        .collect();
    out.sort();
    if out.is_empty() {
        bail!("{} holds no completed runs", dir.display());
    }
    Ok(out)
}

pub fn load_runs(dirs: &[PathBuf]) -> Result<Vec<RunRecord>> {
    let mut runs = Vec::new();
    for d in dirs {
        for sd in seed_dirs(d)? {
            let manifest = ExperimentConfig::from_file(sd.join("manifest.toml"))?;
            let rows = read_metrics(&sd.join("metrics.csv"))?;
            runs.push(RunRecord { dir: sd, name: manifest.experiment.name, rows });
        }
    }
    if runs.is_empty() {
        bail!("no runs to summarize");
    }
    Ok(runs)
}

/// Hourly bands for each experiment name, as CSV text.
pub fn summary_tables(runs: &[RunRecord]) -> Result<BTreeMap<String, String>> {
    let mut groups: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        groups.entry(&r.name).or_default().push(r);
    }
    let mut out = BTreeMap::new();
    for (name, group) in groups {
        let hours = group[0].rows.len();
        if let Some(bad) = group.iter().find(|r| r.rows.len() != hours) {
            bail!("{}: {} rows, but {} has {hours}", bad.dir.display(), bad.rows.len(), group[0].dir.display());
        }
        let mut text = String::from(
            "hour,runs,reward_median,reward_min,reward_max,violations_median,violations_min,violations_max,transmitted_median,transmitted_min,transmitted_max\n",
        );
        for h in 0..hours {
            let col = |f: fn(&MetricsRow) -> f64| band(&mut group.iter().map(|r| f(&r.rows[h])).collect::<Vec<_>>());
            let rw = col(|r| r.mean_hourly_reward);
            let vi = col(|r| r.mean_violations);
            let tx = col(|r| r.transmitted_scalars_cumulative as f64);
            text.push_str(&format!(
                "{h},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                group.len(),
                rw.median,
                rw.min,
                rw.max,
                vi.median,
                vi.min,
                vi.max,
                tx.median,
                tx.min,
                tx.max
            ));
        }
        out.insert(name.to_string(), text);
    }
    Ok(out)
}

/// Writes `summary-<name>.csv` per experiment and a communication report.
pub fn summarize(dirs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let runs = load_runs(dirs)?;
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, text) in summary_tables(&runs)? {
        let p = out_dir.join(format!("summary-{name}.csv"));
        fs::write(&p, text)?;
        written.push(p);
    }
    let per_run: Vec<(String, Vec<MetricsRow>)> = runs
        .iter()
        .map(|r| {
            let seed = r.dir.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            (format!("{}/{seed}", r.name), r.rows.clone())
        })
        .collect();
    let comm = communication_report(&per_run);
    for (file, text) in [("communication.txt", communication_report_text(&comm)), ("communication.csv", communication_report_csv(&comm))] {
        let p = out_dir.join(file);
        fs::write(&p, text)?;
        written.push(p);
    }
    Ok(written)
}
