//! Deterministic CSV/JSON output bundles.
//!
//! A bundle directory holds `iterations.csv`, `strategies.csv`,
//! `centroids.csv`, `front.csv`, `refs.json`, `manifest.json` and the SVG
//! figures. Numbers are written with 12 significant digits. Nothing in the
//! files depends on the clock or the machine, so equal seeds give equal bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{EquilibriumRegion, ParetoFrontPoint};
use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, ScenarioReport, TrainingLog};
use crate::market::MarketParams;
use crate::neural::{Mlp, MlpSnapshot};
use crate::schedule::SchedulePair;

use super::svg;

pub const ITERATIONS_CSV: &str = "iterations.csv";
pub const STRATEGIES_CSV: &str = "strategies.csv";
pub const CENTROIDS_CSV: &str = "centroids.csv";
pub const FRONT_CSV: &str = "front.csv";
pub const TRAINING_CSV: &str = "training.csv";
pub const REFS_JSON: &str = "refs.json";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const SCATTER_SVG: &str = "scatter.svg";
pub const STRATEGIES_SVG: &str = "strategies.svg";

/// `%.12g`-style formatting.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencesFile {
    pub label: String,
    pub nash_is: (f64, f64),
    pub pareto_is: (f64, f64),
    pub discrete_nash_is: (f64, f64),
    pub random_baseline_is: (f64, f64),
    pub nash_schedules: SchedulePair,
    pub params: MarketParams,
    pub region_counts: Vec<(EquilibriumRegion, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    /// Data rows, headers excluded.
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
    pub config: ExperimentConfig,
}

/// Everything a figure needs; built from a report or read back from a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleData {
    /// (run_id, is1, is2) per test iteration.
    pub iterations: Vec<(usize, f64, f64)>,
    /// (run_id, agent 1 or 2, t, mean traded quantity).
    pub strategies: Vec<(usize, usize, usize, f64)>,
    pub centroids: Vec<(usize, f64, f64, EquilibriumRegion)>,
    /// (w, eis1, eis2).
    pub front: Vec<(f64, f64, f64)>,
    pub refs: ReferencesFile,
}

impl BundleData {
    pub fn from_report(report: &ScenarioReport) -> Self {
        let mut iterations = Vec::new();
        let mut strategies = Vec::new();
        let mut centroids = Vec::new();
        for run in &report.runs {
            iterations.extend(run.is_pairs.iter().map(|p| (run.run_id, p.0, p.1)));
            for (k, sched) in run.avg_schedules.iter().enumerate() {
                strategies.extend(
                    sched
                        .iter()
                        .enumerate()
                        .map(|(t, v)| (run.run_id, k + 1, t, *v)),
                );
            }
            centroids.push((run.run_id, run.centroid.0, run.centroid.1, run.region));
        }
        Self {
            iterations,
            strategies,
            centroids,
            front: front_rows(&report.refs.front),
            refs: ReferencesFile {
                label: report.label.clone(),
                nash_is: report.refs.nash_is,
                pareto_is: report.refs.pareto_is,
                discrete_nash_is: report.refs.discrete_nash_is,
                random_baseline_is: report.refs.random_baseline_is,
                nash_schedules: report.refs.nash.clone(),
                params: report.config.test_market(),
                region_counts: report.region_counts.clone(),
            },
        }
    }
}

fn front_rows(front: &[ParetoFrontPoint]) -> Vec<(f64, f64, f64)> {
    front.iter().map(|p| (p.weight, p.eis.0, p.eis.1)).collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Numeric(format!("{}: {other:?}", path.display())),
    }
}

fn write_csv<R, I>(path: &Path, header: &[&str], rows: I) -> Result<usize>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    let mut count = 0;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
        count += 1;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(count)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `front.csv` (columns `w,eis1,eis2`) and returns the row count.
pub fn write_front_csv(path: &Path, front: &[ParetoFrontPoint]) -> Result<usize> {
    write_csv(
        path,
        &["w", "eis1", "eis2"],
        front_rows(front)
            .into_iter()
            .map(|(w, a, b)| [fmt_num(w), fmt_num(a), fmt_num(b)]),
    )
}

/// Writes one row per log entry of every run.
pub fn write_training_csv(path: &Path, logs: &[TrainingLog]) -> Result<usize> {
    let rows = logs.iter().enumerate().flat_map(|(run, log)| {
        log.entries.iter().map(move |e| {
            [
                run.to_string(),
                e.iter.to_string(),
                fmt_num(e.mean_is.0),
                fmt_num(e.mean_is.1),
                fmt_num(e.mean_loss),
                fmt_num(e.epsilon),
            ]
        })
    });
    write_csv(
        path,
        &[
            "run_id",
            "iter",
            "mean_is1",
            "mean_is2",
            "mean_loss",
            "epsilon",
        ],
        rows,
    )
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes the full bundle for `report` into `dir` (created if needed).
pub fn write_bundle(report: &ScenarioReport, dir: &Path) -> Result<Manifest> {
    create_dir(dir)?;
    let data = BundleData::from_report(report);
    let mut files = Vec::new();
    let mut entry = |file: &str, rows: usize| {
        files.push(ManifestEntry {
            file: file.to_string(),
            rows,
        })
    };

    let rows = write_csv(
        &dir.join(ITERATIONS_CSV),
        &["run_id", "iter", "is1", "is2"],
        report.runs.iter().flat_map(|run| {
            run.is_pairs.iter().enumerate().map(move |(i, p)| {
                [
                    run.run_id.to_string(),
                    i.to_string(),
                    fmt_num(p.0),
                    fmt_num(p.1),
                ]
            })
        }),
    )?;
    entry(ITERATIONS_CSV, rows);

    let rows = write_csv(
        &dir.join(STRATEGIES_CSV),
        &["run_id", "agent", "t", "avg_v"],
        data.strategies.iter().map(|s| {
            [
                s.0.to_string(),
                s.1.to_string(),
                s.2.to_string(),
                fmt_num(s.3),
            ]
        }),
    )?;
    entry(STRATEGIES_CSV, rows);

    let rows = write_csv(
        &dir.join(CENTROIDS_CSV),
        &["run_id", "is1", "is2", "region"],
        data.centroids.iter().map(|c| {
            [
                c.0.to_string(),
                fmt_num(c.1),
                fmt_num(c.2),
                c.3.label().to_string(),
            ]
        }),
    )?;
    entry(CENTROIDS_CSV, rows);

    let rows = write_front_csv(&dir.join(FRONT_CSV), &report.refs.front)?;
    entry(FRONT_CSV, rows);

    if !report.training_logs.is_empty() {
        let rows = write_training_csv(&dir.join(TRAINING_CSV), &report.training_logs)?;
        entry(TRAINING_CSV, rows);
    }

    write_json(&dir.join(REFS_JSON), &data.refs)?;
    entry(REFS_JSON, 1);

    svg::write_figures(&data, dir)?;
    entry(SCATTER_SVG, data.iterations.len());
    entry(STRATEGIES_SVG, data.strategies.len());

    let manifest = Manifest {
        files,
        config: report.config.clone(),
    };
    write_json(&dir.join(MANIFEST_JSON), &manifest)?;
    Ok(manifest)
}

fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let got: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != header {
        return Err(Error::config(
            path.display().to_string(),
            format!("expected header {header:?}, got {got:?}"),
        ));
    }
    r.records()
        .map(|rec| {
            rec.map(|r| r.iter().map(str::to_string).collect())
                .map_err(|e| csv_err(path, e))
        })
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, row: usize, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| {
        Error::config(
            format!("{}:{}", path.display(), row + 2),
            format!("cannot parse {raw:?}"),
        )
    })
}

fn region_from_label(path: &Path, row: usize, raw: &str) -> Result<EquilibriumRegion> {
    EquilibriumRegion::ALL
        .into_iter()
        .find(|r| r.label() == raw)
        .ok_or_else(|| {
            Error::config(
                format!("{}:{}", path.display(), row + 2),
                format!("unknown region {raw:?}"),
            )
        })
}

/// Reads back the data needed for figures from a bundle directory.
pub fn read_bundle(dir: &Path) -> Result<BundleData> {
    let p: PathBuf = dir.join(ITERATIONS_CSV);
    let iterations = read_csv(&p, &["run_id", "iter", "is1", "is2"])?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok((
                field(&p, i, &r[0])?,
                field(&p, i, &r[2])?,
                field(&p, i, &r[3])?,
            ))
        })
        .collect::<Result<_>>()?;

    let p = dir.join(STRATEGIES_CSV);
    let strategies = read_csv(&p, &["run_id", "agent", "t", "avg_v"])?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok((
                field(&p, i, &r[0])?,
                field(&p, i, &r[1])?,
                field(&p, i, &r[2])?,
                field(&p, i, &r[3])?,
            ))
        })
        .collect::<Result<_>>()?;

    let p = dir.join(CENTROIDS_CSV);
    let centroids = read_csv(&p, &["run_id", "is1", "is2", "region"])?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok((
                field(&p, i, &r[0])?,
                field(&p, i, &r[1])?,
                field(&p, i, &r[2])?,
                region_from_label(&p, i, &r[3])?,
            ))
        })
        .collect::<Result<_>>()?;

    let p = dir.join(FRONT_CSV);
    let front = read_csv(&p, &["w", "eis1", "eis2"])?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok((
                field(&p, i, &r[0])?,
                field(&p, i, &r[1])?,
                field(&p, i, &r[2])?,
            ))
        })
        .collect::<Result<_>>()?;

    let p = dir.join(REFS_JSON);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let refs = serde_json::from_str(&text).map_err(|source| Error::Json { path: p, source })?;

    Ok(BundleData {
        iterations,
        strategies,
        centroids,
        front,
        refs,
    })
}

/// Saves network weights as JSON (layer-ordered, row-major weights).
pub fn save_snapshot(path: &Path, net: &Mlp) -> Result<()> {
    write_json(path, &net.snapshot())
}

pub fn load_snapshot(path: &Path) -> Result<Mlp> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let snap: MlpSnapshot = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    Mlp::from_snapshot(&snap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(11.5), "11.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(30.294071603459272), "30.2940716035");
        assert_eq!(fmt_num(123456789012.4), "123456789012");
        assert_eq!(fmt_num(1234567890123.0), "1.23456789012e+12");
        assert_eq!(fmt_num(1e-9), "1e-09");
        assert_eq!(fmt_num(0.0001), "0.0001");
        assert_eq!(fmt_num(99999.99999999999), "100000");
    }
}
