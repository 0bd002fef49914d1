//! Replica harness: runs many independent chains over a parameter grid and
//! records exit times, summaries and survival curves.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{Landscape, Walker2d, DEFAULT_HALF_WIDTH, DEFAULT_STRATA, DEFAULT_UPSILON, START};
use crate::rng::replica_rng;
use crate::schedule::StepSchedule;
use crate::stats::{quantile_sorted, sample_sd};
use crate::toy::{ToyChain, ToyModel, DEFAULT_STEP_CAP};
use crate::wl::UpdateRule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    /// Grid values are `epsilon`.
    Toy,
    /// Grid values are `beta`.
    Landscape {
        half_width: f64,
        strata: usize,
        upsilon: f64,
    },
}

impl ModelSpec {
    pub fn landscape_defaults() -> Self {
        ModelSpec::Landscape {
            half_width: DEFAULT_HALF_WIDTH,
            strata: DEFAULT_STRATA,
            upsilon: DEFAULT_UPSILON,
        }
    }

    pub fn grid_name(&self) -> &'static str {
        match self {
            ModelSpec::Toy => "epsilon",
            ModelSpec::Landscape { .. } => "beta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub grid: Vec<f64>,
    pub schedule: StepSchedule,
    #[serde(default)]
    pub update_rule: UpdateRule,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub step_cap: u64,
    /// Number of successive alternating exits recorded per replica.
    #[serde(default = "one")]
    pub exits: usize,
}

fn default_cap() -> u64 {
    DEFAULT_STEP_CAP
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, grid: Vec<f64>, schedule: StepSchedule, replicas: usize, seed: u64) -> Self {
        Self {
            model,
            grid,
            schedule,
            update_rule: UpdateRule::default(),
            replicas,
            seed,
            step_cap: DEFAULT_STEP_CAP,
            exits: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.grid.is_empty() {
            return bad("grid is empty".into());
        }
        if self.replicas == 0 {
            return bad("replicas must be >= 1".into());
        }
        if self.exits == 0 {
            return bad("exits must be >= 1".into());
        }
        if self.step_cap == 0 {
            return bad("step cap must be >= 1".into());
        }
        for &g in &self.grid {
            match self.model {
                ModelSpec::Toy => {
                    ToyModel::new(g)?;
                }
                ModelSpec::Landscape {
                    half_width,
                    strata,
                    upsilon,
                } => {
                    Landscape::new(g, half_width, strata, upsilon)?;
                }
            }
        }
        Ok(())
    }
}

/// One replica's duration for one exit. Capped durations are the steps spent
/// in that leg before the cap was hit (zero for legs never started).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExitRecord {
    pub exit_time: u64,
    pub capped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitSummary {
    pub grid_value: f64,
    pub mean: f64,
    pub stderr: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub m_effective: usize,
    pub capped_count: usize,
}

/// Results for one exit index across the grid. `records[g][r]` is replica `r`
/// at grid point `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitSeries {
    pub exit_index: usize,
    pub grid: Vec<f64>,
    pub records: Vec<Vec<ExitRecord>>,
}

impl ExitSeries {
    pub fn summaries(&self) -> Vec<ExitSummary> {
        self.grid
            .iter()
            .zip(&self.records)
            .map(|(&g, r)| summarize(g, r))
            .collect()
    }

    /// Uncapped exit times at grid point `g`.
    pub fn completed(&self, g: usize) -> Vec<u64> {
        self.records[g]
            .iter()
            .filter(|r| !r.capped)
            .map(|r| r.exit_time)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub config: ExperimentConfig,
    pub series: Vec<ExitSeries>,
}

/// Statistics over the uncapped replicas. With no uncapped replica every
/// statistic is NaN; with one, the standard error is NaN.
pub fn summarize(grid_value: f64, records: &[ExitRecord]) -> ExitSummary {
    let mut t: Vec<f64> = records
        .iter()
        .filter(|r| !r.capped)
        .map(|r| r.exit_time as f64)
        .collect();
    t.sort_by(f64::total_cmp);
    let m = t.len();
    let capped_count = records.len() - m;
    if m == 0 {
        return ExitSummary {
            grid_value,
            mean: f64::NAN,
            stderr: f64::NAN,
            median: f64::NAN,
            q10: f64::NAN,
            q90: f64::NAN,
            m_effective: 0,
            capped_count,
        };
    }
    ExitSummary {
        grid_value,
        mean: t.iter().sum::<f64>() / m as f64,
        stderr: sample_sd(&t) / (m as f64).sqrt(),
        median: quantile_sorted(&t, 0.5),
        q10: quantile_sorted(&t, 0.1),
        q90: quantile_sorted(&t, 0.9),
        m_effective: m,
        capped_count,
    }
}

enum Runner {
    Toy(ToyChain),
    Walker(Walker2d),
}

impl Runner {
    fn new(config: &ExperimentConfig, grid_value: f64) -> Result<Self> {
        Ok(match config.model {
            ModelSpec::Toy => Runner::Toy(ToyChain::new(
                ToyModel::new(grid_value)?,
                config.schedule,
                config.update_rule,
            )),
            ModelSpec::Landscape {
                half_width,
                strata,
                upsilon,
            } => Runner::Walker(Walker2d::new(
                Landscape::new(grid_value, half_width, strata, upsilon)?,
                config.schedule,
                config.update_rule,
                START,
            )?),
        })
    }

    fn steps(&self) -> u64 {
        match self {
            Runner::Toy(c) => c.step_index(),
            Runner::Walker(w) => w.step_index(),
        }
    }

    /// Leg `j` (0-based): even legs go left to right.
    fn leg<R: rand::Rng>(&mut self, j: usize, cap: u64, rng: &mut R) -> Result<u64> {
        let forward = j.is_multiple_of(2);
        match self {
            Runner::Toy(c) => c.run_until(if forward { 2 } else { 0 }, cap, rng),
            Runner::Walker(w) => w.run_until_cross(forward, cap, rng),
        }
    }
}

/// Runs one replica through `config.exits` successive exits.
pub fn run_replica(config: &ExperimentConfig, grid_index: usize, replica: usize) -> Result<Vec<ExitRecord>> {
    let grid_value = config.grid[grid_index];
    let mut rng = replica_rng(config.seed, grid_index, replica);
    let mut runner = Runner::new(config, grid_value)?;
    let mut out = Vec::with_capacity(config.exits);
    for j in 0..config.exits {
        let start = runner.steps();
        match runner.leg(j, config.step_cap, &mut rng) {
            Ok(t) => out.push(ExitRecord {
                exit_time: t,
                capped: false,
            }),
            Err(Error::ExitNotReached { .. }) => {
                out.push(ExitRecord {
                    exit_time: runner.steps() - start,
                    capped: true,
                });
                out.resize(
                    config.exits,
                    ExitRecord {
                        exit_time: 0,
                        capped: true,
                    },
                );
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Runs every (grid point, replica) pair in parallel. Output order and values
/// depend only on the config.
pub fn run_grid(config: &ExperimentConfig) -> Result<GridRun> {
    config.validate()?;
    let m = config.replicas;
    let jobs: Vec<(usize, usize)> = (0..config.grid.len())
        .flat_map(|g| (0..m).map(move |r| (g, r)))
        .collect();
    let results: Vec<Vec<ExitRecord>> = jobs
        .par_iter()
        .map(|&(g, r)| run_replica(config, g, r))
        .collect::<Result<_>>()?;

    let series = (0..config.exits)
        .map(|j| ExitSeries {
            exit_index: j + 1,
            grid: config.grid.clone(),
            records: results.chunks(m).map(|chunk| chunk.iter().map(|rec| rec[j]).collect()).collect(),
        })
        .collect();
    Ok(GridRun {
        config: config.clone(),
        series,
    })
}

/// Survival-curve abscissae `c = 0, 0.25, ..., 6`.
pub fn default_survival_grid() -> Vec<f64> {
    (0..=24).map(|k| k as f64 * 0.25).collect()
}

/// `(c, P(scale * T > c))` for each `c` in `grid`.
pub fn survival_curve(samples: &[u64], scale: f64, grid: &[f64]) -> Vec<(f64, f64)> {
    let mut x: Vec<f64> = samples.iter().map(|&t| t as f64 * scale).collect();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    grid.iter()
        .map(|&c| {
            let below = x.partition_point(|&v| v <= c);
            (c, (x.len() - below) as f64 / n)
        })
        .collect()
}

/// Two-sided Kolmogorov-Smirnov distance between the empirical law of `x` and
/// the unit exponential.
pub fn ks_to_exp1(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let f = if xi > 0.0 { -(-xi).exp_m1() } else { 0.0 };
            let hi = (i + 1) as f64 / n - f;
            let lo = f - i as f64 / n;
            hi.max(lo)
        })
        .fold(0.0, f64::max)
}

/// Raw and summary file names for exit `j` (1-based) of `k`.
pub fn output_file_names(j: usize, k: usize) -> (String, String) {
    if k == 1 {
        ("raw.csv".into(), "summary.csv".into())
    } else {
        (format!("raw_exit{j}.csv"), format!("summary_exit{j}.csv"))
    }
}

pub fn write_raw_csv(path: &Path, series: &ExitSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (&grid_value, recs) in series.grid.iter().zip(&series.records) {
        for (replica, rec) in recs.iter().enumerate() {
            w.serialize(RawRow {
                grid_value,
                replica,
                exit_time: rec.exit_time,
                capped: rec.capped,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, summaries: &[ExitSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in summaries {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<ExitSummary>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub grid_value: f64,
    pub replica: usize,
    pub exit_time: u64,
    #[serde(with = "flag")]
    pub capped: bool,
}

mod flag {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(D::Error::custom(format!("capped flag must be 0 or 1, got {v}"))),
        }
    }
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Per grid value, in order of first appearance: `(grid_value, mean)` over
/// uncapped rows. Grid values with no uncapped row are skipped.
pub fn raw_means(rows: &[RawRow]) -> Vec<(f64, f64)> {
    let mut acc: Vec<(f64, f64, usize)> = Vec::new();
    for r in rows.iter().filter(|r| !r.capped) {
        match acc.iter_mut().find(|a| a.0 == r.grid_value) {
            Some(a) => {
                a.1 += r.exit_time as f64;
                a.2 += 1;
            }
            None => acc.push((r.grid_value, r.exit_time as f64, 1)),
        }
    }
    acc.into_iter().map(|(g, s, n)| (g, s / n as f64)).collect()
}

/// Writes raw and summary CSVs for every exit index into `dir`, returning the
/// created paths.
pub fn write_outputs(run: &GridRun, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let k = run.series.len();
    let mut created = Vec::new();
    for s in &run.series {
        let (raw, summary) = output_file_names(s.exit_index, k);
        let raw = dir.join(raw);
        write_raw_csv(&raw, s)?;
        created.push(raw);
        let summary = dir.join(summary);
        write_summary_csv(&summary, &s.summaries())?;
        created.push(summary);
    }
    Ok(created)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub library_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(config: ExperimentConfig, started: SystemTime, outputs: &[PathBuf]) -> Self {
        let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            config,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: secs(started),
            finished_unix: secs(SystemTime::now()),
            outputs: outputs
                .iter()
                .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
                .collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy_config(grid: Vec<f64>, replicas: usize) -> ExperimentConfig {
        ExperimentConfig::new(ModelSpec::Toy, grid, StepSchedule::frozen(), replicas, 7)
    }

    #[test]
    fn summary_of_known_sample() {
        let recs: Vec<ExitRecord> = [3u64, 1, 4, 1, 5, 9, 2, 6, 5, 3]
            .iter()
            .map(|&t| ExitRecord {
                exit_time: t,
                capped: false,
            })
            .chain(std::iter::once(ExitRecord {
                exit_time: 100,
                capped: true,
            }))
            .collect();
        let s = summarize(0.5, &recs);
        assert_eq!(s.m_effective, 10);
        assert_eq!(s.capped_count, 1);
        assert_relative_eq!(s.mean, 3.9);
        assert_relative_eq!(s.median, 3.5);
        assert_relative_eq!(s.q10, 1.0);
        assert_relative_eq!(s.q90, 6.3, epsilon = 1e-12);
        assert_relative_eq!(s.stderr, (54.9f64 / 9.0).sqrt() / 10f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn all_capped_summary_is_nan() {
        let s = summarize(
            1.0,
            &[ExitRecord {
                exit_time: 5,
                capped: true,
            }],
        );
        assert_eq!(s.m_effective, 0);
        assert!(s.mean.is_nan() && s.median.is_nan());
    }

    #[test]
    fn run_grid_is_deterministic_and_ordered() {
        let cfg = toy_config(vec![0.3, 0.1], 50);
        let a = run_grid(&cfg).unwrap();
        let b = run_grid(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.series[0].records.len(), 2);
        assert_eq!(a.series[0].records[1].len(), 50);
        let single = run_replica(&cfg, 1, 17).unwrap();
        assert_eq!(single[0], a.series[0].records[1][17]);
    }

    #[test]
    fn cap_flags_instead_of_failing() {
        let mut cfg = toy_config(vec![0.001], 20);
        cfg.step_cap = 10;
        cfg.exits = 3;
        let run = run_grid(&cfg).unwrap();
        let first = &run.series[0].records[0];
        assert!(first.iter().all(|r| r.capped && r.exit_time == 10));
        assert!(run.series[2].records[0].iter().all(|r| r.capped && r.exit_time == 0));
        let s = &run.series[0].summaries()[0];
        assert_eq!(s.capped_count, 20);
    }

    #[test]
    fn validation() {
        assert!(toy_config(vec![], 5).validate().is_err());
        assert!(toy_config(vec![1.5], 5).validate().is_err());
        assert!(toy_config(vec![0.5], 0).validate().is_err());
        let cfg = ExperimentConfig::new(ModelSpec::landscape_defaults(), vec![-1.0], StepSchedule::frozen(), 5, 0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn survival_and_ks() {
        let s = survival_curve(&[1, 2, 3, 4], 1.0, &[0.0, 2.0, 4.0]);
        assert_eq!(s, vec![(0.0, 1.0), (2.0, 0.5), (4.0, 0.0)]);
        assert_eq!(default_survival_grid().len(), 25);
        // Exact exponential quantiles sit at distance 1/(2n) after the midpoint shift.
        let n = 1000;
        let x: Vec<f64> = (0..n).map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln()).collect();
        assert_relative_eq!(ks_to_exp1(&x), 0.5 / n as f64, epsilon = 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let mut cfg = toy_config(vec![0.5, 0.2], 30);
        cfg.step_cap = 40;
        let run = run_grid(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_outputs(&run, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let text = fs::read_to_string(&files[0]).unwrap();
        assert!(text.starts_with("grid_value,replica,exit_time,capped\n0.5,0,"));
        let rows = read_raw_csv(&files[0]).unwrap();
        assert_eq!(rows.len(), 60);
        let summaries = read_summary_csv(&files[1]).unwrap();
        assert_eq!(summaries, run.series[0].summaries());
        let means = raw_means(&rows);
        for (m, s) in means.iter().zip(&summaries) {
            assert_eq!(m.0, s.grid_value);
            assert!((m.1 - s.mean).abs() < 1e-9 * s.mean);
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let mut cfg = ExperimentConfig::new(
            ModelSpec::landscape_defaults(),
            vec![3.0, 4.0],
            StepSchedule::new(1.0, 0.6).unwrap(),
            10,
            3,
        );
        cfg.exits = 4;
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), cfg);
    }
}
