//! Runs sweep points, optionally in parallel, and writes the results tree
//! `<out>/<sweep>/<point>/<seed>/metrics.csv` plus `<out>/<sweep>/summary.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::metrics::{export_csv, export_json, rows_for, MetricsError, ScenarioTags, SummaryRow};
use crate::model::{run, InvariantReport, RunResult, RunStats};
use crate::scenario::{Calibration, Scenario, SweepSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    /// Data-parallel over points; `None` uses all cores. Falls back to
    /// sequential when built without the `parallel` feature.
    Parallel(Option<usize>),
}

pub fn tags(s: &Scenario) -> ScenarioTags {
    ScenarioTags {
        scenario_id: s.id.clone(),
        load_pct: s.load_pct,
        slot_ms: s.slot_ms(),
        cgs_pct: s.cgs_fraction * 100.0,
        dl_fraction: s.dl_fraction,
        policy: s.policy.to_string(),
        seed: s.seed,
    }
}

/// What a finished point contributes to the results tree.
#[derive(Debug, Clone, Serialize)]
pub struct PointReport {
    pub scenario: Scenario,
    pub calibration: Calibration,
    pub invariants: InvariantReport,
    pub stats: RunStats,
    #[serde(skip)]
    pub rows: Vec<SummaryRow>,
}

impl From<RunResult> for PointReport {
    fn from(r: RunResult) -> Self {
        PointReport {
            rows: rows_for(&tags(&r.scenario), &r.metrics),
            scenario: r.scenario,
            calibration: r.calibration,
            invariants: r.invariants,
            stats: r.stats,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub scenario: Scenario,
    pub result: Result<PointReport, String>,
}

fn run_one(s: &Scenario) -> PointOutcome {
    PointOutcome {
        scenario: s.clone(),
        result: run(s).map(PointReport::from).map_err(|e| e.to_string()),
    }
}

pub fn run_points_sequential(points: &[Scenario]) -> Vec<PointOutcome> {
    points.iter().map(run_one).collect()
}

#[cfg(feature = "parallel")]
pub fn run_points_parallel(points: &[Scenario], threads: Option<usize>) -> Vec<PointOutcome> {
    use rayon::prelude::*;
    let go = || points.par_iter().map(run_one).collect();
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(go),
            Err(_) => go(),
        },
        None => go(),
    }
}

/// Runs every point; results come back in input order either way.
pub fn run_points(points: &[Scenario], exec: Execution) -> Vec<PointOutcome> {
    match exec {
        Execution::Sequential => run_points_sequential(points),
        #[cfg(feature = "parallel")]
        Execution::Parallel(threads) => run_points_parallel(points, threads),
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel(_) => run_points_sequential(points),
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub name: String,
    pub outcomes: Vec<PointOutcome>,
}

impl SweepReport {
    pub fn rows(&self) -> Vec<SummaryRow> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().ok())
            .flat_map(|r| r.rows.iter().cloned())
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = (&Scenario, &str)> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().err().map(|e| (&o.scenario, e.as_str())))
    }
}

pub fn run_sweep(spec: &SweepSpec, exec: Execution) -> SweepReport {
    SweepReport {
        name: spec.name.clone(),
        outcomes: run_points(&spec.points(), exec),
    }
}

pub fn point_dir(root: &Path, sweep: &str, s: &Scenario) -> PathBuf {
    root.join(sweep).join(&s.id).join(s.seed.to_string())
}

/// Writes per-point metrics and run metadata, the merged summary, and a
/// list of failed points if any. Returns the sweep directory.
pub fn write_report(root: &Path, report: &SweepReport, json: bool) -> Result<PathBuf, MetricsError> {
    let dir = root.join(&report.name);
    fs::create_dir_all(&dir)?;
    let mut failures = String::new();
    for o in &report.outcomes {
        let pdir = point_dir(root, &report.name, &o.scenario);
        fs::create_dir_all(&pdir)?;
        match &o.result {
            Ok(r) => {
                export_csv(&pdir.join("metrics.csv"), &r.rows)?;
                if json {
                    export_json(&pdir.join("metrics.json"), &r.rows)?;
                }
                let meta = serde_json::to_string_pretty(r)?;
                fs::write(pdir.join("run.json"), meta + "\n")?;
            }
            Err(e) => {
                failures.push_str(&format!("{} seed {}: {e}\n", o.scenario.id, o.scenario.seed));
            }
        }
    }
    export_csv(&dir.join("summary.csv"), &report.rows())?;
    let fail_path = dir.join("failures.txt");
    if failures.is_empty() {
        if fail_path.exists() {
            fs::remove_file(fail_path)?;
        }
    } else {
        fs::write(fail_path, failures)?;
    }
    Ok(dir)
}
