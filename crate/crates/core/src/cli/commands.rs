//! Subcommand bodies. Each returns a printable summary; the binary maps
//! errors and failed runs to a nonzero exit status.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{self, CriticalSearchResult, FitResult};
use crate::config::{Method, RunConfig};
use crate::diagnostics;
use crate::error::{Error, Result};
use crate::integrate::{self, RunRecord, RunStatus};
use crate::model::{self, Pole};

use super::output;

pub const SERIES_FILE: &str = "series.csv";
pub const COMPARE_FILE: &str = "compare.csv";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub method: Method,
    pub status: RunStatus,
    pub failure: Option<(f64, String)>,
    pub t: f64,
    pub steps: usize,
    pub dt: f64,
    pub last: diagnostics::DiagnosticsRecord,
    pub min_w: f64,
    pub series_path: Option<PathBuf>,
    pub snapshot_paths: Vec<PathBuf>,
}

impl RunSummary {
    pub fn is_success(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.last;
        write!(
            f,
            "{} status={:?} t={} steps={} dt={:e} phi_max={:e} psi_max={:e} energy={:e} energy_rel={:e} delta_e={:e} min_w={}",
            self.method, self.status, self.t, self.steps, self.dt, l.phi_max, l.psi_max, l.energy, l.energy_rel,
            l.delta_e, self.min_w
        )?;
        if let Some(s) = l.s {
            write!(f, " s={s:e}")?;
        }
        if let Some((t, msg)) = &self.failure {
            write!(f, " failed_at={t} ({msg})")?;
        }
        if let Some(p) = &self.series_path {
            write!(f, " series={}", p.display())?;
        }
        Ok(())
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn summarize(config: &RunConfig, record: &RunRecord) -> RunSummary {
    RunSummary {
        method: config.method,
        status: record.status,
        failure: record.failure.clone(),
        t: record.final_state.time,
        steps: record.steps,
        dt: record.dt,
        last: *record.samples.last().expect("at least the initial sample"),
        min_w: record.global_min_w().map_or(f64::NAN, |r| r.min_w),
        series_path: None,
        snapshot_paths: Vec::new(),
    }
}

/// Runs one evolution and writes the series, the config echo and any
/// snapshots to `config.out` when set.
pub fn run(config: &RunConfig) -> Result<(RunSummary, RunRecord)> {
    config.validate()?;
    let grid = config.grid()?;
    let record = integrate::evolve(config, &grid)?;
    let mut summary = summarize(config, &record);
    if let Some(dir) = &config.out {
        ensure_dir(dir)?;
        let cfg_path = dir.join(CONFIG_FILE);
        fs::write(&cfg_path, config.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
        let series = dir.join(SERIES_FILE);
        output::write_series(&series, &record.samples)?;
        summary.series_path = Some(series);
        for (j, snap) in record.snapshots.iter().enumerate() {
            let tag = format!("snapshot_{j:03}");
            summary
                .snapshot_paths
                .push(output::write_snapshot(dir, &tag, snap, &grid, config)?);
        }
    }
    Ok((summary, record))
}

/// Runs RK4 and Rattle on the same configuration. Each method's series goes
/// to `out/<method>/`, the merged table to `out/compare.csv`.
pub fn compare(config: &RunConfig) -> Result<[RunSummary; 2]> {
    let mut results = Vec::with_capacity(2);
    for method in [Method::Rk4, Method::Rattle] {
        let mut cfg = config.clone().with_method(method);
        cfg.out = config.out.as_ref().map(|d| d.join(method.to_string()));
        results.push(run(&cfg)?);
    }
    if let Some(dir) = &config.out {
        output::write_comparison(&dir.join(COMPARE_FILE), &results[0].1.samples, &results[1].1.samples)?;
    }
    let mut it = results.into_iter().map(|(s, _)| s);
    Ok([it.next().unwrap(), it.next().unwrap()])
}

pub fn critical_search(config: &RunConfig, a_lo: f64, a_hi: f64, tol_a: f64) -> Result<CriticalSearchResult> {
    config.validate()?;
    let result = analysis::critical_search_runs(config, a_lo, a_hi, tol_a)?;
    if let Some(dir) = &config.out {
        ensure_dir(dir)?;
        let path = dir.join("critical_search.json");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::to_writer_pretty(file, &result).map_err(|source| Error::Json { path, source })?;
    }
    Ok(result)
}

/// Fits the scaling law to the `s` column of a series file.
pub fn fit_scaling(series: &Path, window: (f64, f64)) -> Result<FitResult> {
    let records = output::read_series(series)?;
    let points: Vec<(f64, f64)> = records.iter().filter_map(|r| r.s.map(|s| (r.t, s))).collect();
    analysis::fit_scaling(&points, window)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticCheck {
    pub t: f64,
    pub radius: f64,
    /// `max |w(t) - w(0)|` over the disk and over the sampled times.
    pub max_deviation: f64,
    pub status: RunStatus,
}

/// Samples per static check, evenly spaced in `(0, t_end]`.
const STATIC_CHECK_SAMPLES: usize = 10;

/// Evolves the static solution and reports how far `w` moved inside
/// `r <= radius`. The static solution is not compatible with the reflecting
/// outer boundary, so the disk should stay outside the region reached from
/// the boundary by `t_end`.
pub fn static_check(config: &RunConfig, radius: f64) -> Result<StaticCheck> {
    config.validate()?;
    let grid = config.grid()?;
    let initial = model::static_solution(&grid, Pole::South);
    let mut cfg = config.clone();
    cfg.energy_correction = false;
    cfg.snapshot_times = (1..=STATIC_CHECK_SAMPLES)
        .map(|j| config.t_end * j as f64 / STATIC_CHECK_SAMPLES as f64)
        .collect();
    let record = integrate::evolve_from(initial.clone(), &cfg, &grid)?;
    let max_deviation = record
        .snapshots
        .iter()
        .chain(std::iter::once(&record.final_state))
        .map(|s| diagnostics::max_deviation_in_disk(initial.w(), s.w(), &grid, radius))
        .fold(0.0, f64::max);
    Ok(StaticCheck {
        t: record.final_state.time,
        radius,
        max_deviation,
        status: record.status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;

    #[test]
    fn run_writes_series_and_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(0.2, 21).with_t_end(0.2);
        cfg.out = Some(dir.path().join("out"));
        cfg.snapshot_times = vec![0.1];
        let (summary, record) = run(&cfg).unwrap();
        assert!(summary.is_success());
        let back = output::read_series(summary.series_path.as_ref().unwrap()).unwrap();
        assert_eq!(back, record.samples);
        assert_eq!(summary.snapshot_paths.len(), 1);
        let (meta, state) = output::read_snapshot(&summary.snapshot_paths[0]).unwrap();
        assert_eq!(meta.config, cfg);
        let grid = cfg.grid().unwrap();
        for i in 0..21 {
            for k in 0..21 {
                assert_eq!(state.w().get(&grid, i, k), record.snapshots[0].w().get(&grid, i, k));
            }
        }
        let echoed = fs::read_to_string(dir.path().join("out").join(CONFIG_FILE)).unwrap();
        assert_eq!(crate::config::parse_config(&echoed).unwrap(), cfg);
    }

    #[test]
    fn unwritable_output_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let mut cfg = RunConfig::new(0.0, 11).with_t_end(0.05);
        cfg.out = Some(blocker.join("sub"));
        match run(&cfg) {
            Err(Error::Io { path, .. }) => assert_eq!(path, blocker.join("sub")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn compare_pairs_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(0.3, 21).with_t_end(0.1).with_domain(Domain::Quarter);
        cfg.out = Some(dir.path().to_path_buf());
        let [a, b] = compare(&cfg).unwrap();
        assert_eq!((a.method, b.method), (Method::Rk4, Method::Rattle));
        let text = fs::read_to_string(dir.path().join(COMPARE_FILE)).unwrap();
        assert_eq!(text.lines().count(), 1 + a.steps + 1);
    }
}
