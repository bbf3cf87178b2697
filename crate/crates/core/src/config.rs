//! Run parameters and the flat `key = value` configuration format.
//!
//! ```text
//! # comment
//! amplitude = 0.4
//! grid_n = 161
//! method = rattle
//! ```
//!
//! `A` and `N` are accepted as aliases for `amplitude` and `grid_n`; dashes in
//! keys are treated as underscores. Unknown keys are rejected.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, Grid2D};
use crate::model::InitialDataParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Rattle,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rk4" => Ok(Method::Rk4),
            "rattle" | "rtl" => Ok(Method::Rattle),
            other => Err(Error::config("method", format!("unknown method `{other}`"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Rk4 => "rk4",
            Method::Rattle => "rattle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub amplitude: f64,
    pub r1: f64,
    pub r2: f64,
    /// Exponent of the initial bump.
    pub n: u32,
    /// Interior nodes per axis.
    pub grid_n: usize,
    pub domain: Domain,
    pub method: Method,
    pub cfl: f64,
    pub t_end: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Steps between diagnostic samples. The first and last step are
    /// always sampled.
    pub sample_stride: usize,
    pub snapshot_times: Vec<f64>,
    /// Output directory for series and snapshots.
    pub out: Option<PathBuf>,
    /// Accumulate the constraint-violation energy correction.
    pub energy_correction: bool,
    /// Include the `-lambda phi` term in the energy density.
    pub energy_lambda_phi: bool,
    /// End the run early once `w < 0` at the origin or at its nearest node.
    pub stop_on_flip: bool,
}

const KEYS: &[&str] = &[
    "amplitude",
    "r1",
    "r2",
    "n",
    "grid_n",
    "domain",
    "method",
    "cfl",
    "t_end",
    "tol",
    "max_iter",
    "sample_stride",
    "snapshot_times",
    "out",
    "energy_correction",
    "energy_lambda_phi",
    "stop_on_flip",
];

impl RunConfig {
    /// Defaults for everything except the two required parameters.
    pub fn new(amplitude: f64, grid_n: usize) -> Self {
        RunConfig {
            amplitude,
            r1: 0.5,
            r2: 1.0,
            n: 4,
            grid_n,
            domain: Domain::Full,
            method: Method::Rattle,
            cfl: 0.2,
            t_end: 1.6,
            tol: 1e-12,
            max_iter: 100,
            sample_stride: 1,
            snapshot_times: Vec::new(),
            out: None,
            energy_correction: true,
            energy_lambda_phi: true,
            stop_on_flip: false,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn initial_data(&self) -> InitialDataParams {
        InitialDataParams {
            amplitude: self.amplitude,
            r1: self.r1,
            r2: self.r2,
            n: self.n,
        }
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.domain, self.grid_n)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.initial_data().validate()?;
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive and finite, got {v}")))
            }
        };
        positive("cfl", self.cfl)?;
        positive("t_end", self.t_end)?;
        positive("tol", self.tol)?;
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be positive"));
        }
        if self.sample_stride == 0 {
            return Err(Error::config("sample_stride", "must be positive"));
        }
        if self
            .snapshot_times
            .iter()
            .any(|&t| !(0.0..=self.t_end).contains(&t))
        {
            return Err(Error::config("snapshot_times", "times must lie in [0, t_end]"));
        }
        Ok(())
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let key = canonical_key(key)
            .ok_or_else(|| Error::config(key, "unknown key"))?;
        let value = value.trim();
        match key {
            "amplitude" => self.amplitude = parse_num(key, value)?,
            "r1" => self.r1 = parse_num(key, value)?,
            "r2" => self.r2 = parse_num(key, value)?,
            "n" => self.n = parse_num(key, value)?,
            "grid_n" => self.grid_n = parse_num(key, value)?,
            "domain" => self.domain = value.parse()?,
            "method" => self.method = value.parse()?,
            "cfl" => self.cfl = parse_num(key, value)?,
            "t_end" => self.t_end = parse_num(key, value)?,
            "tol" => self.tol = parse_num(key, value)?,
            "max_iter" => self.max_iter = parse_num(key, value)?,
            "sample_stride" => self.sample_stride = parse_num(key, value)?,
            "snapshot_times" => {
                self.snapshot_times = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num(key, s))
                    .collect::<Result<_>>()?
            }
            "out" => self.out = (!value.is_empty()).then(|| PathBuf::from(value)),
            "energy_correction" => self.energy_correction = parse_bool(key, value)?,
            "energy_lambda_phi" => self.energy_lambda_phi = parse_bool(key, value)?,
            "stop_on_flip" => self.stop_on_flip = parse_bool(key, value)?,
            _ => unreachable!("canonical_key returned {key}"),
        }
        Ok(())
    }

    /// Serializes to the same flat format accepted by [`parse_config`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "amplitude = {:e}", self.amplitude);
        let _ = writeln!(s, "r1 = {:e}", self.r1);
        let _ = writeln!(s, "r2 = {:e}", self.r2);
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "grid_n = {}", self.grid_n);
        let _ = writeln!(s, "domain = {}", self.domain);
        let _ = writeln!(s, "method = {}", self.method);
        let _ = writeln!(s, "cfl = {:e}", self.cfl);
        let _ = writeln!(s, "t_end = {:e}", self.t_end);
        let _ = writeln!(s, "tol = {:e}", self.tol);
        let _ = writeln!(s, "max_iter = {}", self.max_iter);
        let _ = writeln!(s, "sample_stride = {}", self.sample_stride);
        let times: Vec<String> = self.snapshot_times.iter().map(|t| format!("{t:e}")).collect();
        let _ = writeln!(s, "snapshot_times = {}", times.join(","));
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", out.display());
        }
        let _ = writeln!(s, "energy_correction = {}", self.energy_correction);
        let _ = writeln!(s, "energy_lambda_phi = {}", self.energy_lambda_phi);
        let _ = writeln!(s, "stop_on_flip = {}", self.stop_on_flip);
        s
    }
}

fn canonical_key(key: &str) -> Option<&'static str> {
    let key = key.trim();
    match key {
        "A" => return Some("amplitude"),
        "N" => return Some("grid_n"),
        _ => {}
    }
    let normalized = key.replace('-', "_");
    KEYS.iter().copied().find(|k| *k == normalized)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("expected a boolean, got `{value}`"))),
    }
}

/// Parses a flat `key = value` document. `amplitude` and `grid_n` are
/// required; every other key falls back to its default.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::new(f64::NAN, 0);
    let mut seen_amplitude = false;
    let mut seen_grid = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: lineno + 1,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        cfg.set(key, value)?;
        match canonical_key(key) {
            Some("amplitude") => seen_amplitude = true,
            Some("grid_n") => seen_grid = true,
            _ => {}
        }
    }
    if !seen_amplitude {
        return Err(Error::config("amplitude", "required key missing"));
    }
    if !seen_grid {
        return Err(Error::config("grid_n", "required key missing"));
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_requires_amplitude_and_grid() {
        match parse_config("") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "amplitude"),
            other => panic!("unexpected {other:?}"),
        }
        match parse_config("A = 0.3") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "grid_n"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn minimal_document_takes_defaults() {
        let cfg = parse_config("A=0.4\nN=161\nmethod=rattle\n").unwrap();
        assert_eq!(cfg, RunConfig::new(0.4, 161));
        assert_eq!((cfg.r1, cfg.r2, cfg.n), (0.5, 1.0, 4));
        assert_eq!((cfg.cfl, cfg.t_end, cfg.tol, cfg.max_iter), (0.2, 1.6, 1e-12, 100));
    }

    #[test]
    fn even_grid_is_rejected() {
        match parse_config("A = 0.4\nN = 160") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "grid_n"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        match parse_config("A = 0.4\nN = 161\nspeed = 3") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "speed"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line() {
        assert!(matches!(
            parse_config("A = 0.4\nN 161"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn comments_dashes_and_lists() {
        let cfg = parse_config(
            "# run\namplitude = 0.5 # inline\ngrid-n = 81\ndomain = quarter\nt-end = 0.5\n\
             snapshot_times = 0.1, 0.25\nenergy_correction = off\n",
        )
        .unwrap();
        assert_eq!(cfg.domain, Domain::Quarter);
        assert_eq!(cfg.t_end, 0.5);
        assert_eq!(cfg.snapshot_times, vec![0.1, 0.25]);
        assert!(!cfg.energy_correction);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::new(0.81871172, 641)
            .with_domain(Domain::Quarter)
            .with_method(Method::Rk4);
        cfg.snapshot_times = vec![0.5, 0.919375];
        cfg.out = Some(PathBuf::from("/tmp/run"));
        cfg.cfl = 0.1;
        cfg.stop_on_flip = true;
        assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }
}
