//! CSV time series, CSV grid snapshots and their JSON metadata sidecars.
//!
//! Floating point values are written with 17 significant digits so every
//! `f64` survives a write/read round trip unchanged.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::grid::{Domain, Grid2D};
use crate::model::FieldState;

pub const SERIES_HEADER: [&str; 9] = [
    "t",
    "phi_max",
    "psi_max",
    "origin_dev",
    "energy",
    "energy_rel",
    "delta_e",
    "s",
    "min_w",
];

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn record_fields(r: &DiagnosticsRecord) -> [String; 9] {
    [
        fmt_f64(r.t),
        fmt_f64(r.phi_max),
        fmt_f64(r.psi_max),
        fmt_f64(r.origin_dev),
        fmt_f64(r.energy),
        fmt_f64(r.energy_rel),
        fmt_f64(r.delta_e),
        r.s.map(fmt_f64).unwrap_or_default(),
        fmt_f64(r.min_w),
    ]
}

pub fn write_series_to<W: Write>(out: W, records: &[DiagnosticsRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SERIES_HEADER)?;
    for r in records {
        w.write_record(record_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_series_to(file, records).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_series_from<R: std::io::Read>(input: R) -> std::result::Result<Vec<DiagnosticsRecord>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(SERIES_HEADER.iter().copied()) {
        return Err(format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let num = |i: usize| -> std::result::Result<f64, String> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| format!("row {}: cannot parse `{}` in column {}", row + 1, &rec[i], SERIES_HEADER[i]))
        };
        let s = if rec[7].trim().is_empty() { None } else { Some(num(7)?) };
        out.push(DiagnosticsRecord {
            t: num(0)?,
            phi_max: num(1)?,
            psi_max: num(2)?,
            origin_dev: num(3)?,
            energy: num(4)?,
            energy_rel: num(5)?,
            delta_e: num(6)?,
            s,
            min_w: num(8)?,
        });
    }
    Ok(out)
}

pub fn read_series(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_series_from(file).map_err(|msg| Error::Invalid(format!("{}: {msg}", path.display())))
}

/// Two runs of the same configuration side by side. Rows are paired by
/// index; both series must come from the same step plan.
pub fn write_comparison(path: &Path, rk4: &[DiagnosticsRecord], rattle: &[DiagnosticsRecord]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["t".to_string()];
    for prefix in ["rk4", "rattle"] {
        header.extend(SERIES_HEADER[1..].iter().map(|c| format!("{prefix}_{c}")));
        header.push(format!("{prefix}_energy_corr"));
    }
    w.write_record(&header).map_err(csv_err)?;
    for (a, b) in rk4.iter().zip(rattle) {
        let mut row = vec![fmt_f64(a.t)];
        for r in [a, b] {
            row.extend(record_fields(r).into_iter().skip(1));
            row.push(fmt_f64(r.corrected_energy()));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub domain: Domain,
    pub n: usize,
    pub h: f64,
    pub x_min: f64,
}

impl From<&Grid2D> for GridMeta {
    fn from(g: &Grid2D) -> Self {
        GridMeta {
            domain: g.domain(),
            n: g.n(),
            h: g.h(),
            x_min: g.x_min(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub time: f64,
    pub grid: GridMeta,
    pub config: RunConfig,
    /// Field name to CSV file name, relative to the sidecar.
    pub files: Vec<(String, String)>,
}

pub const FIELD_NAMES: [&str; 6] = ["u", "v", "w", "ut", "vt", "wt"];

/// Writes one CSV per field (interior nodes, one row per `y`) and a JSON
/// sidecar. Returns the sidecar path.
pub fn write_snapshot(
    dir: &Path,
    tag: &str,
    state: &FieldState,
    grid: &Grid2D,
    config: &RunConfig,
) -> Result<PathBuf> {
    let mut files = Vec::new();
    for (name, field) in FIELD_NAMES.iter().zip(state.pos.iter().chain(state.vel.iter())) {
        let file_name = format!("{tag}_{name}.csv");
        let path = dir.join(&file_name);
        let csv_err = |source| Error::Csv {
            path: path.clone(),
            source,
        };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        for k in 0..grid.n() {
            let row: Vec<String> = (0..grid.n()).map(|i| fmt_f64(field.get(grid, i, k))).collect();
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        files.push((name.to_string(), file_name));
    }
    let meta = SnapshotMeta {
        time: state.time,
        grid: grid.into(),
        config: config.clone(),
        files,
    };
    let path = dir.join(format!("{tag}.json"));
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(file, &meta).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Reads a snapshot back from its sidecar.
pub fn read_snapshot(sidecar: &Path) -> Result<(SnapshotMeta, FieldState)> {
    let file = File::open(sidecar).map_err(|e| Error::io(sidecar, e))?;
    let meta: SnapshotMeta = serde_json::from_reader(file).map_err(|source| Error::Json {
        path: sidecar.to_path_buf(),
        source,
    })?;
    let grid = Grid2D::new(meta.grid.domain, meta.grid.n)?;
    let dir = sidecar.parent().unwrap_or(Path::new("."));
    let mut state = FieldState::zeros(&grid);
    state.time = meta.time;
    for (name, file_name) in &meta.files {
        let slot = FIELD_NAMES
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::Invalid(format!("unknown field `{name}` in {}", sidecar.display())))?;
        let field = if slot < 3 { &mut state.pos[slot] } else { &mut state.vel[slot - 3] };
        let path = dir.join(file_name);
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(&path)
            .map_err(|source| Error::Csv { path: path.clone(), source })?;
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|source| Error::Csv { path: path.clone(), source })?;
            for (i, v) in rec.iter().enumerate() {
                let v: f64 = v
                    .parse()
                    .map_err(|_| Error::Invalid(format!("{}: bad value `{v}`", path.display())))?;
                field.set(&grid, i, k, v);
            }
        }
    }
    state.fill_ghosts(&grid);
    Ok((meta, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn any_finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |x| x.is_finite()),
            -1e3..1e3f64,
        ]
    }

    prop_compose! {
        fn any_record()(
            t in any_finite(), phi in any_finite(), psi in any_finite(), od in any_finite(),
            e in any_finite(), er in any_finite(), de in any_finite(),
            s in proptest::option::of(any_finite()), mw in any_finite(),
        ) -> DiagnosticsRecord {
            DiagnosticsRecord { t, phi_max: phi, psi_max: psi, origin_dev: od, energy: e,
                energy_rel: er, delta_e: de, s, min_w: mw }
        }
    }

    proptest! {
        #[test]
        fn series_round_trip(records in proptest::collection::vec(any_record(), 0..8)) {
            let mut buf = Vec::new();
            write_series_to(&mut buf, &records).unwrap();
            let back = read_series_from(buf.as_slice()).unwrap();
            prop_assert_eq!(back, records);
        }
    }

    #[test]
    fn empty_series_is_header_only() {
        let mut buf = Vec::new();
        write_series_to(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", SERIES_HEADER.join(",")));
    }

    #[test]
    fn one_record_one_row() {
        let r = DiagnosticsRecord {
            t: 0.0,
            phi_max: 0.0,
            psi_max: 0.0,
            origin_dev: 0.0,
            energy: 1.5,
            energy_rel: 0.0,
            delta_e: 0.0,
            s: None,
            min_w: -0.25,
        };
        let mut buf = Vec::new();
        write_series_to(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split(',').nth(4).unwrap(), "1.5000000000000000e0");
        assert_eq!(lines[1].split(',').nth(7).unwrap(), "");
    }
}
