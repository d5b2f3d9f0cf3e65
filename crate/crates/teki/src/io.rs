//! Plain-text file formats. Every float is written with 17 significant
//! digits so values survive a round trip exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use teki_core::field::{CovarianceSpec, GridField, SpectralField};
use teki_core::flow::{MetricsRow, TrajectoryPoint};
use teki_core::ObsVector;

use crate::error::{io_err, Error, Result};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(what: &'static str, line: usize, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|e| Error::Parse { what, line, msg: format!("`{s}`: {e}") })
}

fn parse_usize(what: &'static str, line: usize, s: &str) -> Result<usize> {
    s.trim().parse().map_err(|e| Error::Parse { what, line, msg: format!("`{s}`: {e}") })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

/// Header `n=<int>`, then one row per `x2` index with `n+1` comma-separated
/// values along `x1`.
pub fn write_grid<W: Write>(w: &mut W, g: &GridField) -> std::io::Result<()> {
    writeln!(w, "n={}", g.n())?;
    for row in g.values().chunks(g.n() + 1) {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_grid<R: BufRead>(r: R) -> Result<GridField> {
    const WHAT: &str = "grid field";
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse { what: WHAT, line: 1, msg: "empty file".into() })?;
    let header = header.map_err(|e| Error::Parse { what: WHAT, line: 1, msg: e.to_string() })?;
    let n = header
        .trim()
        .strip_prefix("n=")
        .ok_or(Error::Parse { what: WHAT, line: 1, msg: "expected `n=<int>` header".into() })?;
    let n = parse_usize(WHAT, 1, n)?;
    let mut values = Vec::with_capacity((n + 1) * (n + 1));
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::Parse { what: WHAT, line: idx + 1, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line.split(',').map(|s| parse_f64(WHAT, idx + 1, s)).collect::<Result<Vec<_>>>()?;
        if row.len() != n + 1 {
            return Err(Error::Parse { what: WHAT, line: idx + 1, msg: format!("expected {} values", n + 1) });
        }
        values.extend(row);
    }
    Ok(GridField::new(n, values)?)
}

pub fn save_grid(path: &Path, g: &GridField) -> Result<()> {
    let mut w = create(path)?;
    write_grid(&mut w, g).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn load_grid(path: &Path) -> Result<GridField> {
    read_grid(open(path)?)
}

/// One value per line.
pub fn write_obs<W: Write>(w: &mut W, y: &[f64]) -> std::io::Result<()> {
    for v in y {
        writeln!(w, "{}", fmt_f64(*v))?;
    }
    Ok(())
}

pub fn read_obs<R: BufRead>(r: R) -> Result<ObsVector> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { what: "observations", line: idx + 1, msg: e.to_string() })?;
        if !line.trim().is_empty() {
            out.push(parse_f64("observations", idx + 1, &line)?);
        }
    }
    Ok(ObsVector::new(out)?)
}

pub fn save_obs(path: &Path, y: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    write_obs(&mut w, y).and_then(|_| w.flush()).map_err(io_err(path))
}

pub const METRICS_HEADER: &str = "iter,t,h,rel_error,misfit,noise_level,cov_norm,loss";

pub fn write_metrics<W: Write>(w: &mut W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.iter,
            fmt_f64(r.t),
            fmt_f64(r.h),
            fmt_f64(r.rel_error),
            fmt_f64(r.misfit),
            fmt_f64(r.noise_level),
            fmt_f64(r.cov_norm),
            fmt_f64(r.loss)
        )?;
    }
    Ok(())
}

pub fn save_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = create(path)?;
    write_metrics(&mut w, rows).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Parsed `metrics.csv` row; the per-member misfits are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLine {
    pub iter: usize,
    pub values: [f64; 7],
}

pub fn read_metrics<R: BufRead>(r: R) -> Result<Vec<MetricsLine>> {
    const WHAT: &str = "metrics";
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { what: WHAT, line: idx + 1, msg: e.to_string() })?;
        if idx == 0 {
            if line.trim() != METRICS_HEADER {
                return Err(Error::Parse { what: WHAT, line: 1, msg: "unexpected header".into() });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse { what: WHAT, line: idx + 1, msg: "expected 8 columns".into() });
        }
        let mut values = [0.0; 7];
        for (v, s) in values.iter_mut().zip(&fields[1..]) {
            *v = parse_f64(WHAT, idx + 1, s)?;
        }
        out.push(MetricsLine { iter: parse_usize(WHAT, idx + 1, fields[0])?, values });
    }
    Ok(out)
}

/// `iter,t,member,c0,...`: spectral coefficients of every member at every
/// recorded iteration.
pub fn write_trajectory<W: Write>(w: &mut W, points: &[TrajectoryPoint]) -> std::io::Result<()> {
    let modes = points.first().and_then(|p| p.members.first()).map_or(0, |u| u.coeffs().len());
    let mut header = String::from("iter,t,member");
    for k in 0..modes {
        header.push_str(&format!(",c{k}"));
    }
    writeln!(w, "{header}")?;
    for p in points {
        for (j, u) in p.members.iter().enumerate() {
            write!(w, "{},{},{}", p.iter, fmt_f64(p.t), j)?;
            for c in u.coeffs() {
                write!(w, ",{}", fmt_f64(*c))?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn save_trajectory(path: &Path, points: &[TrajectoryPoint]) -> Result<()> {
    let mut w = create(path)?;
    write_trajectory(&mut w, points).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn read_trajectory<R: BufRead>(r: R, spec: CovarianceSpec) -> Result<Vec<TrajectoryPoint>> {
    const WHAT: &str = "trajectory";
    let mut out: Vec<TrajectoryPoint> = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { what: WHAT, line: idx + 1, msg: e.to_string() })?;
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 + spec.modes() {
            return Err(Error::Parse { what: WHAT, line: idx + 1, msg: format!("expected {} columns", 3 + spec.modes()) });
        }
        let iter = parse_usize(WHAT, idx + 1, fields[0])?;
        let t = parse_f64(WHAT, idx + 1, fields[1])?;
        let coeffs = fields[3..].iter().map(|s| parse_f64(WHAT, idx + 1, s)).collect::<Result<Vec<_>>>()?;
        let u = SpectralField::new(spec, coeffs)?;
        match out.last_mut() {
            Some(p) if p.iter == iter => p.members.push(u),
            _ => out.push(TrajectoryPoint { iter, t, members: vec![u] }),
        }
    }
    Ok(out)
}

pub fn load_trajectory(path: &Path, spec: CovarianceSpec) -> Result<Vec<TrajectoryPoint>> {
    read_trajectory(open(path)?, spec)
}

/// Ordered `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces an existing key in place, otherwise appends.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(Error::Parse { what: "manifest", line: idx + 1, msg: "expected key=value".into() })?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }
}
