//! On-disk layout of a run.
//!
//! ```text
//! <out>/manifest.json
//! <out>/delta{δ}_lmax{l}/meta.json
//! <out>/delta{δ}_lmax{l}/moments.csv
//! <out>/delta{δ}_lmax{l}/profile_t{T}.csv
//! <out>/delta{δ}_lmax{l}/collapse_t{T}.csv     (analyze)
//! <out>/analysis.json                          (analyze)
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use levywalk::analysis::PointData;
use levywalk::scaling::CollapsedProfile;
use levywalk::{EnsembleResult, ObservableSeries, ProbabilityProfile, RunConfig};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, CliResult};
use crate::manifest::Manifest;

/// Bumped whenever a file written here changes shape.
pub const SCHEMA_VERSION: u32 = 1;

pub const MOMENTS_HEADER: [&str; 9] = [
    "t",
    "mean_x",
    "stderr_x",
    "mean_x2",
    "stderr_x2",
    "range",
    "stderr_range",
    "entropy_mean_of_S",
    "entropy_of_mean_rho",
];
pub const PROFILE_HEADER: [&str; 3] = ["x", "f", "stderr"];
pub const COLLAPSE_HEADER: [&str; 2] = ["z", "g"];

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub convention: String,
    pub manifest: Manifest,
    pub point: RunConfig,
    pub master_seed: u64,
    /// Seed of each realization, by index.
    pub realization_seeds: Vec<u64>,
    pub step_pmf: Vec<f64>,
    pub empirical_step_pmf: Vec<f64>,
    pub step_pmf_distance: f64,
    pub wall_time_s: f64,
    pub threads: usize,
}

fn writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::config(format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: line {}: {e}", path.display(), e.line())))
}

pub fn write_moments(path: &Path, s: &ObservableSeries) -> CliResult<()> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(MOMENTS_HEADER).map_err(&err)?;
    for i in 0..s.len() {
        w.write_record([
            s.ts[i].to_string(),
            num(s.mean_x[i]),
            num(s.stderr_x[i]),
            num(s.mean_x2[i]),
            num(s.stderr_x2[i]),
            num(s.range[i]),
            num(s.stderr_range[i]),
            num(s.entropy[i]),
            num(s.entropy_of_mean_rho[i]),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_profile(path: &Path, p: &ProbabilityProfile) -> CliResult<()> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(PROFILE_HEADER).map_err(&err)?;
    for (i, (x, f)) in p.xs.iter().zip(&p.f).enumerate() {
        let e = p.stderr.as_ref().map_or(0.0, |s| s[i]);
        w.write_record([x.to_string(), num(*f), num(e)]).map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_collapse(path: &Path, c: &CollapsedProfile) -> CliResult<()> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(COLLAPSE_HEADER).map_err(&err)?;
    for (z, g) in c.zs.iter().zip(&c.gs) {
        w.write_record([num(*z), num(*g)]).map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a headed CSV, checking the header and converting each row.
/// Errors name the file and the 1-based line.
fn read_table<T>(
    path: &Path,
    header: &[&str],
    mut row: impl FnMut(&[&str]) -> std::result::Result<T, String>,
) -> CliResult<Vec<T>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let got = r.headers().map_err(csv_err(path))?;
    if got.iter().collect::<Vec<_>>() != header {
        return Err(CliError::config(format!(
            "{}: line 1: expected header {}, found {}",
            path.display(),
            header.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map_or(0, |p| p.line());
        let fields: Vec<&str> = rec.iter().collect();
        out.push(row(&fields).map_err(|e| CliError::config(format!("{}: line {line}: {e}", path.display())))?);
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(fields: &[&str], i: usize, name: &str) -> std::result::Result<T, String> {
    let raw = fields.get(i).ok_or_else(|| format!("missing column {name}"))?;
    raw.trim().parse().map_err(|_| format!("bad value '{raw}' in column {name}"))
}

pub fn read_moments(path: &Path) -> CliResult<ObservableSeries> {
    let rows = read_table(path, &MOMENTS_HEADER, |f| {
        let mut v = [0.0; 8];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = field(f, k + 1, MOMENTS_HEADER[k + 1])?;
        }
        Ok((field::<usize>(f, 0, "t")?, v))
    })?;
    let mut s = ObservableSeries::default();
    for (t, v) in rows {
        s.ts.push(t);
        s.mean_x.push(v[0]);
        s.stderr_x.push(v[1]);
        s.mean_x2.push(v[2]);
        s.stderr_x2.push(v[3]);
        s.range.push(v[4]);
        s.stderr_range.push(v[5]);
        s.entropy.push(v[6]);
        s.entropy_of_mean_rho.push(v[7]);
        s.stderr_entropy.push(0.0);
    }
    Ok(s)
}

pub fn read_profile(path: &Path, t: usize, n_realizations: usize) -> CliResult<ProbabilityProfile> {
    let rows = read_table(path, &PROFILE_HEADER, |f| {
        Ok((field::<i64>(f, 0, "x")?, field::<f64>(f, 1, "f")?, field::<f64>(f, 2, "stderr")?))
    })?;
    let mut p = ProbabilityProfile::new(t, Vec::new(), Vec::new());
    let mut errs = Vec::new();
    for (x, f, e) in rows {
        p.xs.push(x);
        p.f.push(f);
        errs.push(e);
    }
    p.n_realizations = n_realizations;
    p.stderr = Some(errs);
    Ok(p)
}

pub fn profile_name(t: usize) -> String {
    format!("profile_t{t}.csv")
}

pub fn collapse_name(t: usize) -> String {
    format!("collapse_t{t}.csv")
}

/// Writes every file of one grid point into `dir`, which must exist.
pub fn write_point(dir: &Path, meta: &Meta, result: &EnsembleResult) -> CliResult<()> {
    write_json(&dir.join("meta.json"), meta)?;
    write_moments(&dir.join("moments.csv"), &result.series)?;
    for p in &result.snapshots {
        write_profile(&dir.join(profile_name(p.t)), p)?;
    }
    Ok(())
}

pub fn read_point(dir: &Path) -> CliResult<(Meta, PointData)> {
    if !dir.is_dir() {
        return Err(CliError::config(format!("missing grid point output {}", dir.display())));
    }
    let meta: Meta = read_json(&dir.join("meta.json"))?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(CliError::config(format!(
            "{}: schema version {} is not {SCHEMA_VERSION}",
            dir.join("meta.json").display(),
            meta.schema_version
        )));
    }
    let series = read_moments(&dir.join("moments.csv"))?;
    let snapshots = meta
        .point
        .snapshot_times
        .iter()
        .map(|&t| read_profile(&dir.join(profile_name(t)), t, meta.point.n_config))
        .collect::<CliResult<Vec<_>>>()?;
    let data = PointData {
        delta: meta.point.delta,
        lmax: meta.point.lmax,
        t_max: meta.point.t_max,
        series,
        snapshots,
    };
    Ok((meta, data))
}

/// Writes `path` through a sibling temporary file so that a failure never
/// leaves a truncated file behind.
pub fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> CliResult<()>) -> CliResult<()> {
    let tmp = tmp_sibling(path);
    let res = write(&tmp).and_then(|()| fs::rename(&tmp, path).map_err(io_err(path)));
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res
}

pub fn tmp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    path.with_file_name(format!(".{name}.partial"))
}

/// Checks `dir` can be created and written.
pub fn ensure_writable(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let probe = dir.join(".write-probe");
    fs::File::create(&probe).and_then(|mut f| f.write_all(b"")).map_err(io_err(dir))?;
    fs::remove_file(&probe).map_err(io_err(dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0, std::f64::consts::PI] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn moments_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = ObservableSeries {
            ts: vec![1, 2],
            mean_x: vec![0.1, 0.2],
            mean_x2: vec![1.0, 2.0],
            range: vec![2.0, 4.0],
            entropy: vec![0.5, 0.6],
            entropy_of_mean_rho: vec![0.7, 0.8],
            stderr_x: vec![0.0, 1e-3],
            stderr_x2: vec![0.0, 2e-3],
            stderr_range: vec![0.0, 3e-3],
            stderr_entropy: vec![0.0, 0.0],
        };
        let path = dir.path().join("moments.csv");
        write_moments(&path, &s).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,mean_x,stderr_x,"));
        assert!(!text.contains('\r'));
        assert_eq!(read_moments(&path).unwrap(), s);
    }

    #[test]
    fn parse_errors_name_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profile_t4.csv");
        fs::write(&path, "x,f,stderr\n0,0.5,0\n1,zero,0\n").unwrap();
        let e = read_profile(&path, 4, 1).unwrap_err().to_string();
        assert!(e.contains("profile_t4.csv") && e.contains("line 3"), "{e}");

        fs::write(&path, "x,g,stderr\n").unwrap();
        let e = read_profile(&path, 4, 1).unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
    }
}
