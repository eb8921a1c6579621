use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use levywalk::analysis::{analyze_sweep, AnalysisParams, SweepAnalysis};
use levywalk::ensemble::run_ensemble_with_workers;
use levywalk::realization_seed;
use levywalk::scaling::collapse_profile;
use serde::Serialize;

use crate::error::{io_err, CliResult};
use crate::files::{self, Meta, SCHEMA_VERSION};
use crate::manifest::{point_dir_name, Manifest};

/// Removes the listed paths unless disarmed.
struct Cleanup(Vec<PathBuf>);

impl Cleanup {
    fn disarm(mut self) {
        self.0.clear();
    }
}

impl Drop for Cleanup {
    fn drop(&mut self) {
        for p in self.0.iter().rev() {
            let _ = if p.is_dir() { fs::remove_dir_all(p) } else { fs::remove_file(p) };
        }
    }
}

/// Runs every grid point and writes its files under `manifest.out`.
///
/// On failure the files written by this invocation are removed.
pub fn run(manifest: &Manifest) -> CliResult<Vec<PathBuf>> {
    files::ensure_writable(&manifest.out)?;
    let mut written = Cleanup(Vec::new());

    let manifest_path = manifest.out.join("manifest.json");
    files::write_json(&manifest_path, manifest)?;
    written.0.push(manifest_path);

    let mut dirs = Vec::new();
    for cfg in manifest.grid() {
        let name = point_dir_name(cfg.delta, cfg.lmax);
        let dir = manifest.out.join(&name);
        let tmp = files::tmp_sibling(&dir);
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
        }
        fs::create_dir_all(&tmp).map_err(io_err(&tmp))?;
        written.0.push(tmp.clone());

        let start = Instant::now();
        let result = run_ensemble_with_workers(&cfg, manifest.threads)?;
        let wall = start.elapsed().as_secs_f64();

        let meta = Meta {
            schema_version: SCHEMA_VERSION,
            toolkit_version: manifest.toolkit_version.clone(),
            convention: cfg.convention.tag(),
            manifest: manifest.clone(),
            point: cfg.clone(),
            master_seed: cfg.master_seed,
            realization_seeds: (0..cfg.n_config as u64).map(|i| realization_seed(cfg.master_seed, i)).collect(),
            step_pmf: cfg.distribution()?.pmf().to_vec(),
            empirical_step_pmf: result.empirical_step_pmf.clone(),
            step_pmf_distance: result.step_pmf_distance,
            wall_time_s: wall,
            threads: manifest.threads,
        };
        files::write_point(&tmp, &meta, &result)?;

        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        fs::rename(&tmp, &dir).map_err(io_err(&dir))?;
        written.0.pop();
        written.0.push(dir.clone());
        eprintln!(
            "{name}: {} configurations to t = {} in {wall:.1} s",
            cfg.n_config, cfg.t_max
        );
        dirs.push(dir);
    }
    written.disarm();
    Ok(dirs)
}

#[derive(Debug, Serialize)]
struct AnalysisFile<'a> {
    schema_version: u32,
    toolkit_version: &'a str,
    convention: &'a str,
    params: &'a AnalysisParams,
    #[serde(flatten)]
    sweep: &'a SweepAnalysis,
}

/// Analyzes the outputs of [`run`] for the same manifest and writes
/// `analysis.json` plus collapsed-profile CSVs.
pub fn analyze(manifest: &Manifest) -> CliResult<SweepAnalysis> {
    let mut points = Vec::new();
    let mut dirs = Vec::new();
    for cfg in manifest.grid() {
        let dir = manifest.out.join(point_dir_name(cfg.delta, cfg.lmax));
        let (_, data) = files::read_point(&dir)?;
        points.push(data);
        dirs.push(dir);
    }
    let params = &manifest.analysis;
    let sweep = analyze_sweep(&points, params)?;

    let mut written = Cleanup(Vec::new());
    for (data, dir) in points.iter().zip(&dirs) {
        for p in &data.snapshots {
            let path = dir.join(files::collapse_name(p.t));
            let c = collapse_profile(p, params.gamma)?;
            files::write_atomic(&path, |tmp| files::write_collapse(tmp, &c))?;
            written.0.push(path);
            let path = dir.join(format!("collapse_ballistic_t{}.csv", p.t));
            let c = collapse_profile(p, 1.0)?;
            files::write_atomic(&path, |tmp| files::write_collapse(tmp, &c))?;
            written.0.push(path);
        }
    }
    let file = AnalysisFile {
        schema_version: SCHEMA_VERSION,
        toolkit_version: &manifest.toolkit_version,
        convention: &manifest.convention_tag,
        params,
        sweep: &sweep,
    };
    let path = manifest.out.join("analysis.json");
    files::write_atomic(&path, |tmp| files::write_json(tmp, &file))?;
    written.disarm();
    for a in &sweep.points {
        eprintln!(
            "{}: alpha {}, tail {}",
            point_dir_name(a.delta, a.lmax),
            a.cutoff.ok().map_or("-".into(), |c| format!("{:.3}", c.alpha)),
            a.tail_present().map_or("-".into(), |t| t.to_string()),
        );
    }
    Ok(sweep)
}
