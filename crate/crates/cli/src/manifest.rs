//! Experiment manifests: a TOML file, overridden field by field by flags.
//!
//! ```toml
//! delta = [0.0, 1.0, 2.0]
//! lmax = [4, 6]
//! t_max = 2000
//! n_config = 500
//! seed = 7
//! coin = "paper-asymmetric"     # or a0 = ..., b0 = ...
//! out = "runs/sweep"
//!
//! [analysis]
//! gamma = 0.5
//! ```

use std::path::{Path, PathBuf};

use levywalk::analysis::AnalysisParams;
use levywalk::ensemble::default_snapshot_times;
use levywalk::observables::RANGE_THRESHOLD;
use levywalk::{CoinAmplitudes, Convention, RunConfig};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, CliResult};

/// Environment variable naming the output directory when neither the
/// manifest nor `--out` gives one.
pub const OUT_ENV: &str = "LEVYWALK_OUT";
pub const DEFAULT_OUT: &str = "levywalk-out";
pub const DEFAULT_SEED: u64 = 0x5eed_1e57_0000_0001;
/// `a0² + b0²` must be within this of 1.
pub const COIN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// The manifest as written, every field optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub delta: Option<OneOrMany<f64>>,
    pub lmax: Option<OneOrMany<usize>>,
    pub t_max: Option<usize>,
    pub n_config: Option<usize>,
    pub seed: Option<u64>,
    pub coin: Option<String>,
    pub a0: Option<f64>,
    pub b0: Option<f64>,
    pub snapshots: Option<Vec<usize>>,
    pub range_threshold: Option<f64>,
    pub convention: Option<Convention>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub analysis: Option<AnalysisParams>,
}

impl ManifestFile {
    pub fn parse(text: &str, path: &Path) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, path)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: ManifestFile) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(delta, lmax, t_max, n_config, seed, coin, a0, b0, snapshots, range_threshold, convention, out, threads, analysis);
        self
    }
}

/// A complete, validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub toolkit_version: String,
    pub deltas: Vec<f64>,
    pub lmaxes: Vec<usize>,
    pub t_max: usize,
    pub n_config: usize,
    pub seed: u64,
    pub coin: CoinAmplitudes,
    /// Explicit snapshot times; `None` uses `{t/8, t/4, t/2, t}`.
    pub snapshots: Option<Vec<usize>>,
    pub range_threshold: f64,
    pub convention: Convention,
    pub convention_tag: String,
    pub out: PathBuf,
    pub threads: usize,
    pub analysis: AnalysisParams,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl Manifest {
    pub fn resolve(file: ManifestFile) -> CliResult<Self> {
        let deltas = file.delta.map(OneOrMany::into_vec).ok_or_else(|| CliError::config("no delta given"))?;
        let lmaxes = file.lmax.map(OneOrMany::into_vec).ok_or_else(|| CliError::config("no lmax given"))?;
        if deltas.is_empty() || lmaxes.is_empty() {
            return Err(CliError::config("sweep grids must be nonempty"));
        }
        let t_max = file.t_max.ok_or_else(|| CliError::config("no t_max given"))?;
        let n_config = file.n_config.unwrap_or(1);

        let coin = match (file.coin.as_deref(), file.a0, file.b0) {
            (_, Some(a0), Some(b0)) => CoinAmplitudes::with_tolerance(a0, b0, COIN_TOLERANCE)?,
            (_, Some(_), None) | (_, None, Some(_)) => {
                return Err(CliError::config("a0 and b0 must be given together"));
            }
            (Some(name), None, None) => CoinAmplitudes::preset(name).ok_or_else(|| {
                CliError::config(format!(
                    "unknown coin preset '{name}' (expected paper-asymmetric, right-only or left-only)"
                ))
            })?,
            (None, None, None) => CoinAmplitudes::paper_asymmetric(),
        };

        let out = match file.out {
            Some(p) => p,
            None => std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT), PathBuf::from),
        };
        let threads = file.threads.unwrap_or_else(default_threads);
        if threads == 0 {
            return Err(CliError::config("threads must be >= 1"));
        }
        let convention = file.convention.unwrap_or_default();
        let analysis = file.analysis.unwrap_or_default();
        analysis.validate()?;

        let m = Manifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            deltas,
            lmaxes,
            t_max,
            n_config,
            seed: file.seed.unwrap_or(DEFAULT_SEED),
            coin,
            snapshots: file.snapshots,
            range_threshold: file.range_threshold.unwrap_or(RANGE_THRESHOLD),
            convention,
            convention_tag: convention.tag(),
            out,
            threads,
            analysis,
        };
        for cfg in m.grid() {
            cfg.validate()?;
        }
        let mut seen = std::collections::HashSet::new();
        for name in m.grid().map(|c| point_dir_name(c.delta, c.lmax)) {
            if !seen.insert(name.clone()) {
                return Err(CliError::config(format!("grid point {name} listed twice")));
            }
        }
        Ok(m)
    }

    /// Run configurations in sweep order: `δ` outer, `l_max` inner.
    pub fn grid(&self) -> impl Iterator<Item = RunConfig> + '_ {
        self.deltas.iter().flat_map(move |&delta| {
            self.lmaxes.iter().map(move |&lmax| {
                let snapshots = self.snapshots.clone().unwrap_or_else(|| default_snapshot_times(self.t_max));
                RunConfig {
                    range_threshold: self.range_threshold,
                    ..RunConfig::new(delta, lmax, self.t_max, self.n_config, self.coin)
                }
                .with_seed(self.seed)
                .with_snapshots(snapshots)
                .with_convention(self.convention)
            })
        })
    }
}

/// `delta{δ}_lmax{l}`, with `δ` in shortest round-trip form.
pub fn point_dir_name(delta: f64, lmax: usize) -> String {
    format!("delta{delta}_lmax{lmax}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> CliResult<Manifest> {
        Manifest::resolve(ManifestFile::parse(s, Path::new("m.toml"))?)
    }

    #[test]
    fn minimal_manifest() {
        let m = parse("delta = 0.0\nlmax = 1\nt_max = 10\nout = \"o\"\nthreads = 1\n").unwrap();
        assert_eq!(m.deltas, vec![0.0]);
        assert_eq!(m.n_config, 1);
        assert_eq!(m.coin, CoinAmplitudes::paper_asymmetric());
        let cfgs: Vec<RunConfig> = m.grid().collect();
        assert_eq!(cfgs.len(), 1);
        assert_eq!(cfgs[0].snapshot_times, vec![1, 2, 5, 10]);
    }

    #[test]
    fn grid_order_and_names() {
        let m = parse("delta = [0.0, 0.5]\nlmax = [4, 6]\nt_max = 8\nout = \"o\"\n").unwrap();
        let names: Vec<String> = m.grid().map(|c| point_dir_name(c.delta, c.lmax)).collect();
        assert_eq!(names, ["delta0_lmax4", "delta0_lmax6", "delta0.5_lmax4", "delta0.5_lmax6"]);
    }

    #[test]
    fn coin_choices() {
        let m = parse("delta = 1.0\nlmax = 2\nt_max = 4\ncoin = \"left-only\"\n").unwrap();
        assert_eq!(m.coin, CoinAmplitudes::left_only());
        let m = parse("delta = 1.0\nlmax = 2\nt_max = 4\na0 = 0.6\nb0 = 0.8\n").unwrap();
        assert!((m.coin.a0() - 0.6).abs() < 1e-15);
        assert!(parse("delta = 1.0\nlmax = 2\nt_max = 4\na0 = 0.6\nb0 = 0.81\n").is_err());
        assert!(parse("delta = 1.0\nlmax = 2\nt_max = 4\na0 = 0.6\n").is_err());
        assert!(parse("delta = 1.0\nlmax = 2\nt_max = 4\ncoin = \"sideways\"\n").is_err());
    }

    #[test]
    fn rejects_bad_manifests() {
        assert!(parse("delta = []\nlmax = 2\nt_max = 4\n").is_err());
        assert!(parse("delta = 1.0\nlmax = 0\nt_max = 4\n").is_err());
        assert!(parse("delta = -1.0\nlmax = 2\nt_max = 4\n").is_err());
        assert!(parse("delta = 1.0\nlmax = 2\nt_max = 4\nsnapshots = [5]\n").is_err());
        assert!(parse("delta = [1.0, 1.0]\nlmax = 2\nt_max = 4\n").is_err());
        let e = parse("delta = 1.0\nlmax = 2\nt_max = 4\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("m.toml"), "{e}");
    }

    #[test]
    fn overlay_prefers_flags() {
        let base = ManifestFile::parse("delta = 1.0\nlmax = 2\nt_max = 4\nseed = 3\n", Path::new("m")).unwrap();
        let flags = ManifestFile { seed: Some(9), t_max: Some(6), ..Default::default() };
        let m = Manifest::resolve(base.overlay(flags)).unwrap();
        assert_eq!((m.seed, m.t_max, m.lmaxes.clone()), (9, 6, vec![2]));
    }
}
