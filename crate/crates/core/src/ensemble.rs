//! Disorder averaging over reproducibly seeded realizations.
//!
//! Realization `i` draws its step lengths from a ChaCha stream seeded with
//! [`realization_seed`]`(master_seed, i)`, so its trajectory does not depend on
//! which worker runs it or when. Realizations are evaluated in fixed-size
//! chunks on the rayon pool and folded into the accumulators in index order,
//! which makes the averaged output identical for any worker count.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{
    von_neumann_entropy, CoinDensityMatrix, ObservableSeries, ProbabilityProfile, RANGE_THRESHOLD,
};
use crate::steplen::StepLengthDistribution;
use crate::sum::CompensatedSum;
use crate::walker::{CoinAmplitudes, Convention, WalkerState};

/// Norm drift tolerated at any step before a run is aborted.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Realizations evaluated per parallel batch.
const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub delta: f64,
    pub lmax: usize,
    pub t_max: usize,
    pub n_config: usize,
    pub coin: CoinAmplitudes,
    pub master_seed: u64,
    pub snapshot_times: Vec<usize>,
    pub range_threshold: f64,
    pub convention: Convention,
}

impl RunConfig {
    /// Config with the default snapshot times `{t/8, t/4, t/2, t}` and range threshold.
    pub fn new(delta: f64, lmax: usize, t_max: usize, n_config: usize, coin: CoinAmplitudes) -> Self {
        Self {
            delta,
            lmax,
            t_max,
            n_config,
            coin,
            master_seed: 0x5eed_1e57_0000_0001,
            snapshot_times: default_snapshot_times(t_max),
            range_threshold: RANGE_THRESHOLD,
            convention: Convention::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_snapshots(mut self, times: Vec<usize>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_convention(mut self, convention: Convention) -> Self {
        self.convention = convention;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::domain("t_max must be >= 1"));
        }
        if self.n_config == 0 {
            return Err(Error::domain("n_config must be >= 1"));
        }
        if !(self.range_threshold >= 0.0) {
            return Err(Error::domain("range threshold must be >= 0"));
        }
        if !self.snapshot_times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::domain("snapshot times must be strictly increasing"));
        }
        if let Some(t) = self.snapshot_times.iter().find(|t| **t == 0 || **t > self.t_max) {
            return Err(Error::domain(format!("snapshot time {t} outside [1, {}]", self.t_max)));
        }
        StepLengthDistribution::new(self.delta, self.lmax)?;
        Ok(())
    }

    pub fn distribution(&self) -> Result<StepLengthDistribution> {
        StepLengthDistribution::new(self.delta, self.lmax)
    }

    /// Largest `|x|` any realization can reach.
    pub fn reach(&self) -> usize {
        self.lmax * self.t_max
    }
}

/// `{t/8, t/4, t/2, t}`, dropping zeros and duplicates.
pub fn default_snapshot_times(t_max: usize) -> Vec<usize> {
    let mut ts: Vec<usize> =
        [t_max / 8, t_max / 4, t_max / 2, t_max].into_iter().filter(|t| *t > 0).collect();
    ts.dedup();
    ts
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of realization `index` under `master_seed`.
///
/// A bijection of `index` for fixed `master_seed`, so distinct indices never
/// share a seed, and a prefix of realizations is unaffected by `n_config`.
pub fn realization_seed(master_seed: u64, index: u64) -> u64 {
    mix64(master_seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Everything recorded for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationOutput {
    pub index: usize,
    pub steps: Vec<usize>,
    pub mean_x: Vec<f64>,
    pub mean_x2: Vec<f64>,
    pub range: Vec<f64>,
    pub entropy: Vec<f64>,
    pub rho: Vec<CoinDensityMatrix>,
    pub snapshots: Vec<ProbabilityProfile>,
    /// Occurrences of each step length, slot 0 for `l = 1`.
    pub step_counts: Vec<u64>,
}

impl RealizationOutput {
    /// The per-step observables as a series with zero standard errors.
    pub fn series(&self) -> Result<ObservableSeries> {
        let n = self.mean_x.len();
        Ok(ObservableSeries {
            ts: (1..=n).collect(),
            mean_x: self.mean_x.clone(),
            mean_x2: self.mean_x2.clone(),
            range: self.range.clone(),
            entropy: self.entropy.clone(),
            entropy_of_mean_rho: self
                .rho
                .iter()
                .map(von_neumann_entropy)
                .collect::<Result<_>>()?,
            stderr_x: vec![0.0; n],
            stderr_x2: vec![0.0; n],
            stderr_range: vec![0.0; n],
            stderr_entropy: vec![0.0; n],
        })
    }
}

/// Evolves realization `index` of `config` for `t_max` steps.
pub fn run_realization(config: &RunConfig, index: usize) -> Result<RealizationOutput> {
    config.validate()?;
    let dist = config.distribution()?;
    realization(config, &dist, index)
}

fn realization(config: &RunConfig, dist: &StepLengthDistribution, index: usize) -> Result<RealizationOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(realization_seed(config.master_seed, index as u64));
    let mut state = WalkerState::for_run(config.coin, config.lmax, config.t_max, config.convention);
    let t_max = config.t_max;

    let mut out = RealizationOutput {
        index,
        steps: Vec::with_capacity(t_max),
        mean_x: Vec::with_capacity(t_max),
        mean_x2: Vec::with_capacity(t_max),
        range: Vec::with_capacity(t_max),
        entropy: Vec::with_capacity(t_max),
        rho: Vec::with_capacity(t_max),
        snapshots: Vec::with_capacity(config.snapshot_times.len()),
        step_counts: vec![0; config.lmax],
    };
    let mut next_snapshot = config.snapshot_times.iter().peekable();

    for t in 1..=t_max {
        let l = dist.sample(&mut rng);
        out.step_counts[l - 1] += 1;
        out.steps.push(l);
        state.step(l)?;

        let obs = state.observe(config.range_threshold);
        if (obs.norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::consistency(format!("norm {} at t = {t}", obs.norm)));
        }
        out.mean_x.push(obs.mean_x);
        out.mean_x2.push(obs.mean_x2);
        out.range.push(obs.range);
        out.entropy.push(von_neumann_entropy(&obs.rho)?);
        out.rho.push(obs.rho);

        if next_snapshot.peek() == Some(&&t) {
            next_snapshot.next();
            out.snapshots.push(state.probability_profile());
        }
    }
    Ok(out)
}

/// Mean and spread of one quantity, with sums taken relative to the first sample.
///
/// Shifting by the first value makes the spread of identical samples exactly zero.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    shift: f64,
    s1: CompensatedSum,
    s2: CompensatedSum,
}

impl Moments {
    fn push(&mut self, v: f64, first: bool) {
        if first {
            self.shift = v;
        }
        let d = v - self.shift;
        self.s1.add(d);
        self.s2.add(d * d);
    }

    fn mean(&self, n: usize) -> f64 {
        self.shift + self.s1.value() / n as f64
    }

    /// Sample standard deviation over `sqrt(n)`; zero for a single sample.
    fn stderr(&self, n: usize) -> f64 {
        if n < 2 {
            return 0.0;
        }
        let nf = n as f64;
        let s1 = self.s1.value();
        let var = ((self.s2.value() - s1 * s1 / nf) / (nf - 1.0)).max(0.0);
        (var / nf).sqrt()
    }
}

struct Accumulator {
    n: usize,
    reach: usize,
    mean_x: Vec<Moments>,
    mean_x2: Vec<Moments>,
    range: Vec<Moments>,
    entropy: Vec<Moments>,
    rho: Vec<[CompensatedSum; 4]>,
    /// Dense per-snapshot profiles indexed from position `-reach`.
    profiles: Vec<Vec<Moments>>,
    windows: Vec<(i64, i64)>,
    step_counts: Vec<u64>,
}

impl Accumulator {
    fn new(config: &RunConfig) -> Self {
        let reach = config.reach();
        let width = 2 * reach + 1;
        Self {
            n: 0,
            reach,
            mean_x: vec![Moments::default(); config.t_max],
            mean_x2: vec![Moments::default(); config.t_max],
            range: vec![Moments::default(); config.t_max],
            entropy: vec![Moments::default(); config.t_max],
            rho: vec![[CompensatedSum::default(); 4]; config.t_max],
            profiles: vec![vec![Moments::default(); width]; config.snapshot_times.len()],
            windows: vec![(i64::MAX, i64::MIN); config.snapshot_times.len()],
            step_counts: vec![0; config.lmax],
        }
    }

    fn push(&mut self, r: &RealizationOutput) {
        let first = self.n == 0;
        for (t, m) in self.mean_x.iter_mut().enumerate() {
            m.push(r.mean_x[t], first);
        }
        for (t, m) in self.mean_x2.iter_mut().enumerate() {
            m.push(r.mean_x2[t], first);
        }
        for (t, m) in self.range.iter_mut().enumerate() {
            m.push(r.range[t], first);
        }
        for (t, m) in self.entropy.iter_mut().enumerate() {
            m.push(r.entropy[t], first);
        }
        for (acc, rho) in self.rho.iter_mut().zip(&r.rho) {
            acc[0].add(rho.rho[0][0].re);
            acc[1].add(rho.rho[1][1].re);
            acc[2].add(rho.rho[0][1].re);
            acc[3].add(rho.rho[0][1].im);
        }
        let reach = self.reach as i64;
        for ((dense, window), snap) in self.profiles.iter_mut().zip(&mut self.windows).zip(&r.snapshots) {
            let (Some(&x0), Some(&x1)) = (snap.xs.first(), snap.xs.last()) else { continue };
            window.0 = window.0.min(x0);
            window.1 = window.1.max(x1);
            let start = (x0 + reach) as usize;
            let end = (x1 + reach) as usize;
            for (i, m) in dense.iter_mut().enumerate() {
                let v = if (start..=end).contains(&i) { snap.f[i - start] } else { 0.0 };
                m.push(v, first);
            }
        }
        for (acc, c) in self.step_counts.iter_mut().zip(&r.step_counts) {
            *acc += c;
        }
        self.n += 1;
    }

    fn finish(self, config: RunConfig, dist: &StepLengthDistribution) -> Result<EnsembleResult> {
        let n = self.n;
        let means = |v: &[Moments]| v.iter().map(|m| m.mean(n)).collect::<Vec<_>>();
        let errs = |v: &[Moments]| v.iter().map(|m| m.stderr(n)).collect::<Vec<_>>();
        let entropy_of_mean_rho = self
            .rho
            .iter()
            .map(|acc| {
                let nf = n as f64;
                let rho = CoinDensityMatrix::from_parts(
                    acc[0].value() / nf,
                    acc[1].value() / nf,
                    Complex64::new(acc[2].value() / nf, acc[3].value() / nf),
                );
                von_neumann_entropy(&rho)
            })
            .collect::<Result<Vec<_>>>()?;

        let series = ObservableSeries {
            ts: (1..=config.t_max).collect(),
            mean_x: means(&self.mean_x),
            mean_x2: means(&self.mean_x2),
            range: means(&self.range),
            entropy: means(&self.entropy),
            entropy_of_mean_rho,
            stderr_x: errs(&self.mean_x),
            stderr_x2: errs(&self.mean_x2),
            stderr_range: errs(&self.range),
            stderr_entropy: errs(&self.entropy),
        };

        let reach = self.reach as i64;
        let mut snapshots = Vec::with_capacity(self.profiles.len());
        for ((dense, (x0, x1)), &t) in self.profiles.iter().zip(&self.windows).zip(&config.snapshot_times) {
            let (start, end) = ((x0 + reach) as usize, (x1 + reach) as usize);
            let cells = &dense[start..=end];
            let profile = ProbabilityProfile {
                t,
                xs: (*x0..=*x1).collect(),
                f: cells.iter().map(|m| m.mean(n)).collect(),
                n_realizations: n,
                stderr: Some(cells.iter().map(|m| m.stderr(n)).collect()),
            };
            profile.check_normalized(NORM_TOLERANCE)?;
            snapshots.push(profile);
        }

        let total: u64 = self.step_counts.iter().sum();
        let empirical_step_pmf = self.step_counts.iter().map(|c| *c as f64 / total as f64).collect();
        let step_pmf_distance = dist.total_variation(&self.step_counts);

        Ok(EnsembleResult {
            config,
            series,
            snapshots,
            step_counts: self.step_counts,
            empirical_step_pmf,
            step_pmf_distance,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub config: RunConfig,
    pub series: ObservableSeries,
    /// Ensemble-averaged profiles, one per snapshot time.
    pub snapshots: Vec<ProbabilityProfile>,
    pub step_counts: Vec<u64>,
    pub empirical_step_pmf: Vec<f64>,
    /// Total-variation distance between `empirical_step_pmf` and the exact pmf.
    pub step_pmf_distance: f64,
}

impl EnsembleResult {
    pub fn snapshot(&self, t: usize) -> Option<&ProbabilityProfile> {
        self.snapshots.iter().find(|p| p.t == t)
    }
}

/// Averages `config.n_config` realizations on the current rayon pool.
pub fn run_ensemble(config: &RunConfig) -> Result<EnsembleResult> {
    config.validate()?;
    let dist = config.distribution()?;
    let mut acc = Accumulator::new(config);
    let mut start = 0;
    while start < config.n_config {
        let end = (start + CHUNK).min(config.n_config);
        let batch: Vec<Result<RealizationOutput>> = (start..end)
            .into_par_iter()
            .map(|i| {
                realization(config, &dist, i)
                    .map_err(|e| Error::Realization { index: i, source: Box::new(e) })
            })
            .collect();
        for r in batch {
            acc.push(&r?);
        }
        start = end;
    }
    acc.finish(config.clone(), &dist)
}

/// [`run_ensemble`] on a dedicated pool of `workers` threads.
pub fn run_ensemble_with_workers(config: &RunConfig, workers: usize) -> Result<EnsembleResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::domain(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_ensemble(config))
}
