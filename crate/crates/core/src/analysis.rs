//! Per-grid-point and sweep-level scaling analysis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleResult;
use crate::error::{Error, Result};
use crate::observables::{ObservableSeries, ProbabilityProfile};
use crate::scaling::{
    collapse_cutoff, collapse_profile, collapse_quality, crossover_report, fit_growth_exponent,
    fit_mean_scaling, fit_moment_closed_forms, fit_range_scaling, fit_two_piece, CollapseCutoff,
    CollapsedProfile, CrossoverInput, CrossoverReport, MeanScalingFit, Moment, MomentFit,
    RangeScalingFit, TwoPieceFit,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisParams {
    pub gamma: f64,
    /// Average `g(z)` and `g(-z)` before comparing and fitting.
    pub fold: bool,
    /// Bin width in `z`; 0 disables binning.
    pub bin_width: f64,
    pub n_sigma: f64,
    /// Moment closed forms use `t >= moment_t_lo`; 0 means `t_max / 20`.
    pub moment_t_lo: usize,
    /// Growth-exponent window; 0 means `t_max / 4` and `t_max`.
    pub growth_t_lo: usize,
    pub growth_t_hi: usize,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self { gamma: 0.5, fold: true, bin_width: 0.25, n_sigma: 3.0, moment_t_lo: 0, growth_t_lo: 0, growth_t_hi: 0 }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::domain("gamma must be > 0"));
        }
        if !(self.bin_width >= 0.0) {
            return Err(Error::domain("bin_width must be >= 0"));
        }
        if !(self.n_sigma > 0.0) {
            return Err(Error::domain("n_sigma must be > 0"));
        }
        Ok(())
    }

    fn moment_t_lo(&self, t_max: usize) -> usize {
        if self.moment_t_lo > 0 { self.moment_t_lo } else { (t_max / 20).max(1) }
    }

    fn growth_window(&self, t_max: usize) -> (usize, usize) {
        let lo = if self.growth_t_lo > 0 { self.growth_t_lo } else { (t_max / 4).max(1) };
        let hi = if self.growth_t_hi > 0 { self.growth_t_hi } else { t_max };
        (lo, hi)
    }
}

/// What the analysis needs from one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointData {
    pub delta: f64,
    pub lmax: usize,
    pub t_max: usize,
    pub series: ObservableSeries,
    pub snapshots: Vec<ProbabilityProfile>,
}

impl From<&EnsembleResult> for PointData {
    fn from(r: &EnsembleResult) -> Self {
        Self {
            delta: r.config.delta,
            lmax: r.config.lmax,
            t_max: r.config.t_max,
            series: r.series.clone(),
            snapshots: r.snapshots.clone(),
        }
    }
}

/// A fit that is either present or explains why not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attempt<T> {
    Ok(T),
    Failed(String),
}

impl<T> Attempt<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Attempt::Ok(v) => Some(v),
            Attempt::Failed(_) => None,
        }
    }
}

impl<T> From<Result<T>> for Attempt<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => Attempt::Ok(v),
            Err(e) => Attempt::Failed(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAnalysis {
    pub delta: f64,
    pub lmax: usize,
    pub t_max: usize,
    /// The two snapshot times compared, earlier first.
    pub collapse_times: Option<(usize, usize)>,
    pub cutoff: Attempt<CollapseCutoff>,
    /// Largest `|g_early − g_late|` below the cutoff.
    pub collapse_quality: Option<f64>,
    /// `Σ g Δz` of the latest collapsed snapshot.
    pub collapsed_mass: Option<f64>,
    pub two_piece: Attempt<TwoPieceFit>,
    pub moments: Attempt<MomentFit>,
    pub growth_window: (usize, usize),
    pub growth_first: Attempt<f64>,
    pub growth_second: Attempt<f64>,
    pub mean_x_over_sqrt_t: Option<f64>,
    pub range_over_t: Option<f64>,
    /// Ensemble-averaged entropy at `t_max`.
    pub entropy: Option<f64>,
}

impl PointAnalysis {
    pub fn tail_present(&self) -> Option<bool> {
        self.two_piece.ok().map(TwoPieceFit::tail_present)
    }
}

/// The collapsed profile at time `t` as it enters comparison and fitting.
pub fn prepared_collapse(profile: &ProbabilityProfile, params: &AnalysisParams) -> Result<CollapsedProfile> {
    let mut c = collapse_profile(profile, params.gamma)?;
    if params.fold {
        c = c.folded();
    }
    if params.bin_width > 0.0 {
        c = c.binned(params.bin_width)?;
    }
    Ok(c)
}

/// The two largest snapshot times.
fn collapse_pair(snapshots: &[ProbabilityProfile]) -> Option<(&ProbabilityProfile, &ProbabilityProfile)> {
    let mut sorted: Vec<&ProbabilityProfile> = snapshots.iter().filter(|p| p.t > 0).collect();
    sorted.sort_by_key(|p| p.t);
    let n = sorted.len();
    (n >= 2).then(|| (sorted[n - 2], sorted[n - 1]))
}

pub fn analyze_point(data: &PointData, params: &AnalysisParams) -> Result<PointAnalysis> {
    params.validate()?;
    let pair = collapse_pair(&data.snapshots);

    let (cutoff, quality, mass, two_piece) = match pair {
        None => {
            let why = "fewer than two snapshots".to_string();
            (Attempt::Failed(why.clone()), None, None, Attempt::Failed(why))
        }
        Some((early, late)) => {
            let ce = prepared_collapse(early, params)?;
            let cl = prepared_collapse(late, params)?;
            let mass = collapse_profile(late, params.gamma)?.riemann_mass();
            let cut: Attempt<CollapseCutoff> = collapse_cutoff(&ce, &cl, params.n_sigma).into();
            let (quality, fit) = match cut.ok() {
                Some(c) => {
                    let mut cl = cl;
                    cl.z_max_fit = Some(c.alpha);
                    (collapse_quality(&ce, &cl, c.alpha), fit_two_piece(&cl, c.alpha).into())
                }
                None => (None, Attempt::Failed("no collapse cutoff".into())),
            };
            (cut, quality, Some(mass), fit)
        }
    };

    let last = data.series.index_of(data.t_max);
    let growth_window = params.growth_window(data.t_max);
    Ok(PointAnalysis {
        delta: data.delta,
        lmax: data.lmax,
        t_max: data.t_max,
        collapse_times: pair.map(|(a, b)| (a.t, b.t)),
        cutoff,
        collapse_quality: quality,
        collapsed_mass: mass,
        two_piece,
        moments: fit_moment_closed_forms(&data.series, params.moment_t_lo(data.t_max)).into(),
        growth_window,
        growth_first: fit_growth_exponent(&data.series, Moment::First, growth_window.0, growth_window.1).into(),
        growth_second: fit_growth_exponent(&data.series, Moment::Second, growth_window.0, growth_window.1).into(),
        mean_x_over_sqrt_t: last.map(|i| data.series.mean_x[i] / (data.t_max as f64).sqrt()),
        range_over_t: last.map(|i| data.series.range[i] / data.t_max as f64),
        entropy: last.map(|i| data.series.entropy[i]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAnalysis {
    pub points: Vec<PointAnalysis>,
    /// Keyed by `l_max`.
    pub mean_scaling: BTreeMap<usize, Attempt<MeanScalingFit>>,
    pub range_scaling: BTreeMap<usize, Attempt<RangeScalingFit>>,
    pub crossover: Attempt<CrossoverReport>,
    /// `None` when the cutoff-independence criteria are never met on the grid.
    pub delta_star_estimate: Option<f64>,
}

pub fn analyze_sweep(points: &[PointData], params: &AnalysisParams) -> Result<SweepAnalysis> {
    let analyses: Vec<PointAnalysis> = points.iter().map(|p| analyze_point(p, params)).collect::<Result<_>>()?;

    let mut by_lmax: BTreeMap<usize, Vec<&PointAnalysis>> = BTreeMap::new();
    for a in &analyses {
        by_lmax.entry(a.lmax).or_default().push(a);
    }
    let mut mean_scaling = BTreeMap::new();
    let mut range_scaling = BTreeMap::new();
    for (&lmax, group) in &by_lmax {
        let mean: Vec<(f64, f64)> = group.iter().filter_map(|a| a.mean_x_over_sqrt_t.map(|v| (a.delta, v))).collect();
        let range: Vec<(f64, f64)> = group.iter().filter_map(|a| a.range_over_t.map(|v| (a.delta, v))).collect();
        mean_scaling.insert(lmax, fit_mean_scaling(&mean).into());
        range_scaling.insert(lmax, fit_range_scaling(&range).into());
    }

    let inputs: Vec<CrossoverInput> = analyses
        .iter()
        .filter_map(|a| {
            a.two_piece.ok().map(|f| CrossoverInput {
                delta: a.delta,
                lmax: a.lmax,
                fit: f.stretched,
                tail_present: f.tail_present(),
            })
        })
        .collect();
    let crossover: Attempt<CrossoverReport> = crossover_report(&inputs).into();
    let delta_star_estimate = crossover.ok().and_then(|c| c.delta_star.value());

    Ok(SweepAnalysis { points: analyses, mean_scaling, range_scaling, crossover, delta_star_estimate })
}
