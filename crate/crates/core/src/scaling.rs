//! Scaling analysis of ensemble output.
//!
//! The collapsed profile is `g(z) = f(x,t) t^γ` against `z = x / t^γ`. Its
//! central region is modelled as
//!
//! ```text
//! g(z) = a exp(-b z^c)      z < z*
//!      = C z^-2             z* < z < z_max
//! ```
//!
//! where `z_max` (the universal-region cutoff `α`) is where profiles at two
//! times stop agreeing. The moments are checked against
//! `⟨x⟩ = t / (b1 + b2 √t)` and `⟨x²⟩ = t² / (b3 + b4 √t)`, and sweeps over the
//! exponent `δ` are summarized by `⟨x⟩/√t = β0 + β δ^κ` and
//! `R/t = s + q exp(-r δ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{self, levenberg_marquardt, linear_fit};
use crate::observables::{ObservableSeries, ProbabilityProfile};

/// Minimum number of points for a stretched-exponential fit.
pub const MIN_STRETCHED_POINTS: usize = 10;
/// Minimum number of points for a power-tail check.
pub const MIN_TAIL_POINTS: usize = 8;
/// Largest `|slope + 2|` accepted as a `z^-2` tail.
pub const TAIL_SLOPE_TOLERANCE: f64 = 0.3;
/// A tail window must span at least this factor in `z`.
pub const TAIL_MIN_SPAN: f64 = 2.0;
/// Relative spread of `(a, b, c)` across cutoffs below which `g(z)` counts as cutoff-independent.
pub const SPREAD_THRESHOLD: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapsedProfile {
    pub t: usize,
    pub gamma: f64,
    pub zs: Vec<f64>,
    pub gs: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    /// Upper end of the universal region, once determined.
    pub z_max_fit: Option<f64>,
}

pub fn collapse_profile(profile: &ProbabilityProfile, gamma: f64) -> Result<CollapsedProfile> {
    if profile.t == 0 {
        return Err(Error::domain("cannot collapse a profile at t = 0"));
    }
    if !(gamma > 0.0) {
        return Err(Error::domain(format!("collapse exponent must be > 0, got {gamma}")));
    }
    let scale = (profile.t as f64).powf(gamma);
    Ok(CollapsedProfile {
        t: profile.t,
        gamma,
        zs: profile.xs.iter().map(|&x| x as f64 / scale).collect(),
        gs: profile.f.iter().map(|f| f * scale).collect(),
        stderr: profile.stderr.as_ref().map(|s| s.iter().map(|e| e * scale).collect()),
        z_max_fit: None,
    })
}

impl CollapsedProfile {
    fn err(&self, i: usize) -> f64 {
        self.stderr.as_ref().map_or(0.0, |s| s[i])
    }

    /// Averages the two sides, `(g(z) + g(-z)) / 2` for `z >= 0`.
    ///
    /// Only valid for a profile collapsed from integer positions, where every
    /// `z` has its mirror image on the lattice. Missing mirror sites count as zero.
    pub fn folded(&self) -> CollapsedProfile {
        let key = |z: f64| (z * 1e9).round() as i64;
        let lookup: std::collections::HashMap<i64, usize> =
            self.zs.iter().enumerate().map(|(i, &z)| (key(z), i)).collect();
        let zmax = self.zs.iter().fold(0.0f64, |m, z| m.max(z.abs()));
        let step = self.zs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let step = if step.is_finite() && step > 0.0 { step } else { 1.0 };

        let mut zs = Vec::new();
        let mut gs = Vec::new();
        let mut errs = Vec::new();
        let mut k = 0usize;
        loop {
            let z = k as f64 * step;
            if z > zmax * (1.0 + 1e-12) {
                break;
            }
            let pos = lookup.get(&key(z)).copied();
            let neg = lookup.get(&key(-z)).copied();
            if pos.is_some() || neg.is_some() {
                let g = |i: Option<usize>| i.map_or(0.0, |i| self.gs[i]);
                let e = |i: Option<usize>| i.map_or(0.0, |i| self.err(i));
                zs.push(z);
                gs.push(0.5 * (g(pos) + g(neg)));
                errs.push(0.5 * (e(pos) + e(neg)));
            }
            k += 1;
        }
        CollapsedProfile {
            t: self.t,
            gamma: self.gamma,
            zs,
            gs,
            stderr: self.stderr.as_ref().map(|_| errs),
            z_max_fit: self.z_max_fit,
        }
    }

    /// Averages `g` over bins `[k w, (k+1) w)`, reported at bin centres.
    ///
    /// The bin error is the mean of the member errors, an upper bound on the
    /// standard error of the bin average whatever the correlation between sites.
    pub fn binned(&self, width: f64) -> Result<CollapsedProfile> {
        if !(width > 0.0) {
            return Err(Error::domain("bin width must be > 0"));
        }
        let mut zs = Vec::new();
        let mut gs = Vec::new();
        let mut errs = Vec::new();
        let mut i = 0;
        while i < self.zs.len() {
            let bin = (self.zs[i] / width).floor();
            let (mut g, mut e, mut n) = (0.0, 0.0, 0usize);
            while i < self.zs.len() && (self.zs[i] / width).floor() == bin {
                g += self.gs[i];
                e += self.err(i);
                n += 1;
                i += 1;
            }
            zs.push((bin + 0.5) * width);
            gs.push(g / n as f64);
            errs.push(e / n as f64);
        }
        Ok(CollapsedProfile {
            t: self.t,
            gamma: self.gamma,
            zs,
            gs,
            stderr: self.stderr.as_ref().map(|_| errs),
            z_max_fit: self.z_max_fit,
        })
    }

    /// Linear interpolation of `(g, stderr)` at `z`; `None` outside the grid.
    fn interpolate(&self, z: f64) -> Option<(f64, f64)> {
        let n = self.zs.len();
        if n == 0 || z < self.zs[0] || z > self.zs[n - 1] {
            return None;
        }
        let j = self.zs.partition_point(|&v| v < z);
        if j < n && self.zs[j] == z {
            return Some((self.gs[j], self.err(j)));
        }
        let (z0, z1) = (self.zs[j - 1], self.zs[j]);
        let w = (z - z0) / (z1 - z0);
        Some((
            self.gs[j - 1] * (1.0 - w) + self.gs[j] * w,
            self.err(j - 1) * (1.0 - w) + self.err(j) * w,
        ))
    }

    /// `Σ g Δz` with `Δz` the local grid spacing.
    pub fn riemann_mass(&self) -> f64 {
        if self.zs.len() < 2 {
            return self.gs.first().copied().unwrap_or(0.0);
        }
        let dz = (self.zs[self.zs.len() - 1] - self.zs[0]) / (self.zs.len() - 1) as f64;
        self.gs.iter().sum::<f64>() * dz
    }
}

/// Where two collapsed profiles stop agreeing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseCutoff {
    /// Every compared point with `0 <= z < alpha` agrees within `n_sigma`.
    pub alpha: f64,
    /// False when the profiles agree over the whole shared grid.
    pub disagreement_found: bool,
    pub n_sigma: f64,
    pub points_compared: usize,
}

/// Scans `earlier`'s grid upward from `z = 0` for the first point where
/// `|g_earlier - g_later| > n_sigma * hypot(se_earlier, se_later)`, with
/// `later` interpolated onto `earlier`'s grid.
pub fn collapse_cutoff(
    earlier: &CollapsedProfile,
    later: &CollapsedProfile,
    n_sigma: f64,
) -> Result<CollapseCutoff> {
    let mut compared = 0;
    let mut last_z = None;
    for (i, &z) in earlier.zs.iter().enumerate() {
        if z < 0.0 {
            continue;
        }
        let Some((g, e)) = later.interpolate(z) else { break };
        compared += 1;
        let tol = n_sigma * earlier.err(i).hypot(e);
        if (earlier.gs[i] - g).abs() > tol {
            return Ok(CollapseCutoff { alpha: z, disagreement_found: true, n_sigma, points_compared: compared });
        }
        last_z = Some(z);
    }
    let last = last_z.ok_or_else(|| Error::domain("collapsed profiles share no z >= 0"))?;
    // a hair past the last point so that `z < alpha` keeps it
    let alpha = last + f64::EPSILON.max(last.abs() * 1e-12);
    Ok(CollapseCutoff { alpha, disagreement_found: false, n_sigma, points_compared: compared })
}

/// Largest `|g_a − g_b|` over the points of `a` with `0 <= z < z_cut`.
pub fn collapse_quality(a: &CollapsedProfile, b: &CollapsedProfile, z_cut: f64) -> Option<f64> {
    a.zs.iter()
        .zip(&a.gs)
        .filter(|(z, _)| **z >= 0.0 && **z < z_cut)
        .filter_map(|(&z, &g)| b.interpolate(z).map(|(h, _)| (g - h).abs()))
        .reduce(f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StretchedExpFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub z_lo: f64,
    /// Upper end of the fitted window.
    pub z_star: f64,
    pub n_points: usize,
    /// RMS of the residuals of `log g`.
    pub residual_rms: f64,
    pub converged: bool,
}

fn window(collapsed: &CollapsedProfile, z_lo: f64, z_hi: f64) -> (Vec<f64>, Vec<f64>) {
    collapsed
        .zs
        .iter()
        .zip(&collapsed.gs)
        .filter(|(z, _)| **z >= z_lo && **z <= z_hi)
        .map(|(z, g)| (*z, *g))
        .unzip()
}

/// Least-squares fit of `log g = log a − b z^c` on `z_lo <= z <= z_hi`.
pub fn fit_stretched_exponential(
    collapsed: &CollapsedProfile,
    z_lo: f64,
    z_hi: f64,
) -> Result<StretchedExpFit> {
    if z_lo < 0.0 {
        return Err(Error::domain("stretched-exponential window must have z >= 0"));
    }
    let (zs, gs) = window(collapsed, z_lo, z_hi);
    if zs.len() < MIN_STRETCHED_POINTS {
        return Err(Error::domain(format!(
            "{} points in [{z_lo}, {z_hi}], need {MIN_STRETCHED_POINTS}",
            zs.len()
        )));
    }
    if let Some(g) = gs.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::domain(format!("nonpositive g = {g} in fit window")));
    }
    Ok(stretched_exp_on(&zs, &gs.iter().map(|g| g.ln()).collect::<Vec<_>>()))
}

fn stretched_exp_on(zs: &[f64], log_g: &[f64]) -> StretchedExpFit {
    let n = zs.len();
    // log a from a straight-line extrapolation of the first points to z = 0
    let head = 3.min(n);
    let la = linear_fit(&zs[..head], &log_g[..head]).map_or(log_g[0], |l| l.intercept.max(log_g[0]));
    let b0 = ((la - log_g[n - 1]) / zs[n - 1].max(f64::MIN_POSITIVE)).max(1e-6);
    let init = [la, b0.ln(), 1.0];

    let out = levenberg_marquardt(init, n, fit::Options::default(), |p, r, jac| {
        let (la, b, c) = (p[0], p[1].exp(), p[2]);
        if !(c > 0.0 && c < 50.0 && b.is_finite()) {
            return false;
        }
        for i in 0..n {
            let z = zs[i];
            let zc = if z > 0.0 { z.powf(c) } else { 0.0 };
            let lz = if z > 0.0 { z.ln() } else { 0.0 };
            r[i] = la - b * zc - log_g[i];
            jac[i] = [1.0, -b * zc, -b * zc * lz];
        }
        r.iter().all(|v| v.is_finite())
    });
    let [la, lb, c] = out.params;
    StretchedExpFit {
        a: la.exp(),
        b: lb.exp(),
        c,
        z_lo: zs[0],
        z_star: zs[n - 1],
        n_points: n,
        residual_rms: out.rms,
        converged: out.converged,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub slope: f64,
    pub intercept: f64,
    pub z_lo: f64,
    pub z_hi: f64,
    pub n_points: usize,
    pub tail_present: bool,
}

/// Log-log regression of `g` on `z` over the window; a `z^-2` tail is
/// present when the slope is within 0.3 of −2 and the points span a factor 2.
pub fn check_power_tail(collapsed: &CollapsedProfile, z_lo: f64, z_hi: f64) -> Result<TailCheck> {
    let (zs, gs) = window(collapsed, z_lo, z_hi);
    let (lz, lg): (Vec<f64>, Vec<f64>) = zs
        .iter()
        .zip(&gs)
        .filter(|(z, g)| **z > 0.0 && **g > 0.0)
        .map(|(z, g)| (z.ln(), g.ln()))
        .unzip();
    if lz.len() < MIN_TAIL_POINTS {
        return Err(Error::domain(format!(
            "{} usable points in [{z_lo}, {z_hi}], need {MIN_TAIL_POINTS}",
            lz.len()
        )));
    }
    let line = linear_fit(&lz, &lg).ok_or_else(|| Error::domain("degenerate tail window"))?;
    let (lo, hi) = (lz[0].exp(), lz[lz.len() - 1].exp());
    Ok(TailCheck {
        slope: line.slope,
        intercept: line.intercept,
        z_lo: lo,
        z_hi: hi,
        n_points: lz.len(),
        tail_present: (line.slope + 2.0).abs() <= TAIL_SLOPE_TOLERANCE && hi / lo >= TAIL_MIN_SPAN,
    })
}

/// The two-piece description of one collapsed profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPieceFit {
    pub stretched: StretchedExpFit,
    /// Boundary between the stretched-exponential and power-law pieces; equals
    /// `z_max` when there is no power-law piece.
    pub z_star: f64,
    pub z_max: f64,
    /// `C` of the `C z^-2` piece, if one was fitted.
    pub tail_const: Option<f64>,
    /// Free-slope check on `[z*, z_max)`, if that window holds enough points.
    pub tail: Option<TailCheck>,
    /// Combined sum of squared `log g` residuals of both pieces.
    pub sse: f64,
}

impl TwoPieceFit {
    pub fn tail_present(&self) -> bool {
        self.tail.is_some_and(|t| t.tail_present)
    }
}

/// Chooses `z*` on `[0, z_max)` by minimizing the combined residual of a
/// stretched exponential below it and `C z^-2` above it. Candidates that would
/// leave fewer than [`MIN_TAIL_POINTS`] points in the power-law piece are only
/// considered as "no power-law piece".
pub fn fit_two_piece(collapsed: &CollapsedProfile, z_max: f64) -> Result<TwoPieceFit> {
    let (zs, lg): (Vec<f64>, Vec<f64>) = collapsed
        .zs
        .iter()
        .zip(&collapsed.gs)
        .filter(|(z, _)| **z >= 0.0 && **z < z_max)
        .map(|(z, g)| (*z, *g))
        .take_while(|(_, g)| *g > 0.0)
        .map(|(z, g)| (z, g.ln()))
        .unzip();
    let n = zs.len();
    if n < MIN_STRETCHED_POINTS {
        return Err(Error::domain(format!(
            "{n} positive points below z_max = {z_max}, need {MIN_STRETCHED_POINTS}"
        )));
    }

    let mut best: Option<(f64, usize, StretchedExpFit, Option<f64>)> = None;
    for k in MIN_STRETCHED_POINTS..=n {
        let rest = n - k;
        if rest > 0 && rest < MIN_TAIL_POINTS {
            continue;
        }
        let head = stretched_exp_on(&zs[..k], &lg[..k]);
        let mut sse = head.residual_rms.powi(2) * k as f64;
        let mut tail_const = None;
        if rest > 0 {
            let tz = &zs[k..];
            let tl = &lg[k..];
            let log_c = tz.iter().zip(tl).map(|(z, l)| l + 2.0 * z.ln()).sum::<f64>() / rest as f64;
            sse += tz.iter().zip(tl).map(|(z, l)| (log_c - 2.0 * z.ln() - l).powi(2)).sum::<f64>();
            tail_const = Some(log_c.exp());
        }
        if !sse.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| sse < b.0) {
            best = Some((sse, k, head, tail_const));
        }
    }
    let (sse, k, stretched, tail_const) =
        best.ok_or_else(|| Error::domain("no admissible split of the collapsed profile"))?;

    let (z_star, tail) = if k < n {
        let z_star = 0.5 * (zs[k - 1] + zs[k]);
        (z_star, Some(check_power_tail(collapsed, z_star, zs[n - 1])?))
    } else {
        (z_max, None)
    };
    Ok(TwoPieceFit { stretched, z_star, z_max, tail_const, tail, sse })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentFit {
    /// `⟨x⟩ = t / (b1 + b2 √t)`; absent when `⟨x⟩ <= 0` somewhere in the window.
    pub b1: Option<f64>,
    pub b2: Option<f64>,
    pub residual_rms_first: Option<f64>,
    /// `⟨x²⟩ = t² / (b3 + b4 √t)`.
    pub b3: f64,
    pub b4: f64,
    pub residual_rms_second: f64,
    /// `b3 > 0`.
    pub physical: bool,
    pub t_lo: usize,
}

/// Linear least squares on `t/⟨x⟩ = b1 + b2 √t` and `t²/⟨x²⟩ = b3 + b4 √t` for `t >= t_lo`.
pub fn fit_moment_closed_forms(series: &ObservableSeries, t_lo: usize) -> Result<MomentFit> {
    if t_lo == 0 {
        return Err(Error::domain("t_lo must be >= 1"));
    }
    let idx: Vec<usize> = (0..series.len()).filter(|&i| series.ts[i] >= t_lo).collect();
    if idx.len() < 2 {
        return Err(Error::domain(format!("fewer than 2 recorded times at t >= {t_lo}")));
    }
    let sqrt_t: Vec<f64> = idx.iter().map(|&i| (series.ts[i] as f64).sqrt()).collect();

    let second: Vec<f64> = idx.iter().map(|&i| (series.ts[i] as f64).powi(2) / series.mean_x2[i]).collect();
    if idx.iter().any(|&i| !(series.mean_x2[i] > 0.0)) {
        return Err(Error::domain("⟨x²⟩ must be positive in the fit window"));
    }
    let l2 = linear_fit(&sqrt_t, &second).ok_or_else(|| Error::domain("degenerate moment window"))?;

    let first_ok = idx.iter().all(|&i| series.mean_x[i] > 0.0);
    let l1 = if first_ok {
        let first: Vec<f64> = idx.iter().map(|&i| series.ts[i] as f64 / series.mean_x[i]).collect();
        linear_fit(&sqrt_t, &first)
    } else {
        None
    };

    Ok(MomentFit {
        b1: l1.map(|l| l.intercept),
        b2: l1.map(|l| l.slope),
        residual_rms_first: l1.map(|l| l.rms),
        b3: l2.intercept,
        b4: l2.slope,
        residual_rms_second: l2.rms,
        physical: l2.intercept > 0.0,
        t_lo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    First,
    Second,
}

/// Least-squares slope of `log ⟨x^k⟩` against `log t` over `t_lo <= t <= t_hi`.
pub fn fit_growth_exponent(series: &ObservableSeries, which: Moment, t_lo: usize, t_hi: usize) -> Result<f64> {
    if t_lo == 0 || t_hi < 4 * t_lo {
        return Err(Error::domain(format!("window [{t_lo}, {t_hi}] must span a factor 4")));
    }
    let values = match which {
        Moment::First => &series.mean_x,
        Moment::Second => &series.mean_x2,
    };
    let mut lt = Vec::new();
    let mut lm = Vec::new();
    for (t, v) in series.ts.iter().zip(values) {
        if (t_lo..=t_hi).contains(t) {
            if !(*v > 0.0) {
                return Err(Error::domain(format!("nonpositive moment {v} at t = {t}")));
            }
            lt.push((*t as f64).ln());
            lm.push(v.ln());
        }
    }
    linear_fit(&lt, &lm)
        .map(|l| l.slope)
        .ok_or_else(|| Error::domain("fewer than 2 recorded times in the window"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanScalingFit {
    pub beta0: f64,
    pub beta: f64,
    pub kappa: f64,
    pub residual_rms: f64,
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub n_points: usize,
    pub converged: bool,
}

/// Smallest `δ` used when fitting `⟨x⟩/√t = β0 + β δ^κ`.
pub const MEAN_SCALING_MIN_DELTA: f64 = 0.5;

/// Minimum number of `δ` values for either sweep fit.
pub const MIN_SCAN_POINTS: usize = 5;

fn sorted_points(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

/// Fits `⟨x⟩/√t = β0 + β δ^κ` to `(δ, ⟨x⟩/√t)` pairs with `δ >= 0.5`.
///
/// `κ` is initialized by a scan with `(β0, β)` solved linearly at each trial value.
pub fn fit_mean_scaling(points: &[(f64, f64)]) -> Result<MeanScalingFit> {
    let pts: Vec<(f64, f64)> =
        sorted_points(points).into_iter().filter(|p| p.0 >= MEAN_SCALING_MIN_DELTA).collect();
    if pts.len() < MIN_SCAN_POINTS {
        return Err(Error::domain(format!(
            "{} points with δ >= {MEAN_SCALING_MIN_DELTA}, need {MIN_SCAN_POINTS}",
            pts.len()
        )));
    }
    let (ds, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();

    let mut init = None::<(f64, [f64; 3])>;
    for step in 1..=200 {
        let kappa = step as f64 * 0.05;
        let xs: Vec<f64> = ds.iter().map(|d| d.powf(kappa)).collect();
        if let Some(line) = linear_fit(&xs, &ys) {
            if init.as_ref().is_none_or(|b| line.rms < b.0) {
                init = Some((line.rms, [line.intercept, line.slope, kappa]));
            }
        }
    }
    let (_, init) = init.ok_or_else(|| Error::domain("degenerate δ grid"))?;

    let n = ds.len();
    let out = levenberg_marquardt(init, n, fit::Options::default(), |p, r, jac| {
        if !(p[2] > 0.0 && p[2] < 50.0) {
            return false;
        }
        for i in 0..n {
            let dk = ds[i].powf(p[2]);
            r[i] = p[0] + p[1] * dk - ys[i];
            jac[i] = [1.0, dk, p[1] * dk * ds[i].ln()];
        }
        r.iter().all(|v| v.is_finite())
    });
    let [beta0, beta, kappa] = out.params;
    Ok(MeanScalingFit {
        beta0,
        beta,
        kappa,
        residual_rms: out.rms,
        delta_lo: ds[0],
        delta_hi: ds[n - 1],
        n_points: n,
        converged: out.converged && kappa > 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeScalingFit {
    pub s: f64,
    pub q: f64,
    pub r: f64,
    pub residual_rms: f64,
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub n_points: usize,
    pub converged: bool,
}

/// Fits `R/t = s + q exp(-r δ)` to `(δ, R/t)` pairs.
///
/// Starts from `s` at the largest `δ`, `q` from the smallest-`δ` excess, and
/// the `r` that best explains the data with `(s, q)` solved linearly.
pub fn fit_range_scaling(points: &[(f64, f64)]) -> Result<RangeScalingFit> {
    let pts = sorted_points(points);
    if pts.len() < MIN_SCAN_POINTS {
        return Err(Error::domain(format!("{} δ points, need {MIN_SCAN_POINTS}", pts.len())));
    }
    let (ds, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    let n = ds.len();
    let span = (ds[n - 1] - ds[0]).max(f64::MIN_POSITIVE);

    let s0 = ys[n - 1];
    let q0 = ys[0] - s0;
    let mut init = [s0, q0 * (ds[0]).exp(), 1.0 / span];
    let mut best_rms = f64::INFINITY;
    for step in 1..=400 {
        let r = step as f64 * 0.025 * 5.0 / span;
        let xs: Vec<f64> = ds.iter().map(|d| (-r * d).exp()).collect();
        if let Some(line) = linear_fit(&xs, &ys) {
            if line.rms < best_rms {
                best_rms = line.rms;
                init = [line.intercept, line.slope, r];
            }
        }
    }

    let out = levenberg_marquardt(init, n, fit::Options::default(), |p, r, jac| {
        if !(p[2] > 0.0) {
            return false;
        }
        for i in 0..n {
            let e = (-p[2] * ds[i]).exp();
            r[i] = p[0] + p[1] * e - ys[i];
            jac[i] = [1.0, e, -p[1] * ds[i] * e];
        }
        r.iter().all(|v| v.is_finite())
    });
    let [s, q, r] = out.params;
    Ok(RangeScalingFit {
        s,
        q,
        r,
        residual_rms: out.rms,
        delta_lo: ds[0],
        delta_hi: ds[n - 1],
        n_points: n,
        converged: out.converged && r > 0.0 && s > 0.0,
    })
}

/// One grid point's input to [`crossover_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverInput {
    pub delta: f64,
    pub lmax: usize,
    pub fit: StretchedExpFit,
    pub tail_present: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum DeltaStar {
    Found(f64),
    AboveGridMaximum,
}

impl DeltaStar {
    pub fn value(&self) -> Option<f64> {
        match self {
            DeltaStar::Found(d) => Some(*d),
            DeltaStar::AboveGridMaximum => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub delta: f64,
    pub lmax: Vec<usize>,
    /// Tail flag per entry of `lmax`.
    pub tail_present: Vec<bool>,
    pub spread_a: f64,
    pub spread_b: f64,
    pub spread_c: f64,
    /// Largest of the three spreads; infinite if any fit failed to converge.
    pub max_spread: f64,
    pub criteria_met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverReport {
    pub delta_star: DeltaStar,
    pub rows: Vec<CrossoverRow>,
    pub spread_threshold: f64,
}

fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if max == min {
        0.0
    } else {
        (max - min) / mean.abs()
    }
}

/// `δ*` is the smallest grid `δ` where no cutoff shows a `z^-2` tail and each of
/// `a`, `b`, `c` varies by less than 10% across cutoffs.
pub fn crossover_report(inputs: &[CrossoverInput]) -> Result<CrossoverReport> {
    let mut lmaxes: Vec<usize> = inputs.iter().map(|i| i.lmax).collect();
    lmaxes.sort_unstable();
    lmaxes.dedup();
    if lmaxes.len() < 2 {
        return Err(Error::domain("crossover needs at least two cutoffs l_max"));
    }
    let mut deltas: Vec<f64> = inputs.iter().map(|i| i.delta).collect();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();

    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in &deltas {
        let mut group: Vec<&CrossoverInput> = inputs.iter().filter(|i| i.delta == delta).collect();
        group.sort_by_key(|i| i.lmax);
        let spread = |get: fn(&StretchedExpFit) -> f64| {
            relative_spread(&group.iter().map(|i| get(&i.fit)).collect::<Vec<_>>())
        };
        let (sa, sb, sc) = (spread(|f| f.a), spread(|f| f.b), spread(|f| f.c));
        let all_converged = group.iter().all(|i| i.fit.converged);
        let max_spread = if all_converged && group.len() >= 2 { sa.max(sb).max(sc) } else { f64::INFINITY };
        let no_tail = group.iter().all(|i| !i.tail_present);
        rows.push(CrossoverRow {
            delta,
            lmax: group.iter().map(|i| i.lmax).collect(),
            tail_present: group.iter().map(|i| i.tail_present).collect(),
            spread_a: sa,
            spread_b: sb,
            spread_c: sc,
            max_spread,
            criteria_met: no_tail && max_spread < SPREAD_THRESHOLD,
        });
    }
    let delta_star = rows
        .iter()
        .find(|r| r.criteria_met)
        .map_or(DeltaStar::AboveGridMaximum, |r| DeltaStar::Found(r.delta));
    Ok(CrossoverReport { delta_star, rows, spread_threshold: SPREAD_THRESHOLD })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(zs: &[f64], g: impl Fn(f64) -> f64) -> CollapsedProfile {
        CollapsedProfile {
            t: 1,
            gamma: 0.5,
            zs: zs.to_vec(),
            gs: zs.iter().map(|&z| g(z)).collect(),
            stderr: None,
            z_max_fit: None,
        }
    }

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn collapse_arithmetic() {
        let p = ProbabilityProfile::new(100, vec![-1, 0, 1], vec![0.475, 0.05, 0.475]);
        let c = collapse_profile(&p, 0.5).unwrap();
        assert_eq!(c.zs[1], 0.0);
        assert!((c.gs[1] - 0.5).abs() < 1e-15);
        assert!((c.zs[2] - 0.1).abs() < 1e-15);

        let p = ProbabilityProfile::new(1, vec![-1, 1], vec![0.5, 0.5]);
        let c = collapse_profile(&p, 1.0).unwrap();
        assert_eq!(c.zs, vec![-1.0, 1.0]);
        assert_eq!(c.gs, vec![0.5, 0.5]);

        let p = ProbabilityProfile::new(0, vec![0], vec![1.0]);
        assert!(collapse_profile(&p, 0.5).is_err());
        let p = ProbabilityProfile::new(4, vec![0], vec![1.0]);
        assert!(collapse_profile(&p, 0.0).is_err());
    }

    #[test]
    fn folding_averages_mirror_sites() {
        let p = ProbabilityProfile::new(4, vec![-2, -1, 0, 1], vec![0.1, 0.2, 0.3, 0.4]);
        let f = collapse_profile(&p, 0.5).unwrap().folded();
        assert_eq!(f.zs, vec![0.0, 0.5, 1.0]);
        let want = [0.6, 0.6, 0.1];
        for (g, w) in f.gs.iter().zip(want) {
            assert!((g - w).abs() < 1e-15, "{g} vs {w}");
        }
    }

    #[test]
    fn binning_averages_within_bins() {
        let c = synthetic(&[0.0, 0.1, 0.2, 0.3, 0.6], |z| z);
        let b = c.binned(0.25).unwrap();
        assert_eq!(b.zs, vec![0.125, 0.375, 0.625]);
        assert!((b.gs[0] - 0.1).abs() < 1e-15);
        assert!((b.gs[1] - 0.3).abs() < 1e-15);
        assert!(c.binned(0.0).is_err());
    }

    #[test]
    fn cutoff_at_first_disagreement() {
        let zs = grid(0.0, 5.0, 51);
        let mut a = synthetic(&zs, |z| (-z).exp());
        let mut b = synthetic(&zs, |z| if z < 3.0 { (-z).exp() } else { 2.0 * (-z).exp() });
        a.stderr = Some(vec![1e-3; zs.len()]);
        b.stderr = Some(vec![1e-3; zs.len()]);
        let cut = collapse_cutoff(&a, &b, 3.0).unwrap();
        assert!(cut.disagreement_found);
        assert!((cut.alpha - 3.0).abs() < 1e-12);

        let cut = collapse_cutoff(&a, &a, 3.0).unwrap();
        assert!(!cut.disagreement_found);
        assert!(cut.alpha > 5.0);
        assert_eq!(collapse_quality(&a, &b, 3.0), Some(0.0));
    }

    #[test]
    fn stretched_exponential_noiseless() {
        let zs = grid(0.0, 5.0, 50);
        let c = synthetic(&zs, |z| 0.4 * (-1.2 * z.powf(0.8)).exp());
        let fit = fit_stretched_exponential(&c, 0.0, 5.0).unwrap();
        assert!(fit.converged);
        assert!((fit.a - 0.4).abs() < 1e-6 && (fit.b - 1.2).abs() < 1e-6 && (fit.c - 0.8).abs() < 1e-6);

        let c = synthetic(&zs, |z| 0.3 * (-0.7 * z).exp());
        let fit = fit_stretched_exponential(&c, 0.0, 5.0).unwrap();
        assert!((fit.c - 1.0).abs() < 0.02);
    }

    #[test]
    fn stretched_exponential_preconditions() {
        let zs = grid(0.0, 5.0, 50);
        let c = synthetic(&zs, |z| 0.4 * (-z).exp());
        assert!(fit_stretched_exponential(&c, 0.0, 0.5).is_err());
        assert!(fit_stretched_exponential(&c, -1.0, 5.0).is_err());
        let c = synthetic(&zs, |z| if z > 2.0 { 0.0 } else { 1.0 });
        assert!(fit_stretched_exponential(&c, 0.0, 5.0).is_err());
    }

    #[test]
    fn exact_power_law_tail() {
        let zs = grid(1.0, 10.0, 40);
        let c = synthetic(&zs, |z| z.powi(-2));
        let tail = check_power_tail(&c, 1.0, 10.0).unwrap();
        assert!((tail.slope + 2.0).abs() < 1e-10);
        assert!(tail.tail_present);

        let c = synthetic(&grid(2.0, 4.0, 30), |z| (-z).exp());
        let tail = check_power_tail(&c, 2.0, 4.0).unwrap();
        assert!(tail.slope < -2.3);
        assert!(!tail.tail_present);

        // right slope, too narrow a window
        let c = synthetic(&grid(3.0, 5.0, 30), |z| z.powi(-2));
        assert!(!check_power_tail(&c, 3.0, 5.0).unwrap().tail_present);
        assert!(check_power_tail(&c, 3.0, 3.2).is_err());
    }

    #[test]
    fn two_piece_finds_the_junction() {
        // stretched exponential matched continuously onto C z^-2 at z = 3
        let se = |z: f64| 0.5 * (-0.6 * z.powf(0.9)).exp();
        let c0 = se(3.0) * 9.0;
        let zs = grid(0.0, 15.0, 151);
        let c = synthetic(&zs, |z| if z < 3.0 { se(z) } else { c0 / (z * z) });
        let fit = fit_two_piece(&c, 15.1).unwrap();
        assert!((fit.z_star - 3.0).abs() < 0.15, "z* = {}", fit.z_star);
        assert!(fit.tail_present());
        assert!((fit.stretched.c - 0.9).abs() < 1e-3);

        let c = synthetic(&zs, se);
        let fit = fit_two_piece(&c, 15.1).unwrap();
        assert!(!fit.tail_present());
    }

    #[test]
    fn moment_closed_forms_noiseless() {
        let ts: Vec<usize> = (1..=400).collect();
        let series = ObservableSeries {
            mean_x: ts.iter().map(|&t| t as f64 / (2.0 + 0.5 * (t as f64).sqrt())).collect(),
            mean_x2: ts.iter().map(|&t| (t as f64).powi(2) / (1.0 + 3.0 * (t as f64).sqrt())).collect(),
            ts,
            ..Default::default()
        };
        let fit = fit_moment_closed_forms(&series, 10).unwrap();
        assert!((fit.b1.unwrap() - 2.0).abs() < 1e-8 && (fit.b2.unwrap() - 0.5).abs() < 1e-8);
        assert!((fit.b3 - 1.0).abs() < 1e-8 && (fit.b4 - 3.0).abs() < 1e-8);
        assert!(fit.physical);
    }

    #[test]
    fn moment_fit_without_positive_mean() {
        let ts: Vec<usize> = (1..=100).collect();
        let series = ObservableSeries {
            mean_x: ts.iter().map(|&t| -(t as f64)).collect(),
            mean_x2: ts.iter().map(|&t| (t as f64).powi(2) / (-1.0 + 3.0 * (t as f64).sqrt())).collect(),
            ts,
            ..Default::default()
        };
        let fit = fit_moment_closed_forms(&series, 5).unwrap();
        assert!(fit.b1.is_none() && fit.b2.is_none());
        assert!(!fit.physical);
        assert!((fit.b3 + 1.0).abs() < 1e-8);
    }

    #[test]
    fn growth_exponent_of_power_laws() {
        let ts: Vec<usize> = (1..=2000).collect();
        let series = ObservableSeries {
            mean_x: ts.iter().map(|&t| (t as f64).sqrt()).collect(),
            mean_x2: ts.iter().map(|&t| (t as f64).powf(1.5)).collect(),
            ts,
            ..Default::default()
        };
        assert!((fit_growth_exponent(&series, Moment::Second, 500, 2000).unwrap() - 1.5).abs() < 1e-12);
        assert!((fit_growth_exponent(&series, Moment::First, 500, 2000).unwrap() - 0.5).abs() < 1e-12);
        assert!(fit_growth_exponent(&series, Moment::First, 600, 2000).is_err());
    }

    #[test]
    fn parameter_scans_noiseless() {
        let ds: Vec<f64> = (1..=24).map(|i| i as f64 * 0.25).collect();
        let pts: Vec<(f64, f64)> = ds.iter().map(|&d| (d, 0.3 + 0.01 * d.powf(2.6))).collect();
        let fit = fit_mean_scaling(&pts).unwrap();
        assert!(fit.converged);
        assert!((fit.beta0 - 0.3).abs() < 1e-6 && (fit.beta - 0.01).abs() < 1e-6);
        assert!((fit.kappa - 2.6).abs() < 1e-6);
        assert_eq!(fit.delta_lo, 0.5);

        let pts: Vec<(f64, f64)> =
            std::iter::once(0.0).chain(ds).map(|d| (d, 2f64.sqrt() + 1.5 * (-0.8 * d).exp())).collect();
        let fit = fit_range_scaling(&pts).unwrap();
        assert!(fit.converged);
        assert!((fit.s - 2f64.sqrt()).abs() < 1e-6 && (fit.q - 1.5).abs() < 1e-6 && (fit.r - 0.8).abs() < 1e-6);
    }

    #[test]
    fn parameter_scans_need_five_points() {
        let pts = [(0.0, 1.0), (0.25, 1.0), (1.0, 1.1), (2.0, 1.3), (3.0, 1.9), (4.0, 2.5)];
        assert!(fit_mean_scaling(&pts).is_err());
        assert!(fit_range_scaling(&pts[..4]).is_err());
    }

    fn se_fit(a: f64, b: f64, c: f64) -> StretchedExpFit {
        StretchedExpFit { a, b, c, z_lo: 0.0, z_star: 5.0, n_points: 20, residual_rms: 0.0, converged: true }
    }

    #[test]
    fn crossover_at_first_clean_delta() {
        let mut inputs = Vec::new();
        for delta in [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0] {
            for (k, lmax) in [4usize, 6].into_iter().enumerate() {
                let spread = if delta >= 4.0 { 0.02 } else { 0.3 };
                let f = 1.0 + spread * k as f64;
                inputs.push(CrossoverInput {
                    delta,
                    lmax,
                    fit: se_fit(0.2 * f, 1.0 * f, 0.5 * f),
                    tail_present: delta < 4.0,
                });
            }
        }
        let report = crossover_report(&inputs).unwrap();
        assert_eq!(report.delta_star, DeltaStar::Found(4.0));
        assert_eq!(report.rows.len(), 7);

        for i in &mut inputs {
            i.tail_present = true;
        }
        assert_eq!(crossover_report(&inputs).unwrap().delta_star, DeltaStar::AboveGridMaximum);

        let single: Vec<CrossoverInput> = inputs.iter().filter(|i| i.lmax == 4).copied().collect();
        assert!(crossover_report(&single).is_err());
    }
}
