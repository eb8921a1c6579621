//! Exact evolution of a single disorder realization.
//!
//! The state is a pair of complex amplitude arrays `ψ_L(x)`, `ψ_R(x)` over a
//! preallocated window of positions. Each time step applies the Hadamard coin
//! at every occupied site and then translates `ψ_L` by `-l` and `ψ_R` by `+l`,
//! with one `l` shared by the whole lattice for that step.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{CoinDensityMatrix, ProbabilityProfile};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Real initial coin amplitudes at the origin: `ψ_R(0,0) = a0`, `ψ_L(0,0) = b0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoinAmplitudes {
    a0: f64,
    b0: f64,
}

impl CoinAmplitudes {
    pub const NORM_TOLERANCE: f64 = 1e-12;

    pub fn new(a0: f64, b0: f64) -> Result<Self> {
        Self::with_tolerance(a0, b0, Self::NORM_TOLERANCE)
    }

    /// Like [`CoinAmplitudes::new`] with a caller-chosen normalization tolerance.
    /// Accepted amplitudes are renormalized exactly.
    pub fn with_tolerance(a0: f64, b0: f64, tol: f64) -> Result<Self> {
        if !(a0.is_finite() && b0.is_finite()) || a0 < 0.0 || b0 < 0.0 {
            return Err(Error::domain(format!(
                "coin amplitudes must be real and nonnegative, got ({a0}, {b0})"
            )));
        }
        let norm2 = a0 * a0 + b0 * b0;
        if (norm2 - 1.0).abs() > tol {
            return Err(Error::domain(format!("a0^2 + b0^2 = {norm2}, expected 1")));
        }
        let n = norm2.sqrt();
        Ok(Self { a0: a0 / n, b0: b0 / n })
    }

    /// `(√(1/3), √(2/3))`, which gives an asymmetric clean-walk profile.
    pub fn paper_asymmetric() -> Self {
        Self { a0: (1.0f64 / 3.0).sqrt(), b0: (2.0f64 / 3.0).sqrt() }
    }

    pub fn right_only() -> Self {
        Self { a0: 1.0, b0: 0.0 }
    }

    pub fn left_only() -> Self {
        Self { a0: 0.0, b0: 1.0 }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper-asymmetric" => Some(Self::paper_asymmetric()),
            "right-only" => Some(Self::right_only()),
            "left-only" => Some(Self::left_only()),
            _ => None,
        }
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }
}

/// Basis order in which the Hadamard matrix is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoinOrder {
    /// `ψ_R ← (ψ_R + ψ_L)/√2`, `ψ_L ← (ψ_R − ψ_L)/√2`.
    RightLeft,
    /// `ψ_L ← (ψ_L + ψ_R)/√2`, `ψ_R ← (ψ_L − ψ_R)/√2`.
    LeftRight,
}

/// Coin and shift convention of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Convention {
    pub coin: CoinOrder,
    /// When set, `ψ_L` moves right and `ψ_R` moves left (the `x → −x` image).
    pub mirrored: bool,
}

impl Default for Convention {
    fn default() -> Self {
        Self { coin: CoinOrder::RightLeft, mirrored: false }
    }
}

impl Convention {
    pub fn mirror(self) -> Self {
        Self { mirrored: !self.mirrored, ..self }
    }

    /// Short tag recorded in run metadata.
    pub fn tag(&self) -> String {
        let coin = match self.coin {
            CoinOrder::RightLeft => "hadamard-rl",
            CoinOrder::LeftRight => "hadamard-lr",
        };
        let shift = if self.mirrored { "L-right" } else { "L-left" };
        format!("{coin}/{shift}/coin-then-shift")
    }
}

#[derive(Debug, Clone)]
pub struct WalkerState {
    t: usize,
    /// Position of storage index 0.
    offset: i64,
    psi_l: Vec<Complex64>,
    psi_r: Vec<Complex64>,
    /// Occupied storage indices, inclusive.
    lo: usize,
    hi: usize,
    convention: Convention,
}

impl WalkerState {
    /// Walker at the origin with storage covering `[-reach, reach]`.
    pub fn new(coin: CoinAmplitudes, reach: usize) -> Self {
        Self::with_convention(coin, reach, Convention::default())
    }

    /// Storage sized for `t_max` steps of length at most `lmax`.
    pub fn for_run(coin: CoinAmplitudes, lmax: usize, t_max: usize, convention: Convention) -> Self {
        Self::with_convention(coin, lmax * t_max, convention)
    }

    pub fn with_convention(coin: CoinAmplitudes, reach: usize, convention: Convention) -> Self {
        let len = 2 * reach + 1;
        let mut psi_l = vec![ZERO; len];
        let mut psi_r = vec![ZERO; len];
        psi_r[reach] = Complex64::new(coin.a0, 0.0);
        psi_l[reach] = Complex64::new(coin.b0, 0.0);
        Self { t: 0, offset: -(reach as i64), psi_l, psi_r, lo: reach, hi: reach, convention }
    }

    /// Builds a state from explicit amplitudes; `psi_l[0]` sits at position `offset`.
    /// The arrays are not checked for normalization.
    pub fn from_amplitudes(
        t: usize,
        offset: i64,
        psi_l: Vec<Complex64>,
        psi_r: Vec<Complex64>,
        convention: Convention,
    ) -> Result<Self> {
        if psi_l.len() != psi_r.len() || psi_l.is_empty() {
            return Err(Error::domain("amplitude arrays must be nonempty and of equal length"));
        }
        let occupied = |i: &usize| psi_l[*i] != ZERO || psi_r[*i] != ZERO;
        let lo = (0..psi_l.len()).find(occupied).unwrap_or(0);
        let hi = (0..psi_l.len()).rev().find(occupied).unwrap_or(0).max(lo);
        Ok(Self { t, offset, psi_l, psi_r, lo, hi, convention })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// Lowest and highest position of the occupied window.
    pub fn window(&self) -> (i64, i64) {
        (self.position(self.lo), self.position(self.hi))
    }

    /// Positions representable by the storage.
    pub fn capacity(&self) -> (i64, i64) {
        (self.offset, self.offset + self.psi_l.len() as i64 - 1)
    }

    fn position(&self, idx: usize) -> i64 {
        self.offset + idx as i64
    }

    /// `(ψ_L(x), ψ_R(x))`, zero outside storage.
    pub fn amplitude(&self, x: i64) -> (Complex64, Complex64) {
        let idx = x - self.offset;
        if idx < 0 || idx as usize >= self.psi_l.len() {
            return (ZERO, ZERO);
        }
        (self.psi_l[idx as usize], self.psi_r[idx as usize])
    }

    /// Amplitudes over the occupied window, starting at `window().0`.
    pub fn occupied(&self) -> (&[Complex64], &[Complex64]) {
        (&self.psi_l[self.lo..=self.hi], &self.psi_r[self.lo..=self.hi])
    }

    pub fn apply_coin(&mut self) {
        let (ls, rs) = (&mut self.psi_l[self.lo..=self.hi], &mut self.psi_r[self.lo..=self.hi]);
        match self.convention.coin {
            CoinOrder::RightLeft => {
                for (l, r) in ls.iter_mut().zip(rs.iter_mut()) {
                    let (a, b) = (*l, *r);
                    *r = (b + a) * FRAC_1_SQRT_2;
                    *l = (b - a) * FRAC_1_SQRT_2;
                }
            }
            CoinOrder::LeftRight => {
                for (l, r) in ls.iter_mut().zip(rs.iter_mut()) {
                    let (a, b) = (*l, *r);
                    *l = (a + b) * FRAC_1_SQRT_2;
                    *r = (a - b) * FRAC_1_SQRT_2;
                }
            }
        }
    }

    /// Translates the two coin components by `l` sites in opposite directions.
    pub fn apply_shift(&mut self, l: usize) -> Result<()> {
        if l == 0 {
            return Err(Error::domain("step length must be >= 1"));
        }
        if l > self.lo || self.hi + l >= self.psi_l.len() {
            let (min, max) = self.capacity();
            return Err(Error::Capacity {
                lo: self.position(self.lo) - l as i64,
                hi: self.position(self.hi) + l as i64,
                min,
                max,
            });
        }
        let (left_mover, right_mover) = if self.convention.mirrored {
            (&mut self.psi_r, &mut self.psi_l)
        } else {
            (&mut self.psi_l, &mut self.psi_r)
        };
        let (lo, hi) = (self.lo, self.hi);

        left_mover.copy_within(lo..=hi, lo - l);
        let vacated = (hi + 1 - l).max(lo);
        left_mover[vacated..=hi].fill(ZERO);

        right_mover.copy_within(lo..=hi, lo + l);
        let vacated = (lo + l).min(hi + 1);
        right_mover[lo..vacated].fill(ZERO);

        self.lo -= l;
        self.hi += l;
        Ok(())
    }

    /// One time step: coin, then shift by `l`.
    pub fn step(&mut self, l: usize) -> Result<()> {
        self.apply_coin();
        self.apply_shift(l)?;
        self.t += 1;
        Ok(())
    }

    pub fn total_norm(&self) -> f64 {
        let (ls, rs) = self.occupied();
        ls.iter().zip(rs).map(|(l, r)| l.norm_sqr() + r.norm_sqr()).sum()
    }

    /// `f(x) = |ψ_L(x)|² + |ψ_R(x)|²` over the occupied window.
    pub fn probability_profile(&self) -> ProbabilityProfile {
        let (ls, rs) = self.occupied();
        let (x0, x1) = self.window();
        let f = ls.iter().zip(rs).map(|(l, r)| l.norm_sqr() + r.norm_sqr()).collect();
        ProbabilityProfile::new(self.t, (x0..=x1).collect(), f)
    }

    /// Moments, range and reduced coin density in one pass over the window.
    pub fn observe(&self, threshold: f64) -> StepObservables {
        let (ls, rs) = self.occupied();
        let x0 = self.window().0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let mut rho_ll = 0.0;
        let mut rho_rr = 0.0;
        let mut rho_lr = ZERO;
        let mut first = None;
        let mut last = None;
        for (i, (l, r)) in ls.iter().zip(rs).enumerate() {
            let pl = l.norm_sqr();
            let pr = r.norm_sqr();
            let f = pl + pr;
            let x = (x0 + i as i64) as f64;
            m1 += x * f;
            m2 += x * x * f;
            rho_ll += pl;
            rho_rr += pr;
            rho_lr += l * r.conj();
            if f > threshold {
                if first.is_none() {
                    first = Some(i);
                }
                last = Some(i);
            }
        }
        let range = match (first, last) {
            (Some(a), Some(b)) => (b - a) as f64,
            _ => 0.0,
        };
        StepObservables {
            norm: rho_ll + rho_rr,
            mean_x: m1,
            mean_x2: m2,
            range,
            rho: CoinDensityMatrix::from_parts(rho_ll, rho_rr, rho_lr),
        }
    }
}

/// Per-step scalars extracted directly from a state.
#[derive(Debug, Clone, Copy)]
pub struct StepObservables {
    pub norm: f64,
    pub mean_x: f64,
    pub mean_x2: f64,
    pub range: f64,
    pub rho: CoinDensityMatrix,
}
