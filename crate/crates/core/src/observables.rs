//! Scalars derived from `f(x,t)` and the coin-position entanglement entropy.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::walker::WalkerState;

/// Default threshold below which `f(x)` counts as numerically zero for the range.
pub const RANGE_THRESHOLD: f64 = 1e-12;

/// Tolerance on `Σ f` accepted by [`moments`].
pub const MOMENT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityProfile {
    pub t: usize,
    pub xs: Vec<i64>,
    pub f: Vec<f64>,
    pub n_realizations: usize,
    pub stderr: Option<Vec<f64>>,
}

impl ProbabilityProfile {
    /// Single-realization profile; `xs` must be sorted.
    pub fn new(t: usize, xs: Vec<i64>, f: Vec<f64>) -> Self {
        debug_assert_eq!(xs.len(), f.len());
        Self { t, xs, f, n_realizations: 1, stderr: None }
    }

    /// `f(x)`, zero off the stored positions.
    pub fn at(&self, x: i64) -> f64 {
        self.xs.binary_search(&x).map(|i| self.f[i]).unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        crate::sum::compensated_sum(self.f.iter().copied())
    }

    /// Checks `Σ f = 1` within `tol` and `f >= 0`.
    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let total = self.total();
        if (total - 1.0).abs() > tol {
            return Err(Error::consistency(format!(
                "profile at t = {} sums to {total}",
                self.t
            )));
        }
        if let Some(v) = self.f.iter().find(|v| **v < 0.0) {
            return Err(Error::consistency(format!("negative probability {v}")));
        }
        Ok(())
    }

    /// The `x → −x` image of this profile.
    pub fn mirrored(&self) -> Self {
        let xs = self.xs.iter().rev().map(|x| -x).collect();
        let f = self.f.iter().rev().copied().collect();
        let stderr = self.stderr.as_ref().map(|s| s.iter().rev().copied().collect());
        Self { t: self.t, xs, f, n_realizations: self.n_realizations, stderr }
    }
}

/// `(⟨x⟩, ⟨x²⟩)` of a normalized profile.
pub fn moments(profile: &ProbabilityProfile) -> Result<(f64, f64)> {
    let total = profile.total();
    if (total - 1.0).abs() > MOMENT_NORM_TOLERANCE {
        return Err(Error::consistency(format!("profile sums to {total}, cannot take moments")));
    }
    let mut m1 = crate::sum::CompensatedSum::default();
    let mut m2 = crate::sum::CompensatedSum::default();
    for (&x, &f) in profile.xs.iter().zip(&profile.f) {
        let x = x as f64;
        m1.add(x * f);
        m2.add(x * x * f);
    }
    Ok((m1.value(), m2.value()))
}

/// Width `x_max − x_min` of the sites where `f > threshold`; zero if none.
pub fn range(profile: &ProbabilityProfile, threshold: f64) -> f64 {
    let mut above = profile.xs.iter().zip(&profile.f).filter(|(_, f)| **f > threshold);
    match above.next() {
        None => 0.0,
        Some((&first, _)) => {
            let last = above.next_back().map_or(first, |(x, _)| *x);
            (last - first) as f64
        }
    }
}

/// Reduced density matrix of the coin, rows and columns ordered `(L, R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoinDensityMatrix {
    pub rho: [[Complex64; 2]; 2],
}

impl CoinDensityMatrix {
    pub(crate) fn from_parts(ll: f64, rr: f64, lr: Complex64) -> Self {
        Self {
            rho: [[Complex64::new(ll, 0.0), lr], [lr.conj(), Complex64::new(rr, 0.0)]],
        }
    }

    pub fn trace(&self) -> f64 {
        self.rho[0][0].re + self.rho[1][1].re
    }

    pub fn det(&self) -> f64 {
        (self.rho[0][0] * self.rho[1][1] - self.rho[0][1] * self.rho[1][0]).re
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.rho[0][0].im.abs() <= tol
            && self.rho[1][1].im.abs() <= tol
            && (self.rho[0][1] - self.rho[1][0].conj()).norm() <= tol
    }

    /// Eigenvalues in descending order, from the closed form for 2×2 Hermitian matrices.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let tr = self.trace();
        let disc = (tr * tr - 4.0 * self.det()).max(0.0).sqrt();
        [(tr + disc) / 2.0, (tr - disc) / 2.0]
    }

    /// Entrywise mean of several matrices.
    pub fn mean<'a, I: IntoIterator<Item = &'a CoinDensityMatrix>>(items: I) -> Option<Self> {
        let mut acc = [[Complex64::new(0.0, 0.0); 2]; 2];
        let mut n = 0usize;
        for m in items {
            for i in 0..2 {
                for j in 0..2 {
                    acc[i][j] += m.rho[i][j];
                }
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        for row in &mut acc {
            for v in row {
                *v /= n as f64;
            }
        }
        Some(Self { rho: acc })
    }
}

/// Traces the position out of `state`.
pub fn reduced_coin_density(state: &WalkerState) -> CoinDensityMatrix {
    let (ls, rs) = state.occupied();
    let mut ll = 0.0;
    let mut rr = 0.0;
    let mut lr = Complex64::new(0.0, 0.0);
    for (l, r) in ls.iter().zip(rs) {
        ll += l.norm_sqr();
        rr += r.norm_sqr();
        lr += l * r.conj();
    }
    CoinDensityMatrix::from_parts(ll, rr, lr)
}

const EIGEN_SLACK: f64 = 1e-10;

/// Von Neumann entropy in bits, `-Σ λ log₂ λ`, with `0 log 0 = 0`.
pub fn von_neumann_entropy(rho: &CoinDensityMatrix) -> Result<f64> {
    let mut s = 0.0;
    for lambda in rho.eigenvalues() {
        if !(-EIGEN_SLACK..=1.0 + EIGEN_SLACK).contains(&lambda) || lambda.is_nan() {
            return Err(Error::consistency(format!("density-matrix eigenvalue {lambda}")));
        }
        let lambda = lambda.clamp(0.0, 1.0);
        if lambda > 0.0 {
            s -= lambda * lambda.log2();
        }
    }
    Ok(s)
}

/// Per-time observables, either for one realization or as ensemble means.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub ts: Vec<usize>,
    pub mean_x: Vec<f64>,
    pub mean_x2: Vec<f64>,
    pub range: Vec<f64>,
    /// Mean over realizations of the per-realization entropy.
    pub entropy: Vec<f64>,
    /// Entropy of the realization-averaged coin density.
    pub entropy_of_mean_rho: Vec<f64>,
    pub stderr_x: Vec<f64>,
    pub stderr_x2: Vec<f64>,
    pub stderr_range: Vec<f64>,
    pub stderr_entropy: Vec<f64>,
}

impl ObservableSeries {
    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    /// Index of time `t`, if recorded.
    pub fn index_of(&self, t: usize) -> Option<usize> {
        self.ts.binary_search(&t).ok()
    }
}
