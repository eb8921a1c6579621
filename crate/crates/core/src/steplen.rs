//! Truncated power-law step lengths.
//!
//! `P(l) = A l^(-1-δ)` for `l = 1..=l_max`, with `A` fixed by normalization.
//! The distribution is immutable once built and can be shared freely between
//! worker threads; sampling takes the caller's own random stream.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::compensated_sum;

#[derive(Debug, Clone, PartialEq)]
pub struct StepLengthDistribution {
    delta: f64,
    lmax: usize,
    norm: f64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

/// The part of a distribution that goes into run metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLengthSummary {
    pub delta: f64,
    pub lmax: usize,
    pub norm_a: f64,
}

impl StepLengthDistribution {
    /// Builds the normalized pmf and cdf for exponent `delta >= 0` and cutoff `lmax >= 1`.
    ///
    /// Weights that underflow for extreme `delta` are stored as zero and are
    /// never sampled.
    pub fn new(delta: f64, lmax: usize) -> Result<Self> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::domain(format!("delta must be finite and >= 0, got {delta}")));
        }
        if lmax == 0 {
            return Err(Error::domain("lmax must be >= 1"));
        }
        let exponent = -1.0 - delta;
        let weights: Vec<f64> = (1..=lmax).map(|l| (l as f64).powf(exponent)).collect();
        let total = compensated_sum(weights.iter().copied());
        let norm = 1.0 / total;
        let pmf: Vec<f64> = weights.iter().map(|w| w * norm).collect();

        let mut cdf = Vec::with_capacity(lmax);
        let mut acc = crate::sum::CompensatedSum::default();
        for p in &pmf {
            acc.add(*p);
            cdf.push(acc.value().min(1.0));
        }
        // pin the top so every uniform variate in [0, 1) maps inside the support
        *cdf.last_mut().unwrap() = 1.0;

        Ok(Self { delta, lmax, norm, pmf, cdf })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    /// Normalization constant `A`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Probabilities indexed from `l = 1` (slot 0).
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn pmf_at(&self, l: usize) -> Result<f64> {
        if l == 0 || l > self.lmax {
            return Err(Error::domain(format!("step length {l} outside 1..={}", self.lmax)));
        }
        Ok(self.pmf[l - 1])
    }

    /// Inverse-cdf lookup: the smallest `l` with `cdf(l) >= u`.
    pub fn step_for_uniform(&self, u: f64) -> usize {
        let idx = self.cdf.partition_point(|&c| c < u);
        idx.min(self.lmax - 1) + 1
    }

    /// Draws one step length, consuming exactly one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.step_for_uniform(u)
    }

    pub fn summary(&self) -> StepLengthSummary {
        StepLengthSummary { delta: self.delta, lmax: self.lmax, norm_a: self.norm }
    }

    /// Total-variation distance between this pmf and observed step counts.
    pub fn total_variation(&self, counts: &[u64]) -> f64 {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return 1.0;
        }
        0.5 * self
            .pmf
            .iter()
            .zip(counts)
            .map(|(p, &c)| (p - c as f64 / n as f64).abs())
            .sum::<f64>()
    }
}
