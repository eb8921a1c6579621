//! Discrete-time quantum walk on the line whose step length is redrawn at
//! every time step from a truncated power law `P(l) ∝ l^(-1-δ)`,
//! `1 <= l <= l_max`.
//!
//! The crate is layered bottom-up:
//!
//! * [`steplen`] builds and samples the step-length distribution.
//! * [`walker`] evolves a single realization exactly (Hadamard coin followed
//!   by a conditional shift of length `l`).
//! * [`observables`] extracts moments, range and the coin entanglement entropy.
//! * [`ensemble`] averages many reproducibly seeded realizations.
//! * [`scaling`] holds the analysis pipeline: data collapse, stretched
//!   exponential and power-tail fits, moment and parameter-scan fits, and the
//!   crossover estimate.
//! * [`analysis`] runs those fits over one grid point or a whole sweep.

pub mod analysis;
pub mod ensemble;
pub mod error;
pub mod fit;
pub mod observables;
pub mod scaling;
pub mod steplen;
mod sum;
pub mod walker;

pub use ensemble::{realization_seed, run_ensemble, run_realization, EnsembleResult, RunConfig};
pub use error::{Error, Result};
pub use observables::{
    moments, range, reduced_coin_density, von_neumann_entropy, CoinDensityMatrix,
    ObservableSeries, ProbabilityProfile,
};
pub use steplen::StepLengthDistribution;
pub use walker::{CoinAmplitudes, CoinOrder, Convention, WalkerState};
