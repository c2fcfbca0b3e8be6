//! Pseudospectral simulation of stochastic Schrödinger equations
//! `i du = Δu dt + V u dt + G(u) dW` on the torus `[0, 2π]`, with an
//! exponential integrator and the usual implicit and explicit competitors.

pub mod error;
pub mod initial;
pub mod montecarlo;
pub mod noise;
pub mod observables;
pub mod scalar_oracle;
pub mod schemes;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use initial::{InitialCondition, PotentialKind};
pub use montecarlo::{
    fit_slope, run_strong_error, run_trace, EnsembleConfig, FailureCounts, SlopeFit,
    StrongErrorReport, StrongErrorTable, TraceReport,
};
pub use noise::{sample_increment, sample_stream, CovarianceSpec, NoiseIncrement};
pub use observables::{Observable, ObservableSeries};
pub use scalar_oracle::ScalarProblem;
pub use schemes::{NoiseMode, ProblemSpec, SchemeKind, Stepper};
pub use spectral::{Fourier, GridSpec, Potential, SpectralState, C64};
