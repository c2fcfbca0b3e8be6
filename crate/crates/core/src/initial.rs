//! Named initial data and potentials used by the experiment presets.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Fourier, GridSpec, Potential, SpectralState, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    Zero,
    /// `2 / (2 − cos x)`.
    Bump,
    /// `exp(−5 (x − π)²)`.
    Gaussian,
}

impl InitialCondition {
    pub fn name(&self) -> &'static str {
        match self {
            InitialCondition::Zero => "zero",
            InitialCondition::Bump => "bump",
            InitialCondition::Gaussian => "gaussian",
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            InitialCondition::Zero => 0.0,
            InitialCondition::Bump => 2.0 / (2.0 - x.cos()),
            InitialCondition::Gaussian => (-5.0 * (x - PI).powi(2)).exp(),
        }
    }

    /// Interpolant of the function on `grid`.
    pub fn state(&self, grid: GridSpec) -> SpectralState {
        if *self == InitialCondition::Zero {
            return SpectralState::zeros(grid);
        }
        let samples = grid.sample(|x| C64::new(self.value(x), 0.0));
        Fourier::new(grid)
            .from_physical(&samples)
            .expect("samples match the grid")
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitialCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(InitialCondition::Zero),
            "bump" => Ok(InitialCondition::Bump),
            "gaussian" => Ok(InitialCondition::Gaussian),
            _ => Err(Error::Unknown {
                kind: "initial condition",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    None,
    /// `1 / (1 + sin² x)`.
    InverseSinSquared,
}

impl PotentialKind {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialKind::None => "none",
            PotentialKind::InverseSinSquared => "inverse_sin2",
        }
    }

    pub fn build(&self, grid: GridSpec) -> Option<Potential> {
        match self {
            PotentialKind::None => None,
            PotentialKind::InverseSinSquared => {
                Some(Potential::from_fn(grid, |x| 1.0 / (1.0 + x.sin().powi(2))))
            }
        }
    }
}

impl fmt::Display for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PotentialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PotentialKind::None),
            "inverse_sin2" => Ok(PotentialKind::InverseSinSquared),
            _ => Err(Error::Unknown {
                kind: "potential",
                name: s.to_string(),
            }),
        }
    }
}
