//! Time steppers for `i du = Δu dt + V(x)u dt + G(u) dW` on the torus.
//!
//! Every scheme is written per Fourier mode as
//!
//! ```text
//! u⁺_n = P_n u_n + F_n e_n,    e = −i k V u − i G(u) ΔW
//! ```
//!
//! with `θ = k n²` and
//!
//! | scheme     | `P_n`                     | `F_n`            | `e` evaluated at |
//! |------------|---------------------------|------------------|------------------|
//! | SEXP       | `e^{iθ}`                  | `e^{iθ}`         | `u`              |
//! | BEM, SEM   | `1/(1 − iθ)`              | `1/(1 − iθ)`     | `u`              |
//! | EM         | `1 + iθ`                  | `1`              | `u`              |
//! | MP, CN     | `(1 + iθ/2)/(1 − iθ/2)`   | `1/(1 − iθ/2)`   | `(u⁺ + u)/2`     |
//!
//! `G(u)ΔW` is `ΔW` for additive noise and the pseudospectral product `u ⊙ ΔW`
//! (left endpoint, Itô) for multiplicative noise. The midpoint schemes resolve
//! their implicit `V` and noise terms by Picard iteration with the diagonal
//! `Δ`-solve as preconditioner; without potential and with additive noise the
//! iteration is skipped because the closed form is exact.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{CovarianceSpec, NoiseIncrement};
use crate::spectral::{check_same_grid, Fourier, GridSpec, Potential, SpectralState, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Additive,
    Multiplicative,
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseMode::Additive => "additive",
            NoiseMode::Multiplicative => "multiplicative",
        })
    }
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "additive" => Ok(NoiseMode::Additive),
            "multiplicative" => Ok(NoiseMode::Multiplicative),
            _ => Err(Error::Unknown {
                kind: "noise mode",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeKind {
    /// Stochastic exponential integrator.
    #[serde(rename = "SEXP")]
    Sexp,
    /// Implicit midpoint rule.
    #[serde(rename = "MP")]
    Mp,
    /// Backward Euler–Maruyama.
    #[serde(rename = "BEM")]
    Bem,
    /// Semi-implicit Euler–Maruyama, explicit in `V u`.
    #[serde(rename = "SEM")]
    Sem,
    /// Crank–Nicolson.
    #[serde(rename = "CN")]
    Cn,
    /// Explicit Euler–Maruyama.
    #[serde(rename = "EM")]
    Em,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::Sexp,
        SchemeKind::Mp,
        SchemeKind::Bem,
        SchemeKind::Sem,
        SchemeKind::Cn,
        SchemeKind::Em,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Sexp => "SEXP",
            SchemeKind::Mp => "MP",
            SchemeKind::Bem => "BEM",
            SchemeKind::Sem => "SEM",
            SchemeKind::Cn => "CN",
            SchemeKind::Em => "EM",
        }
    }

    fn is_midpoint(&self) -> bool {
        matches!(self, SchemeKind::Mp | SchemeKind::Cn)
    }

    /// Free-flight and forcing multipliers `(P, F)` for `θ = k n²`.
    pub fn multipliers(&self, theta: f64) -> (C64, C64) {
        let one = C64::new(1.0, 0.0);
        match self {
            SchemeKind::Sexp => {
                let p = C64::from_polar(1.0, theta);
                (p, p)
            }
            SchemeKind::Bem | SchemeKind::Sem => {
                let f = one / C64::new(1.0, -theta);
                (f, f)
            }
            SchemeKind::Em => (C64::new(1.0, theta), one),
            SchemeKind::Mp | SchemeKind::Cn => {
                let f = one / C64::new(1.0, -0.5 * theta);
                (C64::new(1.0, 0.5 * theta) * f, f)
            }
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Unknown {
                kind: "scheme",
                name: s.to_string(),
            })
    }
}

/// The equation being integrated.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub grid: GridSpec,
    pub potential: Option<Potential>,
    pub noise: NoiseMode,
    pub covariance: CovarianceSpec,
}

impl ProblemSpec {
    pub fn new(covariance: CovarianceSpec, noise: NoiseMode) -> Self {
        Self {
            grid: covariance.grid(),
            potential: None,
            noise,
            covariance,
        }
    }

    pub fn with_potential(mut self, potential: Potential) -> Result<Self> {
        check_same_grid(self.grid, potential.grid())?;
        self.potential = Some(potential);
        Ok(self)
    }

    /// True when the equation is linear in `u` with state-independent forcing
    /// and no potential, so every scheme acts diagonally on the modes.
    pub fn is_diagonal(&self) -> bool {
        self.potential.is_none() && self.noise == NoiseMode::Additive
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointControl {
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for FixedPointControl {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tolerance: 1e-12,
        }
    }
}

/// One scheme bound to a problem and a step size, with its per-mode
/// multipliers precomputed.
#[derive(Clone, Debug)]
pub struct Stepper {
    kind: SchemeKind,
    problem: ProblemSpec,
    k: f64,
    fourier: Fourier,
    propagator: Vec<C64>,
    forcing: Vec<C64>,
    control: FixedPointControl,
}

impl Stepper {
    pub fn new(kind: SchemeKind, problem: ProblemSpec, k: f64) -> Result<Self> {
        if !k.is_finite() || k <= 0.0 {
            return Err(Error::InvalidStep(k));
        }
        let grid = problem.grid;
        let (propagator, forcing) = grid
            .modes()
            .map(|n| kind.multipliers(k * (n * n) as f64))
            .unzip();
        Ok(Self {
            kind,
            fourier: Fourier::new(grid),
            problem,
            k,
            propagator,
            forcing,
            control: FixedPointControl::default(),
        })
    }

    pub fn with_control(mut self, control: FixedPointControl) -> Self {
        self.control = control;
        self
    }

    pub fn with_fourier(mut self, fourier: Fourier) -> Result<Self> {
        check_same_grid(fourier.grid(), self.problem.grid)?;
        self.fourier = fourier;
        Ok(self)
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn step_size(&self) -> f64 {
        self.k
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn fourier(&self) -> &Fourier {
        &self.fourier
    }

    /// `(P_n, F_n)` for signed mode `n`.
    pub fn mode_multipliers(&self, n: i64) -> Option<(C64, C64)> {
        let i = self.problem.grid.index_of_mode(n)?;
        Some((self.propagator[i], self.forcing[i]))
    }

    /// Advances one step.
    pub fn step(&self, u: &SpectralState, dw: &NoiseIncrement) -> Result<SpectralState> {
        self.step_with_iterations(u, dw).map(|(s, _)| s)
    }

    /// Advances one step and reports the number of fixed-point sweeps used
    /// (1 for the explicit and diagonal cases).
    pub fn step_with_iterations(
        &self,
        u: &SpectralState,
        dw: &NoiseIncrement,
    ) -> Result<(SpectralState, usize)> {
        self.check_inputs(u, dw)?;
        if self.kind.is_midpoint() && !self.problem.is_diagonal() {
            return self.midpoint_iteration(u, dw);
        }
        let e = self.explicit_terms(u, dw);
        Ok((self.combine(u, &e), 1))
    }

    fn check_inputs(&self, u: &SpectralState, dw: &NoiseIncrement) -> Result<()> {
        check_same_grid(u.grid(), self.problem.grid)?;
        if dw.coeffs.len() != self.problem.grid.num_modes() {
            return Err(Error::LengthMismatch {
                expected: self.problem.grid.num_modes(),
                actual: dw.coeffs.len(),
            });
        }
        if (dw.dt - self.k).abs() > 1e-12 * self.k {
            return Err(Error::StepMismatch {
                expected: self.k,
                actual: dw.dt,
            });
        }
        Ok(())
    }

    /// `e = −i k V v − i G(v) ΔW`.
    fn explicit_terms(&self, v: &SpectralState, dw: &NoiseIncrement) -> Vec<C64> {
        let minus_i = C64::new(0.0, -1.0);
        match (&self.problem.potential, self.problem.noise) {
            (None, NoiseMode::Additive) => dw.coeffs.iter().map(|w| minus_i * w).collect(),
            (potential, noise) => {
                let mut phys = v.coeffs().to_vec();
                self.fourier.truncate(&mut phys);
                self.fourier.coeffs_to_physical_in_place(&mut phys);
                let noise_phys = (noise == NoiseMode::Multiplicative).then(|| {
                    let mut w = dw.coeffs.clone();
                    self.fourier.truncate(&mut w);
                    self.fourier.coeffs_to_physical_in_place(&mut w);
                    w
                });
                for (j, x) in phys.iter_mut().enumerate() {
                    let mut field = C64::new(0.0, 0.0);
                    if let Some(p) = potential {
                        field.re += self.k * p.values()[j];
                    }
                    if let Some(w) = &noise_phys {
                        field += w[j];
                    }
                    *x *= field;
                }
                self.fourier.physical_to_coeffs_in_place(&mut phys);
                self.fourier.truncate(&mut phys);
                if noise == NoiseMode::Additive {
                    phys.iter_mut().zip(&dw.coeffs).for_each(|(x, w)| *x += w);
                }
                phys.iter_mut().for_each(|x| *x *= minus_i);
                phys
            }
        }
    }

    fn combine(&self, u: &SpectralState, e: &[C64]) -> SpectralState {
        let coeffs = u
            .coeffs()
            .iter()
            .zip(e)
            .zip(self.propagator.iter().zip(&self.forcing))
            .map(|((c, e), (p, f))| p * c + f * e)
            .collect();
        SpectralState::from_coeffs(self.problem.grid, coeffs).expect("grid checked")
    }

    fn midpoint_iteration(
        &self,
        u: &SpectralState,
        dw: &NoiseIncrement,
    ) -> Result<(SpectralState, usize)> {
        let mut current = self.combine(u, &self.explicit_terms(u, dw));
        let mut residual = f64::INFINITY;
        for iteration in 1..=self.control.max_iters {
            let mid: Vec<C64> = current
                .coeffs()
                .iter()
                .zip(u.coeffs())
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let mid = SpectralState::from_coeffs(self.problem.grid, mid)?;
            let next = self.combine(u, &self.explicit_terms(&mid, dw));
            let update = next.distance_sqr(&current)?.sqrt();
            let size = next.norm_sqr().sqrt();
            current = next;
            if !size.is_finite() || !update.is_finite() {
                break;
            }
            residual = if size > 0.0 { update / size } else { update };
            if residual <= self.control.tolerance {
                return Ok((current, iteration));
            }
        }
        Err(Error::NoConvergence {
            iterations: self.control.max_iters,
            residual,
        })
    }
}
