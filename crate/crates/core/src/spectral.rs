//! Periodic Fourier grid on `[0, 2π]`.
//!
//! Coefficients live in the orthonormal basis `e_n(x) = e^{inx}/√(2π)`, so
//! `∑|c_n|²` is the L² mass of the represented function. Storage follows the
//! native FFT ordering: slot `i` holds mode `n = i` for `i < M/2` and
//! `n = i - M` otherwise, giving signed modes `-M/2 ..= M/2 - 1`.
//!
//! With that layout the physical samples are
//! `u(x_j) = (1/√(2π)) · IDFT(c)_j` and the inverse is
//! `c = (√(2π)/M) · DFT(u)`, where IDFT/DFT are the unnormalised transforms.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Number of retained modes `M` on the fixed domain length `2π`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    num_modes: usize,
}

impl GridSpec {
    pub fn new(num_modes: usize) -> Result<Self> {
        if num_modes < 2 || !num_modes.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "number of modes must be even and at least 2, got {num_modes}"
            )));
        }
        Ok(Self { num_modes })
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn min_mode(&self) -> i64 {
        -(self.num_modes as i64 / 2)
    }

    pub fn max_mode(&self) -> i64 {
        self.num_modes as i64 / 2 - 1
    }

    /// Signed mode stored at slot `index`.
    #[inline]
    pub fn mode_of_index(&self, index: usize) -> i64 {
        debug_assert!(index < self.num_modes);
        if index < self.num_modes / 2 {
            index as i64
        } else {
            index as i64 - self.num_modes as i64
        }
    }

    /// Storage slot of signed mode `n`, if retained.
    #[inline]
    pub fn index_of_mode(&self, n: i64) -> Option<usize> {
        if n < self.min_mode() || n > self.max_mode() {
            return None;
        }
        Some(n.rem_euclid(self.num_modes as i64) as usize)
    }

    /// Signed modes in storage order.
    pub fn modes(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.num_modes).map(move |i| self.mode_of_index(i))
    }

    /// Physical nodes `x_j = 2πj/M`.
    pub fn nodes(&self) -> Vec<f64> {
        let h = 2.0 * PI / self.num_modes as f64;
        (0..self.num_modes).map(|j| h * j as f64).collect()
    }

    pub fn sample<F: Fn(f64) -> C64>(&self, f: F) -> Vec<C64> {
        self.nodes().into_iter().map(f).collect()
    }

    pub fn sample_real<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes().into_iter().map(f).collect()
    }

    /// Quadrature weight `2π/M`.
    pub fn cell_width(&self) -> f64 {
        2.0 * PI / self.num_modes as f64
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M={}", self.num_modes)
    }
}

/// Fourier coefficients of a field on the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    grid: GridSpec,
    coeffs: Vec<C64>,
}

impl SpectralState {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coeffs: vec![C64::new(0.0, 0.0); grid.num_modes()],
        }
    }

    /// Wraps coefficients given in storage order.
    pub fn from_coeffs(grid: GridSpec, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != grid.num_modes() {
            return Err(Error::LengthMismatch {
                expected: grid.num_modes(),
                actual: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    /// Builds a state from `(mode, coefficient)` pairs; unspecified modes are zero.
    pub fn from_modes(grid: GridSpec, modes: &[(i64, C64)]) -> Result<Self> {
        let mut state = Self::zeros(grid);
        for &(n, c) in modes {
            let i = grid.index_of_mode(n).ok_or_else(|| {
                Error::InvalidGrid(format!("mode {n} is not retained on grid {grid}"))
            })?;
            state.coeffs[i] = c;
        }
        Ok(state)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    /// Coefficient of signed mode `n` (zero when not retained).
    pub fn coeff(&self, n: i64) -> C64 {
        self.grid
            .index_of_mode(n)
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    /// `∑ |c_n|²`.
    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Squared L² distance `∑ |a_n − b_n|²`.
    pub fn distance_sqr(&self, other: &SpectralState) -> Result<f64> {
        check_same_grid(self.grid, other.grid)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum())
    }

    pub fn scale(&self, factor: C64) -> SpectralState {
        self.map_modes(|_, c| c * factor)
    }

    fn map_modes<F: Fn(i64, C64) -> C64>(&self, f: F) -> SpectralState {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| f(self.grid.mode_of_index(i), c))
            .collect();
        SpectralState {
            grid: self.grid,
            coeffs,
        }
    }
}

pub(crate) fn check_same_grid(a: GridSpec, b: GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch {
            left: a.num_modes(),
            right: b.num_modes(),
        });
    }
    Ok(())
}

/// Exact free-Schrödinger flow `S(t) = e^{-itΔ}`: `c_n ← e^{itn²} c_n`.
pub fn apply_semigroup(state: &SpectralState, t: f64) -> SpectralState {
    state.map_modes(|n, c| c * semigroup_symbol(n, t))
}

#[inline]
pub fn semigroup_symbol(n: i64, t: f64) -> C64 {
    let n2 = (n * n) as f64;
    C64::from_polar(1.0, n2 * t)
}

/// `c_n ← −n² c_n`.
pub fn laplacian(state: &SpectralState) -> SpectralState {
    state.map_modes(|n, c| c * (-((n * n) as f64)))
}

/// `c_n ← i n c_n`.
pub fn gradient(state: &SpectralState) -> SpectralState {
    state.map_modes(|n, c| c * C64::new(0.0, n as f64))
}

/// Aliasing treatment for pseudospectral products.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Dealias {
    #[default]
    None,
    /// Zero every mode with `|n| > M/3` in the factors and in the product.
    TwoThirds,
}

/// FFT plans for one grid. Cheap to clone; plans are shared and thread-safe.
#[derive(Clone)]
pub struct Fourier {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    dealias: Dealias,
}

impl fmt::Debug for Fourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fourier")
            .field("grid", &self.grid)
            .field("dealias", &self.dealias)
            .finish()
    }
}

impl Fourier {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            forward: planner.plan_fft_forward(grid.num_modes()),
            inverse: planner.plan_fft_inverse(grid.num_modes()),
            dealias: Dealias::None,
        }
    }

    pub fn with_dealias(mut self, dealias: Dealias) -> Self {
        self.dealias = dealias;
        self
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn dealias(&self) -> Dealias {
        self.dealias
    }

    /// Samples `u(x_j) = ∑_n c_n e^{inx_j}/√(2π)`.
    pub fn to_physical(&self, state: &SpectralState) -> Vec<C64> {
        let mut buf = state.coeffs.clone();
        self.coeffs_to_physical_in_place(&mut buf);
        buf
    }

    pub fn from_physical(&self, samples: &[C64]) -> Result<SpectralState> {
        if samples.len() != self.grid.num_modes() {
            return Err(Error::LengthMismatch {
                expected: self.grid.num_modes(),
                actual: samples.len(),
            });
        }
        let mut buf = samples.to_vec();
        self.physical_to_coeffs_in_place(&mut buf);
        Ok(SpectralState {
            grid: self.grid,
            coeffs: buf,
        })
    }

    pub(crate) fn coeffs_to_physical_in_place(&self, buf: &mut [C64]) {
        self.inverse.process(buf);
        let scale = 1.0 / (2.0 * PI).sqrt();
        buf.iter_mut().for_each(|v| *v *= scale);
    }

    pub(crate) fn physical_to_coeffs_in_place(&self, buf: &mut [C64]) {
        self.forward.process(buf);
        let scale = (2.0 * PI).sqrt() / self.grid.num_modes() as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }

    /// Nodewise product of two fields, evaluated through physical space.
    pub fn pointwise_multiply(&self, a: &SpectralState, b: &SpectralState) -> Result<SpectralState> {
        check_same_grid(a.grid, self.grid)?;
        check_same_grid(b.grid, self.grid)?;
        let mut pa = a.coeffs.clone();
        let mut pb = b.coeffs.clone();
        self.truncate(&mut pa);
        self.truncate(&mut pb);
        self.coeffs_to_physical_in_place(&mut pa);
        self.coeffs_to_physical_in_place(&mut pb);
        pa.iter_mut().zip(&pb).for_each(|(x, y)| *x *= y);
        self.physical_to_coeffs_in_place(&mut pa);
        self.truncate(&mut pa);
        Ok(SpectralState {
            grid: self.grid,
            coeffs: pa,
        })
    }

    /// Multiplies `state` by a real field given by its nodal values.
    pub fn multiply_real_field(&self, state: &SpectralState, field: &[f64]) -> Result<SpectralState> {
        check_same_grid(state.grid, self.grid)?;
        if field.len() != self.grid.num_modes() {
            return Err(Error::LengthMismatch {
                expected: self.grid.num_modes(),
                actual: field.len(),
            });
        }
        let mut buf = state.coeffs.clone();
        self.truncate(&mut buf);
        self.coeffs_to_physical_in_place(&mut buf);
        buf.iter_mut().zip(field).for_each(|(x, v)| *x *= v);
        self.physical_to_coeffs_in_place(&mut buf);
        self.truncate(&mut buf);
        Ok(SpectralState {
            grid: self.grid,
            coeffs: buf,
        })
    }

    pub(crate) fn truncate(&self, coeffs: &mut [C64]) {
        if self.dealias == Dealias::TwoThirds {
            let cutoff = self.grid.num_modes() as i64 / 3;
            for (i, c) in coeffs.iter_mut().enumerate() {
                if self.grid.mode_of_index(i).abs() > cutoff {
                    *c = C64::new(0.0, 0.0);
                }
            }
        }
    }
}

/// Real-valued multiplicative potential sampled on the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Potential {
    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_modes() {
            return Err(Error::LengthMismatch {
                expected: grid.num_modes(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("potential values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: GridSpec, f: F) -> Self {
        Self {
            grid,
            values: grid.sample_real(f),
        }
    }

    /// Builds a potential from complex samples, rejecting imaginary parts above `1e-14`.
    pub fn from_complex(grid: GridSpec, values: &[C64]) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| v.im.abs() > 1e-14) {
            return Err(Error::Config(format!(
                "potential must be real, found imaginary part {:e}",
                v.im
            )));
        }
        Self::from_values(grid, values.iter().map(|v| v.re).collect())
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Nodal average, i.e. `(1/2π)∫V dx` by the trapezoidal rule.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫ V |u|² dx` by quadrature on the nodes.
    pub fn weighted_mass(&self, fourier: &Fourier, state: &SpectralState) -> f64 {
        let samples = fourier.to_physical(state);
        let sum: f64 = samples
            .iter()
            .zip(&self.values)
            .map(|(u, v)| v * u.norm_sqr())
            .sum();
        self.grid.cell_width() * sum
    }
}
