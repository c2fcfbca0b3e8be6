//! Complex Q-Wiener increments in the Fourier eigenbasis.
//!
//! `W(x,t) = ∑_n √λ_n β_n(t) e_n(x)` with independent circularly symmetric
//! complex Brownian motions, `E|β_n(t)|² = t` (variance `t/2` per real component).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectral::{GridSpec, C64};

/// Shape of the eigenvalue sequence of `Q`.
#[derive(Clone, Debug, PartialEq)]
pub enum Spectrum {
    /// `λ_n = 1 / (1 + |n|^s)`.
    PowerDecay { exponent: f64 },
    Explicit,
}

/// Diagonal covariance operator truncated to the retained modes.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSpec {
    grid: GridSpec,
    kind: Spectrum,
    symmetric: bool,
    eigenvalues: Vec<f64>,
    sqrt_eigenvalues: Vec<f64>,
}

impl CovarianceSpec {
    pub fn power_decay(grid: GridSpec, exponent: f64) -> Self {
        let eigenvalues = grid
            .modes()
            .map(|n| 1.0 / (1.0 + (n.unsigned_abs() as f64).powf(exponent)))
            .collect();
        Self::build(grid, Spectrum::PowerDecay { exponent }, eigenvalues)
    }

    /// `values[j]` is the eigenvalue of mode `n = j − M/2`.
    pub fn explicit(grid: GridSpec, values: &[f64]) -> Result<Self> {
        if values.len() != grid.num_modes() {
            return Err(Error::LengthMismatch {
                expected: grid.num_modes(),
                actual: values.len(),
            });
        }
        let offset = grid.min_mode();
        Self::from_fn(grid, |n| values[(n - offset) as usize])
    }

    pub fn from_fn<F: Fn(i64) -> f64>(grid: GridSpec, f: F) -> Result<Self> {
        let mut eigenvalues = Vec::with_capacity(grid.num_modes());
        for n in grid.modes() {
            let value = f(n);
            if !value.is_finite() || value < 0.0 {
                return Err(Error::NegativeEigenvalue { mode: n, value });
            }
            eigenvalues.push(value);
        }
        Ok(Self::build(grid, Spectrum::Explicit, eigenvalues))
    }

    /// Zero covariance: every increment vanishes.
    pub fn zero(grid: GridSpec) -> Self {
        Self::build(grid, Spectrum::Explicit, vec![0.0; grid.num_modes()])
    }

    fn build(grid: GridSpec, kind: Spectrum, eigenvalues: Vec<f64>) -> Self {
        let sqrt_eigenvalues = eigenvalues.iter().map(|l| l.sqrt()).collect();
        Self {
            grid,
            kind,
            symmetric: false,
            eigenvalues,
            sqrt_eigenvalues,
        }
    }

    /// Drops the unpaired mode `n = −M/2` so the retained spectrum is symmetric.
    pub fn symmetric(mut self) -> Self {
        let i = self.grid.index_of_mode(self.grid.min_mode()).expect("min mode retained");
        self.eigenvalues[i] = 0.0;
        self.sqrt_eigenvalues[i] = 0.0;
        self.symmetric = true;
        self
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn kind(&self) -> &Spectrum {
        &self.kind
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Eigenvalues in storage order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn sqrt_eigenvalues(&self) -> &[f64] {
        &self.sqrt_eigenvalues
    }

    pub fn eigenvalue(&self, n: i64) -> f64 {
        self.grid.index_of_mode(n).map(|i| self.eigenvalues[i]).unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.eigenvalues.iter().all(|&l| l == 0.0)
    }

    fn weighted_sum<F: Fn(i64) -> f64>(&self, weight: F) -> f64 {
        self.grid
            .modes()
            .zip(&self.eigenvalues)
            .map(|(n, l)| weight(n) * l)
            .sum()
    }

    /// `Tr Q = ∑ λ_n`.
    pub fn trace_q(&self) -> f64 {
        self.weighted_sum(|_| 1.0)
    }

    /// `Tr(∇Q∇) = ∑ n² λ_n`.
    pub fn trace_grad_q_grad(&self) -> f64 {
        self.weighted_sum(|n| (n * n) as f64)
    }

    /// `−2 Im⟨Q^{1/2}, ∇Q^{1/2}⟩ = 2 ∑ n λ_n`, the slope of the expected momentum.
    pub fn momentum_drift_rate(&self) -> f64 {
        2.0 * first_moment(self.grid, &self.eigenvalues)
    }
}

/// `∑ n w_n` with `±n` paired first, so weights symmetric in `n` give
/// exactly zero.
pub(crate) fn first_moment(grid: GridSpec, weights: &[f64]) -> f64 {
    let half = grid.max_mode();
    let paired: f64 = (1..=half)
        .map(|n| {
            let plus = weights[grid.index_of_mode(n).expect("in range")];
            let minus = weights[grid.index_of_mode(-n).expect("in range")];
            n as f64 * (plus - minus)
        })
        .sum();
    let lowest = grid.min_mode();
    paired + lowest as f64 * weights[grid.index_of_mode(lowest).expect("in range")]
}

/// `ΔW` over one step, in the orthonormal basis.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseIncrement {
    pub coeffs: Vec<C64>,
    pub dt: f64,
}

impl NoiseIncrement {
    pub fn zeros(grid: GridSpec, dt: f64) -> Self {
        Self {
            coeffs: vec![C64::new(0.0, 0.0); grid.num_modes()],
            dt,
        }
    }
}

/// Independent stream for ensemble member `sample_index`.
///
/// The ChaCha stream id carries the sample index, so a child stream depends
/// only on `(master_seed, sample_index)` and never on scheduling.
pub fn sample_stream(master_seed: u64, sample_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(sample_index);
    rng
}

/// Draws `w_n = √λ_n (g₁ + i g₂) √(dt/2)` for every retained mode.
///
/// Two normals are consumed per mode even when `λ_n = 0`, so changing one
/// eigenvalue never shifts the draws of the others.
pub fn sample_increment<R: Rng + ?Sized>(
    spec: &CovarianceSpec,
    dt: f64,
    rng: &mut R,
) -> Result<NoiseIncrement> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidStep(dt));
    }
    let mut inc = NoiseIncrement {
        coeffs: Vec::with_capacity(spec.eigenvalues.len()),
        dt,
    };
    fill_increment(spec, dt, rng, &mut inc.coeffs);
    Ok(inc)
}

pub(crate) fn fill_increment<R: Rng + ?Sized>(
    spec: &CovarianceSpec,
    dt: f64,
    rng: &mut R,
    out: &mut Vec<C64>,
) {
    out.clear();
    let scale = (0.5 * dt).sqrt();
    for &s in &spec.sqrt_eigenvalues {
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        out.push(C64::new(g1, g2) * (scale * s));
    }
}

/// Sums consecutive groups of `factor` increments.
pub fn aggregate(increments: &[NoiseIncrement], factor: usize) -> Result<Vec<NoiseIncrement>> {
    if factor == 0 || !increments.len().is_multiple_of(factor) {
        return Err(Error::Divisibility {
            len: increments.len(),
            factor,
        });
    }
    let Some(first) = increments.first() else {
        return Ok(Vec::new());
    };
    let dt = first.dt;
    if let Some(bad) = increments.iter().find(|w| (w.dt - dt).abs() > 1e-12 * dt) {
        return Err(Error::StepMismatch {
            expected: dt,
            actual: bad.dt,
        });
    }
    Ok(increments
        .chunks(factor)
        .map(|group| {
            let mut coeffs = group[0].coeffs.clone();
            for w in &group[1..] {
                coeffs.iter_mut().zip(&w.coeffs).for_each(|(a, b)| *a += b);
            }
            NoiseIncrement {
                coeffs,
                dt: dt * factor as f64,
            }
        })
        .collect())
}
