//! Mass, energy and momentum of spectral states, and the affine drift laws
//! their expectations follow under additive noise.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{first_moment, CovarianceSpec};
use crate::spectral::{Fourier, Potential, SpectralState};

/// `M(u) = ∫|u|² dx = ∑|c_n|²`.
pub fn mass(u: &SpectralState) -> f64 {
    u.norm_sqr()
}

/// `½∑ n²|c_n|²`, minus `½∫V|u|²` when a potential is given.
pub fn energy(u: &SpectralState, potential: Option<(&Potential, &Fourier)>) -> f64 {
    let kinetic = 0.5
        * u.grid()
            .modes()
            .zip(u.coeffs())
            .map(|(n, c)| (n * n) as f64 * c.norm_sqr())
            .sum::<f64>();
    match potential {
        Some((v, fourier)) => kinetic - 0.5 * v.weighted_mass(fourier, u),
        None => kinetic,
    }
}

/// `p(u) = i∫(u∇ū − ū∇u) dx = 2∑ n|c_n|²`.
pub fn momentum(u: &SpectralState) -> f64 {
    let weights: Vec<f64> = u.coeffs().iter().map(|c| c.norm_sqr()).collect();
    2.0 * first_moment(u.grid(), &weights)
}

/// `Tr(Q^{1/2} V Q^{1/2}) = ∑ λ_n ⟨V e_n, e_n⟩`. Every Fourier mode has
/// `|e_n|² = 1/(2π)`, so each inner product is the nodal mean of `V`.
pub fn trace_qvq(spec: &CovarianceSpec, potential: &Potential) -> f64 {
    spec.trace_q() * potential.mean()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Mass,
    Energy,
    EnergyWithPotential,
    Momentum,
}

impl Observable {
    pub fn name(&self) -> &'static str {
        match self {
            Observable::Mass => "mass",
            Observable::Energy => "energy",
            Observable::EnergyWithPotential => "energy_with_potential",
            Observable::Momentum => "momentum",
        }
    }

    pub fn evaluate(
        &self,
        u: &SpectralState,
        potential: Option<&Potential>,
        fourier: &Fourier,
    ) -> f64 {
        match self {
            Observable::Mass => mass(u),
            Observable::Energy => energy(u, None),
            Observable::EnergyWithPotential => energy(u, potential.map(|v| (v, fourier))),
            Observable::Momentum => momentum(u),
        }
    }

    /// Slope of the expected observable in time.
    pub fn drift_rate(&self, spec: &CovarianceSpec, potential: Option<&Potential>) -> Result<f64> {
        Ok(match self {
            Observable::Mass => spec.trace_q(),
            Observable::Energy => 0.5 * spec.trace_grad_q_grad(),
            Observable::EnergyWithPotential => {
                let v = potential.ok_or_else(|| {
                    Error::Config("energy_with_potential needs a potential".into())
                })?;
                0.5 * (spec.trace_grad_q_grad() - trace_qvq(spec, v))
            }
            Observable::Momentum => spec.momentum_drift_rate(),
        })
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mass" => Ok(Observable::Mass),
            "energy" => Ok(Observable::Energy),
            "energy_with_potential" => Ok(Observable::EnergyWithPotential),
            "momentum" => Ok(Observable::Momentum),
            _ => Err(Error::Unknown {
                kind: "observable",
                name: s.to_string(),
            }),
        }
    }
}

/// `initial_value + slope · t` at every requested time.
pub fn drift_line(
    observable: Observable,
    spec: &CovarianceSpec,
    potential: Option<&Potential>,
    initial_value: f64,
    times: &[f64],
) -> Result<Vec<f64>> {
    let slope = observable.drift_rate(spec, potential)?;
    Ok(times.iter().map(|t| initial_value + slope * t).collect())
}

/// Ensemble mean of one observable over time, with its theoretical line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservableSeries {
    pub observable: Observable,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errs: Vec<f64>,
    pub theory: Vec<f64>,
}

impl ObservableSeries {
    pub fn new(
        observable: Observable,
        times: Vec<f64>,
        values: Vec<f64>,
        std_errs: Vec<f64>,
        theory: Vec<f64>,
    ) -> Result<Self> {
        let n = times.len();
        if values.len() != n || std_errs.len() != n || theory.len() != n {
            return Err(Error::Config("observable series columns differ in length".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("observable series times must increase".into()));
        }
        if std_errs.iter().any(|s| s.is_nan() || *s < 0.0) {
            return Err(Error::Config("standard errors must be non-negative".into()));
        }
        Ok(Self {
            observable,
            times,
            values,
            std_errs,
            theory,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `(mean − theory) / std_err` at index `i`; zero deviation with zero
    /// error counts as 0, nonzero deviation with zero error as ±∞.
    pub fn z_score(&self, i: usize) -> f64 {
        let d = self.values[i] - self.theory[i];
        if d == 0.0 {
            0.0
        } else {
            d / self.std_errs[i]
        }
    }

    /// Fraction of recorded times whose mean lies within `bands` standard
    /// errors of the theory line.
    pub fn fraction_within(&self, bands: f64) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        let hits = (0..self.len()).filter(|&i| self.z_score(i).abs() <= bands).count();
        hits as f64 / self.len() as f64
    }

    /// `time,mean,std_err,theory`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,mean,std_err,theory")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(self.times[i]),
                fmt_f64(self.values[i]),
                fmt_f64(self.std_errs[i]),
                fmt_f64(self.theory[i])
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Fixed 17-significant-digit scientific notation, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{apply_semigroup, GridSpec, C64};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(m: usize) -> GridSpec {
        GridSpec::new(m).unwrap()
    }

    fn random_state(g: GridSpec, seed: u64) -> SpectralState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..g.num_modes())
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        SpectralState::from_coeffs(g, coeffs).unwrap()
    }

    #[test]
    fn single_mode_values() {
        let g = grid(16);
        assert_eq!(mass(&SpectralState::zeros(g)), 0.0);
        assert_eq!(energy(&SpectralState::zeros(g), None), 0.0);
        assert_eq!(momentum(&SpectralState::zeros(g)), 0.0);
        let c3 = SpectralState::from_modes(g, &[(3, C64::new(2.0, 0.0))]).unwrap();
        assert_eq!(mass(&c3), 4.0);
        let c1 = SpectralState::from_modes(g, &[(1, C64::new(1.0, 0.0))]).unwrap();
        assert_eq!(energy(&c1, None), 0.5);
        assert_eq!(momentum(&c1), 2.0);
    }

    #[test]
    fn mass_matches_quadrature() {
        let g = grid(64);
        let f = Fourier::new(g);
        let samples = g.sample(|x| C64::new(2.0 / (2.0 - x.cos()), 0.0));
        let u = f.from_physical(&samples).unwrap();
        let quad = g.cell_width() * samples.iter().map(|v| v.norm_sqr()).sum::<f64>();
        assert_relative_eq!(mass(&u), quad, max_relative = 1e-12);
    }

    #[test]
    fn constant_state_energy_with_unit_potential() {
        let g = grid(32);
        let f = Fourier::new(g);
        let u = f.from_physical(&vec![C64::new(1.0, 0.0); 32]).unwrap();
        let v = Potential::from_fn(g, |_| 1.0);
        assert_relative_eq!(energy(&u, Some((&v, &f))), -0.5 * 2.0 * PI, max_relative = 1e-12);
        assert!(energy(&u, None).abs() < 1e-25);
    }

    #[test]
    fn symmetric_state_has_zero_momentum() {
        let g = grid(16);
        let u = SpectralState::from_modes(
            g,
            &[(2, C64::new(0.3, 0.0)), (-2, C64::new(-0.3, 0.0)), (5, C64::new(1.0, 0.0)), (-5, C64::new(1.0, 0.0))],
        )
        .unwrap();
        assert_eq!(momentum(&u), 0.0);
    }

    #[test]
    fn real_field_has_zero_momentum() {
        let g = grid(64);
        let f = Fourier::new(g);
        let u = f
            .from_physical(&g.sample(|x| C64::new((-5.0 * (x - PI).powi(2)).exp() + 0.3 * x.sin(), 0.0)))
            .unwrap();
        assert!(momentum(&u).abs() <= 1e-12 * mass(&u));
    }

    #[test]
    fn drift_lines() {
        let g = grid(6);
        let spec = CovarianceSpec::from_fn(g, |n| if n.abs() <= 2 { 1.0 / (1.0 + (n * n) as f64) } else { 0.0 }).unwrap();
        let line = drift_line(Observable::Mass, &spec, None, 0.0, &[0.0, 5.0]).unwrap();
        assert_relative_eq!(line[1], 12.0, max_relative = 1e-15);

        let sym = CovarianceSpec::power_decay(grid(16), 2.0).symmetric();
        let line = drift_line(Observable::Momentum, &sym, None, 1.5, &[0.0, 1.0, 7.0]).unwrap();
        assert_eq!(line, vec![1.5, 1.5, 1.5]);

        let c0 = 0.8;
        let v = Potential::from_fn(grid(16), |_| c0);
        let spec = CovarianceSpec::power_decay(grid(16), 2.0);
        assert_relative_eq!(trace_qvq(&spec, &v), c0 * spec.trace_q(), max_relative = 1e-15);
        let rate = Observable::EnergyWithPotential.drift_rate(&spec, Some(&v)).unwrap();
        assert_relative_eq!(rate, 0.5 * (spec.trace_grad_q_grad() - c0 * spec.trace_q()), max_relative = 1e-15);
        assert!(Observable::EnergyWithPotential.drift_rate(&spec, None).is_err());
    }

    #[test]
    fn observable_parse() {
        for o in [Observable::Mass, Observable::Energy, Observable::EnergyWithPotential, Observable::Momentum] {
            assert_eq!(o.name().parse::<Observable>().unwrap(), o);
        }
        assert!("entropy".parse::<Observable>().is_err());
    }

    #[test]
    fn series_validation_and_csv() {
        assert!(ObservableSeries::new(Observable::Mass, vec![0.0, 0.0], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(ObservableSeries::new(Observable::Mass, vec![0.0], vec![0.0; 2], vec![0.0], vec![0.0]).is_err());
        assert!(ObservableSeries::new(Observable::Mass, vec![0.0], vec![0.0], vec![-1.0], vec![0.0]).is_err());
        let s = ObservableSeries::new(Observable::Mass, vec![0.0, 0.1], vec![1.0, 1.25], vec![0.0, 0.5], vec![1.0, 1.2]).unwrap();
        let csv = s.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("time,mean,std_err,theory"));
        let row: Vec<f64> = lines.nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row, vec![0.1, 1.25, 0.5, 1.2]);
        assert_eq!(s.fraction_within(3.0), 1.0);
    }

    proptest! {
        #[test]
        fn fmt_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }

        #[test]
        fn free_flow_conserves_invariants(seed in any::<u64>(), t in -10.0f64..10.0) {
            let u = random_state(grid(64), seed);
            let v = apply_semigroup(&u, t);
            prop_assert!((mass(&v) - mass(&u)).abs() <= 1e-12 * mass(&u));
            prop_assert!((energy(&v, None) - energy(&u, None)).abs() <= 1e-12 * energy(&u, None));
            prop_assert!((momentum(&v) - momentum(&u)).abs() <= 1e-12 * energy(&u, None));
        }
    }
}
