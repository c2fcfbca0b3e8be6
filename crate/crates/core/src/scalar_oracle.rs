//! Scalar test equation `i dy = a y dt + b dβ`.
//!
//! Each Fourier mode of the linear additive problem is one copy of this
//! equation with `a = −n²` and `b = √λ_n`. Second moments of every scheme obey
//! an exact affine recursion `m⁺ = α m + β`, which this module propagates
//! without sampling, alongside a pathwise Monte Carlo cross-check.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::sample_stream;
use crate::observables::fmt_f64;
use crate::schemes::SchemeKind;
use crate::spectral::C64;
use crate::stats::MeanAccumulator;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarProblem {
    pub a: f64,
    pub b: f64,
    /// `E|y(0)|²`.
    pub m0: f64,
    pub k: f64,
}

impl ScalarProblem {
    pub fn new(a: f64, b: f64, m0: f64, k: f64) -> Result<Self> {
        let p = Self { a, b, m0, k };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite() && self.m0.is_finite()) {
            return Err(Error::Config("scalar problem parameters must be finite".into()));
        }
        if self.b < 0.0 || self.m0 < 0.0 {
            return Err(Error::Config("b and m0 must be non-negative".into()));
        }
        if !self.k.is_finite() || self.k <= 0.0 {
            return Err(Error::InvalidStep(self.k));
        }
        Ok(())
    }

    /// The coefficients `(α, β)` of `E|y⁺|² = α E|y|² + β`.
    ///
    /// SEM and CN coincide with BEM and MP on the scalar equation.
    pub fn moment_map(&self, scheme: SchemeKind) -> (f64, f64) {
        let ak2 = (self.a * self.k).powi(2);
        let noise = self.b * self.b * self.k;
        match scheme {
            SchemeKind::Sexp => (1.0, noise),
            SchemeKind::Em => (1.0 + ak2, noise),
            SchemeKind::Bem | SchemeKind::Sem => {
                let d = 1.0 / (1.0 + ak2);
                (d, noise * d)
            }
            // |1 − iak/2| = |1 + iak/2|, forcing divided by |1 + iak/2|² = 1 + a²k²/4.
            SchemeKind::Mp | SchemeKind::Cn => (1.0, noise / (1.0 + 0.25 * ak2)),
        }
    }

    /// One pathwise step with complex increment `dbeta` (`E|dβ|² = k`).
    pub fn step(&self, scheme: SchemeKind, y: C64, dbeta: C64) -> C64 {
        let i = C64::new(0.0, 1.0);
        let ak = self.a * self.k;
        let forcing = i * (self.b * dbeta);
        match scheme {
            SchemeKind::Sexp => C64::from_polar(1.0, -ak) * (y - forcing),
            SchemeKind::Em => y - i * ak * y - forcing,
            SchemeKind::Bem | SchemeKind::Sem => (y - forcing) / (1.0 + i * ak),
            SchemeKind::Mp | SchemeKind::Cn => ((1.0 - 0.5 * i * ak) * y - forcing) / (1.0 + 0.5 * i * ak),
        }
    }
}

/// `E|y(t)|² = m0 + b² t`.
pub fn exact_second_moment(p: &ScalarProblem, t: f64) -> Result<f64> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidTime(t));
    }
    Ok(p.m0 + p.b * p.b * t)
}

/// `[E|y⁰|², …, E|yⁿ|²]` from the exact per-step moment map, propagated in
/// double-double arithmetic.
pub fn moment_recursion(scheme: SchemeKind, p: &ScalarProblem, n_steps: usize) -> Result<Vec<f64>> {
    p.validate()?;
    let (alpha, beta) = p.moment_map(scheme);
    let mut m = DoubleDouble::from(p.m0);
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(m.value());
    for _ in 0..n_steps {
        m = m.mul_f64(alpha).add_f64(beta);
        out.push(m.value());
    }
    Ok(out)
}

/// Sample mean of `|yⁿ|²` over `num_samples` paths started at `y⁰ = √m0`,
/// with its standard error.
pub fn mc_second_moment(
    scheme: SchemeKind,
    p: &ScalarProblem,
    n_steps: usize,
    num_samples: usize,
    master_seed: u64,
) -> Result<(f64, f64)> {
    p.validate()?;
    if num_samples < 2 {
        return Err(Error::Config("need at least two samples".into()));
    }
    let scale = (0.5 * p.k).sqrt();
    let finals: Vec<f64> = (0..num_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = sample_stream(master_seed, s as u64);
            let mut y = C64::new(p.m0.sqrt(), 0.0);
            for _ in 0..n_steps {
                let g1: f64 = rng.sample(StandardNormal);
                let g2: f64 = rng.sample(StandardNormal);
                y = p.step(scheme, y, C64::new(g1, g2) * scale);
            }
            y.norm_sqr()
        })
        .collect();
    let mut acc = MeanAccumulator::default();
    finals.iter().for_each(|&v| acc.push(v));
    Ok((acc.mean(), acc.std_err()))
}

/// Second-moment trajectories of the four scalar schemes next to the exact line.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMomentTable {
    pub times: Vec<f64>,
    pub exact: Vec<f64>,
    pub sexp: Vec<f64>,
    pub mp: Vec<f64>,
    pub bem: Vec<f64>,
    pub em: Vec<f64>,
}

impl ScalarMomentTable {
    pub fn compute(p: &ScalarProblem, n_steps: usize) -> Result<Self> {
        let times: Vec<f64> = (0..=n_steps).map(|n| n as f64 * p.k).collect();
        let exact = times
            .iter()
            .map(|&t| exact_second_moment(p, t))
            .collect::<Result<_>>()?;
        Ok(Self {
            exact,
            sexp: moment_recursion(SchemeKind::Sexp, p, n_steps)?,
            mp: moment_recursion(SchemeKind::Mp, p, n_steps)?,
            bem: moment_recursion(SchemeKind::Bem, p, n_steps)?,
            em: moment_recursion(SchemeKind::Em, p, n_steps)?,
            times,
        })
    }

    /// `t,exact,sexp,mp,bem,em`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,exact,sexp,mp,bem,em")?;
        for i in 0..self.times.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_f64(self.times[i]),
                fmt_f64(self.exact[i]),
                fmt_f64(self.sexp[i]),
                fmt_f64(self.mp[i]),
                fmt_f64(self.bem[i]),
                fmt_f64(self.em[i])
            )?;
        }
        Ok(())
    }
}

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Clone, Copy, Debug)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }
}

impl DoubleDouble {
    fn value(self) -> f64 {
        self.hi + self.lo
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn quick_two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        Self { hi: s, lo: b - (s - a) }
    }

    fn mul_f64(self, x: f64) -> Self {
        let p = self.hi * x;
        let err = self.hi.mul_add(x, -p);
        Self::quick_two_sum(p, err + self.lo * x)
    }

    fn add_f64(self, x: f64) -> Self {
        let (s, e) = Self::two_sum(self.hi, x);
        Self::quick_two_sum(s, e + self.lo)
    }
}
