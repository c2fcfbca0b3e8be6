//! Monte Carlo ensembles: strong errors against a fine reference and
//! observable time series, with coupled noise across step sizes.
//!
//! Each sample draws its noise at the reference step from its own child
//! stream and feeds every coarser step size with exact partial sums of those
//! fine increments. Reductions run in sample-index order, so results do not
//! depend on the number of worker threads.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::{fill_increment, sample_stream, NoiseIncrement};
use crate::observables::{drift_line, fmt_f64, Observable, ObservableSeries};
use crate::schemes::{NoiseMode, ProblemSpec, SchemeKind, Stepper};
use crate::spectral::{check_same_grid, SpectralState, C64};
use crate::stats::{rms_with_jackknife, MeanAccumulator};

/// Samples processed per batch in trace runs; bounds memory for long horizons.
const TRACE_BATCH: usize = 256;

#[derive(Clone, Debug)]
pub struct EnsembleConfig {
    pub num_samples: usize,
    pub master_seed: u64,
    pub horizon: f64,
    /// Finest step; every entry of `step_sizes` must be an integer multiple.
    pub reference_step: f64,
    pub step_sizes: Vec<f64>,
    pub problem: ProblemSpec,
    pub initial: SpectralState,
    pub schemes: Vec<SchemeKind>,
    /// Scheme run at `reference_step` to stand in for the exact solution.
    pub reference_scheme: SchemeKind,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl EnsembleConfig {
    pub fn new(problem: ProblemSpec, initial: SpectralState) -> Self {
        Self {
            num_samples: 1000,
            master_seed: 0,
            horizon: 1.0,
            reference_step: 0.1,
            step_sizes: vec![0.1],
            problem,
            initial,
            schemes: vec![SchemeKind::Sexp],
            reference_scheme: SchemeKind::Sexp,
            threads: None,
        }
    }
}

/// Step count `round(a / b)`, provided it is a positive integer within rounding.
fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() <= 1e-9 * n).then_some(n as usize)
}

/// Validated geometry of a run: fine step count and per-lane factors.
#[derive(Clone, Debug)]
struct Plan {
    fine_steps: usize,
    /// Step sizes in decreasing order with their aggregation factors.
    lanes: Vec<(f64, usize)>,
}

fn plan(cfg: &EnsembleConfig) -> Result<Plan> {
    if cfg.num_samples < 2 {
        return Err(Error::Config("num_samples must be at least 2".into()));
    }
    if !cfg.horizon.is_finite() || cfg.horizon <= 0.0 {
        return Err(Error::InvalidTime(cfg.horizon));
    }
    if !cfg.reference_step.is_finite() || cfg.reference_step <= 0.0 {
        return Err(Error::InvalidStep(cfg.reference_step));
    }
    if cfg.schemes.is_empty() || cfg.step_sizes.is_empty() {
        return Err(Error::Config("at least one scheme and one step size required".into()));
    }
    check_same_grid(cfg.problem.grid, cfg.initial.grid())?;
    check_same_grid(cfg.problem.grid, cfg.problem.covariance.grid())?;
    let fine_steps = integer_ratio(cfg.horizon, cfg.reference_step).ok_or_else(|| {
        Error::Config(format!(
            "horizon {} is not a multiple of the reference step {}",
            cfg.horizon, cfg.reference_step
        ))
    })?;
    let mut lanes = Vec::with_capacity(cfg.step_sizes.len());
    for &k in &cfg.step_sizes {
        if !k.is_finite() || k <= 0.0 {
            return Err(Error::InvalidStep(k));
        }
        let factor = integer_ratio(k, cfg.reference_step).ok_or_else(|| {
            Error::Config(format!(
                "step {k} is not a multiple of the reference step {}",
                cfg.reference_step
            ))
        })?;
        if fine_steps % factor != 0 {
            return Err(Error::Divisibility {
                len: fine_steps,
                factor,
            });
        }
        lanes.push((k, factor));
    }
    lanes.sort_by_key(|l| std::cmp::Reverse(l.1));
    if lanes.windows(2).any(|w| w[0].1 == w[1].1) {
        return Err(Error::Config("duplicate step sizes".into()));
    }
    Ok(Plan { fine_steps, lanes })
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Why a sample was dropped from the ensemble.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FailureCounts {
    pub non_finite: usize,
    pub no_convergence: usize,
}

impl FailureCounts {
    pub fn total(&self) -> usize {
        self.non_finite + self.no_convergence
    }

    fn record(&mut self, failure: SampleFailure) {
        match failure {
            SampleFailure::NonFinite => self.non_finite += 1,
            SampleFailure::NoConvergence => self.no_convergence += 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SampleFailure {
    NonFinite,
    NoConvergence,
}

fn advance(stepper: &Stepper, u: &SpectralState, dw: &NoiseIncrement) -> std::result::Result<SpectralState, SampleFailure> {
    match stepper.step(u, dw) {
        Ok(next) if next.is_finite() => Ok(next),
        Ok(_) => Err(SampleFailure::NonFinite),
        Err(Error::NoConvergence { .. }) => Err(SampleFailure::NoConvergence),
        Err(_) => Err(SampleFailure::NonFinite),
    }
}

/// One coarse step size inside a sample: its steppers, running states and the
/// partial sum of fine increments for the step in progress.
struct Lane<'a> {
    factor: usize,
    steppers: &'a [Stepper],
    states: Vec<SpectralState>,
    pending: NoiseIncrement,
    filled: usize,
}

impl<'a> Lane<'a> {
    fn new(factor: usize, k: f64, steppers: &'a [Stepper], initial: &SpectralState) -> Self {
        Self {
            factor,
            steppers,
            states: vec![initial.clone(); steppers.len()],
            pending: NoiseIncrement::zeros(initial.grid(), k),
            filled: 0,
        }
    }

    /// Adds one fine increment; returns true when a coarse step was taken.
    fn feed(&mut self, fine: &[C64]) -> std::result::Result<bool, SampleFailure> {
        if self.filled == 0 {
            self.pending.coeffs.copy_from_slice(fine);
        } else {
            self.pending.coeffs.iter_mut().zip(fine).for_each(|(a, b)| *a += b);
        }
        self.filled += 1;
        if self.filled < self.factor {
            return Ok(false);
        }
        self.filled = 0;
        for (state, stepper) in self.states.iter_mut().zip(self.steppers) {
            *state = advance(stepper, state, &self.pending)?;
        }
        Ok(true)
    }
}

fn build_steppers(cfg: &EnsembleConfig, plan: &Plan) -> Result<Vec<Vec<Stepper>>> {
    plan.lanes
        .iter()
        .map(|&(k, _)| {
            cfg.schemes
                .iter()
                .map(|&kind| Stepper::new(kind, cfg.problem.clone(), k))
                .collect()
        })
        .collect()
}

/// Strong (root-mean-square, end-time, L²) errors of one scheme.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrongErrorTable {
    pub scheme: SchemeKind,
    pub step_sizes: Vec<f64>,
    pub rms_errors: Vec<f64>,
    pub std_errs: Vec<f64>,
    /// Least-squares slope of `log error` against `log k`; absent when an
    /// error is zero or only one step size was run.
    pub fitted_slope: Option<f64>,
}

impl StrongErrorTable {
    /// `k,rms_error,std_err`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k,rms_error,std_err")?;
        for i in 0..self.step_sizes.len() {
            writeln!(
                out,
                "{},{},{}",
                fmt_f64(self.step_sizes[i]),
                fmt_f64(self.rms_errors[i]),
                fmt_f64(self.std_errs[i])
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

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrongErrorReport {
    pub tables: Vec<StrongErrorTable>,
    pub samples_used: usize,
    pub failures: FailureCounts,
}

impl StrongErrorReport {
    pub fn table(&self, scheme: SchemeKind) -> Option<&StrongErrorTable> {
        self.tables.iter().find(|t| t.scheme == scheme)
    }
}

/// Squared end-time errors of one sample, indexed `[lane][scheme]` with lanes
/// in decreasing step order.
type SampleErrors = Vec<Vec<f64>>;

fn strong_sample(
    cfg: &EnsembleConfig,
    plan: &Plan,
    reference: &Stepper,
    steppers: &[Vec<Stepper>],
    index: u64,
) -> std::result::Result<SampleErrors, SampleFailure> {
    let mut rng = sample_stream(cfg.master_seed, index);
    let mut fine = NoiseIncrement::zeros(cfg.problem.grid, cfg.reference_step);
    let mut reference_state = cfg.initial.clone();
    let mut lanes: Vec<Lane> = plan
        .lanes
        .iter()
        .zip(steppers)
        .map(|(&(k, factor), st)| Lane::new(factor, k, st, &cfg.initial))
        .collect();
    for _ in 0..plan.fine_steps {
        fill_increment(&cfg.problem.covariance, cfg.reference_step, &mut rng, &mut fine.coeffs);
        reference_state = advance(reference, &reference_state, &fine)?;
        for lane in &mut lanes {
            lane.feed(&fine.coeffs)?;
        }
    }
    Ok(lanes
        .iter()
        .map(|lane| {
            lane.states
                .iter()
                .map(|s| s.distance_sqr(&reference_state).expect("same grid"))
                .collect()
        })
        .collect())
}

/// Squared end-time errors `‖u^N − u_ref(T)‖²` of a single sample, indexed
/// `[step][scheme]` in the order of `cfg.step_sizes` and `cfg.schemes`.
/// Returns `None` when the sample diverged or an implicit solve failed.
pub fn strong_error_for_sample(cfg: &EnsembleConfig, index: u64) -> Result<Option<Vec<Vec<f64>>>> {
    let plan = plan(cfg)?;
    let reference = Stepper::new(cfg.reference_scheme, cfg.problem.clone(), cfg.reference_step)?;
    let steppers = build_steppers(cfg, &plan)?;
    let Ok(sorted) = strong_sample(cfg, &plan, &reference, &steppers, index) else {
        return Ok(None);
    };
    Ok(Some(
        cfg.step_sizes
            .iter()
            .map(|&k| {
                let lane = plan.lanes.iter().position(|&(kk, _)| kk == k).expect("planned");
                sorted[lane].clone()
            })
            .collect(),
    ))
}

/// Runs the coupled strong-error experiment.
pub fn run_strong_error(cfg: &EnsembleConfig) -> Result<StrongErrorReport> {
    let plan = plan(cfg)?;
    let reference = Stepper::new(cfg.reference_scheme, cfg.problem.clone(), cfg.reference_step)?;
    let steppers = build_steppers(cfg, &plan)?;
    let results: Vec<std::result::Result<SampleErrors, SampleFailure>> = with_threads(cfg.threads, || {
        (0..cfg.num_samples as u64)
            .into_par_iter()
            .map(|i| strong_sample(cfg, &plan, &reference, &steppers, i))
            .collect()
    })?;

    let mut failures = FailureCounts::default();
    let mut per_cell: Vec<Vec<Vec<f64>>> = vec![vec![Vec::with_capacity(cfg.num_samples); cfg.schemes.len()]; plan.lanes.len()];
    for result in results {
        match result {
            Ok(errors) => {
                for (lane, row) in errors.into_iter().enumerate() {
                    for (scheme, e) in row.into_iter().enumerate() {
                        per_cell[lane][scheme].push(e);
                    }
                }
            }
            Err(f) => failures.record(f),
        }
    }
    let samples_used = cfg.num_samples - failures.total();

    let tables = cfg
        .schemes
        .iter()
        .enumerate()
        .map(|(s, &scheme)| {
            let step_sizes: Vec<f64> = plan.lanes.iter().map(|&(k, _)| k).collect();
            let (rms_errors, std_errs): (Vec<f64>, Vec<f64>) = (0..plan.lanes.len())
                .map(|lane| rms_with_jackknife(&per_cell[lane][s]))
                .unzip();
            let fitted_slope = fit_slope(&step_sizes, &rms_errors).ok().map(|f| f.slope);
            StrongErrorTable {
                scheme,
                step_sizes,
                rms_errors,
                std_errs,
                fitted_slope,
            }
        })
        .collect();
    Ok(StrongErrorReport {
        tables,
        samples_used,
        failures,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceReport {
    /// One series per `(step size, scheme)`, step sizes in decreasing order.
    pub series: Vec<TraceSeries>,
    pub samples_used: usize,
    pub failures: FailureCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceSeries {
    pub scheme: SchemeKind,
    pub step: f64,
    pub series: ObservableSeries,
    /// Final mean more than three standard errors below the theory line.
    pub below_theory_at_end: bool,
}

impl TraceReport {
    pub fn get(&self, scheme: SchemeKind, step: f64) -> Option<&ObservableSeries> {
        self.series
            .iter()
            .find(|s| s.scheme == scheme && (s.step - step).abs() <= 1e-12 * step)
            .map(|s| &s.series)
    }
}

fn check_observable(cfg: &EnsembleConfig, observable: Observable) -> Result<()> {
    if cfg.problem.noise != NoiseMode::Additive {
        return Err(Error::Config(format!(
            "{observable} drift lines hold for additive noise only"
        )));
    }
    match (observable, cfg.problem.potential.is_some()) {
        (Observable::Energy, true) => Err(Error::Config(
            "use energy_with_potential when a potential is present".into(),
        )),
        (Observable::EnergyWithPotential, false) => Err(Error::Config(
            "energy_with_potential needs a potential".into(),
        )),
        (Observable::Momentum, true) => Err(Error::Config(
            "momentum drift line assumes no potential".into(),
        )),
        _ => Ok(()),
    }
}

/// Observable values of one sample at every recorded time, indexed
/// `[lane][scheme][time]`.
fn trace_sample(
    cfg: &EnsembleConfig,
    plan: &Plan,
    steppers: &[Vec<Stepper>],
    observable: Observable,
    initial_value: f64,
    index: u64,
) -> std::result::Result<Vec<Vec<Vec<f64>>>, SampleFailure> {
    let mut rng = sample_stream(cfg.master_seed, index);
    let mut fine = NoiseIncrement::zeros(cfg.problem.grid, cfg.reference_step);
    let mut lanes: Vec<Lane> = plan
        .lanes
        .iter()
        .zip(steppers)
        .map(|(&(k, factor), st)| Lane::new(factor, k, st, &cfg.initial))
        .collect();
    let mut records: Vec<Vec<Vec<f64>>> = plan
        .lanes
        .iter()
        .map(|&(_, factor)| {
            let mut v = Vec::with_capacity(plan.fine_steps / factor + 1);
            v.push(initial_value);
            vec![v; cfg.schemes.len()]
        })
        .collect();
    let potential = cfg.problem.potential.as_ref();
    for _ in 0..plan.fine_steps {
        fill_increment(&cfg.problem.covariance, cfg.reference_step, &mut rng, &mut fine.coeffs);
        for (lane, rec) in lanes.iter_mut().zip(records.iter_mut()) {
            if lane.feed(&fine.coeffs)? {
                for ((state, stepper), r) in lane.states.iter().zip(lane.steppers).zip(rec.iter_mut()) {
                    r.push(observable.evaluate(state, potential, stepper.fourier()));
                }
            }
        }
    }
    Ok(records)
}

/// Ensemble mean of `observable` at every step of every scheme and step
/// size, paired with its drift line.
pub fn run_trace(cfg: &EnsembleConfig, observable: Observable) -> Result<TraceReport> {
    let plan = plan(cfg)?;
    check_observable(cfg, observable)?;
    let steppers = build_steppers(cfg, &plan)?;
    let potential = cfg.problem.potential.as_ref();
    let initial_value = observable.evaluate(&cfg.initial, potential, steppers[0][0].fourier());

    let mut accumulators: Vec<Vec<Vec<MeanAccumulator>>> = plan
        .lanes
        .iter()
        .map(|&(_, factor)| vec![vec![MeanAccumulator::default(); plan.fine_steps / factor + 1]; cfg.schemes.len()])
        .collect();
    let mut failures = FailureCounts::default();

    let mut start = 0usize;
    while start < cfg.num_samples {
        let end = (start + TRACE_BATCH).min(cfg.num_samples);
        let batch: Vec<_> = with_threads(cfg.threads, || {
            (start as u64..end as u64)
                .into_par_iter()
                .map(|i| trace_sample(cfg, &plan, &steppers, observable, initial_value, i))
                .collect()
        })?;
        for result in batch {
            match result {
                Ok(records) => {
                    for (lane_acc, lane_rec) in accumulators.iter_mut().zip(records) {
                        for (scheme_acc, values) in lane_acc.iter_mut().zip(lane_rec) {
                            scheme_acc.iter_mut().zip(values).for_each(|(a, v)| a.push(v));
                        }
                    }
                }
                Err(f) => failures.record(f),
            }
        }
        start = end;
    }

    let mut series = Vec::new();
    for (&(k, _), lane_acc) in plan.lanes.iter().zip(&accumulators) {
        for (&scheme, acc) in cfg.schemes.iter().zip(lane_acc) {
            let times: Vec<f64> = (0..acc.len()).map(|n| n as f64 * k).collect();
            let theory = drift_line(observable, &cfg.problem.covariance, potential, initial_value, &times)?;
            let values = acc.iter().map(|a| a.mean()).collect();
            let std_errs = acc.iter().map(|a| a.std_err()).collect();
            let s = ObservableSeries::new(observable, times, values, std_errs, theory)?;
            let below_theory_at_end = s.z_score(s.len() - 1) < -3.0;
            series.push(TraceSeries {
                scheme,
                step: k,
                series: s,
                below_theory_at_end,
            });
        }
    }
    Ok(TraceReport {
        series,
        samples_used: cfg.num_samples - failures.total(),
        failures,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `log(error)` on `log(k)`.
pub fn fit_slope(step_sizes: &[f64], errors: &[f64]) -> Result<SlopeFit> {
    if step_sizes.len() != errors.len() || step_sizes.len() < 2 {
        return Err(Error::InvalidFitData);
    }
    if step_sizes.iter().chain(errors).any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::InvalidFitData);
    }
    let xs: Vec<f64> = step_sizes.iter().map(|k| k.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidFitData);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::CovarianceSpec;
    use crate::spectral::GridSpec;
    use approx::assert_relative_eq;

    #[test]
    fn fit_exact_power_laws() {
        let ks = [0.25, 0.125, 0.0625, 0.03125];
        let linear: Vec<f64> = ks.iter().map(|k| 3.0 * k).collect();
        let f = fit_slope(&ks, &linear).unwrap();
        assert_relative_eq!(f.slope, 1.0, max_relative = 1e-12);
        assert_relative_eq!(f.intercept, 3.0f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0, max_relative = 1e-12);
        let half: Vec<f64> = ks.iter().map(|k| 0.2 * k.sqrt()).collect();
        assert_relative_eq!(fit_slope(&ks, &half).unwrap().slope, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_slope(&[0.1], &[1.0]).is_err());
        assert!(fit_slope(&[0.1, 0.2], &[1.0, 0.0]).is_err());
        assert!(fit_slope(&[0.1, -0.2], &[1.0, 2.0]).is_err());
        assert!(fit_slope(&[0.1, 0.1], &[1.0, 2.0]).is_err());
    }

    fn small_cfg() -> EnsembleConfig {
        let g = GridSpec::new(8).unwrap();
        let problem = ProblemSpec::new(CovarianceSpec::power_decay(g, 2.0), NoiseMode::Additive);
        let mut cfg = EnsembleConfig::new(problem, SpectralState::zeros(g));
        cfg.horizon = 0.5;
        cfg.reference_step = 0.125;
        cfg.step_sizes = vec![0.25, 0.125];
        cfg.num_samples = 4;
        cfg
    }

    #[test]
    fn plan_validation() {
        let mut cfg = small_cfg();
        assert_eq!(plan(&cfg).unwrap().fine_steps, 4);
        cfg.step_sizes = vec![0.2];
        assert!(plan(&cfg).is_err());
        cfg.step_sizes = vec![0.375];
        assert!(matches!(plan(&cfg), Err(Error::Divisibility { len: 4, factor: 3 })));
        cfg.step_sizes = vec![0.25, 0.25];
        assert!(plan(&cfg).is_err());
        let mut cfg = small_cfg();
        cfg.horizon = 0.3;
        assert!(plan(&cfg).is_err());
        let mut cfg = small_cfg();
        cfg.num_samples = 1;
        assert!(plan(&cfg).is_err());
    }

    #[test]
    fn tables_list_steps_in_decreasing_order() {
        let mut cfg = small_cfg();
        cfg.step_sizes = vec![0.125, 0.5, 0.25];
        let report = run_strong_error(&cfg).unwrap();
        assert_eq!(report.tables[0].step_sizes, vec![0.5, 0.25, 0.125]);
    }

    #[test]
    fn observable_compatibility() {
        let mut cfg = small_cfg();
        assert!(run_trace(&cfg, Observable::EnergyWithPotential).is_err());
        cfg.problem.noise = NoiseMode::Multiplicative;
        assert!(run_trace(&cfg, Observable::Mass).is_err());
    }
}
