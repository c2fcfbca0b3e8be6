//! Ensemble means of mass, energy and momentum against their drift lines.

use ssexp_core::noise::CovarianceSpec;
use ssexp_core::{
    run_trace, EnsembleConfig, GridSpec, InitialCondition, NoiseMode, Observable, ProblemSpec,
    SchemeKind, SpectralState,
};

fn config(cov: CovarianceSpec, initial: SpectralState, horizon: f64, samples: usize) -> EnsembleConfig {
    let mut cfg = EnsembleConfig::new(ProblemSpec::new(cov, NoiseMode::Additive), initial);
    cfg.horizon = horizon;
    cfg.reference_step = 0.1;
    cfg.step_sizes = vec![0.1];
    cfg.num_samples = samples;
    cfg.master_seed = 2024;
    cfg
}

#[test]
fn sexp_mass_follows_trace_line() {
    let g = GridSpec::new(16).unwrap();
    let cov = CovarianceSpec::power_decay(g, 2.0);
    let cfg = config(cov.clone(), SpectralState::zeros(g), 3.0, 2000);
    let report = run_trace(&cfg, Observable::Mass).unwrap();
    let s = report.get(SchemeKind::Sexp, 0.1).unwrap();
    assert_eq!(s.len(), 31);
    assert!((s.theory[30] - 3.0 * cov.trace_q()).abs() < 1e-12);
    assert!(s.fraction_within(3.0) >= 0.95, "fraction {}", s.fraction_within(3.0));
    assert_eq!(report.failures.total(), 0);
}

#[test]
fn sexp_energy_follows_trace_line() {
    let g = GridSpec::new(16).unwrap();
    let cov = CovarianceSpec::power_decay(g, 8.0);
    let cfg = config(cov, InitialCondition::Bump.state(g), 3.0, 2000);
    let s = run_trace(&cfg, Observable::Energy).unwrap();
    let s = s.get(SchemeKind::Sexp, 0.1).unwrap();
    assert!(s.fraction_within(3.0) >= 0.95, "fraction {}", s.fraction_within(3.0));
}

#[test]
fn symmetric_spectrum_conserves_expected_momentum() {
    let g = GridSpec::new(16).unwrap();
    let cov = CovarianceSpec::power_decay(g, 2.0).symmetric();
    let cfg = config(cov, InitialCondition::Gaussian.state(g), 2.0, 2000);
    let s = run_trace(&cfg, Observable::Momentum).unwrap();
    let s = s.get(SchemeKind::Sexp, 0.1).unwrap();
    assert!(s.theory.iter().all(|&t| t == s.theory[0]));
    assert!(s.fraction_within(3.0) >= 0.95);
}

#[test]
fn one_sided_spectrum_momentum_grows_with_positive_slope() {
    let g = GridSpec::new(8).unwrap();
    let cov = CovarianceSpec::from_fn(g, |n| if n > 0 { 1.0 / (1.0 + (n * n) as f64) } else { 0.0 }).unwrap();
    let rate = cov.momentum_drift_rate();
    assert!(rate > 0.0);
    let cfg = config(cov, SpectralState::zeros(g), 2.0, 4000);
    let s = run_trace(&cfg, Observable::Momentum).unwrap();
    let s = s.get(SchemeKind::Sexp, 0.1).unwrap();
    let last = s.len() - 1;
    assert!((s.theory[last] - 2.0 * rate).abs() < 1e-12);
    assert!(s.z_score(last).abs() < 3.0, "z = {}", s.z_score(last));
}

#[test]
fn zero_noise_gives_deterministic_means() {
    let g = GridSpec::new(16).unwrap();
    let mut cfg = config(CovarianceSpec::zero(g), InitialCondition::Bump.state(g), 1.0, 8);
    cfg.schemes = SchemeKind::ALL.to_vec();
    let report = run_trace(&cfg, Observable::Mass).unwrap();
    let m0 = ssexp_core::observables::mass(&cfg.initial);
    for entry in &report.series {
        assert!(entry.series.std_errs.iter().all(|&e| e == 0.0));
        if entry.scheme == SchemeKind::Sexp {
            assert!(entry.series.values.iter().all(|v| (v - m0).abs() <= 1e-12 * m0));
        }
    }
}
