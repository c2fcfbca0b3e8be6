//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always shown.
//! The process fails if any criterion fails, unless the failure comes with a
//! deviation whose explanation is itself checked numerically (the line still
//! reads FAIL).

use std::fs;
use std::time::{Duration, Instant};

use ssexp_cli::{execute, parse_and_validate, RunConfig};
use ssexp_core::noise::{sample_increment, sample_stream, CovarianceSpec};
use ssexp_core::observables::mass;
use ssexp_core::scalar_oracle::{mc_second_moment, moment_recursion, ScalarProblem};
use ssexp_core::spectral::apply_semigroup;
use ssexp_core::{
    run_strong_error, run_trace, EnsembleConfig, GridSpec, InitialCondition, NoiseIncrement,
    NoiseMode, Observable, ProblemSpec, SchemeKind, SpectralState, Stepper, C64,
};

struct Outcome {
    id: u32,
    title: &'static str,
    pass: bool,
    /// Set when a failure is a known, explained disagreement with the target.
    deviation: Option<String>,
    detail: String,
    elapsed: Duration,
}

fn preset(args: &[&str]) -> RunConfig {
    parse_and_validate(std::iter::once("ssexp").chain(args.iter().copied())).expect("preset resolves")
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn exact_identity() -> (bool, String) {
    let g = GridSpec::new(64).unwrap();
    let (k, steps) = (1e-3, 1000);
    let problem = ProblemSpec::new(CovarianceSpec::zero(g), NoiseMode::Additive);
    let u0 = InitialCondition::Bump.state(g);
    let ((worst, _), elapsed) = timed(|| {
        let stepper = Stepper::new(SchemeKind::Sexp, problem, k).unwrap();
        let dw = NoiseIncrement::zeros(g, k);
        let u = (0..steps).fold(u0.clone(), |u, _| stepper.step(&u, &dw).unwrap());
        let exact = apply_semigroup(&u0, steps as f64 * k);
        let worst = u
            .coeffs()
            .iter()
            .zip(exact.coeffs())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        (worst, u)
    });
    let pass = worst <= 1e-12 && elapsed < Duration::from_secs(1);
    (pass, format!("max coefficient error {worst:.2e}, {} steps in {elapsed:.2?}", steps))
}

fn scalar_oracle() -> (bool, Option<String>, String) {
    let p = ScalarProblem::new(1.0, 1.0, 0.0, 0.1).unwrap();
    let mp = moment_recursion(SchemeKind::Mp, &p, 10).unwrap()[10];
    let target = 1.0 / (1.0 + 0.5 * 0.01);
    let mp_ok = (mp - target).abs() <= 1e-12;

    let mut bounds_ok = true;
    for &(a, b, k) in &[(1.0, 1.0, 0.1), (-4.0, 0.5, 0.05), (10.0, 2.0, 0.01), (0.3, 1.0, 0.5)] {
        let with_noise = ScalarProblem::new(a, b, 0.0, k).unwrap();
        let bem = moment_recursion(SchemeKind::Bem, &with_noise, 10_000).unwrap();
        let cap = b * b / (a * a * k);
        bounds_ok &= bem.iter().all(|&m| m <= cap * (1.0 + 1e-12));
        let noiseless = ScalarProblem::new(a, 0.0, 1.0, k).unwrap();
        let em = moment_recursion(SchemeKind::Em, &noiseless, 10_000).unwrap();
        let growth = 1.0 + (a * k).powi(2);
        bounds_ok &= em
            .iter()
            .enumerate()
            .all(|(n, &m)| m >= growth.powi(n as i32) * (1.0 - 1e-12));
    }

    // Monte Carlo at a·k = 0.8, where the two candidate slopes are far apart.
    let wide = ScalarProblem::new(8.0, 1.0, 0.0, 0.1).unwrap();
    let (est, se) = mc_second_moment(SchemeKind::Mp, &wide, 10, 100_000, 7).unwrap();
    let quarter = 1.0 / (1.0 + 0.64 / 4.0);
    let half = 1.0 / (1.0 + 0.64 / 2.0);
    let detail = format!(
        "MP m10 = {mp:.10} vs target {target:.10}; BEM cap and EM growth bounds {} for n <= 1e4; \
         MC at a=8,k=0.1: {est:.4} +- {se:.4} (z = {:.1} vs a^2k^2/4 form, {:.1} vs a^2k^2/2 form)",
        if bounds_ok { "hold" } else { "VIOLATED" },
        (est - quarter) / se,
        (est - half) / se,
    );
    let exact_quarter = 1.0 / (1.0 + 0.25 * 0.01);
    let deviation = (!mp_ok && (mp - exact_quarter).abs() <= 1e-12 && bounds_ok).then(|| {
        "the MP map has slope b^2k/(1+a^2k^2/4); the /2 closed form is not what the scheme produces".to_string()
    });
    (mp_ok && bounds_ok, deviation, detail)
}

fn trace_desk(exponent: f64, observable: Observable, symmetric: bool, threads: Option<usize>) -> EnsembleConfig {
    let g = GridSpec::new(64).unwrap();
    let mut cov = CovarianceSpec::power_decay(g, exponent);
    if symmetric {
        cov = cov.symmetric();
    }
    let mut cfg = EnsembleConfig::new(ProblemSpec::new(cov, NoiseMode::Additive), SpectralState::zeros(g));
    cfg.num_samples = 5000;
    cfg.master_seed = 20130101;
    cfg.horizon = 10.0;
    cfg.reference_step = 0.1;
    cfg.step_sizes = vec![0.1];
    cfg.schemes = if observable == Observable::Energy {
        vec![SchemeKind::Sexp, SchemeKind::Mp, SchemeKind::Bem]
    } else {
        vec![SchemeKind::Sexp]
    };
    cfg.threads = threads;
    cfg
}

fn mass_trace() -> (bool, String) {
    let cfg = trace_desk(2.0, Observable::Mass, false, Some(1));
    let (report, elapsed) = timed(|| run_trace(&cfg, Observable::Mass).unwrap());
    let s = report.get(SchemeKind::Sexp, 0.1).unwrap();
    let frac = s.fraction_within(3.0);
    let pass = frac >= 0.95 && elapsed < Duration::from_secs(120) && report.failures.total() == 0;
    (
        pass,
        format!(
            "{:.1}% of {} times within 3 SE (final z = {:.2}), single thread {elapsed:.2?}",
            100.0 * frac,
            s.len(),
            s.z_score(s.len() - 1)
        ),
    )
}

fn energy_trace() -> (bool, String) {
    let cfg = trace_desk(8.0, Observable::Energy, false, None);
    let report = run_trace(&cfg, Observable::Energy).unwrap();
    let get = |k| report.get(k, 0.1).unwrap();
    let (sexp, mp, bem) = (get(SchemeKind::Sexp), get(SchemeKind::Mp), get(SchemeKind::Bem));
    let last = sexp.len() - 1;
    let sexp_ok = sexp.fraction_within(3.0) >= 0.95;
    let mp_ok = mp.fraction_within(3.0) >= 0.95;
    let bem_ok = bem.z_score(last) < -3.0;
    (
        sexp_ok && mp_ok && bem_ok,
        format!(
            "within 3 SE: SEXP {:.1}%, MP {:.1}%; final z: SEXP {:.2}, MP {:.2}, BEM {:.1}",
            100.0 * sexp.fraction_within(3.0),
            100.0 * mp.fraction_within(3.0),
            sexp.z_score(last),
            mp.z_score(last),
            bem.z_score(last)
        ),
    )
}

fn momentum_trace() -> (bool, String) {
    let cfg = trace_desk(2.0, Observable::Momentum, true, None);
    let report = run_trace(&cfg, Observable::Momentum).unwrap();
    let s = report.get(SchemeKind::Sexp, 0.1).unwrap();
    let worst = (0..s.len()).map(|i| s.z_score(i).abs()).fold(0.0, f64::max);
    let flat = s.theory.iter().all(|&t| t == s.theory[0]);
    (
        flat && s.fraction_within(3.0) == 1.0,
        format!("constant theory line {}, max |z| = {worst:.2} over {} times", s.theory[0], s.len()),
    )
}

fn slope_of(cfg: &RunConfig, scheme: SchemeKind) -> (f64, String) {
    let report = run_strong_error(&cfg.ensemble().unwrap()).unwrap();
    let t = report.table(scheme).unwrap();
    let slope = t.fitted_slope.unwrap_or(f64::NAN);
    let errs: Vec<String> = t.rms_errors.iter().map(|e| format!("{e:.3e}")).collect();
    (slope, format!("{scheme} slope {slope:.3} (errors {})", errs.join(", ")))
}

fn strong_additive() -> (bool, String) {
    let cfg = preset(&["strong-error", "--preset", "fig1_linear_additive", "--schemes", "SEXP"]);
    let (slope, detail) = slope_of(&cfg, SchemeKind::Sexp);
    ((0.75..=1.25).contains(&slope), detail)
}

fn strong_potential() -> (bool, String) {
    let cfg = preset(&["strong-error", "--preset", "fig4_potential_error", "--schemes", "SEXP,SEM"]);
    let report = run_strong_error(&cfg.ensemble().unwrap()).unwrap();
    let slope = |k| report.table(k).unwrap().fitted_slope.unwrap_or(f64::NAN);
    let (sexp, sem) = (slope(SchemeKind::Sexp), slope(SchemeKind::Sem));
    (
        (0.75..=1.25).contains(&sexp) && (0.4..=1.1).contains(&sem),
        format!("SEXP slope {sexp:.3}, SEM slope {sem:.3}"),
    )
}

fn strong_multiplicative() -> (bool, Option<String>, String) {
    let cfg = preset(&["strong-error", "--preset", "fig6_multiplicative_error", "--schemes", "SEXP"]);
    let (slope, detail) = slope_of(&cfg, SchemeKind::Sexp);
    let pass = (0.3..=0.7).contains(&slope);
    if pass {
        return (true, None, detail);
    }
    // Same problem on a finer window, to tell a pre-asymptotic fit from a
    // wrong order.
    let fine = preset(&[
        "strong-error",
        "--preset",
        "fig6_multiplicative_error",
        "--schemes",
        "SEXP",
        "--steps",
        "2^-5,2^-6,2^-7,2^-8,2^-9",
        "--k-ref",
        "2^-12",
    ]);
    let (fine_slope, fine_detail) = slope_of(&fine, SchemeKind::Sexp);
    let deviation = (0.3..=0.7).contains(&fine_slope).then(|| {
        format!(
            "window 2^-2..2^-6 is pre-asymptotic (O(k) semigroup-lag term dominates); \
             on 2^-5..2^-9 the fitted slope is {fine_slope:.3}"
        )
    });
    (false, deviation, format!("{detail}; finer window: {fine_detail}"))
}

fn almost_trace() -> (bool, String) {
    let cfg = preset(&["trace", "--preset", "fig5_potential_mass", "--schemes", "SEXP", "--steps", "0.1,0.05"]);
    let ens = cfg.ensemble().unwrap();
    let report = run_trace(&ens, Observable::Mass).unwrap();
    let line = mass(&ens.initial) + cfg.horizon * ens.problem.covariance.trace_q();
    let defect = |k: f64| {
        let s = report.get(SchemeKind::Sexp, k).unwrap();
        let last = s.len() - 1;
        ((s.values[last] - line).abs(), s.std_errs[last])
    };
    let ((d1, s1), (d2, s2)) = (defect(0.1), defect(0.05));
    // Widest and narrowest ratios compatible with both 3-SE intervals.
    let hi = (d1 + 3.0 * s1) / (d2 - 3.0 * s2).max(f64::MIN_POSITIVE);
    let lo = (d1 - 3.0 * s1).max(0.0) / (d2 + 3.0 * s2);
    let pass = lo <= 3.0 && hi >= 1.5 && d2 > 3.0 * s2;
    (
        pass,
        format!(
            "defect {d1:.4} +- {s1:.4} at k=0.1, {d2:.4} +- {s2:.4} at k=0.05; ratio {:.3} (3-SE range [{lo:.3}, {hi:.3}])",
            d1 / d2
        ),
    )
}

fn per_mode_equivalence() -> (bool, String) {
    let g = GridSpec::new(16).unwrap();
    let (k, lambda) = (0.01, 0.7);
    let mut worst = 0.0f64;
    for scheme in SchemeKind::ALL {
        for n in [0i64, 1, 2, 3, -4, -8] {
            let cov = CovarianceSpec::from_fn(g, |m| if m == n { lambda } else { 0.0 }).unwrap();
            let stepper = Stepper::new(scheme, ProblemSpec::new(cov, NoiseMode::Additive), k).unwrap();
            let scalar = ScalarProblem::new(-((n * n) as f64), lambda.sqrt(), 0.0, k).unwrap();
            let y0 = C64::new(0.3, -0.1);
            let mut u = SpectralState::from_modes(g, &[(n, y0)]).unwrap();
            let mut y = y0;
            let mut rng = sample_stream(3, n.unsigned_abs());
            for _ in 0..1000 {
                let dw = sample_increment(&stepper.problem().covariance, k, &mut rng).unwrap();
                let dbeta = dw.coeffs[g.index_of_mode(n).unwrap()] / lambda.sqrt();
                u = stepper.step(&u, &dw).unwrap();
                y = scalar.step(scheme, y, dbeta);
                worst = worst.max((u.coeff(n) - y).norm() / y.norm().max(1.0));
            }
        }
    }
    (worst <= 1e-13, format!("6 schemes x 6 modes x 1000 steps, max relative deviation {worst:.2e}"))
}

fn determinism() -> (bool, String) {
    let root = tempfile::tempdir().unwrap();
    let mut same = true;
    let mut checked = 0;
    for (sub, name) in [("trace", "fig3_mass_trace"), ("strong-error", "fig1_linear_additive")] {
        let mut outputs = Vec::new();
        for threads in ["1", "4"] {
            let dir = root.path().join(format!("{name}-{threads}"));
            let cfg = preset(&[sub, "--preset", name, "--threads", threads, "--output", dir.to_str().unwrap()]);
            let summary = execute(&cfg).unwrap();
            let mut csvs: Vec<(String, Vec<u8>)> = summary
                .files
                .iter()
                .filter(|p| p.extension().is_some_and(|e| e == "csv"))
                .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap()))
                .collect();
            csvs.sort();
            outputs.push(csvs);
        }
        checked += outputs[0].len();
        same &= !outputs[0].is_empty() && outputs[0] == outputs[1];
    }
    (same, format!("{checked} CSV files byte-identical between 1 and 4 threads"))
}

fn main() {
    let mut outcomes = Vec::new();
    let mut record = |id, title, f: &dyn Fn() -> (bool, Option<String>, String)| {
        let ((pass, deviation, detail), elapsed) = timed(f);
        let o = Outcome {
            id,
            title,
            pass,
            deviation,
            detail,
            elapsed,
        };
        print_line(&o);
        outcomes.push(o);
    };
    let plain = |f: fn() -> (bool, String)| {
        move || {
            let (p, d) = f();
            (p, None, d)
        }
    };
    record(1, "exact-integrator identity", &plain(exact_identity));
    record(2, "scalar oracle exactness", &scalar_oracle);
    record(3, "mass trace formula", &plain(mass_trace));
    record(4, "energy trace formula", &plain(energy_trace));
    record(5, "momentum formula", &plain(momentum_trace));
    record(6, "strong order, additive noise", &plain(strong_additive));
    record(7, "strong order, potential", &plain(strong_potential));
    record(8, "strong order, multiplicative noise", &strong_multiplicative);
    record(9, "almost-trace O(k) defect", &plain(almost_trace));
    record(10, "per-mode oracle equivalence", &plain(per_mode_equivalence));
    record(11, "determinism across thread counts", &plain(determinism));

    let passed = outcomes.iter().filter(|o| o.pass).count();
    let documented = outcomes.iter().filter(|o| !o.pass && o.deviation.is_some()).count();
    let unexpected = outcomes.len() - passed - documented;
    println!(
        "acceptance: {passed} passed, {documented} failed with documented deviation, {unexpected} failed"
    );
    if unexpected > 0 {
        std::process::exit(1);
    }
}

fn print_line(o: &Outcome) {
    let status = match (o.pass, &o.deviation) {
        (true, _) => "PASS".to_string(),
        (false, Some(_)) => "FAIL (documented deviation)".to_string(),
        (false, None) => "FAIL".to_string(),
    };
    println!("[{status}] #{} {}: {} [{:.1?}]", o.id, o.title, o.detail, o.elapsed);
    if let (false, Some(why)) = (o.pass, &o.deviation) {
        println!("        note: {why}");
    }
}
