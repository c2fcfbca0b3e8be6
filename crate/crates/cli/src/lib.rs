//! Command-line front end for the ssexp experiments.
//!
//! Every setting is a `key=value` pair. Values come from, in increasing
//! priority: the preset for the chosen scale, a flat config file, and
//! command-line flags (`--k-ref 0.001` sets `k_ref`). The resolved map is
//! type-checked before any computation and echoed into `manifest.json`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Arg, ArgMatches, Command};
use serde::Serialize;

use ssexp_core::noise::CovarianceSpec;
use ssexp_core::scalar_oracle::ScalarMomentTable;
use ssexp_core::{
    run_strong_error, run_trace, EnsembleConfig, FailureCounts, GridSpec, InitialCondition,
    NoiseMode, Observable, PotentialKind, ProblemSpec, ScalarProblem, SchemeKind,
};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SSEXP_OUTPUT_DIR";

/// Largest tolerated fraction of non-finite samples before exit code 1.
pub const MAX_FAILURE_FRACTION: f64 = 1e-3;

/// `(key, help)` for every recognised setting.
const KEYS: &[(&str, &str)] = &[
    ("modes", "number of Fourier modes M (even)"),
    ("samples", "Monte Carlo samples"),
    ("seed", "master seed (64-bit)"),
    ("horizon", "final time T"),
    ("steps", "comma-separated step sizes; `2^-5` notation accepted"),
    ("k_ref", "reference (finest) step; defaults to the smallest step"),
    ("exponent", "spectrum decay s in λ_n = 1/(1+|n|^s)"),
    ("symmetric", "drop the unpaired mode -M/2 (true/false)"),
    ("noise", "additive or multiplicative"),
    ("potential", "none or inverse_sin2"),
    ("initial", "zero, bump or gaussian"),
    ("schemes", "comma-separated list of SEXP, MP, BEM, SEM, CN, EM"),
    ("reference", "scheme used at k_ref for the reference solution"),
    ("observable", "mass, energy, energy_with_potential or momentum"),
    ("output", "output directory"),
    ("threads", "worker threads (default: all cores)"),
    ("a", "scalar test equation drift coefficient"),
    ("b", "scalar test equation noise coefficient"),
    ("m0", "scalar test equation initial second moment"),
    ("n_steps", "scalar test equation number of steps"),
];

const STRONG_KEYS: &[&str] = &[
    "modes", "samples", "seed", "horizon", "steps", "k_ref", "exponent", "symmetric", "noise",
    "potential", "initial", "schemes", "reference", "output", "threads",
];
const TRACE_KEYS: &[&str] = &[
    "modes", "samples", "seed", "horizon", "steps", "k_ref", "exponent", "symmetric", "noise",
    "potential", "initial", "schemes", "observable", "output", "threads",
];
const SCALAR_KEYS: &[&str] = &["a", "b", "m0", "steps", "n_steps", "output"];

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    StrongError,
    Trace,
    ScalarTest,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::StrongError => "strong-error",
            Subcommand::Trace => "trace",
            Subcommand::ScalarTest => "scalar-test",
        }
    }

    fn keys(&self) -> &'static [&'static str] {
        match self {
            Subcommand::StrongError => STRONG_KEYS,
            Subcommand::Trace => TRACE_KEYS,
            Subcommand::ScalarTest => SCALAR_KEYS,
        }
    }

    fn required(&self) -> &'static [&'static str] {
        match self {
            Subcommand::StrongError => &["modes", "samples", "horizon", "steps", "exponent", "schemes"],
            Subcommand::Trace => &["modes", "samples", "horizon", "steps", "exponent", "schemes", "observable"],
            Subcommand::ScalarTest => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(format!("unknown scale `{s}` (expected desk or paper)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Fig1LinearAdditive,
    Fig2EnergyTrace,
    Fig3MassTrace,
    Fig4PotentialError,
    Fig5PotentialMass,
    Fig6MultiplicativeError,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Fig1LinearAdditive,
        Preset::Fig2EnergyTrace,
        Preset::Fig3MassTrace,
        Preset::Fig4PotentialError,
        Preset::Fig5PotentialMass,
        Preset::Fig6MultiplicativeError,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig1LinearAdditive => "fig1_linear_additive",
            Preset::Fig2EnergyTrace => "fig2_energy_trace",
            Preset::Fig3MassTrace => "fig3_mass_trace",
            Preset::Fig4PotentialError => "fig4_potential_error",
            Preset::Fig5PotentialMass => "fig5_potential_mass",
            Preset::Fig6MultiplicativeError => "fig6_multiplicative_error",
        }
    }

    pub fn subcommand(&self) -> Subcommand {
        match self {
            Preset::Fig1LinearAdditive | Preset::Fig4PotentialError | Preset::Fig6MultiplicativeError => {
                Subcommand::StrongError
            }
            Preset::Fig2EnergyTrace | Preset::Fig3MassTrace | Preset::Fig5PotentialMass => Subcommand::Trace,
        }
    }

    /// Settings of the preset at the given scale.
    pub fn values(&self, scale: Scale) -> BTreeMap<String, String> {
        let desk = scale == Scale::Desk;
        let mut v: Vec<(&str, &str)> = match self.subcommand() {
            Subcommand::StrongError => vec![
                ("horizon", "0.5"),
                ("modes", if desk { "64" } else { "256" }),
                ("samples", if desk { "2000" } else { "750000" }),
                ("steps", if desk { "2^-2,2^-3,2^-4,2^-5,2^-6" } else { "2^-2,2^-3,2^-4,2^-5,2^-6,2^-7" }),
                ("k_ref", if desk { "2^-11" } else { "2^-10" }),
            ],
            _ => vec![
                ("steps", "0.1"),
                ("modes", if desk { "64" } else { "128" }),
                ("samples", if desk { "5000" } else { "10000" }),
            ],
        };
        v.push(("seed", "20130101"));
        match self {
            Preset::Fig1LinearAdditive => {
                v.extend([("exponent", "8"), ("initial", "zero"), ("schemes", "SEXP,MP,BEM")]);
                v.push(("reference", if desk { "SEXP" } else { "MP" }));
            }
            Preset::Fig2EnergyTrace => v.extend([
                ("exponent", "8"),
                ("initial", "zero"),
                ("schemes", "SEXP,MP,BEM"),
                ("observable", "energy"),
                ("horizon", if desk { "10" } else { "2500" }),
            ]),
            Preset::Fig3MassTrace => v.extend([
                ("exponent", "2"),
                ("initial", "zero"),
                ("schemes", "SEXP,MP,BEM"),
                ("observable", "mass"),
                ("horizon", "10"),
            ]),
            Preset::Fig4PotentialError => {
                v.extend([
                    ("exponent", "6"),
                    ("initial", "bump"),
                    ("potential", "inverse_sin2"),
                    ("schemes", "SEXP,CN,SEM"),
                    ("reference", "SEXP"),
                ]);
                if !desk {
                    v.retain(|(k, _)| *k != "k_ref" && *k != "steps");
                    v.extend([("k_ref", "2^-9"), ("steps", "2^-2,2^-3,2^-4,2^-5,2^-6")]);
                }
            }
            Preset::Fig5PotentialMass => v.extend([
                ("exponent", "2"),
                ("initial", "bump"),
                ("potential", "inverse_sin2"),
                ("schemes", "SEXP,CN,SEM"),
                ("observable", "mass"),
                ("horizon", "5"),
            ]),
            Preset::Fig6MultiplicativeError => v.extend([
                ("exponent", "5.1"),
                ("initial", "gaussian"),
                ("noise", "multiplicative"),
                ("schemes", "SEXP,CN,SEM"),
                ("reference", "SEXP"),
            ]),
        }
        v.into_iter().map(|(k, x)| (k.to_string(), x.to_string())).collect()
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset `{s}`"))
    }
}

/// Failure modes of a run, each with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Argument syntax, including `--help` and `--version` requests.
    Usage(clap::Error),
    /// Invalid or incomplete configuration (exit 2).
    Config(String),
    /// Filesystem or engine failure (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(e) => e.exit_code(),
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(e) => write!(f, "{e}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Fully resolved, type-checked run description.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Subcommand,
    pub preset: Option<Preset>,
    pub scale: Scale,
    pub modes: usize,
    pub samples: usize,
    pub seed: u64,
    pub horizon: f64,
    pub steps: Vec<f64>,
    pub k_ref: f64,
    pub exponent: f64,
    pub symmetric: bool,
    pub noise: NoiseMode,
    pub potential: PotentialKind,
    pub initial: InitialCondition,
    pub schemes: Vec<SchemeKind>,
    pub reference: SchemeKind,
    pub observable: Observable,
    pub output: PathBuf,
    pub threads: Option<usize>,
    pub a: f64,
    pub b: f64,
    pub m0: f64,
    pub n_steps: usize,
    /// The key/value map this config was resolved from, relevant keys only.
    pub settings: BTreeMap<String, String>,
}

/// The clap command tree.
pub fn cli() -> Command {
    let sub = |name: &'static str, about: &'static str| {
        let mut c = Command::new(name)
            .about(about)
            .arg(Arg::new("preset").long("preset").value_name("NAME").help("figure preset"))
            .arg(
                Arg::new("scale")
                    .long("scale")
                    .value_name("SCALE")
                    .help("desk (default) or paper"),
            )
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("FILE")
                    .help("flat key=value settings file"),
            );
        for (key, help) in KEYS {
            c = c.arg(Arg::new(*key).long(flag_name(key)).value_name("VALUE").help(*help));
        }
        c
    };
    Command::new("ssexp")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Exponential integrators for stochastic Schrödinger equations")
        .subcommand_required(true)
        .subcommand(sub("strong-error", "mean-square errors against a fine reference"))
        .subcommand(sub("trace", "ensemble observables against their drift lines"))
        .subcommand(sub("scalar-test", "second moments of the scalar test equation"))
}

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected key=value, got `{line}`", lineno + 1)))?;
        let key = key.trim().replace('-', "_");
        let known = KEYS.iter().any(|(k, _)| *k == key) || key == "preset" || key == "scale";
        if !known {
            return Err(config_err(format!("line {}: unknown key `{key}`", lineno + 1)));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

/// Resolves argv (including the program name) into a [`RunConfig`].
pub fn parse_and_validate<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = cli().try_get_matches_from(argv).map_err(CliError::Usage)?;
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let command = match name {
        "strong-error" => Subcommand::StrongError,
        "trace" => Subcommand::Trace,
        _ => Subcommand::ScalarTest,
    };
    let file = match sub.get_one::<String>("config") {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_err(format!("reading {path}: {e}")))?;
            parse_config_file(&text)?
        }
        None => BTreeMap::new(),
    };
    let mut flags = flag_values(sub);
    for key in ["preset", "scale"] {
        if let Some(v) = sub.get_one::<String>(key) {
            flags.insert(key.to_string(), v.clone());
        }
    }
    resolve(command, file, flags)
}

fn flag_values(sub: &ArgMatches) -> BTreeMap<String, String> {
    KEYS.iter()
        .filter_map(|(k, _)| sub.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect()
}

/// Merges preset, file and flag settings (later wins) and type-checks them.
pub fn resolve(
    command: Subcommand,
    file: BTreeMap<String, String>,
    flags: BTreeMap<String, String>,
) -> Result<RunConfig, CliError> {
    let pick = |key: &str| flags.get(key).or_else(|| file.get(key)).cloned();
    let scale: Scale = match pick("scale") {
        Some(s) => s.parse().map_err(|e: String| config_err(format!("scale: {e}")))?,
        None => Scale::Desk,
    };
    let preset: Option<Preset> = pick("preset")
        .map(|s| s.parse().map_err(|e: String| config_err(format!("preset: {e}"))))
        .transpose()?;

    let mut map = BTreeMap::new();
    if let Some(p) = preset {
        if p.subcommand() != command {
            return Err(config_err(format!(
                "preset `{p}` belongs to `{}`, not `{}`",
                p.subcommand().name(),
                command.name()
            )));
        }
        map.extend(p.values(scale));
    }
    for (k, v) in file.into_iter().chain(flags) {
        if k != "preset" && k != "scale" {
            map.insert(k, v);
        }
    }
    for key in map.keys() {
        if !command.keys().contains(&key.as_str()) {
            return Err(config_err(format!("key `{key}` does not apply to `{}`", command.name())));
        }
    }
    for key in command.required() {
        if !map.contains_key(*key) {
            return Err(config_err(format!(
                "missing key `{key}`; give a preset or a complete explicit config"
            )));
        }
    }
    build(command, preset, scale, map)
}

fn parse_value<T: FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    match map.get(key) {
        Some(v) => v
            .parse()
            .map_err(|e| config_err(format!("key `{key}`: cannot parse `{v}`: {e}"))),
        None => Ok(default),
    }
}

/// A positive real, accepting `2^-n` style powers.
fn parse_real(key: &str, token: &str) -> Result<f64, CliError> {
    let token = token.trim();
    let value = match token.split_once('^') {
        Some((base, exp)) => {
            let base: f64 = base.trim().parse().map_err(|_| bad_real(key, token))?;
            let exp: i32 = exp.trim().parse().map_err(|_| bad_real(key, token))?;
            base.powi(exp)
        }
        None => token.parse().map_err(|_| bad_real(key, token))?,
    };
    if !value.is_finite() {
        return Err(bad_real(key, token));
    }
    Ok(value)
}

fn bad_real(key: &str, token: &str) -> CliError {
    config_err(format!("key `{key}`: `{token}` is not a number"))
}

fn real(map: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64, CliError> {
    map.get(key).map(|v| parse_real(key, v)).unwrap_or(Ok(default))
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(config_err(format!("key `{key}` must be positive, got {v}")))
    }
}

fn build(
    command: Subcommand,
    preset: Option<Preset>,
    scale: Scale,
    map: BTreeMap<String, String>,
) -> Result<RunConfig, CliError> {
    let default_steps = if command == Subcommand::ScalarTest { "0.1" } else { "" };
    let steps: Vec<f64> = map
        .get("steps")
        .map(String::as_str)
        .unwrap_or(default_steps)
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_real("steps", s).and_then(|v| positive("steps", v)))
        .collect::<Result<_, _>>()?;
    if steps.is_empty() {
        return Err(config_err("key `steps` is empty"));
    }
    let smallest = steps.iter().copied().fold(f64::INFINITY, f64::min);
    let schemes: Vec<SchemeKind> = map
        .get("schemes")
        .map(|s| {
            s.split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|e| config_err(format!("key `schemes`: {e}")))
                })
                .collect::<Result<_, _>>()
        })
        .transpose()?
        .unwrap_or_default();
    if command == Subcommand::ScalarTest && steps.len() != 1 {
        return Err(config_err("scalar-test takes a single step size"));
    }
    let output = match map.get("output") {
        Some(p) => PathBuf::from(p),
        None => std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("ssexp-output")),
    };
    let modes = parse_value(&map, "modes", 64usize)?;
    GridSpec::new(modes).map_err(|e| config_err(format!("key `modes`: {e}")))?;
    let threads = match map.get("threads") {
        Some(t) => Some(parse_value::<usize>(&map, "threads", 0)?)
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| config_err(format!("key `threads` must be positive, got `{t}`")))?,
        None => None,
    };
    let cfg = RunConfig {
        command,
        preset,
        scale,
        modes,
        samples: parse_value(&map, "samples", 1000usize)?,
        seed: parse_value(&map, "seed", 0u64)?,
        horizon: positive("horizon", real(&map, "horizon", 1.0)?)?,
        k_ref: positive("k_ref", real(&map, "k_ref", smallest)?)?,
        steps,
        exponent: real(&map, "exponent", 2.0)?,
        symmetric: parse_value(&map, "symmetric", false)?,
        noise: parse_value(&map, "noise", NoiseMode::Additive)?,
        potential: parse_value(&map, "potential", PotentialKind::None)?,
        initial: parse_value(&map, "initial", InitialCondition::Zero)?,
        schemes,
        reference: parse_value(&map, "reference", SchemeKind::Sexp)?,
        observable: parse_value(&map, "observable", Observable::Mass)?,
        output,
        threads,
        a: real(&map, "a", 1.0)?,
        b: real(&map, "b", 1.0)?,
        m0: real(&map, "m0", 0.0)?,
        n_steps: parse_value(&map, "n_steps", 10usize)?,
        settings: map,
    };
    if command != Subcommand::ScalarTest && cfg.samples < 2 {
        return Err(config_err("key `samples` must be at least 2"));
    }
    if command == Subcommand::ScalarTest {
        cfg.scalar_problem()?;
    } else {
        // Surface grid, divisibility and observable errors before any work.
        let ens = cfg.ensemble()?;
        if command == Subcommand::Trace {
            validate_trace(&ens, cfg.observable)?;
        }
        validate_geometry(&ens)?;
    }
    Ok(cfg)
}

fn validate_geometry(ens: &EnsembleConfig) -> Result<(), CliError> {
    let ratio = |a: f64, b: f64| {
        let r = a / b;
        (r.round() >= 1.0 && (r - r.round()).abs() <= 1e-9 * r.round()).then_some(r.round() as usize)
    };
    let fine = ratio(ens.horizon, ens.reference_step)
        .ok_or_else(|| config_err("horizon must be a multiple of k_ref"))?;
    for &k in &ens.step_sizes {
        let f = ratio(k, ens.reference_step)
            .ok_or_else(|| config_err(format!("step {k} is not a multiple of k_ref {}", ens.reference_step)))?;
        if fine % f != 0 {
            return Err(config_err(format!("horizon is not a multiple of step {k}")));
        }
    }
    Ok(())
}

fn validate_trace(ens: &EnsembleConfig, observable: Observable) -> Result<(), CliError> {
    match (observable, ens.problem.noise, ens.problem.potential.is_some()) {
        (_, NoiseMode::Multiplicative, _) => Err(config_err("trace runs need additive noise")),
        (Observable::Energy, _, true) => Err(config_err(
            "observable `energy` with a potential: use energy_with_potential",
        )),
        (Observable::EnergyWithPotential, _, false) => {
            Err(config_err("observable `energy_with_potential` needs a potential"))
        }
        (Observable::Momentum, _, true) => Err(config_err("momentum drift line assumes no potential")),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn grid(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(self.modes).map_err(|e| config_err(format!("key `modes`: {e}")))
    }

    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        let grid = self.grid()?;
        let mut cov = CovarianceSpec::power_decay(grid, self.exponent);
        if self.symmetric {
            cov = cov.symmetric();
        }
        let problem = ProblemSpec::new(cov, self.noise);
        match self.potential.build(grid) {
            Some(v) => problem
                .with_potential(v)
                .map_err(|e| config_err(format!("key `potential`: {e}"))),
            None => Ok(problem),
        }
    }

    pub fn ensemble(&self) -> Result<EnsembleConfig, CliError> {
        if self.schemes.is_empty() {
            return Err(config_err("key `schemes` is empty"));
        }
        let problem = self.problem()?;
        let initial = self.initial.state(problem.grid);
        let mut ens = EnsembleConfig::new(problem, initial);
        ens.num_samples = self.samples;
        ens.master_seed = self.seed;
        ens.horizon = self.horizon;
        ens.reference_step = self.k_ref;
        ens.step_sizes = self.steps.clone();
        ens.schemes = self.schemes.clone();
        ens.reference_scheme = self.reference;
        ens.threads = self.threads;
        Ok(ens)
    }

    pub fn scalar_problem(&self) -> Result<ScalarProblem, CliError> {
        ScalarProblem::new(self.a, self.b, self.m0, self.steps[0])
            .map_err(|e| config_err(format!("scalar problem: {e}")))
    }
}

/// What a run produced.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub samples_used: Option<usize>,
    pub failures: FailureCounts,
    /// Messages for the console, one per line.
    pub notes: Vec<String>,
    pub exit_code: i32,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    preset: Option<&'static str>,
    scale: Scale,
    seed: u64,
    version: &'static str,
    git_describe: String,
    /// Resolved settings; feeding them back as a config file re-creates the run.
    config: &'a BTreeMap<String, String>,
    resolved: &'a RunConfig,
    started_unix_seconds: u64,
    wall_clock_seconds: f64,
    samples_used: Option<usize>,
    failures: FailureCounts,
    files: Vec<String>,
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn step_tag(k: f64) -> String {
    format!("k{k}")
}

/// Runs the experiment and writes its CSV files and `manifest.json`.
pub fn execute(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    let started_unix_seconds = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    fs::create_dir_all(&cfg.output)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", cfg.output.display())))?;
    let runtime = |e: ssexp_core::Error| CliError::Runtime(e.to_string());

    let mut files = Vec::new();
    let mut notes = Vec::new();
    let mut failures = FailureCounts::default();
    let mut samples_used = None;
    match cfg.command {
        Subcommand::StrongError => {
            let report = run_strong_error(&cfg.ensemble()?).map_err(runtime)?;
            for table in &report.tables {
                let path = cfg.output.join(format!("strong_error_{}.csv", table.scheme));
                write_file(&path, table.to_csv().as_bytes())?;
                files.push(path);
                notes.push(match table.fitted_slope {
                    Some(s) => format!("{}: fitted slope {s:.3}", table.scheme),
                    None => format!("{}: no slope (zero or single error)", table.scheme),
                });
            }
            failures = report.failures;
            samples_used = Some(report.samples_used);
        }
        Subcommand::Trace => {
            let report = run_trace(&cfg.ensemble()?, cfg.observable).map_err(runtime)?;
            let several = cfg.steps.len() > 1;
            for entry in &report.series {
                let mut name = format!("trace_{}_{}", cfg.observable, entry.scheme);
                if several {
                    name = format!("{name}_{}", step_tag(entry.step));
                }
                let path = cfg.output.join(format!("{name}.csv"));
                write_file(&path, entry.series.to_csv().as_bytes())?;
                files.push(path);
                let within = entry.series.fraction_within(3.0);
                let mut note = format!(
                    "{} k={}: {:.1}% of times within 3 SE of theory",
                    entry.scheme,
                    entry.step,
                    100.0 * within
                );
                if entry.below_theory_at_end {
                    note.push_str("; final mean below theory by more than 3 SE");
                }
                notes.push(note);
            }
            failures = report.failures;
            samples_used = Some(report.samples_used);
        }
        Subcommand::ScalarTest => {
            let table = ScalarMomentTable::compute(&cfg.scalar_problem()?, cfg.n_steps).map_err(runtime)?;
            let mut buf = Vec::new();
            table
                .write_csv(&mut buf)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let path = cfg.output.join("scalar_moments.csv");
            write_file(&path, &buf)?;
            files.push(path);
        }
    }

    let exit_code = if failures.total() as f64 > MAX_FAILURE_FRACTION * cfg.samples as f64 {
        notes.push(format!(
            "{} of {} samples failed ({} non-finite, {} without convergence)",
            failures.total(),
            cfg.samples,
            failures.non_finite,
            failures.no_convergence
        ));
        1
    } else {
        0
    };

    let manifest = Manifest {
        command: cfg.command.name(),
        preset: cfg.preset.map(|p| p.name()),
        scale: cfg.scale,
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        git_describe: git_describe(),
        config: &cfg.settings,
        resolved: cfg,
        started_unix_seconds,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        samples_used,
        failures,
        files: files
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
    };
    let path = cfg.output.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&path, json.as_bytes())?;
    files.push(path);

    Ok(RunSummary {
        files,
        samples_used,
        failures,
        notes,
        exit_code,
    })
}

/// Parses, executes and reports; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cfg = match parse_and_validate(argv) {
        Ok(cfg) => cfg,
        Err(CliError::Usage(e)) => {
            let _ = e.print();
            return e.exit_code();
        }
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    match execute(&cfg) {
        Ok(summary) => {
            for note in &summary.notes {
                println!("{note}");
            }
            for file in &summary.files {
                println!("wrote {}", file.display());
            }
            summary.exit_code
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
