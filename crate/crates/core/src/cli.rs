//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.
//! `--config PATH` reads `key = value` lines (`#` comments) that act as
//! defaults for the subcommand's flags; flags given on the command line win.

use crate::anova::{decompose, sigma_sq, FiniteDistribution};
use crate::data::{read_test_csv, read_train_csv};
use crate::error::{HamError, Result};
use crate::estimator::{self, HamHyperParams};
use crate::harness::{self, minimax_rate, ExperimentSpec, Method};
use crate::pattern::{all_patterns, Pattern, PatternSet};
use crate::scenario::Scenario;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(name = "ham", version, args_override_self = true, about = "Classification with missing features via the HAM classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run repeated train/test experiments on a synthetic setting.
    Simulate(SimulateArgs),
    /// Fit on a training CSV and predict a test CSV.
    FitPredict(FitPredictArgs),
    /// Exact ANOVA decomposition of a finite distribution.
    Decompose(DecomposeArgs),
    /// Evaluate the minimax rate for a signal antichain and pattern counts.
    Rate(RateArgs),
}

fn parse_setting(s: &str) -> std::result::Result<u8, String> {
    match s.trim() {
        "1" => Ok(1),
        "2" => Ok(2),
        "3" => Ok(3),
        _ => Err(format!("setting must be 1, 2 or 3, got '{s}'")),
    }
}

fn parse_positive(s: &str) -> std::result::Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("expected a positive integer, got '{s}'")),
    }
}

fn parse_positive_real(s: &str) -> std::result::Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("expected a positive number, got '{s}'")),
    }
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_setting)]
    pub setting: u8,
    /// Training sample size.
    #[arg(long, value_parser = parse_positive)]
    pub n: usize,
    #[arg(long, default_value = "100", value_parser = parse_positive)]
    pub repeats: usize,
    /// Test sample size.
    #[arg(long, default_value = "1000", value_parser = parse_positive)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "ham,oracle,cc,zi,mi", value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Results CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary CSV path. Printed to stdout when `--out` is set and this is absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, default_value = "0.0625", value_parser = parse_positive_real)]
    pub threshold_scale: f64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Record wall-clock times instead of `NA`.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct FitPredictArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated tail exponents, one per feature; defaults to all ones.
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value = "0.0625", value_parser = parse_positive_real)]
    pub threshold_scale: f64,
    /// Predictions CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct DecomposeArgs {
    /// Distribution JSON.
    #[arg(long, conflicts_with_all = ["setting", "grid"], required_unless_present = "setting")]
    pub dist: Option<PathBuf>,
    /// Build the midpoint-grid distribution of a synthetic setting instead.
    #[arg(long, value_parser = parse_setting, requires = "grid")]
    pub setting: Option<u8>,
    /// Grid points per axis.
    #[arg(long, value_parser = parse_positive)]
    pub grid: Option<usize>,
    /// Omit per-atom component values from the output.
    #[arg(long)]
    pub no_components: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct RateArgs {
    /// Comma-separated antichain, e.g. `0110,0001`.
    #[arg(long)]
    pub omega: String,
    /// Available-case counts, one per pattern of `--omega`, in the same order.
    #[arg(long)]
    pub counts: String,
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
}

/// Runtime failures map to exit code 1, usage problems to 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(HamError),
}

impl From<HamError> for CliError {
    fn from(e: HamError) -> Self {
        CliError::Runtime(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

fn usage<T>(msg: impl Into<String>) -> std::result::Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

/// Reads a `key = value` config file into flag arguments.
pub fn config_args(path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| HamError::Data {
            path: path.display().to_string(),
            row: i + 1,
            column: "".into(),
            message: "expected 'key = value'".into(),
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    Ok(out)
}

/// Splices config-file flags in right after the subcommand so that explicit
/// flags, which come later, override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let pos = args.iter().position(|a| a == "--config");
    let eq_pos = args
        .iter()
        .position(|a| a.to_str().is_some_and(|s| s.starts_with("--config=")));
    let (idx, path, width) = match (pos, eq_pos) {
        (Some(i), _) if i + 1 < args.len() => (i, PathBuf::from(&args[i + 1]), 2),
        (_, Some(i)) => {
            let s = args[i].to_str().unwrap();
            (i, PathBuf::from(&s["--config=".len()..]), 1)
        }
        _ => return Ok(args),
    };
    let mut rest = args;
    rest.drain(idx..idx + width);
    let injected = config_args(&path)?;
    let sub = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|i| i + 2)
        .unwrap_or(rest.len());
    let mut out: Vec<OsString> = rest[..sub].to_vec();
    out.extend(injected);
    out.extend_from_slice(&rest[sub..]);
    Ok(out)
}

fn writer(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_simulate(a: SimulateArgs) -> std::result::Result<(), CliError> {
    let scenario = Scenario::from_index(a.setting)?;
    let mut spec = ExperimentSpec::new(scenario, a.n);
    spec.repeats = a.repeats;
    spec.m_test = a.m;
    spec.base_seed = a.seed;
    spec.methods = Vec::new();
    for m in a.methods {
        if !spec.methods.contains(&m) {
            spec.methods.push(m);
        }
    }
    spec.hyper.threshold_scale = a.threshold_scale;
    spec.validate().or_else(|e| usage(e.to_string()))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads)
        .build()
        .map_err(|e| CliError::Runtime(HamError::InvalidParameter(e.to_string())))?;
    let records = pool.install(|| harness::run_experiment(&spec))?;
    harness::write_results(writer(&a.out)?, &records, a.timing)?;

    let summary = harness::summarize(&records);
    let risk = scenario.bayes_risk();
    match (&a.summary, &a.out) {
        (Some(_), _) => harness::write_summary(writer(&a.summary)?, &summary, risk)?,
        (None, Some(_)) => harness::write_summary(writer(&None)?, &summary, risk)?,
        (None, None) => {}
    }
    Ok(())
}

fn cmd_fit_predict(a: FitPredictArgs) -> std::result::Result<(), CliError> {
    let train_name = a.train.display().to_string();
    let test_name = a.test.display().to_string();
    let train = read_train_csv(File::open(&a.train)?, &train_name)?;
    let test = read_test_csv(File::open(&a.test)?, &test_name)?;
    let d = train[0].d();
    if let Some(bad) = test.iter().position(|x| x.len() != d) {
        return Err(HamError::Data {
            path: test_name,
            row: bad + 1,
            column: "".into(),
            message: format!("test data has {} features, training data {d}", test[bad].len()),
        }
        .into());
    }
    let mut hyper = HamHyperParams::new(d);
    if let Some(g) = a.gamma {
        hyper.gamma = g;
    }
    hyper.beta = a.beta;
    hyper.alpha = a.alpha;
    hyper.threshold_scale = a.threshold_scale;
    hyper.validate(d).or_else(|e| usage(e.to_string()))?;

    let fitted = estimator::fit(&train, &hyper)?;
    let mut w = csv::Writer::from_writer(writer(&a.out)?);
    w.write_record(["row", "label", "eta_hat"])?;
    for (i, x) in test.iter().enumerate() {
        let p = fitted.predict(x)?;
        w.write_record([(i + 1).to_string(), p.label.to_string(), p.eta_hat.to_string()])?;
    }
    w.flush()?;

    let mut diag: Box<dyn Write> = if a.out.is_some() {
        Box::new(io::stdout().lock())
    } else {
        Box::new(io::stderr().lock())
    };
    writeln!(diag, "omega_hat: {{{}}}", fitted.omega_hat())?;
    writeln!(diag, "pattern,n,k,tau,sigma_hat_sq")?;
    for (omega, e) in fitted.estimates() {
        writeln!(diag, "{omega},{},{},{},{}", e.n, e.k, e.tau, e.sigma_hat_sq)?;
    }
    for warning in fitted.warnings() {
        writeln!(diag, "warning: {warning}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PatternReport {
    pattern: String,
    /// `None` when no observed pattern covers this one.
    sigma_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct DecompositionReport {
    d: usize,
    n_atoms: usize,
    constant: f64,
    /// `conditional` when `σ²` uses per-pattern laws of `X | O`, else `marginal`.
    sigma_basis: &'static str,
    reconstruction_max_error: f64,
    components: Vec<PatternReport>,
}

/// Builds the decomposition report used by `ham decompose`.
fn decomposition_report(dist: &FiniteDistribution, with_values: bool) -> Result<serde_json::Value> {
    let dec = decompose(dist);
    let d = dist.d();
    let (observed, basis) = match dist.observed_patterns() {
        Some(obs) => (obs, "conditional"),
        None => (PatternSet::from_patterns(d, all_patterns(d)?)?, "marginal"),
    };
    let recon = dec.reconstruct();
    let max_err = recon
        .iter()
        .zip(dist.eta())
        .map(|(r, e)| (r - e).abs())
        .fold(0.0, f64::max);
    let mut components = Vec::new();
    for omega in all_patterns(d)? {
        let s = match sigma_sq(dist, &dec, omega, &observed) {
            Ok(v) => Some(v),
            Err(HamError::Unobservable(_)) => None,
            Err(e) => return Err(e),
        };
        components.push(PatternReport {
            pattern: omega.to_string(),
            sigma_sq: s,
            values: with_values.then(|| dec.component(omega)),
        });
    }
    let report = DecompositionReport {
        d,
        n_atoms: dist.n_atoms(),
        constant: dec.constant(),
        sigma_basis: basis,
        reconstruction_max_error: max_err,
        components,
    };
    Ok(serde_json::to_value(report)?)
}

fn cmd_decompose(a: DecomposeArgs) -> std::result::Result<(), CliError> {
    let dist = match (&a.dist, a.setting, a.grid) {
        (Some(path), _, _) => FiniteDistribution::from_json_str(&std::fs::read_to_string(path)?)?,
        (None, Some(s), Some(m)) => Scenario::from_index(s)?.to_finite_distribution(m)?,
        _ => return usage("either --dist or both --setting and --grid are required"),
    };
    let report = decomposition_report(&dist, !a.no_components)?;
    let mut w = writer(&a.out)?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(HamError::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_rate(a: RateArgs) -> std::result::Result<(), CliError> {
    let items: Vec<&str> = a.omega.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let counts: Vec<usize> = a
        .counts
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .or_else(|_| usage(format!("--counts '{}' is not a list of integers", a.counts)))?;
    if items.len() != counts.len() {
        return usage(format!(
            "--omega lists {} patterns but --counts has {} entries",
            items.len(),
            counts.len()
        ));
    }
    if items.is_empty() {
        return usage("--omega must name at least one pattern");
    }
    let patterns: Vec<Pattern> = items
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()
        .or_else(|e| usage(e.to_string()))?;
    let d = patterns[0].d();
    let omega = PatternSet::from_patterns(d, patterns.iter().copied()).or_else(|e| usage(e.to_string()))?;
    omega.require_antichain().or_else(|e| usage(e.to_string()))?;
    let n_by: BTreeMap<Pattern, usize> = patterns.into_iter().zip(counts).collect();
    let gamma = a.gamma.unwrap_or_else(|| vec![1.0; d]);
    let report =
        minimax_rate(&omega, &n_by, &gamma, a.beta, a.alpha).or_else(|e| usage(e.to_string()))?;

    let mut out = io::stdout().lock();
    writeln!(out, "rate = {}", report.value)?;
    writeln!(out, "pattern,n,term")?;
    for t in &report.terms {
        let term = t.term.map_or_else(|| "NA".into(), |v| v.to_string());
        writeln!(out, "{},{},{}", t.omega, t.n, term)?;
    }
    writeln!(out, "unobserved_pattern = {}", report.unobserved)?;
    Ok(())
}

pub fn dispatch(cli: Cli) -> std::result::Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::FitPredict(a) => cmd_fit_predict(a),
        Command::Decompose(a) => cmd_decompose(a),
        Command::Rate(a) => cmd_rate(a),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn config_flags_precede_explicit_ones() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.conf");
        std::fs::write(&cfg, "# defaults\nrepeats = 7\nn=50\ntiming = true\nthreshold_scale = 0.1\n").unwrap();
        let args: Vec<OsString> = ["ham", "simulate", "--config", cfg.to_str().unwrap(), "--n", "20", "--setting", "1"]
            .iter()
            .map(OsString::from)
            .collect();
        let expanded = expand_config(args).unwrap();
        let cli = Cli::try_parse_from(expanded).unwrap();
        let Command::Simulate(s) = cli.command else { panic!() };
        assert_eq!(s.n, 20);
        assert_eq!(s.repeats, 7);
        assert!(s.timing);
        assert_eq!(s.threshold_scale, 0.1);
    }

    #[test]
    fn bad_flag_values_are_usage_errors() {
        assert_eq!(run(["ham", "simulate", "--setting", "4", "--n", "10"]), 2);
        assert_eq!(run(["ham", "simulate", "--setting", "1", "--n", "0"]), 2);
        assert_eq!(run(["ham", "simulate", "--setting", "1", "--n", "10", "--bogus"]), 2);
        assert_eq!(run(["ham", "rate", "--omega", "10,11", "--counts", "5,5"]), 2);
    }

    #[test]
    fn two_point_decomposition_report() {
        let json = r#"{"d":1,"atoms":[{"x":[0.0],"p":0.5,"eta":0.3},{"x":[1.0],"p":0.5,"eta":0.7}]}"#;
        let dist = FiniteDistribution::from_json_str(json).unwrap();
        let r = decomposition_report(&dist, true).unwrap();
        let comps = r["components"].as_array().unwrap();
        assert_eq!(comps[1]["pattern"], "1");
        assert_abs_diff_eq!(comps[1]["values"][0].as_f64().unwrap(), -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(comps[1]["sigma_sq"].as_f64().unwrap(), 0.04, epsilon = 1e-15);
        assert!(r["reconstruction_max_error"].as_f64().unwrap() <= 1e-10);
        assert_eq!(r["sigma_basis"], "marginal");
    }
}
