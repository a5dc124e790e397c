//! Repeated paired train/test trials, summaries and the minimax rate.

use crate::baselines::{self, default_k_rule, knn_classify, KRule};
use crate::data::{LabeledSample, MaskedSample};
use crate::error::{HamError, Result};
use crate::estimator::{self, gamma_omega, HamHyperParams};
use crate::pattern::{Pattern, PatternSet};
use crate::scenario::{stream_rng, Scenario};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

pub const RESULTS_HEADER: &str =
    "setting,n,method,repeat,test_error,bayes_error,excess_error,omega_hat,wall_time_ms";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Ham,
    Oracle,
    Cc,
    Zi,
    Mi,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ham, Method::Oracle, Method::Cc, Method::Zi, Method::Mi];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ham => "ham",
            Method::Oracle => "oracle",
            Method::Cc => "cc",
            Method::Zi => "zi",
            Method::Mi => "mi",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = Vec::new();
        for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let m: Method = item.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(HamError::InvalidParameter("empty method list".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ham" => Ok(Method::Ham),
            "oracle" | "oracle_ham" => Ok(Method::Oracle),
            "cc" => Ok(Method::Cc),
            "zi" => Ok(Method::Zi),
            "mi" => Ok(Method::Mi),
            _ => Err(HamError::InvalidParameter(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub n_train: usize,
    pub m_test: usize,
    pub repeats: usize,
    pub methods: Vec<Method>,
    pub base_seed: u64,
    pub hyper: HamHyperParams,
    pub k_rule: KRule,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, n_train: usize) -> Self {
        ExperimentSpec {
            scenario,
            n_train,
            m_test: 1000,
            repeats: 100,
            methods: Method::ALL.to_vec(),
            base_seed: 0,
            hyper: HamHyperParams::new(scenario.d()),
            k_rule: default_k_rule,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.m_test == 0 || self.repeats == 0 {
            return Err(HamError::InvalidParameter(
                "n, m and repeats must all be at least 1".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(HamError::InvalidParameter("no methods selected".into()));
        }
        self.hyper.validate(self.scenario.d())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub setting: u8,
    pub n: usize,
    pub method: Method,
    pub repeat: usize,
    /// `None` when the method could not be fitted.
    pub test_error: Option<f64>,
    /// Error of the Bayes classifier on the same test set.
    pub bayes_error: f64,
    pub omega_hat: Option<PatternSet>,
    pub wall_time_ms: f64,
    pub note: Option<String>,
}

impl TrialRecord {
    pub fn excess_error(&self) -> Option<f64> {
        self.test_error.map(|e| e - self.bayes_error)
    }
}

fn error_rate(predicted: impl Iterator<Item = u8>, test: &[LabeledSample]) -> f64 {
    let wrong = predicted.zip(test).filter(|(p, t)| *p != t.y).count();
    wrong as f64 / test.len() as f64
}

/// Misclassification rate and `Ω̂` for one method on one paired draw.
pub fn evaluate_method(
    method: Method,
    scenario: &Scenario,
    train: &[MaskedSample],
    test: &[LabeledSample],
    hyper: &HamHyperParams,
    k_rule: KRule,
) -> Result<(f64, Option<PatternSet>)> {
    match method {
        Method::Ham | Method::Oracle => {
            let hyper = if method == Method::Oracle {
                hyper.clone().with_oracle(scenario.omega_star())
            } else {
                hyper.clone()
            };
            let fitted = estimator::fit(train, &hyper)?;
            let labels = test
                .iter()
                .map(|t| fitted.predict(&t.x).map(|p| p.label))
                .collect::<Result<Vec<_>>>()?;
            Ok((error_rate(labels.into_iter(), test), Some(fitted.omega_hat().clone())))
        }
        Method::Cc | Method::Zi | Method::Mi => {
            let model = match method {
                Method::Cc => baselines::fit_complete_case(train, k_rule)?,
                Method::Zi => baselines::fit_zero_impute(train, k_rule)?,
                _ => baselines::fit_mean_impute(train, k_rule)?,
            };
            let labels = test
                .iter()
                .map(|t| knn_classify(&model, &t.x))
                .collect::<Result<Vec<_>>>()?;
            Ok((error_rate(labels.into_iter(), test), None))
        }
    }
}

/// The paired draw used by repeat `repeat`.
pub fn draw_repeat(spec: &ExperimentSpec, repeat: usize) -> (Vec<MaskedSample>, Vec<LabeledSample>) {
    let train = spec
        .scenario
        .sample_train(spec.n_train, &mut stream_rng(spec.base_seed, repeat as u64, "train"));
    let test = spec
        .scenario
        .sample_test(spec.m_test, &mut stream_rng(spec.base_seed, repeat as u64, "test"));
    (train, test)
}

pub fn run_trial(spec: &ExperimentSpec, repeat: usize) -> Vec<TrialRecord> {
    let (train, test) = draw_repeat(spec, repeat);
    let scn = &spec.scenario;
    let bayes_error = error_rate(test.iter().map(|t| scn.bayes_classify(&t.x)), &test);
    spec.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = evaluate_method(method, scn, &train, &test, &spec.hyper, spec.k_rule);
            let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            let (test_error, omega_hat, note) = match outcome {
                Ok((e, o)) => (Some(e), o, None),
                Err(err) => {
                    log::info!("repeat {repeat}, {method}: {err}");
                    (None, None, Some(err.to_string()))
                }
            };
            TrialRecord {
                setting: scn.index(),
                n: spec.n_train,
                method,
                repeat,
                test_error,
                bayes_error,
                omega_hat,
                wall_time_ms,
                note,
            }
        })
        .collect()
}

/// All repeats, run in parallel on the current rayon pool and returned in
/// `(repeat, method)` order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let per_repeat: Vec<Vec<TrialRecord>> = (0..spec.repeats)
        .into_par_iter()
        .map(|r| run_trial(spec, r))
        .collect();
    Ok(per_repeat.into_iter().flatten().collect())
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Writes the results CSV. Without `timing`, `wall_time_ms` is `NA` so that
/// reruns are byte-identical.
pub fn write_results<W: Write>(out: W, records: &[TrialRecord], timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER.split(','))?;
    for r in records {
        let na = || "NA".to_string();
        w.write_record([
            r.setting.to_string(),
            r.n.to_string(),
            r.method.to_string(),
            r.repeat.to_string(),
            r.test_error.map_or_else(na, fmt_num),
            fmt_num(r.bayes_error),
            r.excess_error().map_or_else(na, fmt_num),
            r.omega_hat.as_ref().map_or_else(String::new, |o| o.to_string()),
            if timing {
                format!("{:.3}", r.wall_time_ms)
            } else {
                na()
            },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub applicable: usize,
    pub inapplicable: usize,
    /// `[mean, sd, min, q1, median, q3, max]` of the test error; `None` when
    /// no repeat was applicable.
    pub stats: Option<[f64; 7]>,
    pub mean_excess: Option<f64>,
}

impl MethodSummary {
    pub fn mean(&self) -> Option<f64> {
        self.stats.map(|s| s[0])
    }
}

pub fn summarize(records: &[TrialRecord]) -> Vec<MethodSummary> {
    let mut by_method: BTreeMap<Method, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        by_method.entry(r.method).or_default().push(r);
    }
    by_method
        .into_iter()
        .map(|(method, rows)| {
            let mut errs: Vec<f64> = rows.iter().filter_map(|r| r.test_error).collect();
            let excess: Vec<f64> = rows.iter().filter_map(|r| r.excess_error()).collect();
            errs.sort_by(f64::total_cmp);
            let applicable = errs.len();
            let stats = (applicable > 0).then(|| {
                let n = applicable as f64;
                let mean = errs.iter().sum::<f64>() / n;
                let sd = if applicable > 1 {
                    (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                [
                    mean,
                    sd,
                    errs[0],
                    quantile_sorted(&errs, 0.25),
                    quantile_sorted(&errs, 0.5),
                    quantile_sorted(&errs, 0.75),
                    errs[applicable - 1],
                ]
            });
            MethodSummary {
                method,
                applicable,
                inapplicable: rows.len() - applicable,
                stats,
                mean_excess: (applicable > 0).then(|| excess.iter().sum::<f64>() / excess.len() as f64),
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: &str =
    "method,applicable,inapplicable,mean,sd,min,q1,median,q3,max,mean_excess,bayes_risk";

pub fn write_summary<W: Write>(out: W, summary: &[MethodSummary], bayes_risk: f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER.split(','))?;
    for s in summary {
        let mut rec = vec![
            s.method.to_string(),
            s.applicable.to_string(),
            s.inapplicable.to_string(),
        ];
        match s.stats {
            Some(st) => rec.extend(st.iter().map(|v| fmt_num(*v))),
            None => rec.extend(std::iter::repeat_n("NA".to_string(), 7)),
        }
        rec.push(s.mean_excess.map_or_else(|| "NA".into(), fmt_num));
        rec.push(fmt_num(bayes_risk));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateTerm {
    pub omega: Pattern,
    pub n: usize,
    /// `None` when `n = 0`.
    pub term: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub value: f64,
    pub terms: Vec<RateTerm>,
    /// Some pattern of `Ω⋆` has no available cases.
    pub unobserved: bool,
    /// `Ω⋆` is empty and `η ≡ 1/2`.
    pub empty_omega: bool,
}

/// `n^{−βγ_ω(1+α)/(γ_ω(2β+d_ω)+αβ)}`. For `γ_ω = ∞` (only `0_d`) the exponent
/// is its limit `(1+α)/(2 + d_ω/β)`.
pub fn rate_term(n: usize, gamma_w: f64, beta: f64, alpha: f64, d_w: usize) -> f64 {
    let exponent = if gamma_w.is_infinite() {
        beta * (1.0 + alpha) / (2.0 * beta + d_w as f64)
    } else {
        beta * gamma_w * (1.0 + alpha) / (gamma_w * (2.0 * beta + d_w as f64) + alpha * beta)
    };
    (n as f64).powf(-exponent)
}

pub fn minimax_rate(
    omega_star: &PatternSet,
    n_by_pattern: &BTreeMap<Pattern, usize>,
    gamma: &[f64],
    beta: f64,
    alpha: f64,
) -> Result<RateReport> {
    omega_star.require_antichain()?;
    if gamma.len() != omega_star.d() {
        return Err(HamError::DimensionMismatch {
            expected: omega_star.d(),
            found: gamma.len(),
        });
    }
    if omega_star.is_empty() {
        return Ok(RateReport {
            value: 0.0,
            terms: Vec::new(),
            unobserved: false,
            empty_omega: true,
        });
    }
    let terms: Vec<RateTerm> = omega_star
        .iter()
        .map(|&omega| {
            let n = n_by_pattern.get(&omega).copied().unwrap_or(0);
            let term = (n > 0).then(|| {
                rate_term(n, gamma_omega(gamma, omega), beta, alpha, omega.dim())
            });
            RateTerm { omega, n, term }
        })
        .collect();
    let unobserved = terms.iter().any(|t| t.term.is_none());
    let value = if unobserved {
        1.0
    } else {
        terms.iter().filter_map(|t| t.term).fold(0.0, f64::max)
    };
    Ok(RateReport {
        value,
        terms,
        unobserved,
        empty_omega: false,
    })
}

/// Available-case counts `n_ω` for every pattern of `patterns`.
pub fn available_counts(
    train: &[MaskedSample],
    patterns: &PatternSet,
) -> BTreeMap<Pattern, usize> {
    patterns
        .iter()
        .map(|&w| {
            let n = train
                .iter()
                .filter(|s| w.preceq(s.o()).unwrap_or(false))
                .count();
            (w, n)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(s: &str) -> Pattern {
        s.parse().unwrap()
    }

    #[test]
    fn quantiles_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn rate_examples() {
        let omega = PatternSet::parse_list(&["10"]).unwrap();
        let counts: BTreeMap<_, _> = [(p("10"), 10000)].into_iter().collect();
        let r = minimax_rate(&omega, &counts, &[1.0, 1.0], 1.0, 1.0).unwrap();
        assert_eq!(r.value, 0.01);
        assert!(!r.unobserved);

        let omega = PatternSet::parse_list(&["10", "01"]).unwrap();
        let r = minimax_rate(&omega, &counts, &[1.0, 1.0], 1.0, 1.0).unwrap();
        assert_eq!(r.value, 1.0);
        assert!(r.unobserved);

        let r = minimax_rate(&PatternSet::new(2).unwrap(), &counts, &[1.0, 1.0], 1.0, 1.0).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.empty_omega);

        let bad = PatternSet::parse_list(&["10", "11"]).unwrap();
        assert!(minimax_rate(&bad, &counts, &[1.0, 1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn rate_reports_max_term() {
        let omega = Scenario::Setting2.omega_star();
        let counts: BTreeMap<_, _> = [(p("0110"), 500), (p("0001"), 500)].into_iter().collect();
        let r = minimax_rate(&omega, &counts, &[1.0; 4], 1.0, 1.0).unwrap();
        assert_eq!(r.terms.len(), 2);
        // d_ω = 2: exponent 2/5; d_ω = 1: exponent 1/2.
        assert_abs_diff_eq!(r.value, 500f64.powf(-0.4), epsilon = 1e-15);
    }

    #[test]
    fn setting2_available_counts() {
        let mut spec = ExperimentSpec::new(Scenario::Setting2, 1000);
        spec.repeats = 1;
        let (train, _) = draw_repeat(&spec, 0);
        let counts = available_counts(&train, &Scenario::Setting2.omega_star());
        // Each pattern has probability 1/2; 3σ band is ±47.
        for n in counts.values() {
            assert!((*n as f64 - 500.0).abs() < 48.0, "{n}");
        }
    }

    #[test]
    fn method_parsing() {
        assert_eq!(Method::parse_list("ham,cc,ham").unwrap(), vec![Method::Ham, Method::Cc]);
        assert!(Method::parse_list("ham,knn").is_err());
    }

    fn small_spec(s: Scenario) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(s, 200);
        spec.m_test = 300;
        spec.repeats = 3;
        spec
    }

    #[test]
    fn setting2_cc_is_inapplicable() {
        let recs = run_experiment(&small_spec(Scenario::Setting2)).unwrap();
        assert_eq!(recs.len(), 15);
        for r in &recs {
            if r.method == Method::Cc {
                assert!(r.test_error.is_none());
            } else {
                let e = r.test_error.unwrap();
                assert!((0.0..=1.0).contains(&e));
                // Loss sum equals m · error exactly.
                assert_eq!((e * 300.0).round() / 300.0, e);
            }
        }
    }

    #[test]
    fn oracle_uses_true_antichain() {
        let recs = run_experiment(&small_spec(Scenario::Setting3)).unwrap();
        for r in recs.iter().filter(|r| r.method == Method::Oracle) {
            assert_eq!(r.omega_hat.as_ref().unwrap(), &Scenario::Setting3.omega_star());
        }
    }

    #[test]
    fn records_are_ordered_and_deterministic() {
        let spec = small_spec(Scenario::Setting1 { p: 0.7 });
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        let key = |r: &TrialRecord| (r.repeat, r.method);
        assert!(a.windows(2).all(|w| key(&w[0]) < key(&w[1])));
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_results(&mut ca, &a, false).unwrap();
        write_results(&mut cb, &b, false).unwrap();
        assert_eq!(ca, cb);
        let text = String::from_utf8(ca).unwrap();
        assert!(text.starts_with(&format!("{RESULTS_HEADER}\n")));
    }

    #[test]
    fn single_repeat_summary() {
        let mut spec = small_spec(Scenario::Setting3);
        spec.repeats = 1;
        let recs = run_experiment(&spec).unwrap();
        for s in summarize(&recs) {
            let st = s.stats.unwrap();
            assert_eq!(st[1], 0.0);
            assert!(st[2..].iter().all(|v| *v == st[0]));
        }
    }

    #[test]
    fn bayes_error_band_setting1() {
        let mut spec = ExperimentSpec::new(Scenario::Setting1 { p: 0.7 }, 10);
        spec.methods = vec![Method::Zi];
        spec.repeats = 5;
        for r in run_experiment(&spec).unwrap() {
            assert!((r.bayes_error - 0.07865).abs() <= 0.0255, "{}", r.bayes_error);
        }
    }
}
