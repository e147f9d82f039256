//! Experiment configuration: a TOML file with `[experiment]`, `[measure]`,
//! `[window]`, `[time]` and `[output]` tables, plus command-line overrides.
//!
//! ```toml
//! [experiment]
//! seed = 7
//! replicas = 10000
//!
//! [measure]
//! kind = "point-mass"
//! size = 1.0
//!
//! [window]
//! left = 0.0
//! right = 2000.0
//! start = "empty"
//! margin-factor = 50.0
//!
//! [time]
//! t = 0.5
//! ```

use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::arrivals::{SizeMeasure, DEFAULT_GAMMA_TRUNCATION};
use crate::replica::{BoundaryPolicy, MarginRule, Start, DEFAULT_MARGIN_FACTOR};
use crate::scaling::regime_for;
use crate::stats::KS_MIN_SAMPLE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    VerifyFixedTime,
    KappaTable,
    Saturation,
    PhaseSweep,
}

impl ExperimentKind {
    fn runs_tests(self) -> bool {
        matches!(self, Self::VerifyFixedTime | Self::Saturation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

/// A validated experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub nu: SizeMeasure,
    pub times: Vec<f64>,
    pub left: f64,
    pub right: f64,
    pub policy: BoundaryPolicy,
    pub replicas: usize,
    pub seed: u64,
    pub lambdas: Vec<f64>,
    /// Span of the phase sweep.
    pub x: f64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("serialisable");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Invalid configuration, pointing at a line of the file when possible.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Values supplied on the command line, applied over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    experiment: RawExperiment,
    measure: Option<Spanned<RawMeasure>>,
    #[serde(default)]
    window: RawWindow,
    #[serde(default)]
    time: RawTime,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    seed: Option<u64>,
    replicas: Option<Spanned<i64>>,
    lambdas: Option<Spanned<Vec<f64>>>,
    x: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    kind: Spanned<String>,
    size: Option<f64>,
    truncation: Option<f64>,
    alpha: Option<f64>,
    c: Option<f64>,
    cutoff: Option<f64>,
    mean: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct RawWindow {
    left: Option<f64>,
    right: Option<Spanned<f64>>,
    start: Option<Spanned<String>>,
    margin_factor: Option<Spanned<f64>>,
    margin: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TimeValue {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t: Option<Spanned<TimeValue>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<String>,
    format: Option<Spanned<String>>,
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        self.src[..span.start.min(self.src.len())]
            .matches('\n')
            .count()
            + 1
    }

    fn err<T>(
        &self,
        span: Option<Range<usize>>,
        message: impl Into<String>,
    ) -> Result<T, ConfigError> {
        Err(ConfigError {
            line: span.map(|s| self.line(s)),
            message: message.into(),
        })
    }
}

fn default_lambdas(kind: ExperimentKind) -> Vec<f64> {
    match kind {
        ExperimentKind::KappaTable => (-12..=4).map(|k| 10f64.powf(k as f64 / 2.0)).collect(),
        ExperimentKind::PhaseSweep => vec![1.0],
        _ => vec![0.5, 1.0, 2.0],
    }
}

fn default_times(kind: ExperimentKind) -> Vec<f64> {
    match kind {
        ExperimentKind::Saturation => vec![0.9, 0.95, 0.99],
        _ => vec![0.5],
    }
}

fn default_replicas(kind: ExperimentKind) -> usize {
    match kind {
        ExperimentKind::Simulate | ExperimentKind::KappaTable => 1,
        ExperimentKind::PhaseSweep => 500,
        _ => 10_000,
    }
}

fn parse_format(ctx: &Ctx, f: &Spanned<String>) -> Result<Format, ConfigError> {
    match f.get_ref().as_str() {
        "csv" => Ok(Format::Csv),
        "jsonl" => Ok(Format::Jsonl),
        other => ctx.err(
            Some(f.span()),
            format!("unknown output format `{other}` (expected csv or jsonl)"),
        ),
    }
}

fn build_measure(ctx: &Ctx, m: &Spanned<RawMeasure>) -> Result<SizeMeasure, ConfigError> {
    let span = Some(m.span());
    let raw = m.get_ref();
    let need = |v: Option<f64>, key: &str| match v {
        Some(x) => Ok(x),
        None => ctx.err(
            span.clone(),
            format!("measure `{}` needs `{key}`", raw.kind.get_ref()),
        ),
    };
    let built = match raw.kind.get_ref().as_str() {
        "point-mass" => SizeMeasure::point_mass(raw.size.unwrap_or(1.0)),
        "exponential" => Ok(SizeMeasure::exponential()),
        "gamma-levy" => SizeMeasure::gamma_levy(raw.truncation.unwrap_or(DEFAULT_GAMMA_TRUNCATION)),
        "pareto-tail" => SizeMeasure::pareto_tail(
            need(raw.alpha, "alpha")?,
            need(raw.c, "c")?,
            need(raw.cutoff, "cutoff")?,
            need(raw.mean, "mean")?,
        ),
        other => {
            return ctx.err(
                Some(raw.kind.span()),
                format!("unknown measure kind `{other}` (expected point-mass, exponential, gamma-levy or pareto-tail)"),
            )
        }
    };
    if raw.kind.get_ref() == "gamma-levy" && raw.truncation == Some(0.0) {
        return ctx.err(
            span,
            "the gamma Lévy measure has infinite mass; truncation must be positive",
        );
    }
    built.or_else(|e| ctx.err(span, e.to_string()))
}

/// Parses and validates a configuration for `kind`. An empty source gives
/// the defaults of that experiment.
pub fn parse_config(
    src: &str,
    kind: ExperimentKind,
    overrides: &Overrides,
) -> Result<ExperimentConfig, ConfigError> {
    let ctx = Ctx { src };
    let raw: RawConfig =
        toml::from_str(src).or_else(|e| ctx.err(e.span(), e.message().to_string()))?;

    let nu = match &raw.measure {
        Some(m) => build_measure(&ctx, m)?,
        None => SizeMeasure::unit(),
    };
    let m = nu.mean();

    let (times, t_span) = match &raw.time.t {
        Some(s) => (
            match s.get_ref() {
                TimeValue::One(t) => vec![*t],
                TimeValue::Many(v) => v.clone(),
            },
            Some(s.span()),
        ),
        None => (default_times(kind), None),
    };
    if times.is_empty() {
        return ctx.err(t_span, "`t` needs at least one value");
    }
    for &t in &times {
        if !(t >= 0.0 && t.is_finite()) {
            return ctx.err(t_span, format!("time must be finite and >= 0, got {t}"));
        }
        let needs_subcritical = matches!(
            kind,
            ExperimentKind::VerifyFixedTime
                | ExperimentKind::KappaTable
                | ExperimentKind::Saturation
        );
        if needs_subcritical && !(t * m < 1.0) {
            return ctx.err(
                t_span,
                format!("this experiment needs t < 1/m = {}, got {t}", 1.0 / m),
            );
        }
        if matches!(
            kind,
            ExperimentKind::VerifyFixedTime | ExperimentKind::Saturation
        ) && t <= 0.0
        {
            return ctx.err(t_span, "this experiment needs t > 0");
        }
    }

    let replicas = match &raw.experiment.replicas {
        Some(r) => {
            let n = *r.get_ref();
            if n <= 0 {
                return ctx.err(
                    Some(r.span()),
                    format!("replicas must be positive, got {n}"),
                );
            }
            if kind.runs_tests() && (n as usize) < KS_MIN_SAMPLE {
                return ctx.err(
                    Some(r.span()),
                    format!("hypothesis tests need at least {KS_MIN_SAMPLE} replicas, got {n}"),
                );
            }
            n as usize
        }
        None => default_replicas(kind),
    };

    let lambdas = match &raw.experiment.lambdas {
        Some(l) => {
            let v = l.get_ref().clone();
            let ok = match kind {
                ExperimentKind::VerifyFixedTime | ExperimentKind::KappaTable => {
                    v.iter().all(|&x| x >= 0.0)
                }
                _ => v.iter().all(|&x| x > 0.0),
            };
            if v.is_empty() || !ok || v.iter().any(|x| !x.is_finite()) {
                return ctx.err(
                    Some(l.span()),
                    "lambdas must be a non-empty list of finite values (>= 0, or > 0 for sweeps)",
                );
            }
            v
        }
        None => default_lambdas(kind),
    };

    let x = match &raw.experiment.x {
        Some(s) => {
            if !(*s.get_ref() > 1.0) {
                return ctx.err(Some(s.span()), "sweep span x must exceed 1");
            }
            *s.get_ref()
        }
        None => 1e4,
    };
    if kind == ExperimentKind::PhaseSweep {
        let regime = regime_for(&nu)
            .or_else(|e| ctx.err(raw.measure.as_ref().map(|m| m.span()), e.to_string()))?;
        let span = raw.experiment.lambdas.as_ref().map(|l| l.span());
        for &lambda in lambdas.iter().chain(&[10.0, 0.1]) {
            if regime.time_for(lambda, x).is_err() {
                return ctx.err(span, format!("λ = {lambda} at x = {x} gives t <= 0"));
            }
        }
    }

    let default_right = match kind {
        ExperimentKind::Simulate => 100.0,
        _ => 2000.0,
    };
    let left = raw.window.left.unwrap_or(0.0);
    let right = raw
        .window
        .right
        .as_ref()
        .map_or(default_right, |r| *r.get_ref());
    if !(right > left) || !left.is_finite() || !right.is_finite() {
        return ctx.err(
            raw.window.right.as_ref().map(|r| r.span()),
            format!("window needs left < right, got [{left}, {right}]"),
        );
    }
    let start = match &raw.window.start {
        Some(s) => match s.get_ref().as_str() {
            "empty" => Start::Empty,
            "stationary" => Start::Stationary,
            other => {
                return ctx.err(
                    Some(s.span()),
                    format!("unknown start `{other}` (expected empty or stationary)"),
                )
            }
        },
        None => Start::Empty,
    };
    let margin = match (&raw.window.margin, &raw.window.margin_factor) {
        (Some(a), Some(_)) => {
            return ctx.err(
                Some(a.span()),
                "give either `margin` or `margin-factor`, not both",
            )
        }
        (Some(a), None) => {
            if !(*a.get_ref() >= 0.0 && a.get_ref().is_finite()) {
                return ctx.err(Some(a.span()), "margin must be finite and >= 0");
            }
            MarginRule::Fixed(*a.get_ref())
        }
        (None, Some(f)) => {
            if !(*f.get_ref() >= 0.0 && f.get_ref().is_finite()) {
                return ctx.err(Some(f.span()), "margin-factor must be finite and >= 0");
            }
            MarginRule::Factor(*f.get_ref())
        }
        (None, None) => MarginRule::Factor(DEFAULT_MARGIN_FACTOR),
    };
    let policy = BoundaryPolicy { start, margin };
    if matches!(
        kind,
        ExperimentKind::Simulate | ExperimentKind::VerifyFixedTime
    ) {
        let span = raw
            .window
            .start
            .as_ref()
            .map(|s| s.span())
            .or(raw.window.margin_factor.as_ref().map(|s| s.span()))
            .or(t_span.clone());
        for &t in &times {
            if let Err(e) = policy.margin_for(&nu, t) {
                return ctx.err(span, e.to_string());
            }
        }
    }
    if kind == ExperimentKind::Saturation {
        let ok = regime_for(&nu).map(|r| r.class == crate::scaling::TailClass::Finite2Plus);
        if ok != Ok(true) {
            return ctx.err(
                raw.measure.as_ref().map(|m| m.span()),
                "saturation tests need a finite second moment",
            );
        }
    }
    if kind == ExperimentKind::VerifyFixedTime
        && matches!(nu.kind(), crate::arrivals::SizeKind::ParetoTail { .. })
    {
        return ctx.err(
            raw.measure.as_ref().map(|m| m.span()),
            "fixed-time tests need a finite second moment",
        );
    }

    let format = match (&overrides.format, &raw.output.format) {
        (Some(f), _) => *f,
        (None, Some(f)) => parse_format(&ctx, f)?,
        (None, None) => match kind {
            ExperimentKind::VerifyFixedTime | ExperimentKind::Saturation => Format::Jsonl,
            _ => Format::Csv,
        },
    };

    Ok(ExperimentConfig {
        experiment: kind,
        nu,
        times,
        left,
        right,
        policy,
        replicas,
        seed: overrides.seed.or(raw.experiment.seed).unwrap_or(0),
        lambdas,
        x,
        out: overrides.out.clone().or(raw.output.path.map(PathBuf::from)),
        format,
    })
}
