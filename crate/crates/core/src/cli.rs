//! Command-line experiment runner.
//!
//! Every payload starts with a header carrying the experiment, the config
//! hash and the seed. The payload goes to `--out` when given and to stdout
//! otherwise; a short human summary is written to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{parse_config, ExperimentConfig, ExperimentKind, Format, Overrides};
use crate::fluctuation::ExponentModel;
use crate::observables::{verify_fixed_time, with_retry, EstimateReport, ObservableConfig};
use crate::replica::ReplicaSetup;
use crate::rng::StreamSeed;
use crate::scaling::{median, phase_transition_sweep, saturation_reports, write_sweep_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TEST_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "parking-sim",
    version,
    about = "Random parking storage simulator"
)]
struct Cli {
    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Dump the covering of each replica.
    Simulate,
    /// Fixed-horizon estimators and goodness-of-fit tests.
    VerifyFixedTime,
    /// Tabulate κ(λ) and the round-trip residual.
    KappaTable,
    /// Rescaled straddle length near saturation.
    Saturation,
    /// Largest block near the phase transition.
    PhaseSweep,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<Command> for ExperimentKind {
    fn from(c: Command) -> Self {
        match c {
            Command::Simulate => Self::Simulate,
            Command::VerifyFixedTime => Self::VerifyFixedTime,
            Command::KappaTable => Self::KappaTable,
            Command::Saturation => Self::Saturation,
            Command::PhaseSweep => Self::PhaseSweep,
        }
    }
}

#[derive(Serialize)]
struct Header<'a> {
    experiment: ExperimentKind,
    config_hash: &'a str,
    seed: u64,
}

#[derive(Serialize)]
struct TimedReport<'a> {
    t: f64,
    #[serde(flatten)]
    report: &'a EstimateReport,
}

#[derive(Serialize)]
struct CoveringRecord<'a> {
    t: f64,
    replica: u64,
    blocks: &'a [(f64, f64)],
}

#[derive(Serialize)]
struct KappaRow {
    t: f64,
    lambda: f64,
    kappa: f64,
    residual: f64,
}

/// Parses `args` (including the program name), runs the experiment and
/// returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    let (label, src) = match &cli.config {
        Some(p) => match fs::read_to_string(p) {
            Ok(s) => (p.display().to_string(), s),
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", p.display());
                return EXIT_INVALID;
            }
        },
        None => ("config".to_string(), String::new()),
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        format: cli.format.map(|f| match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }),
    };
    let cfg = match parse_config(&src, cli.command.into(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            match e.line {
                Some(l) => eprintln!("error: {label}:{l}: {}", e.message),
                None => eprintln!("error: {label}: {}", e.message),
            }
            return EXIT_INVALID;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_INVALID;
        }
        // A second call in the same process finds the pool already built.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match execute(&cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

type Failure = Box<dyn std::error::Error>;

fn execute(cfg: &ExperimentConfig) -> Result<i32, Failure> {
    let mut payload = Vec::new();
    let hash = cfg.hash();
    write_header(&mut payload, cfg, &hash)?;
    let code = match cfg.experiment {
        ExperimentKind::Simulate => simulate(cfg, &mut payload)?,
        ExperimentKind::VerifyFixedTime => fixed_time(cfg, &mut payload)?,
        ExperimentKind::KappaTable => kappa_table(cfg, &mut payload)?,
        ExperimentKind::Saturation => saturation(cfg, &mut payload)?,
        ExperimentKind::PhaseSweep => phase_sweep(cfg, &mut payload)?,
    };
    match &cfg.out {
        Some(p) => fs::write(p, &payload)?,
        None => {
            let mut out = BufWriter::new(io::stdout().lock());
            out.write_all(&payload)?;
            out.flush()?;
        }
    }
    Ok(code)
}

fn write_header(out: &mut Vec<u8>, cfg: &ExperimentConfig, hash: &str) -> io::Result<()> {
    let h = Header {
        experiment: cfg.experiment,
        config_hash: hash,
        seed: cfg.seed,
    };
    match cfg.format {
        Format::Csv => {
            let name = serde_json::to_value(cfg.experiment)?;
            writeln!(
                out,
                "# experiment={} config_hash={hash} seed={}",
                name.as_str().unwrap_or_default(),
                cfg.seed
            )
        }
        Format::Jsonl => writeln!(out, "{}", serde_json::json!({ "header": h })),
    }
}

fn simulate(cfg: &ExperimentConfig, out: &mut Vec<u8>) -> Result<i32, Failure> {
    for (k, &t) in cfg.times.iter().enumerate() {
        let setup = ReplicaSetup::new(&cfg.nu, t, cfg.left, cfg.right, &cfg.policy)?;
        let master = StreamSeed::new(cfg.seed, 0).remastered(k as u64).master;
        let runs = crate::replica::replicate(master, cfg.replicas, |s| {
            setup.run(s, setup.window.midpoint())
        });
        for (r, run) in runs.iter().enumerate() {
            let cov = &run.covering;
            match cfg.format {
                Format::Csv => {
                    writeln!(out, "# replica={r}")?;
                    cov.write_csv(t, cfg.seed, &mut *out)?;
                }
                Format::Jsonl => {
                    let rec = CoveringRecord {
                        t,
                        replica: r as u64,
                        blocks: cov.blocks(),
                    };
                    writeln!(out, "{}", serde_json::to_string(&rec)?)?;
                }
            }
            eprintln!(
                "t={t} replica={r}: {} blocks, covered fraction {:.6}",
                cov.blocks().len(),
                cov.covered_fraction()
            );
        }
    }
    Ok(EXIT_OK)
}

fn write_reports(
    cfg: &ExperimentConfig,
    rows: &[(f64, EstimateReport)],
    out: &mut Vec<u8>,
) -> Result<i32, Failure> {
    if cfg.format == Format::Csv {
        writeln!(
            out,
            "t,name,estimate,stderr,n,target,statistic,p_value,passed,attempt"
        )?;
    }
    for (t, r) in rows {
        match cfg.format {
            Format::Csv => {
                let target = match &r.target {
                    crate::observables::Target::Value(v) => v.to_string(),
                    crate::observables::Target::Law(s) => format!("\"{s}\""),
                };
                writeln!(
                    out,
                    "{t},{},{},{},{},{target},{},{},{},{}",
                    r.name, r.estimate, r.stderr, r.n, r.statistic, r.p_value, r.passed, r.attempt
                )?;
            }
            Format::Jsonl => writeln!(
                out,
                "{}",
                serde_json::to_string(&TimedReport { t: *t, report: r })?
            )?,
        }
        eprintln!(
            "{:<5} t={t:<6} {:<40} estimate {:>12.6} stderr {:>10.3e} p {:>9.3e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.estimate,
            r.stderr,
            r.p_value
        );
    }
    let failed = rows.iter().filter(|(_, r)| !r.passed).count();
    eprintln!("{} of {} tests passed", rows.len() - failed, rows.len());
    Ok(if failed == 0 {
        EXIT_OK
    } else {
        EXIT_TEST_FAILURE
    })
}

fn fixed_time(cfg: &ExperimentConfig, out: &mut Vec<u8>) -> Result<i32, Failure> {
    let obs = ObservableConfig::new(cfg.nu.clone(), cfg.left, cfg.right)
        .with_policy(cfg.policy)
        .with_seed(cfg.seed);
    let mut rows = Vec::new();
    for (k, &t) in cfg.times.iter().enumerate() {
        let c = if k == 0 {
            obs.clone()
        } else {
            obs.reseeded(100 + k as u64)
        };
        let reports = with_retry(&c, |c| verify_fixed_time(c, t, &cfg.lambdas, cfg.replicas))?;
        rows.extend(reports.into_iter().map(|r| (t, r)));
    }
    write_reports(cfg, &rows, out)
}

fn saturation(cfg: &ExperimentConfig, out: &mut Vec<u8>) -> Result<i32, Failure> {
    let first = saturation_reports(&cfg.nu, &cfg.times, cfg.replicas, cfg.seed)?;
    let rows = if first.iter().all(|(_, r)| r.passed) {
        first
    } else {
        let reseed = StreamSeed::new(cfg.seed, 0).remastered(1).master;
        let second = saturation_reports(&cfg.nu, &cfg.times, cfg.replicas, reseed)?;
        first
            .into_iter()
            .zip(second)
            .map(|(a, (t, mut b))| {
                if a.1.passed {
                    a
                } else {
                    b.attempt = 2;
                    (t, b)
                }
            })
            .collect()
    };
    write_reports(cfg, &rows, out)
}

fn kappa_table(cfg: &ExperimentConfig, out: &mut Vec<u8>) -> Result<i32, Failure> {
    if cfg.format == Format::Csv {
        writeln!(out, "t,lambda,kappa,residual")?;
    }
    let mut worst: f64 = 0.0;
    for &t in &cfg.times {
        let model = ExponentModel::new(cfg.nu.clone(), t)?;
        for &lambda in &cfg.lambdas {
            let kappa = model.kappa(lambda)?;
            let residual = -model.psi(kappa)? - lambda;
            worst = worst.max(residual.abs() / lambda.max(1.0));
            let row = KappaRow {
                t,
                lambda,
                kappa,
                residual,
            };
            match cfg.format {
                Format::Csv => writeln!(out, "{t},{lambda:e},{kappa:.17e},{residual:e}")?,
                Format::Jsonl => writeln!(out, "{}", serde_json::to_string(&row)?)?,
            }
        }
    }
    eprintln!(
        "{} values of κ, largest relative round-trip residual {worst:.3e}",
        cfg.times.len() * cfg.lambdas.len()
    );
    Ok(EXIT_OK)
}

fn phase_sweep(cfg: &ExperimentConfig, out: &mut Vec<u8>) -> Result<i32, Failure> {
    let rows = phase_transition_sweep(&cfg.nu, cfg.x, &cfg.lambdas, cfg.replicas, cfg.seed)?;
    match cfg.format {
        Format::Csv => write_sweep_csv(&rows, &mut *out)?,
        Format::Jsonl => {
            for r in &rows {
                writeln!(out, "{}", serde_json::to_string(r)?)?;
            }
        }
    }
    let mut lambdas: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    lambdas.dedup();
    for lambda in lambdas {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.lambda == lambda)
            .map(|r| r.b1_over_x)
            .collect();
        let low = v.iter().filter(|&&b| b < 0.05).count() as f64 / v.len() as f64;
        let high = v.iter().filter(|&&b| b > 0.95).count() as f64 / v.len() as f64;
        eprintln!(
            "λ={lambda:<6} median B1/x {:.4}  P(<0.05) {low:.3}  P(>0.95) {high:.3}",
            median(&v)
        );
    }
    Ok(EXIT_OK)
}
