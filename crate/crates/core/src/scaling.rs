//! Behaviour near saturation: scaling regimes, limit processes and the
//! largest-block phase transition.
//!
//! As `mt → 1` blocks grow like `1/ε(t)`, and on the scale `ε(t)` the covering
//! converges to the excursion set of `Y_z = -λz + (noise)`, with Brownian
//! noise for finite second moments and spectrally positive stable noise for
//! power-law tails of index `α ∈ (1, 2)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use statrs::distribution::{ContinuousCDF, Gamma};

use crate::allocator::Covering;
use crate::arrivals::{SizeKind, SizeMeasure, Window};
use crate::error::{domain, Result};
use crate::observables::{EstimateReport, Target};
use crate::replica::{replicate, BoundaryPolicy, MarginRule, ReplicaSetup};
use crate::rng::{Purpose, StreamSeed};
use crate::stats::ks_one_sample;

/// Margin of the straddle probe, in units of `1/ε(t)`.
pub const SATURATION_MARGIN_FACTOR: f64 = 20.0;
/// How far right of the probe a straddling block is followed, in units of `1/ε(t)`.
const SATURATION_REACH_FACTOR: f64 = 400.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum TailClass {
    /// Finite second moment.
    Finite2Plus,
    /// `ν̄(x) ~ C x^{-2}`.
    Boundary2,
    /// `ν̄(x) ~ C x^{-α}` with `1 < α < 2`.
    Stable { alpha: f64 },
}

/// Scaling functions of a tail class together with the limit parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRegime {
    pub class: TailClass,
    /// `m`.
    pub mean: f64,
    /// `m₂`, infinite for power-law tails.
    pub second_moment: f64,
    /// Tail constant `C`, for power-law tails.
    pub tail_constant: Option<f64>,
    /// `C_α = (C Γ(2-α) / (m (α-1)))^{1/α}`, for stable tails.
    pub c_alpha: Option<f64>,
}

pub fn regime_for(nu: &SizeMeasure) -> Result<ScalingRegime> {
    let (class, tail_constant, c_alpha) = match *nu.kind() {
        SizeKind::ParetoTail { alpha, c, .. } => {
            if alpha <= 1.0 {
                return domain(format!("α = {alpha} gives an infinite mean"));
            }
            if alpha >= 2.0 {
                (TailClass::Boundary2, Some(c), None)
            } else {
                let ca = (c * gamma(2.0 - alpha) / (nu.mean() * (alpha - 1.0))).powf(1.0 / alpha);
                (TailClass::Stable { alpha }, Some(c), Some(ca))
            }
        }
        _ => (TailClass::Finite2Plus, None, None),
    };
    Ok(ScalingRegime {
        class,
        mean: nu.mean(),
        second_moment: nu.second_moment(),
        tail_constant,
        c_alpha,
    })
}

impl ScalingRegime {
    /// `ε(t)`; NaN once `mt >= 1`.
    pub fn epsilon(&self, t: f64) -> f64 {
        let gap = 1.0 - self.mean * t;
        if !(gap > 0.0) {
            return f64::NAN;
        }
        match self.class {
            TailClass::Finite2Plus => gap * gap,
            TailClass::Boundary2 => 2.0 * gap * gap / -gap.ln(),
            TailClass::Stable { alpha } => gap.powf(alpha / (alpha - 1.0)),
        }
    }

    /// `f(x)`, the width of the critical window of `1 - mt` at span `x`.
    pub fn f(&self, x: f64) -> f64 {
        match self.class {
            TailClass::Finite2Plus => 1.0 / x.sqrt(),
            TailClass::Boundary2 => (x.ln() / x).sqrt(),
            TailClass::Stable { alpha } => x.powf(1.0 / alpha - 1.0),
        }
    }

    /// Horizon with `1 - mt = λ f(x)`.
    pub fn time_for(&self, lambda: f64, x: f64) -> Result<f64> {
        let t = (1.0 - lambda * self.f(x)) / self.mean;
        if !(lambda > 0.0) || !(t > 0.0) {
            return domain(format!(
                "λ = {lambda} at x = {x} gives t = {t} outside (0, 1/m)"
            ));
        }
        Ok(t)
    }

    /// Block length scale `1/ε(t)`, times `m₂/m` for finite second moments.
    pub fn block_scale(&self, t: f64) -> f64 {
        let s = 1.0 / self.epsilon(t);
        match self.class {
            TailClass::Finite2Plus => s * self.second_moment / self.mean,
            _ => s,
        }
    }
}

/// `Y_z = -λz + coefficient · noise_z`, Brownian or standard stable noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitProcess {
    pub class: TailClass,
    pub lambda: f64,
    pub coefficient: f64,
}

impl LimitProcess {
    pub fn new(regime: &ScalingRegime, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return domain(format!("drift coefficient must be positive, got {lambda}"));
        }
        let coefficient = match regime.class {
            TailClass::Finite2Plus => (regime.second_moment / regime.mean).sqrt(),
            TailClass::Boundary2 => {
                (regime.tail_constant.expect("power tail") / regime.mean).sqrt()
            }
            TailClass::Stable { .. } => regime.c_alpha.expect("stable tail"),
        };
        Ok(Self {
            class: regime.class,
            lambda,
            coefficient,
        })
    }

    /// Increment over a step `h`.
    fn increment<R: Rng + ?Sized>(&self, h: f64, rng: &mut R) -> f64 {
        let noise = match self.class {
            TailClass::Stable { alpha } => h.powf(1.0 / alpha) * sample_stable(alpha, rng),
            _ => h.sqrt() * rng.sample::<f64, _>(StandardNormal),
        };
        -self.lambda * h + self.coefficient * noise
    }

    /// Draws `sup_{z >= 0} Y_z`, the stationary workload of the limit.
    pub fn sample_supremum<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.class {
            TailClass::Stable { alpha } => {
                let beta = alpha - 1.0;
                let c = (self.coefficient.powf(alpha) / self.lambda).powf(1.0 / beta);
                let w: f64 = rng.sample(Exp1);
                c * w.powf(1.0 / beta) * sample_positive_stable(beta, rng)
            }
            _ => {
                let rate = 2.0 * self.lambda / (self.coefficient * self.coefficient);
                rng.sample::<f64, _>(Exp1) / rate
            }
        }
    }
}

/// Spectrally positive stable variable with `E e^{-λX} = e^{λ^α}`, `1 < α < 2`
/// (Chambers–Mallows–Stuck with skewness 1).
pub fn sample_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    let v = PI * (u - 0.5);
    let w: f64 = rng.sample(Exp1);
    let half = PI * alpha / 2.0;
    let b = (half - PI) / alpha;
    let s = (-1.0 / half.cos()).powf(1.0 / alpha);
    let x = s * (alpha * (v + b)).sin() / v.cos().powf(1.0 / alpha)
        * ((v - alpha * (v + b)).cos() / w).powf((1.0 - alpha) / alpha);
    (-half.cos()).powf(1.0 / alpha) * x
}

/// Positive stable variable with `E e^{-μS} = e^{-μ^β}`, `0 < β < 1` (Kanter).
pub fn sample_positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let u: f64 = PI * rng.sample::<f64, _>(Open01);
    let e: f64 = rng.sample(Exp1);
    let a = (beta * u).sin().powf(beta / (1.0 - beta)) * ((1.0 - beta) * u).sin()
        / u.sin().powf(1.0 / (1.0 - beta));
    (a / e).powf((1.0 - beta) / beta)
}

/// Grid simulation of the limit covering `{Y > running infimum}` on
/// `[0, span]`, started from the stationary workload. `grid_step` defaults
/// to `span / 10⁶`.
pub fn sample_limit_covering(
    process: &LimitProcess,
    grid_step: Option<f64>,
    span: f64,
    seed: impl Into<StreamSeed>,
) -> Result<Covering> {
    let h = grid_step.unwrap_or(span / 1e6);
    if !(h > 0.0) {
        return domain(format!("grid step must be positive, got {h}"));
    }
    let window = Window::new(0.0, span, 0.0)?;
    let mut rng = seed.into().rng(Purpose::Limit);
    let mut r = process.sample_supremum(&mut rng);
    let steps = (span / h).ceil() as usize;
    let mut blocks = Vec::new();
    let mut open = (r > 0.0).then_some(0.0);
    for k in 0..steps {
        let z = k as f64 * h;
        let step = h.min(span - z);
        let dy = process.increment(step, &mut rng);
        let next = r + dy;
        if next > 0.0 {
            open.get_or_insert(z);
            r = next;
        } else {
            if let Some(a) = open.take() {
                // linear interpolation of the return to the infimum
                let end = z + step * r / (r - next);
                blocks.push((a, end.max(a)));
            }
            r = 0.0;
        }
    }
    if let Some(a) = open {
        blocks.push((a, span));
    }
    blocks.retain(|&(a, b)| b > a);
    Ok(Covering::from_blocks(window, blocks))
}

/// Rescaled straddling block lengths `ε(t) l(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledSample {
    pub t: f64,
    pub epsilon: f64,
    pub values: Vec<f64>,
    /// Replicas whose straddling block reached an end of the simulated span.
    pub clipped: usize,
}

/// Straddling block at a point, under a stationary start with a margin of
/// `20 / ε(t)` block scales, rescaled by `ε(t)`.
pub fn rescaled_straddle_sample(
    nu: &SizeMeasure,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<RescaledSample> {
    let regime = regime_for(nu)?;
    if !(t > 0.0 && nu.mean() * t < 1.0) {
        return domain(format!("needs 0 < t < 1/m, got t = {t}"));
    }
    let scale = regime.block_scale(t);
    let policy = BoundaryPolicy::stationary(MarginRule::Fixed(SATURATION_MARGIN_FACTOR * scale));
    let setup = ReplicaSetup::new(nu, t, 0.0, SATURATION_REACH_FACTOR * scale, &policy)?;
    let eps = regime.epsilon(t);
    let raw = replicate(seed, replicas, |s| setup.straddle_probe(s, 0.0));
    let clipped = raw.iter().filter(|r| r.is_none()).count();
    Ok(RescaledSample {
        t,
        epsilon: eps,
        values: raw.into_iter().flatten().map(|s| eps * s.length).collect(),
        clipped,
    })
}

/// Tests of the rescaled straddle length at each horizon in `times`, for
/// finite second moments: the exact finite-`t` mean `m₂ t`, the atom
/// `P(l = 0) = 1 - mt`, whether `|mean - m₂/m|` shrinks as `t` grows, and a
/// KS test against the Gamma(½, m/(2m₂)) limit at the largest `t`.
pub fn saturation_reports(
    nu: &SizeMeasure,
    times: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<(f64, EstimateReport)>> {
    let regime = regime_for(nu)?;
    if regime.class != TailClass::Finite2Plus {
        return domain("saturation tests need a finite second moment");
    }
    let mut times = times.to_vec();
    times.sort_by(f64::total_cmp);
    let limit_mean = regime.second_moment / regime.mean;
    let mut out = Vec::new();
    let mut gaps = Vec::new();
    let mut last = None;
    for (k, &t) in times.iter().enumerate() {
        let master = StreamSeed::new(seed, 0).remastered(k as u64).master;
        let sample = rescaled_straddle_sample(nu, t, replicas, master)?;
        let mut mean =
            EstimateReport::mean_test("rescaled-mean", &sample.values, regime.second_moment * t);
        mean.n = sample.values.len();
        gaps.push((mean.estimate - limit_mean).abs());
        out.push((t, mean));
        let atoms: Vec<f64> = sample
            .values
            .iter()
            .map(|&v| if v == 0.0 { 1.0 } else { 0.0 })
            .collect();
        out.push((
            t,
            EstimateReport::mean_test("straddle-atom", &atoms, 1.0 - nu.mean() * t),
        ));
        let mut clip = EstimateReport::z_test(
            "clipped-replicas",
            sample.clipped as f64,
            0.0,
            replicas,
            0.0,
        );
        clip.passed = sample.clipped == 0;
        out.push((t, clip));
        last = Some((t, sample));
    }
    if let Some((t, sample)) = last {
        let rate = regime.mean / (2.0 * regime.second_moment);
        let g = Gamma::new(0.5, rate).map_err(|e| crate::Error::Numerical(e.to_string()))?;
        let r = ks_one_sample(&sample.values, |x| g.cdf(x), |x| g.cdf(x))?;
        out.push((
            t,
            EstimateReport::law_test(
                "rescaled-gamma-ks",
                sample.values.len(),
                format!("Gamma(shape 0.5, rate {rate})"),
                r.statistic,
                r.p_value,
            ),
        ));
    }
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    let tmax = times.last().copied().unwrap_or(f64::NAN);
    out.push((
        tmax,
        EstimateReport {
            name: "rescaled-mean-approaches-limit".into(),
            estimate: gaps.last().copied().unwrap_or(f64::NAN),
            stderr: 0.0,
            n: gaps.len(),
            target: Target::Value(0.0),
            statistic: gaps.last().copied().unwrap_or(f64::NAN),
            p_value: if monotone { 1.0 } else { 0.0 },
            passed: monotone,
            attempt: 1,
        },
    ));
    Ok(out)
}

/// One row of the phase-transition table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub replica: u64,
    pub b1_over_x: f64,
}

/// `B₁(x, t)/x` on `[0, x]` at `1 - mt = λ f(x)` for each λ, plus the two
/// extreme regimes λ = 10 and λ = 0.1. Stationary start, no margin.
pub fn phase_transition_sweep(
    nu: &SizeMeasure,
    x: f64,
    lambdas: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let regime = regime_for(nu)?;
    let mut all: Vec<f64> = lambdas.to_vec();
    for extra in [10.0, 0.1] {
        if !all.contains(&extra) {
            all.push(extra);
        }
    }
    let policy = BoundaryPolicy::stationary(MarginRule::Fixed(0.0));
    let mut rows = Vec::with_capacity(all.len() * replicas);
    for (k, &lambda) in all.iter().enumerate() {
        let t = regime.time_for(lambda, x)?;
        let setup = ReplicaSetup::new(nu, t, 0.0, x, &policy)?;
        let master = StreamSeed::new(seed, 0).remastered(k as u64).master;
        let b1 = replicate(master, replicas, |s| {
            setup.run(s, 0.0).covering.census().largest / x
        });
        rows.extend(b1.into_iter().enumerate().map(|(r, b)| SweepRow {
            lambda,
            replica: r as u64,
            b1_over_x: b,
        }));
    }
    Ok(rows)
}

/// Writes sweep rows as CSV with header `lambda,replica,B1_over_x`.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "lambda,replica,B1_over_x")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.lambda, r.replica, r.b1_over_x)?;
    }
    Ok(())
}

/// Median of a sample (mean of the middle pair for even sizes).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_two_sample, mean_stderr};
    use approx::assert_abs_diff_eq;

    #[test]
    fn regimes() {
        let r = regime_for(&SizeMeasure::unit()).unwrap();
        assert_eq!((r.class, r.second_moment), (TailClass::Finite2Plus, 1.0));
        let p = SizeMeasure::pareto_tail(1.5, 1.0, 1.0, 4.0).unwrap();
        let r = regime_for(&p).unwrap();
        assert_eq!(r.class, TailClass::Stable { alpha: 1.5 });
        // exponent α/(α-1) = 3, with m = 4
        assert_abs_diff_eq!(r.epsilon(0.2), 0.2f64.powi(3), epsilon = 1e-15);
        let ca = (gamma(0.5) / (4.0 * 0.5)).powf(1.0 / 1.5);
        assert_abs_diff_eq!(r.c_alpha.unwrap(), ca, epsilon = 1e-14);
        let b = SizeMeasure::pareto_tail(2.0, 1.0, 1.0, 3.0).unwrap();
        assert_eq!(regime_for(&b).unwrap().class, TailClass::Boundary2);
        assert!(regime_for(&SizeMeasure::unit())
            .unwrap()
            .epsilon(1.0)
            .is_nan());
    }

    #[test]
    fn epsilon_and_f_couple_to_inverse_span() {
        let regimes = [
            regime_for(&SizeMeasure::unit()).unwrap(),
            regime_for(&SizeMeasure::pareto_tail(2.0, 1.0, 1.0, 3.0).unwrap()).unwrap(),
            regime_for(&SizeMeasure::pareto_tail(1.5, 1.0, 1.0, 4.0).unwrap()).unwrap(),
        ];
        for r in regimes {
            for &lambda in &[0.5, 1.0, 2.0] {
                let v: Vec<f64> = [1e6, 1e8, 1e10, 1e12]
                    .iter()
                    .map(|&x| r.epsilon(r.time_for(lambda, x).unwrap()) * x)
                    .collect();
                // bounded away from 0 and ∞, and settling
                assert!(v.iter().all(|&y| y > 0.05 && y < 50.0), "{v:?}");
                assert!((v[3] / v[2] - 1.0).abs() < 0.2);
            }
        }
        assert!(regime_for(&SizeMeasure::unit())
            .unwrap()
            .time_for(0.0, 100.0)
            .is_err());
    }

    #[test]
    fn stable_sampler_transform() {
        for &alpha in &[1.5, 1.8] {
            let mut rng = StreamSeed::new(9, 0).rng(Purpose::Aux);
            let xs: Vec<f64> = (0..200_000)
                .map(|_| sample_stable(alpha, &mut rng))
                .collect();
            for &lambda in &[0.5, 1.0] {
                let v: Vec<f64> = xs.iter().map(|x| (-lambda * x).exp()).collect();
                let (m, se) = mean_stderr(&v);
                let target = f64::powf(lambda, alpha).exp();
                assert!(
                    (m - target).abs() < 3.0 * se,
                    "α={alpha} λ={lambda}: {m} vs {target} ± {se}"
                );
            }
        }
    }

    #[test]
    fn positive_stable_transform() {
        let mut rng = StreamSeed::new(10, 0).rng(Purpose::Aux);
        let beta = 0.5;
        let v: Vec<f64> = (0..100_000)
            .map(|_| (-sample_positive_stable(beta, &mut rng)).exp())
            .collect();
        let (m, se) = mean_stderr(&v);
        assert!((m - (-1f64).exp()).abs() < 3.0 * se);
    }

    #[test]
    fn stable_supremum_transform() {
        let regime = regime_for(&SizeMeasure::pareto_tail(1.5, 1.0, 1.0, 4.0).unwrap()).unwrap();
        let process = LimitProcess::new(&regime, 1.0).unwrap();
        let mut rng = StreamSeed::new(12, 0).rng(Purpose::Aux);
        let ca = process.coefficient.powf(1.5);
        let v: Vec<f64> = (0..100_000)
            .map(|_| (-process.sample_supremum(&mut rng)).exp())
            .collect();
        let (m, se) = mean_stderr(&v);
        // μΨ'(0)/Ψ(μ) at μ = 1 with Ψ(μ) = -λμ - C_α^α μ^α
        let target = 1.0 / (1.0 + ca);
        assert!((m - target).abs() < 3.0 * se, "{m} vs {target}");
    }

    #[test]
    fn limit_covering_extremes() {
        let regime = regime_for(&SizeMeasure::unit()).unwrap();
        let slow = LimitProcess::new(&regime, 0.01).unwrap();
        let fast = LimitProcess::new(&regime, 20.0).unwrap();
        let mut big = Vec::new();
        let mut small = Vec::new();
        for r in 0..20 {
            let c = sample_limit_covering(&slow, Some(1e-4), 1.0, StreamSeed::new(3, r)).unwrap();
            big.push(c.census().largest);
            let c = sample_limit_covering(&fast, Some(1e-4), 1.0, StreamSeed::new(4, r)).unwrap();
            small.push(c.census().largest);
        }
        assert!(median(&big) > 0.9, "{big:?}");
        assert!(median(&small) < 0.1, "{small:?}");
        assert!(sample_limit_covering(&slow, Some(0.0), 1.0, 1).is_err());
    }

    #[test]
    fn limit_straddle_matches_gamma_and_finite_t() {
        let regime = regime_for(&SizeMeasure::unit()).unwrap();
        let process = LimitProcess::new(&regime, 1.0).unwrap();
        let span = 60.0;
        let limit: Vec<f64> = replicate(21, 600, |s| {
            sample_limit_covering(&process, Some(span / 3e5), span, s)
                .unwrap()
                .straddle(span / 2.0)
                .length
        });
        let g = Gamma::new(0.5, 0.5).unwrap();
        let r = ks_one_sample(&limit, |x| g.cdf(x), |x| g.cdf(x)).unwrap();
        assert!(r.p_value > 1e-3, "{r:?}");
        let finite = rescaled_straddle_sample(&SizeMeasure::unit(), 0.99, 600, 22).unwrap();
        let r = ks_two_sample(&limit, &finite.values).unwrap();
        assert!(r.p_value > 1e-3, "{r:?}");
    }

    #[test]
    fn halving_the_grid_step_keeps_the_largest_block_law() {
        let regime = regime_for(&SizeMeasure::unit()).unwrap();
        let process = LimitProcess::new(&regime, 1.0).unwrap();
        let b1 = |h: f64, master: u64| {
            replicate(master, 4000, |s| {
                sample_limit_covering(&process, Some(h), 1.0, s)
                    .unwrap()
                    .census()
                    .largest
            })
        };
        let r = ks_two_sample(&b1(1e-4, 31), &b1(5e-5, 32)).unwrap();
        assert!(r.statistic <= 0.05, "{r:?}");
    }

    #[test]
    fn sweep_layout_and_monotone_medians() {
        let rows = phase_transition_sweep(&SizeMeasure::unit(), 400.0, &[1.0], 30, 5).unwrap();
        assert_eq!(rows.len(), 90);
        let med = |l: f64| {
            median(
                &rows
                    .iter()
                    .filter(|r| r.lambda == l)
                    .map(|r| r.b1_over_x)
                    .collect::<Vec<_>>(),
            )
        };
        assert!(med(0.1) >= med(1.0) && med(1.0) >= med(10.0));
        let mut buf = Vec::new();
        write_sweep_csv(&rows[..1], &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("lambda,replica,B1_over_x\n1,0,"));
        assert!(phase_transition_sweep(&SizeMeasure::unit(), 4.0, &[1.0], 1, 1).is_err());
    }
}
