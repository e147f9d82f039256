//! Poisson arrivals of files on the line.
//!
//! Files form a Poisson point process with intensity `dt ⊗ dx ⊗ ν(dl)`.
//! Restricted to a horizon `t` and a span of length `L`, the locations form a
//! homogeneous Poisson process of rate `t·ν̄(ε)` on the span, which is what
//! the samplers here generate: exponential spacings in location order, iid
//! sizes from ν restricted to `(ε, ∞)`, and iid uniform arrival times.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Geometric, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numerics::exp_int_e1;
use crate::rng::{Purpose, StreamSeed};

/// Default cutoff for the gamma Lévy measure: drops at most `1e-4·m` of mass.
pub const DEFAULT_GAMMA_TRUNCATION: f64 = 1.000_050_003_333_583e-4;

/// Shape of the file-size measure ν.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SizeKind {
    /// All files have the same size.
    PointMass { size: f64 },
    /// `ν(dl) = e^{-l} dl`.
    Exponential,
    /// `ν(dl) = l^{-1} e^{-l} dl`, infinite total mass.
    GammaLevy,
    /// `ν(dl) = C α l^{-α-1} dl` on `[x0, ∞)` plus an atom at `x0` chosen so
    /// that the mean equals `mean`. The tail is exactly `C x^{-α}` beyond `x0`.
    ParetoTail {
        alpha: f64,
        c: f64,
        cutoff: f64,
        mean: f64,
    },
}

/// The file-size measure ν together with its small-jump cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeMeasure {
    kind: SizeKind,
    truncation: f64,
}

impl SizeMeasure {
    pub fn point_mass(size: f64) -> Result<Self> {
        if !(size > 0.0 && size.is_finite()) {
            return Err(Error::Config(format!(
                "point mass size must be positive, got {size}"
            )));
        }
        Ok(Self {
            kind: SizeKind::PointMass { size },
            truncation: 0.0,
        })
    }

    /// ν = δ₁, the unit-file parking problem.
    pub fn unit() -> Self {
        Self::point_mass(1.0).expect("valid")
    }

    pub fn exponential() -> Self {
        Self {
            kind: SizeKind::Exponential,
            truncation: 0.0,
        }
    }

    /// Gamma Lévy measure with jumps `<= truncation` dropped when sampling.
    ///
    /// A zero truncation is accepted for analytic use; sampling then fails.
    pub fn gamma_levy(truncation: f64) -> Result<Self> {
        if !(truncation >= 0.0 && truncation.is_finite()) {
            return Err(Error::Config(format!(
                "truncation must be >= 0, got {truncation}"
            )));
        }
        Ok(Self {
            kind: SizeKind::GammaLevy,
            truncation,
        })
    }

    pub fn pareto_tail(alpha: f64, c: f64, cutoff: f64, mean: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::Config(format!(
                "pareto alpha must lie in (1, 2], got {alpha}"
            )));
        }
        if !(c > 0.0 && cutoff > 0.0 && mean > 0.0)
            || !(c.is_finite() && cutoff.is_finite() && mean.is_finite())
        {
            return Err(Error::Config(
                "pareto c, cutoff and mean must be positive and finite".into(),
            ));
        }
        let nu = Self {
            kind: SizeKind::ParetoTail {
                alpha,
                c,
                cutoff,
                mean,
            },
            truncation: 0.0,
        };
        if nu.pareto_atom() < 0.0 {
            return Err(Error::Config(format!(
                "pareto mean {mean} is below the mean {} carried by the power-law part",
                c * alpha * cutoff.powf(1.0 - alpha) / (alpha - 1.0)
            )));
        }
        Ok(nu)
    }

    pub fn kind(&self) -> &SizeKind {
        &self.kind
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    /// Mass of the atom at the cutoff of a Pareto measure (0 for other kinds).
    fn pareto_atom(&self) -> f64 {
        match self.kind {
            SizeKind::ParetoTail {
                alpha,
                c,
                cutoff,
                mean,
            } => (mean - c * alpha * cutoff.powf(1.0 - alpha) / (alpha - 1.0)) / cutoff,
            _ => 0.0,
        }
    }

    /// `m = ∫ l ν(dl)` of the untruncated measure.
    pub fn mean(&self) -> f64 {
        match self.kind {
            SizeKind::PointMass { size } => size,
            SizeKind::Exponential | SizeKind::GammaLevy => 1.0,
            SizeKind::ParetoTail { mean, .. } => mean,
        }
    }

    /// `m₂ = ∫ l² ν(dl)`; infinite for the Pareto tails.
    pub fn second_moment(&self) -> f64 {
        match self.kind {
            SizeKind::PointMass { size } => size * size,
            SizeKind::Exponential => 2.0,
            SizeKind::GammaLevy => 1.0,
            SizeKind::ParetoTail { .. } => f64::INFINITY,
        }
    }

    /// `ν̄(x) = ν((x, ∞))` of the untruncated measure.
    pub fn tail(&self, x: f64) -> f64 {
        if x < 0.0 {
            return self.tail(0.0);
        }
        match self.kind {
            SizeKind::PointMass { size } => {
                if x < size {
                    1.0
                } else {
                    0.0
                }
            }
            SizeKind::Exponential => (-x).exp(),
            SizeKind::GammaLevy => exp_int_e1(x),
            SizeKind::ParetoTail {
                alpha, c, cutoff, ..
            } => {
                if x < cutoff {
                    self.pareto_atom() + c * cutoff.powf(-alpha)
                } else {
                    c * x.powf(-alpha)
                }
            }
        }
    }

    /// `ν̄(0)`, possibly infinite.
    pub fn total_mass(&self) -> f64 {
        self.tail(0.0)
    }

    pub fn is_finite_mass(&self) -> bool {
        self.total_mass().is_finite()
    }

    /// Mass of the measure actually sampled, `ν̄(ε)`.
    pub fn sampled_mass(&self) -> f64 {
        if self.is_finite_mass() {
            self.total_mass()
        } else {
            self.tail(self.truncation)
        }
    }

    /// Mean `∫_{(ε,∞)} l ν(dl)` of the measure actually sampled.
    pub fn sampled_mean(&self) -> f64 {
        match self.kind {
            SizeKind::GammaLevy => (-self.truncation).exp(),
            _ => self.mean(),
        }
    }

    pub fn sampler(&self) -> Result<SizeSampler> {
        SizeSampler::new(self)
    }
}

/// `∫_0^ε l ν(dl)`, the part of `m` dropped by the small-jump cutoff.
pub fn truncation_bias(nu: &SizeMeasure) -> Result<f64> {
    match nu.kind {
        SizeKind::GammaLevy => Ok(-(-nu.truncation).exp_m1()),
        _ => domain("truncation bias is only defined for infinite measures"),
    }
}

/// One atom `(t_i, x_i, l_i)` of the arrival process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileArrival {
    pub time: f64,
    pub location: f64,
    pub size: f64,
}

/// Statistics window `[left, right]`, simulated on `[left - margin, right]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub left: f64,
    pub right: f64,
    pub margin: f64,
}

impl Window {
    pub fn new(left: f64, right: f64, margin: f64) -> Result<Self> {
        if !(right > left) || !left.is_finite() || !right.is_finite() {
            return Err(Error::Config(format!(
                "window needs left < right, got [{left}, {right}]"
            )));
        }
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(Error::Config(format!(
                "margin must be finite and >= 0, got {margin}"
            )));
        }
        Ok(Self {
            left,
            right,
            margin,
        })
    }

    /// Window centred on `centre` with half-width `half`.
    pub fn centred(centre: f64, half: f64, margin: f64) -> Result<Self> {
        Self::new(centre - half, centre + half, margin)
    }

    /// Left edge of the simulated span.
    pub fn origin(&self) -> f64 {
        self.left - self.margin
    }

    pub fn span(&self) -> f64 {
        self.right - self.left
    }

    pub fn simulated_span(&self) -> f64 {
        self.right - self.origin()
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.left + self.right)
    }

    pub fn with_margin(&self, margin: f64) -> Result<Self> {
        Self::new(self.left, self.right, margin)
    }
}

const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Inverse-CDF table for `l^{-1} e^{-l}` on `(ε, L_MAX)`, tabulated in `s = ln l`
/// where the density becomes `exp(-e^s)`.
#[derive(Debug)]
struct GammaLevyTable {
    s0: f64,
    h: f64,
    cum: Vec<f64>,
}

const GAMMA_TABLE_CELLS: usize = 4096;
const GAMMA_TABLE_MAX: f64 = 60.0;

fn gamma_levy_density_log(s: f64) -> f64 {
    (-s.exp()).exp()
}

fn gl5(a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    GL5_X
        .iter()
        .zip(GL5_W)
        .map(|(x, w)| w * gamma_levy_density_log(c + h * x))
        .sum::<f64>()
        * h
}

impl GammaLevyTable {
    fn new(eps: f64) -> Self {
        let s0 = eps.ln();
        let h = (GAMMA_TABLE_MAX.ln() - s0) / GAMMA_TABLE_CELLS as f64;
        let mut cum = Vec::with_capacity(GAMMA_TABLE_CELLS + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for k in 0..GAMMA_TABLE_CELLS {
            let a = s0 + h * k as f64;
            acc += gl5(a, a + h);
            cum.push(acc);
        }
        Self { s0, h, cum }
    }

    fn total(&self) -> f64 {
        *self.cum.last().expect("non-empty")
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        let target = u * self.total();
        let k = self
            .cum
            .partition_point(|&c| c <= target)
            .clamp(1, GAMMA_TABLE_CELLS)
            - 1;
        let a = self.s0 + self.h * k as f64;
        let need = target - self.cum[k];
        // Linear start, then Newton on the in-cell integral.
        let width = self.cum[k + 1] - self.cum[k];
        let mut s = a + self.h * (need / width).clamp(0.0, 1.0);
        for _ in 0..3 {
            let f = gl5(a, s) - need;
            s = (s - f / gamma_levy_density_log(s)).clamp(a, a + self.h);
        }
        s.exp()
    }
}

/// Draws file sizes from ν restricted to `(ε, ∞)` and ladder heights of the
/// stationary workload.
#[derive(Clone, Debug)]
pub struct SizeSampler {
    nu: SizeMeasure,
    table: Option<Arc<GammaLevyTable>>,
}

impl SizeSampler {
    fn new(nu: &SizeMeasure) -> Result<Self> {
        let table = match nu.kind {
            SizeKind::GammaLevy => {
                if nu.truncation <= 0.0 {
                    return Err(Error::Config(
                        "gamma Lévy measure has infinite mass; a positive truncation is required"
                            .into(),
                    ));
                }
                Some(Arc::new(GammaLevyTable::new(nu.truncation)))
            }
            _ => None,
        };
        Ok(Self {
            nu: nu.clone(),
            table,
        })
    }

    pub fn measure(&self) -> &SizeMeasure {
        &self.nu
    }

    pub fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.nu.kind {
            SizeKind::PointMass { size } => size,
            SizeKind::Exponential => rng.sample(Exp1),
            SizeKind::GammaLevy => self.table.as_ref().expect("table").sample(rng),
            SizeKind::ParetoTail {
                alpha, c, cutoff, ..
            } => {
                let atom = self.nu.pareto_atom();
                let cont = c * cutoff.powf(-alpha);
                let u: f64 = rng.random();
                if u * (atom + cont) < atom {
                    cutoff
                } else {
                    let v: f64 = rng.sample(Open01);
                    cutoff * v.powf(-1.0 / alpha)
                }
            }
        }
    }

    /// Draws from the size-biased law `l ν(dl) / m` of the sampled measure.
    fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.nu.kind {
            SizeKind::PointMass { size } => size,
            // l e^{-l} is Gamma(2, 1)
            SizeKind::Exponential => rng.sample::<f64, _>(Exp1) + rng.sample::<f64, _>(Exp1),
            SizeKind::GammaLevy => self.nu.truncation + rng.sample::<f64, _>(Exp1),
            SizeKind::ParetoTail {
                alpha,
                cutoff,
                mean,
                ..
            } => {
                let atom_weight = self.nu.pareto_atom() * cutoff / mean;
                let u: f64 = rng.random();
                if u < atom_weight {
                    cutoff
                } else {
                    let v: f64 = rng.sample(Open01);
                    cutoff * v.powf(-1.0 / (alpha - 1.0))
                }
            }
        }
    }

    /// Ladder height of the workload: density `ν̄(x)/m` on `(0, ∞)`, drawn as
    /// a uniform fraction of a size-biased file.
    pub fn sample_ladder_height<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        u * self.sample_size_biased(rng)
    }

    /// Draws the stationary workload carried into a point at time `t`: a
    /// geometric number (parameter `m t`) of ladder heights. Infinite once
    /// `m t >= 1`.
    pub fn sample_stationary_workload<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        let rho = t * self.nu.sampled_mean();
        if rho >= 1.0 {
            return f64::INFINITY;
        }
        if rho <= 0.0 {
            return 0.0;
        }
        let k = Geometric::new(1.0 - rho).expect("valid p").sample(rng);
        (0..k).map(|_| self.sample_ladder_height(rng)).sum()
    }
}

/// Arrivals `(location, size)` of one horizon, generated in increasing
/// location order over `[from, to)`.
pub struct ArrivalStream<'a, R: Rng> {
    sampler: &'a SizeSampler,
    rng: R,
    rate: f64,
    pos: f64,
    end: f64,
}

impl<'a, R: Rng> ArrivalStream<'a, R> {
    pub fn new(sampler: &'a SizeSampler, horizon: f64, from: f64, to: f64, rng: R) -> Self {
        Self {
            sampler,
            rng,
            rate: horizon * sampler.nu.sampled_mass(),
            pos: from,
            end: to,
        }
    }
}

impl<R: Rng> Iterator for ArrivalStream<'_, R> {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<(f64, f64)> {
        if !(self.rate > 0.0) || self.pos >= self.end {
            return None;
        }
        let gap: f64 = self.rng.sample(Exp1);
        self.pos += gap / self.rate;
        if self.pos >= self.end {
            return None;
        }
        Some((self.pos, self.sampler.sample_size(&mut self.rng)))
    }
}

/// Arrivals of the margin `[origin, left)`, generated right to left from
/// `left` and returned in increasing location order. Doubling the margin
/// extends this list to the left without changing the arrivals already in it.
pub(crate) fn margin_arrivals(
    sampler: &SizeSampler,
    horizon: f64,
    window: &Window,
    seed: StreamSeed,
) -> Vec<(f64, f64)> {
    let rate = horizon * sampler.nu.sampled_mass();
    let mut out = Vec::new();
    if !(rate > 0.0) || window.margin <= 0.0 {
        return out;
    }
    let mut rng = seed.rng(Purpose::Margin);
    let origin = window.origin();
    let mut pos = window.left;
    loop {
        let gap: f64 = rng.sample(Exp1);
        pos -= gap / rate;
        if pos < origin {
            break;
        }
        out.push((pos, sampler.sample_size(&mut rng)));
    }
    out.reverse();
    out
}

/// Arrivals of the statistics window `[left, right)`, lazily.
pub(crate) fn window_arrivals<'a>(
    sampler: &'a SizeSampler,
    horizon: f64,
    window: &Window,
    seed: StreamSeed,
) -> ArrivalStream<'a, rand_chacha::ChaCha8Rng> {
    ArrivalStream::new(
        sampler,
        horizon,
        window.left,
        window.right,
        seed.rng(Purpose::Window),
    )
}

/// Samples the files arrived by time `horizon` on the simulated span of
/// `window`, sorted by location.
///
/// Locations and sizes depend only on `(window, horizon, nu, seed)`; arrival
/// times are drawn from a separate stream, so the spatial pattern is the same
/// one the replica engine uses.
pub fn sample_arrivals(
    window: &Window,
    horizon: f64,
    nu: &SizeMeasure,
    seed: impl Into<StreamSeed>,
) -> Result<Vec<FileArrival>> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return domain(format!("horizon must be finite and >= 0, got {horizon}"));
    }
    let seed = seed.into();
    let sampler = nu.sampler()?;
    let mut spatial = margin_arrivals(&sampler, horizon, window, seed);
    spatial.extend(window_arrivals(&sampler, horizon, window, seed));
    let mut times = seed.rng(Purpose::Aux);
    Ok(spatial
        .into_iter()
        .map(|(location, size)| FileArrival {
            time: horizon * times.random::<f64>(),
            location,
            size,
        })
        .collect())
}
