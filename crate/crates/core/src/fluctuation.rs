//! Laplace exponent of the free path and the laws derived from it.
//!
//! For a horizon `t` the free path `Y` has drift `-1` and jumps `l_i`, so
//! `E e^{-ρ Y_x} = e^{-x Ψ(ρ)}` with `Ψ(ρ) = -ρ + t∫(1 - e^{-ρl}) ν(dl)`.
//! Ψ is negative and concave when `mt < 1`; its inverse `κ` solves
//! `-Ψ(κ(λ)) = λ`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::arrivals::{SizeKind, SizeMeasure};
use crate::error::{domain, Error, Result};
use crate::numerics::{
    exp_int_e1, integrate, integrate_log_scale, ln_factorial, poisson_upper_tail,
    solve_increasing_convex, RootOptions,
};

const QUAD_TOL: f64 = 1e-12;
/// Below this point `∫_0^a E1 = a(1 - γ - ln a) + O(a²)` is used directly.
const E1_HEAD: f64 = 1e-12;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Laplace exponent of the free path at horizon `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentModel {
    pub t: f64,
    pub nu: SizeMeasure,
}

/// Moments of the Lévy measure Π of the block-length subordinator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiFacts {
    /// `Π̄(0) = t ν̄(0)`, infinite for infinite ν.
    pub total_mass: f64,
    /// `∫ x Π(dx) = mt / (1 - mt)`.
    pub first_moment: f64,
    /// Mean length of a covered block, for finite ν.
    pub mean_block_length: Option<f64>,
}

impl ExponentModel {
    pub fn new(nu: SizeMeasure, t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return domain(format!("time must be finite and >= 0, got {t}"));
        }
        Ok(Self { t, nu })
    }

    /// `mt`, the load at horizon `t`.
    pub fn load(&self) -> f64 {
        self.nu.mean() * self.t
    }

    pub fn is_subcritical(&self) -> bool {
        self.load() < 1.0
    }

    pub fn psi_prime_at_0(&self) -> f64 {
        -1.0 + self.load()
    }

    pub fn psi(&self, rho: f64) -> Result<f64> {
        psi(self, rho)
    }

    pub fn psi_prime(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) {
            return domain(format!("rho must be >= 0, got {rho}"));
        }
        let t = self.t;
        if rho == 0.0 || t == 0.0 {
            return Ok(self
                .psi_prime_at_0()
                .min(if t == 0.0 { -1.0 } else { f64::INFINITY }));
        }
        Ok(match *self.nu.kind() {
            SizeKind::PointMass { size } => -1.0 + t * size * (-rho * size).exp(),
            SizeKind::Exponential => -1.0 + t / ((rho + 1.0) * (rho + 1.0)),
            _ => -1.0 + t * (self.tail_transform(rho)? - rho * self.tail_moment(rho)?),
        })
    }

    pub fn kappa(&self, lambda: f64) -> Result<f64> {
        kappa(self, lambda)
    }

    /// `L(ρ) = ∫ e^{-ρx} ν̄(x) dx`, so that `Ψ(ρ) = ρ(-1 + t L(ρ))`.
    fn tail_transform(&self, rho: f64) -> Result<f64> {
        match *self.nu.kind() {
            SizeKind::PointMass { size } => Ok(size * expm1_ratio(rho * size)),
            SizeKind::Exponential => Ok(1.0 / (1.0 + rho)),
            SizeKind::GammaLevy => {
                let head = E1_HEAD * (1.0 - EULER_GAMMA - E1_HEAD.ln());
                let hi = 60.0 / (1.0 + rho);
                let body = integrate_log_scale(
                    |x| (-rho * x).exp() * exp_int_e1(x),
                    E1_HEAD,
                    hi,
                    QUAD_TOL,
                )?;
                Ok(head + body)
            }
            SizeKind::ParetoTail {
                alpha, c, cutoff, ..
            } => {
                let head = self.nu.total_mass() * cutoff * expm1_ratio(rho * cutoff);
                let tail = if rho == 0.0 {
                    c * cutoff.powf(1.0 - alpha) / (alpha - 1.0)
                } else {
                    let hi = cutoff + 60.0 / rho;
                    c * integrate_log_scale(
                        |x| (-rho * x).exp() * x.powf(-alpha),
                        cutoff,
                        hi,
                        QUAD_TOL,
                    )?
                };
                Ok(head + tail)
            }
        }
    }

    /// `M(ρ) = ∫ x e^{-ρx} ν̄(x) dx` for `ρ > 0`.
    fn tail_moment(&self, rho: f64) -> Result<f64> {
        match *self.nu.kind() {
            SizeKind::GammaLevy => {
                let hi = 60.0 / (1.0 + rho);
                integrate_log_scale(
                    |x| x * (-rho * x).exp() * exp_int_e1(x),
                    E1_HEAD,
                    hi,
                    QUAD_TOL,
                )
            }
            SizeKind::ParetoTail {
                alpha, c, cutoff, ..
            } => {
                let u = rho * cutoff;
                let h = if u < 1e-3 {
                    0.5 - u / 3.0 + u * u / 8.0 - u * u * u / 30.0
                } else {
                    (1.0 - (-u).exp() * (1.0 + u)) / (u * u)
                };
                let head = self.nu.total_mass() * cutoff * cutoff * h;
                let hi = cutoff + 60.0 / rho;
                let tail = c * integrate_log_scale(
                    |x| (-rho * x).exp() * x.powf(1.0 - alpha),
                    cutoff,
                    hi,
                    QUAD_TOL,
                )?;
                Ok(head + tail)
            }
            _ => Err(Error::NotImplemented(
                "closed-form kinds use exact derivatives".into(),
            )),
        }
    }
}

/// `(1 - e^{-u}) / u`, equal to 1 at 0.
fn expm1_ratio(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        -(-u).exp_m1() / u
    }
}

pub fn psi(model: &ExponentModel, rho: f64) -> Result<f64> {
    if !(rho >= 0.0) {
        return domain(format!("rho must be >= 0, got {rho}"));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let t = model.t;
    Ok(match *model.nu.kind() {
        SizeKind::PointMass { size } => -rho - t * (-rho * size).exp_m1(),
        SizeKind::Exponential => rho * (-1.0 + t / (rho + 1.0)),
        _ => rho * (-1.0 + t * model.tail_transform(rho)?),
    })
}

/// Inverse of `-Ψ`.
pub fn kappa(model: &ExponentModel, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return domain(format!("lambda must be >= 0, got {lambda}"));
    }
    if !model.is_subcritical() {
        return domain(format!("κ needs mt < 1, got mt = {}", model.load()));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let drift = 1.0 - model.load();
    solve_increasing_convex(
        |r| Ok(-psi(model, r)?),
        |r| Ok(-model.psi_prime(r)?),
        lambda,
        lambda * drift,
        2.0 * lambda / drift,
        RootOptions::default(),
    )
}

pub fn pi_facts(model: &ExponentModel) -> Result<PiFacts> {
    if !model.is_subcritical() {
        return domain(format!(
            "Π has infinite mean once mt >= 1, got mt = {}",
            model.load()
        ));
    }
    let total_mass = if model.t == 0.0 {
        0.0
    } else {
        model.t * model.nu.total_mass()
    };
    let first_moment = model.load() / (1.0 - model.load());
    let mean_block_length =
        (total_mass.is_finite() && total_mass > 0.0).then(|| first_moment / total_mass);
    Ok(PiFacts {
        total_mass,
        first_moment,
        mean_block_length,
    })
}

fn check_unit_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return domain(format!("time must lie in (0, 1), got {t}"));
    }
    Ok(())
}

/// Size-biased Borel law of the block straddling a point, ν = δ₁.
pub fn borel_pmf(t: f64, n: u64) -> Result<f64> {
    check_unit_time(t)?;
    if n == 0 {
        return Ok(1.0 - t);
    }
    let nf = n as f64;
    Ok(((1.0 - t).ln() + nf * (t * nf).ln() - t * nf - ln_factorial(n)).exp())
}

/// Law of the first passage `τ_x` of the free path below `-x`, ν = δ₁:
/// probability that `τ_x = x + n`.
pub fn tau_pmf_dirac(t: f64, x: f64, n: u64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return domain(format!("level must be positive, got {x}"));
    }
    if !(0.0..1.0).contains(&t) {
        return domain(format!("time must lie in [0, 1), got {t}"));
    }
    let z = x + n as f64;
    let power = if n == 0 { 0.0 } else { n as f64 * (t * z).ln() };
    Ok((x.ln() - z.ln() - t * z + power - ln_factorial(n)).exp())
}

/// Density of `τ_x` at `z` for the gamma Lévy measure.
pub fn tau_density_gamma(t: f64, x: f64, z: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return domain(format!("level must be positive, got {x}"));
    }
    check_unit_time(t)?;
    if z < x {
        return Ok(0.0);
    }
    let u = z - x;
    let shape = t * z;
    let power = if u == 0.0 {
        match shape.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => return Ok(f64::INFINITY),
            Some(std::cmp::Ordering::Equal) => 0.0,
            _ => return Ok(0.0),
        }
    } else {
        (shape - 1.0) * u.ln()
    };
    Ok((x.ln() - z.ln() - ln_gamma(shape) - u + power).exp())
}

/// `E e^{λ g}` where `g <= 0` is the left end of the block straddling 0,
/// for point-mass ν.
pub fn g_laplace(model: &ExponentModel, lambda: f64) -> Result<f64> {
    let SizeKind::PointMass { size } = *model.nu.kind() else {
        return Err(Error::NotImplemented(
            "the law of g(t) is only available for point-mass sizes".into(),
        ));
    };
    if !(lambda >= 0.0) {
        return domain(format!("lambda must be >= 0, got {lambda}"));
    }
    if !model.is_subcritical() {
        return domain(format!(
            "g(t) is not finite once mt >= 1, got mt = {}",
            model.load()
        ));
    }
    if lambda == 0.0 || model.t == 0.0 {
        return Ok(1.0);
    }
    // Y_x > 0 iff the Poisson(tx) number of files before x exceeds x / size.
    let t = model.t;
    let mut exponent = 0.0;
    for k in 0..10_000_000u64 {
        let a = k as f64 * size;
        let b = a + size;
        if poisson_upper_tail(t * b, k) < 1e-14 && k > 0 {
            break;
        }
        exponent += integrate(
            |x| (-lambda * x).exp_m1() / x * poisson_upper_tail(t * x, k),
            a,
            b,
            QUAD_TOL,
        )?;
    }
    Ok(exponent.exp())
}

/// `E e^{-λ R}` for the stationary workload `R` at a point.
pub fn workload_laplace(model: &ExponentModel, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return domain(format!("lambda must be > 0, got {lambda}"));
    }
    if !model.is_subcritical() {
        return domain(format!(
            "the workload is infinite once mt >= 1, got mt = {}",
            model.load()
        ));
    }
    Ok(lambda * (1.0 - model.load()) / -psi(model, lambda)?)
}
