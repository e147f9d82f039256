use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct RootOptions {
    /// Accept when `|g(x) - target| <= abs_tol * max(1, target)`.
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_iter: 200,
        }
    }
}

/// Solves `g(x) = target` for an increasing convex `g` on `[0, inf)` with
/// `g(0) <= target`.
///
/// Safeguarded Newton: iterates stay inside a bracket that is expanded
/// geometrically from `[0, hi0]`; any Newton step leaving the bracket or
/// failing to shrink the residual is replaced by bisection.
pub fn solve_increasing_convex<G, D>(
    g: G,
    dg: D,
    target: f64,
    start: f64,
    hi0: f64,
    opts: RootOptions,
) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
    D: Fn(f64) -> Result<f64>,
{
    let tol = opts.abs_tol * target.abs().max(1.0);
    let mut lo = 0.0;
    let mut hi = hi0.max(f64::MIN_POSITIVE);
    let mut grow = 0;
    while g(hi)? < target {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 2000 || !hi.is_finite() {
            return Err(Error::Numerical(format!("no bracket for target {target}")));
        }
    }
    let mut x = start.clamp(lo, hi);
    let mut fx = g(x)? - target;
    for _ in 0..opts.max_iter {
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = dg(x)?;
        let mut next = if slope > 0.0 {
            x - fx / slope
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let fnext = g(next)? - target;
        let step = (next - x).abs();
        if fnext.abs() > fx.abs() && fnext.abs() > tol {
            // Newton overshot on a flat stretch; fall back to the bracket midpoint.
            let mid = 0.5 * (lo + hi);
            let fmid = g(mid)? - target;
            x = mid;
            fx = fmid;
        } else {
            x = next;
            fx = fnext;
        }
        if fx.abs() <= tol && step <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi {
            break;
        }
    }
    if fx.abs() <= tol {
        Ok(x)
    } else {
        Err(Error::Numerical(format!(
            "root solve for target {target} ended with residual {fx:e}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_root_via_parabola() {
        let x = solve_increasing_convex(
            |x| Ok(x * x),
            |x| Ok(2.0 * x),
            2.0,
            0.5,
            1.0,
            RootOptions::default(),
        )
        .unwrap();
        assert!((x - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_target_is_zero() {
        let x = solve_increasing_convex(
            |x| Ok(x + x * x),
            |x| Ok(1.0 + 2.0 * x),
            0.0,
            0.0,
            1.0,
            RootOptions::default(),
        )
        .unwrap();
        assert_eq!(x, 0.0);
    }
}
