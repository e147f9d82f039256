use statrs::function::gamma::{gamma_lr, ln_gamma};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x) = ∫_x^∞ e^{-u}/u du` for `x > 0`.
///
/// Power series below 1, modified Lentz continued fraction above.
pub fn exp_int_e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// `P(N > k)` for `N ~ Poisson(mean)`, via the regularized lower incomplete
/// gamma function `P(k+1, mean)`.
pub fn poisson_upper_tail(mean: f64, k: u64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    gamma_lr(k as f64 + 1.0, mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn e1_reference_values() {
        // Abramowitz & Stegun table 5.1
        assert!((exp_int_e1(1.0) - 0.219_383_934_395_520_3).abs() < 1e-15);
        assert!((exp_int_e1(0.5) - 0.559_773_594_776_160_8).abs() < 1e-15);
        assert!((exp_int_e1(2.0) - 0.048_900_510_708_061_12).abs() < 1e-16);
    }

    #[test]
    fn poisson_tail_small_cases() {
        // P(Poisson(1) > 0) = 1 - e^{-1}
        assert!((poisson_upper_tail(1.0, 0) - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
        // P(Poisson(2) > 1) = 1 - 3 e^{-2}
        assert!((poisson_upper_tail(2.0, 1) - (1.0 - 3.0 * (-2.0f64).exp())).abs() < 1e-14);
        assert_eq!(poisson_upper_tail(0.0, 3), 0.0);
    }
}
