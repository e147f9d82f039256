//! Sample statistics and goodness-of-fit tests.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{domain, Result};

/// Smallest sample accepted by the asymptotic Kolmogorov tests.
pub const KS_MIN_SAMPLE: usize = 500;

/// Sample mean and its standard error `s / √n`.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Pearson correlation; 0 if either sample is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "paired samples");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp())
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Outcome of a goodness-of-fit test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against a continuous or mixed CDF.
///
/// `cdf_left(x)` is `P(X < x)`; for a continuous law pass the CDF twice.
pub fn ks_one_sample<F, G>(xs: &[f64], cdf: F, cdf_left: G) -> Result<TestOutcome>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let n = xs.len();
    if n < KS_MIN_SAMPLE {
        return domain(format!(
            "KS test needs at least {KS_MIN_SAMPLE} points, got {n}"
        ));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < n {
        let x = v[i];
        let mut j = i;
        while j < n && v[j] == x {
            j += 1;
        }
        d = d
            .max(j as f64 / nf - cdf(x))
            .max(cdf_left(x) - i as f64 / nf);
        i = j;
    }
    Ok(TestOutcome {
        statistic: d,
        p_value: kolmogorov_sf(nf.sqrt() * d),
    })
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    if a.len().min(b.len()) < KS_MIN_SAMPLE {
        return domain(format!(
            "KS test needs at least {KS_MIN_SAMPLE} points per sample, got {} and {}",
            a.len(),
            b.len()
        ));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(TestOutcome {
        statistic: d,
        p_value: kolmogorov_sf(n_eff.sqrt() * d),
    })
}

/// Pearson χ² goodness of fit. `probs` are the null cell probabilities of
/// `counts`; adjacent cells are merged left to right until each expected
/// count is at least 5.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<TestOutcome> {
    if counts.len() != probs.len() || counts.is_empty() {
        return domain("χ² needs one probability per cell");
    }
    let total: u64 = counts.iter().sum();
    let n = total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        o += c as f64;
        e += p * n;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return domain("χ² needs at least two cells after merging");
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (cells.len() - 1) as f64;
    let p = ChiSquared::new(df).expect("positive df").sf(stat);
    Ok(TestOutcome {
        statistic: stat,
        p_value: p,
    })
}

/// Two-sided normal p-value of a z-score.
pub fn normal_two_sided_p(z: f64) -> f64 {
    2.0 * Normal::standard().sf(z.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_and_stderr() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_abs_diff_eq!(s, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn correlation_extremes() {
        let x = [1.0, 2.0, 3.0];
        assert_abs_diff_eq!(pearson(&x, &[2.0, 4.0, 6.0]), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pearson(&x, &[3.0, 2.0, 1.0]), -1.0, epsilon = 1e-15);
        assert_eq!(pearson(&x, &[1.0, 1.0, 1.0]), 0.0);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // classical critical values
        assert_abs_diff_eq!(kolmogorov_sf(1.358_098_8), 0.05, epsilon = 1e-6);
        assert_abs_diff_eq!(kolmogorov_sf(1.627_624), 0.01, epsilon = 1e-6);
        assert_abs_diff_eq!(kolmogorov_sf(0.5), 0.963_945_243_664_875, epsilon = 1e-9);
        // the two series agree where they meet
        let c = std::f64::consts::PI.powi(2) / 8.0;
        let small = 1.0
            - (2.0 * std::f64::consts::PI).sqrt()
                * (1..=20)
                    .map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp())
                    .sum::<f64>();
        assert_abs_diff_eq!(kolmogorov_sf(1.0), small, epsilon = 1e-12);
    }

    #[test]
    fn ks_rejects_small_samples_and_detects_shift() {
        let xs: Vec<f64> = (0..499).map(|i| i as f64 / 499.0).collect();
        assert!(ks_one_sample(&xs, |x| x, |x| x).is_err());
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let ok = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0), |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(ok.p_value > 0.99);
        let bad = ks_one_sample(
            &xs,
            |x| (x * x).clamp(0.0, 1.0),
            |x| (x * x).clamp(0.0, 1.0),
        )
        .unwrap();
        assert!(bad.p_value < 1e-6);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.2).collect();
        assert!(ks_two_sample(&xs, &shifted).unwrap().p_value < 1e-6);
        assert_abs_diff_eq!(ks_two_sample(&xs, &xs).unwrap().statistic, 0.0);
    }

    #[test]
    fn ks_handles_atoms() {
        // half the mass at zero, half uniform on (0, 1)
        let mut xs = vec![0.0; 500];
        xs.extend((0..500).map(|i| (i as f64 + 0.5) / 500.0));
        let cdf = |x: f64| if x < 0.0 { 0.0 } else { 0.5 + 0.5 * x.min(1.0) };
        let left = |x: f64| {
            if x <= 0.0 {
                0.0
            } else {
                0.5 + 0.5 * x.min(1.0)
            }
        };
        let r = ks_one_sample(&xs, cdf, left).unwrap();
        assert!(r.statistic < 1e-3);
    }

    #[test]
    fn chi_square_merging() {
        let r = chi_square_gof(&[50, 30, 20], &[0.5, 0.3, 0.2]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-12);
        // the last cell, expected 4, merges into its neighbour
        let r = chi_square_gof(&[90, 6, 4], &[0.9, 0.06, 0.04]).unwrap();
        assert_eq!(r.statistic, 0.0);
        // statistic 4 with one degree of freedom
        let r = chi_square_gof(&[60, 40], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(r.statistic, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_value, 0.045_500_263_896_358_4, epsilon = 1e-12);
    }

    #[test]
    fn normal_p() {
        assert_abs_diff_eq!(
            normal_two_sided_p(1.959_963_984_540_054),
            0.05,
            epsilon = 1e-9
        );
        assert_eq!(normal_two_sided_p(0.0), 1.0);
    }
}
