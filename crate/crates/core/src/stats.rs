//! Chi-square goodness-of-fit and binomial helpers for the test battery.

/// ln Γ(x) by the Lanczos approximation (g = 7, n = 9), |error| < 1e-13 for
/// x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    assert!(x > 0.0, "ln_gamma domain");
    if x < 0.5 {
        // Reflection: Γ(x) Γ(1-x) = π / sin(πx).
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x), by series for x < a + 1 and by
/// Lentz continued fraction otherwise.
pub fn reg_gamma_lower(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "reg_gamma domain");
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // Series: P(a,x) = x^a e^-x / Γ(a) Σ x^n / (a (a+1) ... (a+n)).
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut n = a;
        for _ in 0..500 {
            n += 1.0;
            term *= x / n;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * (a * x.ln() - x - ln_gamma(a)).exp()
    } else {
        1.0 - reg_gamma_upper_cf(a, x)
    }
}

fn reg_gamma_upper_cf(a: f64, x: f64) -> f64 {
    // Modified Lentz evaluation of the continued fraction for Q(a,x).
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (a * x.ln() - x - ln_gamma(a)).exp()
}

/// CDF of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_cdf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        reg_gamma_lower(df as f64 / 2.0, x / 2.0)
    }
}

/// Pearson statistic Σ (observed - expected)² / expected.
pub fn chi_square_statistic(observed: &[f64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    observed
        .iter()
        .zip(expected)
        .map(|(o, e)| {
            let diff = o - e;
            diff * diff / e
        })
        .sum()
}

/// Goodness-of-fit p-value with `cells - 1` degrees of freedom.
pub fn chi_square_test(observed: &[f64], expected: &[f64]) -> (f64, f64) {
    let stat = chi_square_statistic(observed, expected);
    let df = observed.len() - 1;
    (stat, 1.0 - chi_square_cdf(stat, df))
}

/// z-score of an observed count against a binomial(n, p) model.
pub fn binomial_z(count: u64, n: u64, p: f64) -> f64 {
    let n = n as f64;
    let sigma = (p * (1.0 - p) / n).sqrt();
    (count as f64 / n - p) / sigma
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Jackknife standard error of an estimator over leave-one-out resamples.
pub fn jackknife_stderr(leave_one_out: &[f64]) -> f64 {
    let n = leave_one_out.len() as f64;
    let mean = leave_one_out.iter().sum::<f64>() / n;
    let ss: f64 = leave_one_out.iter().map(|x| (x - mean).powi(2)).sum();
    ((n - 1.0) / n * ss).sqrt()
}

/// Least-squares slope and intercept of y against x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(2.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24.0_f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn chi_square_cdf_frozen_values() {
        // Reference values from the usual chi-square tables.
        assert!((chi_square_cdf(10.827566170662733, 1) - 0.999).abs() < 1e-9);
        assert!((chi_square_cdf(3.841458820694124, 1) - 0.95).abs() < 1e-9);
        assert!((chi_square_cdf(20.515005652432873, 5) - 0.999).abs() < 1e-9);
    }

    #[test]
    fn chi_square_test_matches_reference() {
        // Frozen pair also used by common statistics packages.
        let (stat, p) = chi_square_test(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 4.0, 1.0]);
        assert!((stat - 10.083333333333334).abs() < 1e-10);
        assert!((p - 0.017870892893625558).abs() < 1e-9);

        let (stat, p) = chi_square_test(&[24.0, 20.0, 27.0, 29.0], &[19.0, 25.0, 26.0, 30.0]);
        assert!((stat - 2.3875843454790822).abs() < 1e-10);
        assert!((p - 0.49594997742093094).abs() < 1e-9);
    }

    #[test]
    fn chi_square_zero_for_identical_frequencies() {
        let (stat, p) = chi_square_test(&[2.0, 2.0, 3.0], &[2.0, 2.0, 3.0]);
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binomial_z_examples() {
        // 0.312 observed against 0.3 at n = 10⁴ sits at z ≈ 2.62; 0.35 fails.
        let z = binomial_z(3120, 10_000, 0.3);
        assert!((z - 2.619).abs() < 5e-3);
        let z = binomial_z(3500, 10_000, 0.3);
        assert!((z - 10.91).abs() < 2e-2);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (slope, intercept) = linear_fit(&x, &y);
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((intercept - 1.0).abs() < 1e-12);
    }
}
