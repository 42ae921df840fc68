//! Statistical helpers shared by the experiment drivers and the test suite.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;
/// One-sided 99% normal quantile.
pub const Z_99_ONE_SIDED: f64 = 2.326_347_874_040_841;

/// Binomial point mass `P[Bin(n, p) = k]`.  Exact integer coefficients are
/// used while they fit into 128 bits; larger `n` falls back to log space.
pub fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    if n <= 128 {
        binomial_coefficient_u128(n, k) as f64 * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    } else {
        let ln_coeff = ln_gamma(n as f64 + 1.0)
            - ln_gamma(k as f64 + 1.0)
            - ln_gamma((n - k) as f64 + 1.0);
        (ln_coeff + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
    }
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `C(n, k)` for `n <= 128` (the largest case fits in a `u128`).  Each step
/// cancels the new denominator before multiplying, so intermediates never
/// exceed the final coefficient.
pub fn binomial_coefficient_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        let mut num = (n - i) as u128;
        let mut den = (i + 1) as u128;
        let g = gcd_u128(acc, den);
        acc /= g;
        den /= g;
        let g = gcd_u128(num, den);
        num /= g;
        den /= g;
        debug_assert_eq!(den, 1, "C(n, i+1) is an integer");
        acc *= num;
    }
    acc
}

/// Upper `1 - alpha` quantile of the chi-square distribution.
pub fn chi_square_critical(dof: u64, alpha: f64) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha)
}

/// Pearson goodness-of-fit statistic for observed counts against a model
/// pmf; cells with zero expectation must have zero counts.
pub fn chi_square_statistic(counts: &[u64], probs: &[f64]) -> f64 {
    assert_eq!(counts.len(), probs.len());
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &q)| {
            let expected = q * total as f64;
            if expected == 0.0 {
                assert_eq!(c, 0, "observed count in a zero-probability cell");
                0.0
            } else {
                (c as f64 - expected).powi(2) / expected
            }
        })
        .sum()
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    sup
}

/// Critical value for the two-sample KS test at level `alpha`:
/// `sqrt(ln(2/alpha)/2) * sqrt((n+m)/(n m))`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = ((2.0 / alpha).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Dvoretzky-Kiefer-Wolfowitz band half-width for a one-sided comparison of
/// an empirical CDF with `n` samples at confidence `1 - alpha`.
pub fn dkw_one_sided(n: usize, alpha: f64) -> f64 {
    ((1.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Two-sided DKW half-width.
pub fn dkw_two_sided(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Sample mean and its standard error (unbiased variance).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    assert!(n >= 1.0);
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Median of a sample (average of the middle pair for even sizes).
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares power law `y = constant * x^exponent` fitted in log-log
/// space.  Returns `(exponent, constant, r_squared)`.
pub fn power_law_fit(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "power-law fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::Domain(
            "power-law fit requires strictly positive coordinates".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|&(x, _)| x).sum::<f64>() / n;
    let my = logs.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|&(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain(
            "power-law fit requires at least two distinct x values".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = logs.iter().map(|&(_, y)| (y - my).powi(2)).sum();
    let ss_res: f64 = logs
        .iter()
        .map(|&(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok((slope, intercept.exp(), r_squared))
}
